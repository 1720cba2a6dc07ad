//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Keys (all optional unless a command needs them):
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `data` | CSV path | |
//! | `label_col` | label column name or 0-based index | |
//! | `positive` | raw label value mapped to the positive class | `1` |
//! | `norm` | `z-score`, `min-max` or `none` | `z-score` |
//! | `out` | output directory | `stwd-out` |
//! | `model` | model.json for `eval` | |
//! | `seed` | master seed | `0` |
//! | `folds` | cross-validation folds | `10` |
//! | `jobs` | folds trained at once | `1` |
//! | `kind` | baseline or cross-validated model kind | |
//! | `t` | maximum granular levels | `10` |
//! | `activation` | relu, leaky-relu, selu, tanh, sigmoid, swish | `selu` |
//! | `init` | `uniform` or `normal` | `uniform` |
//! | `lambda`, `learning_rate`, `batch_size`, `max_epochs`, `patience` | training | `0.1`, `0.1`, `512`, `100`, `5` |
//! | `theta`, `delta` | focal loss; `delta` unset means the negative share | `2`, unset |
//! | `rho1`, `rho2`, `tau` | Adam | `0.9`, `0.999`, `1e-8` |
//! | `epsilon` | boundary penalty in the decision risk | `2` |
//! | `k`, `kmeans_restarts` | discretizer | `2`, `10` |
//! | `unit_cost_lo`, `unit_cost_hi` | range for sampled unit costs | `1`, `50` |
//! | `unit_test_costs`, `unit_delay_costs` | explicit comma-separated unit costs, one per level | |
//! | `cost_matrices` | explicit schedule: `;`-separated groups of six comma-separated costs (PP, BP, NP, PN, BN, NN), one per level | |
//! | `m1_a`, `grid_max_nodes` | baseline settings | `4`, `10` |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use stwd_sfnn::baselines::{DEFAULT_GRID_MAX_NODES, DEFAULT_M1_A};
use stwd_sfnn::dataset::{LabelColumn, NormMode};
use stwd_sfnn::stwd::{CostMatrix, UnitCosts};
use stwd_sfnn::trainer::{ScheduleSource, TrainConfig, UnitCostSource};

pub const KEYS: &[&str] = &[
    "data",
    "label_col",
    "positive",
    "norm",
    "out",
    "model",
    "seed",
    "folds",
    "jobs",
    "kind",
    "t",
    "activation",
    "init",
    "lambda",
    "learning_rate",
    "batch_size",
    "max_epochs",
    "patience",
    "theta",
    "delta",
    "rho1",
    "rho2",
    "tau",
    "epsilon",
    "k",
    "kmeans_restarts",
    "unit_cost_lo",
    "unit_cost_hi",
    "unit_test_costs",
    "unit_delay_costs",
    "cost_matrices",
    "m1_a",
    "grid_max_nodes",
];

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Raw key/value pairs. Later inserts override earlier ones.
#[derive(Debug, Default, Clone)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected key = value", n + 1)))?;
            let key = k.trim().replace('-', "_");
            if !KEYS.contains(&key.as_str()) {
                return Err(ConfigError(format!("line {}: unknown key '{}'", n + 1, k.trim())));
            }
            raw.values.insert(key, v.trim().to_string());
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        debug_assert!(KEYS.contains(&key));
        self.values.insert(key.to_string(), value.into());
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| ConfigError(format!("{key}: cannot parse '{v}': {e}"))))
            .transpose()
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.get(key).map(|v| parse_list(key, v)).transpose()
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|e| ConfigError(format!("{key}: cannot parse '{}': {e}", x.trim())))
        })
        .collect()
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone)]
pub struct Settings {
    pub data: Option<PathBuf>,
    pub label_col: Option<LabelColumn>,
    pub positive: String,
    pub norm: Option<NormMode>,
    pub out: PathBuf,
    /// Whether `out` was set explicitly.
    pub out_given: bool,
    pub model: Option<PathBuf>,
    pub folds: usize,
    pub jobs: usize,
    pub kind: Option<String>,
    pub m1_a: f64,
    pub grid_max_nodes: usize,
    pub train: TrainConfig,
}

impl Settings {
    pub fn resolve(raw: &RawConfig) -> Result<Self, ConfigError> {
        let mut train = TrainConfig::default();
        macro_rules! set {
            ($key:literal, $field:expr) => {
                if let Some(v) = raw.parsed($key)? {
                    $field = v;
                }
            };
        }
        set!("seed", train.seed);
        set!("t", train.t);
        set!("epsilon", train.epsilon);
        set!("k", train.k);
        set!("kmeans_restarts", train.kmeans_restarts);
        set!("lambda", train.hyper.lambda);
        set!("learning_rate", train.hyper.learning_rate);
        set!("batch_size", train.hyper.batch_size);
        set!("max_epochs", train.hyper.max_epochs);
        set!("patience", train.hyper.patience);
        set!("theta", train.hyper.theta);
        set!("rho1", train.hyper.rho1);
        set!("rho2", train.hyper.rho2);
        set!("tau", train.hyper.tau);
        if let Some(d) = raw.parsed::<f64>("delta")? {
            train.hyper.delta = Some(d);
        }
        if let Some(a) = raw.get("activation") {
            train.activation = a.parse().map_err(|e| ConfigError(format!("activation: {e}")))?;
        }
        if let Some(i) = raw.get("init") {
            train.init = i.parse().map_err(|e| ConfigError(format!("init: {e}")))?;
        }

        if let UnitCostSource::Sampled { lo, hi } = &mut train.unit_costs {
            set!("unit_cost_lo", *lo);
            set!("unit_cost_hi", *hi);
        }
        match (raw.list("unit_test_costs")?, raw.list("unit_delay_costs")?) {
            (Some(test), Some(delay)) => {
                let units = UnitCosts::new(test, delay).map_err(|e| ConfigError(format!("unit costs: {e}")))?;
                train.unit_costs = UnitCostSource::Explicit(units);
            }
            (None, None) => {}
            _ => return Err(ConfigError("unit_test_costs and unit_delay_costs must be given together".into())),
        }
        if let Some(spec) = raw.get("cost_matrices") {
            let matrices = spec
                .split(';')
                .map(|group| {
                    let v = parse_list("cost_matrices", group)?;
                    let arr: [f64; 6] = v
                        .try_into()
                        .map_err(|_| ConfigError("cost_matrices: each matrix needs six values".into()))?;
                    CostMatrix::from_array(arr).map_err(|e| ConfigError(format!("cost_matrices: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            train.schedule = ScheduleSource::Explicit(matrices);
        }
        train.validate().map_err(|e| ConfigError(e.to_string()))?;

        let norm = match raw.get("norm") {
            None => Some(NormMode::ZScore),
            Some("none") => None,
            Some(v) => Some(v.parse().map_err(|e| ConfigError(format!("norm: {e}")))?),
        };
        let folds = raw.parsed("folds")?.unwrap_or(10);
        if folds < 2 {
            return Err(ConfigError("folds must be at least 2".into()));
        }
        let grid_max_nodes = raw.parsed("grid_max_nodes")?.unwrap_or(DEFAULT_GRID_MAX_NODES);
        if grid_max_nodes == 0 {
            return Err(ConfigError("grid_max_nodes must be positive".into()));
        }
        Ok(Self {
            data: raw.get("data").map(PathBuf::from),
            label_col: raw.get("label_col").map(|v| LabelColumn::Name(v.to_string())),
            positive: raw.get("positive").unwrap_or("1").to_string(),
            norm,
            out: raw.get("out").map_or_else(|| PathBuf::from("stwd-out"), PathBuf::from),
            out_given: raw.get("out").is_some(),
            model: raw.get("model").map(PathBuf::from),
            folds,
            jobs: raw.parsed("jobs")?.unwrap_or(1),
            kind: raw.get("kind").map(str::to_string),
            m1_a: raw.parsed("m1_a")?.unwrap_or(DEFAULT_M1_A),
            grid_max_nodes,
            train,
        })
    }
}
