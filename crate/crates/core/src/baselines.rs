//! Comparison models built on the same network core: fixed topologies from
//! empirical node-count formulas, grid search over the node count, the
//! fixed-threshold three-way model and the sequential model without
//! k-means++ discretization.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::metrics::accuracy;
use crate::numerics::{ActivationKind, RngStream};
use crate::sfnn::{init_node, train_network, InitDist, LayeredNetwork, Scope, TrainHyper, TrainReport};
use crate::trainer::{predict, run_engine, Discretization, RunOutput, ThresholdPolicy, TrainConfig};

pub const DEFAULT_M1_A: f64 = 4.0;
pub const DEFAULT_GRID_MAX_NODES: usize = 10;
/// Output units of every network here.
pub const OUTPUTS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    M1,
    M2,
    M3,
    GridSearch,
    TwdFixed,
    StwdNk,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 6] = [
        BaselineKind::M1,
        BaselineKind::M2,
        BaselineKind::M3,
        BaselineKind::GridSearch,
        BaselineKind::TwdFixed,
        BaselineKind::StwdNk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::M1 => "m1",
            BaselineKind::M2 => "m2",
            BaselineKind::M3 => "m3",
            BaselineKind::GridSearch => "grid-search",
            BaselineKind::TwdFixed => "twd-fixed",
            BaselineKind::StwdNk => "stwd-nk",
        }
    }
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown baseline kind '{s}'")))
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(1.0) as usize
}

/// Hidden node count from the empirical formulas:
/// m1 = √(m+n)+a, m2 = log₂ m, m3 = √(m·n), rounded half up and at least 1.
pub fn empirical_nodes(kind: BaselineKind, m: usize, n: usize, a: Option<f64>) -> Result<usize> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("feature and output counts must be positive".into()));
    }
    let (m, n) = (m as f64, n as f64);
    let raw = match kind {
        BaselineKind::M1 => {
            let a = a.ok_or_else(|| Error::InvalidArgument("m1 needs the constant a".into()))?;
            if !(a > 1.0 && a < 10.0) {
                return Err(Error::InvalidArgument(format!("m1 constant a must lie in (1, 10), got {a}")));
            }
            (m + n).sqrt() + a
        }
        BaselineKind::M2 => m.log2(),
        BaselineKind::M3 => (m * n).sqrt(),
        other => return Err(Error::InvalidArgument(format!("{other} has no node-count formula"))),
    };
    Ok(round_half_up(raw))
}

/// All nodes drawn up front and trained jointly.
pub fn train_fixed_topology(
    ds: &Dataset,
    split: &Split,
    nodes: usize,
    activation: ActivationKind,
    init: InitDist,
    hyper: &TrainHyper,
    stream: &RngStream,
) -> Result<(LayeredNetwork, TrainReport)> {
    if nodes == 0 {
        return Err(Error::InvalidArgument("a fixed topology needs at least one node".into()));
    }
    let m = ds.n_features();
    let mut net = LayeredNetwork::new(activation);
    for i in 1..=nodes {
        net.push(init_node(m, init, &mut stream.derive(&format!("init-node-{i}")))?)?;
    }
    let mut train_stream = stream.derive("train");
    let report = train_network(&mut net, Scope::AllNodes, ds, &split.train, &split.validation, hyper, &mut train_stream)?;
    Ok((net, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCandidate {
    pub nodes: usize,
    /// Accuracy on the validation rows, or on the training rows when there
    /// is no validation set.
    pub selection_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best_nodes: usize,
    pub network: LayeredNetwork,
    pub candidates: Vec<GridCandidate>,
}

/// Trains topologies with 1..=max_nodes nodes and keeps the most accurate
/// one on the selection rows; ties go to fewer nodes.
pub fn grid_search(
    ds: &Dataset,
    split: &Split,
    max_nodes: usize,
    activation: ActivationKind,
    init: InitDist,
    hyper: &TrainHyper,
    stream: &RngStream,
) -> Result<GridResult> {
    if max_nodes == 0 {
        return Err(Error::InvalidArgument("max nodes must be positive".into()));
    }
    let rows = if split.validation.is_empty() { &split.train } else { &split.validation };
    let truth: Vec<_> = rows.iter().map(|&i| ds.label(i)).collect();
    let mut best: Option<(f64, LayeredNetwork)> = None;
    let mut candidates = Vec::with_capacity(max_nodes);
    for n in 1..=max_nodes {
        let sub = stream.derive(&format!("nodes-{n}"));
        let (net, _) = train_fixed_topology(ds, split, n, activation, init, hyper, &sub)?;
        let labels: Vec<_> = predict(&net, ds, rows)?.into_iter().map(|p| p.label).collect();
        let acc = accuracy(&truth, &labels)?;
        candidates.push(GridCandidate {
            nodes: n,
            selection_accuracy: acc,
        });
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            best = Some((acc, net));
        }
    }
    let (_, network) = best.expect("at least one candidate");
    Ok(GridResult {
        best_nodes: network.n_hidden(),
        network,
        candidates,
    })
}

/// Index of the first maximum; the grid-search tie rule.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// One cost matrix for every level.
pub fn run_twd_fixed(ds: &Dataset, split: &Split, cfg: &TrainConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let matrix = cfg.resolve_single_matrix()?;
    run_engine(ds, split, cfg, ThresholdPolicy::Fixed(matrix), Discretization::KMeans)
}

/// Sequential thresholds with classes formed by identical raw rows.
pub fn run_stwd_nk(ds: &Dataset, split: &Split, cfg: &TrainConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let schedule = cfg.resolve_schedule()?;
    run_engine(ds, split, cfg, ThresholdPolicy::Sequential(schedule), Discretization::IdenticalRows)
}
