use std::path::Path;

use serde_json::{json, Value};
use stwd_sfnn::baselines::{
    empirical_nodes, grid_search, run_stwd_nk, run_twd_fixed, train_fixed_topology, BaselineKind, OUTPUTS,
};
use stwd_sfnn::dataset::{load_csv, split_811, Dataset, IngestReport, Split};
use stwd_sfnn::metrics::RocCurve;
use stwd_sfnn::report::{costs_csv, report_json, roc_csv, ModelDoc};
use stwd_sfnn::sfnn::LayeredNetwork;
use stwd_sfnn::trainer::{crossval, evaluate_rows, run, RunLedger, RunOutput, ThresholdPolicy, TrainConfig};
use stwd_sfnn::{Error, RngStream};

use crate::config::{ConfigError, Settings};

pub const STWD_KIND: &str = "stwd-sfnn";

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::config(e.0)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_) | Error::InvalidCostMatrix(_) => 1,
            Error::SamplingExhausted(_) | Error::Convergence(_) => 3,
            Error::DimensionMismatch { .. } | Error::Data(_) | Error::Io { .. } | Error::Csv(_) | Error::Json(_) => 2,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn write(dir: &Path, name: &str, content: &str) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

fn load(settings: &Settings) -> CliResult<(Dataset, IngestReport)> {
    let data = settings.data.as_ref().ok_or_else(|| CliError::config("--data is required"))?;
    let label = settings.label_col.as_ref().ok_or_else(|| CliError::config("--label-col is required"))?;
    Ok(load_csv(data, label, &settings.positive)?)
}

/// Dataset normalized on the training rows, plus the 8:1:1 split.
fn prepare(settings: &Settings, raw: &Dataset) -> CliResult<(Dataset, Split)> {
    let split = split_811(raw, &mut RngStream::new(settings.train.seed, "split"))?;
    let ds = match settings.norm {
        Some(mode) => raw.normalize_fitted(mode, &split.train)?,
        None => raw.clone(),
    };
    Ok((ds, split))
}

fn metrics_for(net: &LayeredNetwork, ds: &Dataset, rows: &[usize]) -> CliResult<(Value, Option<RocCurve>)> {
    if rows.is_empty() {
        return Ok((Value::Null, None));
    }
    let (m, roc) = evaluate_rows(net, ds, rows)?;
    Ok((serde_json::to_value(m).map_err(Error::from)?, roc))
}

fn stream_names(kind: &str) -> Vec<String> {
    let mut names = vec!["split".to_string()];
    let run = ["run/schedule", "run/unit-costs", "run/init-node-{i}", "run/train-node-{i}", "run/kmeans-level-{i}"];
    let fixed = ["run/init-node-{i}", "run/train"];
    let grid = ["run/nodes-{n}/init-node-{i}", "run/nodes-{n}/train"];
    let used: &[&str] = match kind {
        "m1" | "m2" | "m3" => &fixed,
        "grid-search" => &grid,
        _ => &run,
    };
    names.extend(used.iter().map(|s| s.to_string()));
    names
}

struct Bundle<'a> {
    kind: &'a str,
    network: &'a LayeredNetwork,
    ledger: Option<&'a RunLedger>,
    policy: Option<&'a ThresholdPolicy>,
    extra: Vec<(&'static str, Value)>,
}

fn write_bundle(settings: &Settings, ds: &Dataset, split: &Split, ingest: &IngestReport, b: Bundle) -> CliResult<()> {
    let out = &settings.out;
    let doc = ModelDoc::new(
        b.kind,
        b.network,
        ds.feature_names(),
        ds.normalization(),
        b.policy,
        settings.train.seed,
        stream_names(b.kind),
    )?;
    write(out, "model.json", &doc.to_json()?)?;

    let (train, _) = metrics_for(b.network, ds, &split.train)?;
    let (validation, _) = metrics_for(b.network, ds, &split.validation)?;
    let (test, roc) = metrics_for(b.network, ds, &split.test)?;
    let (n_train, n_val, n_test) = split.sizes();
    let mut metrics = json!({
        "kind": b.kind,
        "hidden_nodes": b.network.n_hidden(),
        "sizes": { "train": n_train, "validation": n_val, "test": n_test },
        "ingest": ingest,
        "train": train,
        "validation": validation,
        "test": test,
    });
    for (k, v) in b.extra {
        metrics[k] = v;
    }
    write(out, "metrics.json", &report_json(&metrics)?)?;
    write(out, "roc.csv", &roc_csv(&roc.unwrap_or(RocCurve { points: Vec::new() })))?;

    if let Some(ledger) = b.ledger {
        write(out, "ledger.json", &report_json(ledger)?)?;
        write(out, "costs.csv", &costs_csv(ledger))?;
    }
    Ok(())
}

fn run_bundle<'a>(kind: &'a str, out: &'a RunOutput) -> Bundle<'a> {
    Bundle {
        kind,
        network: &out.network,
        ledger: Some(&out.ledger),
        policy: Some(&out.policy),
        extra: vec![("levels", json!(out.ledger.levels.len()))],
    }
}

pub fn train(settings: &Settings) -> CliResult<()> {
    let (raw, ingest) = load(settings)?;
    let (ds, split) = prepare(settings, &raw)?;
    let out = run(&ds, &split, &settings.train)?;
    write_bundle(settings, &ds, &split, &ingest, run_bundle(STWD_KIND, &out))
}

fn parse_kind(kind: &str) -> CliResult<BaselineKind> {
    kind.parse()
        .map_err(|_| CliError::config(format!("unknown kind '{kind}'")))
}

pub fn baseline(settings: &Settings) -> CliResult<()> {
    let name = settings.kind.as_deref().ok_or_else(|| CliError::config("--kind is required"))?;
    let kind = parse_kind(name)?;
    let (raw, ingest) = load(settings)?;
    let (ds, split) = prepare(settings, &raw)?;
    let cfg = &settings.train;
    let name = kind.name();
    match kind {
        BaselineKind::M1 | BaselineKind::M2 | BaselineKind::M3 => {
            let nodes = empirical_nodes(kind, ds.n_features(), OUTPUTS, Some(settings.m1_a))?;
            let (net, _) =
                train_fixed_topology(&ds, &split, nodes, cfg.activation, cfg.init, &cfg.hyper, &cfg.master_stream())?;
            let bundle = Bundle {
                kind: name,
                network: &net,
                ledger: None,
                policy: None,
                extra: vec![],
            };
            write_bundle(settings, &ds, &split, &ingest, bundle)
        }
        BaselineKind::GridSearch => {
            let g = grid_search(
                &ds,
                &split,
                settings.grid_max_nodes,
                cfg.activation,
                cfg.init,
                &cfg.hyper,
                &cfg.master_stream(),
            )?;
            let bundle = Bundle {
                kind: name,
                network: &g.network,
                ledger: None,
                policy: None,
                extra: vec![
                    ("best_nodes", json!(g.best_nodes)),
                    ("candidates", serde_json::to_value(&g.candidates).map_err(Error::from)?),
                ],
            };
            write_bundle(settings, &ds, &split, &ingest, bundle)
        }
        BaselineKind::TwdFixed => {
            let out = run_twd_fixed(&ds, &split, cfg)?;
            write_bundle(settings, &ds, &split, &ingest, run_bundle(name, &out))
        }
        BaselineKind::StwdNk => {
            let out = run_stwd_nk(&ds, &split, cfg)?;
            write_bundle(settings, &ds, &split, &ingest, run_bundle(name, &out))
        }
    }
}

fn fit_kind(kind: Option<BaselineKind>, settings: &Settings) -> impl Fn(&Dataset, &Split, &TrainConfig) -> stwd_sfnn::Result<LayeredNetwork> + Sync {
    let (m1_a, grid_max) = (settings.m1_a, settings.grid_max_nodes);
    move |d: &Dataset, s: &Split, c: &TrainConfig| match kind {
        None => run(d, s, c).map(|o| o.network),
        Some(BaselineKind::TwdFixed) => run_twd_fixed(d, s, c).map(|o| o.network),
        Some(BaselineKind::StwdNk) => run_stwd_nk(d, s, c).map(|o| o.network),
        Some(BaselineKind::GridSearch) => {
            grid_search(d, s, grid_max, c.activation, c.init, &c.hyper, &c.master_stream()).map(|g| g.network)
        }
        Some(k) => {
            let nodes = empirical_nodes(k, d.n_features(), OUTPUTS, Some(m1_a))?;
            train_fixed_topology(d, s, nodes, c.activation, c.init, &c.hyper, &c.master_stream()).map(|r| r.0)
        }
    }
}

pub fn crossval_cmd(settings: &Settings) -> CliResult<()> {
    let kind = match settings.kind.as_deref() {
        None | Some(STWD_KIND) => None,
        Some(k) => Some(parse_kind(k)?),
    };
    let name = kind.map_or(STWD_KIND, BaselineKind::name);
    let (ds, _) = load(settings)?;
    let report = crossval(&ds, &settings.train, settings.folds, settings.norm, settings.jobs, fit_kind(kind, settings))?;

    let mut summary = serde_json::to_value(&report).map_err(Error::from)?;
    summary["kind"] = json!(name);
    write(&settings.out, "summary.json", &report_json(&summary)?)?;

    let s = &report.summary;
    let mut csv = String::from("metric,mean,std,mean±std\n");
    let mut row = |metric: &str, v: &stwd_sfnn::trainer::MeanStd| {
        csv.push_str(&format!("{metric},{},{},{v}\n", round(v.mean), round(v.std)));
    };
    row("test_accuracy", &s.test_accuracy);
    row("test_weighted_f1", &s.test_weighted_f1);
    if let Some(auc) = &s.test_auc {
        row("test_auc", auc);
    }
    row("train_accuracy", &s.train_accuracy);
    row("hidden_nodes", &s.hidden_nodes);
    write(&settings.out, "summary.csv", &csv)
}

fn round(v: f64) -> String {
    stwd_sfnn::report::fmt_float(stwd_sfnn::report::round_sig(v, stwd_sfnn::report::REPORT_DIGITS))
}

pub fn eval(settings: &Settings) -> CliResult<()> {
    let path = settings.model.as_ref().ok_or_else(|| CliError::config("--model is required"))?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc = ModelDoc::from_json(&text)?;
    let net = doc.network()?;
    let (raw, ingest) = load(settings)?;
    let ds = match doc.normalization()? {
        Some(norm) => raw.with_normalization(norm)?,
        None => raw,
    };
    let rows: Vec<usize> = (0..ds.n_rows()).collect();
    let (metrics, roc) = metrics_for(&net, &ds, &rows)?;
    let report = json!({ "kind": doc.kind, "rows": rows.len(), "ingest": ingest, "metrics": metrics });
    let text = report_json(&report)?;
    if settings.out_given {
        write(&settings.out, "metrics.json", &text)?;
        write(&settings.out, "roc.csv", &roc_csv(&roc.unwrap_or(RocCurve { points: Vec::new() })))?;
    } else {
        print!("{text}");
    }
    Ok(())
}

pub fn costs(run_dir: &Path, settings: &Settings) -> CliResult<()> {
    let path = run_dir.join("ledger.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let ledger: RunLedger = serde_json::from_str(&text).map_err(Error::from)?;
    let csv = costs_csv(&ledger);
    let dir = if settings.out_given { settings.out.as_path() } else { run_dir };
    write(dir, "costs.csv", &csv)?;
    print!("{csv}");
    Ok(())
}
