use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stwd_sfnn::dataset::{Label, Split};
use stwd_sfnn::report::report_json;
use stwd_sfnn::sfnn::NodeParams;
use stwd_sfnn::stwd::{CostMatrix, UnitCosts};
use stwd_sfnn::trainer::{run, NodeSource, ScheduleSource, TrainConfig, UnitCostSource};
use stwd_sfnn::{Dataset, RngStream};
use tempfile::TempDir;

const TOY_ROWS: [([f64; 4], i32); 10] = [
    ([0.7415, 0.5407, 0.5795, 0.9009], 2),
    ([0.6844, 0.3210, 0.0471, 0.3700], 1),
    ([0.7718, 0.0912, 0.4874, 0.5308], 1),
    ([0.0818, 0.4263, 0.0354, 0.0621], 1),
    ([0.5596, 0.4643, 0.3585, 0.3189], 2),
    ([0.6397, 0.6535, 0.7739, 0.6809], 1),
    ([0.7425, 0.0989, 0.7429, 0.4131], 1),
    ([0.9419, 0.5958, 0.4474, 0.7536], 2),
    ([0.4992, 0.2212, 0.9525, 0.4176], 1),
    ([0.2990, 0.4796, 0.1559, 0.7456], 2),
];

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stwd-sfnn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn toy_csv(dir: &Path) -> PathBuf {
    let mut text = String::from("x1,x2,x3,x4,label\n");
    for (row, y) in TOY_ROWS {
        text.push_str(&format!("{},{},{},{},{y}\n", row[0], row[1], row[2], row[3]));
    }
    let path = dir.join("toy.csv");
    std::fs::write(&path, text).unwrap();
    path
}

fn random_csv(dir: &Path, rows: usize, features: usize, seed: u64) -> PathBuf {
    let mut s = RngStream::new(seed, "csv");
    let mut text: String = (0..features).map(|j| format!("f{j},")).collect();
    text.push_str("class\n");
    for i in 0..rows {
        let x: Vec<f64> = (0..features).map(|_| s.next_uniform(-1.0, 1.0).unwrap()).collect();
        let y = if i < 2 { i % 2 == 0 } else { x[0] + 0.5 * x[1] > 0.0 };
        for v in &x {
            text.push_str(&format!("{v},"));
        }
        text.push_str(if y { "yes\n" } else { "no\n" });
    }
    let path = dir.join(format!("random-{seed}.csv"));
    std::fs::write(&path, text).unwrap();
    path
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn train_writes_the_full_bundle() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path());
    let out = dir.path().join("run");
    let r = bin(&["train", "--data", path_str(&data), "--label-col", "label", "--positive", "1", "--out", path_str(&out)]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    for f in ["model.json", "ledger.json", "metrics.json", "roc.csv", "costs.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let metrics = read_json(&out.join("metrics.json"));
    assert_eq!(metrics["kind"], "stwd-sfnn");
    assert_eq!(metrics["sizes"]["train"], 8);

    // the saved model evaluates on the same file
    let eval_dir = dir.path().join("eval");
    let model = out.join("model.json");
    let args = ["eval", "--model", path_str(&model), "--data", path_str(&data), "--label-col", "label", "--out", path_str(&eval_dir)];
    let r = bin(&args);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(read_json(&eval_dir.join("metrics.json"))["rows"], 10);
}

#[test]
fn train_is_byte_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = random_csv(dir.path(), 60, 3, 1);
    let outputs: Vec<PathBuf> = (0..2).map(|i| dir.path().join(format!("run{i}"))).collect();
    for out in &outputs {
        let args = ["train", "--data", path_str(&data), "--label-col", "class", "--positive", "yes", "--seed", "4", "--out", path_str(out)];
        assert_eq!(code(&bin(&args)), 0);
    }
    for f in ["model.json", "ledger.json", "metrics.json", "roc.csv", "costs.csv"] {
        assert_eq!(std::fs::read(outputs[0].join(f)).unwrap(), std::fs::read(outputs[1].join(f)).unwrap(), "{f}");
    }
}

#[test]
fn missing_dataset_exits_2() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("absent.csv");
    let r = bin(&["train", "--data", path_str(&missing), "--label-col", "label"]);
    assert_eq!(code(&r), 2);
    assert!(!r.stderr.is_empty());
}

#[test]
fn malformed_config_exits_1() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path());
    for text in ["no_such_key = 1\n", "seed\n", "lambda = lots\n", "t = 1\n"] {
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, text).unwrap();
        let r = bin(&["train", "--config", path_str(&cfg), "--data", path_str(&data), "--label-col", "label"]);
        assert_eq!(code(&r), 1, "config {text:?}");
    }
    assert_eq!(code(&bin(&["train", "--no-such-flag"])), 1);
}

#[test]
fn flags_override_config_values() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path());
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, format!("data = {}\nlabel_col = label\nseed = 1\nt = 3\n", data.display())).unwrap();
    let out = dir.path().join("run");
    let r = bin(&["train", "--config", path_str(&cfg), "--seed", "2", "--out", path_str(&out)]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let model = read_json(&out.join("model.json"));
    assert_eq!(model["seeds"]["master"], 2);
}

#[test]
fn bogus_kind_exits_1() {
    let dir = TempDir::new().unwrap();
    let data = toy_csv(dir.path());
    let r = bin(&["baseline", "--data", path_str(&data), "--label-col", "label", "--kind", "bogus"]);
    assert_eq!(code(&r), 1);
    let r = bin(&["baseline", "--data", path_str(&data), "--label-col", "label"]);
    assert_eq!(code(&r), 1);
}

#[test]
fn m2_on_61_features_uses_six_nodes() {
    let dir = TempDir::new().unwrap();
    let data = random_csv(dir.path(), 40, 61, 2);
    let out = dir.path().join("m2");
    let args = ["baseline", "--data", path_str(&data), "--label-col", "class", "--positive", "yes", "--kind", "m2", "--out", path_str(&out)];
    let r = bin(&args);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let metrics = read_json(&out.join("metrics.json"));
    assert_eq!(metrics["kind"], "m2");
    assert_eq!(metrics["hidden_nodes"], 6);
    assert!(!out.join("ledger.json").exists());
}

#[test]
fn grid_search_records_best_nodes() {
    let dir = TempDir::new().unwrap();
    let data = random_csv(dir.path(), 50, 3, 3);
    let cfg = dir.path().join("grid.cfg");
    std::fs::write(&cfg, "grid_max_nodes = 3\nmax_epochs = 20\n").unwrap();
    let out = dir.path().join("gs");
    let args = [
        "baseline", "--config", path_str(&cfg), "--data", path_str(&data), "--label-col", "class", "--positive", "yes",
        "--kind", "grid-search", "--out", path_str(&out),
    ];
    let r = bin(&args);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let metrics = read_json(&out.join("metrics.json"));
    let best = metrics["best_nodes"].as_u64().unwrap();
    assert!((1..=3).contains(&best));
    assert_eq!(metrics["candidates"].as_array().unwrap().len(), 3);
    assert_eq!(metrics["hidden_nodes"], best);
}

#[test]
fn ledger_baselines_write_costs() {
    let dir = TempDir::new().unwrap();
    let data = random_csv(dir.path(), 50, 3, 4);
    for kind in ["twd-fixed", "stwd-nk"] {
        let out = dir.path().join(kind);
        let args = ["baseline", "--data", path_str(&data), "--label-col", "class", "--positive", "yes", "--kind", kind, "--out", path_str(&out)];
        let r = bin(&args);
        assert_eq!(code(&r), 0, "{kind}: {}", String::from_utf8_lossy(&r.stderr));
        assert!(out.join("costs.csv").is_file());
        assert_eq!(read_json(&out.join("model.json"))["kind"], kind);
    }
}

#[test]
fn crossval_summary_is_deterministic_and_uses_sample_std() {
    let dir = TempDir::new().unwrap();
    let data = random_csv(dir.path(), 100, 3, 5);
    let outs: Vec<PathBuf> = ["a", "b"].iter().map(|n| dir.path().join(n)).collect();
    for (out, jobs) in outs.iter().zip(["1", "3"]) {
        let args = [
            "crossval", "--data", path_str(&data), "--label-col", "class", "--positive", "yes", "--folds", "10", "--jobs", jobs,
            "--seed", "6", "--out", path_str(out),
        ];
        let r = bin(&args);
        assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    }
    for f in ["summary.json", "summary.csv"] {
        assert_eq!(std::fs::read(outs[0].join(f)).unwrap(), std::fs::read(outs[1].join(f)).unwrap(), "{f}");
    }
    let summary = read_json(&outs[0].join("summary.json"));
    let folds = summary["folds"].as_array().unwrap();
    assert_eq!(folds.len(), 10);
    let acc: Vec<f64> = folds.iter().map(|f| f["test"]["accuracy"].as_f64().unwrap()).collect();
    let mean = acc.iter().sum::<f64>() / 10.0;
    let std = (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 9.0).sqrt();
    let reported = &summary["summary"]["test_accuracy"];
    assert!((reported["mean"].as_f64().unwrap() - mean).abs() < 1e-12);
    assert!((reported["std"].as_f64().unwrap() - std).abs() < 1e-12);
    let csv = std::fs::read_to_string(outs[0].join("summary.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("test_accuracy,") && l.contains('±')));
}

fn toy_fixture_ledger() -> String {
    let rows: Vec<Vec<f64>> = TOY_ROWS.iter().map(|(r, _)| r.to_vec()).collect();
    let labels: Vec<Label> = TOY_ROWS.iter().map(|(_, y)| if *y == 1 { Label::Positive } else { Label::Negative }).collect();
    let ds = Dataset::from_rows(rows, labels).unwrap();
    let split = Split::from_indices(10, (0..6).collect(), vec![6, 7], vec![8, 9]).unwrap();
    let cfg = TrainConfig {
        t: 3,
        schedule: ScheduleSource::Explicit(vec![
            CostMatrix::new(0.0, 0.1506, 0.9021, 0.4592, 0.1249, 0.0).unwrap(),
            CostMatrix::new(0.0, 0.4617, 0.5962, 0.6740, 0.1344, 0.0).unwrap(),
            CostMatrix::new(0.0, 0.3626, 0.7064, 0.7664, 0.3727, 0.0).unwrap(),
        ]),
        unit_costs: UnitCostSource::Explicit(UnitCosts::new(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]).unwrap()),
        nodes: NodeSource::Injected(vec![
            NodeParams {
                w1: vec![0.8115, -1.0612, 0.3465, 0.1514],
                b1: 0.1139,
                w2: [0.2019, 0.0860],
                b2: [0.1110, 0.1177],
            },
            NodeParams {
                w1: vec![-0.2338, -0.1741, 0.9333, 0.2477],
                b1: 0.0818,
                w2: [0.1343, 0.0133],
                b2: [0.0768, 0.0821],
            },
        ]),
        ..TrainConfig::default()
    };
    report_json(&run(&ds, &split, &cfg).unwrap().ledger).unwrap()
}

#[test]
fn costs_from_toy_ledger() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("ledger.json"), toy_fixture_ledger()).unwrap();
    let r = bin(&["costs", path_str(dir.path())]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let csv = std::fs::read_to_string(dir.path().join("costs.csv")).unwrap();
    let rows: Vec<(String, String, String)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            (c[0].to_string(), c[1].to_string(), c[2].to_string())
        })
        .collect();
    assert_eq!(rows, vec![("1".into(), "3".into(), "3".into()), ("2".into(), "7".into(), "4".into())]);
    assert_eq!(String::from_utf8(r.stdout).unwrap(), csv);
}

#[test]
fn costs_without_ledger_exits_2() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&bin(&["costs", path_str(dir.path())])), 2);
}

#[test]
fn costs_from_a_trained_run_increase() {
    let dir = TempDir::new().unwrap();
    let data = random_csv(dir.path(), 80, 4, 7);
    let out = dir.path().join("run");
    let args = ["train", "--data", path_str(&data), "--label-col", "class", "--positive", "yes", "--out", path_str(&out)];
    assert_eq!(code(&bin(&args)), 0);
    let before = std::fs::read(out.join("costs.csv")).unwrap();
    assert_eq!(code(&bin(&["costs", path_str(&out)])), 0);
    let csv = std::fs::read_to_string(out.join("costs.csv")).unwrap();
    assert_eq!(csv.as_bytes(), &before[..]);
    let test_costs: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(!test_costs.is_empty());
    assert!(test_costs.windows(2).all(|w| w[1] > w[0]));
}
