//! Tabular binary-classification data: CSV ingestion, normalization,
//! 8:1:1 splitting and k-fold bookkeeping.
//!
//! Rows are the universe of instances, feature columns the condition
//! attributes, and the label column the decision attribute. Labels are
//! always stored as [`Label::Positive`] / [`Label::Negative`].

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// A binary label. `Positive` is `+1`, `Negative` is `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn from_sign(sign: i32) -> Result<Self> {
        match sign {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(Error::InvalidArgument(format!("label must be +1 or -1, got {other}"))),
        }
    }

    pub fn sign(self) -> i32 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn flip(self) -> Self {
        match self {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMode {
    MinMax,
    ZScore,
}

impl FromStr for NormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "min-max" | "minmax" => Ok(NormMode::MinMax),
            "z-score" | "zscore" => Ok(NormMode::ZScore),
            other => Err(Error::InvalidArgument(format!("unknown normalization '{other}'"))),
        }
    }
}

impl fmt::Display for NormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormMode::MinMax => "min-max",
            NormMode::ZScore => "z-score",
        })
    }
}

/// Per-feature affine normalization. For min-max the pairs are `(min, max)`,
/// for z-score `(mean, sd)`. A zero-width column maps to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mode: NormMode,
    pub stats: Vec<(f64, f64)>,
}

impl Normalization {
    pub fn fit(rows: &[Vec<f64>], mode: NormMode) -> Self {
        let m = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let stats = (0..m)
            .map(|j| {
                let col = rows.iter().map(|r| r[j]);
                match mode {
                    NormMode::MinMax => col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                        (lo.min(v), hi.max(v))
                    }),
                    NormMode::ZScore => {
                        let mean = col.clone().sum::<f64>() / n;
                        let var = col.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                        (mean, var.sqrt())
                    }
                }
            })
            .collect();
        Self { mode, stats }
    }

    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.stats.len() {
            return Err(Error::DimensionMismatch {
                expected: self.stats.len(),
                found: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(&self.stats)
            .map(|(&v, &(a, b))| match self.mode {
                NormMode::MinMax => {
                    let width = b - a;
                    if width > 0.0 {
                        (v - a) / width
                    } else {
                        0.0
                    }
                }
                NormMode::ZScore => {
                    if b > 0.0 {
                        (v - a) / b
                    } else {
                        0.0
                    }
                }
            })
            .collect())
    }
}

/// How raw label values were mapped onto `+1` / `-1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMapping {
    pub positive: String,
    pub negative: String,
}

/// Summary of a CSV ingestion, written as JSON next to run outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
    pub label_mapping: LabelMapping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<Label>,
    feature_names: Vec<String>,
    normalization: Option<Normalization>,
}

impl Dataset {
    /// Builds a dataset from row-major features. Requires at least two rows,
    /// at least one feature, a rectangular finite matrix and both labels present.
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<Label>, feature_names: Vec<String>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                found: labels.len(),
            });
        }
        if features.len() < 2 {
            return Err(Error::Data(format!("need at least 2 rows, got {}", features.len())));
        }
        let m = features[0].len();
        if m == 0 {
            return Err(Error::Data("need at least one feature column".into()));
        }
        if feature_names.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: feature_names.len(),
            });
        }
        for (i, row) in features.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Data(format!("row {i} has {} features, expected {m}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("row {i} has a non-finite feature")));
            }
        }
        if !labels.contains(&Label::Positive) || !labels.contains(&Label::Negative) {
            return Err(Error::Data("label column is constant; need two classes".into()));
        }
        Ok(Self {
            features,
            labels,
            feature_names,
            normalization: None,
        })
    }

    /// Convenience constructor with generated names `a1..am`.
    pub fn from_rows(features: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self> {
        let m = features.first().map_or(0, Vec::len);
        let names = (1..=m).map(|j| format!("a{j}")).collect();
        Self::new(features, labels, names)
    }

    pub fn n_rows(&self) -> usize {
        self.features.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn label(&self, i: usize) -> Label {
        self.labels[i]
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    /// Returns a normalized copy; the fitted statistics travel with it.
    pub fn normalize(&self, mode: NormMode) -> Dataset {
        self.with_normalization(Normalization::fit(&self.features, mode))
            .expect("fitted on the same width")
    }

    /// Normalizes every row with statistics fitted on `fit_rows` only, so
    /// validation and test rows reuse the training statistics.
    pub fn normalize_fitted(&self, mode: NormMode, fit_rows: &[usize]) -> Result<Dataset> {
        if fit_rows.is_empty() {
            return Err(Error::InvalidArgument("cannot fit normalization on zero rows".into()));
        }
        let rows: Vec<Vec<f64>> = fit_rows
            .iter()
            .map(|&i| {
                self.features
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument(format!("row index {i} out of range")))
            })
            .collect::<Result<_>>()?;
        self.with_normalization(Normalization::fit(&rows, mode))
    }

    /// Applies previously fitted statistics.
    pub fn with_normalization(&self, norm: Normalization) -> Result<Dataset> {
        let features = self.features.iter().map(|r| norm.apply(r)).collect::<Result<_>>()?;
        Ok(Dataset {
            features,
            labels: self.labels.clone(),
            feature_names: self.feature_names.clone(),
            normalization: Some(norm),
        })
    }
}

/// Which column carries the label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(LabelColumn::Name(s.to_string()))
    }
}

impl LabelColumn {
    fn resolve(&self, header: &[String]) -> Result<usize> {
        match self {
            LabelColumn::Index(i) if *i < header.len() => Ok(*i),
            LabelColumn::Index(i) => Err(Error::Data(format!(
                "label column index {i} out of range for {} columns",
                header.len()
            ))),
            LabelColumn::Name(name) => {
                if let Some(pos) = header.iter().position(|h| h == name.trim()) {
                    return Ok(pos);
                }
                match name.trim().parse::<usize>() {
                    Ok(i) if i < header.len() => Ok(i),
                    _ => Err(Error::Data(format!("label column '{name}' not found"))),
                }
            }
        }
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "?" | "NA" | "na" | "N/A" | "null" | "NULL")
}

fn same_label(raw: &str, wanted: &str) -> bool {
    if raw == wanted {
        return true;
    }
    match (raw.parse::<f64>(), wanted.parse::<f64>()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

/// Reads a headered UTF-8 CSV. Rows with a missing cell are dropped and
/// counted. The raw value equal to `positive` becomes `+1`, the other value `-1`.
pub fn load_csv(path: impl AsRef<Path>, label: &LabelColumn, positive: &str) -> Result<(Dataset, IngestReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Data(format!("{} is empty", path.display())));
    }
    let label_idx = label.resolve(&header)?;
    if header.len() < 2 {
        return Err(Error::Data("need at least one feature column besides the label".into()));
    }

    let mut features = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    let mut rows_read = 0;
    let mut rows_dropped = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        rows_read += 1;
        if record.len() != header.len() || record.iter().any(is_missing) {
            rows_dropped += 1;
            continue;
        }
        let mut row = Vec::with_capacity(header.len() - 1);
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::Data(format!(
                    "non-numeric value '{cell}' in column '{}' at data row {}",
                    header[j],
                    line + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!("non-finite value in column '{}' at data row {}", header[j], line + 1)));
            }
            row.push(v);
        }
        features.push(row);
        raw_labels.push(record[label_idx].to_string());
    }
    if features.len() < 2 {
        return Err(Error::Data(format!(
            "need at least 2 complete data rows, found {}",
            features.len()
        )));
    }

    let distinct: BTreeSet<&str> = raw_labels.iter().map(String::as_str).collect();
    if distinct.len() > 2 {
        return Err(Error::Data(format!(
            "label column has {} distinct values; expected exactly 2",
            distinct.len()
        )));
    }
    if distinct.len() < 2 {
        return Err(Error::Data("label column is constant; need two classes".into()));
    }
    let pos_raw = distinct
        .iter()
        .find(|v| same_label(v, positive.trim()))
        .ok_or_else(|| Error::Data(format!("positive label '{positive}' not present in label column")))?
        .to_string();
    let neg_raw = distinct.iter().find(|v| **v != pos_raw).unwrap().to_string();

    let labels = raw_labels
        .iter()
        .map(|v| if *v == pos_raw { Label::Positive } else { Label::Negative })
        .collect();
    let names = header
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let ds = Dataset::new(features, labels, names)?;
    let report = IngestReport {
        rows_read,
        rows_dropped,
        label_mapping: LabelMapping {
            positive: pos_raw,
            negative: neg_raw,
        },
    };
    Ok((ds, report))
}

/// Disjoint train / validation / test row indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Explicit index lists (fixture mode). The lists must be disjoint and in range;
    /// they need not cover every row.
    pub fn from_indices(n_rows: usize, train: Vec<usize>, validation: Vec<usize>, test: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; n_rows];
        for &i in train.iter().chain(&validation).chain(&test) {
            if i >= n_rows {
                return Err(Error::InvalidArgument(format!("row index {i} out of range for {n_rows} rows")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidArgument(format!("row index {i} appears in more than one split")));
            }
        }
        Ok(Self { train, validation, test })
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }
}

/// Shuffled 8:1:1 split: `round(0.8d)` train, `round(0.1d)` validation,
/// remainder test.
pub fn split_811(ds: &Dataset, stream: &mut RngStream) -> Result<Split> {
    split_811_rows(ds.n_rows(), stream)
}

pub fn split_811_rows(d: usize, stream: &mut RngStream) -> Result<Split> {
    if d < 10 {
        return Err(Error::Data(format!("8:1:1 split needs at least 10 rows, got {d}")));
    }
    let mut order: Vec<usize> = (0..d).collect();
    stream.shuffle(&mut order);
    let n_train = (0.8 * d as f64).round() as usize;
    let n_val = (0.1 * d as f64).round() as usize;
    let test = order.split_off(n_train + n_val);
    let validation = order.split_off(n_train);
    Ok(Split {
        train: order,
        validation,
        test,
    })
}

/// Row-to-fold assignment. Folds are numbered `0..k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn members(&self, fold: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, f)| **f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }

    /// Split for one cross-validation round: the fold is the test set, the
    /// next fold (cyclically) is the validation set, the rest trains.
    /// With `k == 2` there is no spare fold and validation is empty.
    pub fn split_for(&self, fold: usize) -> Result<Split> {
        if fold >= self.k {
            return Err(Error::InvalidArgument(format!("fold {fold} out of range for k={}", self.k)));
        }
        let val_fold = if self.k >= 3 { Some((fold + 1) % self.k) } else { None };
        let mut split = Split {
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
        };
        for (i, &f) in self.assignment.iter().enumerate() {
            if f == fold {
                split.test.push(i);
            } else if Some(f) == val_fold {
                split.validation.push(i);
            } else {
                split.train.push(i);
            }
        }
        Ok(split)
    }
}

pub fn make_folds(ds: &Dataset, k: usize, stream: &mut RngStream) -> Result<FoldPlan> {
    make_folds_rows(ds.n_rows(), k, stream)
}

pub fn make_folds_rows(d: usize, k: usize, stream: &mut RngStream) -> Result<FoldPlan> {
    if k < 2 || k > d {
        return Err(Error::InvalidArgument(format!("fold count must be in 2..={d}, got {k}")));
    }
    let mut order: Vec<usize> = (0..d).collect();
    stream.shuffle(&mut order);
    let mut assignment = vec![0; d];
    for (pos, &row) in order.iter().enumerate() {
        assignment[row] = pos % k;
    }
    Ok(FoldPlan { k, assignment })
}
