//! Accuracy, per-class precision/recall/F1, weighted F1 and ROC/AUC.

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};

fn check_lengths(truth: usize, other: usize) -> Result<()> {
    if truth != other {
        return Err(Error::DimensionMismatch {
            expected: truth,
            found: other,
        });
    }
    if truth == 0 {
        return Err(Error::InvalidArgument("metrics need at least one instance".into()));
    }
    Ok(())
}

/// One-vs-rest counts for one class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn for_class(truth: &[Label], predicted: &[Label], class: Label) -> Result<Self> {
        check_lengths(truth.len(), predicted.len())?;
        let mut c = Self::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t == class, p == class) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    fn ratio(num: usize, den: usize) -> f64 {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    pub fn precision(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        Self::ratio(self.tp, self.tp + self.fn_)
    }

    /// Zero when precision + recall is zero.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

impl From<ConfusionMatrix> for ClassReport {
    fn from(c: ConfusionMatrix) -> Self {
        Self {
            precision: c.precision(),
            recall: c.recall(),
            f1: c.f1(),
            support: c.support(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerClass {
    pub positive: ClassReport,
    pub negative: ClassReport,
}

pub fn accuracy(truth: &[Label], predicted: &[Label]) -> Result<f64> {
    check_lengths(truth.len(), predicted.len())?;
    let hits = truth.iter().zip(predicted).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

pub fn per_class(truth: &[Label], predicted: &[Label]) -> Result<PerClass> {
    Ok(PerClass {
        positive: ConfusionMatrix::for_class(truth, predicted, Label::Positive)?.into(),
        negative: ConfusionMatrix::for_class(truth, predicted, Label::Negative)?.into(),
    })
}

/// Support-weighted mean of the per-class F1 scores.
pub fn weighted_f1(truth: &[Label], predicted: &[Label]) -> Result<f64> {
    let pc = per_class(truth, predicted)?;
    let n = truth.len() as f64;
    Ok((pc.positive.support as f64 * pc.positive.f1 + pc.negative.support as f64 * pc.negative.f1) / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Scores at or above this value are called positive. The first point
    /// uses `+inf`.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

/// ROC curve over descending score thresholds, with equal scores moving as
/// one group, and its trapezoidal area.
pub fn roc_auc(truth: &[Label], scores: &[f64]) -> Result<(RocCurve, f64)> {
    check_lengths(truth.len(), scores.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("scores contain NaN".into()));
    }
    let n_pos = truth.iter().filter(|l| l.is_positive()).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument("ROC needs both classes present".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]].is_positive() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x0, x1) = (fp0 as f64 / n_neg as f64, fp as f64 / n_neg as f64);
        let (y0, y1) = (tp0 as f64 / n_pos as f64, tp as f64 / n_pos as f64);
        auc += (x1 - x0) * (y0 + y1) / 2.0;
        points.push(RocPoint {
            threshold: s,
            fpr: x1,
            tpr: y1,
        });
    }
    Ok((RocCurve { points }, auc))
}

/// Everything reported for one evaluated set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub weighted_f1: f64,
    /// Absent when the evaluated set holds a single class.
    pub auc: Option<f64>,
    pub per_class: PerClass,
}

pub fn evaluate(truth: &[Label], predicted: &[Label], scores: &[f64]) -> Result<(MetricsReport, Option<RocCurve>)> {
    check_lengths(truth.len(), scores.len())?;
    let roc = match roc_auc(truth, scores) {
        Ok(r) => Some(r),
        Err(Error::InvalidArgument(_)) if !scores.iter().any(|s| s.is_nan()) => None,
        Err(e) => return Err(e),
    };
    let report = MetricsReport {
        accuracy: accuracy(truth, predicted)?,
        weighted_f1: weighted_f1(truth, predicted)?,
        auc: roc.as_ref().map(|r| r.1),
        per_class: per_class(truth, predicted)?,
    };
    Ok((report, roc.map(|r| r.0)))
}
