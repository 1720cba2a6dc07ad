//! On-disk formats: the model document, rounded JSON reports and the CSV
//! files for ROC curves and process costs.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::{NormMode, Normalization};
use crate::error::{Error, Result};
use crate::metrics::RocCurve;
use crate::numerics::ActivationKind;
use crate::sfnn::{Assembled, LayeredNetwork};
use crate::stwd::{CostMatrix, ThresholdSchedule};
use crate::trainer::{RunLedger, ThresholdPolicy};

pub const MODEL_FORMAT: &str = "stwd-sfnn-model/1";
/// Significant digits of floats in reports.
pub const REPORT_DIGITS: usize = 15;

/// Rounds to `digits` significant digits (non-finite values pass through).
pub fn round_sig(v: f64, digits: usize) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{:.*e}", digits.saturating_sub(1), v).parse().unwrap_or(v)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let r = round_sig(n.as_f64().expect("checked f64"), REPORT_DIGITS);
            if let Some(num) = serde_json::Number::from_f64(r) {
                *n = num;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with every float rounded to [`REPORT_DIGITS`] significant digits.
pub fn report_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_value(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// Plain decimal text for CSV cells.
pub fn fmt_float(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{}", round_sig(v, REPORT_DIGITS))
}

fn enc(v: f64) -> String {
    format!("{v:.16e}")
}

fn dec(s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Data(format!("model value '{s}' is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Data(format!("model value '{s}' is not finite")));
    }
    Ok(v)
}

fn enc_vec(v: &[f64]) -> Vec<String> {
    v.iter().map(|&x| enc(x)).collect()
}

fn dec_vec(v: &[String]) -> Result<Vec<f64>> {
    v.iter().map(|s| dec(s)).collect()
}

fn enc_matrix(m: &CostMatrix) -> Vec<String> {
    enc_vec(&m.to_array())
}

fn dec_matrix(v: &[String]) -> Result<CostMatrix> {
    let a: [f64; 6] = dec_vec(v)?
        .try_into()
        .map_err(|_| Error::Data("cost matrix needs six entries".into()))?;
    CostMatrix::from_array(a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationDoc {
    pub mode: String,
    /// `(min, max)` or `(mean, sd)` per feature.
    pub stats: Vec<[String; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelDoc {
    pub level: usize,
    /// `[PP, BP, NP, PN, BN, NN]`.
    pub matrix: Vec<String>,
    pub alpha: String,
    pub beta: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaDoc {
    pub gamma: String,
    pub matrix: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum ThresholdDoc {
    Sequential { levels: Vec<LevelDoc>, last: GammaDoc },
    Fixed { matrix: Vec<String>, alpha: String, beta: String, gamma: String },
    /// Fixed-topology models trained without any three-way step.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedsDoc {
    pub master: u64,
    pub streams: Vec<String>,
}

/// Serialized model. Every real is a decimal string with 17 significant
/// digits so it round-trips exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub format: String,
    pub kind: String,
    pub activation: ActivationKind,
    pub feature_names: Vec<String>,
    pub normalization: Option<NormalizationDoc>,
    #[serde(rename = "W1")]
    pub w1: Vec<Vec<String>>,
    pub b1: Vec<String>,
    #[serde(rename = "W2")]
    pub w2: [Vec<String>; 2],
    pub b2: [String; 2],
    pub thresholds: ThresholdDoc,
    pub seeds: SeedsDoc,
}

fn threshold_doc(policy: Option<&ThresholdPolicy>) -> Result<ThresholdDoc> {
    Ok(match policy {
        None => ThresholdDoc::None,
        Some(ThresholdPolicy::Sequential(s)) => ThresholdDoc::Sequential {
            levels: s
                .levels()
                .iter()
                .map(|l| LevelDoc {
                    level: l.level,
                    matrix: enc_matrix(&l.matrix),
                    alpha: enc(l.alpha),
                    beta: enc(l.beta),
                })
                .collect(),
            last: GammaDoc {
                gamma: enc(s.gamma()),
                matrix: enc_matrix(s.gamma_matrix()),
            },
        },
        Some(ThresholdPolicy::Fixed(m)) => {
            let (a, b) = m.thresholds()?;
            ThresholdDoc::Fixed {
                matrix: enc_matrix(m),
                alpha: enc(a),
                beta: enc(b),
                gamma: enc(m.gamma()?),
            }
        }
    })
}

impl ModelDoc {
    pub fn new(
        kind: &str,
        network: &LayeredNetwork,
        feature_names: &[String],
        normalization: Option<&Normalization>,
        policy: Option<&ThresholdPolicy>,
        seed: u64,
        streams: Vec<String>,
    ) -> Result<Self> {
        if network.n_hidden() == 0 {
            return Err(Error::InvalidArgument("cannot serialize an empty network".into()));
        }
        let asm = network.assembled();
        Ok(Self {
            format: MODEL_FORMAT.into(),
            kind: kind.into(),
            activation: network.activation,
            feature_names: feature_names.to_vec(),
            normalization: normalization.map(|n| NormalizationDoc {
                mode: n.mode.to_string(),
                stats: n.stats.iter().map(|&(a, b)| [enc(a), enc(b)]).collect(),
            }),
            w1: asm.w1.iter().map(|r| enc_vec(r)).collect(),
            b1: enc_vec(&asm.b1),
            w2: [enc_vec(&asm.w2[0]), enc_vec(&asm.w2[1])],
            b2: [enc(asm.b2[0]), enc(asm.b2[1])],
            thresholds: threshold_doc(policy)?,
            seeds: SeedsDoc { master: seed, streams },
        })
    }

    pub fn network(&self) -> Result<LayeredNetwork> {
        let asm = Assembled {
            w1: self.w1.iter().map(|r| dec_vec(r)).collect::<Result<_>>()?,
            b1: dec_vec(&self.b1)?,
            w2: [dec_vec(&self.w2[0])?, dec_vec(&self.w2[1])?],
            b2: [dec(&self.b2[0])?, dec(&self.b2[1])?],
        };
        if asm.w1.is_empty() {
            return Err(Error::Data("model has no hidden nodes".into()));
        }
        LayeredNetwork::from_assembled(self.activation, &asm)
    }

    pub fn normalization(&self) -> Result<Option<Normalization>> {
        self.normalization
            .as_ref()
            .map(|n| {
                let mode: NormMode = n.mode.parse()?;
                let stats = n
                    .stats
                    .iter()
                    .map(|[a, b]| Ok((dec(a)?, dec(b)?)))
                    .collect::<Result<_>>()?;
                Ok(Normalization { mode, stats })
            })
            .transpose()
    }

    /// Rebuilds the threshold policy; schedules are revalidated.
    pub fn policy(&self) -> Result<Option<ThresholdPolicy>> {
        Ok(match &self.thresholds {
            ThresholdDoc::None => None,
            ThresholdDoc::Fixed { matrix, .. } => Some(ThresholdPolicy::Fixed(dec_matrix(matrix)?)),
            ThresholdDoc::Sequential { levels, last } => {
                let mut ms = levels.iter().map(|l| dec_matrix(&l.matrix)).collect::<Result<Vec<_>>>()?;
                ms.push(dec_matrix(&last.matrix)?);
                Some(ThresholdPolicy::Sequential(ThresholdSchedule::from_matrices(&ms)?))
            }
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)?;
        if doc.format != MODEL_FORMAT {
            return Err(Error::Data(format!("unsupported model format '{}'", doc.format)));
        }
        doc.network()?;
        doc.policy()?;
        Ok(doc)
    }
}

pub fn roc_csv(curve: &RocCurve) -> String {
    let mut out = String::from("threshold,tpr,fpr\n");
    for p in &curve.points {
        out.push_str(&format!("{},{},{}\n", fmt_float(p.threshold), fmt_float(p.tpr), fmt_float(p.fpr)));
    }
    out
}

pub fn costs_csv(ledger: &RunLedger) -> String {
    let mut out = String::from("level,test_cost,delay_cost,m,risk\n");
    for l in &ledger.levels {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            l.level,
            fmt_float(l.test_cost),
            fmt_float(l.delay_cost),
            l.m,
            fmt_float(l.risk)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use crate::sfnn::{init_node, InitDist};

    #[test]
    fn roc_csv_columns() {
        use crate::dataset::Label::{Negative, Positive};
        let (curve, _) = crate::metrics::roc_auc(&[Positive, Negative, Positive], &[0.9, 0.4, 0.4]).unwrap();
        let csv = roc_csv(&curve);
        assert_eq!(csv, "threshold,tpr,fpr\ninf,0,0\n0.9,0.5,0\n0.4,1,1\n");
    }

    #[test]
    fn rounding_to_significant_digits() {
        assert_eq!(round_sig(0.1 + 0.2, 15), 0.3);
        assert_eq!(round_sig(123_456_789.123_456_79, 5), 123460000.0);
        assert_eq!(round_sig(0.0, 15), 0.0);
        assert!(round_sig(f64::NAN, 15).is_nan());
        assert_eq!(fmt_float(f64::INFINITY), "inf");
        assert_eq!(fmt_float(7.0), "7");
    }

    #[test]
    fn report_json_rounds_nested_floats() {
        let v = serde_json::json!({"a": [0.1 + 0.2, 3], "b": {"c": 1.0 / 3.0}});
        let s = report_json(&v).unwrap();
        assert!(s.contains("0.3") && !s.contains("0.30000000000000004"));
        assert!(s.contains("0.333333333333333"));
        assert!(s.contains("3\n") || s.contains("3,") || s.contains("3\r"));
    }

    #[test]
    fn model_round_trips_exactly() {
        let mut s = RngStream::new(3, "model");
        let nodes = (0..3).map(|_| init_node(4, InitDist::Normal, &mut s).unwrap()).collect();
        let net = LayeredNetwork::from_nodes(ActivationKind::Swish, nodes).unwrap();
        let norm = Normalization {
            mode: NormMode::ZScore,
            stats: vec![(0.1, 2.0); 4],
        };
        let m = CostMatrix::new(0.0, 0.1506, 0.9021, 0.4592, 0.1249, 0.0).unwrap();
        let policy = ThresholdPolicy::Sequential(ThresholdSchedule::uniform(m, 3).unwrap());
        let names: Vec<String> = (1..=4).map(|i| format!("a{i}")).collect();
        let doc = ModelDoc::new("stwd", &net, &names, Some(&norm), Some(&policy), 9, vec!["run".into()]).unwrap();
        let back = ModelDoc::from_json(&doc.to_json().unwrap()).unwrap();
        assert_eq!(back, doc);
        let rebuilt = back.network().unwrap();
        assert_eq!(rebuilt.assembled(), net.assembled());
        assert_eq!(back.normalization().unwrap(), Some(norm));
        assert_eq!(back.policy().unwrap(), Some(policy));
    }

    #[test]
    fn tampered_schedule_rejected_on_load() {
        let mut s = RngStream::new(3, "model");
        let net = LayeredNetwork::from_nodes(ActivationKind::Relu, vec![init_node(2, InitDist::Uniform, &mut s).unwrap()]).unwrap();
        let a = CostMatrix::new(0.0, 0.1506, 0.9021, 0.4592, 0.1249, 0.0).unwrap();
        let b = CostMatrix::new(0.0, 0.4617, 0.5962, 0.6740, 0.1344, 0.0).unwrap();
        let c = CostMatrix::new(0.0, 0.3626, 0.7064, 0.7664, 0.3727, 0.0).unwrap();
        let policy = ThresholdPolicy::Sequential(ThresholdSchedule::from_matrices(&[a, b, c]).unwrap());
        let names = vec!["x".to_string(), "y".to_string()];
        let doc = ModelDoc::new("stwd", &net, &names, None, Some(&policy), 0, vec![]).unwrap();
        let mut v: Value = serde_json::from_str(&doc.to_json().unwrap()).unwrap();
        let first = v["thresholds"]["levels"][0]["matrix"].clone();
        v["thresholds"]["levels"][0]["matrix"] = v["thresholds"]["levels"][1]["matrix"].clone();
        v["thresholds"]["levels"][1]["matrix"] = first;
        assert!(ModelDoc::from_json(&v.to_string()).is_err());
    }
}
