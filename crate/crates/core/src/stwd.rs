//! Sequential three-way decisions: result cost matrices, the thresholds
//! they induce, monotone threshold schedules, region partitioning, decision
//! risk and process costs.

use serde::{Deserialize, Serialize};

use crate::discretizer::EquivalenceClass;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Draws allowed per sampled matrix.
pub const MATRIX_DRAW_BUDGET: usize = 10_000;
/// Candidate matrices drawn per schedule level.
pub const LEVEL_CANDIDATE_BUDGET: usize = 1_000;
/// Fresh gamma draws allowed when some level finds no fitting candidate.
pub const SCHEDULE_RESTARTS: usize = 10;
pub const DEFAULT_EPSILON: f64 = 2.0;
pub const DEFAULT_UNIT_COST_RANGE: (f64, f64) = (1.0, 50.0);

/// Tolerance used when checking stored thresholds against their matrix.
const THRESHOLD_TOL: f64 = 1e-12;

/// Losses of accepting (P), deferring (B) and rejecting (N) an instance whose
/// true class is positive (second letter P) or negative (second letter N).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    pub pp: f64,
    pub bp: f64,
    pub np: f64,
    pub pn: f64,
    pub bn: f64,
    pub nn: f64,
}

impl CostMatrix {
    pub fn new(pp: f64, bp: f64, np: f64, pn: f64, bn: f64, nn: f64) -> Result<Self> {
        let m = Self { pp, bp, np, pn, bn, nn };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.pp, self.bp, self.np, self.pn, self.bn, self.nn];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCostMatrix("non-finite entry".into()));
        }
        if !(0.0 <= self.pp && self.pp < self.bp && self.bp < self.np && self.np < 1.0) {
            return Err(Error::InvalidCostMatrix(format!(
                "need 0 <= PP < BP < NP < 1, got ({}, {}, {})",
                self.pp, self.bp, self.np
            )));
        }
        if !(0.0 <= self.nn && self.nn < self.bn && self.bn < self.pn && self.pn < 1.0) {
            return Err(Error::InvalidCostMatrix(format!(
                "need 0 <= NN < BN < PN < 1, got ({}, {}, {})",
                self.nn, self.bn, self.pn
            )));
        }
        if (self.bn - self.nn) * (self.bp - self.pp) >= (self.pn - self.bn) * (self.np - self.bp) {
            return Err(Error::InvalidCostMatrix(
                "need (BN-NN)(BP-PP) < (PN-BN)(NP-BP)".into(),
            ));
        }
        Ok(())
    }

    /// `(alpha, beta)` of this matrix.
    pub fn thresholds(&self) -> Result<(f64, f64)> {
        self.validate()?;
        let a_num = self.pn - self.bn;
        let b_num = self.bn - self.nn;
        let alpha = a_num / (a_num + (self.bp - self.pp));
        let beta = b_num / (b_num + (self.np - self.bp));
        Ok((alpha, beta))
    }

    /// Two-way threshold `gamma` of this matrix.
    pub fn gamma(&self) -> Result<f64> {
        self.validate()?;
        let num = self.pn - self.nn;
        Ok(num / (num + (self.np - self.pp)))
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.pp, self.bp, self.np, self.pn, self.bn, self.nn]
    }

    pub fn from_array(v: [f64; 6]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5])
    }
}

pub fn thresholds_from(matrix: &CostMatrix) -> Result<(f64, f64)> {
    matrix.thresholds()
}

pub fn gamma_from(matrix: &CostMatrix) -> Result<f64> {
    matrix.gamma()
}

fn sorted_triple(stream: &mut RngStream) -> Option<[f64; 3]> {
    let mut v = [stream.next_unit(), stream.next_unit(), stream.next_unit()];
    v.sort_by(f64::total_cmp);
    (v[0] < v[1] && v[1] < v[2]).then_some(v)
}

/// Draws a valid matrix with entries in `[0, 1)`. Each row is three sorted
/// uniforms; draws with ties or a failed cross constraint are rejected.
pub fn sample_cost_matrix(stream: &mut RngStream) -> Result<CostMatrix> {
    for _ in 0..MATRIX_DRAW_BUDGET {
        let (Some(p), Some(n)) = (sorted_triple(stream), sorted_triple(stream)) else {
            continue;
        };
        let m = CostMatrix {
            pp: p[0],
            bp: p[1],
            np: p[2],
            nn: n[0],
            bn: n[1],
            pn: n[2],
        };
        if m.validate().is_ok() {
            return Ok(m);
        }
    }
    Err(Error::SamplingExhausted(format!(
        "no valid cost matrix in {MATRIX_DRAW_BUDGET} draws"
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelThresholds {
    pub level: usize,
    pub matrix: CostMatrix,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawSchedule {
    levels: Vec<LevelThresholds>,
    gamma: f64,
    gamma_matrix: CostMatrix,
}

/// Thresholds for levels `1..t-1` plus the final `gamma`, satisfying
/// `0 < β1 ≤ … ≤ β(t-1) < γ < α(t-1) ≤ … ≤ α1 < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule", into = "RawSchedule")]
pub struct ThresholdSchedule {
    levels: Vec<LevelThresholds>,
    gamma: f64,
    gamma_matrix: CostMatrix,
}

impl TryFrom<RawSchedule> for ThresholdSchedule {
    type Error = Error;

    fn try_from(raw: RawSchedule) -> Result<Self> {
        let s = ThresholdSchedule {
            levels: raw.levels,
            gamma: raw.gamma,
            gamma_matrix: raw.gamma_matrix,
        };
        s.validate()?;
        Ok(s)
    }
}

impl From<ThresholdSchedule> for RawSchedule {
    fn from(s: ThresholdSchedule) -> Self {
        RawSchedule {
            levels: s.levels,
            gamma: s.gamma,
            gamma_matrix: s.gamma_matrix,
        }
    }
}

impl ThresholdSchedule {
    /// Uses the matrices as given: one per level, the last supplying `gamma`.
    pub fn from_matrices(matrices: &[CostMatrix]) -> Result<Self> {
        let (last, rest) = matrices
            .split_last()
            .ok_or_else(|| Error::InvalidArgument("schedule needs at least one matrix".into()))?;
        let levels = rest
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let (alpha, beta) = m.thresholds()?;
                Ok(LevelThresholds {
                    level: i + 1,
                    matrix: *m,
                    alpha,
                    beta,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let s = Self {
            levels,
            gamma: last.gamma()?,
            gamma_matrix: *last,
        };
        s.validate()?;
        Ok(s)
    }

    /// Every level uses the same matrix.
    pub fn uniform(matrix: CostMatrix, t: usize) -> Result<Self> {
        if t < 1 {
            return Err(Error::InvalidArgument("schedule needs at least one level".into()));
        }
        Self::from_matrices(&vec![matrix; t])
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev = (1.0, 0.0);
        for (i, lv) in self.levels.iter().enumerate() {
            if lv.level != i + 1 {
                return Err(Error::InvalidArgument(format!("level {} stored at position {}", lv.level, i + 1)));
            }
            let (a, b) = lv.matrix.thresholds()?;
            if (a - lv.alpha).abs() > THRESHOLD_TOL || (b - lv.beta).abs() > THRESHOLD_TOL {
                return Err(Error::InvalidArgument(format!("level {} thresholds do not match its matrix", lv.level)));
            }
            if !(lv.alpha <= prev.0 && lv.beta >= prev.1 && lv.alpha < 1.0 && lv.beta > 0.0) {
                return Err(Error::InvalidArgument(format!("level {} breaks the threshold ordering", lv.level)));
            }
            if !(lv.beta < self.gamma && self.gamma < lv.alpha) {
                return Err(Error::InvalidArgument(format!("gamma is not inside level {}'s band", lv.level)));
            }
            prev = (lv.alpha, lv.beta);
        }
        let g = self.gamma_matrix.gamma()?;
        if (g - self.gamma).abs() > THRESHOLD_TOL {
            return Err(Error::InvalidArgument("gamma does not match its matrix".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::InvalidArgument("gamma must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Number of levels including the final two-way level.
    pub fn t(&self) -> usize {
        self.levels.len() + 1
    }

    pub fn levels(&self) -> &[LevelThresholds] {
        &self.levels
    }

    pub fn level(&self, i: usize) -> Option<&LevelThresholds> {
        i.checked_sub(1).and_then(|j| self.levels.get(j))
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn gamma_matrix(&self) -> &CostMatrix {
        &self.gamma_matrix
    }

    /// Matrix in force at `level` (1-based); level `t` uses the gamma matrix.
    pub fn matrix_at(&self, level: usize) -> Option<&CostMatrix> {
        if level == self.t() {
            Some(&self.gamma_matrix)
        } else {
            self.level(level).map(|l| &l.matrix)
        }
    }

    /// All matrices, level order.
    pub fn matrices(&self) -> Vec<CostMatrix> {
        self.levels.iter().map(|l| l.matrix).chain([self.gamma_matrix]).collect()
    }
}

/// Samples a `t`-level schedule.
///
/// The level-t matrix is drawn first so every band can be required to contain
/// `gamma`. Each earlier level then draws [`LEVEL_CANDIDATE_BUDGET`] matrices
/// and keeps the one with the widest `(β, α)` band among those nested in the
/// previous band and containing `gamma`.
pub fn build_schedule(t: usize, stream: &mut RngStream) -> Result<ThresholdSchedule> {
    if t < 2 {
        return Err(Error::InvalidArgument("a schedule needs t >= 2".into()));
    }
    let mut last = None;
    for _ in 0..SCHEDULE_RESTARTS {
        match build_schedule_once(t, stream) {
            Err(e @ Error::SamplingExhausted(_)) => last = Some(e),
            other => return other,
        }
    }
    Err(last.expect("at least one attempt"))
}

fn build_schedule_once(t: usize, stream: &mut RngStream) -> Result<ThresholdSchedule> {
    let gamma_matrix = sample_cost_matrix(stream)?;
    let gamma = gamma_matrix.gamma()?;
    let mut levels = Vec::with_capacity(t - 1);
    let (mut alpha_prev, mut beta_prev) = (1.0, 0.0);
    for level in 1..t {
        let mut pool = Vec::with_capacity(LEVEL_CANDIDATE_BUDGET);
        for _ in 0..LEVEL_CANDIDATE_BUDGET {
            let m = sample_cost_matrix(stream)?;
            let (a, b) = m.thresholds()?;
            if beta_prev <= b && b < gamma && gamma < a && a <= alpha_prev {
                pool.push((m, a, b));
            }
        }
        // prefer the band that leaves room for the most of its fellow candidates
        let mut best: Option<(usize, f64, CostMatrix, f64, f64)> = None;
        for &(m, a, b) in &pool {
            let room = pool.iter().filter(|&&(_, a2, b2)| b <= b2 && a2 <= a).count();
            let better = best.is_none_or(|(r, w, ..)| room > r || (room == r && a - b > w));
            if better {
                best = Some((room, a - b, m, a, b));
            }
        }
        let (_, _, matrix, alpha, beta) = best.ok_or_else(|| {
            Error::SamplingExhausted(format!(
                "no candidate among {LEVEL_CANDIDATE_BUDGET} fits level {level} of the schedule"
            ))
        })?;
        levels.push(LevelThresholds { level, matrix, alpha, beta });
        alpha_prev = alpha;
        beta_prev = beta;
    }
    let s = ThresholdSchedule { levels, gamma, gamma_matrix };
    s.validate()?;
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Pos,
    Bnd,
    Neg,
}

/// Equivalence classes split into accepted, deferred and rejected regions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Regions {
    pub pos: Vec<EquivalenceClass>,
    pub bnd: Vec<EquivalenceClass>,
    pub neg: Vec<EquivalenceClass>,
}

impl Regions {
    fn members(classes: &[EquivalenceClass]) -> Vec<usize> {
        let mut out: Vec<usize> = classes.iter().flat_map(|c| c.members.iter().copied()).collect();
        out.sort_unstable();
        out
    }

    pub fn pos_instances(&self) -> Vec<usize> {
        Self::members(&self.pos)
    }

    pub fn bnd_instances(&self) -> Vec<usize> {
        Self::members(&self.bnd)
    }

    pub fn neg_instances(&self) -> Vec<usize> {
        Self::members(&self.neg)
    }

    /// Instance counts `(u_p, u_b, u_n)`.
    pub fn counts(&self) -> (usize, usize, usize) {
        let n = |cs: &[EquivalenceClass]| cs.iter().map(EquivalenceClass::len).sum();
        (n(&self.pos), n(&self.bnd), n(&self.neg))
    }
}

pub fn classify_three_way(p: f64, alpha: f64, beta: f64) -> Region {
    if p >= alpha {
        Region::Pos
    } else if p <= beta {
        Region::Neg
    } else {
        Region::Bnd
    }
}

pub fn classify_two_way(p: f64, gamma: f64) -> Region {
    if p >= gamma {
        Region::Pos
    } else {
        Region::Neg
    }
}

fn partition_by(classes: &[EquivalenceClass], rule: impl Fn(f64) -> Region) -> Regions {
    let mut r = Regions::default();
    for c in classes {
        match rule(c.p) {
            Region::Pos => r.pos.push(c.clone()),
            Region::Bnd => r.bnd.push(c.clone()),
            Region::Neg => r.neg.push(c.clone()),
        }
    }
    r
}

pub fn partition_three_way(classes: &[EquivalenceClass], alpha: f64, beta: f64) -> Result<Regions> {
    if !(0.0 < beta && beta < alpha && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("need 0 < beta < alpha < 1, got ({alpha}, {beta})")));
    }
    Ok(partition_by(classes, |p| classify_three_way(p, alpha, beta)))
}

pub fn partition_two_way(classes: &[EquivalenceClass], gamma: f64) -> Result<Regions> {
    if !(0.0 < gamma && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    Ok(partition_by(classes, |p| classify_two_way(p, gamma)))
}

fn region_cost(classes: &[EquivalenceClass], loss_pos: f64, loss_neg: f64) -> f64 {
    classes
        .iter()
        .map(|c| c.len() as f64 * (loss_pos * c.p + loss_neg * (1.0 - c.p)))
        .sum()
}

/// Decision risk of a three-way partition, summed per instance, with the
/// boundary term weighted by `epsilon`.
pub fn decision_risk_three_way(regions: &Regions, matrix: &CostMatrix, epsilon: f64) -> Result<f64> {
    if !(epsilon >= 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be >= 1, got {epsilon}")));
    }
    Ok(region_cost(&regions.pos, matrix.pp, matrix.pn)
        + epsilon * region_cost(&regions.bnd, matrix.bp, matrix.bn)
        + region_cost(&regions.neg, matrix.np, matrix.nn))
}

pub fn decision_risk_two_way(regions: &Regions, matrix: &CostMatrix) -> Result<f64> {
    if !regions.bnd.is_empty() {
        return Err(Error::InvalidArgument("two-way risk requires an empty boundary region".into()));
    }
    Ok(region_cost(&regions.pos, matrix.pp, matrix.pn) + region_cost(&regions.neg, matrix.np, matrix.nn))
}

/// Per-level unit test and delay costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitCosts {
    pub test: Vec<f64>,
    pub delay: Vec<f64>,
}

impl UnitCosts {
    pub fn new(test: Vec<f64>, delay: Vec<f64>) -> Result<Self> {
        let u = Self { test, delay };
        u.validate()?;
        Ok(u)
    }

    pub fn validate(&self) -> Result<()> {
        if self.test.len() != self.delay.len() {
            return Err(Error::DimensionMismatch {
                expected: self.test.len(),
                found: self.delay.len(),
            });
        }
        if self.test.is_empty() {
            return Err(Error::InvalidArgument("unit cost vectors are empty".into()));
        }
        if self.test.iter().chain(&self.delay).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument("unit costs must be positive".into()));
        }
        Ok(())
    }

    /// `levels` test and delay costs drawn from `[lo, hi)`, each vector
    /// sorted ascending.
    pub fn sample(levels: usize, lo: f64, hi: f64, stream: &mut RngStream) -> Result<Self> {
        if !(lo > 0.0) {
            return Err(Error::InvalidArgument("unit cost range must be positive".into()));
        }
        let mut draw = || -> Result<Vec<f64>> {
            let mut v = (0..levels).map(|_| stream.next_uniform(lo, hi)).collect::<Result<Vec<_>>>()?;
            v.sort_by(f64::total_cmp);
            Ok(v)
        };
        let test = draw()?;
        let delay = draw()?;
        Self::new(test, delay)
    }

    pub fn levels(&self) -> usize {
        self.test.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessCostEntry {
    pub level: usize,
    pub m: usize,
    pub test_cost: f64,
    pub delay_cost: f64,
}

/// Cumulative test cost (sum) and delay cost (running max) per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessCostLedger {
    pub units: UnitCosts,
    pub entries: Vec<ProcessCostEntry>,
}

impl ProcessCostLedger {
    pub fn new(units: UnitCosts) -> Result<Self> {
        units.validate()?;
        Ok(Self {
            units,
            entries: Vec::new(),
        })
    }

    /// Records the next level with `m` instances examined.
    pub fn accrue(&mut self, m: usize) -> Result<ProcessCostEntry> {
        if m == 0 {
            return Err(Error::InvalidArgument("instance count must be positive".into()));
        }
        let level = self.entries.len() + 1;
        let (Some(&ut), Some(&ud)) = (self.units.test.get(level - 1), self.units.delay.get(level - 1)) else {
            return Err(Error::InvalidArgument(format!("no unit costs for level {level}")));
        };
        let (pt, pd) = self.entries.last().map_or((0.0, 0.0), |e| (e.test_cost, e.delay_cost));
        let entry = ProcessCostEntry {
            level,
            m,
            test_cost: pt + m as f64 * ut,
            delay_cost: pd.max(m as f64 * ud),
        };
        self.entries.push(entry);
        Ok(entry)
    }
}
