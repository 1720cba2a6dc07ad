//! The level loop: grow one hidden node, split the active set into correct
//! and misclassified instances, run a three-way decision over the
//! misclassified ones and defer the boundary region to the next level.
//!
//! The same engine runs the sequential model and the fixed-threshold and
//! discretizer-free baselines; only the threshold policy and the way
//! equivalence classes are formed differ.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{make_folds, Dataset, FoldPlan, Label, NormMode, Split};
use crate::discretizer::{build_equivalence_classes, identical_row_groups, kmeans_cluster_with, EquivalenceClass};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricsReport, RocCurve};
use crate::numerics::{ActivationKind, RngStream};
use crate::sfnn::{classify_split, init_node, train_node, InitDist, LayeredNetwork, NodeParams, TrainHyper};
use crate::stwd::{
    build_schedule, decision_risk_three_way, decision_risk_two_way, partition_three_way, partition_two_way, CostMatrix,
    ProcessCostLedger, ThresholdSchedule, UnitCosts, DEFAULT_EPSILON, DEFAULT_UNIT_COST_RANGE,
};

pub const DEFAULT_LEVELS: usize = 10;
pub const DEFAULT_CLUSTERS: usize = 2;
pub const DEFAULT_RESTARTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleSource {
    /// Drawn from the run's `schedule` stream.
    Sampled,
    /// One matrix per level; the last one supplies `gamma`.
    Explicit(Vec<CostMatrix>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum UnitCostSource {
    Sampled { lo: f64, hi: f64 },
    Explicit(UnitCosts),
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeSource {
    Train,
    /// Already-optimized node parameters, one per level, used verbatim.
    Injected(Vec<NodeParams>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub t: usize,
    pub activation: ActivationKind,
    pub init: InitDist,
    pub hyper: TrainHyper,
    pub epsilon: f64,
    pub k: usize,
    pub kmeans_restarts: usize,
    pub schedule: ScheduleSource,
    pub unit_costs: UnitCostSource,
    pub nodes: NodeSource,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            t: DEFAULT_LEVELS,
            activation: ActivationKind::Selu,
            init: InitDist::Uniform,
            hyper: TrainHyper::default(),
            epsilon: DEFAULT_EPSILON,
            k: DEFAULT_CLUSTERS,
            kmeans_restarts: DEFAULT_RESTARTS,
            schedule: ScheduleSource::Sampled,
            unit_costs: UnitCostSource::Sampled {
                lo: DEFAULT_UNIT_COST_RANGE.0,
                hi: DEFAULT_UNIT_COST_RANGE.1,
            },
            nodes: NodeSource::Train,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t < 2 {
            return Err(Error::InvalidArgument("t must be at least 2".into()));
        }
        if !(self.epsilon >= 1.0) {
            return Err(Error::InvalidArgument("epsilon must be >= 1".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be positive".into()));
        }
        if self.kmeans_restarts == 0 {
            return Err(Error::InvalidArgument("kmeans restarts must be positive".into()));
        }
        if let UnitCostSource::Sampled { lo, hi } = self.unit_costs {
            if !(lo > 0.0 && lo < hi) {
                return Err(Error::InvalidArgument("unit cost range must satisfy 0 < lo < hi".into()));
            }
        }
        self.hyper.validate()
    }

    pub fn master_stream(&self) -> RngStream {
        RngStream::new(self.seed, "run")
    }

    pub fn resolve_schedule(&self) -> Result<ThresholdSchedule> {
        let s = match &self.schedule {
            ScheduleSource::Sampled => build_schedule(self.t, &mut self.master_stream().derive("schedule"))?,
            ScheduleSource::Explicit(ms) => ThresholdSchedule::from_matrices(ms)?,
        };
        if s.t() != self.t {
            return Err(Error::InvalidArgument(format!("schedule has {} levels but t = {}", s.t(), self.t)));
        }
        Ok(s)
    }

    /// A single matrix: the first explicit one, or one draw from the
    /// `schedule` stream.
    pub fn resolve_single_matrix(&self) -> Result<CostMatrix> {
        match &self.schedule {
            ScheduleSource::Sampled => crate::stwd::sample_cost_matrix(&mut self.master_stream().derive("schedule")),
            ScheduleSource::Explicit(ms) => {
                let m = *ms.first().ok_or_else(|| Error::InvalidArgument("no cost matrix given".into()))?;
                m.validate()?;
                Ok(m)
            }
        }
    }

    pub fn resolve_unit_costs(&self) -> Result<UnitCosts> {
        match &self.unit_costs {
            UnitCostSource::Sampled { lo, hi } => {
                UnitCosts::sample(self.t, *lo, *hi, &mut self.master_stream().derive("unit-costs"))
            }
            UnitCostSource::Explicit(u) => {
                u.validate()?;
                if u.levels() < self.t {
                    return Err(Error::InvalidArgument(format!(
                        "{} unit costs given for {} levels",
                        u.levels(),
                        self.t
                    )));
                }
                Ok(u.clone())
            }
        }
    }
}

/// Thresholds in force at each level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdPolicy {
    Sequential(ThresholdSchedule),
    Fixed(CostMatrix),
}

impl ThresholdPolicy {
    fn matrix_at(&self, level: usize, t: usize) -> CostMatrix {
        match self {
            ThresholdPolicy::Sequential(s) => *s.matrix_at(level.min(t)).expect("level within schedule"),
            ThresholdPolicy::Fixed(m) => *m,
        }
    }

    fn final_gamma(&self) -> Result<f64> {
        match self {
            ThresholdPolicy::Sequential(s) => Ok(s.gamma()),
            ThresholdPolicy::Fixed(m) => m.gamma(),
        }
    }

    fn levels(&self) -> Option<usize> {
        match self {
            ThresholdPolicy::Sequential(s) => Some(s.t()),
            ThresholdPolicy::Fixed(_) => None,
        }
    }
}

/// How misclassified instances are grouped into equivalence classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discretization {
    /// k-means++ clusters. Sets no larger than `k` form a single class and
    /// are decided with the two-way rule.
    KMeans,
    /// Rows with identical raw features form a class.
    IdenticalRows,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum LevelRule {
    /// Nothing was misclassified, so no decision was needed.
    None,
    ThreeWay { alpha: f64, beta: f64 },
    TwoWay { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeTraining {
    pub delta: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: usize,
    pub active_size: usize,
    /// Instances examined by the decision step, used for process costs.
    pub m: usize,
    pub p_n: Vec<usize>,
    pub m_n: Vec<usize>,
    pub n_n: Vec<usize>,
    /// Classes over `m_n`, members given as row indices.
    pub classes: Vec<EquivalenceClass>,
    pub p_l: Vec<usize>,
    pub b_l: Vec<usize>,
    pub n_l: Vec<usize>,
    pub rule: LevelRule,
    pub risk: f64,
    pub test_cost: f64,
    pub delay_cost: f64,
    pub training: Option<NodeTraining>,
}

impl LevelRecord {
    /// Instances passed on to the next level.
    pub fn deferred(&self) -> &[usize] {
        &self.b_l
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub levels: Vec<LevelRecord>,
    pub pos: Vec<usize>,
    pub bnd: Vec<usize>,
    pub neg: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub network: LayeredNetwork,
    pub ledger: RunLedger,
    pub policy: ThresholdPolicy,
    pub unit_costs: UnitCosts,
}

/// Sequential run: thresholds from the configured schedule, k-means classes.
pub fn run(ds: &Dataset, split: &Split, cfg: &TrainConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let schedule = cfg.resolve_schedule()?;
    run_engine(ds, split, cfg, ThresholdPolicy::Sequential(schedule), Discretization::KMeans)
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

fn equivalence_classes(
    ds: &Dataset,
    misclassified: &[usize],
    cfg: &TrainConfig,
    disc: Discretization,
    stream: &mut RngStream,
) -> Result<Vec<EquivalenceClass>> {
    let points: Vec<Vec<f64>> = misclassified.iter().map(|&i| ds.row(i).to_vec()).collect();
    let labels: Vec<Label> = misclassified.iter().map(|&i| ds.label(i)).collect();
    let assignments = match disc {
        Discretization::IdenticalRows => identical_row_groups(&points),
        Discretization::KMeans if misclassified.len() <= cfg.k => vec![0; points.len()],
        Discretization::KMeans => {
            let distinct = identical_row_groups(&points).into_iter().max().map_or(0, |m| m + 1);
            let k = cfg.k.min(distinct);
            if k <= 1 {
                vec![0; points.len()]
            } else {
                kmeans_cluster_with(&points, k, cfg.kmeans_restarts, stream)?.assignments
            }
        }
    };
    let mut classes = build_equivalence_classes(&assignments, &labels)?;
    for c in &mut classes {
        for m in &mut c.members {
            *m = misclassified[*m];
        }
    }
    Ok(classes)
}

/// Runs the level loop with an explicit threshold policy and class builder.
pub fn run_engine(
    ds: &Dataset,
    split: &Split,
    cfg: &TrainConfig,
    policy: ThresholdPolicy,
    disc: Discretization,
) -> Result<RunOutput> {
    cfg.validate()?;
    if split.train.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if let Some(t) = policy.levels() {
        if t != cfg.t {
            return Err(Error::InvalidArgument(format!("policy has {t} levels but t = {}", cfg.t)));
        }
    }
    let unit_costs = cfg.resolve_unit_costs()?;
    let mut costs = ProcessCostLedger::new(unit_costs.clone())?;
    let master = cfg.master_stream();
    let m = ds.n_features();

    let mut net = LayeredNetwork::new(cfg.activation);
    let mut levels = Vec::new();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    let mut active = split.train.clone();

    for level in 1..=cfg.t {
        let (node, training) = match &cfg.nodes {
            NodeSource::Train => {
                let mut fresh = init_node(m, cfg.init, &mut master.derive(&format!("init-node-{level}")))?;
                // later nodes start from the current network's function
                if net.n_hidden() > 0 {
                    fresh.w2 = [0.0; 2];
                    fresh.b2 = net.output_bias();
                }
                let mut stream = master.derive(&format!("train-node-{level}"));
                let (node, report) = train_node(ds, &active, &net, fresh, &cfg.hyper, &split.validation, &mut stream)?;
                let training = NodeTraining {
                    delta: report.delta,
                    epochs_run: report.epochs_run,
                    best_epoch: report.best_epoch,
                };
                (node, Some(training))
            }
            NodeSource::Injected(nodes) => {
                let node = nodes
                    .get(level - 1)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument(format!("no injected node for level {level}")))?;
                (node, None)
            }
        };
        net.push(node)?;

        let sfnn = classify_split(&net, ds, &active)?;
        let is_final = level == cfg.t;
        let matrix = policy.matrix_at(level, cfg.t);

        let (classes, regions, rule, risk, m_count) = if sfnn.misclassified.is_empty() {
            (Vec::new(), Default::default(), LevelRule::None, 0.0, active.len())
        } else {
            let mut stream = master.derive(&format!("kmeans-level-{level}"));
            let classes = equivalence_classes(ds, &sfnn.misclassified, cfg, disc, &mut stream)?;
            let small = disc == Discretization::KMeans && sfnn.misclassified.len() <= cfg.k;
            let (regions, rule, risk) = if is_final || small {
                let gamma = if is_final { policy.final_gamma()? } else { matrix.gamma()? };
                let r = partition_two_way(&classes, gamma)?;
                let risk = decision_risk_two_way(&r, &matrix)?;
                (r, LevelRule::TwoWay { gamma }, risk)
            } else {
                let (alpha, beta) = matrix.thresholds()?;
                let r = partition_three_way(&classes, alpha, beta)?;
                let risk = decision_risk_three_way(&r, &matrix, cfg.epsilon)?;
                (r, LevelRule::ThreeWay { alpha, beta }, risk)
            };
            (classes, regions, rule, risk, sfnn.misclassified.len())
        };
        let entry = costs.accrue(m_count)?;

        let record = LevelRecord {
            level,
            active_size: active.len(),
            m: m_count,
            p_n: sorted(sfnn.positive),
            m_n: sorted(sfnn.misclassified),
            n_n: sorted(sfnn.negative),
            classes,
            p_l: regions.pos_instances(),
            b_l: regions.bnd_instances(),
            n_l: regions.neg_instances(),
            rule,
            risk,
            test_cost: entry.test_cost,
            delay_cost: entry.delay_cost,
            training,
        };
        pos.extend(record.p_n.iter().chain(&record.p_l).copied());
        neg.extend(record.n_n.iter().chain(&record.n_l).copied());
        active = record.b_l.clone();
        levels.push(record);
        if active.is_empty() {
            break;
        }
    }

    let ledger = RunLedger {
        levels,
        pos: sorted(pos),
        bnd: sorted(active),
        neg: sorted(neg),
    };
    Ok(RunOutput {
        network: net,
        ledger,
        policy,
        unit_costs,
    })
}

/// Stacks node parameters into one network; `b2` comes from the last node.
pub fn assemble(activation: ActivationKind, nodes: Vec<NodeParams>) -> Result<LayeredNetwork> {
    if nodes.is_empty() {
        return Err(Error::InvalidArgument("cannot assemble zero nodes".into()));
    }
    LayeredNetwork::from_nodes(activation, nodes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    pub p_pos: f64,
}

pub fn predict(net: &LayeredNetwork, ds: &Dataset, rows: &[usize]) -> Result<Vec<Prediction>> {
    rows.iter()
        .map(|&i| {
            let f = net.forward(ds.row(i))?;
            Ok(Prediction {
                label: f.label(),
                p_pos: f.p_pos,
            })
        })
        .collect()
}

/// Metrics of `net` on the given rows.
pub fn evaluate_rows(net: &LayeredNetwork, ds: &Dataset, rows: &[usize]) -> Result<(MetricsReport, Option<RocCurve>)> {
    let preds = predict(net, ds, rows)?;
    let truth: Vec<Label> = rows.iter().map(|&i| ds.label(i)).collect();
    let labels: Vec<Label> = preds.iter().map(|p| p.label).collect();
    let scores: Vec<f64> = preds.iter().map(|p| p.p_pos).collect();
    evaluate(&truth, &labels, &scores)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample (n-1) standard deviation; 0 for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("no values to summarize".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Ok(Self { mean, std })
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4}±{:.4}", self.mean, self.std)
    }
}

/// Runs `job` once per fold, `jobs` folds at a time, and returns the results
/// in fold order. The first failing fold (by index) determines the error.
pub fn for_each_fold<T, F>(plan: &FoldPlan, jobs: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &Split) -> Result<T> + Sync,
{
    let splits = (0..plan.k).map(|f| plan.split_for(f)).collect::<Result<Vec<_>>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<T>> = pool.install(|| splits.par_iter().enumerate().map(|(f, s)| job(f, s)).collect());
    results.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub sizes: (usize, usize, usize),
    pub hidden_nodes: usize,
    pub train: MetricsReport,
    pub test: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossvalSummary {
    pub test_accuracy: MeanStd,
    pub test_weighted_f1: MeanStd,
    /// Over folds whose test rows hold both classes.
    pub test_auc: Option<MeanStd>,
    pub train_accuracy: MeanStd,
    pub hidden_nodes: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossvalReport {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<FoldRecord>,
    pub summary: CrossvalSummary,
}

/// k-fold cross-validation. Folds come from the `folds` stream of the
/// configured seed; normalization is fitted on each fold's training rows.
pub fn crossval<F>(
    ds: &Dataset,
    cfg: &TrainConfig,
    k: usize,
    norm: Option<NormMode>,
    jobs: usize,
    fit: F,
) -> Result<CrossvalReport>
where
    F: Fn(&Dataset, &Split, &TrainConfig) -> Result<LayeredNetwork> + Sync,
{
    cfg.validate()?;
    let plan = make_folds(ds, k, &mut RngStream::new(cfg.seed, "folds"))?;
    let folds = for_each_fold(&plan, jobs, |fold, split| {
        let local = match norm {
            Some(mode) => ds.normalize_fitted(mode, &split.train)?,
            None => ds.clone(),
        };
        let net = fit(&local, split, cfg)?;
        Ok(FoldRecord {
            fold,
            sizes: split.sizes(),
            hidden_nodes: net.n_hidden(),
            train: evaluate_rows(&net, &local, &split.train)?.0,
            test: evaluate_rows(&net, &local, &split.test)?.0,
        })
    })?;
    let col = |f: &dyn Fn(&FoldRecord) -> f64| MeanStd::of(&folds.iter().map(f).collect::<Vec<_>>());
    let aucs: Vec<f64> = folds.iter().filter_map(|r| r.test.auc).collect();
    let summary = CrossvalSummary {
        test_accuracy: col(&|r| r.test.accuracy)?,
        test_weighted_f1: col(&|r| r.test.weighted_f1)?,
        test_auc: if aucs.is_empty() { None } else { Some(MeanStd::of(&aucs)?) },
        train_accuracy: col(&|r| r.train.accuracy)?,
        hidden_nodes: col(&|r| r.hidden_nodes as f64)?,
    };
    Ok(CrossvalReport {
        k,
        seed: cfg.seed,
        folds,
        summary,
    })
}
