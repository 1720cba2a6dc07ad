//! Single-hidden-layer feedforward network grown one hidden node at a time.
//!
//! The network has two output units; unit 0 scores the positive class and
//! unit 1 the negative class. The positive-class probability is the softmax
//! of the two scores, `σ(s0 - s1)`, and the predicted label is the argmax
//! with ties going to the positive class.
//!
//! Each hidden node owns `(w1, b1, w2, b2)`. Assembling the network stacks
//! the `w1` rows and `b1` entries, places each `w2` as a column of `W2`, and
//! uses the **last** node's `b2` as the output bias.
//!
//! Training minimizes the mean focal loss plus an L2 penalty over the
//! trainable parameters, using mini-batch Adam with early stopping.

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Label};
use crate::error::{Error, Result};
use crate::numerics::{activate, activate_derivative, sigmoid, ActivationKind, RngStream};

/// Bounds applied to the probability before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeParams {
    pub w1: Vec<f64>,
    pub b1: f64,
    pub w2: [f64; 2],
    pub b2: [f64; 2],
}

impl NodeParams {
    pub fn zeros(m: usize) -> Self {
        Self {
            w1: vec![0.0; m],
            b1: 0.0,
            w2: [0.0; 2],
            b2: [0.0; 2],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().chain([&self.b1]).chain(&self.w2).chain(&self.b2).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitDist {
    Uniform,
    Normal,
}

impl std::str::FromStr for InitDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(InitDist::Uniform),
            "normal" => Ok(InitDist::Normal),
            other => Err(Error::InvalidArgument(format!("unknown init distribution '{other}'"))),
        }
    }
}

impl std::fmt::Display for InitDist {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InitDist::Uniform => "uniform",
            InitDist::Normal => "normal",
        })
    }
}

/// Draws a fresh node. Uniform entries lie in `[-1/√m, 1/√m)`, normal entries
/// have standard deviation `1/√m`. Draw order: w1, b1, w2, b2.
pub fn init_node(m: usize, dist: InitDist, stream: &mut RngStream) -> Result<NodeParams> {
    if m == 0 {
        return Err(Error::InvalidArgument("a node needs at least one input".into()));
    }
    let scale = 1.0 / (m as f64).sqrt();
    let mut draw = || match dist {
        InitDist::Uniform => stream.next_uniform(-scale, scale),
        InitDist::Normal => stream.next_normal(0.0, scale),
    };
    let w1 = (0..m).map(|_| draw()).collect::<Result<Vec<_>>>()?;
    let b1 = draw()?;
    let w2 = [draw()?, draw()?];
    let b2 = [draw()?, draw()?];
    Ok(NodeParams { w1, b1, w2, b2 })
}

/// Stacked matrices of a network: `w1` is t×m, `w2` is 2×t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assembled {
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: [Vec<f64>; 2],
    pub b2: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forward {
    pub scores: [f64; 2],
    pub p_pos: f64,
}

impl Forward {
    pub fn label(&self) -> Label {
        if self.scores[0] >= self.scores[1] {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredNetwork {
    pub activation: ActivationKind,
    nodes: Vec<NodeParams>,
}

impl LayeredNetwork {
    pub fn new(activation: ActivationKind) -> Self {
        Self {
            activation,
            nodes: Vec::new(),
        }
    }

    pub fn from_nodes(activation: ActivationKind, nodes: Vec<NodeParams>) -> Result<Self> {
        let mut net = Self::new(activation);
        for node in nodes {
            net.push(node)?;
        }
        Ok(net)
    }

    /// Rebuilds a network from stacked matrices. Every node receives the
    /// shared `b2`, so the last-node rule reproduces it.
    pub fn from_assembled(activation: ActivationKind, asm: &Assembled) -> Result<Self> {
        let t = asm.w1.len();
        if asm.b1.len() != t || asm.w2[0].len() != t || asm.w2[1].len() != t {
            return Err(Error::DimensionMismatch {
                expected: t,
                found: asm.b1.len().min(asm.w2[0].len()).min(asm.w2[1].len()),
            });
        }
        let nodes = (0..t)
            .map(|i| NodeParams {
                w1: asm.w1[i].clone(),
                b1: asm.b1[i],
                w2: [asm.w2[0][i], asm.w2[1][i]],
                b2: asm.b2,
            })
            .collect();
        Self::from_nodes(activation, nodes)
    }

    pub fn push(&mut self, node: NodeParams) -> Result<()> {
        if let Some(first) = self.nodes.first() {
            if first.w1.len() != node.w1.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.w1.len(),
                    found: node.w1.len(),
                });
            }
        }
        if node.w1.is_empty() {
            return Err(Error::InvalidArgument("node has no input weights".into()));
        }
        self.nodes.push(node);
        Ok(())
    }

    pub fn nodes(&self) -> &[NodeParams] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [NodeParams] {
        &mut self.nodes
    }

    pub fn n_hidden(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.nodes.first().map_or(0, |n| n.w1.len())
    }

    pub fn output_bias(&self) -> [f64; 2] {
        self.nodes.last().map_or([0.0; 2], |n| n.b2)
    }

    pub fn assembled(&self) -> Assembled {
        Assembled {
            w1: self.nodes.iter().map(|n| n.w1.clone()).collect(),
            b1: self.nodes.iter().map(|n| n.b1).collect(),
            w2: [
                self.nodes.iter().map(|n| n.w2[0]).collect(),
                self.nodes.iter().map(|n| n.w2[1]).collect(),
            ],
            b2: self.output_bias(),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Forward> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidArgument("network has no hidden nodes".into()));
        }
        if x.len() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_inputs(),
                found: x.len(),
            });
        }
        let mut scores = self.output_bias();
        for node in &self.nodes {
            let h = activate(self.activation, dot(&node.w1, x) + node.b1);
            scores[0] += node.w2[0] * h;
            scores[1] += node.w2[1] * h;
        }
        Ok(Forward {
            scores,
            p_pos: sigmoid(scores[0] - scores[1]),
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        Ok(self.forward(x)?.label())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Optimizer and loss settings shared by every training routine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    /// Focal balance weight on the positive class. `None` uses the fraction of
    /// negative labels in the set being trained.
    pub delta: Option<f64>,
    pub theta: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            delta: None,
            theta: 2.0,
            lambda: 0.1,
            learning_rate: 0.1,
            rho1: 0.9,
            rho2: 0.999,
            tau: 1e-8,
            batch_size: 512,
            max_epochs: 100,
            patience: 5,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return bad("delta must lie in (0, 1)");
            }
        }
        if !(self.theta >= 0.0) {
            return bad("theta must be non-negative");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be non-negative");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(self.rho1 > 0.0 && self.rho1 < 1.0 && self.rho2 > 0.0 && self.rho2 < 1.0) {
            return bad("rho1 and rho2 must lie in (0, 1)");
        }
        if !(self.tau > 0.0) {
            return bad("tau must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be positive");
        }
        Ok(())
    }

    fn delta_for(&self, ds: &Dataset, idx: &[usize]) -> f64 {
        self.delta.unwrap_or_else(|| {
            let neg = idx.iter().filter(|&&i| !ds.label(i).is_positive()).count();
            neg as f64 / idx.len().max(1) as f64
        })
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Focal loss of one prediction.
pub fn focal_loss(p_pos: f64, y: Label, delta: f64, theta: f64) -> f64 {
    let p = clamp_prob(p_pos);
    match y {
        Label::Positive => -delta * (1.0 - p).powf(theta) * p.ln(),
        Label::Negative => -(1.0 - delta) * p.powf(theta) * (1.0 - p).ln(),
    }
}

/// Derivative of [`focal_loss`] with respect to the logit `z = s0 - s1`,
/// where `p = σ(z)`.
pub fn focal_loss_dlogit(p_pos: f64, y: Label, delta: f64, theta: f64) -> f64 {
    let p = clamp_prob(p_pos);
    let q = 1.0 - p;
    match y {
        Label::Positive => -delta * (q.powf(theta + 1.0) - theta * p * q.powf(theta) * p.ln()),
        Label::Negative => -(1.0 - delta) * (theta * q * p.powf(theta) * q.ln() - p.powf(theta + 1.0)),
    }
}

/// Mean loss plus `λ/2 · ‖params‖²`.
pub fn regularized_cost(losses: &[f64], params: &[f64], lambda: f64) -> f64 {
    let mean = if losses.is_empty() {
        0.0
    } else {
        losses.iter().sum::<f64>() / losses.len() as f64
    };
    mean + 0.5 * lambda * params.iter().map(|v| v * v).sum::<f64>()
}

/// First and second moment estimates for a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub v: Vec<f64>,
    pub s: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            v: vec![0.0; len],
            s: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64], hyper: &TrainHyper) -> Result<()> {
    if params.len() != grads.len() || state.v.len() != params.len() || state.s.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            found: if grads.len() != params.len() { grads.len() } else { state.v.len() },
        });
    }
    state.step += 1;
    let h = state.step as i32;
    let c1 = 1.0 - hyper.rho1.powi(h);
    let c2 = 1.0 - hyper.rho2.powi(h);
    for (((p, &g), v), s) in params.iter_mut().zip(grads).zip(&mut state.v).zip(&mut state.s) {
        *v = hyper.rho1 * *v + (1.0 - hyper.rho1) * g;
        *s = hyper.rho2 * *s + (1.0 - hyper.rho2) * g * g;
        let v_hat = *v / c1;
        let s_hat = *s / c2;
        *p -= hyper.learning_rate * v_hat / (s_hat.sqrt() + hyper.tau);
    }
    Ok(())
}

/// Which parameters a training routine may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    /// The last node's `w1, b1, w2` and the output bias; earlier nodes are frozen.
    NewestNode,
    /// Every node's `w1, b1, w2` and the output bias.
    AllNodes,
}

impl Scope {
    fn first_node(self, net: &LayeredNetwork) -> usize {
        match self {
            Scope::NewestNode => net.n_hidden() - 1,
            Scope::AllNodes => 0,
        }
    }
}

/// Trainable parameters in a fixed order: for each node in scope
/// `w1..., b1, w2[0], w2[1]`, then the output bias `b2[0], b2[1]`.
pub fn flatten(net: &LayeredNetwork, scope: Scope) -> Vec<f64> {
    let mut out = Vec::new();
    for node in &net.nodes[scope.first_node(net)..] {
        out.extend_from_slice(&node.w1);
        out.push(node.b1);
        out.extend_from_slice(&node.w2);
    }
    out.extend_from_slice(&net.output_bias());
    out
}

pub fn unflatten(net: &mut LayeredNetwork, scope: Scope, flat: &[f64]) {
    let first = scope.first_node(net);
    let mut it = flat.iter().copied();
    for node in &mut net.nodes[first..] {
        for w in node.w1.iter_mut() {
            *w = it.next().expect("flat vector too short");
        }
        node.b1 = it.next().expect("flat vector too short");
        node.w2 = [it.next().expect("flat vector too short"), it.next().expect("flat vector too short")];
    }
    let b2 = [it.next().expect("flat vector too short"), it.next().expect("flat vector too short")];
    net.nodes.last_mut().expect("non-empty network").b2 = b2;
    debug_assert!(it.next().is_none());
}

/// Regularized cost over `idx` and its gradient with respect to
/// [`flatten`]`(net, scope)`.
pub fn cost_and_gradient(
    net: &LayeredNetwork,
    scope: Scope,
    ds: &Dataset,
    idx: &[usize],
    hyper: &TrainHyper,
    delta: f64,
) -> Result<(f64, Vec<f64>)> {
    let params = flatten(net, scope);
    let mut grad = vec![0.0; params.len()];
    let first = scope.first_node(net);
    let m = net.n_inputs();
    let stride = m + 3;
    let b2_off = params.len() - 2;
    let mut loss_sum = 0.0;
    let mut pre = vec![0.0; net.n_hidden()];
    for &i in idx {
        let x = ds.row(i);
        if x.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: x.len() });
        }
        let y = ds.label(i);
        let mut scores = net.output_bias();
        for (k, node) in net.nodes.iter().enumerate() {
            pre[k] = dot(&node.w1, x) + node.b1;
            let h = activate(net.activation, pre[k]);
            scores[0] += node.w2[0] * h;
            scores[1] += node.w2[1] * h;
        }
        let p = sigmoid(scores[0] - scores[1]);
        loss_sum += focal_loss(p, y, delta, hyper.theta);
        let g = focal_loss_dlogit(p, y, delta, hyper.theta);
        grad[b2_off] += g;
        grad[b2_off + 1] -= g;
        for (k, node) in net.nodes.iter().enumerate().skip(first) {
            let off = (k - first) * stride;
            let h = activate(net.activation, pre[k]);
            grad[off + m + 1] += g * h;
            grad[off + m + 2] -= g * h;
            let da = g * (node.w2[0] - node.w2[1]) * activate_derivative(net.activation, pre[k]);
            for (gw, xv) in grad[off..off + m].iter_mut().zip(x) {
                *gw += da * xv;
            }
            grad[off + m] += da;
        }
    }
    let n = idx.len().max(1) as f64;
    for (g, p) in grad.iter_mut().zip(&params) {
        *g = *g / n + hyper.lambda * p;
    }
    let mean_loss = loss_sum / n;
    let penalty = 0.5 * hyper.lambda * params.iter().map(|v| v * v).sum::<f64>();
    Ok((mean_loss + penalty, grad))
}

fn instance_losses(net: &LayeredNetwork, ds: &Dataset, idx: &[usize], hyper: &TrainHyper, delta: f64) -> Vec<f64> {
    idx.iter()
        .map(|&i| {
            let f = net.forward(ds.row(i)).expect("dimensions checked by caller");
            focal_loss(f.p_pos, ds.label(i), delta, hyper.theta)
        })
        .collect()
}

fn evaluate_cost(net: &LayeredNetwork, scope: Scope, ds: &Dataset, idx: &[usize], hyper: &TrainHyper, delta: f64) -> f64 {
    regularized_cost(&instance_losses(net, ds, idx, hyper, delta), &flatten(net, scope), hyper.lambda)
}

/// Held-out cost: the mean focal loss without the weight penalty, balanced
/// on the held-out labels.
fn evaluate_validation(net: &LayeredNetwork, ds: &Dataset, idx: &[usize], hyper: &TrainHyper, delta: f64) -> f64 {
    regularized_cost(&instance_losses(net, ds, idx, hyper, delta), &[], 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_cost: f64,
    /// Cost used for checkpoint selection: unpenalized validation loss when a
    /// validation set is available, otherwise the training cost.
    pub monitor_cost: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub delta: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// Epoch 0 is the starting point before any update.
    pub history: Vec<EpochRecord>,
}

/// Mini-batch Adam over `train_idx`, keeping the parameters with the lowest
/// monitored cost. Stops after `patience` epochs without improvement.
pub fn train_network(
    net: &mut LayeredNetwork,
    scope: Scope,
    ds: &Dataset,
    train_idx: &[usize],
    val_idx: &[usize],
    hyper: &TrainHyper,
    stream: &mut RngStream,
) -> Result<TrainReport> {
    hyper.validate()?;
    if train_idx.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty instance set".into()));
    }
    if net.n_hidden() == 0 {
        return Err(Error::InvalidArgument("network has no hidden nodes".into()));
    }
    if ds.n_features() != net.n_inputs() {
        return Err(Error::DimensionMismatch {
            expected: net.n_inputs(),
            found: ds.n_features(),
        });
    }
    let delta = hyper.delta_for(ds, train_idx);
    let val_delta = hyper.delta_for(ds, val_idx);
    let monitor = |net: &LayeredNetwork, train_cost: f64| {
        if val_idx.is_empty() {
            train_cost
        } else {
            evaluate_validation(net, ds, val_idx, hyper, val_delta)
        }
    };

    let train_cost = evaluate_cost(net, scope, ds, train_idx, hyper, delta);
    let mut best_cost = monitor(net, train_cost);
    let mut best_params = flatten(net, scope);
    let mut history = vec![EpochRecord {
        epoch: 0,
        train_cost,
        monitor_cost: best_cost,
        improved: true,
    }];
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut params = best_params.clone();
    let mut adam = AdamState::new(params.len());
    let mut order = train_idx.to_vec();
    let mut epochs_run = 0;

    for epoch in 1..=hyper.max_epochs {
        stream.shuffle(&mut order);
        for batch in order.chunks(hyper.batch_size) {
            let (_, grad) = cost_and_gradient(net, scope, ds, batch, hyper, delta)?;
            adam_step(&mut adam, &mut params, &grad, hyper)?;
            unflatten(net, scope, &params);
        }
        epochs_run = epoch;
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Convergence(format!("non-finite parameters after epoch {epoch}")));
        }
        let train_cost = evaluate_cost(net, scope, ds, train_idx, hyper, delta);
        let monitor_cost = monitor(net, train_cost);
        let improved = monitor_cost < best_cost;
        history.push(EpochRecord {
            epoch,
            train_cost,
            monitor_cost,
            improved,
        });
        if improved {
            best_cost = monitor_cost;
            best_params.clone_from(&params);
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= hyper.patience {
                break;
            }
        }
    }
    unflatten(net, scope, &best_params);
    Ok(TrainReport {
        delta,
        epochs_run,
        best_epoch,
        history,
    })
}

/// Trains `fresh` as the newest node on top of the frozen network and
/// returns its optimized parameters.
pub fn train_node(
    ds: &Dataset,
    active: &[usize],
    frozen: &LayeredNetwork,
    fresh: NodeParams,
    hyper: &TrainHyper,
    val: &[usize],
    stream: &mut RngStream,
) -> Result<(NodeParams, TrainReport)> {
    if active.is_empty() {
        return Err(Error::InvalidArgument("active set is empty".into()));
    }
    let mut net = frozen.clone();
    net.push(fresh)?;
    let report = train_network(&mut net, Scope::NewestNode, ds, active, val, hyper, stream)?;
    let node = net.nodes.pop().expect("pushed above");
    Ok((node, report))
}

/// Outcome of running the network over a set of instances.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SfnnSplit {
    /// Correctly predicted positives.
    pub positive: Vec<usize>,
    pub misclassified: Vec<usize>,
    /// Correctly predicted negatives.
    pub negative: Vec<usize>,
}

pub fn classify_split(net: &LayeredNetwork, ds: &Dataset, instances: &[usize]) -> Result<SfnnSplit> {
    let mut out = SfnnSplit::default();
    for &i in instances {
        let predicted = net.predict(ds.row(i))?;
        let truth = ds.label(i);
        match (predicted == truth, truth) {
            (true, Label::Positive) => out.positive.push(i),
            (true, Label::Negative) => out.negative.push(i),
            (false, _) => out.misclassified.push(i),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy_dataset() -> Dataset {
        let rows = vec![
            vec![0.7415, 0.5407, 0.5795, 0.9009],
            vec![0.6844, 0.3210, 0.0471, 0.3700],
            vec![0.7718, 0.0912, 0.4874, 0.5308],
            vec![0.0818, 0.4263, 0.0354, 0.0621],
            vec![0.5596, 0.4643, 0.3585, 0.3189],
            vec![0.6397, 0.6535, 0.7739, 0.6809],
            vec![0.7425, 0.0989, 0.7429, 0.4131],
            vec![0.9419, 0.5958, 0.4474, 0.7536],
            vec![0.4992, 0.2212, 0.9525, 0.4176],
            vec![0.2990, 0.4796, 0.1559, 0.7456],
        ];
        let labels = [2, 1, 1, 1, 2, 1, 1, 2, 1, 2]
            .iter()
            .map(|&d| if d == 1 { Label::Positive } else { Label::Negative })
            .collect();
        Dataset::from_rows(rows, labels).unwrap()
    }

    fn level1_node() -> NodeParams {
        NodeParams {
            w1: vec![0.8115, -1.0612, 0.3465, 0.1514],
            b1: 0.1139,
            w2: [0.2019, 0.0860],
            b2: [0.1110, 0.1177],
        }
    }

    #[test]
    fn init_shapes_ranges_and_determinism() {
        let a = init_node(4, InitDist::Uniform, &mut RngStream::new(0, "init")).unwrap();
        let b = init_node(4, InitDist::Uniform, &mut RngStream::new(0, "init")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.w1.len(), 4);
        let bound = 0.5;
        assert!(a.w1.iter().chain([&a.b1]).chain(&a.w2).chain(&a.b2).all(|v| (-bound..bound).contains(v)));
        let n = init_node(9, InitDist::Normal, &mut RngStream::new(0, "init")).unwrap();
        assert!(n.is_finite());
        assert!(init_node(0, InitDist::Uniform, &mut RngStream::new(0, "init")).is_err());
    }

    #[test]
    fn level1_fixture_predictions() {
        let ds = toy_dataset();
        let net = LayeredNetwork::from_nodes(ActivationKind::Selu, vec![level1_node()]).unwrap();
        let labels: Vec<u8> = (0..6)
            .map(|i| if net.predict(ds.row(i)).unwrap().is_positive() { 1 } else { 2 })
            .collect();
        assert_eq!(labels, vec![1, 1, 1, 2, 1, 1]);
    }

    #[test]
    fn level1_fixture_split() {
        let ds = toy_dataset();
        let net = LayeredNetwork::from_nodes(ActivationKind::Selu, vec![level1_node()]).unwrap();
        let split = classify_split(&net, &ds, &[0, 1, 2, 3, 4, 5]).unwrap();
        assert_eq!(split.positive, vec![1, 2, 5]);
        assert_eq!(split.misclassified, vec![0, 3, 4]);
        assert!(split.negative.is_empty());
    }

    #[test]
    fn zero_network_ties_to_positive() {
        let net = LayeredNetwork::from_nodes(ActivationKind::Relu, vec![NodeParams::zeros(3)]).unwrap();
        let f = net.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(f.scores, [0.0, 0.0]);
        assert_eq!(f.p_pos, 0.5);
        assert_eq!(f.label(), Label::Positive);
    }

    #[test]
    fn forward_rejects_bad_dimensions() {
        let net = LayeredNetwork::from_nodes(ActivationKind::Relu, vec![NodeParams::zeros(3)]).unwrap();
        assert!(net.forward(&[1.0]).is_err());
        assert!(LayeredNetwork::new(ActivationKind::Relu).forward(&[1.0]).is_err());
        let mut net = net;
        assert!(net.push(NodeParams::zeros(2)).is_err());
    }

    #[test]
    fn appending_keeps_first_preactivation() {
        let x = [0.3, -0.2, 0.9, 0.1];
        let mut net = LayeredNetwork::from_nodes(ActivationKind::Selu, vec![level1_node()]).unwrap();
        let before = dot(&net.assembled().w1[0], &x) + net.assembled().b1[0];
        net.push(init_node(4, InitDist::Uniform, &mut RngStream::new(1, "n")).unwrap()).unwrap();
        let after = dot(&net.assembled().w1[0], &x) + net.assembled().b1[0];
        assert_eq!(before, after);
    }

    #[test]
    fn assembled_forward_equals_node_sum() {
        let mut s = RngStream::new(8, "asm");
        for kind in ActivationKind::ALL {
            let nodes: Vec<NodeParams> = (0..4).map(|_| init_node(5, InitDist::Normal, &mut s).unwrap()).collect();
            let net = LayeredNetwork::from_nodes(kind, nodes.clone()).unwrap();
            let x: Vec<f64> = (0..5).map(|_| s.next_uniform(-1.0, 1.0).unwrap()).collect();
            let mut expect = nodes.last().unwrap().b2;
            for n in &nodes {
                let h = activate(kind, dot(&n.w1, &x) + n.b1);
                expect[0] += n.w2[0] * h;
                expect[1] += n.w2[1] * h;
            }
            let got = net.forward(&x).unwrap().scores;
            assert!((got[0] - expect[0]).abs() <= 1e-12 && (got[1] - expect[1]).abs() <= 1e-12);
            let rebuilt = LayeredNetwork::from_assembled(kind, &net.assembled()).unwrap();
            assert_eq!(rebuilt.forward(&x).unwrap().scores, got);
        }
    }

    #[test]
    fn focal_loss_reference_values() {
        let ln2 = std::f64::consts::LN_2;
        assert!((focal_loss(0.5, Label::Positive, 0.5, 0.0) - 0.5 * ln2).abs() < 1e-15);
        assert!((focal_loss(0.5, Label::Positive, 0.5, 2.0) - 0.125 * ln2).abs() < 1e-15);
        assert!(focal_loss(1.0 - 1e-12, Label::Positive, 0.5, 2.0) < 1e-20);
        assert!(focal_loss(0.0, Label::Positive, 0.5, 2.0).is_finite());
        assert!(focal_loss(0.3, Label::Negative, 0.2, 2.0) >= 0.0);
    }

    #[test]
    fn focal_reduces_to_balanced_cross_entropy() {
        let mut s = RngStream::new(4, "bce");
        for _ in 0..100 {
            let p = s.next_uniform(1e-6, 1.0 - 1e-6).unwrap();
            assert!((focal_loss(p, Label::Positive, 0.5, 0.0) - (-0.5 * p.ln())).abs() < 1e-14);
            assert!((focal_loss(p, Label::Negative, 0.5, 0.0) - (-0.5 * (1.0 - p).ln())).abs() < 1e-14);
        }
    }

    #[test]
    fn focal_logit_derivative_matches_differences() {
        let mut s = RngStream::new(5, "dl");
        let h = 1e-6;
        for _ in 0..200 {
            let z = s.next_uniform(-6.0, 6.0).unwrap();
            let theta = s.next_uniform(0.0, 3.0).unwrap();
            let delta = s.next_uniform(0.05, 0.95).unwrap();
            for y in [Label::Positive, Label::Negative] {
                let f = |z: f64| focal_loss(sigmoid(z), y, delta, theta);
                let fd = (f(z + h) - f(z - h)) / (2.0 * h);
                let an = focal_loss_dlogit(sigmoid(z), y, delta, theta);
                assert!((fd - an).abs() < 1e-7, "z={z} theta={theta}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn regularized_cost_cases() {
        assert_eq!(regularized_cost(&[1.0, 3.0], &[5.0, 5.0], 0.0), 2.0);
        assert_eq!(regularized_cost(&[1.0], &[0.0; 8], 0.7), 1.0);
        assert_eq!(regularized_cost(&[], &[1.0; 4], 2.0), 4.0);
    }

    #[test]
    fn adam_single_step_by_hand() {
        let hyper = TrainHyper::default();
        let mut state = AdamState::new(1);
        let mut p = [0.0];
        adam_step(&mut state, &mut p, &[1.0], &hyper).unwrap();
        assert!((state.v[0] - 0.1).abs() < 1e-15);
        assert!((state.s[0] - 0.001).abs() < 1e-15);
        assert!((p[0] - (-0.1 / (1.0 + 1e-8))).abs() < 1e-12);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let hyper = TrainHyper::default();
        let mut state = AdamState::new(3);
        let mut p = [0.5, -1.0, 2.0];
        for _ in 0..5 {
            adam_step(&mut state, &mut p, &[0.0; 3], &hyper).unwrap();
        }
        assert_eq!(p, [0.5, -1.0, 2.0]);
        assert!(adam_step(&mut state, &mut p, &[0.0; 2], &hyper).is_err());
    }

    #[test]
    fn adam_steady_gradient_step_approaches_learning_rate() {
        let hyper = TrainHyper::default();
        let mut state = AdamState::new(1);
        let mut p = [0.0];
        let mut last = 0.0;
        for _ in 0..5000 {
            let before = p[0];
            adam_step(&mut state, &mut p, &[0.3], &hyper).unwrap();
            last = before - p[0];
        }
        assert!((last - hyper.learning_rate).abs() < 1e-6, "{last}");
    }

    #[test]
    fn adam_is_shape_agnostic() {
        let hyper = TrainHyper::default();
        let grads = [[0.3, -1.0, 2.0, 0.5], [0.1, 0.1, -0.4, 0.9]];
        let mut whole = AdamState::new(4);
        let mut p = [1.0, 2.0, 3.0, 4.0];
        let mut left = AdamState::new(2);
        let mut right = AdamState::new(2);
        let mut pl = [1.0, 2.0];
        let mut pr = [3.0, 4.0];
        for g in grads {
            adam_step(&mut whole, &mut p, &g, &hyper).unwrap();
            adam_step(&mut left, &mut pl, &g[..2], &hyper).unwrap();
            adam_step(&mut right, &mut pr, &g[2..], &hyper).unwrap();
        }
        assert_eq!(p[..2], pl);
        assert_eq!(p[2..], pr);
    }

    #[test]
    fn flatten_round_trip() {
        let mut s = RngStream::new(1, "f");
        let nodes: Vec<NodeParams> = (0..3).map(|_| init_node(2, InitDist::Uniform, &mut s).unwrap()).collect();
        let mut net = LayeredNetwork::from_nodes(ActivationKind::Tanh, nodes).unwrap();
        for scope in [Scope::NewestNode, Scope::AllNodes] {
            let flat = flatten(&net, scope);
            let expected_len = match scope {
                Scope::NewestNode => 2 + 3 + 2,
                Scope::AllNodes => 3 * 5 + 2,
            };
            assert_eq!(flat.len(), expected_len);
            let before = net.clone();
            unflatten(&mut net, scope, &flat);
            assert_eq!(before, net);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let ds = toy_dataset();
        let idx = [0, 1, 2, 3, 4, 5];
        let mut s = RngStream::new(4, "grad");
        let hyper = TrainHyper {
            lambda: 0.1,
            ..TrainHyper::default()
        };
        for kind in [ActivationKind::Tanh, ActivationKind::Sigmoid, ActivationKind::Swish] {
            let nodes: Vec<NodeParams> = (0..3).map(|_| init_node(4, InitDist::Normal, &mut s).unwrap()).collect();
            let net = LayeredNetwork::from_nodes(kind, nodes).unwrap();
            for scope in [Scope::NewestNode, Scope::AllNodes] {
                let (_, grad) = cost_and_gradient(&net, scope, &ds, &idx, &hyper, 0.4).unwrap();
                let base = flatten(&net, scope);
                for j in 0..base.len() {
                    let at = |v: f64| {
                        let mut p = base.clone();
                        p[j] = v;
                        let mut n = net.clone();
                        unflatten(&mut n, scope, &p);
                        cost_and_gradient(&n, scope, &ds, &idx, &hyper, 0.4).unwrap().0
                    };
                    let fd = (at(base[j] + 1e-6) - at(base[j] - 1e-6)) / 2e-6;
                    assert!((fd - grad[j]).abs() <= 1e-6 * fd.abs().max(1e-2), "{kind} {j}: {fd} vs {}", grad[j]);
                }
            }
        }
    }

    #[test]
    fn zero_epochs_returns_fresh() {
        let ds = toy_dataset();
        let frozen = LayeredNetwork::new(ActivationKind::Selu);
        let fresh = init_node(4, InitDist::Uniform, &mut RngStream::new(0, "n")).unwrap();
        let hyper = TrainHyper {
            max_epochs: 0,
            ..TrainHyper::default()
        };
        let (node, report) = train_node(&ds, &[0, 1, 2], &frozen, fresh.clone(), &hyper, &[], &mut RngStream::new(0, "t")).unwrap();
        assert_eq!(node, fresh);
        assert_eq!(report.epochs_run, 0);
    }

    #[test]
    fn empty_active_set_rejected() {
        let ds = toy_dataset();
        let fresh = init_node(4, InitDist::Uniform, &mut RngStream::new(0, "n")).unwrap();
        let r = train_node(&ds, &[], &LayeredNetwork::new(ActivationKind::Selu), fresh, &TrainHyper::default(), &[], &mut RngStream::new(0, "t"));
        assert!(r.is_err());
    }

    #[test]
    fn training_is_deterministic_and_freezes_history() {
        let ds = toy_dataset();
        let frozen = LayeredNetwork::from_nodes(ActivationKind::Selu, vec![level1_node()]).unwrap();
        let fresh = init_node(4, InitDist::Uniform, &mut RngStream::new(0, "n")).unwrap();
        let run = || {
            train_node(&ds, &[0, 3, 4], &frozen, fresh.clone(), &TrainHyper::default(), &[6, 7], &mut RngStream::new(2, "t")).unwrap()
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        // checkpoints only ever improve the monitored cost
        let kept: Vec<f64> = ra.history.iter().filter(|r| r.improved).map(|r| r.monitor_cost).collect();
        assert!(kept.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(frozen.nodes()[0], level1_node());
    }

    #[test]
    fn training_cost_falls_without_validation_set() {
        let ds = toy_dataset();
        let fresh = init_node(4, InitDist::Normal, &mut RngStream::new(3, "n")).unwrap();
        let hyper = TrainHyper {
            learning_rate: 0.05,
            lambda: 0.01,
            ..TrainHyper::default()
        };
        let (_, report) = train_node(&ds, &[0, 1, 2, 3, 4, 5], &LayeredNetwork::new(ActivationKind::Tanh), fresh, &hyper, &[], &mut RngStream::new(3, "t")).unwrap();
        let kept: Vec<f64> = report.history.iter().filter(|r| r.improved).map(|r| r.train_cost).collect();
        assert!(kept.len() > 1);
        assert!(kept.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn hyper_validation() {
        assert!(TrainHyper::default().validate().is_ok());
        let bad = [
            TrainHyper { delta: Some(1.0), ..TrainHyper::default() },
            TrainHyper { rho1: 1.0, ..TrainHyper::default() },
            TrainHyper { tau: 0.0, ..TrainHyper::default() },
            TrainHyper { batch_size: 0, ..TrainHyper::default() },
            TrainHyper { lambda: -0.1, ..TrainHyper::default() },
        ];
        for h in bad {
            assert!(h.validate().is_err());
        }
    }
}
