//! k-means++ discretization and equivalence classes.
//!
//! Numeric rows are clustered and every cluster becomes one categorical
//! value, so rows in the same cluster form one equivalence class. Each class
//! carries the fraction of its members that are positive.

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

pub const DEFAULT_MAX_ITERATIONS: usize = 100;

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest center; ties go to the lowest index.
pub fn nearest_center(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = squared_distance(point, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn count_distinct(points: &[Vec<f64>]) -> usize {
    let mut keys: Vec<Vec<u64>> = points
        .iter()
        .map(|p| p.iter().map(|v| (v + 0.0).to_bits()).collect())
        .collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

fn check_points(points: &[Vec<f64>], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let Some(first) = points.first() else {
        return Err(Error::InvalidArgument("cannot cluster an empty point set".into()));
    };
    if let Some(bad) = points.iter().find(|p| p.len() != first.len()) {
        return Err(Error::DimensionMismatch {
            expected: first.len(),
            found: bad.len(),
        });
    }
    let distinct = count_distinct(points);
    if k > distinct {
        return Err(Error::InvalidArgument(format!(
            "k={k} exceeds the {distinct} distinct points available"
        )));
    }
    Ok(())
}

/// D²-weighted seeding. The first center is a uniformly chosen point; each
/// further center is drawn by roulette with probability proportional to the
/// squared distance to the nearest already chosen center.
pub fn kmeanspp_seed(points: &[Vec<f64>], k: usize, stream: &mut RngStream) -> Result<Vec<Vec<f64>>> {
    check_points(points, k)?;
    let first = stream.next_index(points.len());
    let mut centers = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let target = stream.next_unit() * total;
        let mut acc = 0.0;
        // fall back to the last positive-weight point if rounding overshoots
        let mut chosen = d2.iter().rposition(|&w| w > 0.0).expect("k <= distinct points");
        for (i, &w) in d2.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            if target < acc {
                chosen = i;
                break;
            }
        }
        let center = points[chosen].clone();
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(p, &center));
        }
        centers.push(center);
    }
    Ok(centers)
}

/// Result of clustering: every row is assigned to its nearest center and
/// no cluster is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub k: usize,
    pub centers: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Within-cluster sum of squared distances to the returned centers.
    pub sse: f64,
    /// SSE after each assignment step of the winning Lloyd run.
    pub sse_trace: Vec<f64>,
}

fn assign_all(points: &[Vec<f64>], centers: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut sse = 0.0;
    let assignments = points
        .iter()
        .map(|p| {
            let (c, d) = nearest_center(p, centers);
            sse += d;
            c
        })
        .collect();
    (assignments, sse)
}

/// Moves each empty cluster's center onto the point farthest from its own
/// center, then reassigns. Returns false if it could not fill every cluster.
fn repair_empty(points: &[Vec<f64>], centers: &mut [Vec<f64>], assignments: &mut Vec<usize>, sse: &mut f64) -> bool {
    for _ in 0..=points.len() {
        let mut counts = vec![0usize; centers.len()];
        for &a in assignments.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return true;
        };
        let (far, dist) = points
            .iter()
            .enumerate()
            .map(|(i, p)| (i, squared_distance(p, &centers[assignments[i]])))
            .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if dist <= 0.0 {
            return false;
        }
        centers[empty] = points[far].clone();
        let (a, s) = assign_all(points, centers);
        *assignments = a;
        *sse = s;
    }
    false
}

fn means(points: &[Vec<f64>], assignments: &[usize], centers: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = points[0].len();
    let mut sums = vec![vec![0.0; m]; centers.len()];
    let mut counts = vec![0usize; centers.len()];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(p) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .zip(centers)
        .map(|((s, c), old)| {
            if c == 0 {
                old.clone()
            } else {
                s.into_iter().map(|v| v / c as f64).collect()
            }
        })
        .collect()
}

/// Lloyd iterations from the given centers until the assignment stops
/// changing or `max_iterations` updates have run.
pub fn lloyd(points: &[Vec<f64>], init: Vec<Vec<f64>>, max_iterations: usize) -> Result<Clustering> {
    check_points(points, init.len())?;
    let k = init.len();
    let mut centers = init;
    let (mut assignments, mut sse) = assign_all(points, &centers);
    if !repair_empty(points, &mut centers, &mut assignments, &mut sse) {
        return Err(Error::InvalidArgument("could not populate every cluster".into()));
    }
    let mut trace = vec![sse];
    for _ in 0..max_iterations {
        centers = means(points, &assignments, &centers);
        let (mut next, mut next_sse) = assign_all(points, &centers);
        if !repair_empty(points, &mut centers, &mut next, &mut next_sse) {
            return Err(Error::InvalidArgument("could not populate every cluster".into()));
        }
        trace.push(next_sse);
        let stable = next == assignments;
        assignments = next;
        sse = next_sse;
        if stable {
            break;
        }
    }
    Ok(Clustering {
        k,
        centers,
        assignments,
        sse,
        sse_trace: trace,
    })
}

/// k-means with `restarts` independent k-means++ seedings; the run with the
/// lowest SSE wins (earliest on ties). Each restart draws from its own
/// derived stream.
pub fn kmeans_cluster_with(points: &[Vec<f64>], k: usize, restarts: usize, stream: &mut RngStream) -> Result<Clustering> {
    check_points(points, k)?;
    let mut best: Option<Clustering> = None;
    for r in 0..restarts.max(1) {
        let mut sub = stream.derive(&format!("restart-{r}"));
        let init = kmeanspp_seed(points, k, &mut sub)?;
        let run = lloyd(points, init, DEFAULT_MAX_ITERATIONS)?;
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    // keep the parent stream moving so successive calls differ
    stream.next_u64();
    Ok(best.expect("at least one restart"))
}

/// Single-seeding k-means (one k-means++ draw followed by Lloyd).
pub fn kmeans_cluster(points: &[Vec<f64>], k: usize, stream: &mut RngStream) -> Result<Clustering> {
    check_points(points, k)?;
    let init = kmeanspp_seed(points, k, stream)?;
    lloyd(points, init, DEFAULT_MAX_ITERATIONS)
}

/// Groups identical feature vectors; the group id is the order of first
/// appearance. Used when rows are treated as already categorical.
pub fn identical_row_groups(points: &[Vec<f64>]) -> Vec<usize> {
    let mut keys: Vec<Vec<u64>> = Vec::new();
    points
        .iter()
        .map(|p| {
            let key: Vec<u64> = p.iter().map(|v| (v + 0.0).to_bits()).collect();
            match keys.iter().position(|k| *k == key) {
                Some(id) => id,
                None => {
                    keys.push(key);
                    keys.len() - 1
                }
            }
        })
        .collect()
}

/// Instances sharing one discretized feature vector. `members` are positions
/// in the input slice (callers map them back to row ids).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceClass {
    pub members: Vec<usize>,
    pub positives: usize,
    /// Conditional probability of the positive label, `positives / members`.
    pub p: f64,
}

impl EquivalenceClass {
    pub fn new(members: Vec<usize>, positives: usize) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::InvalidArgument("equivalence class cannot be empty".into()));
        }
        if positives > members.len() {
            return Err(Error::InvalidArgument("more positives than members".into()));
        }
        let p = positives as f64 / members.len() as f64;
        Ok(Self { members, positives, p })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// One class per occupied cluster id, ordered by cluster id.
pub fn build_equivalence_classes(assignments: &[usize], labels: &[Label]) -> Result<Vec<EquivalenceClass>> {
    if assignments.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: assignments.len(),
            found: labels.len(),
        });
    }
    let groups = assignments.iter().copied().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); groups];
    let mut positives = vec![0usize; groups];
    for (i, (&a, label)) in assignments.iter().zip(labels).enumerate() {
        members[a].push(i);
        if label.is_positive() {
            positives[a] += 1;
        }
    }
    members
        .into_iter()
        .zip(positives)
        .filter(|(m, _)| !m.is_empty())
        .map(|(m, p)| EquivalenceClass::new(m, p))
        .collect()
}
