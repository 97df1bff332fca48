//! K-means over entity states with a pluggable distance.
//!
//! Coincident states are merged into weighted points before clustering, which
//! leaves the objective unchanged and keeps mask clustering cheap when the
//! state space is discrete. Seeding is greedy k-means++ (several weighted
//! candidates per step, keeping the one that most reduces the potential).
//! Lloyd iterations run until the largest centroid shift drops below `1e-6`
//! or 300 iterations have passed. Empty clusters take the point farthest from
//! its own centroid among clusters that can spare one.

use std::collections::HashMap;

use rand::Rng as _;
use thiserror::Error;

use crate::graph::GraphNode;
use crate::metric::{distance, DistanceMetric, MetricError};
use crate::rng::rng_from_seed;
use crate::state::{MeanMask, State, StateKind};

pub const MAX_ITERATIONS: usize = 300;
pub const SHIFT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("at least one cluster is required")]
    ZeroClusters,
    #[error("{points} distinct points cannot fill {clusters} clusters")]
    TooFewPoints { points: usize, clusters: usize },
    #[error("states mix position and mask representations")]
    MixedRepresentations,
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Clone, Debug)]
pub struct Clustering {
    pub nodes: Vec<GraphNode>,
    /// Cluster index of every input state.
    pub assignment: Vec<usize>,
    /// Weighted sum of point-to-centroid distances under the metric.
    pub inertia: f64,
    pub iterations: usize,
}

struct Points<'a> {
    unique: Vec<&'a State>,
    weight: Vec<f64>,
    index_of: Vec<usize>,
}

fn dedupe(states: &[State]) -> Points<'_> {
    let mut map: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut unique = Vec::new();
    let mut weight = Vec::new();
    let mut index_of = Vec::with_capacity(states.len());
    for s in states {
        let id = *map.entry(s.fingerprint()).or_insert_with(|| {
            unique.push(s);
            weight.push(0.0);
            unique.len() - 1
        });
        weight[id] += 1.0;
        index_of.push(id);
    }
    Points {
        unique,
        weight,
        index_of,
    }
}

/// Number of distinct states, the upper bound on usable clusters.
pub fn distinct_count(states: &[State]) -> usize {
    dedupe(states).unique.len()
}

fn as_centroid(s: &State) -> State {
    match s {
        State::Mask(m) => State::MeanMask(MeanMask::from_bits(m)),
        other => other.clone(),
    }
}

fn seeding_weight(metric: DistanceMetric, d: f64) -> f64 {
    match metric {
        DistanceMetric::SquaredEuclidean => d,
        _ => d * d,
    }
}

fn nearest(metric: DistanceMetric, p: &State, centroids: &[State]) -> Result<(usize, f64), MetricError> {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = distance(metric, p, centroid)?;
        if d < best.1 {
            best = (c, d);
        }
    }
    Ok(best)
}

fn weighted_mean(points: &Points, members: &[usize], template: &State) -> State {
    let total: f64 = members.iter().map(|&i| points.weight[i]).sum();
    match template {
        State::Position(_) => {
            let mut acc = [0.0; 2];
            for &i in members {
                if let State::Position(p) = points.unique[i] {
                    acc[0] += points.weight[i] * p[0];
                    acc[1] += points.weight[i] * p[1];
                }
            }
            State::Position([acc[0] / total, acc[1] / total])
        }
        State::Mask(_) | State::MeanMask(_) => {
            let (w, h) = match template {
                State::Mask(m) => (m.width(), m.height()),
                State::MeanMask(m) => (m.width(), m.height()),
                State::Position(_) => unreachable!(),
            };
            let mut acc = vec![0.0; w * h];
            for &i in members {
                let wt = points.weight[i];
                match points.unique[i] {
                    State::Mask(m) => m.ones().for_each(|j| acc[j] += wt),
                    State::MeanMask(m) => {
                        acc.iter_mut().zip(m.values()).for_each(|(a, v)| *a += wt * v)
                    }
                    State::Position(_) => {}
                }
            }
            acc.iter_mut().for_each(|a| *a /= total);
            State::MeanMask(MeanMask::from_values(w, h, acc))
        }
    }
}

fn shift(a: &State, b: &State) -> f64 {
    a.dense()
        .iter()
        .zip(b.dense())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn seed_centroids(
    points: &Points,
    m: usize,
    metric: DistanceMetric,
    seed: u64,
) -> Result<Vec<State>, MetricError> {
    let mut rng = rng_from_seed(seed);
    let n = points.unique.len();
    let trials = 2 + (m as f64).ln().floor() as usize;
    let sample = |rng: &mut crate::rng::Rng, weights: &[f64]| -> Option<usize> {
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return None;
        }
        let mut u = rng.random::<f64>() * total;
        for (i, &w) in weights.iter().enumerate() {
            if u < w {
                return Some(i);
            }
            u -= w;
        }
        weights.iter().rposition(|&w| w > 0.0)
    };
    let first = sample(&mut rng, &points.weight).unwrap_or(0);
    let mut chosen = vec![first];
    let mut centroids = vec![as_centroid(points.unique[first])];
    let mut nearest_d: Vec<f64> = points
        .unique
        .iter()
        .map(|p| distance(metric, p, &centroids[0]))
        .collect::<Result<_, _>>()?;
    while centroids.len() < m {
        let weights: Vec<f64> = (0..n)
            .map(|i| points.weight[i] * seeding_weight(metric, nearest_d[i]))
            .collect();
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for _ in 0..trials {
            let Some(cand) = sample(&mut rng, &weights) else {
                break;
            };
            let c = as_centroid(points.unique[cand]);
            let mut updated = nearest_d.clone();
            for (i, p) in points.unique.iter().enumerate() {
                updated[i] = updated[i].min(distance(metric, p, &c)?);
            }
            let potential: f64 = (0..n)
                .map(|i| points.weight[i] * seeding_weight(metric, updated[i]))
                .sum();
            if best.as_ref().is_none_or(|b| potential < b.1) {
                best = Some((cand, potential, updated));
            }
        }
        let (cand, updated) = match best {
            Some((c, _, u)) => (c, u),
            None => {
                // Every remaining point sits at distance zero from a centroid.
                let c = (0..n).find(|i| !chosen.contains(i)).expect("distinct >= m");
                let cen = as_centroid(points.unique[c]);
                let mut u = nearest_d.clone();
                for (i, p) in points.unique.iter().enumerate() {
                    u[i] = u[i].min(distance(metric, p, &cen)?);
                }
                (c, u)
            }
        };
        chosen.push(cand);
        centroids.push(as_centroid(points.unique[cand]));
        nearest_d = updated;
    }
    Ok(centroids)
}

fn assign(
    points: &Points,
    centroids: &[State],
    metric: DistanceMetric,
) -> Result<(Vec<usize>, Vec<f64>), MetricError> {
    let mut labels = Vec::with_capacity(points.unique.len());
    let mut dists = Vec::with_capacity(points.unique.len());
    for p in &points.unique {
        let (c, d) = nearest(metric, p, centroids)?;
        labels.push(c);
        dists.push(d);
    }
    Ok((labels, dists))
}

fn fill_empty(labels: &mut [usize], dists: &mut [f64], m: usize) {
    let mut sizes = vec![0usize; m];
    labels.iter().for_each(|&c| sizes[c] += 1);
    for empty in 0..m {
        if sizes[empty] > 0 {
            continue;
        }
        let donor = (0..labels.len())
            .filter(|&i| sizes[labels[i]] >= 2)
            .fold(None::<usize>, |best, i| match best {
                Some(b) if dists[b] >= dists[i] => Some(b),
                _ => Some(i),
            });
        if let Some(i) = donor {
            sizes[labels[i]] -= 1;
            labels[i] = empty;
            dists[i] = 0.0;
            sizes[empty] = 1;
        }
    }
}

/// Partitions `states` into `m` clusters; deterministic given `seed`.
pub fn cluster(
    states: &[State],
    m: usize,
    metric: DistanceMetric,
    seed: u64,
) -> Result<Clustering, ClusterError> {
    if m == 0 {
        return Err(ClusterError::ZeroClusters);
    }
    if let Some(first) = states.first() {
        if states.iter().any(|s| s.kind() != first.kind()) {
            return Err(ClusterError::MixedRepresentations);
        }
        if metric == DistanceMetric::Iou && first.kind() == StateKind::Position {
            return Err(MetricError::IouNeedsMasks.into());
        }
    }
    let points = dedupe(states);
    if points.unique.len() < m {
        return Err(ClusterError::TooFewPoints {
            points: points.unique.len(),
            clusters: m,
        });
    }
    let mut centroids = seed_centroids(&points, m, metric, seed)?;
    let mut iterations = 0;
    let (mut labels, mut dists);
    loop {
        iterations += 1;
        (labels, dists) = assign(&points, &centroids, metric)?;
        fill_empty(&mut labels, &mut dists, m);
        let mut members = vec![Vec::new(); m];
        labels.iter().enumerate().for_each(|(i, &c)| members[c].push(i));
        let updated: Vec<State> = members
            .iter()
            .zip(&centroids)
            .map(|(mem, old)| {
                if mem.is_empty() {
                    old.clone()
                } else {
                    weighted_mean(&points, mem, old)
                }
            })
            .collect();
        let max_shift = updated
            .iter()
            .zip(&centroids)
            .map(|(a, b)| shift(a, b))
            .fold(0.0, f64::max);
        centroids = updated;
        if max_shift < SHIFT_TOLERANCE || iterations >= MAX_ITERATIONS {
            break;
        }
    }
    (labels, dists) = assign(&points, &centroids, metric)?;
    fill_empty(&mut labels, &mut dists, m);
    let mut counts = vec![0usize; m];
    let mut inertia = 0.0;
    for (i, &c) in labels.iter().enumerate() {
        counts[c] += points.weight[i] as usize;
        inertia += points.weight[i] * dists[i];
    }
    let nodes = centroids
        .into_iter()
        .zip(counts)
        .map(|(centroid, member_count)| GraphNode {
            centroid,
            member_count,
        })
        .collect();
    Ok(Clustering {
        nodes,
        assignment: points.index_of.iter().map(|&u| labels[u]).collect(),
        inertia,
        iterations,
    })
}
