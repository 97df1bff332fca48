//! Goal-conditioned action selection over a factorized transition graph.
//!
//! One step: perceive current and goal observations, match goal entities to
//! current entities by type, choose an unsatisfied goal entity, bind its
//! current and goal states to graph nodes and return the action stored on the
//! edge between them. Every failure falls back to a random action and is
//! counted.

use std::cmp::Ordering;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment;
use crate::env::{text_enum, Action, EnvConfig, Variant};
use crate::graph::TransitionGraph;
use crate::metric::{distance, DistanceMetric};
use crate::perception::{perceive, type_distance, EntitySet, PerceptionConfig};
use crate::raster::Raster;
use crate::rng::Rng;

/// Type vectors closer than this are treated as the same type.
const DUPLICATE_TYPE_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    #[error("goal entity set is empty")]
    EmptyGoal,
    #[error("current entity set is empty")]
    EmptyCurrent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    /// `(goal index, current index)` pairs, ordered by goal index.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_current: Vec<usize>,
    /// Goal entities left out when the goal has more entities than the
    /// current observation.
    pub unmatched_goal: Vec<usize>,
    pub total_cost: f64,
    /// Set when either side contains two entities of the same type, so the
    /// matching between them is arbitrary.
    pub degenerate: bool,
}

impl Alignment {
    pub fn current_for(&self, goal: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == goal).map(|p| p.1)
    }
}

fn has_duplicate_types(set: &EntitySet) -> bool {
    (0..set.len()).any(|i| {
        (i + 1..set.len()).any(|j| type_distance(&set[i].type_vec, &set[j].type_vec) < DUPLICATE_TYPE_EPS)
    })
}

/// Minimum-cost matching of goal entities to current entities under
/// Euclidean distance between type vectors.
pub fn align(current: &EntitySet, goal: &EntitySet) -> Result<Alignment, AlignError> {
    if goal.is_empty() {
        return Err(AlignError::EmptyGoal);
    }
    if current.is_empty() {
        return Err(AlignError::EmptyCurrent);
    }
    let cost: Vec<Vec<f64>> = goal
        .iter()
        .map(|g| current.iter().map(|c| type_distance(&g.type_vec, &c.type_vec)).collect())
        .collect();
    let matched = assignment::solve(&cost);
    let total_cost = assignment::total_cost(&cost, &matched);
    let pairs: Vec<(usize, usize)> = matched
        .iter()
        .enumerate()
        .filter_map(|(g, c)| c.map(|c| (g, c)))
        .collect();
    let mut used = vec![false; current.len()];
    pairs.iter().for_each(|&(_, c)| used[c] = true);
    Ok(Alignment {
        unmatched_current: (0..current.len()).filter(|&c| !used[c]).collect(),
        unmatched_goal: matched
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_none())
            .map(|(g, _)| g)
            .collect(),
        pairs,
        total_cost,
        degenerate: has_duplicate_types(current) || has_duplicate_types(goal),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Largest remaining distance first.
    Argmax,
    /// Sample proportionally to the remaining distance.
    Stochastic,
}

text_enum!(SelectionMode { Argmax => "argmax", Stochastic => "stochastic" });

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeAction {
    /// Pick at the perceived entity location and release at the target
    /// node's location.
    Retarget,
    /// Replay the action stored on the edge unchanged.
    Stored,
}

text_enum!(EdgeAction { Retarget => "retarget", Stored => "stored" });

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub selection: SelectionMode,
    /// Metric for the goal-distance used in constraint selection.
    pub metric: DistanceMetric,
    /// Constraints at or below this distance count as satisfied.
    pub satisfied_threshold: f64,
    /// Bindings farther than this fall back to a random action.
    pub bind_max_distance: Option<f64>,
    pub edge_action: EdgeAction,
    /// Workspace extent, for random fallback actions.
    pub extent: [f64; 2],
}

impl ControllerConfig {
    /// Defaults matching the environment: the satisfied threshold is the
    /// environment's placement threshold expressed in the selection metric.
    pub fn for_env(env: &EnvConfig, metric: DistanceMetric) -> Self {
        let satisfied_threshold = match (env.variant, metric) {
            (_, DistanceMetric::SquaredEuclidean) if env.variant == Variant::Table => {
                env.place_threshold * env.place_threshold
            }
            _ => env.place_threshold,
        };
        Self {
            selection: SelectionMode::Stochastic,
            metric,
            satisfied_threshold,
            bind_max_distance: None,
            edge_action: EdgeAction::Retarget,
            extent: env.extent(),
        }
    }
}

/// Index of the constraint to work on next, among `distances` above
/// `threshold`. `None` when every constraint is satisfied.
pub fn select_from_distances(
    distances: &[f64],
    threshold: f64,
    mode: SelectionMode,
    rng: &mut Rng,
) -> Option<usize> {
    let open: Vec<usize> = (0..distances.len()).filter(|&k| distances[k] > threshold).collect();
    if open.is_empty() {
        return None;
    }
    match mode {
        SelectionMode::Argmax => open
            .iter()
            .copied()
            .fold(None, |best: Option<usize>, k| match best {
                Some(b) if distances[b] >= distances[k] => Some(b),
                _ => Some(k),
            }),
        SelectionMode::Stochastic => {
            let total: f64 = open.iter().map(|&k| distances[k]).sum();
            let mut u = rng.random::<f64>() * total;
            for &k in &open {
                if u < distances[k] {
                    return Some(k);
                }
                u -= distances[k];
            }
            open.last().copied()
        }
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Chooses the goal entity to satisfy next. Candidates are visited in a
/// canonical order (by goal location, then type) so the choice depends neither
/// on the order perception emitted entities in nor on their colours.
pub fn select_constraint(
    current: &EntitySet,
    goal: &EntitySet,
    alignment: &Alignment,
    config: &ControllerConfig,
    rng: &mut Rng,
) -> Option<usize> {
    let mut pairs = alignment.pairs.clone();
    pairs.sort_by(|a, b| {
        lexicographic(&goal[a.0].location, &goal[b.0].location)
            .then_with(|| lexicographic(&goal[a.0].type_vec, &goal[b.0].type_vec))
            .then(a.0.cmp(&b.0))
    });
    let distances: Vec<f64> = pairs
        .iter()
        .map(|&(g, c)| distance(config.metric, &current[c].state, &goal[g].state).unwrap_or(f64::INFINITY))
        .collect();
    select_from_distances(&distances, config.satisfied_threshold, config.selection, rng).map(|k| pairs[k].0)
}

/// Uniform random action: pick anywhere in the workspace, displacement
/// uniform in `[-0.5, 0.5]^2`.
pub fn random_action(rng: &mut Rng, extent: [f64; 2]) -> Action {
    let w = [rng.random::<f64>() * extent[0], rng.random::<f64>() * extent[1]];
    let dw = [rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5];
    Action::new(w, dw)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackCause {
    MissingEdge,
    BindFar,
    CardinalityMismatch,
    NoConstraint,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Decision {
    Edge {
        goal_index: usize,
        current_index: usize,
        from: usize,
        to: usize,
        action: Action,
    },
    Fallback {
        cause: FallbackCause,
        action: Action,
    },
}

impl Decision {
    pub fn action(&self) -> Action {
        match *self {
            Decision::Edge { action, .. } | Decision::Fallback { action, .. } => action,
        }
    }

    pub fn is_fallback(&self) -> bool {
        matches!(self, Decision::Fallback { .. })
    }
}

/// Fallback counts by cause.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub missing_edge: u64,
    pub bind_far: u64,
    pub cardinality_mismatch: u64,
    pub no_constraint: u64,
    pub degenerate_alignment: u64,
    /// Set-graph baseline: no node holds the current or goal configuration.
    pub bind_fail: u64,
    /// Set-graph baseline: goal node unreachable.
    pub no_path: u64,
}

impl Diagnostics {
    pub fn record(&mut self, d: &Decision) {
        if let Decision::Fallback { cause, .. } = d {
            match cause {
                FallbackCause::MissingEdge => self.missing_edge += 1,
                FallbackCause::BindFar => self.bind_far += 1,
                FallbackCause::CardinalityMismatch => self.cardinality_mismatch += 1,
                FallbackCause::NoConstraint => self.no_constraint += 1,
            }
        }
    }

    pub fn merge(&mut self, other: &Diagnostics) {
        self.missing_edge += other.missing_edge;
        self.bind_far += other.bind_far;
        self.cardinality_mismatch += other.cardinality_mismatch;
        self.no_constraint += other.no_constraint;
        self.degenerate_alignment += other.degenerate_alignment;
        self.bind_fail += other.bind_fail;
        self.no_path += other.no_path;
    }

    /// Fallbacks caused by a missing edge or path.
    pub fn missing_edge_total(&self) -> u64 {
        self.missing_edge + self.no_path
    }

    /// Fallbacks caused by binding or perception failures.
    pub fn bind_total(&self) -> u64 {
        self.bind_far + self.cardinality_mismatch + self.bind_fail
    }
}

#[derive(Clone, Debug)]
pub struct Controller<'g> {
    pub graph: &'g TransitionGraph,
    pub perception: PerceptionConfig,
    pub config: ControllerConfig,
}

impl<'g> Controller<'g> {
    pub fn new(graph: &'g TransitionGraph, perception: PerceptionConfig, config: ControllerConfig) -> Self {
        Self {
            graph,
            perception,
            config,
        }
    }

    /// Perceives both observations and decides.
    pub fn select_action(&self, current: &Raster, goal: &Raster, rng: &mut Rng, diag: &mut Diagnostics) -> Action {
        let cur = perceive(current, &self.perception);
        let g = perceive(goal, &self.perception);
        let d = self.decide(&cur, &g, rng, diag);
        d.action()
    }

    /// Decision from already perceived entity sets; records fallbacks.
    pub fn decide(&self, current: &EntitySet, goal: &EntitySet, rng: &mut Rng, diag: &mut Diagnostics) -> Decision {
        let d = self.decide_inner(current, goal, rng, diag);
        diag.record(&d);
        d
    }

    fn fallback(&self, cause: FallbackCause, rng: &mut Rng) -> Decision {
        Decision::Fallback {
            cause,
            action: random_action(rng, self.config.extent),
        }
    }

    fn decide_inner(&self, current: &EntitySet, goal: &EntitySet, rng: &mut Rng, diag: &mut Diagnostics) -> Decision {
        let alignment = match align(current, goal) {
            Ok(a) => a,
            Err(AlignError::EmptyGoal) => return self.fallback(FallbackCause::NoConstraint, rng),
            Err(AlignError::EmptyCurrent) => return self.fallback(FallbackCause::CardinalityMismatch, rng),
        };
        if alignment.degenerate {
            diag.degenerate_alignment += 1;
        }
        let Some(g) = select_constraint(current, goal, &alignment, &self.config, rng) else {
            return self.fallback(FallbackCause::NoConstraint, rng);
        };
        let c = alignment.current_for(g).expect("selected constraints are matched");
        let (Ok(bi), Ok(bj)) = (self.graph.bind(&current[c].state), self.graph.bind(&goal[g].state)) else {
            return self.fallback(FallbackCause::BindFar, rng);
        };
        if let Some(max) = self.config.bind_max_distance {
            if bi.distance > max || bj.distance > max {
                return self.fallback(FallbackCause::BindFar, rng);
            }
        }
        let Some(stored) = self.graph.edge(bi.node, bj.node) else {
            return self.fallback(FallbackCause::MissingEdge, rng);
        };
        let action = match (self.config.edge_action, self.graph.node_location(bj.node)) {
            (EdgeAction::Retarget, Some(dest)) => Action::between(current[c].location, dest),
            _ => *stored,
        };
        Decision::Edge {
            goal_index: g,
            current_index: c,
            from: bi.node,
            to: bj.node,
            action,
        }
    }
}
