//! Comparison methods: random actions, shortest-path search over whole
//! entity-set configurations, and cross-entropy MPC over a rollout model
//! derived from the transition graph.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::buffer::ExperienceBuffer;
use crate::controller::{align, random_action, Diagnostics};
use crate::env::{dist, Action};
use crate::graph::{GraphError, TransitionGraph};
use crate::metric::{distance, DistanceMetric};
use crate::perception::{perceive, EntitySet, PerceptionConfig};
use crate::raster::Raster;
use crate::rng::Rng;
use crate::state::State;

/// Random baseline; same distribution as the controller's fallback.
pub fn random_policy(rng: &mut Rng, extent: [f64; 2]) -> Action {
    random_action(rng, extent)
}

/// Sorted multiset of the graph nodes the entities bind to.
pub fn canonical_key(set: &EntitySet, graph: &TransitionGraph) -> Result<Vec<usize>, GraphError> {
    let mut key = set
        .iter()
        .map(|e| graph.bind(&e.state).map(|b| b.node))
        .collect::<Result<Vec<_>, _>>()?;
    key.sort_unstable();
    Ok(key)
}

/// Graph over whole configurations: one node per distinct canonical key seen
/// in the buffer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SetGraph {
    pub nodes: BTreeMap<Vec<usize>, usize>,
    pub edges: BTreeMap<(usize, usize), Action>,
    adjacency: Vec<Vec<usize>>,
}

impl SetGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    fn node_id(&mut self, key: Vec<usize>) -> usize {
        let next = self.nodes.len();
        let id = *self.nodes.entry(key).or_insert(next);
        if id == next {
            self.adjacency.push(Vec::new());
        }
        id
    }

    pub fn insert(&mut self, from: Vec<usize>, to: Vec<usize>, action: Action) {
        let (u, v) = (self.node_id(from), self.node_id(to));
        if u == v {
            return;
        }
        if self.edges.insert((u, v), action).is_none() {
            self.adjacency[u].push(v);
            self.adjacency[u].sort_unstable();
        }
    }

    pub fn successors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    /// Unit-weight Dijkstra; returns the node path including both ends.
    /// Among equal-length paths the one through lower node ids wins.
    pub fn shortest_path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let n = self.nodes.len();
        let mut dist = vec![usize::MAX; n];
        let mut prev = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        dist[from] = 0;
        heap.push(Reverse((0usize, from)));
        while let Some(Reverse((d, u))) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            if u == to {
                break;
            }
            for &v in &self.adjacency[u] {
                if d + 1 < dist[v] {
                    dist[v] = d + 1;
                    prev[v] = u;
                    heap.push(Reverse((d + 1, v)));
                }
            }
        }
        if dist[to] == usize::MAX {
            return None;
        }
        let mut path = vec![to];
        while *path.last().unwrap() != from {
            path.push(prev[*path.last().unwrap()]);
        }
        path.reverse();
        Some(path)
    }
}

/// Builds the configuration graph, using `base` to discretize entity states.
pub fn nf_build(
    buffer: &ExperienceBuffer,
    perception: &PerceptionConfig,
    base: &TransitionGraph,
) -> Result<SetGraph, GraphError> {
    let keyed: Vec<Result<Vec<Vec<usize>>, GraphError>> = buffer
        .episodes
        .par_iter()
        .map(|ep| {
            ep.observations
                .iter()
                .map(|o| canonical_key(&perceive(o, perception), base))
                .collect()
        })
        .collect();
    let mut g = SetGraph::default();
    for (ep, keys) in buffer.episodes.iter().zip(keyed) {
        let keys = keys?;
        for (t, action) in ep.actions.iter().enumerate() {
            g.insert(keys[t].clone(), keys[t + 1].clone(), *action);
        }
    }
    if g.edges.is_empty() {
        return Err(GraphError::NoUsableTransitions);
    }
    Ok(g)
}

/// Planner state for the set-graph baseline: the graph plus the discretizer.
#[derive(Clone, Debug)]
pub struct NfPlanner<'g> {
    pub set_graph: &'g SetGraph,
    pub base: &'g TransitionGraph,
    pub perception: PerceptionConfig,
}

impl NfPlanner<'_> {
    pub fn select_action(&self, current: &Raster, goal: &Raster, rng: &mut Rng, diag: &mut Diagnostics) -> Action {
        let cur = perceive(current, &self.perception);
        let g = perceive(goal, &self.perception);
        self.decide(&cur, &g, rng, diag)
    }

    /// First action of a shortest path from the current configuration to the
    /// goal configuration, or a random action when either is unknown or no
    /// path exists.
    pub fn decide(&self, current: &EntitySet, goal: &EntitySet, rng: &mut Rng, diag: &mut Diagnostics) -> Action {
        let extent = self.base.extent;
        let lookup = |set: &EntitySet| {
            canonical_key(set, self.base)
                .ok()
                .and_then(|k| self.set_graph.nodes.get(&k).copied())
        };
        let (Some(u), Some(v)) = (lookup(current), lookup(goal)) else {
            diag.bind_fail += 1;
            return random_action(rng, extent);
        };
        match self.set_graph.shortest_path(u, v) {
            Some(path) if path.len() >= 2 => self.set_graph.edges[&(path[0], path[1])],
            Some(_) => {
                diag.no_constraint += 1;
                random_action(rng, extent)
            }
            None => {
                diag.no_path += 1;
                random_action(rng, extent)
            }
        }
    }
}

/// One-step dynamics over entity states driven by graph edges.
#[derive(Clone, Debug)]
pub struct RolloutModel<'g> {
    pub graph: &'g TransitionGraph,
    /// Largest pick-point distance at which an applied action counts as the
    /// action stored on an edge.
    pub action_match_tol: f64,
}

impl RolloutModel<'_> {
    /// Entity and edge target triggered by `action` from the given bound
    /// nodes: the nearest stored pick point within tolerance, then the
    /// nearest stored destination.
    fn matched_edge(&self, nodes: &[usize], action: &Action) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize, f64, f64)> = None;
        for (k, &i) in nodes.iter().enumerate() {
            for e in self.graph.outgoing(i) {
                let pick = dist(e.action.w, action.w);
                if pick > self.action_match_tol {
                    continue;
                }
                let dest = dist(e.action.destination(), action.destination());
                let better = match best {
                    None => true,
                    Some((_, _, bp, bd)) => pick < bp || (pick == bp && dest < bd),
                };
                if better {
                    best = Some((k, e.to, pick, dest));
                }
            }
        }
        best.map(|(k, j, _, _)| (k, j))
    }

    /// Predicted entity states after `action`: at most one entity changes,
    /// to the centroid of the edge's target node.
    pub fn rollout(&self, states: &[State], action: &Action) -> Result<Vec<State>, GraphError> {
        let nodes = states
            .iter()
            .map(|s| self.graph.bind(s).map(|b| b.node))
            .collect::<Result<Vec<_>, _>>()?;
        let mut next = states.to_vec();
        if let Some((k, j)) = self.matched_edge(&nodes, action) {
            next[k] = self.graph.nodes[j].centroid.clone();
        }
        Ok(next)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CemParams {
    pub iterations: usize,
    pub elite_ratio: f64,
    pub population: usize,
    pub init_std: f64,
    pub min_std: f64,
    pub max_horizon: usize,
}

impl Default for CemParams {
    fn default() -> Self {
        Self {
            iterations: 10,
            elite_ratio: 0.05,
            population: 250,
            init_std: 0.3,
            min_std: 1e-3,
            max_horizon: 5,
        }
    }
}

impl CemParams {
    pub fn elite_count(&self) -> usize {
        ((self.population as f64 * self.elite_ratio).floor() as usize).max(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CemResult {
    pub action: Action,
    /// Lowest cost among the elites after each iteration.
    pub best_costs: Vec<f64>,
}

/// Precomputed cost terms for one planning call.
struct CemProblem<'a> {
    model: &'a RolloutModel<'a>,
    start_nodes: Vec<usize>,
    /// Aligned (current index, cost if unmoved, cost per node).
    terms: Vec<(usize, f64, Vec<f64>)>,
    entity_count: usize,
}

impl CemProblem<'_> {
    fn cost(&self, plan: &[f64]) -> f64 {
        // None while an entity still holds its perceived state.
        let mut moved_to: Vec<Option<usize>> = vec![None; self.entity_count];
        let mut nodes = self.start_nodes.clone();
        for a in plan.chunks_exact(4) {
            let action = Action::from_array([a[0], a[1], a[2], a[3]]);
            if let Some((k, j)) = self.model.matched_edge(&nodes, &action) {
                moved_to[k] = Some(j);
                nodes[k] = j;
            }
        }
        self.terms
            .iter()
            .map(|(c, unmoved, per_node)| moved_to[*c].map_or(*unmoved, |j| per_node[j]))
            .sum()
    }
}

/// Sum over aligned entities of the squared distance between current and
/// goal state.
pub fn alignment_cost(current: &EntitySet, goal: &EntitySet) -> Option<f64> {
    let a = align(current, goal).ok()?;
    a.pairs
        .iter()
        .map(|&(g, c)| distance(DistanceMetric::SquaredEuclidean, &current[c].state, &goal[g].state).ok())
        .sum()
}

/// Cross-entropy planning over action sequences of length `horizon`; returns
/// the first action of the lowest-cost elite.
pub fn cem_plan(
    model: &RolloutModel,
    current: &EntitySet,
    goal: &EntitySet,
    params: &CemParams,
    horizon: usize,
    rng: &mut Rng,
) -> Option<CemResult> {
    let extent = model.graph.extent;
    let alignment = align(current, goal).ok()?;
    let start_nodes = current
        .iter()
        .map(|e| model.graph.bind(&e.state).map(|b| b.node))
        .collect::<Result<Vec<_>, _>>()
        .ok()?;
    let sq = |a: &State, b: &State| distance(DistanceMetric::SquaredEuclidean, a, b).unwrap_or(f64::INFINITY);
    let terms = alignment
        .pairs
        .iter()
        .map(|&(g, c)| {
            let per_node = model.graph.nodes.iter().map(|n| sq(&n.centroid, &goal[g].state)).collect();
            (c, sq(&current[c].state, &goal[g].state), per_node)
        })
        .collect();
    let problem = CemProblem {
        model,
        start_nodes,
        terms,
        entity_count: current.len(),
    };
    let dim = 4 * horizon.max(1);
    let mut mean: Vec<f64> = (0..dim)
        .map(|d| match d % 4 {
            0 => extent[0] / 2.0,
            1 => extent[1] / 2.0,
            _ => 0.0,
        })
        .collect();
    let mut std = vec![params.init_std; dim];
    let elites = params.elite_count().min(params.population);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut best_costs = Vec::with_capacity(params.iterations);
    for _ in 0..params.iterations {
        let mut samples: Vec<Vec<f64>> = (0..params.population)
            .map(|_| {
                (0..dim)
                    .map(|d| mean[d] + std[d] * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        if let Some((plan, _)) = &best {
            *samples.last_mut().unwrap() = plan.clone();
        }
        let costs: Vec<f64> = samples.par_iter().map(|s| problem.cost(s)).collect();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));
        let elite = &order[..elites];
        for d in 0..dim {
            let m = elite.iter().map(|&i| samples[i][d]).sum::<f64>() / elites as f64;
            let v = elite.iter().map(|&i| (samples[i][d] - m).powi(2)).sum::<f64>() / elites as f64;
            mean[d] = m;
            std[d] = v.sqrt().max(params.min_std);
        }
        best = Some((samples[order[0]].clone(), costs[order[0]]));
        best_costs.push(costs[order[0]]);
    }
    let (plan, _) = best?;
    Some(CemResult {
        action: Action::from_array([plan[0], plan[1], plan[2], plan[3]]),
        best_costs,
    })
}

/// MPC baseline: replans with CEM every step.
#[derive(Clone, Debug)]
pub struct MpcPlanner<'g> {
    pub model: RolloutModel<'g>,
    pub perception: PerceptionConfig,
    pub params: CemParams,
}

impl MpcPlanner<'_> {
    pub fn decide(
        &self,
        current: &EntitySet,
        goal: &EntitySet,
        remaining: usize,
        rng: &mut Rng,
        diag: &mut Diagnostics,
    ) -> Action {
        let horizon = remaining.clamp(1, self.params.max_horizon);
        match cem_plan(&self.model, current, goal, &self.params, horizon, rng) {
            Some(r) => r.action,
            None => {
                diag.cardinality_mismatch += 1;
                random_action(rng, self.model.graph.extent)
            }
        }
    }
}
