//! Factorized transition graph: nodes are clusters of single-entity states,
//! edges carry the action that moved an entity from one cluster to another.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buffer::ExperienceBuffer;
use crate::controller::align;
use crate::env::{Action, EnvConfig, Variant};
use crate::kmeans::{cluster, distinct_count, ClusterError};
use crate::metric::{distance, DistanceMetric, MetricError};
use crate::perception::{perceive, EntitySet, PerceptionConfig, StateRepr};
use crate::state::State;

pub const GRAPH_FORMAT: &str = "rearrange-transition-graph";
pub const GRAPH_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("no usable transitions")]
    NoUsableTransitions,
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("entity sets are empty")]
    EmptySets,
    #[error("entity sets differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("graph file: {0}")]
    Format(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub centroid: State,
    pub member_count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub from: usize,
    pub to: usize,
    pub action: Action,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Isolation {
    pub index: usize,
    /// Largest change minus the second largest.
    pub margin: f64,
}

/// Index of the entity whose state changed most between two index-aligned
/// state lists. Ties go to the lowest index.
pub fn isolate(before: &[State], after: &[State], metric: DistanceMetric) -> Result<Isolation, GraphError> {
    if before.is_empty() {
        return Err(GraphError::EmptySets);
    }
    if before.len() != after.len() {
        return Err(GraphError::LengthMismatch(before.len(), after.len()));
    }
    let mut best = (0, f64::NEG_INFINITY);
    let mut second = f64::NEG_INFINITY;
    for (k, (b, a)) in before.iter().zip(after).enumerate() {
        let d = distance(metric, b, a)?;
        if d > best.1 {
            second = best.1;
            best = (k, d);
        } else if d > second {
            second = d;
        }
    }
    let margin = if second.is_finite() { best.1 - second } else { best.1 };
    Ok(Isolation {
        index: best.0,
        margin,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Binding {
    pub node: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the source buffer file bytes.
    pub buffer_digest: String,
    /// Environment config text the buffer was generated with.
    pub buffer_config: String,
    pub clusters_requested: usize,
    pub clusters: usize,
    pub cluster_metric: DistanceMetric,
    pub seed: u64,
    /// Fully resolved run configuration, when built through the CLI.
    #[serde(default)]
    pub run_config: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionGraph {
    pub nodes: Vec<GraphNode>,
    edges: BTreeMap<(usize, usize), Action>,
    /// Bind metric.
    pub metric: DistanceMetric,
    pub isolate_metric: DistanceMetric,
    pub repr: StateRepr,
    /// Workspace extent used to map mask centroids to positions.
    pub extent: [f64; 2],
    pub provenance: Option<Provenance>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    format: String,
    version: u32,
    metric: DistanceMetric,
    isolate_metric: DistanceMetric,
    repr: StateRepr,
    extent: [f64; 2],
    nodes: Vec<GraphNode>,
    edges: Vec<GraphEdge>,
    provenance: Option<Provenance>,
}

impl TransitionGraph {
    pub fn new(nodes: Vec<GraphNode>, metric: DistanceMetric, repr: StateRepr, extent: [f64; 2]) -> Self {
        Self {
            nodes,
            edges: BTreeMap::new(),
            metric,
            isolate_metric: metric,
            repr,
            extent,
            provenance: None,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Stores `action` on edge `(from, to)`, replacing any earlier action.
    /// Self-loops are ignored; returns whether an edge was written.
    pub fn insert_edge(&mut self, from: usize, to: usize, action: Action) -> bool {
        assert!(from < self.nodes.len() && to < self.nodes.len(), "edge endpoint out of range");
        if from == to {
            return false;
        }
        self.edges.insert((from, to), action);
        true
    }

    pub fn remove_edge(&mut self, from: usize, to: usize) -> Option<Action> {
        self.edges.remove(&(from, to))
    }

    pub fn edge(&self, from: usize, to: usize) -> Option<&Action> {
        self.edges.get(&(from, to))
    }

    /// Edges ordered by `(from, to)`.
    pub fn edges(&self) -> impl Iterator<Item = GraphEdge> + '_ {
        self.edges.iter().map(|(&(from, to), &action)| GraphEdge { from, to, action })
    }

    pub fn outgoing(&self, from: usize) -> impl Iterator<Item = GraphEdge> + '_ {
        self.edges
            .range((from, 0)..(from + 1, 0))
            .map(|(&(from, to), &action)| GraphEdge { from, to, action })
    }

    /// Nearest node under the graph metric; ties go to the lowest index.
    pub fn bind(&self, state: &State) -> Result<Binding, GraphError> {
        if self.nodes.is_empty() {
            return Err(GraphError::EmptyGraph);
        }
        let mut best = Binding {
            node: 0,
            distance: f64::INFINITY,
        };
        for (i, n) in self.nodes.iter().enumerate() {
            let d = distance(self.metric, state, &n.centroid)?;
            if d < best.distance {
                best = Binding { node: i, distance: d };
            }
        }
        Ok(best)
    }

    /// Workspace position a node stands for: the centroid position, or the
    /// centre of mass of a mean mask.
    pub fn node_location(&self, node: usize) -> Option<[f64; 2]> {
        self.nodes.get(node)?.centroid.location(self.extent)
    }

    pub fn to_json(&self) -> String {
        let file = GraphFile {
            format: GRAPH_FORMAT.to_string(),
            version: GRAPH_VERSION,
            metric: self.metric,
            isolate_metric: self.isolate_metric,
            repr: self.repr,
            extent: self.extent,
            nodes: self.nodes.clone(),
            edges: self.edges().collect(),
            provenance: self.provenance.clone(),
        };
        serde_json::to_string(&file).expect("graph serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let file: GraphFile = serde_json::from_str(text).map_err(|e| GraphError::Format(e.to_string()))?;
        if file.format != GRAPH_FORMAT {
            return Err(GraphError::Format(format!("unexpected format tag {:?}", file.format)));
        }
        if file.version != GRAPH_VERSION {
            return Err(GraphError::Format(format!("unsupported version {}", file.version)));
        }
        let n = file.nodes.len();
        let mut edges = BTreeMap::new();
        for e in file.edges {
            if e.from >= n || e.to >= n || e.from == e.to {
                return Err(GraphError::Format(format!("invalid edge {} -> {}", e.from, e.to)));
            }
            edges.insert((e.from, e.to), e.action);
        }
        if file.nodes.iter().any(|node| node.centroid.kind() != file.nodes[0].centroid.kind()) {
            return Err(GraphError::Format("nodes mix state representations".into()));
        }
        Ok(Self {
            nodes: file.nodes,
            edges,
            metric: file.metric,
            isolate_metric: file.isolate_metric,
            repr: file.repr,
            extent: file.extent,
            provenance: file.provenance,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildConfig {
    pub clusters: usize,
    pub isolate_metric: DistanceMetric,
    pub cluster_metric: DistanceMetric,
    pub bind_metric: DistanceMetric,
    pub seed: u64,
}

impl BuildConfig {
    /// Defaults per variant: masks with cosine/iou/cosine and one cluster per
    /// cell on the grid; positions with squared Euclidean and 45 clusters on
    /// the table.
    pub fn for_env(cfg: &EnvConfig) -> Self {
        match cfg.variant {
            Variant::Grid => Self {
                clusters: cfg.cell_count(),
                isolate_metric: DistanceMetric::Cosine,
                cluster_metric: DistanceMetric::Iou,
                bind_metric: DistanceMetric::Cosine,
                seed: 0,
            },
            Variant::Table => Self {
                clusters: 45,
                isolate_metric: DistanceMetric::SquaredEuclidean,
                cluster_metric: DistanceMetric::SquaredEuclidean,
                bind_metric: DistanceMetric::SquaredEuclidean,
                seed: 0,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BuildReport {
    pub transitions: usize,
    /// Transitions whose two entity sets differ in size.
    pub skipped_cardinality: usize,
    /// Transitions whose endpoints bind to the same node.
    pub dropped_self_loops: usize,
    pub clusters_requested: usize,
    pub clusters: usize,
    pub edges: usize,
    pub membership: Vec<usize>,
    pub inertia: f64,
}

/// The moved entity's state before and after one transition, plus its action.
#[derive(Clone, Debug)]
pub struct IsolatedTransition {
    pub before: State,
    pub after: State,
    pub action: Action,
}

/// Perceives one transition, aligns the two sets by type and isolates the
/// moved entity. `None` on cardinality mismatch or empty sets.
pub fn isolate_transition(
    before: &EntitySet,
    after: &EntitySet,
    action: &Action,
    metric: DistanceMetric,
) -> Result<Option<IsolatedTransition>, GraphError> {
    if before.is_empty() || before.len() != after.len() {
        return Ok(None);
    }
    let Ok(alignment) = align(after, before) else {
        return Ok(None);
    };
    let sb: Vec<State> = alignment.pairs.iter().map(|&(b, _)| before[b].state.clone()).collect();
    let sa: Vec<State> = alignment.pairs.iter().map(|&(_, a)| after[a].state.clone()).collect();
    let iso = isolate(&sb, &sa, metric)?;
    Ok(Some(IsolatedTransition {
        before: sb[iso.index].clone(),
        after: sa[iso.index].clone(),
        action: *action,
    }))
}

/// Builds the factorized graph from a buffer.
///
/// The requested cluster count is clamped to the number of distinct moved
/// states when the buffer has fewer.
pub fn build_graph(
    buffer: &ExperienceBuffer,
    perception: &PerceptionConfig,
    config: &BuildConfig,
) -> Result<(TransitionGraph, BuildReport), GraphError> {
    let per_episode: Vec<Result<(Vec<IsolatedTransition>, usize), GraphError>> = buffer
        .episodes
        .par_iter()
        .map(|ep| {
            let sets: Vec<EntitySet> = ep.observations.iter().map(|o| perceive(o, perception)).collect();
            let mut kept = Vec::new();
            let mut skipped = 0;
            for (t, action) in ep.actions.iter().enumerate() {
                match isolate_transition(&sets[t], &sets[t + 1], action, config.isolate_metric)? {
                    Some(tr) => kept.push(tr),
                    None => skipped += 1,
                }
            }
            Ok((kept, skipped))
        })
        .collect();
    let mut transitions = Vec::new();
    let mut skipped_cardinality = 0;
    for r in per_episode {
        let (kept, skipped) = r?;
        transitions.extend(kept);
        skipped_cardinality += skipped;
    }
    if transitions.is_empty() {
        return Err(GraphError::NoUsableTransitions);
    }
    let pooled: Vec<State> = transitions
        .iter()
        .flat_map(|t| [t.before.clone(), t.after.clone()])
        .collect();
    let clusters = config.clusters.min(distinct_count(&pooled));
    let clustering = cluster(&pooled, clusters, config.cluster_metric, config.seed)?;
    let repr = match pooled[0] {
        State::Position(_) => StateRepr::Position,
        _ => StateRepr::Mask,
    };
    let mut graph = TransitionGraph::new(clustering.nodes, config.bind_metric, repr, perception.extent);
    graph.isolate_metric = config.isolate_metric;
    let bound: Vec<Result<(usize, usize), GraphError>> = transitions
        .par_iter()
        .map(|t| Ok((graph.bind(&t.before)?.node, graph.bind(&t.after)?.node)))
        .collect();
    let mut dropped_self_loops = 0;
    for (t, b) in transitions.iter().zip(bound) {
        let (i, j) = b?;
        if !graph.insert_edge(i, j, t.action) {
            dropped_self_loops += 1;
        }
    }
    if graph.edge_count() == 0 {
        return Err(GraphError::NoUsableTransitions);
    }
    graph.provenance = Some(Provenance {
        buffer_digest: buffer.digest(),
        buffer_config: buffer.env_config.to_text(),
        clusters_requested: config.clusters,
        clusters,
        cluster_metric: config.cluster_metric,
        seed: config.seed,
        run_config: None,
    });
    let report = BuildReport {
        transitions: transitions.len() + skipped_cardinality,
        skipped_cardinality,
        dropped_self_loops,
        clusters_requested: config.clusters,
        clusters,
        edges: graph.edge_count(),
        membership: graph.nodes.iter().map(|n| n.member_count).collect(),
        inertia: clustering.inertia,
    };
    Ok((graph, report))
}
