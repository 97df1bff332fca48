//! Raster to entity-set extraction.
//!
//! The reference extractor labels 4-connected components of identical
//! non-black colour. Each component becomes one entity whose type is its
//! mean colour followed by four Hu moment invariants of its pixel support,
//! and whose state is either its centroid in workspace units or its binary
//! mask, depending on the configured representation.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::controller::align;
use crate::env::{text_enum, EnvConfig, Variant};
use crate::graph::isolate;
use crate::metric::{distance, DistanceMetric};
use crate::raster::Raster;
use crate::state::{pixel_to_workspace, BitMask, State};

/// Length of an entity type vector: RGB plus four shape invariants.
pub const TYPE_DIM: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateRepr {
    Position,
    Mask,
}

text_enum!(StateRepr { Position => "position", Mask => "mask" });

impl StateRepr {
    pub fn default_for(variant: Variant) -> Self {
        match variant {
            Variant::Grid => StateRepr::Mask,
            Variant::Table => StateRepr::Position,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptionConfig {
    pub extent: [f64; 2],
    pub repr: StateRepr,
}

impl PerceptionConfig {
    pub fn for_env(cfg: &EnvConfig) -> Self {
        Self {
            extent: cfg.extent(),
            repr: StateRepr::default_for(cfg.variant),
        }
    }

    pub fn with_repr(mut self, repr: StateRepr) -> Self {
        self.repr = repr;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    /// Action-invariant appearance descriptor.
    pub type_vec: Vec<f64>,
    /// Action-dependent state.
    pub state: State,
    /// Centroid in workspace units, kept for action targeting regardless of
    /// the state representation.
    pub location: [f64; 2],
}

/// Entities explaining one observation. Order carries no meaning.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EntitySet {
    pub entities: Vec<Entity>,
}

impl EntitySet {
    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Entity> {
        self.entities.iter()
    }
}

impl std::ops::Index<usize> for EntitySet {
    type Output = Entity;
    fn index(&self, i: usize) -> &Entity {
        &self.entities[i]
    }
}

impl FromIterator<Entity> for EntitySet {
    fn from_iter<I: IntoIterator<Item = Entity>>(iter: I) -> Self {
        Self {
            entities: iter.into_iter().collect(),
        }
    }
}

fn hu_invariants(pixels: &[(usize, usize)]) -> [f64; 4] {
    let n = pixels.len() as f64;
    let (mx, my) = pixels
        .iter()
        .fold((0.0, 0.0), |(sx, sy), &(x, y)| (sx + x as f64, sy + y as f64));
    let (mx, my) = (mx / n, my / n);
    let mut mu = [[0.0f64; 4]; 4];
    for &(x, y) in pixels {
        let (dx, dy) = (x as f64 - mx, y as f64 - my);
        for (p, row) in mu.iter_mut().enumerate() {
            for (q, m) in row.iter_mut().enumerate() {
                if p + q >= 2 && p + q <= 3 {
                    *m += dx.powi(p as i32) * dy.powi(q as i32);
                }
            }
        }
    }
    let eta = |p: usize, q: usize| mu[p][q] / n.powf(1.0 + (p + q) as f64 / 2.0);
    let (n20, n02, n11) = (eta(2, 0), eta(0, 2), eta(1, 1));
    let (n30, n03, n21, n12) = (eta(3, 0), eta(0, 3), eta(2, 1), eta(1, 2));
    [
        n20 + n02,
        (n20 - n02).powi(2) + 4.0 * n11 * n11,
        (n30 - 3.0 * n12).powi(2) + (3.0 * n21 - n03).powi(2),
        (n30 + n12).powi(2) + (n21 + n03).powi(2),
    ]
}

/// Extracts one entity per 4-connected component of identical colour.
pub fn perceive(image: &Raster, config: &PerceptionConfig) -> EntitySet {
    let (w, h) = (image.width(), image.height());
    let mut seen = vec![false; w * h];
    let mut entities = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if seen[start] {
            continue;
        }
        let color = image.get(start % w, start / w);
        if color == [0, 0, 0] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(idx) = queue.pop_front() {
            let (x, y) = (idx % w, idx / w);
            pixels.push((x, y));
            let mut visit = |nx: usize, ny: usize| {
                let ni = ny * w + nx;
                if !seen[ni] && image.get(nx, ny) == color {
                    seen[ni] = true;
                    queue.push_back(ni);
                }
            };
            if x > 0 {
                visit(x - 1, y);
            }
            if x + 1 < w {
                visit(x + 1, y);
            }
            if y > 0 {
                visit(x, y - 1);
            }
            if y + 1 < h {
                visit(x, y + 1);
            }
        }
        let n = pixels.len() as f64;
        let (sx, sy) = pixels
            .iter()
            .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x as f64, b + y as f64));
        let location = pixel_to_workspace([sx / n, sy / n], w, h, config.extent);
        let mut type_vec: Vec<f64> = color.iter().map(|&c| c as f64 / 255.0).collect();
        type_vec.extend(hu_invariants(&pixels));
        let state = match config.repr {
            StateRepr::Position => State::Position(location),
            StateRepr::Mask => {
                let mut m = BitMask::new(w, h);
                for &(x, y) in &pixels {
                    m.set(y * w + x);
                }
                State::Mask(m)
            }
        };
        entities.push(Entity {
            type_vec,
            state,
            location,
        });
    }
    EntitySet { entities }
}

pub fn type_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// How well one perceived transition satisfies the entity-filter criteria:
/// a uniquely identified moved entity, unchanged types, and unchanged states
/// for everything else.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub before_count: usize,
    pub after_count: usize,
    pub cardinality_mismatch: bool,
    /// Index into `before` of the entity whose state changed most.
    pub moved: Option<usize>,
    /// Largest minus second-largest state change.
    pub isolate_margin: f64,
    pub max_type_drift: f64,
    /// Largest metric distance between matched states of non-moved entities.
    pub max_state_drift: f64,
    /// Largest centroid displacement of non-moved entities, workspace units.
    pub max_location_drift: f64,
}

impl CriteriaReport {
    pub const CSV_HEADER: &'static str = "before_count,after_count,cardinality_mismatch,moved,isolate_margin,max_type_drift,max_state_drift,max_location_drift";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.before_count,
            self.after_count,
            self.cardinality_mismatch,
            self.moved.map(|m| m.to_string()).unwrap_or_default(),
            self.isolate_margin,
            self.max_type_drift,
            self.max_state_drift,
            self.max_location_drift
        )
    }
}

pub fn check_filter_criteria(
    before: &EntitySet,
    after: &EntitySet,
    metric: DistanceMetric,
) -> CriteriaReport {
    let mut report = CriteriaReport {
        before_count: before.len(),
        after_count: after.len(),
        cardinality_mismatch: before.len() != after.len(),
        moved: None,
        isolate_margin: 0.0,
        max_type_drift: 0.0,
        max_state_drift: 0.0,
        max_location_drift: 0.0,
    };
    let Ok(alignment) = align(after, before) else {
        return report;
    };
    let pairs = &alignment.pairs;
    let states_before: Vec<State> = pairs.iter().map(|&(b, _)| before[b].state.clone()).collect();
    let states_after: Vec<State> = pairs.iter().map(|&(_, a)| after[a].state.clone()).collect();
    let Ok(iso) = isolate(&states_before, &states_after, metric) else {
        return report;
    };
    report.moved = Some(pairs[iso.index].0);
    report.isolate_margin = iso.margin;
    for (k, &(b, a)) in pairs.iter().enumerate() {
        let drift = type_distance(&before[b].type_vec, &after[a].type_vec);
        report.max_type_drift = report.max_type_drift.max(drift);
        if k == iso.index {
            continue;
        }
        if let Ok(d) = distance(metric, &before[b].state, &after[a].state) {
            report.max_state_drift = report.max_state_drift.max(d);
        }
        let loc = crate::env::dist(before[b].location, after[a].location);
        report.max_location_drift = report.max_location_drift.max(loc);
    }
    report
}
