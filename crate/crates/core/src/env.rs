//! Deterministic rearrangement simulators.
//!
//! Two variants share one action interface. The *grid* variant places
//! identical squares on the centres of a `side x side` grid over the unit
//! square; picked objects are snapped to the cell nearest `w + dw`. The
//! *table* variant places small shapes at continuous positions on a
//! `0.6 x 0.8` table; picked objects land at `w + dw` clamped to the table.
//!
//! A move onto an occupied cell (grid) or onto another object's footprint
//! (table) is a no-op, as is a pick that finds no object.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kv::{self, KvError};
use crate::raster::Raster;
use crate::rng::{rng_from_seed, Rng};

/// Fraction of a grid cell covered by the rendered square, per axis.
const GRID_OBJECT_FILL: f64 = 0.75;
/// Half side length of a table object footprint, workspace units.
pub const TABLE_HALF_SIZE: f64 = 0.04;
/// Minimum clearance between table footprints, workspace units.
const TABLE_GAP: f64 = 0.02;
const SPAWN_ATTEMPTS: usize = 20_000;

/// Colours available to the table variant.
pub const TABLE_PALETTE: [[f64; 3]; 13] = [
    [0.9, 0.1, 0.1],
    [0.1, 0.8, 0.2],
    [0.15, 0.3, 0.95],
    [0.95, 0.9, 0.1],
    [0.9, 0.2, 0.85],
    [0.1, 0.85, 0.9],
    [1.0, 0.55, 0.05],
    [0.55, 0.2, 0.85],
    [0.95, 0.95, 0.95],
    [0.55, 0.35, 0.15],
    [1.0, 0.6, 0.75],
    [0.6, 1.0, 0.3],
    [0.5, 0.5, 0.5],
];

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("{objects} objects need {needed} distinct locations but only {available} exist")]
    NotEnoughLocations {
        objects: usize,
        needed: usize,
        available: usize,
    },
    #[error("could not place objects without overlap after {0} attempts")]
    SpawnFailed(usize),
    #[error(transparent)]
    Config(#[from] KvError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Grid,
    Table,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Complete,
    Partial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Square,
    Disc,
    Triangle,
}

macro_rules! text_enum {
    ($ty:ty { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl std::fmt::Display for $ty {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(match self { $(Self::$variant => $name),+ })
            }
        }
        impl std::str::FromStr for $ty {
            type Err = ();
            fn from_str(s: &str) -> Result<Self, ()> {
                match s { $($name => Ok(Self::$variant),)+ _ => Err(()) }
            }
        }
    };
}
pub(crate) use text_enum;

text_enum!(Variant { Grid => "grid", Table => "table" });
text_enum!(Setting { Complete => "complete", Partial => "partial" });

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub variant: Variant,
    pub grid_side: usize,
    pub table_extent: [f64; 2],
    pub object_count: usize,
    pub image_size: usize,
    pub pick_threshold: f64,
    pub place_threshold: f64,
    pub palette_size: usize,
    pub setting: Setting,
    pub seed: u64,
}

impl EnvConfig {
    pub fn grid(object_count: usize) -> Self {
        Self {
            variant: Variant::Grid,
            grid_side: 4,
            table_extent: [0.6, 0.8],
            object_count,
            image_size: 64,
            pick_threshold: 0.125,
            place_threshold: 0.125,
            palette_size: TABLE_PALETTE.len(),
            setting: Setting::Complete,
            seed: 0,
        }
    }

    pub fn table(object_count: usize) -> Self {
        Self {
            variant: Variant::Table,
            pick_threshold: 0.05,
            place_threshold: 0.05,
            setting: Setting::Partial,
            ..Self::grid(object_count)
        }
    }

    pub fn defaults_for(variant: Variant) -> Self {
        match variant {
            Variant::Grid => Self::grid(4),
            Variant::Table => Self::table(4),
        }
    }

    /// Grid variant with the thresholds scaled to a `side x side` grid.
    pub fn grid_with_side(side: usize, object_count: usize) -> Self {
        let half_cell = 0.5 / side as f64;
        Self {
            grid_side: side,
            pick_threshold: half_cell,
            place_threshold: half_cell,
            ..Self::grid(object_count)
        }
    }

    pub fn with_setting(mut self, setting: Setting) -> Self {
        self.setting = setting;
        self
    }

    pub fn with_objects(mut self, k: usize) -> Self {
        self.object_count = k;
        self
    }

    /// Workspace size `[width, height]`.
    pub fn extent(&self) -> [f64; 2] {
        match self.variant {
            Variant::Grid => [1.0, 1.0],
            Variant::Table => self.table_extent,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.grid_side * self.grid_side
    }

    pub fn cell_size(&self) -> f64 {
        1.0 / self.grid_side as f64
    }

    /// Half extent of an object's footprint.
    pub fn object_half_size(&self) -> f64 {
        match self.variant {
            Variant::Grid => 0.5 * GRID_OBJECT_FILL * self.cell_size(),
            Variant::Table => TABLE_HALF_SIZE,
        }
    }

    /// Horizontal and vertical workspace distance covered by one pixel.
    pub fn pixel_pitch(&self) -> [f64; 2] {
        let e = self.extent();
        [e[0] / self.image_size as f64, e[1] / self.image_size as f64]
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidConfig(m.to_string()));
        if self.object_count == 0 {
            return bad("object count must be positive");
        }
        if !(self.pick_threshold > 0.0 && self.place_threshold > 0.0) {
            return bad("thresholds must be positive");
        }
        match self.variant {
            Variant::Grid => {
                if self.grid_side == 0 {
                    return bad("grid side must be positive");
                }
                if self.cell_count() < self.object_count {
                    return bad("more objects than grid cells");
                }
                if self.image_size < 4 * self.grid_side {
                    return bad("image size must be at least 4 pixels per cell");
                }
            }
            Variant::Table => {
                let [w, h] = self.table_extent;
                if !(w > 4.0 * TABLE_HALF_SIZE && h > 4.0 * TABLE_HALF_SIZE) {
                    return bad("table too small for its objects");
                }
                if self.palette_size == 0 || self.palette_size > TABLE_PALETTE.len() {
                    return bad("palette size must be within 1..=13");
                }
                if self.object_count > self.palette_size {
                    return bad("table objects need distinct palette colours");
                }
                if self.image_size < 16 {
                    return bad("image size must be at least 16");
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        format!(
            "variant = {}\ngrid_side = {}\ntable_width = {}\ntable_height = {}\nobjects = {}\n\
             image_size = {}\npick_threshold = {}\nplace_threshold = {}\npalette_size = {}\n\
             setting = {}\nseed = {}\n",
            self.variant,
            self.grid_side,
            self.table_extent[0],
            self.table_extent[1],
            self.object_count,
            self.image_size,
            self.pick_threshold,
            self.place_threshold,
            self.palette_size,
            self.setting,
            self.seed
        )
    }

    pub fn from_text(text: &str) -> Result<Self, EnvError> {
        let pairs = kv::parse(text)?;
        let variant = pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "variant")
            .map(|(k, v)| kv::value::<Variant>(k, v))
            .transpose()?
            .unwrap_or(Variant::Grid);
        let mut cfg = Self::defaults_for(variant);
        for (k, v) in &pairs {
            if !cfg.apply(k, v)? {
                return Err(KvError::UnknownKey(k.clone()).into());
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one key; returns false when the key is not an environment key.
    pub fn apply(&mut self, key: &str, v: &str) -> Result<bool, KvError> {
        match key {
            "variant" => self.variant = kv::value(key, v)?,
            "grid_side" => self.grid_side = kv::value(key, v)?,
            "table_width" => self.table_extent[0] = kv::value(key, v)?,
            "table_height" => self.table_extent[1] = kv::value(key, v)?,
            "objects" => self.object_count = kv::value(key, v)?,
            "image_size" => self.image_size = kv::value(key, v)?,
            "pick_threshold" => self.pick_threshold = kv::value(key, v)?,
            "place_threshold" => self.place_threshold = kv::value(key, v)?,
            "palette_size" => self.palette_size = kv::value(key, v)?,
            "setting" => self.setting = kv::value(key, v)?,
            "seed" => self.seed = kv::value(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub color: [f64; 3],
    pub shape: Shape,
    pub position: [f64; 2],
}

impl ObjectSpec {
    pub fn rgb8(&self) -> [u8; 3] {
        self.color.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub objects: Vec<ObjectSpec>,
    pub step_count: u64,
}

/// Pick-and-move action: pick at `w`, displace by `dw`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub w: [f64; 2],
    pub dw: [f64; 2],
}

impl Action {
    pub fn new(w: [f64; 2], dw: [f64; 2]) -> Self {
        Self { w, dw }
    }

    /// Action that picks at `from` and releases at `to`.
    pub fn between(from: [f64; 2], to: [f64; 2]) -> Self {
        Self {
            w: from,
            dw: [to[0] - from[0], to[1] - from[1]],
        }
    }

    pub fn destination(&self) -> [f64; 2] {
        [self.w[0] + self.dw[0], self.w[1] + self.dw[1]]
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(&self.dw).all(|v| v.is_finite())
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w[0], self.w[1], self.dw[0], self.dw[1]]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            w: [a[0], a[1]],
            dw: [a[2], a[3]],
        }
    }
}

/// One goal constraint: object index and its target position.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub object: usize,
    pub position: [f64; 2],
}

/// A rearrangement problem. The constraint list is ground truth for scoring
/// and must not be shown to a controller, which only sees the two rasters.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub initial: Raster,
    pub goal: Raster,
    pub setting: Setting,
    constraints: Vec<Constraint>,
}

impl Task {
    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn constrained_ids(&self) -> Vec<usize> {
        self.constraints.iter().map(|c| c.object).collect()
    }
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[derive(Clone, Debug)]
pub struct Env {
    config: EnvConfig,
}

impl Env {
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn cell_center(&self, cell: usize) -> [f64; 2] {
        let side = self.config.grid_side;
        let c = self.config.cell_size();
        [
            ((cell % side) as f64 + 0.5) * c,
            ((cell / side) as f64 + 0.5) * c,
        ]
    }

    /// Cell whose centre is nearest to `p`, clamping points outside the grid.
    pub fn cell_of(&self, p: [f64; 2]) -> usize {
        let side = self.config.grid_side;
        let idx = |x: f64| ((x / self.config.cell_size()).floor().max(0.0) as usize).min(side - 1);
        idx(p[1]) * side + idx(p[0])
    }

    pub fn snap(&self, p: [f64; 2]) -> [f64; 2] {
        self.cell_center(self.cell_of(p))
    }

    fn table_bounds(&self) -> ([f64; 2], [f64; 2]) {
        let h = TABLE_HALF_SIZE;
        let [w, hh] = self.config.table_extent;
        ([h, h], [w - h, hh - h])
    }

    fn clamp_to_table(&self, p: [f64; 2]) -> [f64; 2] {
        let (lo, hi) = self.table_bounds();
        [p[0].clamp(lo[0], hi[0]), p[1].clamp(lo[1], hi[1])]
    }

    /// Whether two object positions would overlap.
    pub fn overlaps(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        match self.config.variant {
            Variant::Grid => self.cell_of(a) == self.cell_of(b),
            Variant::Table => {
                let sep = 2.0 * TABLE_HALF_SIZE + TABLE_GAP;
                (a[0] - b[0]).abs() < sep && (a[1] - b[1]).abs() < sep
            }
        }
    }

    pub fn reset(&self, seed: u64) -> Result<(EnvState, Task), EnvError> {
        let mut rng = rng_from_seed(seed);
        let k = self.config.object_count;
        let (positions, constraints) = match self.config.variant {
            Variant::Grid => self.spawn_grid(&mut rng)?,
            Variant::Table => self.spawn_table(&mut rng)?,
        };
        let appearances = match self.config.variant {
            Variant::Grid => grid_colors(k, &mut rng)?
                .into_iter()
                .map(|c| (c, Shape::Square))
                .collect::<Vec<_>>(),
            Variant::Table => {
                let mut palette: Vec<usize> = (0..self.config.palette_size).collect();
                palette.shuffle(&mut rng);
                let shapes = [Shape::Square, Shape::Disc, Shape::Triangle];
                palette[..k]
                    .iter()
                    .map(|&c| (TABLE_PALETTE[c], shapes[rng.random_range(0..3)]))
                    .collect()
            }
        };
        let objects: Vec<ObjectSpec> = positions
            .into_iter()
            .zip(appearances)
            .map(|(position, (color, shape))| ObjectSpec {
                color,
                shape,
                position,
            })
            .collect();
        let state = EnvState {
            objects,
            step_count: 0,
        };
        let task = self.task(&state, constraints, self.config.setting);
        Ok((state, task))
    }

    /// Builds a task from an explicit start state and constraint list. The goal
    /// raster shows only the constrained objects, at their target positions.
    pub fn task(&self, state: &EnvState, constraints: Vec<Constraint>, setting: Setting) -> Task {
        let goal_objects: Vec<ObjectSpec> = constraints
            .iter()
            .map(|c| ObjectSpec {
                position: c.position,
                ..state.objects[c.object].clone()
            })
            .collect();
        Task {
            initial: self.render(state),
            goal: self.render_objects(&goal_objects),
            setting,
            constraints,
        }
    }

    fn constrained_subset(&self, rng: &mut Rng, max_size: usize) -> Vec<usize> {
        let k = self.config.object_count;
        match (self.config.setting, self.config.variant) {
            (Setting::Complete, _) => (0..k).collect(),
            (Setting::Partial, Variant::Table) => {
                let mut ids: Vec<usize> = (0..k).collect();
                ids.shuffle(rng);
                ids.truncate(k.min(4));
                ids.sort_unstable();
                ids
            }
            (Setting::Partial, Variant::Grid) => loop {
                // Uniform over nonempty subsets of admissible size.
                let ids: Vec<usize> = (0..k).filter(|_| rng.random_bool(0.5)).collect();
                if !ids.is_empty() && ids.len() <= max_size {
                    break ids;
                }
            },
        }
    }

    fn spawn_grid(&self, rng: &mut Rng) -> Result<(Vec<[f64; 2]>, Vec<Constraint>), EnvError> {
        let k = self.config.object_count;
        let cells = self.config.cell_count();
        let needed = match self.config.setting {
            Setting::Complete => 2 * k,
            Setting::Partial => k + 1,
        };
        if needed > cells {
            return Err(EnvError::NotEnoughLocations {
                objects: k,
                needed,
                available: cells,
            });
        }
        let mut order: Vec<usize> = (0..cells).collect();
        order.shuffle(rng);
        let positions: Vec<[f64; 2]> = order[..k].iter().map(|&c| self.cell_center(c)).collect();
        let ids = self.constrained_subset(rng, cells - k);
        let constraints = ids
            .iter()
            .zip(&order[k..])
            .map(|(&object, &cell)| Constraint {
                object,
                position: self.cell_center(cell),
            })
            .collect();
        Ok((positions, constraints))
    }

    fn sample_free(&self, rng: &mut Rng, taken: &[[f64; 2]]) -> Result<[f64; 2], EnvError> {
        let (lo, hi) = self.table_bounds();
        for _ in 0..SPAWN_ATTEMPTS {
            let p = [rng.random_range(lo[0]..hi[0]), rng.random_range(lo[1]..hi[1])];
            if taken.iter().all(|&q| !self.overlaps(p, q)) {
                return Ok(p);
            }
        }
        Err(EnvError::SpawnFailed(SPAWN_ATTEMPTS))
    }

    /// Uniformly random location that overlaps no object in `state`: a free
    /// cell centre on the grid, a rejection-sampled point on the table.
    pub fn random_free_position(&self, state: &EnvState, rng: &mut Rng) -> Option<[f64; 2]> {
        match self.config.variant {
            Variant::Grid => {
                let occupied: Vec<usize> = state.objects.iter().map(|o| self.cell_of(o.position)).collect();
                let free: Vec<usize> = (0..self.config.cell_count()).filter(|c| !occupied.contains(c)).collect();
                free.choose(rng).map(|&c| self.cell_center(c))
            }
            Variant::Table => {
                let taken: Vec<[f64; 2]> = state.objects.iter().map(|o| o.position).collect();
                self.sample_free(rng, &taken).ok()
            }
        }
    }

    fn spawn_table(&self, rng: &mut Rng) -> Result<(Vec<[f64; 2]>, Vec<Constraint>), EnvError> {
        let k = self.config.object_count;
        let mut taken = Vec::with_capacity(2 * k);
        for _ in 0..k {
            let p = self.sample_free(rng, &taken)?;
            taken.push(p);
        }
        let positions = taken.clone();
        let ids = self.constrained_subset(rng, k);
        let mut constraints = Vec::with_capacity(ids.len());
        for object in ids {
            let p = self.sample_free(rng, &taken)?;
            taken.push(p);
            constraints.push(Constraint {
                object,
                position: p,
            });
        }
        Ok((positions, constraints))
    }

    /// Object picked by `w`: the nearest within the pick threshold, lowest
    /// index on exact ties.
    pub fn pick(&self, state: &EnvState, w: [f64; 2]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, o) in state.objects.iter().enumerate() {
            let d = dist(o.position, w);
            if d <= self.config.pick_threshold && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn step(&self, state: &EnvState, action: &Action) -> EnvState {
        self.step_traced(state, action).0
    }

    /// Steps and reports which object, if any, changed position.
    pub fn step_traced(&self, state: &EnvState, action: &Action) -> (EnvState, Option<usize>) {
        let mut next = state.clone();
        next.step_count += 1;
        if !action.is_finite() {
            return (next, None);
        }
        let Some(i) = self.pick(state, action.w) else {
            return (next, None);
        };
        let dest = match self.config.variant {
            Variant::Grid => self.snap(action.destination()),
            Variant::Table => self.clamp_to_table(action.destination()),
        };
        let blocked = state
            .objects
            .iter()
            .enumerate()
            .any(|(j, o)| j != i && self.overlaps(dest, o.position));
        if blocked || dest == state.objects[i].position {
            return (next, None);
        }
        next.objects[i].position = dest;
        (next, Some(i))
    }

    pub fn render(&self, state: &EnvState) -> Raster {
        self.render_objects(&state.objects)
    }

    pub fn render_objects(&self, objects: &[ObjectSpec]) -> Raster {
        let n = self.config.image_size;
        let [ex, ey] = self.config.extent();
        let h = self.config.object_half_size();
        let mut raster = Raster::black(n, n);
        let px = |x: f64, e: f64| x / e * n as f64;
        for o in objects {
            let [cx, cy] = o.position;
            let rgb = o.rgb8();
            let c0 = (px(cx - h, ex) - 1.0).floor().max(0.0) as usize;
            let c1 = ((px(cx + h, ex) + 1.0).ceil().max(0.0) as usize).min(n);
            let r0 = (px(cy - h, ey) - 1.0).floor().max(0.0) as usize;
            let r1 = ((px(cy + h, ey) + 1.0).ceil().max(0.0) as usize).min(n);
            for row in r0..r1 {
                let dy = (row as f64 + 0.5) / n as f64 * ey - cy;
                for col in c0..c1 {
                    let dx = (col as f64 + 0.5) / n as f64 * ex - cx;
                    let inside = match o.shape {
                        Shape::Square => dx.abs() < h && dy.abs() < h,
                        Shape::Disc => dx * dx + dy * dy < h * h,
                        Shape::Triangle => dy.abs() < h && dx.abs() < (dy + h) / 2.0,
                    };
                    if inside {
                        raster.put(col, row, rgb);
                    }
                }
            }
        }
        raster
    }

    pub fn unsatisfied_count(&self, state: &EnvState, task: &Task) -> usize {
        task.constraints
            .iter()
            .filter(|c| dist(state.objects[c.object].position, c.position) > self.config.place_threshold)
            .count()
    }
}

fn grid_colors(k: usize, rng: &mut Rng) -> Result<Vec<[f64; 3]>, EnvError> {
    const MIN_SEPARATION: f64 = 0.25;
    let far = |a: &[f64; 3], b: &[f64; 3]| {
        a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt() >= MIN_SEPARATION
    };
    let mut colors: Vec<[f64; 3]> = Vec::with_capacity(k);
    while colors.len() < k {
        let mut placed = false;
        for _ in 0..SPAWN_ATTEMPTS {
            let c = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
            if far(&c, &[0.0; 3]) && colors.iter().all(|o| far(&c, o)) {
                colors.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(EnvError::SpawnFailed(SPAWN_ATTEMPTS));
        }
    }
    Ok(colors)
}
