//! Buffer generation, the evaluation protocol, parameter sweeps, the
//! trajectory-count calculator and an exhaustive optimal-plan oracle.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;
use std::time::Instant;

use num_bigint::BigUint;
use num_traits::One;
use rand::seq::IndexedRandom;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::baselines::{nf_build, random_policy, CemParams, MpcPlanner, NfPlanner, RolloutModel, SetGraph};
use crate::buffer::{Episode, ExperienceBuffer};
use crate::controller::{Controller, ControllerConfig, Diagnostics};
use crate::env::{text_enum, Action, Env, EnvConfig, EnvError, EnvState, Task, Variant};
use crate::graph::{build_graph, BuildConfig, GraphError, TransitionGraph};
use crate::perception::{perceive, PerceptionConfig};
use crate::raster::Raster;
use crate::rng::{derive_seed, rng_from_seed, Rng};

/// Seeds tried by [`generate_buffer`] before giving up on grid coverage.
pub const COVERAGE_ATTEMPTS: u64 = 16;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("method {0} needs a transition graph")]
    MissingGraph(Method),
    #[error("method nf needs a set graph or a buffer to build one")]
    MissingSetGraph,
    #[error("graph uses {graph} states but the evaluation perceives {eval}")]
    ReprMismatch { graph: String, eval: String },
    #[error("sweep axis {0} needs the experience buffer to rebuild graphs")]
    SweepNeedsBuffer(SweepAxis),
    #[error("invalid evaluation spec: {0}")]
    InvalidSpec(String),
    #[error("the oracle supports grid tasks with at most 3 objects on at most a 3x3 grid")]
    OracleTooLarge,
    #[error("goal configuration unreachable")]
    Unreachable,
}

/// Buffer plus the simulator states behind every observation.
#[derive(Clone, Debug)]
pub struct TracedBuffer {
    pub buffer: ExperienceBuffer,
    pub states: Vec<Vec<EnvState>>,
    /// Object index each transition moved.
    pub moved: Vec<Vec<usize>>,
}

fn generate_episode(env: &Env, length: usize, seed: u64) -> Result<(Episode, Vec<EnvState>, Vec<usize>), EnvError> {
    let (mut state, _) = env.reset(seed)?;
    let mut rng = rng_from_seed(derive_seed(seed, &[1]));
    let mut observations = vec![env.render(&state)];
    let mut states = vec![state.clone()];
    let mut actions = Vec::new();
    let mut moved = Vec::new();
    while observations.len() < length {
        let ids: Vec<usize> = (0..state.objects.len()).collect();
        let &i = ids.choose(&mut rng).expect("at least one object");
        let Some(dest) = env.random_free_position(&state, &mut rng) else {
            break;
        };
        let action = Action::between(state.objects[i].position, dest);
        let (next, m) = env.step_traced(&state, &action);
        debug_assert_eq!(m, Some(i));
        state = next;
        observations.push(env.render(&state));
        states.push(state.clone());
        actions.push(action);
        moved.push(i);
    }
    Ok((Episode { observations, actions }, states, moved))
}

fn covers_grid(env: &Env, traced: &TracedBuffer) -> bool {
    let cells = env.config().cell_count();
    let mut src = vec![false; cells];
    let mut dst = vec![false; cells];
    for (states, moved) in traced.states.iter().zip(&traced.moved) {
        for (t, &i) in moved.iter().enumerate() {
            src[env.cell_of(states[t].objects[i].position)] = true;
            dst[env.cell_of(states[t + 1].objects[i].position)] = true;
        }
    }
    src.iter().chain(&dst).all(|&b| b)
}

/// Like [`generate_buffer`], keeping the simulator states.
pub fn generate_traced(config: &EnvConfig, episodes: usize, length: usize, seed: u64) -> Result<TracedBuffer, EnvError> {
    let mut last = None;
    for attempt in 0..COVERAGE_ATTEMPTS {
        let used = if attempt == 0 { seed } else { derive_seed(seed, &[u64::MAX, attempt]) };
        let mut cfg = config.clone();
        cfg.seed = used;
        let env = Env::new(cfg.clone())?;
        let results: Vec<_> = (0..episodes)
            .into_par_iter()
            .map(|e| generate_episode(&env, length, derive_seed(used, &[e as u64])))
            .collect::<Result<_, _>>()?;
        let mut traced = TracedBuffer {
            buffer: ExperienceBuffer {
                env_config: cfg,
                episodes: Vec::with_capacity(episodes),
            },
            states: Vec::with_capacity(episodes),
            moved: Vec::with_capacity(episodes),
        };
        for (ep, states, moved) in results {
            traced.buffer.episodes.push(ep);
            traced.states.push(states);
            traced.moved.push(moved);
        }
        if config.variant != Variant::Grid || covers_grid(&env, &traced) {
            return Ok(traced);
        }
        last = Some(traced);
    }
    Ok(last.expect("at least one attempt"))
}

/// Scripted-random experience: each step moves a uniformly chosen object to
/// a uniformly chosen free location. Episodes hold `length` observations.
///
/// On the grid the seed is re-derived (up to [`COVERAGE_ATTEMPTS`] times)
/// until every cell occurs as both a source and a destination; the seed
/// actually used is stored in the buffer's config.
pub fn generate_buffer(config: &EnvConfig, episodes: usize, length: usize, seed: u64) -> Result<ExperienceBuffer, EnvError> {
    Ok(generate_traced(config, episodes, length, seed)?.buffer)
}

/// Satisfied-constraint gain over the initially unsatisfied count, clamped
/// at zero. `None` when nothing was unsatisfied to begin with.
pub fn fractional_success(unsat_initial: usize, unsat_final: usize) -> Option<f64> {
    (unsat_initial > 0).then(|| unsat_initial.saturating_sub(unsat_final) as f64 / unsat_initial as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Ncs,
    Rand,
    Nf,
    Mpc,
}

text_enum!(Method { Ncs => "ncs", Rand => "rand", Nf => "nf", Mpc => "mpc" });

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSpec {
    pub method: Method,
    /// Task distribution; `object_count` is replaced by each entry of
    /// `object_counts`.
    pub env: EnvConfig,
    pub perception: PerceptionConfig,
    pub object_counts: Vec<usize>,
    pub episodes: usize,
    pub seeds: usize,
    pub base_seed: u64,
    pub horizon_multiplier: f64,
    pub action_noise_std: f64,
    pub controller: ControllerConfig,
    pub cem: CemParams,
    pub action_match_tol: f64,
    /// Record wall-clock seconds in the report.
    pub timing: bool,
}

impl EvalSpec {
    /// Protocol defaults: 100 episodes over 10 seeds at each of 4..=7
    /// objects, horizon four times the unsatisfied count, no noise.
    pub fn new(method: Method, env: EnvConfig) -> Self {
        let build = BuildConfig::for_env(&env);
        Self {
            method,
            perception: PerceptionConfig::for_env(&env),
            controller: ControllerConfig::for_env(&env, build.bind_metric),
            action_match_tol: env.pick_threshold,
            env,
            object_counts: vec![4, 5, 6, 7],
            episodes: 100,
            seeds: 10,
            base_seed: 0,
            horizon_multiplier: 4.0,
            action_noise_std: 0.0,
            cem: CemParams::default(),
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidSpec(m.to_string()));
        if self.episodes == 0 || self.seeds == 0 {
            return bad("episodes and seeds must be at least 1");
        }
        if self.object_counts.is_empty() {
            return bad("no object counts given");
        }
        if !(self.horizon_multiplier >= 1.0 && self.horizon_multiplier.is_finite()) {
            return bad("horizon multiplier must be at least 1");
        }
        if !(self.action_noise_std >= 0.0 && self.action_noise_std.is_finite()) {
            return bad("action noise std must be nonnegative");
        }
        if self.cem.population == 0 || self.cem.iterations == 0 {
            return bad("cem population and iterations must be positive");
        }
        if self.controller.satisfied_threshold < 0.0 {
            return bad("satisfied threshold must be nonnegative");
        }
        Ok(())
    }

    fn setting_label(&self) -> String {
        format!("{}-{}", self.env.variant, self.env.setting)
    }
}

/// Pre-built structures an evaluation may need.
#[derive(Clone, Copy, Debug, Default)]
pub struct Artifacts<'a> {
    pub graph: Option<&'a TransitionGraph>,
    pub set_graph: Option<&'a SetGraph>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub unsat_initial: usize,
    pub unsat_final: usize,
    pub steps: usize,
    pub fsr: Option<f64>,
}

/// Runs one episode with `policy`, which sees the current raster and the
/// number of steps left. Stops early once every constraint is satisfied.
pub fn run_episode(
    env: &Env,
    state: &EnvState,
    task: &Task,
    horizon_multiplier: f64,
    noise_std: f64,
    rng: &mut Rng,
    policy: &mut dyn FnMut(&Raster, usize, &mut Rng) -> Action,
) -> EpisodeOutcome {
    let unsat_initial = env.unsatisfied_count(state, task);
    let horizon = (horizon_multiplier * unsat_initial as f64).ceil() as usize;
    let noise = (noise_std > 0.0).then(|| Normal::new(0.0, noise_std).expect("finite std"));
    let mut state = state.clone();
    let mut unsat = unsat_initial;
    let mut steps = 0;
    while unsat > 0 && steps < horizon {
        let obs = env.render(&state);
        let mut action = policy(&obs, horizon - steps, rng);
        if let Some(n) = &noise {
            let mut a = action.to_array();
            a.iter_mut().for_each(|v| *v += n.sample(rng));
            action = Action::from_array(a);
        }
        state = env.step(&state, &action);
        unsat = env.unsatisfied_count(&state, task);
        steps += 1;
    }
    EpisodeOutcome {
        unsat_initial,
        unsat_final: unsat,
        steps,
        fsr: fractional_success(unsat_initial, unsat),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub method: Method,
    pub setting: String,
    pub k: usize,
    /// `None` for the aggregate row over all seeds.
    pub seed: Option<usize>,
    pub episodes: usize,
    pub mean_fsr: f64,
    /// Standard error over per-seed means; aggregate rows only.
    pub stderr: Option<f64>,
    pub fallback_missing_edge: u64,
    pub fallback_bind: u64,
    pub wallclock_s: Option<f64>,
}

pub const REPORT_HEADER: &str =
    "method,setting,k,seed,episodes,mean_fsr,stderr,fallback_missing_edge,fallback_bind,wallclock_s";

impl ReportRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{},{},{},{}",
            self.method,
            self.setting,
            self.k,
            self.seed.map(|s| s.to_string()).unwrap_or_else(|| "all".into()),
            self.episodes,
            self.mean_fsr,
            self.stderr.map(|s| format!("{s:.6}")).unwrap_or_default(),
            self.fallback_missing_edge,
            self.fallback_bind,
            self.wallclock_s.map(|s| format!("{s:.3}")).unwrap_or_default(),
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub diagnostics: Diagnostics,
}

impl EvalReport {
    pub fn aggregates(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.seed.is_none())
    }

    /// Aggregate mean fractional success at `k` objects.
    pub fn mean_at(&self, k: usize) -> Option<f64> {
        self.aggregates().find(|r| r.k == k).map(|r| r.mean_fsr)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.to_csv());
            out.push('\n');
        }
        out
    }
}

struct EpisodeResult {
    fsr: Option<f64>,
    diag: Diagnostics,
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs the evaluation protocol. Episodes run in parallel; the report is
/// reduced in a fixed order so it is identical for any thread count.
pub fn evaluate(spec: &EvalSpec, artifacts: Artifacts) -> Result<EvalReport, HarnessError> {
    spec.validate()?;
    let graph = match spec.method {
        Method::Rand => None,
        m => Some(artifacts.graph.ok_or(HarnessError::MissingGraph(m))?),
    };
    if let Some(g) = graph {
        if g.repr != spec.perception.repr {
            return Err(HarnessError::ReprMismatch {
                graph: g.repr.to_string(),
                eval: spec.perception.repr.to_string(),
            });
        }
    }
    let set_graph = match spec.method {
        Method::Nf => Some(artifacts.set_graph.ok_or(HarnessError::MissingSetGraph)?),
        _ => None,
    };
    let mut envs = Vec::new();
    for &k in &spec.object_counts {
        let mut cfg = spec.env.clone().with_objects(k);
        cfg.seed = spec.base_seed;
        envs.push(Env::new(cfg)?);
    }
    let mut report = EvalReport::default();
    for (ki, &k) in spec.object_counts.iter().enumerate() {
        let env = &envs[ki];
        let started = Instant::now();
        let items: Vec<(usize, usize)> = (0..spec.seeds)
            .flat_map(|s| (0..spec.episodes).map(move |e| (s, e)))
            .collect();
        let results: Vec<EpisodeResult> = items
            .par_iter()
            .map(|&(s, e)| {
                let task_seed = derive_seed(spec.base_seed, &[k as u64, s as u64, e as u64]);
                let mut rng = rng_from_seed(derive_seed(task_seed, &[1]));
                let (state, task) = env.reset(task_seed)?;
                let goal = perceive(&task.goal, &spec.perception);
                let mut diag = Diagnostics::default();
                let outcome = match spec.method {
                    Method::Rand => {
                        let extent = env.config().extent();
                        run_episode(env, &state, &task, spec.horizon_multiplier, spec.action_noise_std, &mut rng, &mut |_, _, r| {
                            random_policy(r, extent)
                        })
                    }
                    Method::Ncs => {
                        let ctl = Controller::new(graph.unwrap(), spec.perception, spec.controller);
                        run_episode(env, &state, &task, spec.horizon_multiplier, spec.action_noise_std, &mut rng, &mut |o, _, r| {
                            ctl.decide(&perceive(o, &spec.perception), &goal, r, &mut diag).action()
                        })
                    }
                    Method::Nf => {
                        let nf = NfPlanner {
                            set_graph: set_graph.unwrap(),
                            base: graph.unwrap(),
                            perception: spec.perception,
                        };
                        run_episode(env, &state, &task, spec.horizon_multiplier, spec.action_noise_std, &mut rng, &mut |o, _, r| {
                            nf.decide(&perceive(o, &spec.perception), &goal, r, &mut diag)
                        })
                    }
                    Method::Mpc => {
                        let mpc = MpcPlanner {
                            model: RolloutModel {
                                graph: graph.unwrap(),
                                action_match_tol: spec.action_match_tol,
                            },
                            perception: spec.perception,
                            params: spec.cem,
                        };
                        run_episode(env, &state, &task, spec.horizon_multiplier, spec.action_noise_std, &mut rng, &mut |o, left, r| {
                            mpc.decide(&perceive(o, &spec.perception), &goal, left, r, &mut diag)
                        })
                    }
                };
                Ok(EpisodeResult {
                    fsr: outcome.fsr,
                    diag,
                })
            })
            .collect::<Result<_, HarnessError>>()?;
        let wall = started.elapsed().as_secs_f64();
        let mut seed_means = Vec::with_capacity(spec.seeds);
        let mut total = Diagnostics::default();
        let mut total_episodes = 0;
        for (s, chunk) in results.chunks(spec.episodes).enumerate() {
            let mut diag = Diagnostics::default();
            let mut fsrs = Vec::with_capacity(chunk.len());
            for r in chunk {
                diag.merge(&r.diag);
                fsrs.extend(r.fsr);
            }
            let mean = if fsrs.is_empty() { 0.0 } else { fsrs.iter().sum::<f64>() / fsrs.len() as f64 };
            seed_means.push(mean);
            total.merge(&diag);
            total_episodes += fsrs.len();
            report.rows.push(ReportRow {
                method: spec.method,
                setting: spec.setting_label(),
                k,
                seed: Some(s),
                episodes: fsrs.len(),
                mean_fsr: mean,
                stderr: None,
                fallback_missing_edge: diag.missing_edge_total(),
                fallback_bind: diag.bind_total(),
                wallclock_s: None,
            });
        }
        let (mean, stderr) = mean_and_stderr(&seed_means);
        report.rows.push(ReportRow {
            method: spec.method,
            setting: spec.setting_label(),
            k,
            seed: None,
            episodes: total_episodes,
            mean_fsr: mean,
            stderr: Some(stderr),
            fallback_missing_edge: total.missing_edge_total(),
            fallback_bind: total.bind_total(),
            wallclock_s: spec.timing.then_some(wall),
        });
        report.diagnostics.merge(&total);
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SweepAxis {
    Clusters,
    BufferFraction,
    NoiseStd,
    HorizonMultiplier,
}

text_enum!(SweepAxis {
    Clusters => "clusters",
    BufferFraction => "buffer_fraction",
    NoiseStd => "noise_std",
    HorizonMultiplier => "horizon_multiplier",
});

impl SweepAxis {
    pub fn rebuilds_graph(self) -> bool {
        matches!(self, SweepAxis::Clusters | SweepAxis::BufferFraction)
    }
}

/// Inputs a sweep can draw on. Axes that change graph construction need the
/// buffer; the others reuse `graph` when given.
#[derive(Clone, Copy, Debug)]
pub struct SweepSource<'a> {
    pub buffer: Option<&'a ExperienceBuffer>,
    pub graph: Option<&'a TransitionGraph>,
    pub build: BuildConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub report: EvalReport,
}

pub fn sweep_csv(axis: SweepAxis, points: &[SweepPoint]) -> String {
    let mut out = format!("axis,value,{REPORT_HEADER}\n");
    for p in points {
        for r in &p.report.rows {
            let _ = writeln!(out, "{axis},{},{}", p.value, r.to_csv());
        }
    }
    out
}

/// One evaluation per axis value, rebuilding graphs when the axis affects
/// construction.
pub fn sweep(spec: &EvalSpec, axis: SweepAxis, values: &[f64], source: SweepSource) -> Result<Vec<SweepPoint>, HarnessError> {
    let needs_graph = spec.method != Method::Rand;
    let needs_set_graph = spec.method == Method::Nf;
    if (axis.rebuilds_graph() && needs_graph) || (needs_set_graph && source.buffer.is_none()) {
        source.buffer.ok_or(HarnessError::SweepNeedsBuffer(axis))?;
    }
    let mut fixed_graph = source.graph.cloned();
    if needs_graph && !axis.rebuilds_graph() && fixed_graph.is_none() {
        let buffer = source.buffer.ok_or(HarnessError::SweepNeedsBuffer(axis))?;
        fixed_graph = Some(build_graph(buffer, &spec.perception, &source.build)?.0);
    }
    let fixed_set_graph = match (&fixed_graph, needs_set_graph) {
        (Some(g), true) => Some(nf_build(source.buffer.unwrap(), &spec.perception, g)?),
        _ => None,
    };
    let mut points = Vec::with_capacity(values.len());
    for &value in values {
        let mut s = spec.clone();
        let mut build = source.build;
        let mut buffer = source.buffer.cloned();
        match axis {
            SweepAxis::Clusters => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(HarnessError::InvalidSpec(format!("cluster count {value}")));
                }
                build.clusters = value as usize;
            }
            SweepAxis::BufferFraction => {
                if !(value > 0.0 && value <= 1.0) {
                    return Err(HarnessError::InvalidSpec(format!("buffer fraction {value}")));
                }
                buffer = buffer.map(|b| b.prefix_fraction(value));
            }
            SweepAxis::NoiseStd => s.action_noise_std = value,
            SweepAxis::HorizonMultiplier => s.horizon_multiplier = value,
        }
        let report = if needs_graph && axis.rebuilds_graph() {
            let buffer = buffer.as_ref().expect("checked above");
            let (g, _) = build_graph(buffer, &spec.perception, &build)?;
            let sg = if needs_set_graph { Some(nf_build(buffer, &spec.perception, &g)?) } else { None };
            evaluate(&s, Artifacts { graph: Some(&g), set_graph: sg.as_ref() })?
        } else {
            evaluate(
                &s,
                Artifacts {
                    graph: fixed_graph.as_ref(),
                    set_graph: fixed_set_graph.as_ref(),
                },
            )?
        };
        points.push(SweepPoint { value, report });
    }
    Ok(points)
}

/// Number of trajectories of length `t` over configurations of `k` identical
/// objects on `locations` cells: `C(locations, k) * (k * (locations - k))^t`.
pub fn combinatorial_size(locations: u64, k: u64, t: u32) -> BigUint {
    assert!(k <= locations, "more objects than locations");
    let mut binom = BigUint::one();
    for i in 0..k {
        binom = binom * BigUint::from(locations - i) / BigUint::from(i + 1);
    }
    binom * BigUint::from(k * (locations - k)).pow(t)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSolution {
    pub moves: usize,
    pub actions: Vec<Action>,
}

/// Breadth-first search over object-to-cell assignments using the
/// environment's own step function. Small grids only.
pub fn bfs_oracle(env: &Env, state: &EnvState, task: &Task) -> Result<OracleSolution, HarnessError> {
    let cfg = env.config();
    if cfg.variant != Variant::Grid || state.objects.len() > 3 || cfg.grid_side > 3 {
        return Err(HarnessError::OracleTooLarge);
    }
    let cells = cfg.cell_count();
    let key = |s: &EnvState| -> Vec<usize> { s.objects.iter().map(|o| env.cell_of(o.position)).collect() };
    let start = key(state);
    let mut parent: HashMap<Vec<usize>, Option<(Vec<usize>, Action)>> = HashMap::new();
    parent.insert(start.clone(), None);
    let mut queue = VecDeque::from([(start, state.clone())]);
    while let Some((k, s)) = queue.pop_front() {
        if env.unsatisfied_count(&s, task) == 0 {
            let mut actions = Vec::new();
            let mut cur = k;
            while let Some(Some((prev, a))) = parent.get(&cur) {
                actions.push(*a);
                cur = prev.clone();
            }
            actions.reverse();
            return Ok(OracleSolution {
                moves: actions.len(),
                actions,
            });
        }
        for obj in 0..s.objects.len() {
            for cell in 0..cells {
                let action = Action::between(s.objects[obj].position, env.cell_center(cell));
                let next = env.step(&s, &action);
                let nk = key(&next);
                if !parent.contains_key(&nk) {
                    parent.insert(nk.clone(), Some((k.clone(), action)));
                    queue.push_back((nk, next));
                }
            }
        }
    }
    Err(HarnessError::Unreachable)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Constraint, Setting};

    #[test]
    fn fractional_success_examples() {
        assert_eq!(fractional_success(4, 1), Some(0.75));
        assert_eq!(fractional_success(4, 4), Some(0.0));
        assert_eq!(fractional_success(4, 0), Some(1.0));
        assert_eq!(fractional_success(2, 3), Some(0.0));
        assert_eq!(fractional_success(0, 0), None);
    }

    #[test]
    fn combinatorial_examples() {
        assert_eq!(combinatorial_size(4, 1, 1), BigUint::from(12u32));
        assert_eq!(combinatorial_size(16, 4, 4), BigUint::from(1820u64 * 5_308_416));
        assert_eq!(combinatorial_size(5, 0, 3), BigUint::from(0u32));
    }

    #[test]
    fn buffer_shape_and_sparsity() {
        let traced = generate_traced(&EnvConfig::grid(4), 50, 5, 3).unwrap();
        assert_eq!(traced.buffer.transition_count(), 200);
        for (states, moved) in traced.states.iter().zip(&traced.moved) {
            for (t, &i) in moved.iter().enumerate() {
                for (j, (a, b)) in states[t].objects.iter().zip(&states[t + 1].objects).enumerate() {
                    assert_eq!(a.position == b.position, j != i);
                }
            }
        }
    }

    #[test]
    fn oracle_small_cases() {
        let env = Env::new(EnvConfig::grid_with_side(2, 2)).unwrap();
        let (state, _) = Env::new(EnvConfig::grid_with_side(2, 1)).unwrap().reset(0).unwrap();
        let mut two = state.clone();
        two.objects.push(two.objects[0].clone());
        two.objects[0].position = env.cell_center(0);
        two.objects[1].position = env.cell_center(1);
        two.objects[1].color = [0.0, 0.0, 1.0];
        let solved = env.task(&two, vec![Constraint { object: 0, position: env.cell_center(0) }], Setting::Partial);
        assert_eq!(bfs_oracle(&env, &two, &solved).unwrap().moves, 0);
        let one = env.task(&two, vec![Constraint { object: 0, position: env.cell_center(2) }], Setting::Partial);
        assert_eq!(bfs_oracle(&env, &two, &one).unwrap().moves, 1);
        let swap = env.task(
            &two,
            vec![
                Constraint { object: 0, position: env.cell_center(1) },
                Constraint { object: 1, position: env.cell_center(0) },
            ],
            Setting::Complete,
        );
        let sol = bfs_oracle(&env, &two, &swap).unwrap();
        assert_eq!(sol.moves, 3);
        let mut s = two.clone();
        for a in &sol.actions {
            s = env.step(&s, a);
        }
        assert_eq!(env.unsatisfied_count(&s, &swap), 0);
    }
}
