//! Flat run configuration shared by every pipeline stage.
//!
//! One text file covers the environment, graph construction, controller and
//! evaluation. `variant` picks the defaults; every other key overrides one
//! field. Unknown keys are rejected. [`RunConfig::to_text`] prints the fully
//! resolved configuration, which is what artifacts record as provenance.

use std::fmt::Write as _;

use thiserror::Error;

use crate::baselines::CemParams;
use crate::controller::{ControllerConfig, EdgeAction, SelectionMode};
use crate::env::{EnvConfig, EnvError, Variant};
use crate::graph::BuildConfig;
use crate::harness::{EvalSpec, Method};
use crate::kv::{self, KvError};
use crate::metric::DistanceMetric;
use crate::perception::{PerceptionConfig, StateRepr};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Environment used for buffer generation; its object count is the
    /// training count. Its seed is the run seed.
    pub env: EnvConfig,
    pub buffer_episodes: usize,
    /// Observations per buffer episode.
    pub episode_length: usize,
    pub clusters: usize,
    pub state_repr: StateRepr,
    pub isolate_metric: DistanceMetric,
    pub cluster_metric: DistanceMetric,
    pub bind_metric: DistanceMetric,
    pub selection_mode: SelectionMode,
    /// `None` derives it from the placement threshold.
    pub satisfied_threshold: Option<f64>,
    pub bind_max_distance: Option<f64>,
    pub edge_action: EdgeAction,
    pub method: Method,
    pub eval_objects: Vec<usize>,
    pub episodes: usize,
    pub seeds: usize,
    pub horizon_multiplier: f64,
    pub action_noise_std: f64,
    pub buffer_fraction: f64,
    pub cem: CemParams,
    /// `None` uses the pick threshold.
    pub action_match_tol: Option<f64>,
}

impl RunConfig {
    pub fn defaults_for(variant: Variant) -> Self {
        let env = EnvConfig::defaults_for(variant).with_objects(4);
        let build = BuildConfig::for_env(&env);
        Self {
            buffer_episodes: 5000,
            episode_length: 5,
            clusters: build.clusters,
            state_repr: StateRepr::default_for(variant),
            isolate_metric: build.isolate_metric,
            cluster_metric: build.cluster_metric,
            bind_metric: build.bind_metric,
            selection_mode: SelectionMode::Stochastic,
            satisfied_threshold: None,
            bind_max_distance: None,
            edge_action: EdgeAction::Retarget,
            method: Method::Ncs,
            eval_objects: vec![4, 5, 6, 7],
            episodes: 100,
            seeds: 10,
            horizon_multiplier: 4.0,
            action_noise_std: 0.0,
            buffer_fraction: 1.0,
            cem: CemParams::default(),
            action_match_tol: None,
            env,
        }
    }

    pub fn seed(&self) -> u64 {
        self.env.seed
    }

    /// Parses `text`, then applies `overrides` in order. The last `variant`
    /// anywhere selects the defaults.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut pairs = kv::parse(text)?;
        pairs.extend(overrides.iter().cloned());
        let variant = pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "variant")
            .map(|(k, v)| kv::value::<Variant>(k, v))
            .transpose()?
            .unwrap_or(Variant::Grid);
        let mut cfg = Self::defaults_for(variant);
        for (k, v) in &pairs {
            cfg.apply(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        if self.env.apply(key, v)? {
            return Ok(());
        }
        let opt = |v: &str| -> Result<Option<f64>, KvError> {
            if v == "auto" || v == "none" {
                Ok(None)
            } else {
                kv::value(key, v).map(Some)
            }
        };
        match key {
            "buffer_episodes" => self.buffer_episodes = kv::value(key, v)?,
            "episode_length" => self.episode_length = kv::value(key, v)?,
            "clusters" => self.clusters = kv::value(key, v)?,
            "state_repr" => self.state_repr = kv::value(key, v)?,
            "isolate_metric" => self.isolate_metric = kv::value(key, v)?,
            "cluster_metric" => self.cluster_metric = kv::value(key, v)?,
            "bind_metric" => self.bind_metric = kv::value(key, v)?,
            "selection_mode" => self.selection_mode = kv::value(key, v)?,
            "satisfied_threshold" => self.satisfied_threshold = opt(v)?,
            "bind_max_distance" => self.bind_max_distance = opt(v)?,
            "edge_action" => self.edge_action = kv::value(key, v)?,
            "method" => self.method = kv::value(key, v)?,
            "eval_objects" => self.eval_objects = kv::list(key, v)?,
            "episodes" => self.episodes = kv::value(key, v)?,
            "seeds" => self.seeds = kv::value(key, v)?,
            "horizon_multiplier" => self.horizon_multiplier = kv::value(key, v)?,
            "action_noise_std" => self.action_noise_std = kv::value(key, v)?,
            "buffer_fraction" => self.buffer_fraction = kv::value(key, v)?,
            "cem_iterations" => self.cem.iterations = kv::value(key, v)?,
            "cem_elite_ratio" => self.cem.elite_ratio = kv::value(key, v)?,
            "cem_population" => self.cem.population = kv::value(key, v)?,
            "cem_init_std" => self.cem.init_std = kv::value(key, v)?,
            "cem_max_horizon" => self.cem.max_horizon = kv::value(key, v)?,
            "action_match_tol" => self.action_match_tol = opt(v)?,
            _ => return Err(KvError::UnknownKey(key.to_string()).into()),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.env.validate()?;
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.buffer_episodes == 0 || self.episode_length < 2 {
            return bad("buffer needs at least one episode of two observations");
        }
        if self.clusters == 0 {
            return bad("clusters must be at least 1");
        }
        if self.state_repr == StateRepr::Position
            && [self.isolate_metric, self.cluster_metric, self.bind_metric].contains(&DistanceMetric::Iou)
        {
            return bad("iou needs mask states");
        }
        if !(self.buffer_fraction > 0.0 && self.buffer_fraction <= 1.0) {
            return bad("buffer_fraction must lie in (0, 1]");
        }
        if self.cem.population as f64 * self.cem.elite_ratio < 2.0 {
            return bad("cem population times elite ratio must be at least 2");
        }
        if self.satisfied_threshold.is_some_and(|t| t < 0.0) {
            return bad("satisfied_threshold must be nonnegative");
        }
        if self.action_match_tol.is_some_and(|t| t <= 0.0) {
            return bad("action_match_tol must be positive");
        }
        self.eval_spec().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn perception(&self) -> PerceptionConfig {
        PerceptionConfig::for_env(&self.env).with_repr(self.state_repr)
    }

    pub fn build_config(&self) -> BuildConfig {
        BuildConfig {
            clusters: self.clusters,
            isolate_metric: self.isolate_metric,
            cluster_metric: self.cluster_metric,
            bind_metric: self.bind_metric,
            seed: self.seed(),
        }
    }

    pub fn controller_config(&self) -> ControllerConfig {
        let mut c = ControllerConfig::for_env(&self.env, self.bind_metric);
        c.selection = self.selection_mode;
        if let Some(t) = self.satisfied_threshold {
            c.satisfied_threshold = t;
        }
        c.bind_max_distance = self.bind_max_distance;
        c.edge_action = self.edge_action;
        c
    }

    pub fn eval_spec(&self) -> EvalSpec {
        let mut spec = EvalSpec::new(self.method, self.env.clone());
        spec.perception = self.perception();
        spec.object_counts = self.eval_objects.clone();
        spec.episodes = self.episodes;
        spec.seeds = self.seeds;
        spec.base_seed = self.seed();
        spec.horizon_multiplier = self.horizon_multiplier;
        spec.action_noise_std = self.action_noise_std;
        spec.controller = self.controller_config();
        spec.cem = self.cem;
        spec.action_match_tol = self.action_match_tol.unwrap_or(self.env.pick_threshold);
        spec
    }

    /// Fully resolved configuration; parsing it back gives the same config
    /// up to derived values becoming explicit.
    pub fn to_text(&self) -> String {
        let mut out = self.env.to_text();
        let c = self.controller_config();
        let list = |v: &[usize]| v.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",");
        let _ = write!(
            out,
            "buffer_episodes = {}\nepisode_length = {}\nclusters = {}\nstate_repr = {}\n\
             isolate_metric = {}\ncluster_metric = {}\nbind_metric = {}\nselection_mode = {}\n\
             satisfied_threshold = {}\nbind_max_distance = {}\nedge_action = {}\nmethod = {}\n\
             eval_objects = {}\nepisodes = {}\nseeds = {}\nhorizon_multiplier = {}\n\
             action_noise_std = {}\nbuffer_fraction = {}\ncem_iterations = {}\ncem_elite_ratio = {}\n\
             cem_population = {}\ncem_init_std = {}\ncem_max_horizon = {}\naction_match_tol = {}\n",
            self.buffer_episodes,
            self.episode_length,
            self.clusters,
            self.state_repr,
            self.isolate_metric,
            self.cluster_metric,
            self.bind_metric,
            self.selection_mode,
            c.satisfied_threshold,
            self.bind_max_distance.map(|d| d.to_string()).unwrap_or_else(|| "none".into()),
            self.edge_action,
            self.method,
            list(&self.eval_objects),
            self.episodes,
            self.seeds,
            self.horizon_multiplier,
            self.action_noise_std,
            self.buffer_fraction,
            self.cem.iterations,
            self.cem.elite_ratio,
            self.cem.population,
            self.cem.init_std,
            self.cem.max_horizon,
            self.action_match_tol.unwrap_or(self.env.pick_threshold),
        );
        out
    }
}
