//! Flat `key = value` experiment configuration.
//!
//! One setting per line, keys namespaced with a dot (`sampler.kappa = 0.2`).
//! `#` starts a comment that runs to the end of the line; blank lines are
//! ignored. Lists are comma separated. Every key is optional and unknown or
//! repeated keys are errors. `docs/config.md` lists every key.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::command_space::{ActiveRange, CommandGrid, SuccessCriterion, AXES};
use crate::error::{Error, Result};
use crate::metrics::{CotMode, COMPONENT_NAMES};
use crate::predictor::{PredictorConfig, PredictorKind};
use crate::proxy_env::{DriftParams, EnvKind, FrontierParams};
use crate::sampler::{Baseline, SchedulerConfig, SchedulerKind, UpdateScope};

/// A scheduler together with the reward model feeding it, written
/// `scheduler[+predictor]`, e.g. `ha_greedy+recurrent` or `ucb`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Method {
    pub scheduler: SchedulerKind,
    pub predictor: Option<PredictorKind>,
}

impl Method {
    pub fn parse(s: &str) -> Option<Self> {
        let mut parts = s.trim().split('+');
        let scheduler = SchedulerKind::parse(parts.next()?.trim())?;
        let predictor = match parts.next() {
            None => None,
            Some(p) => Some(PredictorKind::parse(p.trim())?),
        };
        if parts.next().is_some() {
            return None;
        }
        Some(Self { scheduler, predictor })
    }

    pub fn label(&self) -> String {
        match self.predictor {
            Some(p) => format!("{}+{}", self.scheduler.as_str(), p.as_str()),
            None => self.scheduler.as_str().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub mass: f64,
    pub gravity: f64,
    pub cot_mode: CotMode,
    pub stability_weights: Vec<f64>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            mass: 12.0,
            gravity: 9.81,
            cot_mode: CotMode::Total,
            stability_weights: vec![1.0; COMPONENT_NAMES.len()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardNormalization {
    None,
    RunningMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: Option<String>,
    pub budget: u64,
    pub seeds: Vec<u64>,
    pub checkpoint_every: u64,
    pub grid_bins: [usize; AXES],
    pub range_initial: [f64; AXES],
    pub range_cap: [f64; AXES],
    pub range_step: [f64; AXES],
    pub range_expand: bool,
    pub success: SuccessCriterion,
    pub scheduler: SchedulerConfig,
    pub predictor_kind: Option<PredictorKind>,
    pub predictor: PredictorConfig,
    pub normalization: RewardNormalization,
    pub env_kind: EnvKind,
    pub frontier: FrontierParams,
    pub drift: DriftParams,
    pub metrics: MetricsConfig,
    pub wall_clock: bool,
    pub methods: Vec<Method>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: None,
            budget: 5000,
            seeds: vec![0, 1, 2, 3, 4],
            checkpoint_every: 0,
            grid_bins: [20, 10, 20],
            range_initial: [1.0, 1.0, 1.0],
            range_cap: [7.0, 1.0, 5.0],
            range_step: [0.5, 0.5, 0.5],
            range_expand: true,
            success: SuccessCriterion::default(),
            scheduler: SchedulerConfig::default(),
            predictor_kind: Some(PredictorKind::Recurrent),
            predictor: PredictorConfig::default(),
            normalization: RewardNormalization::RunningMax,
            env_kind: EnvKind::Frontier,
            frontier: FrontierParams::default(),
            drift: DriftParams::default(),
            metrics: MetricsConfig::default(),
            wall_clock: false,
            methods: Vec::new(),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| Error::config(key, format!("expected a number, got `{v}`")))?;
    if !x.is_finite() {
        return Err(Error::config(key, "must be finite"));
    }
    Ok(x)
}

fn parse_uint<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(key, format!("expected a non-negative integer, got `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::config(key, format!("expected true or false, got `{v}`"))),
    }
}

fn parse_list<T>(key: &str, v: &str, item: impl Fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| item(key, s.trim())).collect()
}

fn parse_triple<T: Copy>(key: &str, v: &str, item: impl Fn(&str, &str) -> Result<T>) -> Result<[T; AXES]> {
    let xs = parse_list(key, v, item)?;
    <[T; AXES]>::try_from(xs).map_err(|xs| Error::config(key, format!("expected 3 values, got {}", xs.len())))
}

fn parse_enum<T>(key: &str, v: &str, f: impl Fn(&str) -> Option<T>, choices: &str) -> Result<T> {
    f(v).ok_or_else(|| Error::config(key, format!("unknown value `{v}`; expected one of {choices}")))
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parse and validate.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", i + 1), "expected `key = value`"))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::config(key, format!("repeated on line {}", i + 1)));
            }
            cfg.set(key, value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply one setting without validating the whole config.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "run.name" => self.name = (!v.is_empty()).then(|| v.to_string()),
            "run.budget" => self.budget = parse_uint(key, v)?,
            "run.seeds" => self.seeds = parse_list(key, v, parse_uint)?,
            "run.checkpoint_every" => self.checkpoint_every = parse_uint(key, v)?,
            "grid.bins" => self.grid_bins = parse_triple(key, v, parse_uint)?,
            "range.initial" => self.range_initial = parse_triple(key, v, parse_f64)?,
            "range.cap" => self.range_cap = parse_triple(key, v, parse_f64)?,
            "range.step" => self.range_step = parse_triple(key, v, parse_f64)?,
            "range.expand" => self.range_expand = parse_bool(key, v)?,
            "range.success_window" => self.success.window = parse_uint(key, v)?,
            "range.success_threshold" => self.success.threshold = parse_f64(key, v)?,
            "sampler.kind" => {
                self.scheduler.kind = parse_enum(key, v, SchedulerKind::parse, "ha_greedy, ucb, thompson, uniform, fixed_grid")?
            }
            "sampler.alpha" => self.scheduler.utility.alpha = parse_f64(key, v)?,
            "sampler.kappa" => self.scheduler.utility.kappa = parse_f64(key, v)?,
            "sampler.epsilon" => self.scheduler.utility.epsilon = parse_f64(key, v)?,
            "sampler.initial_weight" => self.scheduler.initial_weight = parse_f64(key, v)?,
            "sampler.scope" => self.scheduler.scope = parse_enum(key, v, UpdateScope::parse, "visited, active")?,
            "sampler.baseline" => self.scheduler.baseline = parse_enum(key, v, Baseline::parse, "none, policy_mean")?,
            "sampler.thompson_threshold" => self.scheduler.thompson_threshold = parse_f64(key, v)?,
            "predictor.kind" => {
                self.predictor_kind = match v {
                    "none" => None,
                    _ => Some(parse_enum(key, v, PredictorKind::parse, "recurrent, feedforward, none")?),
                }
            }
            "predictor.hidden" => self.predictor.hidden = parse_uint(key, v)?,
            "predictor.embed" => self.predictor.embed = parse_uint(key, v)?,
            "predictor.window" => self.predictor.window = parse_uint(key, v)?,
            "predictor.lr" => self.predictor.learning_rate = parse_f64(key, v)?,
            "predictor.clip" => self.predictor.clip_norm = parse_f64(key, v)?,
            "predictor.normalize" => {
                self.normalization = match v {
                    "none" => RewardNormalization::None,
                    "running_max" => RewardNormalization::RunningMax,
                    _ => return Err(Error::config(key, format!("unknown value `{v}`; expected none or running_max"))),
                }
            }
            "env.kind" => self.env_kind = parse_enum(key, v, EnvKind::parse, "frontier, drifting_bandit")?,
            "env.v_cap0" => self.frontier.v_cap0 = parse_f64(key, v)?,
            "env.omega_cap0" => self.frontier.omega_cap0 = parse_f64(key, v)?,
            "env.delta" => self.frontier.delta = parse_f64(key, v)?,
            "env.omega_delta" => self.frontier.omega_delta = parse_f64(key, v)?,
            "env.margin" => self.frontier.margin = parse_f64(key, v)?,
            "env.sigma" => self.frontier.sigma = parse_f64(key, v)?,
            "env.noise_std" => {
                let x = parse_f64(key, v)?;
                self.frontier.noise_std = x;
                self.drift.noise_std = x;
            }
            "env.episode_len" => self.frontier.episode_len = parse_uint(key, v)?,
            "env.joints" => self.frontier.joints = parse_uint(key, v)?,
            "env.dt" => self.frontier.dt = parse_f64(key, v)?,
            "env.c_tau" => self.frontier.c_tau = parse_f64(key, v)?,
            "env.c_q" => self.frontier.c_q = parse_f64(key, v)?,
            "env.drift_std" => self.drift.drift_std = parse_f64(key, v)?,
            "env.success_threshold" => {
                let x = parse_f64(key, v)?;
                self.frontier.success_threshold = x;
                self.drift.success_threshold = x;
            }
            "metrics.mass" => self.metrics.mass = parse_f64(key, v)?,
            "metrics.gravity" => self.metrics.gravity = parse_f64(key, v)?,
            "metrics.cot_mode" => self.metrics.cot_mode = parse_enum(key, v, CotMode::parse, "total, per_step")?,
            "metrics.stability_weights" => self.metrics.stability_weights = parse_list(key, v, parse_f64)?,
            "output.wall_clock" => self.wall_clock = parse_bool(key, v)?,
            "sweep.methods" => {
                self.methods = parse_list(key, v, |k, s| {
                    parse_enum(k, s, Method::parse, "scheduler[+recurrent|+feedforward]")
                })?
            }
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::config("run.budget", "must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("run.seeds", "at least one seed is required"));
        }
        let grid = CommandGrid::new(self.grid_bins).map_err(|e| Error::config("grid.bins", e.to_string()))?;
        ActiveRange::new(self.range_initial, self.range_cap, self.range_step)?;
        if self.success.window == 0 {
            return Err(Error::config("range.success_window", "must be >= 1"));
        }
        self.scheduler.validate()?;
        if self.scheduler.kind.uses_predictor() && self.predictor_kind.is_none() {
            return Err(Error::config("predictor.kind", "ha_greedy needs a recurrent or feedforward predictor"));
        }
        if self.predictor.window == 0 {
            return Err(Error::config("predictor.window", "must be >= 1"));
        }
        if self.predictor.hidden == 0 {
            return Err(Error::config("predictor.hidden", "must be >= 1"));
        }
        if self.predictor.embed == 0 {
            return Err(Error::config("predictor.embed", "must be >= 1"));
        }
        if !(self.predictor.learning_rate > 0.0) {
            return Err(Error::config("predictor.lr", "must be > 0"));
        }
        if !(self.predictor.clip_norm >= 0.0) {
            return Err(Error::config("predictor.clip", "must be >= 0 (0 disables clipping)"));
        }
        match self.env_kind {
            EnvKind::Frontier => self.frontier_params().validate()?,
            EnvKind::DriftingBandit => self.drift.validate()?,
        }
        if !(self.metrics.mass > 0.0) {
            return Err(Error::config("metrics.mass", "must be > 0"));
        }
        if !(self.metrics.gravity > 0.0) {
            return Err(Error::config("metrics.gravity", "must be > 0"));
        }
        if self.metrics.stability_weights.len() != COMPONENT_NAMES.len() {
            return Err(Error::config(
                "metrics.stability_weights",
                format!("expected {} weights, got {}", COMPONENT_NAMES.len(), self.metrics.stability_weights.len()),
            ));
        }
        for m in &self.methods {
            if m.scheduler.uses_predictor() && m.predictor.is_none() {
                return Err(Error::config("sweep.methods", format!("`{}` needs +recurrent or +feedforward", m.label())));
            }
        }
        debug_assert!(!grid.is_empty());
        Ok(())
    }

    /// Frontier parameters with the command caps taken from the range caps.
    pub fn frontier_params(&self) -> FrontierParams {
        FrontierParams {
            caps: self.range_cap,
            ..self.frontier
        }
    }

    pub fn method(&self) -> Method {
        Method {
            scheduler: self.scheduler.kind,
            predictor: self.predictor_kind,
        }
    }

    /// This config with `method` swapped in; everything else unchanged.
    pub fn with_method(&self, method: Method) -> Self {
        let mut c = self.clone();
        c.scheduler.kind = method.scheduler;
        c.predictor_kind = method.predictor;
        c
    }

    /// Methods to sweep: `sweep.methods`, or this config's own method.
    pub fn sweep_methods(&self) -> Vec<Method> {
        if self.methods.is_empty() {
            vec![self.method()]
        } else {
            self.methods.clone()
        }
    }

    /// The run label used for file names.
    pub fn run_label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.method().label())
    }

    /// Everything except the method must agree for two configs to be
    /// compared.
    pub fn same_setting(&self, other: &Self) -> bool {
        let strip = |c: &Self| {
            let mut c = c.with_method(Method {
                scheduler: SchedulerKind::Uniform,
                predictor: None,
            });
            c.name = None;
            c.methods.clear();
            c.seeds.clear();
            c
        };
        strip(self) == strip(other)
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let list = |xs: &[f64]| xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let ints = |xs: &[u64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        if let Some(n) = &self.name {
            kv("run.name", n.clone());
        }
        kv("run.budget", self.budget.to_string());
        kv("run.seeds", ints(&self.seeds));
        kv("run.checkpoint_every", self.checkpoint_every.to_string());
        kv(
            "grid.bins",
            self.grid_bins.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "),
        );
        kv("range.initial", list(&self.range_initial));
        kv("range.cap", list(&self.range_cap));
        kv("range.step", list(&self.range_step));
        kv("range.expand", self.range_expand.to_string());
        kv("range.success_window", self.success.window.to_string());
        kv("range.success_threshold", format!("{:?}", self.success.threshold));
        let sc = &self.scheduler;
        kv("sampler.kind", sc.kind.as_str().into());
        kv("sampler.alpha", format!("{:?}", sc.utility.alpha));
        kv("sampler.kappa", format!("{:?}", sc.utility.kappa));
        kv("sampler.epsilon", format!("{:?}", sc.utility.epsilon));
        kv("sampler.initial_weight", format!("{:?}", sc.initial_weight));
        kv("sampler.scope", sc.scope.as_str().into());
        kv("sampler.baseline", sc.baseline.as_str().into());
        kv("sampler.thompson_threshold", format!("{:?}", sc.thompson_threshold));
        kv(
            "predictor.kind",
            self.predictor_kind.map_or("none", |k| k.as_str()).into(),
        );
        let p = &self.predictor;
        kv("predictor.hidden", p.hidden.to_string());
        kv("predictor.embed", p.embed.to_string());
        kv("predictor.window", p.window.to_string());
        kv("predictor.lr", format!("{:?}", p.learning_rate));
        kv("predictor.clip", format!("{:?}", p.clip_norm));
        kv(
            "predictor.normalize",
            match self.normalization {
                RewardNormalization::None => "none",
                RewardNormalization::RunningMax => "running_max",
            }
            .into(),
        );
        let f = &self.frontier;
        kv("env.kind", self.env_kind.as_str().into());
        kv("env.v_cap0", format!("{:?}", f.v_cap0));
        kv("env.omega_cap0", format!("{:?}", f.omega_cap0));
        kv("env.delta", format!("{:?}", f.delta));
        kv("env.omega_delta", format!("{:?}", f.omega_delta));
        kv("env.margin", format!("{:?}", f.margin));
        kv("env.sigma", format!("{:?}", f.sigma));
        kv("env.noise_std", format!("{:?}", f.noise_std));
        kv("env.episode_len", f.episode_len.to_string());
        kv("env.joints", f.joints.to_string());
        kv("env.dt", format!("{:?}", f.dt));
        kv("env.c_tau", format!("{:?}", f.c_tau));
        kv("env.c_q", format!("{:?}", f.c_q));
        kv("env.drift_std", format!("{:?}", self.drift.drift_std));
        kv("env.success_threshold", format!("{:?}", f.success_threshold));
        kv("metrics.mass", format!("{:?}", self.metrics.mass));
        kv("metrics.gravity", format!("{:?}", self.metrics.gravity));
        kv("metrics.cot_mode", self.metrics.cot_mode.as_str().into());
        kv("metrics.stability_weights", list(&self.metrics.stability_weights));
        kv("output.wall_clock", self.wall_clock.to_string());
        if !self.methods.is_empty() {
            kv(
                "sweep.methods",
                self.methods.iter().map(|m| m.label()).collect::<Vec<_>>().join(", "),
            );
        }
        s
    }
}
