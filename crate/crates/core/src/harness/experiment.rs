//! The episode loop.
//!
//! Each episode runs, in this order: select a bin, draw a command inside it,
//! roll the environment, train the predictor on the outcome, update the
//! scheduler, and every `W_s` episodes test the success criterion and expand
//! the active range. Reordering these steps changes every trajectory.

use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, RewardNormalization};
use crate::command_space::{ActiveRange, AxisScale, BinId, CommandGrid, AXES};
use crate::error::{Error, Result};
use crate::metrics::{
    cost_of_transport_with, stability_score, RegretTracker, RunSummary, StabilityWeights, SuccessRate,
};
use crate::par;
use crate::predictor::{OnlinePredictor, PredictorConfig, RewardNormalizer};
use crate::proxy_env::{DriftingBandit, EnvKind, Environment, FrontierEnv};
use crate::rng::{self, StreamRng};
use crate::sampler::{utility, Baseline, MetaPolicy, Scheduler, UpdateScope};

/// One JSONL row per episode. Field names are part of the output schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub episode: u64,
    pub bin: usize,
    pub command: [f64; AXES],
    pub r_lin: f64,
    pub r_ang: f64,
    pub pred_lin: Option<f64>,
    pub pred_ang: Option<f64>,
    pub utility: Option<f64>,
    pub observed_utility: f64,
    pub weight: Option<f64>,
    pub v_max: [f64; AXES],
    pub v_cap: Option<f64>,
    pub success: bool,
    pub regret: f64,
    pub range_expanded: bool,
    pub grad_norm: Option<f64>,
    pub clipped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_max: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
}

/// The per-component random streams that advance during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Streams {
    pub sampler: StreamRng,
    pub command: StreamRng,
    pub env: StreamRng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self {
            sampler: rng::stream(seed, rng::SAMPLER),
            command: rng::stream(seed, rng::COMMAND),
            env: rng::stream(seed, rng::ENV),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Accumulator {
    pub successes: u64,
    pub cot_sum: f64,
    pub cot_n: u64,
    pub stability_sum: f64,
    pub stability_n: u64,
    pub utility_sum: f64,
    pub regret: RegretTracker,
    pub episodes_to_90: Option<u64>,
    pub capability_episodes_to_90: Option<u64>,
    pub clipped_updates: u64,
}

/// Everything that changes while a run advances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub episode: u64,
    pub range: ActiveRange,
    pub scheduler: Scheduler,
    pub predictor: Option<OnlinePredictor>,
    pub normalizer: Option<RewardNormalizer>,
    pub env: Environment,
    pub streams: Streams,
    pub recent_utility: VecDeque<f64>,
    pub acc: Accumulator,
}

pub struct Experiment {
    config: ExperimentConfig,
    seed: u64,
    grid: CommandGrid,
    scale: AxisScale,
    stability_weights: StabilityWeights,
    state: RunState,
    active: Vec<BinId>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let grid = CommandGrid::new(config.grid_bins)?;
        let n = grid.len();
        let range = ActiveRange::new(config.range_initial, config.range_cap, config.range_step)?;
        let scheduler = Scheduler::new(config.scheduler, n)?;
        let predictor = match config.predictor_kind {
            Some(kind) => {
                let mut init = rng::stream(seed, rng::PREDICTOR_INIT);
                Some(OnlinePredictor::new(PredictorConfig { kind, ..config.predictor }, n, &mut init)?)
            }
            None => None,
        };
        let env = match config.env_kind {
            EnvKind::Frontier => Environment::Frontier(FrontierEnv::new(config.frontier_params())?),
            EnvKind::DriftingBandit => {
                let mut init = rng::stream(seed, rng::ENV_INIT);
                Environment::DriftingBandit(DriftingBandit::new(config.drift, n, &mut init)?)
            }
        };
        let normalizer = match config.normalization {
            RewardNormalization::None => None,
            RewardNormalization::RunningMax => Some(RewardNormalizer::default()),
        };
        let state = RunState {
            episode: 0,
            range,
            scheduler,
            predictor,
            normalizer,
            env,
            streams: Streams::new(seed),
            recent_utility: VecDeque::with_capacity(config.success.window),
            acc: Accumulator::default(),
        };
        Self::assemble(config, seed, grid, state)
    }

    fn assemble(config: ExperimentConfig, seed: u64, grid: CommandGrid, state: RunState) -> Result<Self> {
        let scale = AxisScale::from_caps(config.range_cap);
        let active = grid.bins_in_range(&state.range, &scale)?;
        Ok(Self {
            stability_weights: StabilityWeights(config.metrics.stability_weights.clone()),
            config,
            seed,
            grid,
            scale,
            state,
            active,
        })
    }

    /// Rebuild from saved parts, checking that every table matches the grid.
    pub fn restore(config: ExperimentConfig, seed: u64, grid: CommandGrid, state: RunState) -> Result<Self> {
        config.validate()?;
        if grid.axis_bins() != config.grid_bins {
            return Err(Error::CheckpointShape(format!(
                "grid {:?} does not match configured {:?}",
                grid.axis_bins(),
                config.grid_bins
            )));
        }
        let n = grid.len();
        state.scheduler.validate(n)?;
        if let Some(p) = &state.predictor {
            p.validate(n)?;
        }
        if let Environment::DriftingBandit(b) = &state.env {
            if b.means().len() != n {
                return Err(Error::CheckpointShape(format!(
                    "bandit has {} means, grid has {n} bins",
                    b.means().len()
                )));
            }
        }
        if state.env.kind() != config.env_kind {
            return Err(Error::CheckpointBody("environment kind differs from the config".into()));
        }
        ActiveRange::new(state.range.v_max, state.range.cap, state.range.step)
            .map_err(|e| Error::CheckpointBody(e.to_string()))?;
        if state.recent_utility.len() > config.success.window {
            return Err(Error::CheckpointShape("utility window longer than configured".into()));
        }
        Self::assemble(config, seed, grid, state)
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn grid(&self) -> &CommandGrid {
        &self.grid
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn episode(&self) -> u64 {
        self.state.episode
    }

    pub fn range(&self) -> &ActiveRange {
        &self.state.range
    }

    pub fn active(&self) -> &[BinId] {
        &self.active
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.state.scheduler
    }

    pub fn is_done(&self) -> bool {
        self.state.episode >= self.config.budget
    }

    /// Raise the total budget (used when resuming with a longer run).
    pub fn set_budget(&mut self, budget: u64) -> Result<()> {
        if budget == 0 {
            return Err(Error::config("run.budget", "must be >= 1"));
        }
        self.config.budget = budget;
        Ok(())
    }

    pub fn set_checkpoint_every(&mut self, every: u64) {
        self.config.checkpoint_every = every;
    }

    /// Current sampling distribution, where the scheduler has one.
    pub fn policy(&self) -> Result<Option<MetaPolicy>> {
        self.state.scheduler.policy(&self.active)
    }

    fn oracle_utility(&self, bin: BinId) -> Result<f64> {
        let p = self
            .state
            .env
            .true_expected_reward(bin, &self.grid, &self.state.range, &self.scale)?;
        Ok(utility(&p, self.config.scheduler.utility.alpha))
    }

    /// Best oracle utility over the active bins.
    fn oracle_best(&self) -> Result<f64> {
        let vals = par::map_slice(&self.active, |&b| self.oracle_utility(b));
        let mut best = f64::NEG_INFINITY;
        for v in vals {
            best = best.max(v?);
        }
        Ok(best)
    }

    /// Advance one episode.
    pub fn step(&mut self) -> Result<RunRecord> {
        let t = self.state.episode;
        self.step_inner().map_err(|e| e.at_episode(t))
    }

    fn step_inner(&mut self) -> Result<RunRecord> {
        let started = self.config.wall_clock.then(Instant::now);
        let alpha = self.config.scheduler.utility.alpha;
        let t = self.state.episode;

        let bin = self.state.scheduler.select(&self.active, &mut self.state.streams.sampler)?;
        let cmd = self
            .grid
            .sample_command(bin, &self.state.range, &self.scale, &mut self.state.streams.command)?;

        let best = self.oracle_best()?;
        let chosen = self.oracle_utility(bin)?;

        let st = &mut self.state;
        let outcome = st.env.step(bin, &cmd, &mut st.streams.env)?;
        let raw = outcome.reward;
        let observed_utility = alpha * raw.r_lin + (1.0 - alpha) * raw.r_ang;
        let obs = match &mut st.normalizer {
            Some(n) => n.normalize(raw.as_array())?,
            None => raw,
        };

        let train = match &mut st.predictor {
            Some(p) => Some(p.observe(bin, obs)?),
            None => None,
        };
        let prediction = match &st.predictor {
            Some(p) => Some(p.predict(bin)?),
            None => None,
        };

        let mut weight = None;
        let mut predicted_utility = prediction.as_ref().map(|p| utility(p, alpha));
        if st.scheduler.kind().uses_predictor() {
            let p = st
                .predictor
                .as_ref()
                .ok_or_else(|| Error::config("predictor.kind", "scheduler needs a predictor"))?;
            let cfg = st.scheduler.config();
            let w = if cfg.scope == UpdateScope::Visited && cfg.baseline == Baseline::None {
                let u = predicted_utility.unwrap_or_default();
                st.scheduler.update_weights(bin, &[bin], &[u])?
            } else {
                let utils: Vec<f64> = p.predict_all(&self.active)?.iter().map(|q| utility(q, alpha)).collect();
                if let Some(i) = self.active.iter().position(|&b| b == bin) {
                    predicted_utility = Some(utils[i]);
                }
                st.scheduler.update_weights(bin, &self.active, &utils)?
            };
            weight = Some(w);
        } else {
            st.scheduler.observe_reward(bin, observed_utility.clamp(0.0, 1.0))?;
        }

        let window = self.config.success.window;
        if st.recent_utility.len() == window {
            st.recent_utility.pop_front();
        }
        st.recent_utility.push_back(observed_utility);
        let mut range_expanded = false;
        if self.config.range_expand && (t + 1) % window as u64 == 0 {
            let recent: Vec<f64> = st.recent_utility.iter().copied().collect();
            if self.config.success.is_met(&recent) {
                let next = st.range.expand(true);
                if next != st.range {
                    st.range = next;
                    range_expanded = true;
                }
            }
        }

        let regret = st.acc.regret.record(best, chosen)?;
        let acc = &mut st.acc;
        acc.utility_sum += observed_utility;
        if outcome.success {
            acc.successes += 1;
        }
        if let Some(trace) = &outcome.trace {
            if let Some(c) = cost_of_transport_with(
                trace,
                self.config.metrics.mass,
                self.config.metrics.gravity,
                self.config.metrics.cot_mode,
            ) {
                acc.cot_sum += c;
                acc.cot_n += 1;
            }
        }
        if let Some(comp) = &outcome.components {
            acc.stability_sum += stability_score(comp, &self.stability_weights)?;
            acc.stability_n += 1;
        }
        if let Some(tr) = &train {
            if tr.clipped {
                acc.clipped_updates += 1;
            }
        }
        if acc.episodes_to_90.is_none() && st.range.v_max[0] >= 0.9 * st.range.cap[0] {
            acc.episodes_to_90 = Some(t + 1);
        }
        let v_cap = st.env.v_cap();
        if acc.capability_episodes_to_90.is_none() && v_cap.is_some_and(|v| v >= 0.9 * self.config.range_cap[0]) {
            acc.capability_episodes_to_90 = Some(t + 1);
        }
        st.episode += 1;
        let norm_max = st.normalizer.as_ref().map(|n| n.running_max());
        let range = st.range;
        if range_expanded {
            self.active = self.grid.bins_in_range(&range, &self.scale)?;
        }

        Ok(RunRecord {
            episode: t,
            bin: bin.0,
            command: cmd.as_array(),
            r_lin: raw.r_lin,
            r_ang: raw.r_ang,
            pred_lin: prediction.map(|p| p.r_lin),
            pred_ang: prediction.map(|p| p.r_ang),
            utility: predicted_utility,
            observed_utility,
            weight,
            v_max: range.v_max,
            v_cap,
            success: outcome.success,
            regret,
            range_expanded,
            grad_norm: train.map(|t| t.grad_norm),
            clipped: train.is_some_and(|t| t.clipped),
            norm_max,
            wall_clock_s: started.map(|s| s.elapsed().as_secs_f64()),
        })
    }

    /// Run to the budget, handing every record to `sink`.
    pub fn run_with<F>(&mut self, mut sink: F) -> Result<RunSummary>
    where
        F: FnMut(&Experiment, &RunRecord) -> Result<()>,
    {
        while !self.is_done() {
            let rec = self.step()?;
            sink(self, &rec)?;
        }
        self.summary()
    }

    pub fn summary(&self) -> Result<RunSummary> {
        let acc = &self.state.acc;
        let n = self.state.episode;
        let success = if n == 0 {
            SuccessRate {
                rate: 0.0,
                ci_low: 0.0,
                ci_high: 0.0,
                n: 0,
            }
        } else {
            SuccessRate::from_counts(acc.successes as usize, n as usize)?
        };
        Ok(RunSummary {
            method: self.config.method().label(),
            seed: self.seed,
            episodes: n,
            episodes_to_90: acc.episodes_to_90,
            capability_episodes_to_90: acc.capability_episodes_to_90,
            final_v_max: self.state.range.v_max,
            final_v_cap: self.state.env.v_cap(),
            mean_cot: (acc.cot_n > 0).then(|| acc.cot_sum / acc.cot_n as f64),
            stability: (acc.stability_n > 0).then(|| acc.stability_sum / acc.stability_n as f64),
            success,
            cumulative_regret: acc.regret.total(),
            mean_utility: if n > 0 { acc.utility_sum / n as f64 } else { 0.0 },
            clipped_updates: acc.clipped_updates,
        })
    }

    /// Hand the state out, e.g. for checkpointing.
    pub fn parts(&self) -> (&ExperimentConfig, u64, &CommandGrid, &RunState) {
        (&self.config, self.seed, &self.grid, &self.state)
    }
}

/// Run a whole experiment in memory, returning its summary and records.
pub fn run_experiment(config: &ExperimentConfig, seed: u64) -> Result<(RunSummary, Vec<RunRecord>)> {
    let mut exp = Experiment::new(config.clone(), seed)?;
    let mut records = Vec::with_capacity(config.budget as usize);
    let summary = exp.run_with(|_, r| {
        records.push(r.clone());
        Ok(())
    })?;
    Ok((summary, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(text: &str) -> ExperimentConfig {
        let mut c = ExperimentConfig::parse(text).unwrap();
        c.grid_bins = [10, 4, 10];
        c.predictor.hidden = 8;
        c.predictor.embed = 4;
        c.predictor.window = 8;
        c
    }

    #[test]
    fn runs_exactly_budget_episodes() {
        let c = small("run.budget = 120");
        let (s, recs) = run_experiment(&c, 3).unwrap();
        assert_eq!(recs.len(), 120);
        assert_eq!(s.episodes, 120);
        for (i, r) in recs.iter().enumerate() {
            assert_eq!(r.episode, i as u64);
        }
    }

    #[test]
    fn same_seed_same_records() {
        for method in ["ha_greedy", "ucb", "thompson", "uniform", "fixed_grid"] {
            let text = format!(
                "run.budget = 80\nsampler.kind = {method}\npredictor.kind = {}",
                if method == "ha_greedy" { "recurrent" } else { "none" }
            );
            let c = small(&text);
            let (_, a) = run_experiment(&c, 11).unwrap();
            let (_, b) = run_experiment(&c, 11).unwrap();
            assert_eq!(a, b, "{method}");
            let (_, other) = run_experiment(&c, 12).unwrap();
            assert_ne!(a, other, "{method}");
        }
    }

    #[test]
    fn range_only_changes_on_window_boundaries() {
        let mut c = small("run.budget = 400\nrange.success_window = 20\nrange.success_threshold = 0.5");
        c.range_initial = [1.0, 0.5, 1.0];
        let (_, recs) = run_experiment(&c, 1).unwrap();
        let mut prev = c.range_initial;
        let mut grew = false;
        for r in &recs {
            if r.range_expanded {
                assert_eq!((r.episode + 1) % 20, 0);
                grew = true;
            } else {
                assert_eq!(r.v_max, prev);
            }
            for a in 0..AXES {
                assert!(r.v_max[a] >= prev[a] && r.v_max[a] <= c.range_cap[a]);
            }
            prev = r.v_max;
        }
        assert!(grew);
    }

    #[test]
    fn commands_stay_inside_the_active_box() {
        let c = small("run.budget = 300\nsampler.kind = uniform\npredictor.kind = none");
        let mut prev = c.range_initial;
        for r in run_experiment(&c, 5).unwrap().1 {
            for a in 0..AXES {
                assert!(r.command[a].abs() <= prev[a] + 1e-12);
            }
            prev = r.v_max;
        }
    }

    #[test]
    fn regret_increments_are_non_negative() {
        let c = small("run.budget = 200\nenv.kind = drifting_bandit\nsampler.kind = ucb\npredictor.kind = none");
        let (s, recs) = run_experiment(&c, 2).unwrap();
        assert!(recs.iter().all(|r| r.regret >= 0.0));
        let total: f64 = recs.iter().map(|r| r.regret).sum();
        assert!((total - s.cumulative_regret).abs() < 1e-9);
    }

    #[test]
    fn numeric_failure_reports_the_episode() {
        let mut c = small("run.budget = 50");
        c.predictor.learning_rate = 1e300;
        c.predictor.clip_norm = 0.0;
        let err = run_experiment(&c, 0).unwrap_err();
        match err {
            Error::Numeric { episode, .. } => assert!(episode.is_some()),
            other => panic!("expected a numeric failure, got {other}"),
        }
    }
}
