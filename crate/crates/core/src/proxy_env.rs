//! Synthetic environments standing in for a robot trainer.
//!
//! [`FrontierEnv`] has a forward capability `v_cap` (and a yaw capability
//! `omega_cap`) that only grows when the learner practises commands close to
//! it, so rewards depend on the whole command history. [`DriftingBandit`]
//! gives every bin a mean reward that follows a reflected random walk.
//! Both expose a noise-free oracle used for regret.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::command_space::{ActiveRange, AxisScale, BinId, Command, CommandGrid, AXES};
use crate::error::{Error, Result};
use crate::metrics::{RewardComponents, TrajectoryLog, COMPONENT_NAMES};
use crate::predictor::{Prediction, RewardObservation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierParams {
    pub v_cap0: f64,
    pub omega_cap0: f64,
    /// Capability gain per frontier episode, forward and yaw.
    pub delta: f64,
    pub omega_delta: f64,
    /// Half-width `m_f` of the band around the capability that counts as
    /// frontier practice.
    pub margin: f64,
    pub sigma: f64,
    pub noise_std: f64,
    pub episode_len: usize,
    pub joints: usize,
    pub dt: f64,
    /// Torque and joint-speed gains for the synthetic trace.
    pub c_tau: f64,
    pub c_q: f64,
    /// Physical command caps `(v_x, v_y, ω_z)`.
    pub caps: [f64; AXES],
    pub success_threshold: f64,
}

impl Default for FrontierParams {
    fn default() -> Self {
        Self {
            v_cap0: 1.0,
            omega_cap0: 1.0,
            delta: 0.002,
            omega_delta: 0.002,
            margin: 0.5,
            sigma: 1.0,
            noise_std: 0.05,
            episode_len: 50,
            joints: 12,
            dt: 0.005,
            c_tau: 2.0,
            c_q: 4.0,
            caps: [7.0, 1.0, 5.0],
            success_threshold: 0.8,
        }
    }
}

impl FrontierParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, "must be > 0"))
            }
        };
        pos("env.v_cap0", self.v_cap0)?;
        pos("env.omega_cap0", self.omega_cap0)?;
        pos("env.sigma", self.sigma)?;
        pos("env.dt", self.dt)?;
        for (key, v) in [
            ("env.delta", self.delta),
            ("env.omega_delta", self.omega_delta),
            ("env.margin", self.margin),
            ("env.noise_std", self.noise_std),
            ("env.c_tau", self.c_tau),
            ("env.c_q", self.c_q),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be >= 0"));
            }
        }
        if self.episode_len == 0 {
            return Err(Error::config("env.episode_len", "must be >= 1"));
        }
        if self.joints == 0 {
            return Err(Error::config("env.joints", "must be >= 1"));
        }
        if self.v_cap0 > self.caps[0] || self.omega_cap0 > self.caps[2] {
            return Err(Error::config("env.v_cap0", "initial capability exceeds the caps"));
        }
        Ok(())
    }
}

/// One episode's result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub reward: RewardObservation,
    pub success: bool,
    /// Achieved forward speed.
    pub achieved_v: f64,
    pub trace: Option<TrajectoryLog>,
    pub components: Option<RewardComponents>,
}

fn tracking_reward(cmd: f64, cap: f64, sigma: f64) -> f64 {
    let e = (cmd.abs() - cap).max(0.0);
    (-(e * e) / (sigma * sigma)).exp()
}

fn in_band(cmd: f64, cap: f64, margin: f64) -> bool {
    let c = cmd.abs();
    c >= cap - margin && c <= cap + margin
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierEnv {
    params: FrontierParams,
    v_cap: f64,
    omega_cap: f64,
    frontier_episodes: u64,
}

impl FrontierEnv {
    pub fn new(params: FrontierParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            v_cap: params.v_cap0,
            omega_cap: params.omega_cap0,
            frontier_episodes: 0,
        })
    }

    pub fn params(&self) -> &FrontierParams {
        &self.params
    }

    pub fn v_cap(&self) -> f64 {
        self.v_cap
    }

    pub fn omega_cap(&self) -> f64 {
        self.omega_cap
    }

    pub fn frontier_episodes(&self) -> u64 {
        self.frontier_episodes
    }

    /// Noise-free `(r_lin, r_ang)` for a command at the current capability.
    pub fn noiseless_reward(&self, cmd: &Command) -> Prediction {
        Prediction::new(
            tracking_reward(cmd.v_x, self.v_cap, self.params.sigma),
            tracking_reward(cmd.omega_z, self.omega_cap, self.params.sigma),
        )
    }

    /// Noise-free reward at the centre of the bin's share of the active box
    /// (the whole cell when it lies outside the box).
    pub fn true_expected_reward(
        &self,
        bin: BinId,
        grid: &CommandGrid,
        range: &ActiveRange,
        scale: &AxisScale,
    ) -> Result<Prediction> {
        Ok(self.noiseless_reward(&oracle_point(bin, grid, range, scale)?))
    }

    fn check_command(&self, cmd: &Command) -> Result<()> {
        for (a, v) in cmd.as_array().into_iter().enumerate() {
            if !v.is_finite() || v.abs() > self.params.caps[a] * (1.0 + 1e-12) {
                return Err(Error::Argument(format!(
                    "command component {a} = {v} beyond cap {}",
                    self.params.caps[a]
                )));
            }
        }
        Ok(())
    }

    /// Roll one episode. Rewards use the capability at episode start; the
    /// capability then grows if the command was frontier practice.
    pub fn step<R: Rng + ?Sized>(&mut self, cmd: &Command, rng: &mut R) -> Result<EpisodeOutcome> {
        self.check_command(cmd)?;
        let p = self.params;
        let clean = self.noiseless_reward(cmd);
        let n_lin: f64 = rng.sample(StandardNormal);
        let n_ang: f64 = rng.sample(StandardNormal);
        let reward = RewardObservation::new(
            (clean.r_lin + p.noise_std * n_lin).clamp(0.0, 1.0),
            (clean.r_ang + p.noise_std * n_ang).clamp(0.0, 1.0),
        )?;
        let achieved_v = cmd.v_x.abs().min(self.v_cap);
        let achieved_w = cmd.omega_z.abs().min(self.omega_cap);
        let (trace, components) = self.synthesize(cmd, achieved_v, achieved_w, &clean)?;

        let mut practiced = false;
        if in_band(cmd.v_x, self.v_cap, p.margin) {
            self.v_cap = (self.v_cap + p.delta).min(p.caps[0]);
            practiced = true;
        }
        if in_band(cmd.omega_z, self.omega_cap, p.margin) {
            self.omega_cap = (self.omega_cap + p.omega_delta).min(p.caps[2]);
        }
        if practiced {
            self.frontier_episodes += 1;
        }
        Ok(EpisodeOutcome {
            success: reward.r_lin >= p.success_threshold,
            reward,
            achieved_v,
            trace: Some(trace),
            components: Some(components),
        })
    }

    /// Deterministic per-step trace: torque proportional to the command
    /// magnitude, joint speed to the achieved speed, and a slow gait ripple
    /// so steps are not all identical.
    fn synthesize(
        &self,
        cmd: &Command,
        achieved_v: f64,
        achieved_w: f64,
        clean: &Prediction,
    ) -> Result<(TrajectoryLog, RewardComponents)> {
        let p = &self.params;
        let steps = p.episode_len;
        let mag = (cmd.v_x * cmd.v_x + cmd.v_y * cmd.v_y + cmd.omega_z * cmd.omega_z).sqrt();
        let speed = (achieved_v * achieved_v + cmd.v_y * cmd.v_y).sqrt();
        let mut torque = Vec::with_capacity(steps * p.joints);
        let mut joint_vel = Vec::with_capacity(steps * p.joints);
        let mut displacement = Vec::with_capacity(steps);
        for i in 0..steps {
            let phase = std::f64::consts::TAU * i as f64 / steps as f64;
            for j in 0..p.joints {
                let ripple = 1.0 + 0.1 * (phase + j as f64).sin();
                torque.push(p.c_tau * mag * ripple);
                joint_vel.push(p.c_q * (speed + 0.5 * achieved_w) * ripple);
            }
            displacement.push(speed * p.dt);
        }
        let trace = TrajectoryLog::new(p.joints, torque, joint_vel, displacement, p.dt)?;

        let e_lin = (cmd.v_x.abs() - self.v_cap).max(0.0);
        let e_ang = (cmd.omega_z.abs() - self.omega_cap).max(0.0);
        let s2 = p.sigma * p.sigma;
        let strain = (mag / (p.caps[0] + p.caps[1] + p.caps[2])).min(1.0);
        let row = [
            (-(e_lin * e_lin + e_ang * e_ang) / (2.0 * s2)).exp(),
            (-(e_lin * e_lin) / (4.0 * s2)).exp(),
            clean.r_ang,
            clean.r_lin,
            1.0 - 0.5 * strain * strain,
            1.0 - 0.5 * strain,
            (-speed / p.caps[0].max(1e-12)).exp(),
            (-(e_lin + e_ang)).exp(),
            1.0 - strain * strain,
        ];
        debug_assert_eq!(row.len(), COMPONENT_NAMES.len());
        let mut values = Vec::with_capacity(steps * row.len());
        for _ in 0..steps {
            values.extend_from_slice(&row);
        }
        Ok((trace, RewardComponents::new(row.len(), values)?))
    }
}

/// Physical point at which the oracle evaluates a bin.
pub fn oracle_point(bin: BinId, grid: &CommandGrid, range: &ActiveRange, scale: &AxisScale) -> Result<Command> {
    let region = match grid.active_cell(bin, range, scale)? {
        Some(r) => r,
        None => {
            let cell = grid.bin_cell(bin)?;
            [0, 1, 2].map(|a| scale.to_physical(a, cell[a]))
        }
    };
    Ok(Command::from_array([0, 1, 2].map(|a| region[a].center())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftParams {
    /// Standard deviation of the per-episode Gaussian increment of every mean.
    pub drift_std: f64,
    pub noise_std: f64,
    pub success_threshold: f64,
}

impl Default for DriftParams {
    fn default() -> Self {
        Self {
            drift_std: 0.01,
            noise_std: 0.05,
            success_threshold: 0.8,
        }
    }
}

impl DriftParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.drift_std >= 0.0 && self.drift_std.is_finite()) {
            return Err(Error::config("env.drift_std", "must be >= 0"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::config("env.noise_std", "must be >= 0"));
        }
        Ok(())
    }
}

/// Reflect `x` into `[0, 1]`.
fn reflect_unit(mut x: f64) -> f64 {
    // at most a couple of folds for the increments used here
    for _ in 0..64 {
        if x < 0.0 {
            x = -x;
        } else if x > 1.0 {
            x = 2.0 - x;
        } else {
            return x;
        }
    }
    x.clamp(0.0, 1.0)
}

/// Per-bin mean rewards on a reflected Gaussian random walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftingBandit {
    params: DriftParams,
    means: Vec<f64>,
}

impl DriftingBandit {
    /// Means start uniform on `[0, 1]`.
    pub fn new<R: Rng + ?Sized>(params: DriftParams, n_bins: usize, rng: &mut R) -> Result<Self> {
        params.validate()?;
        let means = (0..n_bins).map(|_| rng.random::<f64>()).collect();
        Ok(Self { params, means })
    }

    pub fn with_means(params: DriftParams, means: Vec<f64>) -> Result<Self> {
        params.validate()?;
        if means.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(Error::Argument("bandit means must lie in [0, 1]".into()));
        }
        Ok(Self { params, means })
    }

    pub fn params(&self) -> &DriftParams {
        &self.params
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn mean(&self, bin: BinId) -> Result<f64> {
        self.means
            .get(bin.0)
            .copied()
            .ok_or_else(|| Error::Addressing(format!("bin {} has no mean", bin.0)))
    }

    pub fn true_expected_reward(&self, bin: BinId) -> Result<Prediction> {
        let m = self.mean(bin)?;
        Ok(Prediction::new(m, m))
    }

    /// Reward the played bin, then move every mean one drift step.
    pub fn step<R: Rng + ?Sized>(&mut self, bin: BinId, rng: &mut R) -> Result<EpisodeOutcome> {
        let m = self.mean(bin)?;
        let n_lin: f64 = rng.sample(StandardNormal);
        let n_ang: f64 = rng.sample(StandardNormal);
        let reward = RewardObservation::new(
            (m + self.params.noise_std * n_lin).clamp(0.0, 1.0),
            (m + self.params.noise_std * n_ang).clamp(0.0, 1.0),
        )?;
        self.drift(rng);
        Ok(EpisodeOutcome {
            success: reward.r_lin >= self.params.success_threshold,
            reward,
            achieved_v: 0.0,
            trace: None,
            components: None,
        })
    }

    fn drift<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if self.params.drift_std == 0.0 {
            return;
        }
        let s = self.params.drift_std;
        for m in &mut self.means {
            let z: f64 = StandardNormal.sample(rng);
            *m = reflect_unit(*m + s * z);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Frontier,
    DriftingBandit,
}

impl EnvKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "frontier" => Some(Self::Frontier),
            "drifting_bandit" => Some(Self::DriftingBandit),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Frontier => "frontier",
            Self::DriftingBandit => "drifting_bandit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    Frontier(FrontierEnv),
    DriftingBandit(DriftingBandit),
}

impl Environment {
    pub fn kind(&self) -> EnvKind {
        match self {
            Self::Frontier(_) => EnvKind::Frontier,
            Self::DriftingBandit(_) => EnvKind::DriftingBandit,
        }
    }

    pub fn step<R: Rng + ?Sized>(&mut self, bin: BinId, cmd: &Command, rng: &mut R) -> Result<EpisodeOutcome> {
        match self {
            Self::Frontier(e) => e.step(cmd, rng),
            Self::DriftingBandit(e) => e.step(bin, rng),
        }
    }

    pub fn true_expected_reward(
        &self,
        bin: BinId,
        grid: &CommandGrid,
        range: &ActiveRange,
        scale: &AxisScale,
    ) -> Result<Prediction> {
        match self {
            Self::Frontier(e) => e.true_expected_reward(bin, grid, range, scale),
            Self::DriftingBandit(e) => e.true_expected_reward(bin),
        }
    }

    pub fn v_cap(&self) -> Option<f64> {
        match self {
            Self::Frontier(e) => Some(e.v_cap()),
            Self::DriftingBandit(_) => None,
        }
    }
}
