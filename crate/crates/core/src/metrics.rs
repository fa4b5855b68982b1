//! Evaluation metrics: cost of transport, stability score, success rate and
//! regret against an environment oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-step joint torques and velocities (`steps × joints`, row-major),
/// per-step displacement and the integration timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub joints: usize,
    pub torque: Vec<f64>,
    pub joint_vel: Vec<f64>,
    pub displacement: Vec<f64>,
    pub dt: f64,
}

impl TrajectoryLog {
    pub fn new(joints: usize, torque: Vec<f64>, joint_vel: Vec<f64>, displacement: Vec<f64>, dt: f64) -> Result<Self> {
        let steps = displacement.len();
        if joints == 0 || torque.len() != steps * joints || joint_vel.len() != steps * joints {
            return Err(Error::Argument(format!(
                "trace arrays disagree: {steps} steps x {joints} joints, {} torques, {} velocities",
                torque.len(),
                joint_vel.len()
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::Argument("dt must be > 0".into()));
        }
        Ok(Self {
            joints,
            torque,
            joint_vel,
            displacement,
            dt,
        })
    }

    pub fn steps(&self) -> usize {
        self.displacement.len()
    }

    /// `Σ_j τ_j(i)·q̇_j(i)·dt` for step `i`.
    fn step_energy(&self, i: usize) -> f64 {
        let r = i * self.joints..(i + 1) * self.joints;
        self.torque[r.clone()]
            .iter()
            .zip(&self.joint_vel[r])
            .map(|(t, q)| t * q)
            .sum::<f64>()
            * self.dt
    }

    pub fn total_energy(&self) -> f64 {
        (0..self.steps()).map(|i| self.step_energy(i)).sum()
    }

    pub fn total_displacement(&self) -> f64 {
        self.displacement.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CotMode {
    /// Total energy over weight times total distance.
    #[default]
    Total,
    /// Mean over steps of per-step energy over weight times per-step distance;
    /// steps without displacement are skipped.
    PerStep,
}

impl CotMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "total" => Some(Self::Total),
            "per_step" => Some(Self::PerStep),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Total => "total",
            Self::PerStep => "per_step",
        }
    }
}

/// Cost of transport. `None` when the trace covers no distance.
pub fn cost_of_transport(log: &TrajectoryLog, mass: f64, gravity: f64) -> Option<f64> {
    cost_of_transport_with(log, mass, gravity, CotMode::Total)
}

pub fn cost_of_transport_with(log: &TrajectoryLog, mass: f64, gravity: f64, mode: CotMode) -> Option<f64> {
    let weight = mass * gravity;
    match mode {
        CotMode::Total => {
            let dist = log.total_displacement();
            (dist > 0.0).then(|| log.total_energy() / (weight * dist))
        }
        CotMode::PerStep => {
            let (sum, n) = (0..log.steps())
                .filter(|&i| log.displacement[i] > 0.0)
                .fold((0.0, 0usize), |(s, n), i| {
                    (s + log.step_energy(i) / (weight * log.displacement[i]), n + 1)
                });
            (n > 0).then(|| sum / n as f64)
        }
    }
}

/// Names of the per-step reward components entering the stability score.
pub const COMPONENT_NAMES: [&str; 9] = [
    "orientation",
    "base_height",
    "angular_velocity",
    "linear_velocity",
    "joint_position_limit",
    "joint_velocity_limit",
    "raw_joint_velocity",
    "self_collision",
    "torque_limit",
];

/// `steps × K` component rewards, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents {
    pub k: usize,
    pub values: Vec<f64>,
}

impl RewardComponents {
    pub fn new(k: usize, values: Vec<f64>) -> Result<Self> {
        if k == 0 || values.len() % k != 0 {
            return Err(Error::Argument(format!("{} values do not form rows of {k}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("non-finite reward component"));
        }
        Ok(Self { k, values })
    }

    pub fn steps(&self) -> usize {
        self.values.len() / self.k
    }

    /// Rows of `other` appended after the rows of `self`.
    pub fn concat(&self, other: &RewardComponents) -> Result<RewardComponents> {
        if self.k != other.k {
            return Err(Error::Argument("component counts differ".into()));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        RewardComponents::new(self.k, values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StabilityWeights(pub Vec<f64>);

impl StabilityWeights {
    pub fn ones(k: usize) -> Self {
        Self(vec![1.0; k])
    }
}

/// `S = (1/steps) Σ_i Σ_k W_k r_k(i)`.
pub fn stability_score(components: &RewardComponents, weights: &StabilityWeights) -> Result<f64> {
    if weights.0.len() != components.k {
        return Err(Error::Argument(format!(
            "{} weights for {} components",
            weights.0.len(),
            components.k
        )));
    }
    let steps = components.steps();
    if steps == 0 {
        return Err(Error::Argument("no steps to score".into()));
    }
    let total: f64 = components
        .values
        .chunks(components.k)
        .map(|row| row.iter().zip(&weights.0).map(|(r, w)| r * w).sum::<f64>())
        .sum();
    Ok(total / steps as f64)
}

/// Success fraction with a 95% Wald interval clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessRate {
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

const Z_95: f64 = 1.959_963_984_540_054;

impl SuccessRate {
    pub fn from_counts(successes: usize, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Argument("success rate of an empty sequence".into()));
        }
        if successes > n {
            return Err(Error::Argument(format!("{successes} successes out of {n}")));
        }
        let rate = successes as f64 / n as f64;
        let half = Z_95 * (rate * (1.0 - rate) / n as f64).sqrt();
        Ok(Self {
            rate,
            ci_low: (rate - half).max(0.0),
            ci_high: (rate + half).min(1.0),
            n,
        })
    }
}

pub fn success_rate(outcomes: &[bool]) -> Result<SuccessRate> {
    SuccessRate::from_counts(outcomes.iter().filter(|&&s| s).count(), outcomes.len())
}

/// Running `Σ_t [max_b u*(b) − u*(b_t)]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RegretTracker {
    total: f64,
}

impl RegretTracker {
    /// Adds one episode and returns its increment. The best utility must
    /// dominate the chosen one.
    pub fn record(&mut self, best: f64, chosen: f64) -> Result<f64> {
        let inc = best - chosen;
        if !inc.is_finite() {
            return Err(Error::numeric("non-finite regret"));
        }
        if inc < -1e-12 {
            return Err(Error::Argument(format!("chosen utility {chosen} exceeds best {best}")));
        }
        let inc = inc.max(0.0);
        self.total += inc;
        Ok(inc)
    }

    pub fn total(&self) -> f64 {
        self.total
    }
}

/// Cumulative regret of a whole sequence of `(best, chosen)` oracle utilities.
pub fn cumulative_regret(episodes: &[(f64, f64)]) -> Result<f64> {
    let mut t = RegretTracker::default();
    for &(best, chosen) in episodes {
        t.record(best, chosen)?;
    }
    Ok(t.total())
}

/// Aggregates of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    pub seed: u64,
    pub episodes: u64,
    /// First episode (1-based) at which the x half-width of the active range
    /// reached 90% of its cap; `None` if it never did.
    pub episodes_to_90: Option<u64>,
    /// Same for the environment's forward capability, where it has one.
    pub capability_episodes_to_90: Option<u64>,
    pub final_v_max: [f64; 3],
    pub final_v_cap: Option<f64>,
    pub mean_cot: Option<f64>,
    pub stability: Option<f64>,
    pub success: SuccessRate,
    pub cumulative_regret: f64,
    pub mean_utility: f64,
    pub clipped_updates: u64,
}

impl RunSummary {
    /// `episodes_to_90`, counting a run that never got there as `budget + 1`.
    pub fn episodes_to_90_or_censored(&self) -> u64 {
        self.episodes_to_90.unwrap_or(self.episodes + 1)
    }
}

/// Median of a non-empty sample (mean of the middle pair for even sizes).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|v| v.is_nan()) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Median absolute deviation from the median.
pub fn mad(values: &[f64]) -> Option<f64> {
    let m = median(values)?;
    let dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    median(&dev)
}
