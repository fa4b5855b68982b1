//! Streaming reward model: keeps the last `L` observations, trains one
//! truncated-BPTT step per observation and carries the hidden state across
//! episodes for the whole run.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    FeedforwardParams, FeedforwardSizes, HiddenState, HistoryWindow, Prediction, RecurrentParams,
    RecurrentSizes, RewardObservation,
};
use crate::command_space::BinId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Recurrent,
    Feedforward,
}

impl PredictorKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "recurrent" | "rnn" => Some(Self::Recurrent),
            "feedforward" | "mlp" => Some(Self::Feedforward),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Recurrent => "recurrent",
            Self::Feedforward => "feedforward",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub kind: PredictorKind,
    pub hidden: usize,
    pub embed: usize,
    /// Truncation length `L` of the training window.
    pub window: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            kind: PredictorKind::Recurrent,
            hidden: 64,
            embed: 32,
            window: 32,
            learning_rate: 1e-3,
            clip_norm: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RewardModel {
    Recurrent(RecurrentParams),
    Feedforward(FeedforwardParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss_before: f64,
    pub grad_norm: f64,
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlinePredictor {
    config: PredictorConfig,
    model: RewardModel,
    /// State after the most recent observation (empty for the feedforward model).
    hidden: HiddenState,
    window: HistoryWindow,
    /// State just before the oldest item in `window`.
    window_start: HiddenState,
    updates: u64,
    clipped_updates: u64,
}

impl OnlinePredictor {
    pub fn new<R: Rng + ?Sized>(config: PredictorConfig, n_bins: usize, rng: &mut R) -> Result<Self> {
        if config.window == 0 {
            return Err(Error::config("predictor.window", "must be >= 1"));
        }
        if !(config.learning_rate > 0.0 && config.learning_rate.is_finite()) {
            return Err(Error::config("predictor.lr", "must be positive"));
        }
        if config.hidden == 0 || config.embed == 0 {
            return Err(Error::config("predictor.hidden", "sizes must be positive"));
        }
        let (model, hsize) = match config.kind {
            PredictorKind::Recurrent => (
                RewardModel::Recurrent(RecurrentParams::init(
                    n_bins,
                    RecurrentSizes {
                        hidden: config.hidden,
                        embed: config.embed,
                    },
                    rng,
                )),
                config.hidden,
            ),
            PredictorKind::Feedforward => (
                RewardModel::Feedforward(FeedforwardParams::init(
                    n_bins,
                    FeedforwardSizes {
                        embed: config.embed,
                        hidden: config.hidden,
                    },
                    rng,
                )),
                0,
            ),
        };
        Ok(Self {
            config,
            model,
            hidden: HiddenState::zeros(hsize),
            window: HistoryWindow::new(config.window),
            window_start: HiddenState::zeros(hsize),
            updates: 0,
            clipped_updates: 0,
        })
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    pub fn model(&self) -> &RewardModel {
        &self.model
    }

    pub fn hidden(&self) -> &HiddenState {
        &self.hidden
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn clipped_updates(&self) -> u64 {
        self.clipped_updates
    }

    /// Checks internal shapes after deserialization.
    pub fn validate(&self, n_bins: usize) -> Result<()> {
        let hsize = match &self.model {
            RewardModel::Recurrent(p) => {
                p.validate()?;
                if p.n_bins() != n_bins {
                    return Err(Error::CheckpointShape(format!(
                        "predictor table has {} bins, grid has {n_bins}",
                        p.n_bins()
                    )));
                }
                p.hidden_size()
            }
            RewardModel::Feedforward(p) => {
                p.validate()?;
                if p.n_bins() != n_bins {
                    return Err(Error::CheckpointShape(format!(
                        "predictor table has {} bins, grid has {n_bins}",
                        p.n_bins()
                    )));
                }
                0
            }
        };
        if self.hidden.len() != hsize || self.window_start.len() != hsize {
            return Err(Error::CheckpointShape("hidden state size mismatch".into()));
        }
        Ok(())
    }

    /// Score `bin` given everything observed so far.
    pub fn predict(&self, bin: BinId) -> Result<Prediction> {
        match &self.model {
            RewardModel::Recurrent(p) => p.predict(&self.hidden, bin),
            RewardModel::Feedforward(p) => p.predict(bin),
        }
    }

    pub fn predict_all(&self, bins: &[BinId]) -> Result<Vec<Prediction>> {
        match &self.model {
            RewardModel::Recurrent(p) => p.predict_all(&self.hidden, bins),
            RewardModel::Feedforward(p) => p.predict_all(bins),
        }
    }

    /// Record one episode outcome and take one training step on the window.
    pub fn observe(&mut self, bin: BinId, reward: RewardObservation) -> Result<TrainReport> {
        let evicted = self.window.push(bin, reward);
        let lr = self.config.learning_rate;
        let clip = self.config.clip_norm;
        let report = match &mut self.model {
            RewardModel::Recurrent(p) => {
                if let Some((b, r)) = evicted {
                    self.window_start = p.step(&self.window_start, b, r)?;
                }
                let t = p.train_step(&self.window, &self.window_start, lr, clip)?;
                self.hidden = t.h_end;
                TrainReport {
                    loss_before: t.loss_before,
                    grad_norm: t.grad_norm,
                    clipped: t.clipped,
                }
            }
            RewardModel::Feedforward(p) => {
                let t = p.train_step(&self.window, lr, clip)?;
                TrainReport {
                    loss_before: t.loss_before,
                    grad_norm: t.grad_norm,
                    clipped: t.clipped,
                }
            }
        };
        self.updates += 1;
        if report.clipped {
            self.clipped_updates += 1;
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table(n: usize) -> Vec<RewardObservation> {
        (0..n)
            .map(|i| {
                let x = i as f64 / (n - 1) as f64;
                RewardObservation::new(0.2 + 0.6 * x, 0.9 - 0.5 * x).unwrap()
            })
            .collect()
    }

    fn run_stationary(kind: PredictorKind, seed: u64) -> f64 {
        let n = 8;
        let truth = table(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = PredictorConfig {
            kind,
            hidden: 16,
            embed: 8,
            window: 16,
            learning_rate: 0.05,
            clip_norm: 5.0,
        };
        let mut p = OnlinePredictor::new(cfg, n, &mut rng).unwrap();
        for _ in 0..2000 {
            let b = rng.random_range(0..n);
            p.observe(BinId(b), truth[b]).unwrap();
        }
        (0..n)
            .map(|b| {
                let pr = p.predict(BinId(b)).unwrap();
                ((pr.r_lin - truth[b].r_lin).abs() + (pr.r_ang - truth[b].r_ang).abs()) / 2.0
            })
            .sum::<f64>()
            / n as f64
    }

    #[test]
    fn learns_stationary_table() {
        for kind in [PredictorKind::Recurrent, PredictorKind::Feedforward] {
            let err = run_stationary(kind, 42);
            assert!(err < 0.05, "{kind:?}: mean abs error {err}");
        }
    }

    #[test]
    fn training_is_deterministic() {
        let mk = || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut p = OnlinePredictor::new(PredictorConfig::default(), 20, &mut rng).unwrap();
            for i in 0..50 {
                let r = RewardObservation::new((i % 7) as f64 / 7.0, 0.5).unwrap();
                p.observe(BinId(i % 20), r).unwrap();
            }
            p
        };
        let (a, b) = (mk(), mk());
        assert_eq!(a, b);
        match (a.model(), b.model()) {
            (RewardModel::Recurrent(x), RewardModel::Recurrent(y)) => {
                let bits = |m: &RecurrentParams| m.recur.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(x), bits(y));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn hidden_state_persists_between_observations() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = PredictorConfig {
            window: 3,
            ..PredictorConfig::default()
        };
        let mut p = OnlinePredictor::new(cfg, 10, &mut rng).unwrap();
        let r = RewardObservation::new(0.7, 0.2).unwrap();
        for i in 0..6 {
            p.observe(BinId(i), r).unwrap();
        }
        assert!(p.hidden().as_slice().iter().any(|v| *v != 0.0));
        assert_eq!(p.updates(), 6);
    }

    #[test]
    fn rejects_bad_config() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = PredictorConfig {
            window: 0,
            ..PredictorConfig::default()
        };
        assert!(matches!(
            OnlinePredictor::new(cfg, 4, &mut rng),
            Err(Error::Config { .. })
        ));
    }
}
