//! Reward predictors over command bins.
//!
//! [`recurrent`] is the history-aware model: a tanh cell whose state
//! summarizes past `(bin, reward)` pairs, and an affine head that scores a
//! candidate bin from the previous state. [`feedforward`] is the history-free
//! ablation. [`online`] wraps either one for streaming use with truncated
//! backpropagation through time.

pub mod feedforward;
pub mod online;
pub mod recurrent;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::command_space::BinId;
use crate::error::{Error, Result};

pub use feedforward::{FeedforwardParams, FeedforwardSizes};
pub use online::{OnlinePredictor, PredictorConfig, PredictorKind, TrainReport};
pub use recurrent::{RecurrentParams, RecurrentSizes};

/// Observed per-episode rewards, normalized to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardObservation {
    pub r_lin: f64,
    pub r_ang: f64,
}

impl RewardObservation {
    pub fn new(r_lin: f64, r_ang: f64) -> Result<Self> {
        for (name, v) in [("r_lin", r_lin), ("r_ang", r_ang)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Argument(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(Self { r_lin, r_ang })
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.r_lin, self.r_ang]
    }
}

/// Predicted `(r̂_lin, r̂_ang)` for a bin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prediction {
    pub r_lin: f64,
    pub r_ang: f64,
}

impl Prediction {
    pub fn new(r_lin: f64, r_ang: f64) -> Self {
        Self { r_lin, r_ang }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.r_lin, self.r_ang]
    }

    pub fn is_finite(&self) -> bool {
        self.r_lin.is_finite() && self.r_ang.is_finite()
    }
}

/// Recurrent state; components stay in `(-1, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HiddenState(pub Vec<f64>);

impl HiddenState {
    pub fn zeros(size: usize) -> Self {
        Self(vec![0.0; size])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Chronological `(bin, reward)` pairs, bounded by a truncation length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryWindow {
    capacity: usize,
    items: VecDeque<(BinId, RewardObservation)>,
}

impl HistoryWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity + 1),
        }
    }

    pub fn from_items(items: impl IntoIterator<Item = (BinId, RewardObservation)>) -> Self {
        let items: VecDeque<_> = items.into_iter().collect();
        Self {
            capacity: items.len().max(1),
            items,
        }
    }

    /// Appends and returns the evicted oldest item once over capacity.
    pub fn push(&mut self, bin: BinId, reward: RewardObservation) -> Option<(BinId, RewardObservation)> {
        self.items.push_back((bin, reward));
        if self.items.len() > self.capacity {
            self.items.pop_front()
        } else {
            None
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &(BinId, RewardObservation)> + '_ {
        self.items.iter()
    }
}

/// Running-max normalization of raw rewards into `[0, 1]`, per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardNormalizer {
    running_max: [f64; 2],
}

impl Default for RewardNormalizer {
    fn default() -> Self {
        Self {
            running_max: [0.0; 2],
        }
    }
}

impl RewardNormalizer {
    pub fn running_max(&self) -> [f64; 2] {
        self.running_max
    }

    /// Updates the running max with `raw` and returns the normalized pair.
    /// Raw rewards must be non-negative.
    pub fn normalize(&mut self, raw: [f64; 2]) -> Result<RewardObservation> {
        let mut out = [0.0; 2];
        for c in 0..2 {
            if !(raw[c].is_finite() && raw[c] >= 0.0) {
                return Err(Error::Argument(format!("raw reward {} is not >= 0", raw[c])));
            }
            self.running_max[c] = self.running_max[c].max(raw[c]);
            out[c] = if self.running_max[c] > 0.0 {
                (raw[c] / self.running_max[c]).min(1.0)
            } else {
                0.0
            };
        }
        RewardObservation::new(out[0], out[1])
    }
}

/// Global L2-norm gradient clipping. Returns `(norm_before, clipped)`.
pub(crate) fn clip_factor(sq_norm: f64, bound: f64) -> (f64, f64, bool) {
    let norm = sq_norm.sqrt();
    if bound > 0.0 && norm > bound {
        (norm, bound / norm, true)
    } else {
        (norm, 1.0, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_observation_range() {
        assert!(RewardObservation::new(0.0, 1.0).is_ok());
        assert!(RewardObservation::new(1.1, 0.0).is_err());
        assert!(RewardObservation::new(0.5, -0.1).is_err());
    }

    #[test]
    fn window_evicts_oldest() {
        let r = RewardObservation::new(0.5, 0.5).unwrap();
        let mut w = HistoryWindow::new(2);
        assert!(w.push(BinId(0), r).is_none());
        assert!(w.push(BinId(1), r).is_none());
        assert_eq!(w.push(BinId(2), r), Some((BinId(0), r)));
        let bins: Vec<_> = w.iter().map(|(b, _)| b.0).collect();
        assert_eq!(bins, vec![1, 2]);
    }

    #[test]
    fn normalizer_uses_running_max() {
        let mut n = RewardNormalizer::default();
        let a = n.normalize([2.0, 0.5]).unwrap();
        assert_eq!(a.as_array(), [1.0, 1.0]);
        let b = n.normalize([1.0, 0.25]).unwrap();
        assert_eq!(b.as_array(), [0.5, 0.5]);
        assert_eq!(n.running_max(), [2.0, 0.5]);
        assert!(n.normalize([-1.0, 0.0]).is_err());
    }
}
