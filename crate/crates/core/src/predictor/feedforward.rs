//! History-free ablation: a two-layer tanh MLP on the bin embedding.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{clip_factor, HistoryWindow, Prediction};
use crate::command_space::BinId;
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{finite, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedforwardSizes {
    pub embed: usize,
    pub hidden: usize,
}

impl Default for FeedforwardSizes {
    fn default() -> Self {
        Self {
            embed: 32,
            hidden: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedforwardParams {
    /// `N x D`.
    pub bin_embedding: Matrix,
    /// `D x F`.
    pub w1: Matrix,
    pub b1: Vec<f64>,
    /// `F x 2`.
    pub w2: Matrix,
    pub b2: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedforwardGrad {
    pub bin_embedding: BTreeMap<usize, Vec<f64>>,
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: [f64; 2],
}

impl FeedforwardGrad {
    pub fn sq_norm(&self) -> f64 {
        self.bin_embedding
            .values()
            .flat_map(|r| r.iter())
            .map(|v| v * v)
            .sum::<f64>()
            + self.w1.sq_norm()
            + self.b1.iter().map(|v| v * v).sum::<f64>()
            + self.w2.sq_norm()
            + self.b2.iter().map(|v| v * v).sum::<f64>()
    }

    fn scale(&mut self, s: f64) {
        for row in self.bin_embedding.values_mut() {
            row.iter_mut().for_each(|v| *v *= s);
        }
        self.w1.scale(s);
        self.b1.iter_mut().for_each(|v| *v *= s);
        self.w2.scale(s);
        self.b2.iter_mut().for_each(|v| *v *= s);
    }
}

#[derive(Debug, Clone)]
pub struct FeedforwardTrain {
    pub loss_before: f64,
    pub grad_norm: f64,
    pub clipped: bool,
}

impl FeedforwardParams {
    pub fn zeros(n_bins: usize, sizes: FeedforwardSizes) -> Self {
        let FeedforwardSizes { embed: d, hidden: f } = sizes;
        Self {
            bin_embedding: Matrix::zeros(n_bins, d),
            w1: Matrix::zeros(d, f),
            b1: vec![0.0; f],
            w2: Matrix::zeros(f, 2),
            b2: [0.0; 2],
        }
    }

    pub fn init<R: Rng + ?Sized>(n_bins: usize, sizes: FeedforwardSizes, rng: &mut R) -> Self {
        let FeedforwardSizes { embed: d, hidden: f } = sizes;
        let fan = |n: usize| 1.0 / (n as f64).sqrt();
        Self {
            bin_embedding: Matrix::uniform(n_bins, d, 1.0, rng),
            w1: Matrix::uniform(d, f, fan(d), rng),
            b1: vec![0.0; f],
            w2: Matrix::uniform(f, 2, 0.1 * fan(f), rng),
            b2: [0.5; 2],
        }
    }

    pub fn n_bins(&self) -> usize {
        self.bin_embedding.rows()
    }

    pub fn embed_size(&self) -> usize {
        self.bin_embedding.cols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w1.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.embed_size();
        let f = self.hidden_size();
        self.bin_embedding.expect_shape("bin_embedding", self.n_bins(), d)?;
        self.w1.expect_shape("w1", d, f)?;
        self.w2.expect_shape("w2", f, 2)?;
        if self.b1.len() != f {
            return Err(Error::CheckpointShape(format!(
                "b1 has {} entries, expected {f}",
                self.b1.len()
            )));
        }
        Ok(())
    }

    fn layer1(&self, bin: usize) -> Vec<f64> {
        let mut z = self.b1.clone();
        self.w1.accumulate_vec_mul(self.bin_embedding.row(bin), &mut z);
        z.iter_mut().for_each(|v| *v = v.tanh());
        z
    }

    fn layer2(&self, a: &[f64]) -> [f64; 2] {
        let mut out = self.b2;
        for (i, &x) in a.iter().enumerate() {
            let row = self.w2.row(i);
            out[0] += x * row[0];
            out[1] += x * row[1];
        }
        out
    }

    fn raw(&self, bin: BinId) -> Option<Prediction> {
        if bin.0 >= self.n_bins() {
            return None;
        }
        let [a, b] = self.layer2(&self.layer1(bin.0));
        Some(Prediction::new(a, b))
    }

    pub fn predict(&self, bin: BinId) -> Result<Prediction> {
        let p = self
            .raw(bin)
            .ok_or_else(|| Error::Addressing(format!("bin {} outside predictor table", bin.0)))?;
        if !p.is_finite() {
            return Err(Error::numeric(format!("non-finite prediction for bin {}", bin.0)));
        }
        Ok(p)
    }

    pub fn predict_all(&self, bins: &[BinId]) -> Result<Vec<Prediction>> {
        par::map_slice(bins, |&b| self.predict(b)).into_iter().collect()
    }

    pub fn predict_all_sequential(&self, bins: &[BinId]) -> Result<Vec<Prediction>> {
        par::map_slice_sequential(bins, |&b| self.predict(b))
            .into_iter()
            .collect()
    }

    pub fn loss(&self, window: &HistoryWindow) -> Result<f64> {
        if window.is_empty() {
            return Err(Error::Argument("loss over an empty window".into()));
        }
        let mut loss = 0.0;
        for &(bin, r) in window.iter() {
            let p = self.predict(bin)?;
            loss += (r.r_lin - p.r_lin).powi(2) + (r.r_ang - p.r_ang).powi(2);
        }
        Ok(loss / window.len() as f64)
    }

    pub fn gradient(&self, window: &HistoryWindow) -> Result<(FeedforwardGrad, f64)> {
        if window.is_empty() {
            return Err(Error::Argument("loss over an empty window".into()));
        }
        if !(self.w1.is_finite() && self.w2.is_finite() && finite(&self.b1) && finite(&self.b2)) {
            return Err(Error::numeric("feedforward predictor has non-finite parameters"));
        }
        let t_len = window.len() as f64;
        let d = self.embed_size();
        let f = self.hidden_size();
        let mut g = FeedforwardGrad {
            bin_embedding: BTreeMap::new(),
            w1: Matrix::zeros(d, f),
            b1: vec![0.0; f],
            w2: Matrix::zeros(f, 2),
            b2: [0.0; 2],
        };
        let mut loss = 0.0;
        for &(bin, r) in window.iter() {
            if bin.0 >= self.n_bins() {
                return Err(Error::Addressing(format!("bin {} outside predictor table", bin.0)));
            }
            let a = self.layer1(bin.0);
            let p = self.layer2(&a);
            let r = r.as_array();
            loss += (r[0] - p[0]).powi(2) + (r[1] - p[1]).powi(2);
            let dp = [2.0 * (p[0] - r[0]) / t_len, 2.0 * (p[1] - r[1]) / t_len];
            g.b2[0] += dp[0];
            g.b2[1] += dp[1];
            g.w2.add_outer(&a, &dp);
            let mut da = vec![0.0; f];
            self.w2.accumulate_mul_vec(&dp, &mut da);
            let dz: Vec<f64> = da.iter().zip(&a).map(|(d, a)| d * (1.0 - a * a)).collect();
            g.w1.add_outer(self.bin_embedding.row(bin.0), &dz);
            g.b1.iter_mut().zip(&dz).for_each(|(b, d)| *b += d);
            let mut de = vec![0.0; d];
            self.w1.accumulate_mul_vec(&dz, &mut de);
            let row = g.bin_embedding.entry(bin.0).or_insert_with(|| vec![0.0; d]);
            row.iter_mut().zip(&de).for_each(|(a, b)| *a += b);
        }
        loss /= t_len;
        if !loss.is_finite() {
            return Err(Error::numeric("non-finite loss"));
        }
        Ok((g, loss))
    }

    pub fn apply(&mut self, g: &FeedforwardGrad, lr: f64) {
        for (&bin, row) in &g.bin_embedding {
            for (p, d) in self.bin_embedding.row_mut(bin).iter_mut().zip(row) {
                *p -= lr * d;
            }
        }
        self.w1.sub_scaled(&g.w1, lr);
        self.b1.iter_mut().zip(&g.b1).for_each(|(p, d)| *p -= lr * d);
        self.w2.sub_scaled(&g.w2, lr);
        self.b2[0] -= lr * g.b2[0];
        self.b2[1] -= lr * g.b2[1];
    }

    pub fn train_step(&mut self, window: &HistoryWindow, learning_rate: f64, clip_norm: f64) -> Result<FeedforwardTrain> {
        if !(learning_rate > 0.0) {
            return Err(Error::Argument("learning rate must be positive".into()));
        }
        let (mut g, loss_before) = self.gradient(window)?;
        let (grad_norm, factor, clipped) = clip_factor(g.sq_norm(), clip_norm);
        if !grad_norm.is_finite() {
            return Err(Error::numeric("non-finite gradient"));
        }
        if clipped {
            g.scale(factor);
        }
        self.apply(&g, learning_rate);
        Ok(FeedforwardTrain {
            loss_before,
            grad_norm,
            clipped,
        })
    }
}
