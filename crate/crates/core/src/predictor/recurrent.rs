//! Vanilla tanh recurrent reward model.
//!
//! Shapes follow the row-vector convention `out = in^T W`:
//!
//! ```text
//! h_t      = tanh(h_{t-1} R + E[b_t] P + r_t W_r + c)
//! r̂(b)    = [h_{t-1}; E[b]] G + g
//! ```
//!
//! `E` is the `N x D` bin embedding table. Because the cell reads it through
//! `P`, the input term `E[b] P` equals `x^T (E P)` for the one-hot `x` of
//! `b`, i.e. the table is an exact reparameterization of a dense `N x H`
//! input matrix.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{clip_factor, HiddenState, HistoryWindow, Prediction, RewardObservation};
use crate::command_space::BinId;
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{finite, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecurrentSizes {
    pub hidden: usize,
    pub embed: usize,
}

impl Default for RecurrentSizes {
    fn default() -> Self {
        Self {
            hidden: 64,
            embed: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentParams {
    /// `N x D`.
    pub bin_embedding: Matrix,
    /// `D x H`.
    pub embed_in: Matrix,
    /// `2 x H`.
    pub reward_in: Matrix,
    /// `H x H`.
    pub recur: Matrix,
    pub hidden_bias: Vec<f64>,
    /// `(H + D) x 2`.
    pub head: Matrix,
    pub head_bias: [f64; 2],
}

/// Gradient of the window loss; embedding rows are kept sparse.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentGrad {
    pub bin_embedding: BTreeMap<usize, Vec<f64>>,
    pub embed_in: Matrix,
    pub reward_in: Matrix,
    pub recur: Matrix,
    pub hidden_bias: Vec<f64>,
    pub head: Matrix,
    pub head_bias: [f64; 2],
}

impl RecurrentGrad {
    fn zeros_like(p: &RecurrentParams) -> Self {
        Self {
            bin_embedding: BTreeMap::new(),
            embed_in: Matrix::zeros(p.embed_in.rows(), p.embed_in.cols()),
            reward_in: Matrix::zeros(2, p.hidden_size()),
            recur: Matrix::zeros(p.hidden_size(), p.hidden_size()),
            hidden_bias: vec![0.0; p.hidden_size()],
            head: Matrix::zeros(p.head.rows(), 2),
            head_bias: [0.0; 2],
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.bin_embedding
            .values()
            .flat_map(|r| r.iter())
            .map(|v| v * v)
            .sum::<f64>()
            + self.embed_in.sq_norm()
            + self.reward_in.sq_norm()
            + self.recur.sq_norm()
            + self.hidden_bias.iter().map(|v| v * v).sum::<f64>()
            + self.head.sq_norm()
            + self.head_bias.iter().map(|v| v * v).sum::<f64>()
    }

    fn scale(&mut self, s: f64) {
        for row in self.bin_embedding.values_mut() {
            row.iter_mut().for_each(|v| *v *= s);
        }
        self.embed_in.scale(s);
        self.reward_in.scale(s);
        self.recur.scale(s);
        self.hidden_bias.iter_mut().for_each(|v| *v *= s);
        self.head.scale(s);
        self.head_bias.iter_mut().for_each(|v| *v *= s);
    }
}

/// Forward-pass outcome over a window.
#[derive(Debug, Clone)]
pub struct RecurrentTrain {
    pub h_end: HiddenState,
    pub loss_before: f64,
    pub grad_norm: f64,
    pub clipped: bool,
}

impl RecurrentParams {
    pub fn zeros(n_bins: usize, sizes: RecurrentSizes) -> Self {
        let RecurrentSizes { hidden: h, embed: d } = sizes;
        Self {
            bin_embedding: Matrix::zeros(n_bins, d),
            embed_in: Matrix::zeros(d, h),
            reward_in: Matrix::zeros(2, h),
            recur: Matrix::zeros(h, h),
            hidden_bias: vec![0.0; h],
            head: Matrix::zeros(h + d, 2),
            head_bias: [0.0; 2],
        }
    }

    /// Uniform fan-in scaled initialization; the recurrent matrix is scaled
    /// down to keep early dynamics contractive.
    pub fn init<R: Rng + ?Sized>(n_bins: usize, sizes: RecurrentSizes, rng: &mut R) -> Self {
        let RecurrentSizes { hidden: h, embed: d } = sizes;
        let fan = |n: usize| 1.0 / (n as f64).sqrt();
        Self {
            bin_embedding: Matrix::uniform(n_bins, d, 1.0, rng),
            embed_in: Matrix::uniform(d, h, fan(d), rng),
            reward_in: Matrix::uniform(2, h, 1.0, rng),
            recur: Matrix::uniform(h, h, 0.5 * fan(h), rng),
            hidden_bias: vec![0.0; h],
            head: Matrix::uniform(h + d, 2, 0.1 * fan(h + d), rng),
            head_bias: [0.5; 2],
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.recur.rows()
    }

    pub fn embed_size(&self) -> usize {
        self.bin_embedding.cols()
    }

    pub fn n_bins(&self) -> usize {
        self.bin_embedding.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden_size();
        let d = self.embed_size();
        self.bin_embedding.expect_shape("bin_embedding", self.n_bins(), d)?;
        self.embed_in.expect_shape("embed_in", d, h)?;
        self.reward_in.expect_shape("reward_in", 2, h)?;
        self.recur.expect_shape("recur", h, h)?;
        self.head.expect_shape("head", h + d, 2)?;
        if self.hidden_bias.len() != h {
            return Err(Error::CheckpointShape(format!(
                "hidden_bias has {} entries, expected {h}",
                self.hidden_bias.len()
            )));
        }
        Ok(())
    }

    fn check_bin(&self, bin: BinId) -> Result<()> {
        if bin.0 >= self.n_bins() {
            return Err(Error::Addressing(format!(
                "bin {} outside predictor table of {}",
                bin.0,
                self.n_bins()
            )));
        }
        Ok(())
    }

    fn check_dense_finite(&self) -> Result<()> {
        if !(self.embed_in.is_finite()
            && self.reward_in.is_finite()
            && self.recur.is_finite()
            && finite(&self.hidden_bias)
            && self.head.is_finite()
            && finite(&self.head_bias))
        {
            return Err(Error::numeric("recurrent predictor has non-finite parameters"));
        }
        Ok(())
    }

    fn cell(&self, h_prev: &[f64], emb: &[f64], reward: [f64; 2]) -> Vec<f64> {
        let mut a = self.hidden_bias.clone();
        self.recur.accumulate_vec_mul(h_prev, &mut a);
        self.embed_in.accumulate_vec_mul(emb, &mut a);
        self.reward_in.accumulate_vec_mul(&reward, &mut a);
        a.iter_mut().for_each(|v| *v = v.tanh());
        a
    }

    fn head_out(&self, h_prev: &[f64], emb: &[f64]) -> [f64; 2] {
        let h = self.hidden_size();
        let mut out = self.head_bias;
        for (i, &x) in h_prev.iter().chain(emb).enumerate() {
            let row = self.head.row(i);
            out[0] += x * row[0];
            out[1] += x * row[1];
        }
        debug_assert_eq!(h_prev.len(), h);
        out
    }

    /// One recurrence step `h_t = f(h_{t-1}, [x_t, r_t])`.
    pub fn step(&self, h_prev: &HiddenState, bin: BinId, reward: RewardObservation) -> Result<HiddenState> {
        self.check_bin(bin)?;
        self.check_dense_finite()?;
        let emb = self.bin_embedding.row(bin.0);
        if !finite(emb) {
            return Err(Error::numeric(format!("embedding row {} is non-finite", bin.0)));
        }
        Ok(HiddenState(self.cell(h_prev.as_slice(), emb, reward.as_array())))
    }

    /// Score `bin` from the previous state.
    pub fn predict(&self, h_prev: &HiddenState, bin: BinId) -> Result<Prediction> {
        self.check_bin(bin)?;
        let [a, b] = self.head_out(h_prev.as_slice(), self.bin_embedding.row(bin.0));
        let p = Prediction::new(a, b);
        if !p.is_finite() {
            return Err(Error::numeric(format!("non-finite prediction for bin {}", bin.0)));
        }
        Ok(p)
    }

    /// Scores for many bins from one state. The hidden-state part of the head
    /// is shared, so each bin costs only its embedding dot products.
    pub fn predict_all(&self, h_prev: &HiddenState, bins: &[BinId]) -> Result<Vec<Prediction>> {
        let base = self.hidden_part(h_prev);
        let preds = par::map_slice(bins, |&b| self.embed_part(base, b));
        self.collect_preds(bins, preds)
    }

    /// Same as [`predict_all`](Self::predict_all) but always on the calling thread.
    pub fn predict_all_sequential(&self, h_prev: &HiddenState, bins: &[BinId]) -> Result<Vec<Prediction>> {
        let base = self.hidden_part(h_prev);
        let preds = par::map_slice_sequential(bins, |&b| self.embed_part(base, b));
        self.collect_preds(bins, preds)
    }

    fn hidden_part(&self, h_prev: &HiddenState) -> [f64; 2] {
        let mut base = self.head_bias;
        for (i, &x) in h_prev.as_slice().iter().enumerate() {
            let row = self.head.row(i);
            base[0] += x * row[0];
            base[1] += x * row[1];
        }
        base
    }

    fn embed_part(&self, base: [f64; 2], b: BinId) -> Option<Prediction> {
        if b.0 >= self.n_bins() {
            return None;
        }
        let h = self.hidden_size();
        let mut out = base;
        for (j, &e) in self.bin_embedding.row(b.0).iter().enumerate() {
            let row = self.head.row(h + j);
            out[0] += e * row[0];
            out[1] += e * row[1];
        }
        Some(Prediction::new(out[0], out[1]))
    }

    fn collect_preds(&self, bins: &[BinId], preds: Vec<Option<Prediction>>) -> Result<Vec<Prediction>> {
        preds
            .into_iter()
            .zip(bins)
            .map(|(p, b)| match p {
                None => Err(Error::Addressing(format!("bin {} outside predictor table", b.0))),
                Some(p) if !p.is_finite() => {
                    Err(Error::numeric(format!("non-finite prediction for bin {}", b.0)))
                }
                Some(p) => Ok(p),
            })
            .collect()
    }

    /// Mean squared prediction error over the window, unrolled from `h0`.
    pub fn loss(&self, window: &HistoryWindow, h0: &HiddenState) -> Result<f64> {
        Ok(self.forward(window, h0)?.loss)
    }

    fn forward(&self, window: &HistoryWindow, h0: &HiddenState) -> Result<Forward> {
        if window.is_empty() {
            return Err(Error::Argument("loss over an empty window".into()));
        }
        if h0.len() != self.hidden_size() {
            return Err(Error::Argument(format!(
                "hidden state has {} entries, expected {}",
                h0.len(),
                self.hidden_size()
            )));
        }
        self.check_dense_finite()?;
        let t_len = window.len();
        let mut hs = Vec::with_capacity(t_len + 1);
        hs.push(h0.0.clone());
        let mut preds = Vec::with_capacity(t_len);
        let mut loss = 0.0;
        for &(bin, r) in window.iter() {
            self.check_bin(bin)?;
            let emb = self.bin_embedding.row(bin.0);
            let h_prev = hs.last().expect("non-empty");
            let p = self.head_out(h_prev, emb);
            let r = r.as_array();
            loss += (r[0] - p[0]).powi(2) + (r[1] - p[1]).powi(2);
            preds.push(p);
            let next = self.cell(h_prev, emb, r);
            hs.push(next);
        }
        loss /= t_len as f64;
        if !loss.is_finite() {
            return Err(Error::numeric("non-finite loss"));
        }
        Ok(Forward { hs, preds, loss })
    }

    /// Loss, gradient and final state over the window (BPTT).
    pub fn gradient(&self, window: &HistoryWindow, h0: &HiddenState) -> Result<(RecurrentGrad, f64, HiddenState)> {
        let fw = self.forward(window, h0)?;
        let t_len = window.len();
        let hsz = self.hidden_size();
        let mut g = RecurrentGrad::zeros_like(self);
        let mut dh_next = vec![0.0; hsz];
        let items: Vec<_> = window.iter().copied().collect();
        for t in (0..t_len).rev() {
            let (bin, r) = items[t];
            let r = r.as_array();
            let emb = self.bin_embedding.row(bin.0);
            let h_prev = &fw.hs[t];
            let h_out = &fw.hs[t + 1];

            let da: Vec<f64> = dh_next
                .iter()
                .zip(h_out)
                .map(|(d, h)| d * (1.0 - h * h))
                .collect();
            g.recur.add_outer(h_prev, &da);
            g.embed_in.add_outer(emb, &da);
            g.reward_in.add_outer(&r, &da);
            g.hidden_bias.iter_mut().zip(&da).for_each(|(b, d)| *b += d);

            let mut dh = vec![0.0; hsz];
            self.recur.accumulate_mul_vec(&da, &mut dh);
            let mut de = vec![0.0; self.embed_size()];
            self.embed_in.accumulate_mul_vec(&da, &mut de);

            let p = fw.preds[t];
            let dp = [
                2.0 * (p[0] - r[0]) / t_len as f64,
                2.0 * (p[1] - r[1]) / t_len as f64,
            ];
            g.head_bias[0] += dp[0];
            g.head_bias[1] += dp[1];
            for (i, &x) in h_prev.iter().chain(emb).enumerate() {
                let gr = g.head.row_mut(i);
                gr[0] += x * dp[0];
                gr[1] += x * dp[1];
                let w = self.head.row(i);
                let back = w[0] * dp[0] + w[1] * dp[1];
                if i < hsz {
                    dh[i] += back;
                } else {
                    de[i - hsz] += back;
                }
            }
            let row = g
                .bin_embedding
                .entry(bin.0)
                .or_insert_with(|| vec![0.0; self.embed_size()]);
            row.iter_mut().zip(&de).for_each(|(a, b)| *a += b);
            dh_next = dh;
        }
        let h_end = HiddenState(fw.hs.into_iter().last().expect("non-empty"));
        Ok((g, fw.loss, h_end))
    }

    pub fn apply(&mut self, g: &RecurrentGrad, lr: f64) {
        for (&bin, row) in &g.bin_embedding {
            for (p, d) in self.bin_embedding.row_mut(bin).iter_mut().zip(row) {
                *p -= lr * d;
            }
        }
        self.embed_in.sub_scaled(&g.embed_in, lr);
        self.reward_in.sub_scaled(&g.reward_in, lr);
        self.recur.sub_scaled(&g.recur, lr);
        self.hidden_bias
            .iter_mut()
            .zip(&g.hidden_bias)
            .for_each(|(p, d)| *p -= lr * d);
        self.head.sub_scaled(&g.head, lr);
        self.head_bias[0] -= lr * g.head_bias[0];
        self.head_bias[1] -= lr * g.head_bias[1];
    }

    /// One gradient-descent step on the window loss with global-norm clipping.
    pub fn train_step(
        &mut self,
        window: &HistoryWindow,
        h0: &HiddenState,
        learning_rate: f64,
        clip_norm: f64,
    ) -> Result<RecurrentTrain> {
        if !(learning_rate > 0.0) {
            return Err(Error::Argument("learning rate must be positive".into()));
        }
        let (mut g, loss_before, h_end) = self.gradient(window, h0)?;
        let (grad_norm, factor, clipped) = clip_factor(g.sq_norm(), clip_norm);
        if !grad_norm.is_finite() {
            return Err(Error::numeric("non-finite gradient"));
        }
        if clipped {
            g.scale(factor);
        }
        self.apply(&g, learning_rate);
        Ok(RecurrentTrain {
            h_end,
            loss_before,
            grad_norm,
            clipped,
        })
    }
}

struct Forward {
    hs: Vec<Vec<f64>>,
    preds: Vec<[f64; 2]>,
    loss: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::command_space::CommandGrid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs(a: f64, b: f64) -> RewardObservation {
        RewardObservation::new(a, b).unwrap()
    }

    fn toy(seed: u64) -> RecurrentParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = RecurrentParams::init(3, RecurrentSizes { hidden: 4, embed: 3 }, &mut rng);
        // a non-trivial head so every path carries gradient
        p.head = Matrix::uniform(7, 2, 0.5, &mut rng);
        p.hidden_bias = (0..4).map(|_| rng.random::<f64>() - 0.5).collect();
        p
    }

    fn toy_window() -> HistoryWindow {
        HistoryWindow::from_items([
            (BinId(0), obs(0.9, 0.1)),
            (BinId(2), obs(0.3, 0.7)),
            (BinId(1), obs(0.5, 0.5)),
            (BinId(2), obs(0.0, 1.0)),
            (BinId(0), obs(1.0, 0.2)),
        ])
    }

    #[test]
    fn zero_params_give_zero_state_and_prediction() {
        let p = RecurrentParams::zeros(5, RecurrentSizes { hidden: 3, embed: 2 });
        let h = p.step(&HiddenState::zeros(3), BinId(2), obs(1.0, 0.3)).unwrap();
        assert_eq!(h.0, vec![0.0; 3]);
        let pr = p.predict(&h, BinId(4)).unwrap();
        assert_eq!(pr.as_array(), [0.0, 0.0]);
    }

    #[test]
    fn hidden_state_stays_in_open_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = RecurrentParams::init(50, RecurrentSizes { hidden: 16, embed: 8 }, &mut rng);
        let mut h = HiddenState::zeros(16);
        for i in 0..200 {
            let r = obs(rng.random(), rng.random());
            h = p.step(&h, BinId(i % 50), r).unwrap();
            assert!(h.0.iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn embedding_lookup_matches_dense_one_hot() {
        // x^T W_x with W_x = E P materialized as a dense N x H matrix
        let grid = CommandGrid::new([3, 2, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sizes = RecurrentSizes { hidden: 5, embed: 4 };
        let p = RecurrentParams::init(grid.len(), sizes, &mut rng);
        let mut wx = Matrix::zeros(grid.len(), sizes.hidden);
        for n in 0..grid.len() {
            let mut row = vec![0.0; sizes.hidden];
            p.embed_in.accumulate_vec_mul(p.bin_embedding.row(n), &mut row);
            wx.row_mut(n).copy_from_slice(&row);
        }
        let h0 = HiddenState((0..5).map(|i| 0.1 * i as f64 - 0.2).collect());
        let r = obs(0.4, 0.6);
        for n in 0..grid.len() {
            let x = grid.one_hot(BinId(n)).unwrap();
            let mut a = p.hidden_bias.clone();
            p.recur.accumulate_vec_mul(&h0.0, &mut a);
            wx.accumulate_vec_mul(&x, &mut a);
            p.reward_in.accumulate_vec_mul(&r.as_array(), &mut a);
            let dense: Vec<f64> = a.iter().map(|v| v.tanh()).collect();
            let fast = p.step(&h0, BinId(n), r).unwrap();
            let diff = dense
                .iter()
                .zip(&fast.0)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(diff <= 1e-12, "bin {n}: {diff}");
        }
    }

    #[test]
    fn predictions_depend_on_bin() {
        let p = toy(5);
        let h = HiddenState(vec![0.1, -0.2, 0.3, 0.0]);
        assert_ne!(p.predict(&h, BinId(0)).unwrap(), p.predict(&h, BinId(1)).unwrap());
    }

    #[test]
    fn batch_predict_matches_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = RecurrentParams::init(40, RecurrentSizes { hidden: 6, embed: 3 }, &mut rng);
        let h = HiddenState(vec![0.3, -0.1, 0.0, 0.5, -0.7, 0.2]);
        let bins: Vec<_> = (0..40).map(BinId).collect();
        let batch = p.predict_all(&h, &bins).unwrap();
        let seq = p.predict_all_sequential(&h, &bins).unwrap();
        for (i, b) in bins.iter().enumerate() {
            let single = p.predict(&h, *b).unwrap();
            assert!((single.r_lin - batch[i].r_lin).abs() < 1e-12);
            assert!((single.r_ang - batch[i].r_ang).abs() < 1e-12);
        }
        assert_eq!(batch, seq);
    }

    #[test]
    fn loss_examples() {
        let p = RecurrentParams::zeros(2, RecurrentSizes { hidden: 2, embed: 1 });
        let w = HistoryWindow::from_items([(BinId(0), obs(1.0, 0.0))]);
        let l = p.loss(&w, &HiddenState::zeros(2)).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        // predictions equal observations: bias reproduces a constant target
        let mut q = p.clone();
        q.head_bias = [0.3, 0.6];
        let w = HistoryWindow::from_items([(BinId(0), obs(0.3, 0.6)), (BinId(1), obs(0.3, 0.6))]);
        assert_eq!(q.loss(&w, &HiddenState::zeros(2)).unwrap(), 0.0);
        assert!(matches!(
            p.loss(&HistoryWindow::new(4), &HiddenState::zeros(2)),
            Err(Error::Argument(_))
        ));
    }

    /// Flattened view of every parameter for finite differences.
    fn param_slots(p: &mut RecurrentParams) -> Vec<&mut f64> {
        let mut v: Vec<&mut f64> = Vec::new();
        v.extend(p.bin_embedding.data_mut().iter_mut());
        v.extend(p.embed_in.data_mut().iter_mut());
        v.extend(p.reward_in.data_mut().iter_mut());
        v.extend(p.recur.data_mut().iter_mut());
        v.extend(p.hidden_bias.iter_mut());
        v.extend(p.head.data_mut().iter_mut());
        v.extend(p.head_bias.iter_mut());
        v
    }

    fn flat_grad(p: &RecurrentParams, g: &RecurrentGrad) -> Vec<f64> {
        let mut emb = vec![0.0; p.bin_embedding.data().len()];
        let d = p.embed_size();
        for (&b, row) in &g.bin_embedding {
            emb[b * d..(b + 1) * d].copy_from_slice(row);
        }
        emb.into_iter()
            .chain(g.embed_in.data().iter().copied())
            .chain(g.reward_in.data().iter().copied())
            .chain(g.recur.data().iter().copied())
            .chain(g.hidden_bias.iter().copied())
            .chain(g.head.data().iter().copied())
            .chain(g.head_bias.iter().copied())
            .collect()
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let p = toy(17);
        let w = toy_window();
        let h0 = HiddenState(vec![0.2, -0.1, 0.05, 0.3]);
        let (g, _, _) = p.gradient(&w, &h0).unwrap();
        let analytic = flat_grad(&p, &g);
        let eps = 1e-5;
        let n = analytic.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let mut plus = p.clone();
            *param_slots(&mut plus)[i] += eps;
            let mut minus = p.clone();
            *param_slots(&mut minus)[i] -= eps;
            let numeric = (plus.loss(&w, &h0).unwrap() - minus.loss(&w, &h0).unwrap()) / (2.0 * eps);
            let denom = numeric.abs().max(analytic[i].abs()).max(1e-7);
            worst = worst.max((numeric - analytic[i]).abs() / denom);
        }
        assert!(worst <= 1e-4, "max relative error {worst}");
    }

    #[test]
    fn small_step_reduces_window_loss() {
        let mut p = toy(23);
        let w = toy_window();
        let h0 = HiddenState::zeros(4);
        let before = p.loss(&w, &h0).unwrap();
        let rep = p.train_step(&w, &h0, 1e-3, 5.0).unwrap();
        assert_eq!(rep.loss_before, before);
        assert!(p.loss(&w, &h0).unwrap() < before);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = RecurrentParams::zeros(2, RecurrentSizes { hidden: 2, embed: 1 });
        p.head_bias = [0.4, 0.8];
        let before = p.clone();
        let w = HistoryWindow::from_items([(BinId(0), obs(0.4, 0.8)), (BinId(1), obs(0.4, 0.8))]);
        p.train_step(&w, &HiddenState::zeros(2), 0.1, 5.0).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn gradient_is_clipped_and_flagged() {
        let mut p = toy(29);
        let w = toy_window();
        let rep = p.train_step(&w, &HiddenState::zeros(4), 1e-3, 1e-6).unwrap();
        assert!(rep.clipped);
        assert!(rep.grad_norm > 1e-6);
    }

    #[test]
    fn non_finite_params_are_rejected() {
        let mut p = toy(31);
        p.recur.data_mut()[0] = f64::NAN;
        assert!(matches!(
            p.step(&HiddenState::zeros(4), BinId(0), obs(0.1, 0.1)),
            Err(Error::Numeric { .. })
        ));
    }
}
