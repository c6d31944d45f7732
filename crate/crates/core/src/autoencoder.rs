//! Sparse autoencoder with tied weights.
//!
//! Encoder `h = sigmoid(W x + b)`, decoder `x_hat = W^T h + b_dec` (identity
//! output). The cost is mean half squared reconstruction error plus a
//! Bernoulli KL sparsity penalty on the mean hidden activations and an L2
//! penalty on `W`. Rows of a trained `W` become convolution filters.

use std::fs;
use std::path::Path;

use crate::binio::{dim_u32, ByteReader, ByteWriter};
use crate::error::{dim_err, param_err, Error, Result};
use crate::kernels::sigmoid;
use crate::rng::{derive_seed, Rng};
use crate::tensor::{axpy, dot, Matrix, Shape3, Tensor3};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VXAE";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Mean activations are clamped into `[KL_CLAMP, 1 - KL_CLAMP]` before the
/// KL penalty is evaluated.
pub const KL_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityConfig {
    /// Target mean activation `s`.
    pub target: f64,
    /// Weight of the KL penalty.
    pub beta: f64,
    /// Weight-decay coefficient.
    pub lambda: f64,
}

impl Default for SparsityConfig {
    fn default() -> Self {
        SparsityConfig { target: 0.05, beta: 3.0, lambda: 3e-3 }
    }
}

impl SparsityConfig {
    pub fn validate(&self) -> Result<()> {
        check_target(self.target)?;
        if !(self.beta >= 0.0) || !(self.lambda >= 0.0) {
            return Err(param_err(format!(
                "beta and lambda must be non-negative, got beta={} lambda={}",
                self.beta, self.lambda
            )));
        }
        Ok(())
    }
}

fn check_target(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(param_err(format!("sparsity target must lie in (0, 1), got {s}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeTrainConfig {
    pub hidden: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Multiplier on the `sqrt(6 / (n + p))` init range.
    pub init_scale: f64,
}

impl Default for AeTrainConfig {
    fn default() -> Self {
        AeTrainConfig {
            hidden: 150,
            batch_size: 100,
            learning_rate: 0.1,
            epochs: 50,
            seed: 0,
            init_scale: 1.0,
        }
    }
}

impl AeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 {
            return Err(param_err("hidden size and batch size must be at least 1"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(param_err(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.init_scale > 0.0) {
            return Err(param_err(format!("init scale must be positive, got {}", self.init_scale)));
        }
        Ok(())
    }
}

/// Gradient of the total cost, with the cost itself at the evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct AeGradient {
    pub weights: Matrix,
    pub hidden_bias: Vec<f64>,
    pub visible_bias: Vec<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseAutoencoder {
    /// `p x n`; the decoder uses its transpose.
    weights: Matrix,
    hidden_bias: Vec<f64>,
    visible_bias: Vec<f64>,
}

/// One recorded epoch of pretraining.
#[derive(Debug, Clone, PartialEq)]
pub struct AeEpochRecord {
    pub epoch: usize,
    pub train_cost: f64,
    pub validation_cost: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedAutoencoder {
    pub model: SparseAutoencoder,
    pub history: Vec<AeEpochRecord>,
}

fn check_batch<X: AsRef<[f64]>>(batch: &[X], n: usize) -> Result<()> {
    if batch.is_empty() {
        return Err(param_err("batch must not be empty"));
    }
    for (i, x) in batch.iter().enumerate() {
        if x.as_ref().len() != n {
            return Err(dim_err(format!(
                "batch item {i} has {} entries, autoencoder expects {n}",
                x.as_ref().len()
            )));
        }
    }
    Ok(())
}

/// `sum_j KL(s || s_hat_j)` for Bernoulli means.
pub fn kl_penalty(s: f64, s_hat: &[f64]) -> Result<f64> {
    check_target(s)?;
    Ok(s_hat.iter().map(|&q| kl_term(s, q.clamp(KL_CLAMP, 1.0 - KL_CLAMP))).sum())
}

#[inline]
fn kl_term(s: f64, q: f64) -> f64 {
    s * (s / q).ln() + (1.0 - s) * ((1.0 - s) / (1.0 - q)).ln()
}

/// d KL / d s_hat_j; zero where the clamp is active.
#[inline]
fn kl_slope(s: f64, q: f64) -> f64 {
    if q < KL_CLAMP || q > 1.0 - KL_CLAMP {
        0.0
    } else {
        -s / q + (1.0 - s) / (1.0 - q)
    }
}

impl SparseAutoencoder {
    pub fn new(weights: Matrix, hidden_bias: Vec<f64>, visible_bias: Vec<f64>) -> Result<Self> {
        if hidden_bias.len() != weights.rows() || visible_bias.len() != weights.cols() {
            return Err(dim_err(format!(
                "weights are {}x{} but biases have lengths {} and {}",
                weights.rows(),
                weights.cols(),
                hidden_bias.len(),
                visible_bias.len()
            )));
        }
        Ok(SparseAutoencoder { weights, hidden_bias, visible_bias })
    }

    /// Weights uniform on `[-r, r]`, `r = init_scale * sqrt(6 / (n + p))`;
    /// biases zero.
    pub fn init(n: usize, p: usize, init_scale: f64, seed: u64) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(param_err("autoencoder sizes must be positive"));
        }
        let r = init_scale * (6.0 / (n + p) as f64).sqrt();
        let w = Rng::new(seed).uniform(-r, r, n * p)?;
        Self::new(Matrix::new(p, n, w)?, vec![0.0; p], vec![0.0; n])
    }

    pub fn input_len(&self) -> usize {
        self.weights.cols()
    }

    pub fn hidden_len(&self) -> usize {
        self.weights.rows()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn hidden_bias(&self) -> &[f64] {
        &self.hidden_bias
    }

    pub fn visible_bias(&self) -> &[f64] {
        &self.visible_bias
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.weights.matvec(x)?;
        for (zj, bj) in z.iter_mut().zip(&self.hidden_bias) {
            *zj = sigmoid(*zj + bj);
        }
        Ok(z)
    }

    pub fn decode(&self, h: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.weights.matvec_transposed(h)?;
        for (xi, bi) in x.iter_mut().zip(&self.visible_bias) {
            *xi += bi;
        }
        Ok(x)
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.decode(&self.encode(x)?)
    }

    /// Mean over the batch of `0.5 * |x_hat - x|^2`.
    pub fn reconstruction_cost<X: AsRef<[f64]>>(&self, batch: &[X]) -> Result<f64> {
        check_batch(batch, self.input_len())?;
        let mut total = 0.0;
        for x in batch {
            let x = x.as_ref();
            let xh = self.reconstruct(x)?;
            total += 0.5 * xh.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        Ok(total / batch.len() as f64)
    }

    pub fn mean_activations<X: AsRef<[f64]>>(&self, batch: &[X]) -> Result<Vec<f64>> {
        check_batch(batch, self.input_len())?;
        let mut mean = vec![0.0; self.hidden_len()];
        for x in batch {
            axpy(1.0, &self.encode(x.as_ref())?, &mut mean);
        }
        let inv = 1.0 / batch.len() as f64;
        mean.iter_mut().for_each(|m| *m *= inv);
        Ok(mean)
    }

    /// Reconstruction cost + `beta * KL` + `lambda * sum W^2`. The decay sum
    /// counts the shared weight matrix once and excludes biases.
    pub fn total_cost<X: AsRef<[f64]>>(&self, batch: &[X], sp: &SparsityConfig) -> Result<f64> {
        sp.validate()?;
        let recon = self.reconstruction_cost(batch)?;
        let kl = kl_penalty(sp.target, &self.mean_activations(batch)?)?;
        Ok(recon + sp.beta * kl + sp.lambda * self.weights.sum_of_squares())
    }

    /// Analytic gradient of [`total_cost`](Self::total_cost). The KL term is
    /// differentiated through the batch mean activations, and `W` collects
    /// both its encoder and its (transposed) decoder contributions.
    pub fn cost_gradient<X: AsRef<[f64]>>(&self, batch: &[X], sp: &SparsityConfig) -> Result<AeGradient> {
        sp.validate()?;
        check_batch(batch, self.input_len())?;
        let (n, p) = (self.input_len(), self.hidden_len());
        let inv_n = 1.0 / batch.len() as f64;

        let activations: Vec<Vec<f64>> =
            batch.iter().map(|x| self.encode(x.as_ref())).collect::<Result<_>>()?;
        let mut s_hat = vec![0.0; p];
        for a in &activations {
            axpy(inv_n, a, &mut s_hat);
        }
        let kl_push: Vec<f64> = s_hat.iter().map(|&q| sp.beta * kl_slope(sp.target, q)).collect();

        let mut d_w = Matrix::zeros(p, n)?;
        let mut d_hb = vec![0.0; p];
        let mut d_vb = vec![0.0; n];
        let mut recon = 0.0;
        let mut residual = vec![0.0; n];
        for (x, a) in batch.iter().zip(&activations) {
            let x = x.as_ref();
            let xh = self.decode(a)?;
            for ((r, xhi), xi) in residual.iter_mut().zip(&xh).zip(x) {
                *r = xhi - xi;
            }
            recon += 0.5 * dot(&residual, &residual);
            axpy(inv_n, &residual, &mut d_vb);
            for j in 0..p {
                let row = self.weights.row(j);
                // decoder path: d/dW_ji of 0.5|r|^2 is r_i a_j
                let back = dot(row, &residual);
                let delta = inv_n * (back + kl_push[j]) * a[j] * (1.0 - a[j]);
                d_hb[j] += delta;
                let g = d_w.row_mut(j);
                axpy(inv_n * a[j], &residual, g);
                axpy(delta, x, g);
            }
        }
        axpy(2.0 * sp.lambda, self.weights.data(), d_w.data_mut());

        let cost = recon * inv_n
            + sp.beta * kl_penalty(sp.target, &s_hat)?
            + sp.lambda * self.weights.sum_of_squares();
        Ok(AeGradient { weights: d_w, hidden_bias: d_hb, visible_bias: d_vb, cost })
    }

    /// `theta <- theta - lr * grad`.
    pub fn apply_gradient(&mut self, grad: &AeGradient, lr: f64) {
        axpy(-lr, grad.weights.data(), self.weights.data_mut());
        axpy(-lr, &grad.hidden_bias, &mut self.hidden_bias);
        axpy(-lr, &grad.visible_bias, &mut self.visible_bias);
    }

    /// Each hidden unit's incoming weights reshaped to `shape`, paired with
    /// that unit's bias.
    pub fn extract_bases_3d(&self, shape: Shape3) -> Result<Vec<(Tensor3, f64)>> {
        let n = self.input_len();
        if shape.0 * shape.1 * shape.2 != n {
            return Err(dim_err(format!("patch shape {shape:?} does not hold {n} weights")));
        }
        (0..self.hidden_len())
            .map(|j| Ok((Tensor3::new(shape, self.weights.row(j).to_vec())?, self.hidden_bias[j])))
            .collect()
    }

    pub fn extract_bases_2d(&self, shape: (usize, usize)) -> Result<Vec<(Matrix, f64)>> {
        let n = self.input_len();
        if shape.0 * shape.1 != n {
            return Err(dim_err(format!("patch shape {shape:?} does not hold {n} weights")));
        }
        (0..self.hidden_len())
            .map(|j| Ok((Matrix::new(shape.0, shape.1, self.weights.row(j).to_vec())?, self.hidden_bias[j])))
            .collect()
    }

    /// `VXAE` checkpoint: magic, version u32, n u32, p u32, then `W`
    /// (row-major), `b`, `b_dec` as little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_magic(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION)
            .u32(self.input_len() as u32)
            .u32(self.hidden_len() as u32)
            .f64s(self.weights.data())
            .f64s(&self.hidden_bias)
            .f64s(&self.visible_bias);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(CHECKPOINT_MAGIC)?;
        r.version(CHECKPOINT_VERSION)?;
        let n = r.u32("input size")?;
        let n = dim_u32(n, "input size", &r)?;
        let p = r.u32("hidden size")?;
        let p = dim_u32(p, "hidden size", &r)?;
        let w = r.f64s(n * p, "weights")?;
        let hb = r.f64s(p, "hidden bias")?;
        let vb = r.f64s(n, "visible bias")?;
        r.finish()?;
        Self::new(Matrix::new(p, n, w)?, hb, vb)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Minibatch gradient descent on the sparse cost. Batches are drawn from a
/// fresh permutation each epoch, seeded from `(cfg.seed, epoch)`. The history
/// records the full training cost and, when `validation` is non-empty, the
/// validation cost after every epoch.
pub fn train_autoencoder<X: AsRef<[f64]>>(
    train: &[X],
    validation: &[X],
    cfg: &AeTrainConfig,
    sp: &SparsityConfig,
) -> Result<TrainedAutoencoder> {
    cfg.validate()?;
    sp.validate()?;
    if train.is_empty() {
        return Err(param_err("no training patches"));
    }
    let n = train[0].as_ref().len();
    check_batch(train, n)?;
    if !validation.is_empty() {
        check_batch(validation, n)?;
    }
    let mut model = SparseAutoencoder::init(n, cfg.hidden, cfg.init_scale, derive_seed(cfg.seed, "ae-init", 0))?;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let order = Rng::new(derive_seed(cfg.seed, "ae-epoch", epoch as u64)).permutation(train.len());
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&[f64]> = chunk.iter().map(|&i| train[i].as_ref()).collect();
            let grad = model.cost_gradient(&batch, sp)?;
            if !grad.cost.is_finite() {
                return Err(Error::Diverged { epoch, batch: bi });
            }
            model.apply_gradient(&grad, cfg.learning_rate);
        }
        let train_cost = model.total_cost(train, sp)?;
        if !train_cost.is_finite() {
            return Err(Error::Diverged { epoch, batch: order.len().div_ceil(cfg.batch_size) });
        }
        let validation_cost =
            if validation.is_empty() { None } else { Some(model.total_cost(validation, sp)?) };
        history.push(AeEpochRecord { epoch, train_cost, validation_cost });
    }
    Ok(TrainedAutoencoder { model, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_ae(n: usize, p: usize, seed: u64) -> SparseAutoencoder {
        let mut rng = Rng::new(seed);
        SparseAutoencoder::new(
            Matrix::new(p, n, rng.uniform(-0.8, 0.8, n * p).unwrap()).unwrap(),
            rng.uniform(-0.5, 0.5, p).unwrap(),
            rng.uniform(-0.5, 0.5, n).unwrap(),
        )
        .unwrap()
    }

    fn random_batch(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = Rng::new(seed);
        (0..count).map(|_| rng.uniform(-1.0, 1.0, n).unwrap()).collect()
    }

    fn zero_ae(n: usize, p: usize) -> SparseAutoencoder {
        SparseAutoencoder::new(Matrix::zeros(p, n).unwrap(), vec![0.0; p], vec![0.0; n]).unwrap()
    }

    fn identity_ae(n: usize) -> SparseAutoencoder {
        SparseAutoencoder::new(Matrix::identity(n).unwrap(), vec![0.0; n], vec![0.0; n]).unwrap()
    }

    #[test]
    fn encode_zero_weights_is_half() {
        let ae = zero_ae(4, 6);
        assert_eq!(ae.encode(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.5; 6]);
        assert!(ae.encode(&[1.0]).is_err());
    }

    #[test]
    fn full_size_encoder() {
        let ae = SparseAutoencoder::init(125, 150, 1.0, 1).unwrap();
        assert_eq!(ae.encode(&[0.1; 125]).unwrap().len(), 150);
    }

    #[test]
    fn encode_decode_match_loop_oracles() {
        let ae = random_ae(7, 9, 3);
        let x = random_batch(7, 1, 4).pop().unwrap();
        let h = ae.encode(&x).unwrap();
        for j in 0..9 {
            let mut z = ae.hidden_bias()[j];
            for i in 0..7 {
                z += ae.weights().get(j, i) * x[i];
            }
            assert!((h[j] - 1.0 / (1.0 + (-z).exp())).abs() < 1e-14);
        }
        let xh = ae.decode(&h).unwrap();
        for i in 0..7 {
            let mut v = ae.visible_bias()[i];
            for j in 0..9 {
                v += ae.weights().get(j, i) * h[j];
            }
            assert!((xh[i] - v).abs() < 1e-13);
        }
    }

    #[test]
    fn decode_special_cases() {
        let mut ae = zero_ae(3, 4);
        ae.visible_bias = vec![1.0, 2.0, 3.0];
        assert_eq!(ae.decode(&[0.0; 4]).unwrap(), vec![1.0, 2.0, 3.0]);
        let id = identity_ae(3);
        assert_eq!(id.decode(&[0.2, -0.7, 9.0]).unwrap(), vec![0.2, -0.7, 9.0]);
        assert!(id.decode(&[0.0; 2]).is_err());
    }

    #[test]
    fn reconstruction_cost_cases() {
        // W = I reconstructs sigmoid(x), which equals x only at the fixed point c = sigmoid(c)
        let mut c = 0.5;
        for _ in 0..200 {
            c = sigmoid(c);
        }
        assert!(identity_ae(4).reconstruction_cost(&[vec![c; 4]]).unwrap() < 1e-28);

        // zero weights reconstruct b_dec
        let mut ae = zero_ae(3, 2);
        ae.visible_bias = vec![0.3, -0.1, 2.0];
        assert_eq!(ae.reconstruction_cost(&[vec![0.3, -0.1, 2.0]]).unwrap(), 0.0);
        // x_hat - x = (1, 0, 0)
        assert_eq!(ae.reconstruction_cost(&[vec![-0.7, -0.1, 2.0]]).unwrap(), 0.5);
        let empty: [Vec<f64>; 0] = [];
        assert!(matches!(ae.reconstruction_cost(&empty), Err(Error::Parameter(_))));

        let ae = random_ae(5, 6, 8);
        let batch = random_batch(5, 4, 9);
        let mut direct = 0.0;
        for x in &batch {
            let h: Vec<f64> = (0..6)
                .map(|j| 1.0 / (1.0 + (-(ae.hidden_bias()[j] + (0..5).map(|i| ae.weights().get(j, i) * x[i]).sum::<f64>())).exp()))
                .collect();
            for i in 0..5 {
                let xh = ae.visible_bias()[i] + (0..6).map(|j| ae.weights().get(j, i) * h[j]).sum::<f64>();
                direct += 0.5 * (xh - x[i]).powi(2);
            }
        }
        assert!((ae.reconstruction_cost(&batch).unwrap() - direct / 4.0).abs() < 1e-13);
    }

    #[test]
    fn mean_activation_cases() {
        let ae = zero_ae(3, 5);
        assert_eq!(ae.mean_activations(&random_batch(3, 6, 1)).unwrap(), vec![0.5; 5]);
        let ae = random_ae(3, 5, 2);
        let x = random_batch(3, 1, 3);
        assert_eq!(ae.mean_activations(&x).unwrap(), ae.encode(&x[0]).unwrap());
        let batch = random_batch(3, 7, 4);
        let m = ae.mean_activations(&batch).unwrap();
        for j in 0..5 {
            let s: f64 = batch.iter().map(|x| ae.encode(x).unwrap()[j]).sum::<f64>() / 7.0;
            assert!((m[j] - s).abs() < 1e-15);
            assert!(m[j] > 0.0 && m[j] < 1.0);
        }
    }

    #[test]
    fn kl_penalty_cases() {
        assert_eq!(kl_penalty(0.05, &[0.05; 10]).unwrap(), 0.0);
        // mpmath, 50 digits: 0.05*ln(0.05/0.5) + 0.95*ln(0.95/0.5)
        let expected = 0.4946319372140727;
        assert!((kl_penalty(0.05, &[0.5]).unwrap() - expected).abs() < 1e-15);
        let clamped = kl_penalty(0.05, &[0.0, 1.0]).unwrap();
        assert!(clamped.is_finite() && clamped > 0.0);
        assert!(matches!(kl_penalty(0.0, &[0.5]), Err(Error::Parameter(_))));
        assert!(kl_penalty(1.0, &[0.5]).is_err());
    }

    #[test]
    fn total_cost_terms() {
        let ae = random_ae(4, 3, 5);
        let batch = random_batch(4, 3, 6);
        let none = SparsityConfig { target: 0.1, beta: 0.0, lambda: 0.0 };
        assert_eq!(ae.total_cost(&batch, &none).unwrap(), ae.reconstruction_cost(&batch).unwrap());

        let mut w = Matrix::zeros(2, 2).unwrap();
        w.set(1, 0, 2.0);
        let ae2 = SparseAutoencoder::new(w, vec![0.0; 2], vec![0.0; 2]).unwrap();
        let zero = vec![vec![0.0, 0.0]];
        let decay = SparsityConfig { target: 0.1, beta: 0.0, lambda: 1.0 };
        let j = ae2.reconstruction_cost(&zero).unwrap();
        assert!((ae2.total_cost(&zero, &decay).unwrap() - (j + 4.0)).abs() < 1e-15);

        let sp = SparsityConfig { target: 0.2, beta: 1.7, lambda: 0.01 };
        let s_hat = ae.mean_activations(&batch).unwrap();
        let kl: f64 = s_hat
            .iter()
            .map(|q| 0.2 * (0.2 / q).ln() + 0.8 * (0.8 / (1.0 - q)).ln())
            .sum();
        let decay_sum: f64 = ae.weights().data().iter().map(|w| w * w).sum();
        let oracle = ae.reconstruction_cost(&batch).unwrap() + 1.7 * kl + 0.01 * decay_sum;
        assert!((ae.total_cost(&batch, &sp).unwrap() - oracle).abs() < 1e-13);
    }

    fn max_rel_error(ae: &SparseAutoencoder, batch: &[Vec<f64>], sp: &SparsityConfig) -> f64 {
        let g = ae.cost_gradient(batch, sp).unwrap();
        let h = 1e-5;
        let mut worst = 0.0f64;
        let analytic: Vec<f64> = g
            .weights
            .data()
            .iter()
            .chain(&g.hidden_bias)
            .chain(&g.visible_bias)
            .copied()
            .collect();
        let n_w = ae.weights.data().len();
        let n_hb = ae.hidden_bias.len();
        for (idx, &a) in analytic.iter().enumerate() {
            let mut plus = ae.clone();
            let mut minus = ae.clone();
            let poke = |m: &mut SparseAutoencoder, d: f64| {
                if idx < n_w {
                    m.weights.data_mut()[idx] += d;
                } else if idx < n_w + n_hb {
                    m.hidden_bias[idx - n_w] += d;
                } else {
                    m.visible_bias[idx - n_w - n_hb] += d;
                }
            };
            poke(&mut plus, h);
            poke(&mut minus, -h);
            let fd = (plus.total_cost(batch, sp).unwrap() - minus.total_cost(batch, sp).unwrap()) / (2.0 * h);
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-8));
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let ae = random_ae(8, 12, 21);
        let batch = random_batch(8, 5, 22);
        let sp = SparsityConfig { target: 0.05, beta: 3.0, lambda: 3e-3 };
        let err = max_rel_error(&ae, &batch, &sp);
        assert!(err < 1e-6, "max relative error {err}");
        assert!((ae.cost_gradient(&batch, &sp).unwrap().cost - ae.total_cost(&batch, &sp).unwrap()).abs() < 1e-13);
    }

    #[test]
    fn gradient_matches_plain_mse_backprop() {
        // Tied-weight MSE backprop written out as explicit per-index loops.
        let ae = random_ae(3, 3, 31);
        let batch = random_batch(3, 4, 32);
        let sp = SparsityConfig { target: 0.3, beta: 0.0, lambda: 0.0 };
        let g = ae.cost_gradient(&batch, &sp).unwrap();
        let (n, p) = (3, 3);
        let mut dw = vec![vec![0.0; n]; p];
        let mut db = vec![0.0; p];
        let mut dc = vec![0.0; n];
        for x in &batch {
            let a: Vec<f64> = (0..p)
                .map(|j| {
                    let z: f64 = ae.hidden_bias[j] + (0..n).map(|i| ae.weights.get(j, i) * x[i]).sum::<f64>();
                    1.0 / (1.0 + (-z).exp())
                })
                .collect();
            let r: Vec<f64> = (0..n)
                .map(|i| ae.visible_bias[i] + (0..p).map(|j| ae.weights.get(j, i) * a[j]).sum::<f64>() - x[i])
                .collect();
            for i in 0..n {
                dc[i] += r[i] / 4.0;
            }
            for j in 0..p {
                let back: f64 = (0..n).map(|i| ae.weights.get(j, i) * r[i]).sum();
                let dz = back * a[j] * (1.0 - a[j]);
                db[j] += dz / 4.0;
                for i in 0..n {
                    dw[j][i] += (r[i] * a[j] + dz * x[i]) / 4.0;
                }
            }
        }
        for j in 0..p {
            assert!((g.hidden_bias[j] - db[j]).abs() < 1e-14);
            for i in 0..n {
                assert!((g.weights.get(j, i) - dw[j][i]).abs() < 1e-14);
            }
        }
        for i in 0..n {
            assert!((g.visible_bias[i] - dc[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn stationary_point_has_zero_gradient() {
        // zero data, zero weights, s = 0.5 so the KL slope vanishes at a = 0.5
        let ae = zero_ae(4, 4);
        let batch = vec![vec![0.0; 4]; 3];
        let sp = SparsityConfig { target: 0.5, beta: 3.0, lambda: 0.1 };
        let g = ae.cost_gradient(&batch, &sp).unwrap();
        let norm: f64 = g.weights.data().iter().chain(&g.hidden_bias).chain(&g.visible_bias).map(|v| v.abs()).sum();
        assert!(norm < 1e-15);
    }

    #[test]
    fn one_small_step_descends() {
        let ae = random_ae(6, 8, 41);
        let batch = random_batch(6, 10, 42);
        let sp = SparsityConfig::default();
        let before = ae.total_cost(&batch, &sp).unwrap();
        let mut stepped = ae.clone();
        stepped.apply_gradient(&ae.cost_gradient(&batch, &sp).unwrap(), 1e-3);
        assert!(stepped.total_cost(&batch, &sp).unwrap() <= before);
    }

    #[test]
    fn training_is_deterministic() {
        let data = random_batch(8, 60, 50);
        let cfg = AeTrainConfig { hidden: 10, batch_size: 16, learning_rate: 0.05, epochs: 3, seed: 9, init_scale: 1.0 };
        let sp = SparsityConfig::default();
        let a = train_autoencoder(&data, &data[..10], &cfg, &sp).unwrap();
        let b = train_autoencoder(&data, &data[..10], &cfg, &sp).unwrap();
        assert_eq!(a.model.to_bytes(), b.model.to_bytes());
        assert_eq!(a.history.len(), 3);
        assert!(a.history.iter().all(|h| h.validation_cost.is_some()));
    }

    #[test]
    fn zero_epochs_returns_initial_weights() {
        let data = random_batch(5, 10, 1);
        let cfg = AeTrainConfig { hidden: 4, epochs: 0, seed: 3, ..AeTrainConfig::default() };
        let out = train_autoencoder(&data, &[], &cfg, &SparsityConfig::default()).unwrap();
        let init = SparseAutoencoder::init(5, 4, 1.0, derive_seed(3, "ae-init", 0)).unwrap();
        assert_eq!(out.model, init);
        assert!(out.history.is_empty());
    }

    #[test]
    fn divergence_is_reported() {
        let data: Vec<Vec<f64>> = (0..8).map(|i| vec![1e3 * (i as f64 + 1.0); 6]).collect();
        let cfg = AeTrainConfig { hidden: 6, batch_size: 4, learning_rate: 1e6, epochs: 20, seed: 1, init_scale: 1.0 };
        let res = train_autoencoder(&data, &[], &cfg, &SparsityConfig::default());
        assert!(matches!(res, Err(Error::Diverged { .. })), "{res:?}");
    }

    #[test]
    fn bases_reshape_rows() {
        let ae = random_ae(125, 150, 60);
        let bases = ae.extract_bases_3d((5, 5, 5)).unwrap();
        assert_eq!(bases.len(), 150);
        for (j, (f, b)) in bases.iter().enumerate() {
            assert_eq!(f.shape(), (5, 5, 5));
            assert_eq!(f.data(), ae.weights().row(j));
            assert_eq!(*b, ae.hidden_bias()[j]);
        }
        assert!(ae.extract_bases_3d((5, 5, 4)).is_err());

        // encoding a patch equals filter-times-patch plus bias per unit
        let patch = random_batch(125, 1, 61).pop().unwrap();
        let h = ae.encode(&patch).unwrap();
        for (j, (f, b)) in bases.iter().enumerate() {
            let z: f64 = f.data().iter().zip(&patch).map(|(w, x)| w * x).sum::<f64>() + b;
            assert!((h[j] - sigmoid(z)).abs() < 1e-14);
        }

        let ae2 = random_ae(121, 3, 62);
        let planar = ae2.extract_bases_2d((11, 11)).unwrap();
        assert_eq!((planar[2].0.rows(), planar[2].0.cols()), (11, 11));
        assert_eq!(planar[2].0.data(), ae2.weights().row(2));
    }

    #[test]
    fn checkpoint_round_trip_and_errors() {
        let ae = random_ae(5, 7, 70);
        let bytes = ae.to_bytes();
        assert_eq!(bytes.len(), 4 + 12 + 8 * (35 + 7 + 5));
        assert_eq!(SparseAutoencoder::from_bytes(&bytes).unwrap(), ae);
        assert!(matches!(
            SparseAutoencoder::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::Format { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(SparseAutoencoder::from_bytes(&bad), Err(Error::Format { offset: 0, .. })));
    }
}
