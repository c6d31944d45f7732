//! Three-layer classifier head: sigmoid hidden layer, softmax output,
//! cross-entropy cost, momentum SGD and validation early stopping.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{dim_u32, ByteReader, ByteWriter};
use crate::error::{dim_err, param_err, Error, Result};
use crate::kernels::sigmoid;
use crate::rng::{derive_seed, Rng};
use crate::tensor::{axpy, dot, Matrix};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VXMC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A feature vector with its class index.
pub type Labeled<X> = (X, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    w1: Matrix,
    b1: Vec<f64>,
    w2: Matrix,
    b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub cost: f64,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Softmax with max subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl MlpClassifier {
    pub fn new(w1: Matrix, b1: Vec<f64>, w2: Matrix, b2: Vec<f64>) -> Result<Self> {
        if b1.len() != w1.rows() || w2.cols() != w1.rows() || b2.len() != w2.rows() {
            return Err(dim_err(format!(
                "inconsistent layer shapes: W1 {}x{}, b1 {}, W2 {}x{}, b2 {}",
                w1.rows(),
                w1.cols(),
                b1.len(),
                w2.rows(),
                w2.cols(),
                b2.len()
            )));
        }
        if !(2..=3).contains(&w2.rows()) {
            return Err(param_err(format!("classifier needs 2 or 3 classes, got {}", w2.rows())));
        }
        Ok(MlpClassifier { w1, b1, w2, b2 })
    }

    /// Hidden weights uniform on `+-sqrt(6 / (input + hidden))`, everything
    /// else zero.
    pub fn init(input_dim: usize, hidden_dim: usize, classes: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || classes == 0 {
            return Err(param_err("network dimensions must be at least 1"));
        }
        let r = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        let w1 = Matrix::new(hidden_dim, input_dim, Rng::new(seed).uniform(-r, r, hidden_dim * input_dim)?)?;
        Self::new(w1, vec![0.0; hidden_dim], Matrix::zeros(classes, hidden_dim)?, vec![0.0; classes])
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn classes(&self) -> usize {
        self.w2.rows()
    }

    pub fn hidden_weights(&self) -> &Matrix {
        &self.w1
    }

    pub fn hidden_bias(&self) -> &[f64] {
        &self.b1
    }

    pub fn output_weights(&self) -> &Matrix {
        &self.w2
    }

    pub fn output_bias(&self) -> &[f64] {
        &self.b2
    }

    fn hidden(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(dim_err(format!("input has {} features, network expects {}", x.len(), self.input_dim())));
        }
        let mut h = self.w1.matvec(x)?;
        for (hj, bj) in h.iter_mut().zip(&self.b1) {
            *hj = sigmoid(*hj + bj);
        }
        Ok(h)
    }

    fn logits_from_hidden(&self, h: &[f64]) -> Vec<f64> {
        (0..self.classes()).map(|c| dot(self.w2.row(c), h) + self.b2[c]).collect()
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.logits_from_hidden(&self.hidden(x)?))
    }

    /// Class probabilities.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    fn check_labels<X: AsRef<[f64]>>(&self, batch: &[Labeled<X>]) -> Result<()> {
        if batch.is_empty() {
            return Err(param_err("batch must not be empty"));
        }
        if let Some((_, y)) = batch.iter().find(|(_, y)| *y >= self.classes()) {
            return Err(param_err(format!("label {y} out of range for {} classes", self.classes())));
        }
        Ok(())
    }

    /// Mean negative log-probability of the true class, via log-sum-exp.
    pub fn cross_entropy<X: AsRef<[f64]>>(&self, batch: &[Labeled<X>]) -> Result<f64> {
        self.check_labels(batch)?;
        let mut total = 0.0;
        for (x, y) in batch {
            let z = self.logits(x.as_ref())?;
            total += log_sum_exp(&z) - z[*y];
        }
        Ok(total / batch.len() as f64)
    }

    pub fn gradient<X: AsRef<[f64]>>(&self, batch: &[Labeled<X>]) -> Result<MlpGradient> {
        self.check_labels(batch)?;
        let (input, hidden, classes) = (self.input_dim(), self.hidden_dim(), self.classes());
        let inv_n = 1.0 / batch.len() as f64;
        let mut g = MlpGradient {
            w1: Matrix::zeros(hidden, input)?,
            b1: vec![0.0; hidden],
            w2: Matrix::zeros(classes, hidden)?,
            b2: vec![0.0; classes],
            cost: 0.0,
        };
        for (x, y) in batch {
            let x = x.as_ref();
            let h = self.hidden(x)?;
            let z = self.logits_from_hidden(&h);
            g.cost += log_sum_exp(&z) - z[*y];
            let mut d_logit = softmax(&z);
            d_logit[*y] -= 1.0;
            d_logit.iter_mut().for_each(|d| *d *= inv_n);
            for (c, &d) in d_logit.iter().enumerate() {
                g.b2[c] += d;
                axpy(d, &h, g.w2.row_mut(c));
            }
            let back = self.w2.matvec_transposed(&d_logit)?;
            for j in 0..hidden {
                let dz = back[j] * h[j] * (1.0 - h[j]);
                if dz != 0.0 {
                    g.b1[j] += dz;
                    axpy(dz, x, g.w1.row_mut(j));
                }
            }
        }
        g.cost *= inv_n;
        Ok(g)
    }

    /// `VXMC`: magic, version u32, input/hidden/classes u32, then W1, b1, W2,
    /// b2 as little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_magic(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION)
            .u32(self.input_dim() as u32)
            .u32(self.hidden_dim() as u32)
            .u32(self.classes() as u32)
            .f64s(self.w1.data())
            .f64s(&self.b1)
            .f64s(self.w2.data())
            .f64s(&self.b2);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(CHECKPOINT_MAGIC)?;
        r.version(CHECKPOINT_VERSION)?;
        let v = r.u32("input size")?;
        let input = dim_u32(v, "input size", &r)?;
        let v = r.u32("hidden size")?;
        let hidden = dim_u32(v, "hidden size", &r)?;
        let v = r.u32("class count")?;
        let classes = dim_u32(v, "class count", &r)?;
        let w1 = r.f64s(hidden * input, "W1")?;
        let b1 = r.f64s(hidden, "b1")?;
        let w2 = r.f64s(classes * hidden, "W2")?;
        let b2 = r.f64s(classes, "b2")?;
        r.finish()?;
        Self::new(Matrix::new(hidden, input, w1)?, b1, Matrix::new(classes, hidden, w2)?, b2)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Velocity buffers for each parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    pub momentum: f64,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

impl MomentumState {
    pub fn new(net: &MlpClassifier, momentum: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(param_err(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        Ok(MomentumState {
            momentum,
            w1: vec![0.0; net.w1.data().len()],
            b1: vec![0.0; net.b1.len()],
            w2: vec![0.0; net.w2.data().len()],
            b2: vec![0.0; net.b2.len()],
        })
    }

    pub fn velocity_output_bias(&self) -> &[f64] {
        &self.b2
    }

    /// `v <- mu v - lr g; theta <- theta + v` for every group.
    pub fn step(&mut self, net: &mut MlpClassifier, g: &MlpGradient, lr: f64) -> Result<()> {
        if g.w1.data().len() != self.w1.len() || g.w2.data().len() != self.w2.len() {
            return Err(dim_err("gradient shape does not match momentum buffers"));
        }
        let mu = self.momentum;
        let update = |v: &mut [f64], grad: &[f64], theta: &mut [f64]| {
            for ((vi, gi), ti) in v.iter_mut().zip(grad).zip(theta) {
                *vi = mu * *vi - lr * gi;
                *ti += *vi;
            }
        };
        update(&mut self.w1, g.w1.data(), net.w1.data_mut());
        update(&mut self.b1, &g.b1, &mut net.b1);
        update(&mut self.w2, g.w2.data(), net.w2.data_mut());
        update(&mut self.b2, &g.b2, &mut net.b2);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Validation is scored every `eval_every` epochs and after the last one.
    pub eval_every: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { learning_rate: 0.01, momentum: 0.9, batch_size: 32, max_epochs: 200, seed: 0, eval_every: 1 }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(param_err(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(param_err(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(param_err("batch size and eval interval must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_cost: f64,
    /// Misclassification rate; `None` on epochs without a validation pass.
    pub validation_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub best: MlpClassifier,
    /// 0 when no evaluated epoch beat the initial network.
    pub best_epoch: usize,
    pub best_validation_error: Option<f64>,
    pub history: Vec<EpochRecord>,
}

/// Trains with momentum SGD and keeps the snapshot with the lowest validation
/// misclassification error.
pub fn fit<X: AsRef<[f64]>, Y: AsRef<[f64]>>(
    net: MlpClassifier,
    train: &[Labeled<X>],
    validation: &[Labeled<Y>],
    cfg: &FitConfig,
) -> Result<FitOutcome> {
    if validation.is_empty() {
        return Err(param_err("validation set must not be empty"));
    }
    fit_with_evaluator(net, train, cfg, |candidate, _| Ok(1.0 - evaluate(candidate, validation)?.accuracy))
}

/// Same loop as [`fit`] with a caller-supplied validation score
/// `(network, epoch) -> error`. The earliest epoch wins ties.
pub fn fit_with_evaluator<X: AsRef<[f64]>>(
    mut net: MlpClassifier,
    train: &[Labeled<X>],
    cfg: &FitConfig,
    mut evaluator: impl FnMut(&MlpClassifier, usize) -> Result<f64>,
) -> Result<FitOutcome> {
    cfg.validate()?;
    net.check_labels(train)?;
    let mut state = MomentumState::new(&net, cfg.momentum)?;
    let mut best = net.clone();
    let mut best_epoch = 0;
    let mut best_error: Option<f64> = None;
    let mut history = Vec::with_capacity(cfg.max_epochs);

    for epoch in 1..=cfg.max_epochs {
        let order = Rng::new(derive_seed(cfg.seed, "fit-epoch", epoch as u64)).permutation(train.len());
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<(&[f64], usize)> = chunk.iter().map(|&i| (train[i].0.as_ref(), train[i].1)).collect();
            let g = net.gradient(&batch)?;
            if !g.cost.is_finite() {
                return Err(Error::Diverged { epoch, batch: bi });
            }
            state.step(&mut net, &g, cfg.learning_rate)?;
        }
        let train_cost = net.cross_entropy(train)?;
        if !train_cost.is_finite() {
            return Err(Error::Diverged { epoch, batch: order.len().div_ceil(cfg.batch_size) });
        }
        let validation_error = if epoch % cfg.eval_every == 0 || epoch == cfg.max_epochs {
            let err = evaluator(&net, epoch)?;
            if best_error.is_none_or(|b| err < b) {
                best = net.clone();
                best_epoch = epoch;
                best_error = Some(err);
            }
            Some(err)
        } else {
            None
        };
        history.push(EpochRecord { epoch, train_cost, validation_error });
    }
    Ok(FitOutcome { best, best_epoch, best_validation_error: best_error, history })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// `confusion_matrix[true][predicted]`.
    pub confusion_matrix: Vec<Vec<usize>>,
}

pub fn evaluate<X: AsRef<[f64]>>(net: &MlpClassifier, test: &[Labeled<X>]) -> Result<Evaluation> {
    net.check_labels(test)?;
    let k = net.classes();
    let mut confusion = vec![vec![0usize; k]; k];
    for (x, y) in test {
        confusion[*y][net.predict(x.as_ref())?] += 1;
    }
    let correct = (0..k).map(|c| confusion[c][c]).sum::<usize>();
    Ok(Evaluation { accuracy: correct as f64 / test.len() as f64, correct, total: test.len(), confusion_matrix: confusion })
}

/// Accuracy as a percentage with two decimals, e.g. `"89.47%"`.
pub fn format_percent(accuracy: f64) -> String {
    format!("{:.2}%", accuracy * 100.0)
}

/// Metrics document written by the evaluation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: String,
    pub accuracy: f64,
    pub confusion_matrix: Vec<Vec<usize>>,
    pub history: Vec<EpochRecord>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}
