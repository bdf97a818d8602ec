//! Trainable baselines: a decoupled model (precomputed propagation feeding a
//! 2-layer MLP) and a 2-layer graph convolution network with hand-derived
//! backpropagation, both optimized full-batch with Adam on softmax
//! cross-entropy.

mod gcn;
mod sgc;

pub use gcn::{gradient_check_gcn, train_gcn, GcnParams};
pub use sgc::{gradient_check_mlp, sgc_features, train_sgc, MlpParams};

use serde::{Deserialize, Serialize};

use crate::moment_align::TestMomentTarget;
use crate::numerics::SeededRng;
use crate::propagation::Scheme;
use crate::{Error, Mat, Result};

/// Post-hoc correction applied on top of a rewrite scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Alignment {
    #[default]
    None,
    Pny,
    Jjnorm,
}

impl Alignment {
    pub fn name(&self) -> &'static str {
        match self {
            Alignment::None => "none",
            Alignment::Pny => "pny",
            Alignment::Jjnorm => "jjnorm",
        }
    }
}

/// Propagation-plus-alignment pipeline in front of (or inside) a model.
#[derive(Debug, Clone, Copy)]
pub struct PipelineSpec {
    pub scheme: Scheme,
    pub alignment: Alignment,
    /// Decoupled model only: apply the recoloring after the last hop instead
    /// of after every hop.
    pub pny_final_only: bool,
    pub target: TestMomentTarget,
    /// Number of propagation hops / graph convolution layers.
    pub hops: usize,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        Self {
            scheme: Scheme::Avg,
            alignment: Alignment::None,
            pny_final_only: false,
            target: TestMomentTarget::TestPool,
            hops: 2,
        }
    }
}

impl PipelineSpec {
    pub fn new(scheme: Scheme, alignment: Alignment) -> Self {
        Self { scheme, alignment, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            weight_decay: 5e-4,
            epochs: 200,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            hidden: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden dimension must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub model: String,
    pub scheme: String,
    pub alignment: String,
    pub seed: u64,
    /// Training loss per epoch (cross-entropy over train nodes).
    pub train_loss: Vec<f64>,
    pub train_acc: f64,
    pub test_acc: f64,
    pub wall_ms: f64,
}

/// Coupled-weight-decay Adam over one flat parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    /// One update with `g' = g + weight_decay * θ` (classic L2 coupling).
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], cfg: &TrainConfig) {
        debug_assert_eq!(params.len(), grads.len());
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i] + cfg.weight_decay * params[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
}

/// Glorot-uniform weight matrix.
pub fn glorot(rows: usize, cols: usize, rng: &mut SeededRng) -> Mat {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Mat::from_fn(rows, cols, |_, _| rng.uniform(-limit, limit))
}

pub fn relu(z: &Mat) -> Mat {
    let mut out = z.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Masks `d` by the ReLU activation pattern of `z`.
pub fn relu_backward(d: &Mat, z: &Mat) -> Mat {
    let mut out = d.clone();
    for (o, &zv) in out.data_mut().iter_mut().zip(z.data()) {
        if zv <= 0.0 {
            *o = 0.0;
        }
    }
    out
}

/// `x · w + b` broadcast over rows; `b` may be empty for bias-free layers.
pub fn linear(x: &Mat, w: &Mat, b: &[f64]) -> Mat {
    let mut out = x.matmul(w).expect("conforming shapes");
    if !b.is_empty() {
        for i in 0..out.rows() {
            for (o, &bv) in out.row_mut(i).iter_mut().zip(b) {
                *o += bv;
            }
        }
    }
    out
}

/// Mean softmax cross-entropy over the masked rows, with the matching
/// gradient in logit space (zero outside the mask). Uses log-sum-exp
/// stabilization, so logits up to about ±1e3 stay finite.
pub fn softmax_cross_entropy(logits: &Mat, labels: &[usize], mask: &[u32]) -> (f64, Mat) {
    assert!(!mask.is_empty(), "loss needs a nonempty mask");
    let classes = logits.cols();
    let inv = 1.0 / mask.len() as f64;
    let mut loss = 0.0_f64;
    let mut grad = Mat::zeros(logits.rows(), classes);
    for &v in mask {
        let v = v as usize;
        let row = logits.row(v);
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        loss += lse - row[labels[v]];
        let grow = grad.row_mut(v);
        for (j, g) in grow.iter_mut().enumerate() {
            let p = (row[j] - lse).exp();
            *g = (p - if j == labels[v] { 1.0 } else { 0.0 }) * inv;
        }
    }
    (loss * inv, grad)
}

/// Row-softmax of the logits (diagnostic use).
pub fn softmax(logits: &Mat) -> Mat {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Fraction of masked rows whose argmax (lowest index on ties) matches the
/// label.
pub fn accuracy(logits: &Mat, labels: &[usize], mask: &[u32]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::Train("accuracy over an empty mask".into()));
    }
    let mut correct = 0usize;
    for &v in mask {
        let v = v as usize;
        let row = logits.row(v);
        let mut best = 0usize;
        for (j, &x) in row.iter().enumerate().skip(1) {
            if x > row[best] {
                best = j;
            }
        }
        if best == labels[v] {
            correct += 1;
        }
    }
    Ok(correct as f64 / mask.len() as f64)
}

/// Relative disagreement between analytic and central-difference gradients.
pub(crate) fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Stream tag separating model-side randomness from graph generation.
pub(crate) const MODEL_STREAM: u64 = 1;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_counts_and_tie_breaks() {
        let logits = Mat::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![0.0, 5.0, 5.0],
        ]);
        let labels = vec![0, 1, 0, 1];
        // All-zero row ties to class 0; row 3 ties between 1 and 2 -> 1.
        assert_eq!(accuracy(&logits, &labels, &[0, 1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&logits, &labels, &[0, 1]).unwrap(), 1.0);
        let wrong = vec![1, 0, 1, 2];
        assert_eq!(accuracy(&logits, &wrong, &[0, 1, 2, 3]).unwrap(), 0.0);
        assert_eq!(accuracy(&logits, &wrong, &[0, 2]).unwrap(), 0.0);
        assert!(accuracy(&logits, &labels, &[]).is_err());
        // Half correct.
        assert_eq!(accuracy(&logits, &[0, 0, 0, 0], &[0, 1]).unwrap(), 0.5);
    }

    #[test]
    fn zero_logits_accuracy_equals_label_zero_share() {
        // With the lowest-index tie-break, all-zero logits predict class 0.
        let logits = Mat::zeros(10, 4);
        let labels: Vec<usize> = (0..10).map(|i| i % 4).collect();
        let mask: Vec<u32> = (0..10).collect();
        let share = labels.iter().filter(|&&y| y == 0).count() as f64 / 10.0;
        assert_eq!(accuracy(&logits, &labels, &mask).unwrap(), share);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_loss_matches_uniform() {
        let logits = Mat::from_rows(&[vec![1000.0, -1000.0, 0.0], vec![0.0, 0.0, 0.0]]);
        let p = softmax(&logits);
        for i in 0..2 {
            let s: f64 = p.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(p.row(i).iter().all(|v| v.is_finite()));
        }
        let (loss, grad) = softmax_cross_entropy(&logits, &[2, 1], &[1]);
        assert!((loss - (3.0_f64).ln()).abs() < 1e-12);
        // Gradient rows outside the mask stay zero.
        assert!(grad.row(0).iter().all(|&g| g == 0.0));
        let s: f64 = grad.row(1).iter().sum();
        assert!(s.abs() < 1e-12, "softmax grad rows sum to zero");
    }

    #[test]
    fn adam_moves_against_gradient() {
        let cfg = TrainConfig { weight_decay: 0.0, ..TrainConfig::default() };
        let mut p = vec![1.0, -1.0];
        let mut opt = Adam::new(2);
        for _ in 0..50 {
            let g = vec![2.0 * p[0], 2.0 * p[1]];
            opt.step(&mut p, &g, &cfg);
        }
        assert!(p[0].abs() < 0.7 && p[1].abs() < 0.7, "{p:?}");
    }
}
