//! Decoupled baseline: all propagation and alignment happens once as
//! preprocessing, then a 2-layer MLP is trained on the final hop's output.

use std::time::Instant;

use super::{
    accuracy, glorot, linear, max_relative_error, relu, relu_backward, softmax_cross_entropy,
    Adam, Alignment, PipelineSpec, TrainConfig, TrainReport, MODEL_STREAM,
};
use crate::connectivity::estimate_connectivity;
use crate::graph::{CommunityIndex, TemporalGraph};
use crate::moment_align::{jjnorm_transform, pny_pipeline};
use crate::numerics::SeededRng;
use crate::propagation::{propagate, rewrite};
use crate::{Error, Mat, Result};

/// Runs the rewrite + K-hop propagation + alignment preprocessing and returns
/// the classifier input features.
pub fn sgc_features(g: &TemporalGraph, spec: &PipelineSpec) -> Result<Mat> {
    let adj = rewrite::<f64>(g, spec.scheme);
    let idx = CommunityIndex::build(g, true);
    let conn = match spec.alignment {
        Alignment::Pny => Some(estimate_connectivity(g)?),
        _ => None,
    };
    let mut current = g.features().clone();
    for hop in 0..spec.hops {
        let mut m = propagate(&current, &adj);
        if spec.alignment == Alignment::Pny && (!spec.pny_final_only || hop + 1 == spec.hops) {
            let conn = conn.as_ref().expect("connectivity estimated for pny");
            m = pny_pipeline(&m, &current, g, &idx, conn, spec.scheme, spec.target)?.0;
        }
        current = m;
    }
    if spec.alignment == Alignment::Jjnorm {
        current = jjnorm_transform(&current, g, &idx, spec.target)?.0;
    }
    Ok(current)
}

#[derive(Debug, Clone)]
pub struct MlpParams {
    pub w1: Mat,
    pub b1: Vec<f64>,
    pub w2: Mat,
    pub b2: Vec<f64>,
}

impl MlpParams {
    pub fn init(f_in: usize, hidden: usize, classes: usize, rng: &mut SeededRng) -> Self {
        Self {
            w1: glorot(f_in, hidden, rng),
            b1: vec![0.0; hidden],
            w2: glorot(hidden, classes, rng),
            b2: vec![0.0; classes],
        }
    }

    pub fn logits(&self, x: &Mat) -> Mat {
        let h = relu(&linear(x, &self.w1, &self.b1));
        linear(&h, &self.w2, &self.b2)
    }

    fn to_flat(&self) -> Vec<f64> {
        self.w1
            .data()
            .iter()
            .chain(&self.b1)
            .chain(self.w2.data())
            .chain(&self.b2)
            .copied()
            .collect()
    }

    fn assign_from_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for v in self.w1.data_mut() {
            *v = *it.next().unwrap();
        }
        for v in &mut self.b1 {
            *v = *it.next().unwrap();
        }
        for v in self.w2.data_mut() {
            *v = *it.next().unwrap();
        }
        for v in &mut self.b2 {
            *v = *it.next().unwrap();
        }
        assert!(it.next().is_none(), "flat parameter length mismatch");
    }
}

struct MlpGrads {
    w1: Mat,
    b1: Vec<f64>,
    w2: Mat,
    b2: Vec<f64>,
}

fn mlp_loss_grads(
    params: &MlpParams,
    x: &Mat,
    labels: &[usize],
    mask: &[u32],
) -> (f64, MlpGrads) {
    let z1 = linear(x, &params.w1, &params.b1);
    let h = relu(&z1);
    let logits = linear(&h, &params.w2, &params.b2);
    let (loss, dlogits) = softmax_cross_entropy(&logits, labels, mask);

    let dw2 = h.transpose().matmul(&dlogits).expect("shapes");
    let db2: Vec<f64> = (0..dlogits.cols())
        .map(|j| (0..dlogits.rows()).map(|i| dlogits.get(i, j)).sum())
        .collect();
    let dh = dlogits.matmul(&params.w2.transpose()).expect("shapes");
    let dz1 = relu_backward(&dh, &z1);
    let dw1 = x.transpose().matmul(&dz1).expect("shapes");
    let db1: Vec<f64> = (0..dz1.cols())
        .map(|j| (0..dz1.rows()).map(|i| dz1.get(i, j)).sum())
        .collect();
    (loss, MlpGrads { w1: dw1, b1: db1, w2: dw2, b2: db2 })
}

/// Full-batch Adam training of the MLP on the preprocessed features.
pub fn train_sgc(g: &TemporalGraph, spec: &PipelineSpec, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let start = Instant::now();
    let x = sgc_features(g, spec)?;
    let labels = g.labels_oracle();
    let train_mask = g.train_nodes();
    let test_mask = g.test_nodes();
    if train_mask.is_empty() {
        return Err(Error::Train("no train nodes before the boundary".into()));
    }
    let classes = g.num_labels();
    let mut rng = SeededRng::for_task(cfg.seed, MODEL_STREAM);
    let mut params = MlpParams::init(x.cols(), cfg.hidden, classes, &mut rng);
    let mut opt = (
        Adam::new(params.w1.data().len()),
        Adam::new(params.b1.len()),
        Adam::new(params.w2.data().len()),
        Adam::new(params.b2.len()),
    );

    let mut train_loss = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let (loss, grads) = mlp_loss_grads(&params, &x, labels, &train_mask);
        opt.0.step(params.w1.data_mut(), grads.w1.data(), cfg);
        opt.1.step(&mut params.b1, &grads.b1, cfg);
        opt.2.step(params.w2.data_mut(), grads.w2.data(), cfg);
        opt.3.step(&mut params.b2, &grads.b2, cfg);
        train_loss.push(loss);
    }

    let logits = params.logits(&x);
    let train_acc = accuracy(&logits, labels, &train_mask)?;
    let test_acc = if test_mask.is_empty() {
        f64::NAN
    } else {
        accuracy(&logits, labels, &test_mask)?
    };
    Ok(TrainReport {
        model: "sgc".into(),
        scheme: spec.scheme.name().into(),
        alignment: spec.alignment.name().into(),
        seed: cfg.seed,
        train_loss,
        train_acc,
        test_acc,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Central-difference check of the MLP gradients; returns the worst relative
/// disagreement over all parameters.
pub fn gradient_check_mlp(
    params: &MlpParams,
    x: &Mat,
    labels: &[usize],
    mask: &[u32],
    eps: f64,
) -> f64 {
    let (_, grads) = mlp_loss_grads(params, x, labels, mask);
    let analytic: Vec<f64> = grads
        .w1
        .data()
        .iter()
        .chain(&grads.b1)
        .chain(grads.w2.data())
        .chain(&grads.b2)
        .copied()
        .collect();

    let mut p = params.clone();
    let mut flat = params.to_flat();
    let loss_of = |p: &MlpParams| softmax_cross_entropy(&p.logits(x), labels, mask).0;
    let mut numeric = Vec::with_capacity(analytic.len());
    for i in 0..flat.len() {
        let orig = flat[i];
        flat[i] = orig + eps;
        p.assign_from_flat(&flat);
        let up = loss_of(&p);
        flat[i] = orig - eps;
        p.assign_from_flat(&flat);
        let down = loss_of(&p);
        flat[i] = orig;
        numeric.push((up - down) / (2.0 * eps));
    }
    max_relative_error(&analytic, &numeric)
}
