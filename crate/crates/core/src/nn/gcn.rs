//! 2-layer graph convolution baseline with hand-derived backpropagation.
//!
//! Forward: `propagate -> align -> ·W1 -> ReLU -> propagate -> align -> ·W2`.
//! Alignment statistics are recomputed every forward pass (layer-wise mode)
//! and treated as constants during backpropagation; the affine maps
//! themselves are differentiated as fixed linear operators, so the cotangent
//! of an aligned message is `Aᵀ d` (recoloring) or `α_t d` (rescaling) on
//! train rows and passes through unchanged on test rows.

use std::time::Instant;

use super::{
    accuracy, glorot, max_relative_error, relu, relu_backward, softmax_cross_entropy, Adam,
    Alignment, PipelineSpec, TrainConfig, TrainReport, MODEL_STREAM,
};
use crate::connectivity::{estimate_connectivity, ConnectivityEstimate};
use crate::graph::{CommunityIndex, TemporalGraph, WeightedAdjacency};
use crate::moment_align::{jjnorm_transform, pny_pipeline, JjStats, PnyDetail};
use crate::numerics::SeededRng;
use crate::propagation::{propagate, propagate_adjoint, rewrite};
use crate::{Error, Mat, Result};

#[derive(Debug, Clone)]
pub struct GcnParams {
    pub w1: Mat,
    pub w2: Mat,
}

impl GcnParams {
    pub fn init(f_in: usize, hidden: usize, classes: usize, rng: &mut SeededRng) -> Self {
        Self { w1: glorot(f_in, hidden, rng), w2: glorot(hidden, classes, rng) }
    }

    fn to_flat(&self) -> Vec<f64> {
        self.w1.data().iter().chain(self.w2.data()).copied().collect()
    }

    fn assign_from_flat(&mut self, flat: &[f64]) {
        let (a, b) = flat.split_at(self.w1.data().len());
        self.w1.data_mut().copy_from_slice(a);
        self.w2.data_mut().copy_from_slice(b);
    }
}

/// Linear map applied to each layer's aggregated message, remembered for the
/// backward pass.
enum AlignDetail {
    None,
    Pny(PnyDetail),
    Jj(JjStats),
}

struct GcnContext<'a> {
    g: &'a TemporalGraph,
    adj: WeightedAdjacency<f64>,
    idx: CommunityIndex,
    conn: Option<ConnectivityEstimate>,
    spec: PipelineSpec,
}

impl<'a> GcnContext<'a> {
    fn new(g: &'a TemporalGraph, spec: PipelineSpec) -> Result<Self> {
        let adj = rewrite::<f64>(g, spec.scheme);
        let idx = CommunityIndex::build(g, true);
        let conn = match spec.alignment {
            Alignment::Pny => Some(estimate_connectivity(g)?),
            _ => None,
        };
        Ok(Self { g, adj, idx, conn, spec })
    }

    /// Aligns one layer's messages; `x` is the representation that was
    /// propagated (the covariance source for the recoloring).
    fn align(&self, m: &Mat, x: &Mat) -> Result<(Mat, AlignDetail)> {
        match self.spec.alignment {
            Alignment::None => Ok((m.clone(), AlignDetail::None)),
            Alignment::Pny => {
                let conn = self.conn.as_ref().expect("connectivity present for pny");
                let (out, detail) = pny_pipeline(
                    m,
                    x,
                    self.g,
                    &self.idx,
                    conn,
                    self.spec.scheme,
                    self.spec.target,
                )?;
                Ok((out, AlignDetail::Pny(detail)))
            }
            Alignment::Jjnorm => {
                let (out, stats) = jjnorm_transform(m, self.g, &self.idx, self.spec.target)?;
                Ok((out, AlignDetail::Jj(stats)))
            }
        }
    }

    /// Cotangent of the alignment as a fixed linear map (statistics frozen).
    fn align_backward(&self, d: &Mat, detail: &AlignDetail) -> Mat {
        match detail {
            AlignDetail::None => d.clone(),
            AlignDetail::Jj(stats) => {
                let mut out = d.clone();
                for (i, &t) in stats.times.iter().enumerate() {
                    let alpha = stats.alpha_hat[i];
                    let ti = self.g.time_index(t);
                    for y in 0..self.idx.num_labels() {
                        for &v in self.idx.community(y, ti) {
                            for dv in out.row_mut(v as usize) {
                                *dv *= alpha;
                            }
                        }
                    }
                }
                out
            }
            AlignDetail::Pny(detail) => {
                let mut out = d.clone();
                let span = detail.span;
                let f = d.cols();
                let mut buf = vec![0.0_f64; f];
                for y in 0..self.idx.num_labels() {
                    for ti in 0..span {
                        let Some(a) = &detail.a[y * span + ti] else { continue };
                        for &v in self.idx.community(y, ti) {
                            let v = v as usize;
                            buf.copy_from_slice(d.row(v));
                            for (k, o) in out.row_mut(v).iter_mut().enumerate() {
                                // (Aᵀ d)_k = Σ_j A_{j,k} d_j
                                *o = (0..f).map(|j| a.get(j, k) * buf[j]).sum();
                            }
                        }
                    }
                }
                out
            }
        }
    }

    fn loss_and_grads(&self, params: &GcnParams) -> Result<(f64, GcnGrads)> {
        let x = self.g.features();
        let m1 = propagate(x, &self.adj);
        // The first alignment's detail is not needed backward: no cotangent
        // flows past layer 1's input (the raw features are constants).
        let (m1a, _) = self.align(&m1, x)?;
        let z1 = m1a.matmul(&params.w1).expect("shapes");
        let h = relu(&z1);
        let m2 = propagate(&h, &self.adj);
        let (m2a, det2) = self.align(&m2, &h)?;
        let logits = m2a.matmul(&params.w2).expect("shapes");

        let labels = self.g.labels_oracle();
        let train_mask = self.g.train_nodes();
        let (loss, dlogits) = softmax_cross_entropy(&logits, labels, &train_mask);

        let dw2 = m2a.transpose().matmul(&dlogits).expect("shapes");
        let dm2a = dlogits.matmul(&params.w2.transpose()).expect("shapes");
        let dm2 = self.align_backward(&dm2a, &det2);
        let dh = propagate_adjoint(&dm2, &self.adj);
        let dz1 = relu_backward(&dh, &z1);
        let dw1 = m1a.transpose().matmul(&dz1).expect("shapes");
        Ok((loss, GcnGrads { w1: dw1, w2: dw2 }))
    }

    fn logits(&self, params: &GcnParams) -> Result<Mat> {
        let x = self.g.features();
        let m1 = propagate(x, &self.adj);
        let (m1a, _) = self.align(&m1, x)?;
        let h = relu(&m1a.matmul(&params.w1).expect("shapes"));
        let m2 = propagate(&h, &self.adj);
        let (m2a, _) = self.align(&m2, &h)?;
        Ok(m2a.matmul(&params.w2).expect("shapes"))
    }
}

struct GcnGrads {
    w1: Mat,
    w2: Mat,
}

/// Full-batch Adam training of the 2-layer graph convolution model.
pub fn train_gcn(g: &TemporalGraph, spec: &PipelineSpec, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let start = Instant::now();
    let ctx = GcnContext::new(g, *spec)?;
    let train_mask = g.train_nodes();
    let test_mask = g.test_nodes();
    if train_mask.is_empty() {
        return Err(Error::Train("no train nodes before the boundary".into()));
    }
    let mut rng = SeededRng::for_task(cfg.seed, MODEL_STREAM);
    let mut params = GcnParams::init(g.feature_dim(), cfg.hidden, g.num_labels(), &mut rng);
    let mut opt = (Adam::new(params.w1.data().len()), Adam::new(params.w2.data().len()));

    let mut train_loss = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let (loss, grads) = ctx.loss_and_grads(&params)?;
        opt.0.step(params.w1.data_mut(), grads.w1.data(), cfg);
        opt.1.step(params.w2.data_mut(), grads.w2.data(), cfg);
        train_loss.push(loss);
    }
    let logits = ctx.logits(&params)?;
    let labels = g.labels_oracle();
    let train_acc = accuracy(&logits, labels, &train_mask)?;
    let test_acc = if test_mask.is_empty() {
        f64::NAN
    } else {
        accuracy(&logits, labels, &test_mask)?
    };
    Ok(TrainReport {
        model: "gcn".into(),
        scheme: spec.scheme.name().into(),
        alignment: spec.alignment.name().into(),
        seed: cfg.seed,
        train_loss,
        train_acc,
        test_acc,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Central-difference check of the GCN gradients on the plain (no alignment)
/// forward; returns the worst relative disagreement over all parameters.
pub fn gradient_check_gcn(g: &TemporalGraph, params: &GcnParams, eps: f64) -> Result<f64> {
    let ctx = GcnContext::new(g, PipelineSpec::default())?;
    let (_, grads) = ctx.loss_and_grads(params)?;
    let analytic: Vec<f64> =
        grads.w1.data().iter().chain(grads.w2.data()).copied().collect();

    let labels = g.labels_oracle();
    let mask = g.train_nodes();
    let mut p = params.clone();
    let mut flat = params.to_flat();
    let mut numeric = Vec::with_capacity(flat.len());
    for i in 0..flat.len() {
        let orig = flat[i];
        flat[i] = orig + eps;
        p.assign_from_flat(&flat);
        let up = softmax_cross_entropy(&ctx.logits(&p)?, labels, &mask).0;
        flat[i] = orig - eps;
        p.assign_from_flat(&flat);
        let down = softmax_cross_entropy(&ctx.logits(&p)?, labels, &mask).0;
        flat[i] = orig;
        numeric.push((up - down) / (2.0 * eps));
    }
    Ok(max_relative_error(&analytic, &numeric))
}
