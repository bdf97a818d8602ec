//! Estimation of relative connectivity from train data.
//!
//! The relative connectivity `P_{y,t}(ỹ,t̃)` is the distribution over
//! (label, time) of a random neighbor of a node in community `(y,t)`. Cells
//! with both times on the train side are measured by neighbor counting; the
//! remaining rows and columns are reconstructed from the estimated decay
//! profile `ĝ(y,ỹ,Δ)` under the separability assumption
//! `P_{y,t}(ỹ,t̃) = f(y,t)·g(y,ỹ,|t̃-t|)`.

use serde::Serialize;

use crate::graph::{CommunityIndex, TemporalGraph};
use crate::{Error, Result};

/// Dense 4-index tensor `(y,t) -> (ỹ,t̃) -> value` over a contiguous time
/// range starting at `t_min`.
#[derive(Debug, Clone, Serialize)]
pub struct RelConnectivity {
    num_labels: usize,
    num_times: usize,
    t_min: i64,
    /// Row-major over rows `(y,t)`, each row over columns `(ỹ,t̃)`.
    data: Vec<f64>,
}

impl RelConnectivity {
    pub fn zeros(num_labels: usize, num_times: usize, t_min: i64) -> Self {
        let side = num_labels * num_times;
        Self { num_labels, num_times, t_min, data: vec![0.0; side * side] }
    }

    #[inline]
    fn slot(&self, y: usize, ti: usize) -> usize {
        debug_assert!(y < self.num_labels && ti < self.num_times);
        y * self.num_times + ti
    }

    #[inline]
    pub fn get(&self, y: usize, ti: usize, yn: usize, tni: usize) -> f64 {
        let side = self.num_labels * self.num_times;
        self.data[self.slot(y, ti) * side + self.slot(yn, tni)]
    }

    #[inline]
    pub fn set(&mut self, y: usize, ti: usize, yn: usize, tni: usize, v: f64) {
        let side = self.num_labels * self.num_times;
        let i = self.slot(y, ti) * side + self.slot(yn, tni);
        self.data[i] = v;
    }

    pub fn row(&self, y: usize, ti: usize) -> &[f64] {
        let side = self.num_labels * self.num_times;
        let r = self.slot(y, ti);
        &self.data[r * side..(r + 1) * side]
    }

    pub fn row_mut(&mut self, y: usize, ti: usize) -> &mut [f64] {
        let side = self.num_labels * self.num_times;
        let r = self.slot(y, ti);
        &mut self.data[r * side..(r + 1) * side]
    }

    pub fn row_sum(&self, y: usize, ti: usize) -> f64 {
        self.row(y, ti).iter().sum()
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn num_times(&self) -> usize {
        self.num_times
    }

    pub fn t_min(&self) -> i64 {
        self.t_min
    }

    /// Scales every row to sum to one; all-zero rows are left untouched.
    pub fn normalize_rows(&mut self) {
        let side = self.num_labels * self.num_times;
        for r in 0..side {
            let row = &mut self.data[r * side..(r + 1) * side];
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                for v in row {
                    *v /= total;
                }
            }
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

/// Train-block estimate: rows `(y,t)` with `t < θ`, columns restricted to
/// `t̃ < θ`, each populated row normalized over that support.
#[derive(Debug, Clone)]
pub struct TrainConnectivity {
    pub p: RelConnectivity,
    /// Per `(y,t)` row: measured with nonzero support.
    pub valid: Vec<bool>,
    /// Index of the first unlabeled timestamp slot.
    pub theta_index: usize,
}

/// Decay profile estimate `ĝ(y,ỹ,Δ)`, `Δ` ranging over `0..num_times`.
#[derive(Debug, Clone, Serialize)]
pub struct DecayEstimate {
    num_labels: usize,
    num_deltas: usize,
    data: Vec<f64>,
    /// Number of `(y,Δ)` blocks whose denominator vanished (values left 0).
    pub zero_denominator_cells: usize,
}

impl DecayEstimate {
    #[inline]
    pub fn get(&self, y: usize, yn: usize, delta: usize) -> f64 {
        self.data[(y * self.num_labels + yn) * self.num_deltas + delta]
    }

    fn set(&mut self, y: usize, yn: usize, delta: usize, v: f64) {
        self.data[(y * self.num_labels + yn) * self.num_deltas + delta] = v;
    }

    pub fn num_deltas(&self) -> usize {
        self.num_deltas
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }
}

/// Completed estimate: full row-stochastic tensor plus the profile it was
/// extended with.
#[derive(Debug, Clone)]
pub struct ConnectivityEstimate {
    pub p_hat: RelConnectivity,
    pub g_hat: DecayEstimate,
    /// Per `(y,t)` row of the train block: measured directly (true) or filled
    /// entirely from `ĝ` (false; unlabeled-time rows are always filled).
    pub valid_mask: Vec<bool>,
    /// Rows that fell back to uniform because the whole `ĝ` slice was zero.
    pub uniform_fallback_rows: usize,
}

/// First unlabeled timestamp slot (clamped into `0..=span`).
fn theta_slot(g: &TemporalGraph) -> usize {
    let span = g.time_span() as i64;
    (g.test_boundary() - g.t_min()).clamp(0, span) as usize
}

/// Neighbor-count estimator
/// `P̂_{y,t}(ỹ,t̃) = Σ_{u ∈ V_{y,t}} |N_u(ỹ,t̃)| / Σ_{u ∈ V_{y,t}} |N_u ∩ train|`
/// over train-side times. Communities with zero train-side neighbor mass are
/// marked invalid and later filled from the decay profile.
pub fn estimate_train_connectivity(g: &TemporalGraph, idx: &CommunityIndex) -> TrainConnectivity {
    let span = g.time_span();
    let labels = g.num_labels();
    let theta_index = theta_slot(g);
    let adj = g.unit_adjacency();
    let mut p = RelConnectivity::zeros(labels, span, g.t_min());
    let mut valid = vec![false; labels * span];

    for y in 0..labels {
        for ti in 0..theta_index {
            let nodes = idx.community(y, ti);
            if nodes.is_empty() {
                continue;
            }
            let mut total = 0.0_f64;
            for &u in nodes {
                for &(w, _) in adj.in_edges(u as usize) {
                    let w = w as usize;
                    if let Some(yn) = g.label_train(w) {
                        let tni = g.time_index(g.time(w));
                        if tni < theta_index {
                            let cur = p.get(y, ti, yn, tni);
                            p.set(y, ti, yn, tni, cur + 1.0);
                            total += 1.0;
                        }
                    }
                }
            }
            if total > 0.0 {
                for v in p.row_mut(y, ti) {
                    *v /= total;
                }
                valid[y * span + ti] = true;
            }
        }
    }
    TrainConnectivity { p, valid, theta_index }
}

/// Decay-profile estimator. For each offset, both time-sums pool every
/// measured train cell that realizes it:
///
/// `ĝ(y,ỹ,Δ) = [Σ_{t<θ-Δ} P̂_{y,t}(ỹ,t+Δ) + Σ_{t<θ} P̂_{y,t}(ỹ,t-Δ)]
///             / [Σ_{t<θ-Δ} f̂(y,t) + Σ_{t<θ} f̂(y,t)]`
///
/// with `f̂(y,t) = Σ_{y'} P̂_{y,t}(y',t)`. Terms of the second sum whose index
/// `t-Δ` falls below the time range are unrealizable and are dropped from the
/// numerator together with their `f̂(y,t)` mate in the denominator (keeping
/// the denominator full would bias `ĝ` low by the fraction of dropped terms).
/// Invalid rows are excluded from both sums as well.
pub fn estimate_g(train: &TrainConnectivity) -> DecayEstimate {
    let labels = train.p.num_labels();
    let span = train.p.num_times();
    let theta = train.theta_index;
    let mut out = DecayEstimate {
        num_labels: labels,
        num_deltas: span,
        data: vec![0.0; labels * labels * span],
        zero_denominator_cells: 0,
    };
    let row_valid = |y: usize, ti: usize| train.valid[y * span + ti];
    let same_time_mass =
        |y: usize, ti: usize| -> f64 { (0..labels).map(|yn| train.p.get(y, ti, yn, ti)).sum() };

    for y in 0..labels {
        for delta in 0..span {
            let mut den = 0.0_f64;
            for ti in 0..theta.saturating_sub(delta) {
                if row_valid(y, ti) {
                    den += same_time_mass(y, ti);
                }
            }
            for ti in delta..theta {
                if row_valid(y, ti) {
                    den += same_time_mass(y, ti);
                }
            }
            if den <= 0.0 {
                out.zero_denominator_cells += 1;
                continue;
            }
            for yn in 0..labels {
                let mut num = 0.0_f64;
                for ti in 0..theta.saturating_sub(delta) {
                    if row_valid(y, ti) {
                        num += train.p.get(y, ti, yn, ti + delta);
                    }
                }
                for ti in delta..theta {
                    if row_valid(y, ti) {
                        num += train.p.get(y, ti, yn, ti - delta);
                    }
                }
                out.set(y, yn, delta, num / den);
            }
        }
    }
    out
}

/// Completes the tensor. Rows at unlabeled times (and invalid train rows) are
/// rebuilt entirely as `ĝ(y,ỹ,|t̃-t|) / Σ_{y',t'} ĝ(y,y',|t'-t|)`; measured
/// train rows keep their cells, rescaled so that together with the
/// `ĝ`-extended unlabeled-time columns the row sums to one.
pub fn extend_to_tmax(train: &TrainConnectivity, g_hat: &DecayEstimate) -> ConnectivityEstimate {
    let labels = train.p.num_labels();
    let span = train.p.num_times();
    let theta = train.theta_index;
    let mut p_hat = RelConnectivity::zeros(labels, span, train.p.t_min());
    let mut uniform_fallback_rows = 0usize;

    for y in 0..labels {
        for ti in 0..span {
            let mut ext = vec![0.0_f64; labels * span];
            let mut z = 0.0_f64;
            for yn in 0..labels {
                for tni in 0..span {
                    let v = g_hat.get(y, yn, ti.abs_diff(tni));
                    ext[yn * span + tni] = v;
                    z += v;
                }
            }
            if z <= 0.0 {
                uniform_fallback_rows += 1;
                let u = 1.0 / (labels * span) as f64;
                for v in p_hat.row_mut(y, ti) {
                    *v = u;
                }
                continue;
            }
            for v in &mut ext {
                *v /= z;
            }
            let measured = ti < theta && train.valid[y * span + ti];
            let row = p_hat.row_mut(y, ti);
            if !measured {
                row.copy_from_slice(&ext);
            } else {
                let mut ext_mass = 0.0_f64;
                for yn in 0..labels {
                    for tni in theta..span {
                        ext_mass += ext[yn * span + tni];
                    }
                }
                let scale = 1.0 - ext_mass;
                for yn in 0..labels {
                    for tni in 0..span {
                        row[yn * span + tni] = if tni < theta {
                            train.p.get(y, ti, yn, tni) * scale
                        } else {
                            ext[yn * span + tni]
                        };
                    }
                }
            }
        }
    }
    ConnectivityEstimate {
        p_hat,
        g_hat: g_hat.clone(),
        valid_mask: train.valid.clone(),
        uniform_fallback_rows,
    }
}

/// Full pipeline: train-block estimation, decay profile, extension.
pub fn estimate_connectivity(g: &TemporalGraph) -> Result<ConnectivityEstimate> {
    if g.num_labels() == 0 {
        return Err(Error::Estimate("graph has no labeled nodes".into()));
    }
    let idx = CommunityIndex::build(g, true);
    let train = estimate_train_connectivity(g, &idx);
    let g_hat = estimate_g(&train);
    Ok(extend_to_tmax(&train, &g_hat))
}
