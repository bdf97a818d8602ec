//! Second-moment alignment of aggregated messages.
//!
//! After a first-moment-aligned rewrite, the per-community message means no
//! longer depend on time, but the covariances still do. Two correctors are
//! provided, both transforming train-side messages only:
//!
//! * `pny`: per-community affine recoloring
//!   `M' = A (M - mu(y)) + mu(y)` with
//!   `A = U_eff L_eff^{1/2} L_{yt}^{-1/2} U_{yt}T`, built from
//!   eigendecompositions of predicted message covariances, mapping each
//!   community's covariance onto the test-time target exactly.
//! * `jjnorm`: when the decay profile is label-independent, covariances at
//!   different times differ only by a scalar, so a single per-time factor
//!   rescales messages around their community means.
//!
//! Predicted covariances come from the relative-connectivity estimate via
//! the variance of the reweighted average: with scheme weight `w(dt)`,
//! `S_MM(y,t) = sum_yn [sum_tn w^2 P] S_XX(yn) / ([sum w P]^2 |N_yt|)`.

use serde::Serialize;

use crate::connectivity::ConnectivityEstimate;
use crate::graph::{mean_degree_per_community, CommunityIndex, TemporalGraph};
use crate::numerics::{jacobi_eigh, reconstruct, row_mean, sample_covariance};
use crate::propagation::{is_single_sided, Scheme};
use crate::{Error, Mat, Result};

/// Eigenvalue floor applied before forming the inverse square root (and,
/// symmetrically, the square root), so rank-deficient community covariances
/// cannot blow up the recoloring map.
pub const EIG_FLOOR: f64 = 1e-8;

const ALPHA_CLAMP: (f64, f64) = (1e-3, 1e3);
const ALPHA_NUM_FLOOR: f64 = 1e-12;

/// Which pool of nodes provides the target (test-side) second moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TestMomentTarget {
    /// All nodes at unlabeled times, treated as one block.
    #[default]
    TestPool,
    /// Only the nodes at `t_max`.
    TmaxOnly,
}

/// Per-community first and second moments of messages, plus the predicted
/// message covariances the recoloring is built from.
#[derive(Debug, Clone)]
pub struct CommunityMoments {
    pub span: usize,
    pub theta_index: usize,
    /// Sample mean of messages per labeled (y, t) community.
    pub mu_m: Vec<Option<Vec<f64>>>,
    /// Per-label mean of messages over all train nodes.
    pub mu_m_label: Vec<Option<Vec<f64>>>,
    /// Per-time mean of messages over all nodes.
    pub mu_m_time: Vec<Option<Vec<f64>>>,
    /// Per-label representation covariance over train nodes.
    pub sigma_xx: Vec<Mat>,
    /// Predicted message covariance per (y, t), all times.
    pub sigma_mm: Vec<Option<Mat>>,
    /// Predicted covariance of the test-side target per label.
    pub sigma_mm_eff: Vec<Option<Mat>>,
    /// Mean degree per (y, t); unlabeled times fall back to the per-time mean.
    pub n_yt: Vec<Option<f64>>,
}

fn theta_slot(g: &TemporalGraph) -> usize {
    let span = g.time_span() as i64;
    (g.test_boundary() - g.t_min()).clamp(0, span) as usize
}

/// Unbiased per-label sample covariance of `x` pooled over all train times.
pub fn estimate_label_covariances(
    x: &Mat,
    g: &TemporalGraph,
    idx: &CommunityIndex,
) -> Result<Vec<Mat>> {
    let theta = theta_slot(g);
    let mut out = Vec::with_capacity(g.num_labels());
    for y in 0..g.num_labels() {
        let mut nodes: Vec<u32> = Vec::new();
        for ti in 0..theta {
            nodes.extend_from_slice(idx.community(y, ti));
        }
        if nodes.len() < 2 {
            return Err(Error::Estimate(format!(
                "label {y} has {} train nodes; need at least 2 for a covariance",
                nodes.len()
            )));
        }
        out.push(sample_covariance(x, &nodes)?);
    }
    Ok(out)
}

/// Mean degree per (y, t). Labeled communities use their own mean; unlabeled
/// times share the per-time mean over all nodes at that time.
pub fn mean_degree_with_time_fallback(g: &TemporalGraph, idx: &CommunityIndex) -> Vec<Option<f64>> {
    let theta = theta_slot(g);
    let span = g.time_span();
    let mut out = mean_degree_per_community(g, idx);
    let deg = g.degrees();
    for ti in theta..span {
        let nodes = idx.at_time(ti);
        let fallback = if nodes.is_empty() {
            None
        } else {
            Some(nodes.iter().map(|&v| deg[v as usize] as f64).sum::<f64>() / nodes.len() as f64)
        };
        for y in 0..g.num_labels() {
            out[y * span + ti] = fallback;
        }
    }
    out
}

/// Rewrite weight of `scheme` for an in-edge with signed time offset
/// `signed_offset` relative to a target at time `t`.
fn scheme_weight(scheme: Scheme, signed_offset: i64, t: i64, t_min: i64, t_max: i64) -> f64 {
    match scheme {
        Scheme::Avg | Scheme::GenPmp => 1.0,
        Scheme::Mmp => {
            if signed_offset <= 0 {
                1.0
            } else {
                0.0
            }
        }
        Scheme::Pmp(mode) => {
            if is_single_sided(signed_offset.abs(), t, t_min, t_max, mode) {
                2.0
            } else {
                1.0
            }
        }
    }
}

/// Predicted covariance of the one-hop aggregated message for every (y, t).
/// Rows of the connectivity tensor are renormalized before use, so uniform
/// rescaling of the tensor is a no-op. Communities with zero mean degree are
/// an error; empty communities yield `None`.
pub fn predict_message_covariance(
    conn: &ConnectivityEstimate,
    sigma_xx: &[Mat],
    n_yt: &[Option<f64>],
    scheme: Scheme,
    g: &TemporalGraph,
) -> Result<Vec<Option<Mat>>> {
    let span = g.time_span();
    let labels = g.num_labels();
    let f = sigma_xx.first().map_or(0, Mat::rows);
    let (t_min, t_max) = (g.t_min(), g.t_max());
    let mut out: Vec<Option<Mat>> = vec![None; labels * span];

    for y in 0..labels {
        for ti in 0..span {
            let n = match n_yt[y * span + ti] {
                None => continue,
                Some(n) if n <= 0.0 => {
                    return Err(Error::Estimate(format!(
                        "community (label {y}, time {}) has zero mean degree",
                        t_min + ti as i64
                    )));
                }
                Some(n) => n,
            };
            let t = t_min + ti as i64;
            let row = conn.p_hat.row(y, ti);
            let row_total: f64 = row.iter().sum();
            if row_total <= 0.0 {
                continue;
            }
            let mut num = Mat::zeros(f, f);
            let mut den = 0.0_f64;
            for yn in 0..labels {
                let mut coef = 0.0_f64;
                for tni in 0..span {
                    let p = row[yn * span + tni] / row_total;
                    if p == 0.0 {
                        continue;
                    }
                    let tn = t_min + tni as i64;
                    let w = scheme_weight(scheme, tn - t, t, t_min, t_max);
                    coef += w * w * p;
                    den += w * p;
                }
                if coef > 0.0 {
                    num = num.add(&sigma_xx[yn].scale(coef))?;
                }
            }
            if den <= 0.0 {
                continue;
            }
            let mut m = num.scale(1.0 / (den * den * n));
            m.symmetrize();
            out[y * span + ti] = Some(m);
        }
    }
    Ok(out)
}

/// Population-weighted combination of the predicted covariances over the
/// test-side times (or the `t_max` slot alone).
fn predicted_test_target(
    sigma_mm: &[Option<Mat>],
    idx: &CommunityIndex,
    theta: usize,
    span: usize,
    labels: usize,
    target: TestMomentTarget,
) -> Vec<Option<Mat>> {
    let slots: Vec<usize> = match target {
        TestMomentTarget::TestPool => (theta..span).collect(),
        TestMomentTarget::TmaxOnly => vec![span - 1],
    };
    (0..labels)
        .map(|y| {
            let mut acc: Option<Mat> = None;
            let mut total = 0.0_f64;
            for &ti in &slots {
                let weight = idx.at_time(ti).len() as f64;
                if weight == 0.0 {
                    continue;
                }
                if let Some(m) = &sigma_mm[y * span + ti] {
                    let scaled = m.scale(weight);
                    acc = Some(match acc {
                        None => scaled,
                        Some(a) => a.add(&scaled).expect("conforming shapes"),
                    });
                    total += weight;
                }
            }
            acc.map(|a| a.scale(1.0 / total))
        })
        .collect()
}

/// Computes all community moments needed by the aligners: sample means,
/// per-label representation covariances of `x`, and predicted message
/// covariances of the messages under `scheme`.
pub fn community_moments(
    messages: &Mat,
    x: &Mat,
    g: &TemporalGraph,
    idx: &CommunityIndex,
    conn: &ConnectivityEstimate,
    scheme: Scheme,
    target: TestMomentTarget,
) -> Result<CommunityMoments> {
    let span = g.time_span();
    let labels = g.num_labels();
    let theta = theta_slot(g);
    let sigma_xx = estimate_label_covariances(x, g, idx)?;
    let n_yt = mean_degree_with_time_fallback(g, idx);
    let sigma_mm = predict_message_covariance(conn, &sigma_xx, &n_yt, scheme, g)?;
    let sigma_mm_eff = predicted_test_target(&sigma_mm, idx, theta, span, labels, target);

    let mu_m: Vec<Option<Vec<f64>>> = (0..labels * span)
        .map(|i| {
            let nodes = idx.community(i / span, i % span);
            if nodes.is_empty() {
                None
            } else {
                Some(row_mean(messages, nodes))
            }
        })
        .collect();
    let mu_m_label: Vec<Option<Vec<f64>>> = (0..labels)
        .map(|y| {
            let mut nodes = Vec::new();
            for ti in 0..theta {
                nodes.extend_from_slice(idx.community(y, ti));
            }
            if nodes.is_empty() {
                None
            } else {
                Some(row_mean(messages, &nodes))
            }
        })
        .collect();
    let mu_m_time: Vec<Option<Vec<f64>>> = (0..span)
        .map(|ti| {
            let nodes = idx.at_time(ti);
            if nodes.is_empty() {
                None
            } else {
                Some(row_mean(messages, nodes))
            }
        })
        .collect();

    Ok(CommunityMoments {
        span,
        theta_index: theta,
        mu_m,
        mu_m_label,
        mu_m_time,
        sigma_xx,
        sigma_mm,
        sigma_mm_eff,
        n_yt,
    })
}

/// Per-community recoloring maps plus the exact covariances they were built
/// from (eigenvalue-floored reconstructions), for post-condition checks and
/// for differentiating through the transform as a fixed linear map.
#[derive(Debug, Clone)]
pub struct PnyDetail {
    pub span: usize,
    /// Affine map per train (y, t) community.
    pub a: Vec<Option<Mat>>,
    /// Floored reconstruction of the per-community covariance.
    pub sigma_used: Vec<Option<Mat>>,
    /// Floored reconstruction of the per-label target covariance.
    pub sigma_eff_used: Vec<Option<Mat>>,
}

fn floored_eigh(m: &Mat) -> Result<(Mat, Vec<f64>)> {
    let (u, lambda) = jacobi_eigh(m, 1e-10)?;
    let floored = lambda.into_iter().map(|l| l.max(EIG_FLOOR)).collect();
    Ok((u, floored))
}

/// `U_e diag(sqrt(lam_e)) diag(1/sqrt(lam_t)) U_tT`
fn recolor_map(u_t: &Mat, lam_t: &[f64], u_e: &Mat, lam_e: &[f64]) -> Result<Mat> {
    let f = u_t.rows();
    let mut left = u_e.clone();
    for i in 0..f {
        for j in 0..f {
            left.set(i, j, left.get(i, j) * lam_e[j].sqrt());
        }
    }
    let mut right = u_t.transpose();
    for i in 0..f {
        let s = 1.0 / lam_t[i].sqrt();
        for v in right.row_mut(i) {
            *v *= s;
        }
    }
    left.matmul(&right)
}

/// Applies the per-community recoloring to train-side messages; test-side
/// rows pass through untouched.
pub fn pny_transform(
    messages: &Mat,
    moments: &CommunityMoments,
    idx: &CommunityIndex,
) -> Result<(Mat, PnyDetail)> {
    let span = moments.span;
    let labels = idx.num_labels();
    let f = messages.cols();
    let mut out = messages.clone();
    let mut detail = PnyDetail {
        span,
        a: vec![None; labels * span],
        sigma_used: vec![None; labels * span],
        sigma_eff_used: vec![None; labels],
    };

    let mut eff: Vec<Option<(Mat, Vec<f64>)>> = vec![None; labels];
    for y in 0..labels {
        if let Some(m) = &moments.sigma_mm_eff[y] {
            let (u, lam) = floored_eigh(m)?;
            detail.sigma_eff_used[y] = Some(reconstruct(&u, &lam));
            eff[y] = Some((u, lam));
        }
    }

    for y in 0..labels {
        for ti in 0..moments.theta_index {
            let nodes = idx.community(y, ti);
            if nodes.is_empty() {
                continue;
            }
            let sigma = moments.sigma_mm[y * span + ti].as_ref().ok_or_else(|| {
                Error::Estimate(format!("missing predicted covariance for community ({y},{ti})"))
            })?;
            let (u_e, lam_e) = eff[y].as_ref().ok_or_else(|| {
                Error::Estimate(format!("missing test-side covariance target for label {y}"))
            })?;
            let mu = moments.mu_m_label[y].as_ref().ok_or_else(|| {
                Error::Estimate(format!("missing train message mean for label {y}"))
            })?;
            let (u_t, lam_t) = floored_eigh(sigma)?;
            let a = recolor_map(&u_t, &lam_t, u_e, lam_e)?;
            let mut centered = vec![0.0_f64; f];
            for &v in nodes {
                let v = v as usize;
                for ((c, &m), &mu_d) in centered.iter_mut().zip(messages.row(v)).zip(mu) {
                    *c = m - mu_d;
                }
                for (d, r) in out.row_mut(v).iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (k, &c) in centered.iter().enumerate() {
                        acc += a.get(d, k) * c;
                    }
                    *r = acc + mu[d];
                }
            }
            detail.sigma_used[y * span + ti] = Some(reconstruct(&u_t, &lam_t));
            detail.a[y * span + ti] = Some(a);
        }
    }
    Ok((out, detail))
}

/// Everything connectivity-dependent that the recoloring needs, chained:
/// label covariances of `x`, predicted message covariances, the transform.
pub fn pny_pipeline(
    messages: &Mat,
    x: &Mat,
    g: &TemporalGraph,
    idx: &CommunityIndex,
    conn: &ConnectivityEstimate,
    scheme: Scheme,
    target: TestMomentTarget,
) -> Result<(Mat, PnyDetail)> {
    let moments = community_moments(messages, x, g, idx, conn, scheme, target)?;
    pny_transform(messages, &moments, idx)
}

/// Scalar statistics behind the per-time rescaling.
#[derive(Debug, Clone, Serialize)]
pub struct JjStats {
    /// Train timestamps, parallel to the per-time vectors below.
    pub times: Vec<i64>,
    /// Between-label variance of community means per train time.
    pub nu_sq: Vec<f64>,
    /// Pooled within-label variance per train time.
    pub sigma_within_sq: Vec<f64>,
    /// Total variance of the test-side pool.
    pub sigma_total_eff_sq: f64,
    /// Rescaling factor per train time, clamped to `[1e-3, 1e3]`.
    pub alpha_hat: Vec<f64>,
}

impl JjStats {
    pub fn alpha_at(&self, t: i64) -> Option<f64> {
        self.times.iter().position(|&x| x == t).map(|i| self.alpha_hat[i])
    }
}

/// Per-time scalar variance alignment:
/// `M' = mu(y,t) + alpha_t (M - mu(y,t))` on train nodes, with
/// `alpha_t = sqrt((sigma_total(test) - nu_t^2) / sigma_within(t)^2)`.
/// Test-side rows are returned bit-identical.
pub fn jjnorm_transform(
    messages: &Mat,
    g: &TemporalGraph,
    idx: &CommunityIndex,
    target: TestMomentTarget,
) -> Result<(Mat, JjStats)> {
    let span = g.time_span();
    let labels = g.num_labels();
    let theta = theta_slot(g);

    let test_nodes: Vec<u32> = match target {
        TestMomentTarget::TestPool => {
            (theta..span).flat_map(|ti| idx.at_time(ti).iter().copied()).collect()
        }
        TestMomentTarget::TmaxOnly => idx.at_time(span - 1).to_vec(),
    };
    if test_nodes.len() <= 1 {
        return Err(Error::Estimate(format!(
            "test-side pool has {} nodes; need at least 2",
            test_nodes.len()
        )));
    }
    let mu_test = row_mean(messages, &test_nodes);
    let mut sigma_total_eff_sq = 0.0_f64;
    for &v in &test_nodes {
        sigma_total_eff_sq += sq_dist(messages.row(v as usize), &mu_test);
    }
    sigma_total_eff_sq /= (test_nodes.len() - 1) as f64;

    let mut out = messages.clone();
    let mut stats = JjStats {
        times: Vec::new(),
        nu_sq: Vec::new(),
        sigma_within_sq: Vec::new(),
        sigma_total_eff_sq,
        alpha_hat: Vec::new(),
    };

    for ti in 0..theta {
        let pool = idx.at_time(ti);
        if pool.is_empty() {
            continue;
        }
        if pool.len() <= 1 {
            return Err(Error::Estimate(format!(
                "time {} has a single node; variance undefined",
                g.t_min() + ti as i64
            )));
        }
        let mu_t = row_mean(messages, pool);
        let denom = (pool.len() - 1) as f64;
        let mut nu_sq = 0.0_f64;
        let mut within = 0.0_f64;
        let mut community_means: Vec<Option<Vec<f64>>> = vec![None; labels];
        for (y, slot) in community_means.iter_mut().enumerate() {
            let nodes = idx.community(y, ti);
            if nodes.is_empty() {
                continue;
            }
            let mu_yt = row_mean(messages, nodes);
            nu_sq += nodes.len() as f64 * sq_dist(&mu_yt, &mu_t);
            for &v in nodes {
                within += sq_dist(messages.row(v as usize), &mu_yt);
            }
            *slot = Some(mu_yt);
        }
        nu_sq /= denom;
        within /= denom;

        let num = (sigma_total_eff_sq - nu_sq).max(ALPHA_NUM_FLOOR);
        let alpha = (num / within).sqrt().clamp(ALPHA_CLAMP.0, ALPHA_CLAMP.1);

        for (y, mu_yt) in community_means.iter().enumerate() {
            let Some(mu_yt) = mu_yt else { continue };
            for &v in idx.community(y, ti) {
                for (d, r) in out.row_mut(v as usize).iter_mut().enumerate() {
                    *r = mu_yt[d] + alpha * (messages.get(v as usize, d) - mu_yt[d]);
                }
            }
        }
        stats.times.push(g.t_min() + ti as i64);
        stats.nu_sq.push(nu_sq);
        stats.sigma_within_sq.push(within);
        stats.alpha_hat.push(alpha);
    }
    Ok((out, stats))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectivity::estimate_connectivity;
    use crate::numerics::SeededRng;
    use crate::propagation::{propagate, rewrite};
    use crate::tsbm::{generate, GammaMode, TsbmConfig};

    fn toy_tsbm(seed: u64) -> (TemporalGraph, CommunityIndex) {
        let cfg = TsbmConfig {
            n: 600,
            f: 3,
            num_times: 5,
            num_labels: 4,
            test_boundary: 4,
            gamma_mode: GammaMode::Fixed(0.55),
            feature_noise_cap: 2.0,
            ..TsbmConfig::default()
        };
        let (g, _) = generate(&cfg, &mut SeededRng::new(seed)).unwrap();
        let idx = CommunityIndex::build(&g, true);
        (g, idx)
    }

    #[test]
    fn label_covariance_constant_features_is_zero() {
        let g = TemporalGraph::build(
            vec![0, 0, 1, 1],
            vec![0, 0, 0, 0],
            Mat::from_rows(&vec![vec![2.0, -1.0]; 4]),
            vec![(0, 1), (1, 2), (2, 3)],
            2,
        )
        .unwrap();
        let idx = CommunityIndex::build(&g, true);
        let cov = estimate_label_covariances(g.features(), &g, &idx).unwrap();
        assert_eq!(cov[0].max_abs(), 0.0);
    }

    #[test]
    fn label_covariance_needs_two_nodes() {
        // Label 1 has a single train node.
        let g = TemporalGraph::build(
            vec![0, 0, 0, 1],
            vec![0, 0, 1, 1],
            Mat::zeros(4, 1),
            vec![(0, 1), (1, 2), (2, 3)],
            1,
        )
        .unwrap();
        let idx = CommunityIndex::build(&g, true);
        let err = estimate_label_covariances(g.features(), &g, &idx).unwrap_err();
        assert!(err.to_string().contains("label 1"), "{err}");
    }

    #[test]
    fn predicted_covariance_single_community_collapses() {
        // One label, one time: the only offset is 0 (single-sided), so the
        // formula collapses to S_XX / |N|.
        let n = 6;
        let edges: Vec<(u32, u32)> = (0..n as u32)
            .flat_map(|u| ((u + 1)..n as u32).map(move |v| (u, v)))
            .collect();
        let mut rng = SeededRng::new(8);
        let g = TemporalGraph::build(
            vec![0; n],
            vec![0; n],
            Mat::from_fn(n, 2, |_, _| rng.normal()),
            edges,
            1,
        )
        .unwrap();
        let idx = CommunityIndex::build(&g, true);
        let conn = estimate_connectivity(&g).unwrap();
        let sigma_xx = estimate_label_covariances(g.features(), &g, &idx).unwrap();
        let n_yt = mean_degree_with_time_fallback(&g, &idx);
        let pred =
            predict_message_covariance(&conn, &sigma_xx, &n_yt, Scheme::pmp(), &g).unwrap();
        let got = pred[0].as_ref().unwrap();
        let want = sigma_xx[0].scale(1.0 / (n - 1) as f64);
        assert!(got.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn predicted_covariance_invariant_to_tensor_rescaling() {
        let (g, idx) = toy_tsbm(1);
        let mut conn = estimate_connectivity(&g).unwrap();
        let sigma_xx = estimate_label_covariances(g.features(), &g, &idx).unwrap();
        let n_yt = mean_degree_with_time_fallback(&g, &idx);
        let base =
            predict_message_covariance(&conn, &sigma_xx, &n_yt, Scheme::pmp(), &g).unwrap();
        for y in 0..g.num_labels() {
            for ti in 0..g.time_span() {
                let doubled: Vec<f64> = conn.p_hat.row(y, ti).iter().map(|&v| v * 2.0).collect();
                conn.p_hat.row_mut(y, ti).copy_from_slice(&doubled);
            }
        }
        let doubled =
            predict_message_covariance(&conn, &sigma_xx, &n_yt, Scheme::pmp(), &g).unwrap();
        for (a, b) in base.iter().zip(&doubled) {
            match (a, b) {
                (Some(a), Some(b)) => assert!(a.max_abs_diff(b) < 1e-12),
                (None, None) => {}
                _ => panic!("presence mismatch"),
            }
        }
    }

    #[test]
    fn pny_identity_when_target_equals_source() {
        // Force every community covariance equal to its target: A = I and
        // the messages are untouched.
        let (g, idx) = toy_tsbm(2);
        let adj = rewrite::<f64>(&g, Scheme::pmp());
        let messages = propagate(g.features(), &adj);
        let conn = estimate_connectivity(&g).unwrap();
        let mut moments = community_moments(
            &messages,
            g.features(),
            &g,
            &idx,
            &conn,
            Scheme::pmp(),
            TestMomentTarget::TestPool,
        )
        .unwrap();
        let span = g.time_span();
        for y in 0..g.num_labels() {
            let eff = moments.sigma_mm_eff[y].clone().unwrap();
            for ti in 0..span {
                if moments.sigma_mm[y * span + ti].is_some() {
                    moments.sigma_mm[y * span + ti] = Some(eff.clone());
                }
            }
        }
        let (out, detail) = pny_transform(&messages, &moments, &idx).unwrap();
        assert!(out.max_abs_diff(&messages) < 1e-9);
        for a in detail.a.iter().flatten() {
            let eye = Mat::identity(a.rows());
            assert!(a.max_abs_diff(&eye) < 1e-7);
        }
    }

    #[test]
    fn pny_exact_covariance_mapping_and_mean_preservation() {
        let (g, idx) = toy_tsbm(3);
        let adj = rewrite::<f64>(&g, Scheme::pmp());
        let messages = propagate(g.features(), &adj);
        let conn = estimate_connectivity(&g).unwrap();
        let moments = community_moments(
            &messages,
            g.features(),
            &g,
            &idx,
            &conn,
            Scheme::pmp(),
            TestMomentTarget::TestPool,
        )
        .unwrap();
        let (out, detail) = pny_transform(&messages, &moments, &idx).unwrap();
        let span = g.time_span();

        for y in 0..g.num_labels() {
            let eff = detail.sigma_eff_used[y].as_ref().unwrap();
            for ti in 0..moments.theta_index {
                let Some(a) = &detail.a[y * span + ti] else { continue };
                let sigma = detail.sigma_used[y * span + ti].as_ref().unwrap();
                let mapped = a.matmul(sigma).unwrap().matmul(&a.transpose()).unwrap();
                let rel = mapped.sub(eff).unwrap().frobenius_norm() / eff.frobenius_norm();
                assert!(rel < 1e-6, "community ({y},{ti}): relative error {rel}");
            }
        }

        // Each community mean transforms through its own affine map exactly.
        for y in 0..g.num_labels() {
            let mu = moments.mu_m_label[y].as_ref().unwrap();
            for ti in 0..moments.theta_index {
                let Some(a) = &detail.a[y * span + ti] else { continue };
                let nodes = idx.community(y, ti);
                let before = row_mean(&messages, nodes);
                let after = row_mean(&out, nodes);
                for d in 0..before.len() {
                    let want: f64 = (0..before.len())
                        .map(|k| a.get(d, k) * (before[k] - mu[k]))
                        .sum::<f64>()
                        + mu[d];
                    assert!((after[d] - want).abs() < 1e-10);
                }
            }
        }

        for &v in &g.test_nodes() {
            assert_eq!(messages.row(v as usize), out.row(v as usize));
        }
    }

    #[test]
    fn pny_label_mean_is_affine_fixed_point() {
        // Center every train community onto a shared per-label mean; the
        // pooled label mean then survives the transform exactly.
        let (g, idx) = toy_tsbm(6);
        let adj = rewrite::<f64>(&g, Scheme::pmp());
        let mut messages = propagate(g.features(), &adj);
        let span = g.time_span();
        let theta = 4;
        let mut rng = SeededRng::new(31);
        for y in 0..g.num_labels() {
            let target: Vec<f64> = (0..messages.cols()).map(|_| rng.normal()).collect();
            for ti in 0..theta {
                let nodes = idx.community(y, ti);
                if nodes.is_empty() {
                    continue;
                }
                let mu = row_mean(&messages, nodes);
                for &v in nodes {
                    for (d, r) in messages.row_mut(v as usize).iter_mut().enumerate() {
                        *r += target[d] - mu[d];
                    }
                }
            }
        }
        let conn = estimate_connectivity(&g).unwrap();
        let moments = community_moments(
            &messages,
            g.features(),
            &g,
            &idx,
            &conn,
            Scheme::pmp(),
            TestMomentTarget::TestPool,
        )
        .unwrap();
        let (out, _) = pny_transform(&messages, &moments, &idx).unwrap();
        for y in 0..g.num_labels() {
            let mut nodes = Vec::new();
            for ti in 0..theta {
                nodes.extend_from_slice(idx.community(y, ti));
            }
            let before = row_mean(&messages, &nodes);
            let after = row_mean(&out, &nodes);
            for (b, a) in before.iter().zip(&after) {
                assert!((b - a).abs() < 1e-10, "label {y} mean moved");
            }
        }
        let _ = span;
    }

    #[test]
    fn pny_scalar_case_rescales_by_std_ratio() {
        let (g, idx) = toy_tsbm(4);
        let mut rng = SeededRng::new(9);
        let messages = Mat::from_fn(g.num_nodes(), 1, |_, _| rng.normal());
        let conn = estimate_connectivity(&g).unwrap();
        let x = messages.clone();
        let moments = community_moments(
            &messages,
            &x,
            &g,
            &idx,
            &conn,
            Scheme::pmp(),
            TestMomentTarget::TestPool,
        )
        .unwrap();
        let (_, detail) = pny_transform(&messages, &moments, &idx).unwrap();
        let span = g.time_span();
        for y in 0..g.num_labels() {
            let eff = detail.sigma_eff_used[y].as_ref().unwrap().get(0, 0);
            for ti in 0..moments.theta_index {
                let Some(a) = &detail.a[y * span + ti] else { continue };
                let sig = detail.sigma_used[y * span + ti].as_ref().unwrap().get(0, 0);
                assert!((a.get(0, 0) - (eff / sig).sqrt()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn jjnorm_alpha_one_leaves_messages_unchanged() {
        // Duplicate the same message cloud at a train time and the test time:
        // total test variance equals nu^2 + within, so alpha = 1.
        let b = 8;
        let mut rng = SeededRng::new(12);
        let cloud: Vec<Vec<f64>> = (0..2 * b)
            .map(|i| vec![rng.normal() + if i < b { 3.0 } else { -3.0 }, rng.normal()])
            .collect();
        let n = 4 * b;
        let mut rows = Vec::with_capacity(n);
        rows.extend(cloud.iter().cloned());
        rows.extend(cloud.iter().cloned());
        let times: Vec<i64> = (0..n).map(|v| if v < 2 * b { 0 } else { 1 }).collect();
        let labels: Vec<usize> = (0..n).map(|v| (v / b) % 2).collect();
        let edges = vec![(0u32, 1u32)];
        let g = TemporalGraph::build(times, labels, Mat::from_rows(&rows), edges, 1).unwrap();
        let idx = CommunityIndex::build(&g, true);
        let messages = g.features().clone();
        let (out, stats) =
            jjnorm_transform(&messages, &g, &idx, TestMomentTarget::TestPool).unwrap();
        assert!((stats.alpha_hat[0] - 1.0).abs() < 1e-10, "alpha {}", stats.alpha_hat[0]);
        assert!(out.max_abs_diff(&messages) < 1e-10);
    }

    #[test]
    fn jjnorm_exact_postconditions() {
        let (g, idx) = toy_tsbm(5);
        let adj = rewrite::<f64>(&g, Scheme::pmp());
        let messages = propagate(g.features(), &adj);
        let (out, stats) =
            jjnorm_transform(&messages, &g, &idx, TestMomentTarget::TestPool).unwrap();
        let theta = 4;

        for (i, &t) in stats.times.iter().enumerate() {
            let ti = g.time_index(t);
            assert!(ti < theta);
            let alpha = stats.alpha_hat[i];
            for y in 0..g.num_labels() {
                let nodes = idx.community(y, ti);
                if nodes.is_empty() {
                    continue;
                }
                let before = row_mean(&messages, nodes);
                let after = row_mean(&out, nodes);
                for (b, a) in before.iter().zip(&after) {
                    assert!((b - a).abs() < 1e-10);
                }
            }
            let denom = (idx.at_time(ti).len() - 1) as f64;
            let mut before = 0.0;
            let mut after = 0.0;
            for y in 0..g.num_labels() {
                let nodes = idx.community(y, ti);
                if nodes.is_empty() {
                    continue;
                }
                let mu = row_mean(&messages, nodes);
                for &v in nodes {
                    before += sq_dist(messages.row(v as usize), &mu);
                    after += sq_dist(out.row(v as usize), &mu);
                }
            }
            before /= denom;
            after /= denom;
            assert!(
                (after - alpha * alpha * before).abs() <= 1e-12 * before.max(1.0),
                "variance scaling at t={t}"
            );
        }

        for &v in &g.test_nodes() {
            assert_eq!(messages.row(v as usize), out.row(v as usize));
        }

        // Variance decomposition: the post-transform total variance at each
        // train time lands on the test-pool total (ν̂² + α̂²σ̂²_w = σ̂²_total).
        for &t in &stats.times {
            let ti = g.time_index(t);
            let pool = idx.at_time(ti);
            let mu = row_mean(&out, pool);
            let total: f64 = pool
                .iter()
                .map(|&v| sq_dist(out.row(v as usize), &mu))
                .sum::<f64>()
                / (pool.len() - 1) as f64;
            let rel = (total - stats.sigma_total_eff_sq).abs() / stats.sigma_total_eff_sq;
            assert!(rel < 0.05, "post-transform total variance at t={t} off by {rel:.4}");
        }
    }

    #[test]
    fn jjnorm_rejects_singleton_time() {
        let g = TemporalGraph::build(
            vec![0, 1, 1],
            vec![0, 0, 0],
            Mat::zeros(3, 1),
            vec![(0, 1), (1, 2)],
            1,
        )
        .unwrap();
        let idx = CommunityIndex::build(&g, true);
        let err =
            jjnorm_transform(g.features(), &g, &idx, TestMomentTarget::TestPool).unwrap_err();
        assert!(err.to_string().contains("single node"), "{err}");
    }
}
