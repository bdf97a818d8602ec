//! Quantitative checks of the invariance claims: per-community moment gaps,
//! empirical per-dimension Wasserstein-1 distances, and comparisons against
//! the generator's analytic oracles.
//!
//! Diagnostics may read test labels (they measure, never train), which is why
//! they take an oracle-mode community index.

use serde::Serialize;

use crate::graph::{CommunityIndex, TemporalGraph};
use crate::numerics::{l2_distance, row_mean, DenseMatrix};
use crate::propagation::{propagate, rewrite, Scheme};
use crate::scalar::Scalar;
use crate::tsbm::{oracle_message_mean, oracle_relative_connectivity, TsbmParams};
use crate::{Mat, Result};

#[derive(Debug, Clone, Serialize)]
pub struct LabelGap {
    pub label: usize,
    /// max over train times of the L2 distance between the community mean
    /// and the test-pool mean of the same label.
    pub max_gap: f64,
    pub mean_gap: f64,
    /// max over train times of |scale(y,t)/scale(y,test) - 1| where scale is
    /// the total variance of the community's messages.
    pub variance_scale_spread: f64,
    /// mean per-dimension W1 between each train community and the test pool.
    pub mean_w1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub scheme: String,
    pub per_label: Vec<LabelGap>,
    /// Mean pairwise distance between per-label means (the gap normalizer).
    pub normalizer: f64,
    pub max_gap_normalized: f64,
    pub mean_gap_normalized: f64,
    pub mean_w1: f64,
    pub skipped_communities: usize,
}

/// Spread over train times of per-label message means, against the test-pool
/// reference, plus variance-scale and W1 summaries. Labels with no test-side
/// or no train-side nodes are skipped with a note in the counter.
pub fn invariance_gap(
    messages: &Mat,
    g: &TemporalGraph,
    idx: &CommunityIndex,
    scheme_name: &str,
) -> InvarianceReport {
    let span = g.time_span();
    let theta = ((g.test_boundary() - g.t_min()).clamp(0, span as i64)) as usize;
    let labels = g.num_labels();
    let mut per_label = Vec::new();
    let mut skipped = 0usize;

    // Normalizer: mean pairwise distance between whole-label means.
    let label_means: Vec<Option<Vec<f64>>> = (0..labels)
        .map(|y| {
            let mut nodes = Vec::new();
            for ti in 0..span {
                nodes.extend_from_slice(idx.community(y, ti));
            }
            if nodes.is_empty() {
                None
            } else {
                Some(row_mean(messages, &nodes))
            }
        })
        .collect();
    let mut normalizer = 0.0_f64;
    let mut pairs = 0usize;
    for a in 0..labels {
        for b in (a + 1)..labels {
            if let (Some(ma), Some(mb)) = (&label_means[a], &label_means[b]) {
                normalizer += l2_distance(ma, mb);
                pairs += 1;
            }
        }
    }
    if pairs > 0 {
        normalizer /= pairs as f64;
    }

    for y in 0..labels {
        let test_nodes: Vec<u32> =
            (theta..span).flat_map(|ti| idx.community(y, ti).iter().copied()).collect();
        if test_nodes.is_empty() {
            skipped += 1;
            continue;
        }
        let mu_te = row_mean(messages, &test_nodes);
        let scale_te = total_variance(messages, &test_nodes, &mu_te);
        let mut max_gap = 0.0_f64;
        let mut sum_gap = 0.0_f64;
        let mut spread = 0.0_f64;
        let mut w1_sum = 0.0_f64;
        let mut count = 0usize;
        for ti in 0..theta {
            let nodes = idx.community(y, ti);
            if nodes.is_empty() {
                skipped += 1;
                continue;
            }
            let mu = row_mean(messages, nodes);
            let gap = l2_distance(&mu, &mu_te);
            max_gap = max_gap.max(gap);
            sum_gap += gap;
            if nodes.len() >= 2 && test_nodes.len() >= 2 && scale_te > 0.0 {
                let scale = total_variance(messages, nodes, &mu);
                spread = spread.max((scale / scale_te - 1.0).abs());
                w1_sum += w1_between(messages, nodes, &test_nodes);
                count += 1;
            }
        }
        let denom = count.max(1) as f64;
        per_label.push(LabelGap {
            label: y,
            max_gap,
            mean_gap: if theta > 0 { sum_gap / theta as f64 } else { 0.0 },
            variance_scale_spread: spread,
            mean_w1: w1_sum / denom,
        });
    }

    let max_gap = per_label.iter().map(|l| l.max_gap).fold(0.0, f64::max);
    let mean_gap = if per_label.is_empty() {
        0.0
    } else {
        per_label.iter().map(|l| l.max_gap).sum::<f64>() / per_label.len() as f64
    };
    let mean_w1 = if per_label.is_empty() {
        0.0
    } else {
        per_label.iter().map(|l| l.mean_w1).sum::<f64>() / per_label.len() as f64
    };
    let norm = if normalizer > 0.0 { normalizer } else { 1.0 };
    InvarianceReport {
        scheme: scheme_name.to_string(),
        per_label,
        normalizer,
        max_gap_normalized: max_gap / norm,
        mean_gap_normalized: mean_gap / norm,
        mean_w1,
        skipped_communities: skipped,
    }
}

fn total_variance(messages: &Mat, nodes: &[u32], mu: &[f64]) -> f64 {
    let mut acc = 0.0;
    for &v in nodes {
        let row = messages.row(v as usize);
        acc += row.iter().zip(mu).map(|(&a, &b)| (a - b) * (a - b)).sum::<f64>();
    }
    acc / (nodes.len() - 1) as f64
}

fn w1_between(messages: &Mat, a: &[u32], b: &[u32]) -> f64 {
    let gather = |nodes: &[u32]| {
        let mut m = Mat::zeros(nodes.len(), messages.cols());
        for (i, &v) in nodes.iter().enumerate() {
            m.row_mut(i).copy_from_slice(messages.row(v as usize));
        }
        m
    };
    empirical_w1_per_dim(&gather(a), &gather(b))
}

/// Mean over dimensions of the 1-D Wasserstein-1 distance between the rows of
/// `a` and the rows of `b`, evaluated on `q = min(n_a, n_b)` common quantiles
/// of the sorted samples with linear interpolation.
pub fn empirical_w1_per_dim<S: Scalar>(a: &DenseMatrix<S>, b: &DenseMatrix<S>) -> f64 {
    assert!(a.rows() >= 2 && b.rows() >= 2, "need at least two samples per side");
    assert_eq!(a.cols(), b.cols(), "dimension mismatch");
    let q = a.rows().min(b.rows());
    let dims = a.cols();
    let mut total = 0.0_f64;
    let mut col_a = vec![0.0_f64; a.rows()];
    let mut col_b = vec![0.0_f64; b.rows()];
    for d in 0..dims {
        for (i, v) in col_a.iter_mut().enumerate() {
            *v = a.get(i, d).to_f64().unwrap();
        }
        for (i, v) in col_b.iter_mut().enumerate() {
            *v = b.get(i, d).to_f64().unwrap();
        }
        col_a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        col_b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let mut acc = 0.0_f64;
        for i in 0..q {
            let p = (i as f64 + 0.5) / q as f64;
            acc += (quantile(&col_a, p) - quantile(&col_b, p)).abs();
        }
        total += acc / q as f64;
    }
    total / dims as f64
}

/// Linear-interpolation quantile of a sorted sample.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleErrorEntry {
    pub label: usize,
    pub time: i64,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleErrorReport {
    pub scheme: String,
    pub entries: Vec<OracleErrorEntry>,
    pub max_error: f64,
    pub mean_error: f64,
}

/// L2 error between empirical per-community message means (one propagation
/// hop under `scheme`) and the analytic first-moment oracle built from the
/// generating parameters. Synthetic graphs only.
pub fn compare_to_oracle(
    g: &TemporalGraph,
    params: &TsbmParams,
    scheme: Scheme,
) -> Result<OracleErrorReport> {
    let idx = CommunityIndex::build(g, false);
    let span = g.time_span();
    let sizes: Vec<usize> =
        idx.communities().map(|(_, _, nodes)| nodes.len()).collect();
    let oracle_p = oracle_relative_connectivity(params, &sizes, span, g.t_min());
    let oracle = oracle_message_mean(params, &oracle_p, scheme)?;
    let adj = rewrite::<f64>(g, scheme);
    let messages = propagate(g.features(), &adj);

    let mut entries = Vec::new();
    for (y, ti, nodes) in idx.communities() {
        if nodes.is_empty() {
            continue;
        }
        let mu = row_mean(&messages, nodes);
        let err = l2_distance(&mu, &oracle[y * span + ti]);
        entries.push(OracleErrorEntry { label: y, time: g.t_min() + ti as i64, error: err });
    }
    let max_error = entries.iter().map(|e| e.error).fold(0.0, f64::max);
    let mean_error = if entries.is_empty() {
        0.0
    } else {
        entries.iter().map(|e| e.error).sum::<f64>() / entries.len() as f64
    };
    Ok(OracleErrorReport { scheme: scheme.name().into(), entries, max_error, mean_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SeededRng;
    use crate::tsbm::{generate, GammaMode, TsbmConfig};

    #[test]
    fn w1_identical_samples_is_zero() {
        let mut rng = SeededRng::new(1);
        let a = Mat::from_fn(40, 3, |_, _| rng.normal());
        assert_eq!(empirical_w1_per_dim(&a, &a), 0.0);
    }

    #[test]
    fn w1_point_masses() {
        let a = Mat::from_rows(&[vec![0.0], vec![0.0]]);
        let b = Mat::from_rows(&[vec![1.0], vec![1.0]]);
        assert!((empirical_w1_per_dim(&a, &b) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn w1_shifted_gaussians_recover_shift() {
        let mut rng = SeededRng::new(2);
        let n = 4000;
        let d = 1.7;
        let a = Mat::from_fn(n, 2, |_, _| rng.normal());
        let b = Mat::from_fn(n, 2, |_, _| rng.normal() + d);
        let w1 = empirical_w1_per_dim(&a, &b);
        assert!((w1 - d).abs() / d < 0.05, "w1 {w1} vs shift {d}");
    }

    #[test]
    fn w1_metric_properties() {
        let mut rng = SeededRng::new(3);
        for _ in 0..20 {
            let n = 10 + rng.uniform_usize(20);
            let a = Mat::from_fn(n, 2, |_, _| rng.uniform(-3.0, 3.0));
            let b = Mat::from_fn(n, 2, |_, _| rng.uniform(-3.0, 3.0));
            let c = Mat::from_fn(n, 2, |_, _| rng.uniform(-3.0, 3.0));
            let ab = empirical_w1_per_dim(&a, &b);
            let ba = empirical_w1_per_dim(&b, &a);
            assert_eq!(ab, ba, "symmetry must be exact");
            let ac = empirical_w1_per_dim(&a, &c);
            let cb = empirical_w1_per_dim(&c, &b);
            assert!(ab <= ac + cb + 1e-12, "triangle inequality: {ab} > {ac} + {cb}");
        }
    }

    #[test]
    fn gap_zero_for_constructed_invariant_input() {
        // Identical per-label message clouds replicated at every timestamp.
        let per = 6;
        let labels_n = 2;
        let times_n = 4;
        let n = per * labels_n * times_n;
        let mut rng = SeededRng::new(4);
        let cloud: Vec<Vec<f64>> = (0..per * labels_n)
            .map(|i| vec![if i < per { 2.0 } else { -2.0 } + 0.3 * rng.normal(), rng.normal()])
            .collect();
        let mut rows = Vec::new();
        let mut times = Vec::new();
        let mut labels = Vec::new();
        for t in 0..times_n {
            for (i, row) in cloud.iter().enumerate() {
                rows.push(row.clone());
                times.push(t as i64);
                labels.push(if i < per { 0 } else { 1 });
            }
        }
        let g =
            TemporalGraph::build(times, labels, Mat::from_rows(&rows), vec![(0, 1)], 3).unwrap();
        let idx = CommunityIndex::build(&g, false);
        let report = invariance_gap(g.features(), &g, &idx, "avg");
        assert!(report.max_gap_normalized < 1e-12, "{}", report.max_gap_normalized);
        let _ = n;
    }

    #[test]
    fn gap_zero_on_single_timestamp_graph() {
        let g = TemporalGraph::build(
            vec![0, 0, 0, 0],
            vec![0, 1, 0, 1],
            Mat::from_fn(4, 2, |i, j| (i + j) as f64),
            vec![(0, 1), (2, 3)],
            0,
        )
        .unwrap();
        let idx = CommunityIndex::build(&g, false);
        let report = invariance_gap(g.features(), &g, &idx, "avg");
        assert_eq!(report.max_gap_normalized, 0.0);
    }

    #[test]
    fn one_label_oracle_error_is_sampling_noise() {
        let cfg = TsbmConfig {
            n: 1000,
            f: 3,
            num_times: 5,
            num_labels: 1,
            gamma_mode: GammaMode::Fixed(0.5),
            feature_noise_cap: 1.0,
            test_boundary: 4,
            ..TsbmConfig::default()
        };
        let (g, params) = generate(&cfg, &mut SeededRng::new(5)).unwrap();
        let report = compare_to_oracle(&g, &params, Scheme::Avg).unwrap();
        // Feature noise k <= 1, hundreds of neighbors per community: the
        // community mean error stays well under 0.2.
        assert!(report.max_error < 0.2, "max error {}", report.max_error);
    }

    #[test]
    fn aligned_empirical_means_cluster_around_single_oracle_value() {
        let cfg = TsbmConfig {
            n: 2000,
            f: 3,
            num_times: 5,
            num_labels: 4,
            gamma_mode: GammaMode::Fixed(0.55),
            feature_noise_cap: 2.0,
            test_boundary: 4,
            ..TsbmConfig::default()
        };
        let (g, params) = generate(&cfg, &mut SeededRng::new(6)).unwrap();
        let pmp = compare_to_oracle(&g, &params, Scheme::pmp()).unwrap();
        assert!(pmp.mean_error < 0.5, "pmp mean error {}", pmp.mean_error);
    }
}
