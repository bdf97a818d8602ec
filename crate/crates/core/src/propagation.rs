//! Scheme-specific graph rewrites and the shared weighted-average
//! propagation kernel.
//!
//! Every scheme is pure preprocessing: it turns the undirected graph into a
//! directed [`WeightedAdjacency`], and the models never branch on the scheme
//! at train time. With a target node at time `t` and horizon `t_max`, a time
//! offset `Δ = |t̃ - t|` can be realized on both sides of `t` only when
//! `0 < Δ <= t_max - t`; offsets beyond the horizon (and `Δ = 0`) occur on a
//! single side. `pmp` doubles the weight of single-sided offsets to restore a
//! symmetric effective connectivity, `mmp` keeps only past-or-present
//! neighbors, and `genpmp` reweights edges by the ratio of time-distance
//! profiles for graphs with unbalanced timestamp populations.

use rayon::prelude::*;

use crate::graph::{TemporalGraph, WeightedAdjacency};
use crate::numerics::DenseMatrix;
use crate::scalar::Scalar;

/// Horizon rule deciding when a time offset counts as single-sided in the
/// `pmp` rewrite.
///
/// `UpperOnly` follows the defining formula (an unbounded past is assumed:
/// only the future horizon `t_max - t` limits two-sided offsets).
/// `BothBounds` also treats offsets beyond the past horizon `t - t_min` as
/// single-sided, which matches datasets whose history genuinely starts at
/// `t_min`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PmpBoundary {
    #[default]
    UpperOnly,
    BothBounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Avg,
    Mmp,
    Pmp(PmpBoundary),
    GenPmp,
}

impl Scheme {
    pub fn pmp() -> Self {
        Scheme::Pmp(PmpBoundary::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Avg => "avg",
            Scheme::Mmp => "mmp",
            Scheme::Pmp(_) => "pmp",
            Scheme::GenPmp => "genpmp",
        }
    }
}

/// True when offset `delta` from a node at time `t` is single-sided.
pub fn is_single_sided(delta: i64, t: i64, t_min: i64, t_max: i64, mode: PmpBoundary) -> bool {
    debug_assert!(delta >= 0);
    match mode {
        PmpBoundary::UpperOnly => delta == 0 || delta > t_max - t,
        PmpBoundary::BothBounds => delta == 0 || delta > (t_max - t).min(t - t_min),
    }
}

/// Unit-weight adjacency (the plain averaging baseline).
pub fn avg_rewrite<S: Scalar>(g: &TemporalGraph) -> WeightedAdjacency<S> {
    WeightedAdjacency::from_undirected_unit(g.num_nodes(), g.edges())
}

/// Doubles in-edges whose time offset is single-sided for the target.
pub fn pmp_rewrite<S: Scalar>(g: &TemporalGraph, mode: PmpBoundary) -> WeightedAdjacency<S> {
    let (t_min, t_max) = (g.t_min(), g.t_max());
    let two = S::from_f64_lossy(2.0);
    let mut lists: Vec<Vec<(u32, S)>> = vec![Vec::new(); g.num_nodes()];
    let mut push = |target: u32, source: u32| {
        let t = g.time(target as usize);
        let delta = (g.time(source as usize) - t).abs();
        let w = if is_single_sided(delta, t, t_min, t_max, mode) { two } else { S::one() };
        lists[target as usize].push((source, w));
    };
    for &(u, v) in g.edges() {
        push(v, u);
        push(u, v);
    }
    WeightedAdjacency::from_in_edges(g.num_nodes(), lists)
}

/// Keeps only in-edges from sources with time less or equal to the target.
pub fn mmp_rewrite<S: Scalar>(g: &TemporalGraph) -> WeightedAdjacency<S> {
    let mut lists: Vec<Vec<(u32, S)>> = vec![Vec::new(); g.num_nodes()];
    for &(u, v) in g.edges() {
        if g.time(u as usize) <= g.time(v as usize) {
            lists[v as usize].push((u, S::one()));
        }
        if g.time(v as usize) <= g.time(u as usize) {
            lists[u as usize].push((v, S::one()));
        }
    }
    WeightedAdjacency::from_in_edges(g.num_nodes(), lists)
}

/// Per-timestamp distribution over time distances, weighted by the node
/// population at each timestamp.
#[derive(Debug, Clone)]
pub struct TimeProfile<S> {
    t_min: i64,
    /// `probs[s][tau]`: mass of distance `tau` as seen from timestamp slot `s`.
    probs: Vec<Vec<S>>,
}

impl<S: Scalar> TimeProfile<S> {
    pub fn prob(&self, t: i64, tau: i64) -> S {
        debug_assert!(tau >= 0);
        let s = (t - self.t_min) as usize;
        self.probs[s].get(tau as usize).copied().unwrap_or(S::zero())
    }

    pub fn probs_at(&self, t: i64) -> &[S] {
        &self.probs[(t - self.t_min) as usize]
    }
}

/// `P_s(tau)` is proportional to the number of nodes living at timestamps
/// whose distance from `s` is exactly `tau`, normalized over `tau`.
pub fn time_profile<S: Scalar>(g: &TemporalGraph) -> TimeProfile<S> {
    let span = g.time_span();
    let mut counts = vec![0usize; span];
    for &t in g.times() {
        counts[(t - g.t_min()) as usize] += 1;
    }
    let probs = (0..span)
        .map(|s| {
            let mut row = vec![S::zero(); span];
            for (slot, &c) in counts.iter().enumerate() {
                let tau = (slot as i64 - s as i64).unsigned_abs() as usize;
                row[tau] += S::from_usize(c).unwrap();
            }
            let total: S = row.iter().copied().sum();
            if total > S::zero() {
                for v in &mut row {
                    *v /= total;
                }
            }
            row
        })
        .collect();
    TimeProfile { t_min: g.t_min(), probs }
}

/// Reweights each in-edge from a source at `t̃` to a target at `t` by
/// `P_{t_max}(Δ) / P_{t̃}(Δ)` with `Δ = |t̃ - t|` (the denominator is indexed
/// by the source's time, as defined). Edges whose ratio is zero or has a zero
/// denominator are dropped; the count of dropped edges is returned alongside.
pub fn genpmp_rewrite<S: Scalar>(
    g: &TemporalGraph,
    profile: &TimeProfile<S>,
) -> (WeightedAdjacency<S>, usize) {
    let t_max = g.t_max();
    let mut dropped = 0usize;
    let mut lists: Vec<Vec<(u32, S)>> = vec![Vec::new(); g.num_nodes()];
    let mut push = |target: u32, source: u32, dropped: &mut usize| {
        let delta = (g.time(source as usize) - g.time(target as usize)).abs();
        let num = profile.prob(t_max, delta);
        let den = profile.prob(g.time(source as usize), delta);
        if den > S::zero() && num > S::zero() {
            lists[target as usize].push((source, num / den));
        } else {
            *dropped += 1;
        }
    };
    for &(u, v) in g.edges() {
        push(v, u, &mut dropped);
        push(u, v, &mut dropped);
    }
    (WeightedAdjacency::from_in_edges(g.num_nodes(), lists), dropped)
}

/// Rewrite dispatcher. GenPMP silently drops zero-ratio edges here; call
/// [`genpmp_rewrite`] directly to observe the count.
pub fn rewrite<S: Scalar>(g: &TemporalGraph, scheme: Scheme) -> WeightedAdjacency<S> {
    match scheme {
        Scheme::Avg => avg_rewrite(g),
        Scheme::Mmp => mmp_rewrite(g),
        Scheme::Pmp(mode) => pmp_rewrite(g, mode),
        Scheme::GenPmp => genpmp_rewrite(g, &time_profile(g)).0,
    }
}

const PAR_ROW_THRESHOLD: usize = 8192;

fn propagate_impl<S: Scalar>(
    x: &DenseMatrix<S>,
    adj: &WeightedAdjacency<S>,
    normalize: bool,
) -> DenseMatrix<S> {
    assert_eq!(x.rows(), adj.num_nodes(), "feature rows must match node count");
    let f = x.cols();
    let mut out = DenseMatrix::zeros(x.rows(), f);

    let fill_row = |v: usize, row: &mut [S]| {
        let edges = adj.in_edges(v);
        if edges.is_empty() {
            row.copy_from_slice(x.row(v));
            return;
        }
        let mut total = S::zero();
        for &(w, weight) in edges {
            total += weight;
            for (acc, &xv) in row.iter_mut().zip(x.row(w as usize)) {
                *acc += weight * xv;
            }
        }
        if normalize {
            let inv = S::one() / total;
            for acc in row.iter_mut() {
                *acc *= inv;
            }
        }
    };

    if x.rows() >= PAR_ROW_THRESHOLD {
        out.data_mut()
            .par_chunks_mut(f)
            .enumerate()
            .for_each(|(v, row)| fill_row(v, row));
    } else {
        for v in 0..x.rows() {
            let row = &mut out.data_mut()[v * f..(v + 1) * f];
            fill_row(v, row);
        }
    }
    out
}

/// Weighted-average aggregation: `M_v = Σ_w weight(w,v) X_w / Σ_w weight(w,v)`.
/// Targets with no in-edges copy their own row (see
/// [`WeightedAdjacency::zero_in_degree_nodes`] for the count).
pub fn propagate<S: Scalar>(x: &DenseMatrix<S>, adj: &WeightedAdjacency<S>) -> DenseMatrix<S> {
    propagate_impl(x, adj, true)
}

/// Weighted sum without the normalizing denominator, for fidelity checks of
/// the raw genpmp definition. Zero in-degree still falls back to a self-copy.
pub fn propagate_unnormalized<S: Scalar>(
    x: &DenseMatrix<S>,
    adj: &WeightedAdjacency<S>,
) -> DenseMatrix<S> {
    propagate_impl(x, adj, false)
}

/// Adjoint of [`propagate`]: with `M = P X` (row-normalized weights), returns
/// `Pᵀ D` so that `<propagate(x), d> == <x, propagate_adjoint(d)>`. Rows with
/// no in-edges route their cotangent back to themselves, mirroring the
/// self-copy fallback.
pub fn propagate_adjoint<S: Scalar>(
    d: &DenseMatrix<S>,
    adj: &WeightedAdjacency<S>,
) -> DenseMatrix<S> {
    assert_eq!(d.rows(), adj.num_nodes());
    let f = d.cols();
    let mut out = DenseMatrix::zeros(d.rows(), f);
    for v in 0..d.rows() {
        let edges = adj.in_edges(v);
        if edges.is_empty() {
            for (o, &dv) in out.row_mut(v).iter_mut().zip(d.row(v)) {
                *o += dv;
            }
            continue;
        }
        let total: S = edges.iter().map(|&(_, w)| w).sum();
        let inv = S::one() / total;
        for &(w, weight) in edges {
            let c = weight * inv;
            let src = w as usize;
            for k in 0..f {
                let cur = out.get(src, k);
                out.set(src, k, cur + c * d.get(v, k));
            }
        }
    }
    out
}

/// K successive propagations `[M¹, M², ...]` with `M^k = propagate(M^{k-1})`.
/// The hook runs on each hop's output before it feeds the next hop (per-layer
/// transforms plug in here).
pub fn k_hop_stack<S: Scalar>(
    x: &DenseMatrix<S>,
    adj: &WeightedAdjacency<S>,
    k: usize,
    mut hook: impl FnMut(&mut DenseMatrix<S>, usize),
) -> Vec<DenseMatrix<S>> {
    assert!(k >= 1, "k_hop_stack needs at least one hop");
    let mut stack = Vec::with_capacity(k);
    let mut current = x.clone();
    for layer in 0..k {
        let mut m = propagate(&current, adj);
        hook(&mut m, layer);
        current = m.clone();
        stack.push(m);
    }
    stack
}
