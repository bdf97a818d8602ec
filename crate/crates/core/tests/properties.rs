//! Property tests for the numeric kernels and invariants that hold for all
//! inputs, not just the pinned examples.

use proptest::prelude::*;

use chronopass::diagnostics::empirical_w1_per_dim;
use chronopass::graph::{TemporalGraph, WeightedAdjacency};
use chronopass::numerics::{jacobi_eigh, reconstruct, DenseMatrix, SeededRng};
use chronopass::propagation::{propagate, propagate_adjoint, rewrite, Scheme};
use chronopass::Mat;

fn finite_f64() -> impl Strategy<Value = f64> {
    -100.0..100.0f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rng_streams_reproduce(seed in any::<u64>()) {
        let mut a = SeededRng::new(seed);
        let mut b = SeededRng::new(seed);
        for _ in 0..256 {
            prop_assert_eq!(a.next_u64(), b.next_u64());
        }
        prop_assert_eq!(a.normal().to_bits(), b.normal().to_bits());
    }

    #[test]
    fn transpose_of_product(
        rows in 1usize..6,
        inner in 1usize..6,
        cols in 1usize..6,
        seed in any::<u64>(),
    ) {
        let mut rng = SeededRng::new(seed);
        let a = Mat::from_fn(rows, inner, |_, _| rng.uniform(-2.0, 2.0));
        let b = Mat::from_fn(inner, cols, |_, _| rng.uniform(-2.0, 2.0));
        let lhs = a.matmul(&b).unwrap().transpose();
        let rhs = b.transpose().matmul(&a.transpose()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn eigh_reconstructs_and_is_orthonormal(
        n in 1usize..8,
        seed in any::<u64>(),
        scale in 0.1f64..50.0,
    ) {
        let mut rng = SeededRng::new(seed);
        let mut m = Mat::from_fn(n, n, |_, _| rng.uniform(-scale, scale));
        m.symmetrize();
        let (u, lambda) = jacobi_eigh(&m, 1e-10).unwrap();
        let tol = 1e-10 * m.frobenius_norm().max(1.0);
        prop_assert!(reconstruct(&u, &lambda).sub(&m).unwrap().frobenius_norm() <= tol);
        let gram = u.transpose().matmul(&u).unwrap();
        prop_assert!(gram.sub(&Mat::identity(n)).unwrap().frobenius_norm() <= 1e-10);
        for w in lambda.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn propagation_is_convex_and_adjoint_consistent(
        n in 2usize..20,
        seed in any::<u64>(),
    ) {
        let mut rng = SeededRng::new(seed);
        let mut lists: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for (v, list) in lists.iter_mut().enumerate() {
            for w in 0..n {
                if w != v && rng.bernoulli(0.3) {
                    list.push((w as u32, rng.uniform(0.1, 3.0)));
                }
            }
        }
        let adj = WeightedAdjacency::from_in_edges(n, lists);
        let x = Mat::from_fn(n, 2, |_, _| rng.uniform(-5.0, 5.0));
        let m = propagate(&x, &adj);
        for v in 0..n {
            let edges = adj.in_edges(v);
            if edges.is_empty() {
                prop_assert_eq!(m.row(v), x.row(v));
                continue;
            }
            for c in 0..2 {
                let lo = edges.iter().map(|&(w, _)| x.get(w as usize, c)).fold(f64::INFINITY, f64::min);
                let hi = edges.iter().map(|&(w, _)| x.get(w as usize, c)).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(m.get(v, c) >= lo - 1e-12 && m.get(v, c) <= hi + 1e-12);
            }
        }
        // <P x, d> == <x, Pᵀ d>
        let d = Mat::from_fn(n, 2, |_, _| rng.uniform(-1.0, 1.0));
        let lhs: f64 = m.data().iter().zip(d.data()).map(|(&a, &b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(propagate_adjoint(&d, &adj).data()).map(|(&a, &b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn rewrite_weight_ranges(
        n in 2usize..16,
        span in 1i64..6,
        seed in any::<u64>(),
    ) {
        let mut rng = SeededRng::new(seed);
        let times: Vec<i64> = (0..n).map(|_| rng.uniform_usize(span as usize) as i64).collect();
        let mut edges = Vec::new();
        for u in 0..n as u32 {
            for v in (u + 1)..n as u32 {
                if rng.bernoulli(0.4) {
                    edges.push((u, v));
                }
            }
        }
        let g = TemporalGraph::build(times, vec![0; n], Mat::zeros(n, 1), edges, span).unwrap();
        let pmp: WeightedAdjacency<f64> = rewrite(&g, Scheme::pmp());
        let mmp: WeightedAdjacency<f64> = rewrite(&g, Scheme::Mmp);
        let gen: WeightedAdjacency<f64> = rewrite(&g, Scheme::GenPmp);
        for v in 0..n {
            for &(_, w) in pmp.in_edges(v) {
                prop_assert!(w == 1.0 || w == 2.0);
            }
            for &(_, w) in mmp.in_edges(v) {
                prop_assert!(w == 1.0);
            }
            for &(_, w) in gen.in_edges(v) {
                prop_assert!(w > 0.0 && w.is_finite());
            }
        }
    }

    #[test]
    fn w1_is_a_metric_on_equal_size_samples(
        n in 2usize..40,
        seed in any::<u64>(),
        shift in finite_f64(),
    ) {
        let mut rng = SeededRng::new(seed);
        let a = DenseMatrix::<f64>::from_fn(n, 2, |_, _| rng.uniform(-10.0, 10.0));
        let b = DenseMatrix::<f64>::from_fn(n, 2, |_, _| rng.uniform(-10.0, 10.0) + shift);
        let c = DenseMatrix::<f64>::from_fn(n, 2, |_, _| rng.uniform(-10.0, 10.0));
        prop_assert_eq!(empirical_w1_per_dim(&a, &a), 0.0);
        let (ab, ba) = (empirical_w1_per_dim(&a, &b), empirical_w1_per_dim(&b, &a));
        prop_assert_eq!(ab, ba);
        let (ac, cb) = (empirical_w1_per_dim(&a, &c), empirical_w1_per_dim(&c, &b));
        prop_assert!(ab <= ac + cb + 1e-9);
    }
}
