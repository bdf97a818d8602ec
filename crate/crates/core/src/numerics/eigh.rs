//! Symmetric eigendecomposition by cyclic Jacobi rotations.
//!
//! The covariance matrices this crate diagonalizes are at most 16x16, where
//! Jacobi is simple, numerically robust, and keeps symmetry exactly.

use super::DenseMatrix;
use crate::scalar::Scalar;
use crate::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigendecomposition `U diag(lambda) Uᵀ` of a symmetric matrix.
///
/// The input is symmetrized as `(M + Mᵀ)/2` before factoring. Eigenpairs are
/// returned sorted by descending eigenvalue. `tol` bounds the relative
/// reconstruction and orthogonality error (`1e-10` is a safe default; the
/// solver iterates to near machine precision regardless).
pub fn jacobi_eigh<S: Scalar>(
    m: &DenseMatrix<S>,
    tol: S,
) -> Result<(DenseMatrix<S>, Vec<S>)> {
    if m.rows() != m.cols() {
        return Err(Error::Shape(format!("eigh on {}x{} matrix", m.rows(), m.cols())));
    }
    let n = m.rows();
    if n == 0 {
        return Ok((DenseMatrix::zeros(0, 0), Vec::new()));
    }

    let mut a = m.clone();
    a.symmetrize();
    let scale = a.frobenius_norm();
    if scale == S::zero() {
        return Ok((DenseMatrix::identity(n), vec![S::zero(); n]));
    }

    let mut u = DenseMatrix::<S>::identity(n);
    // Converge the off-diagonal mass to the smaller of the requested tolerance
    // and a near-machine threshold; Jacobi reaches it in a handful of sweeps.
    let eps = S::epsilon() * S::from_usize(n * n).unwrap();
    let target = scale * eps.min(tol.abs().max(S::epsilon()));

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut off = S::zero();
        for p in 0..n {
            for q in (p + 1)..n {
                off += a.get(p, q).abs();
            }
        }
        if off <= target {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == S::zero() {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (S::from_f64_lossy(2.0) * apq);
                // Smaller-angle rotation root, stable for large |theta|.
                let t = if theta >= S::zero() {
                    S::one() / (theta + (S::one() + theta * theta).sqrt())
                } else {
                    -S::one() / (-theta + (S::one() + theta * theta).sqrt())
                };
                let c = S::one() / (S::one() + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..n {
                    let ukp = u.get(k, p);
                    let ukq = u.get(k, q);
                    u.set(k, p, c * ukp - s * ukq);
                    u.set(k, q, s * ukp + c * ukq);
                }
            }
        }
    }
    if !converged {
        return Err(Error::EighNoConvergence);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a.get(j, j).partial_cmp(&a.get(i, i)).expect("non-finite eigenvalue")
    });
    let lambda: Vec<S> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut u_sorted = DenseMatrix::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            u_sorted.set(r, new_col, u.get(r, old_col));
        }
    }
    Ok((u_sorted, lambda))
}

/// `U diag(lambda) Uᵀ`.
pub fn reconstruct<S: Scalar>(u: &DenseMatrix<S>, lambda: &[S]) -> DenseMatrix<S> {
    let n = u.rows();
    let mut out = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = S::zero();
            for (k, &l) in lambda.iter().enumerate() {
                acc += u.get(i, k) * l * u.get(j, k);
            }
            out.set(i, j, acc);
        }
    }
    out
}
