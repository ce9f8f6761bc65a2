//! Thick-restart Lanczos with full reorthogonalization, targeting the
//! eigenvalues of largest magnitude.
//!
//! The projected matrix `H = V^T A V` is assembled from the reorthogonalization
//! coefficients themselves, so after a restart (where `H` has an arrowhead
//! shape) no special bookkeeping is needed.

use rand_distr::{Distribution, StandardNormal};

use super::jacobi::symmetric_eigen;
use super::{EigenOptions, SpectralResult, SymmetricOperator};
use crate::error::{Result, ScreenError};
use crate::rng::{stream, stream_rng};
use crate::scalar::{axpy, dot, norm2, Scalar};

/// Orthogonalizes `w` against `basis` with classical Gram-Schmidt and
/// returns the accumulated coefficients. A second pass runs only when the
/// first removed most of `w` (the DGKS criterion).
fn orthogonalize<T: Scalar>(w: &mut [T], basis: &[Vec<T>]) -> Vec<T> {
    let mut coeffs = vec![T::zero(); basis.len()];
    let eta = T::of_f64(std::f64::consts::FRAC_1_SQRT_2);
    let mut before = norm2(w);
    for _ in 0..2 {
        let h: Vec<T> = basis.iter().map(|v| dot(v, w)).collect();
        for (v, &c) in basis.iter().zip(&h) {
            axpy(-c, v, w);
        }
        for (a, c) in coeffs.iter_mut().zip(h) {
            *a += c;
        }
        let after = norm2(w);
        if after > eta * before {
            break;
        }
        before = after;
    }
    coeffs
}

fn random_unit<T: Scalar, R: rand::Rng>(n: usize, basis: &[Vec<T>], rng: &mut R) -> Vec<T> {
    loop {
        let mut v: Vec<T> = (0..n)
            .map(|_| T::of_f64(StandardNormal.sample(rng)))
            .collect();
        orthogonalize(&mut v, basis);
        let norm = norm2(&v);
        if norm > T::of_f64(1e-3) {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}

/// Ordering used for the returned pairs: `|lambda|` descending, then signed
/// value descending, then discovery order.
fn magnitude_order<T: Scalar>(theta: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..theta.len()).collect();
    order.sort_by(|&a, &b| {
        theta[b]
            .abs()
            .partial_cmp(&theta[a].abs())
            .unwrap()
            .then(theta[b].partial_cmp(&theta[a]).unwrap())
            .then(a.cmp(&b))
    });
    order
}

/// Flips `v` so its largest-magnitude entry (first one on ties) is positive.
fn fix_sign<T: Scalar>(v: &mut [T]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < T::zero()) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn combine<T: Scalar>(basis: &[Vec<T>], y: &[T], m: usize, col: usize, n: usize) -> Vec<T> {
    let mut u = vec![T::zero(); n];
    for (i, v) in basis.iter().enumerate().take(m) {
        let c = y[i * m + col];
        if c != T::zero() {
            axpy(c, v, &mut u);
        }
    }
    u
}

pub(super) fn thick_restart<T: Scalar, A: SymmetricOperator<T> + ?Sized>(
    op: &A,
    k: usize,
    opts: &EigenOptions,
) -> Result<SpectralResult<T>> {
    let n = op.dim();
    let eps = T::epsilon();
    let tol = T::of_f64(opts.tol).max(T::of_f64(64.0) * eps);
    let mut ncv = opts.subspace.unwrap_or((2 * k + 20).max(40)).clamp(k, n);
    let stage_budget = opts.max_matvecs.unwrap_or((30 * k).max(300));
    let mut budget = stage_budget;
    let mut escalations = 0;
    let breakdown = T::of_f64(1e3) * eps;

    let mut rng = stream_rng(opts.seed, stream::EIGEN_START);
    let mut basis: Vec<Vec<T>> = vec![random_unit(n, &[], &mut rng)];
    let mut kept = 0usize;
    let mut kept_theta: Vec<T> = Vec::new();
    let mut matvecs = 0usize;
    let mut w = vec![T::zero(); n];

    loop {
        // Projected matrix for this cycle; kept Ritz values sit on the diagonal.
        let mut h = vec![T::zero(); ncv * ncv];
        for (t, &th) in kept_theta.iter().enumerate() {
            h[t * ncv + t] = th;
        }
        let mut beta: T;
        let residual: Vec<T>;
        let mut j = kept;
        loop {
            op.apply(&basis[j], &mut w);
            matvecs += 1;
            let w_norm = norm2(&w);
            let coeffs = orthogonalize(&mut w, &basis);
            for (i, &c) in coeffs.iter().enumerate() {
                h[i * ncv + j] = c;
                h[j * ncv + i] = c;
            }
            beta = norm2(&w);
            if j + 1 == ncv {
                residual = w.clone();
                break;
            }
            if beta <= breakdown * w_norm || beta == T::zero() {
                // Invariant subspace found: continue from a fresh direction.
                let v = random_unit(n, &basis, &mut rng);
                basis.push(v);
            } else {
                basis.push(w.iter().map(|&x| x / beta).collect());
            }
            j += 1;
        }

        let (theta, y) = symmetric_eigen(&h, ncv);
        let order = magnitude_order(&theta);
        let scale = theta[order[0]].abs();
        let threshold = tol * scale;
        let estimates: Vec<T> = order.iter().map(|&c| (beta * y[(ncv - 1) * ncv + c]).abs()).collect();
        let estimated_ok = estimates[..k].iter().all(|&e| e <= threshold);

        if estimated_ok {
            let mut eigenvalues = Vec::with_capacity(k);
            let mut eigenvectors = Vec::with_capacity(k * n);
            let mut residuals = Vec::with_capacity(k);
            let mut rank_deficient = false;
            let zero_cut = T::of_f64(n as f64) * eps * scale * T::of_f64(10.0);
            for &c in &order[..k] {
                let mut u = combine(&basis, &y, ncv, c, n);
                let norm = norm2(&u);
                u.iter_mut().for_each(|x| *x /= norm);
                fix_sign(&mut u);
                let mut lambda = theta[c];
                if lambda.abs() <= zero_cut {
                    lambda = T::zero();
                    rank_deficient = true;
                }
                op.apply(&u, &mut w);
                matvecs += 1;
                axpy(-lambda, &u, &mut w);
                residuals.push(norm2(&w));
                eigenvalues.push(lambda);
                eigenvectors.extend_from_slice(&u);
            }
            let explicit_ok = residuals.iter().all(|&r| r <= threshold.max(zero_cut));
            if explicit_ok {
                return Ok(SpectralResult {
                    p: n,
                    eigenvalues,
                    eigenvectors,
                    residuals,
                    rank_deficient,
                    matvecs,
                });
            }
            log::debug!("Ritz estimates converged but explicit residuals did not; continuing");
        }

        if matvecs >= budget {
            if escalations < opts.max_escalations && ncv < n {
                escalations += 1;
                budget = matvecs + stage_budget;
                log::debug!("lanczos: escalating subspace {ncv} -> {}", (2 * ncv).min(n));
                ncv = (2 * ncv).min(n);
            } else {
                return Err(ScreenError::NoConvergence {
                    matvecs,
                    residuals: estimates[..k].iter().map(|e| e.as_f64()).collect(),
                    tolerance: opts.tol,
                });
            }
        }

        // Thick restart: keep the leading Ritz vectors and the residual direction.
        let old_ncv = basis.len();
        let keep = (k + (ncv - k) / 2).max(k).min(ncv - 1).min(old_ncv - 1);
        let keep = keep.max(1);
        let mut new_basis: Vec<Vec<T>> = order[..keep]
            .iter()
            .map(|&c| combine(&basis, &y, old_ncv, c, n))
            .collect();
        kept_theta = order[..keep].iter().map(|&c| theta[c]).collect();
        let next = if beta > breakdown * scale && beta > T::zero() {
            let mut r: Vec<T> = residual.iter().map(|&x| x / beta).collect();
            // the Ritz vectors are only orthonormal to rounding; clean the new direction
            orthogonalize(&mut r, &new_basis);
            let nr = norm2(&r);
            r.iter_mut().for_each(|x| *x /= nr);
            r
        } else {
            random_unit(n, &new_basis, &mut rng)
        };
        new_basis.push(next);
        basis = new_basis;
        kept = keep;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::{top_k_eigen_with, DenseSymmetric};

    fn diag(values: &[f64]) -> DenseSymmetric<f64> {
        let n = values.len();
        let mut d = vec![0.0; n * n];
        for (i, &v) in values.iter().enumerate() {
            d[i * n + i] = v;
        }
        DenseSymmetric::new(n, d).unwrap()
    }

    #[test]
    fn diagonal_example() {
        let res = top_k_eigen_with(&diag(&[5.0, -3.0, 1.0]), 2, &EigenOptions::default()).unwrap();
        assert!((res.eigenvalues[0] - 5.0).abs() < 1e-12);
        assert!((res.eigenvalues[1] + 3.0).abs() < 1e-12);
        assert!((res.component(0, 0) - 1.0).abs() < 1e-10);
        assert!((res.component(1, 1) - 1.0).abs() < 1e-10);
        assert!(!res.rank_deficient);
    }

    #[test]
    fn rank_one_example() {
        let n = 60;
        let v: Vec<f64> = (0..n).map(|i| (i % 7) as f64 - 3.0).collect();
        let norm = norm2(&v);
        let v: Vec<f64> = v.iter().map(|x| x / norm).collect();
        let lambda = -4.5;
        let d: Vec<f64> = (0..n * n).map(|t| lambda * v[t / n] * v[t % n]).collect();
        let op = DenseSymmetric::new(n, d).unwrap();
        let res = top_k_eigen_with(&op, 1, &EigenOptions::default()).unwrap();
        assert!((res.eigenvalues[0] - lambda).abs() < 1e-10);
        let overlap = dot(res.vector(0), &v).abs();
        assert!((overlap - 1.0).abs() < 1e-10);

        let res = top_k_eigen_with(&op, 3, &EigenOptions::default()).unwrap();
        assert!(res.rank_deficient);
        assert_eq!(&res.eigenvalues[1..], &[0.0, 0.0]);
    }

    #[test]
    fn zero_matrix_is_rank_deficient() {
        let op = DenseSymmetric::new(10, vec![0.0f64; 100]).unwrap();
        let res = top_k_eigen_with(&op, 2, &EigenOptions::default()).unwrap();
        assert!(res.rank_deficient);
        assert_eq!(res.eigenvalues, vec![0.0, 0.0]);
    }

    #[test]
    fn magnitude_ties_prefer_positive() {
        let res = top_k_eigen_with(&diag(&[-2.0, 2.0, 1.0, 0.5]), 2, &EigenOptions::default()).unwrap();
        assert_eq!(res.eigenvalues.len(), 2);
        assert!((res.eigenvalues[0] - 2.0).abs() < 1e-12);
        assert!((res.eigenvalues[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn sign_convention() {
        let mut v = vec![0.1, -0.9, 0.3];
        fix_sign(&mut v);
        assert_eq!(v, vec![-0.1, 0.9, -0.3]);
    }

    #[test]
    fn rejects_bad_k() {
        assert!(top_k_eigen_with(&diag(&[1.0, 2.0]), 0, &EigenOptions::default()).is_err());
        assert!(top_k_eigen_with(&diag(&[1.0, 2.0]), 3, &EigenOptions::default()).is_err());
    }
}
