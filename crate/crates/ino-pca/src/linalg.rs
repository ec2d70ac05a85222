//! Small dense linear-algebra kernels used by the metrics and the offline
//! oracle: modified Gram–Schmidt, a one-sided Jacobi SVD for tiny cross-Gram
//! matrices, and a cyclic Jacobi eigensolver for symmetric matrices.
//!
//! Everything here is O(r²)–O(n³) textbook material kept local on purpose:
//! the subspace metrics only ever factor r×r matrices (r ≤ ~10) and the
//! sample-covariance oracle runs at p ≤ 2048, so a general-purpose LAPACK
//! binding would buy nothing but a heavyweight dependency.

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Trapezoid rule on a strictly increasing grid.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) * 0.5)
        .sum()
}

/// Orthonormalizes the given column vectors in place via modified
/// Gram–Schmidt. Fails if the columns are (numerically) rank deficient:
/// a residual shorter than `RANK_TOL` times the original column norm is
/// treated as linear dependence.
pub fn orthonormalize(cols: &mut [Vec<f64>]) -> Result<()> {
    const RANK_TOL: f64 = 1e-10;
    for j in 0..cols.len() {
        let original = norm(&cols[j]);
        if original == 0.0 {
            return Err(Error::Domain(format!("basis column {j} is identically zero")));
        }
        for i in 0..j {
            let proj = dot(&cols[i], &cols[j]);
            let (head, tail) = cols.split_at_mut(j);
            let u = &head[i];
            for (v, &ui) in tail[0].iter_mut().zip(u) {
                *v -= proj * ui;
            }
        }
        let remaining = norm(&cols[j]);
        if remaining <= RANK_TOL * original {
            return Err(Error::Domain(format!(
                "basis is rank deficient: column {j} lies in the span of the previous columns"
            )));
        }
        let inv = 1.0 / remaining;
        for v in cols[j].iter_mut() {
            *v *= inv;
        }
    }
    Ok(())
}

/// Singular values of a small matrix given as `r` columns of equal length,
/// computed with one-sided (Hestenes) Jacobi rotations. Returned in
/// descending order.
pub fn singular_values(cols: &[Vec<f64>]) -> Vec<f64> {
    let mut a: Vec<Vec<f64>> = cols.to_vec();
    let r = a.len();
    let eps = 1e-14;
    for _sweep in 0..60 {
        let mut rotated = false;
        for i in 0..r {
            for j in (i + 1)..r {
                let alpha = dot(&a[i], &a[i]);
                let beta = dot(&a[j], &a[j]);
                let gamma = dot(&a[i], &a[j]);
                if gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                // Jacobi rotation that orthogonalizes columns i and j.
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..a[i].len() {
                    let (ai, aj) = (a[i][k], a[j][k]);
                    a[i][k] = c * ai - s * aj;
                    a[j][k] = s * ai + c * aj;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<f64> = a.iter().map(|col| norm(col)).collect();
    sv.sort_by(|x, y| y.partial_cmp(x).unwrap());
    sv
}

/// Eigendecomposition of a symmetric n×n matrix (flat row-major) by cyclic
/// Jacobi rotations. Returns eigenvalues in descending order with matching
/// eigenvectors as columns.
pub fn symmetric_eigen(a: &mut [f64], n: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if a.len() != n * n {
        return Err(Error::Domain(format!(
            "symmetric_eigen: buffer holds {} entries, expected {}",
            a.len(),
            n * n
        )));
    }
    let mut v = vec![0.0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * frob.max(1.0);
    let max_sweeps = 50;
    for _ in 0..max_sweeps {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if (2.0 * off).sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].partial_cmp(&a[i * n + i]).unwrap());
    let eigvals = order.iter().map(|&i| a[i * n + i]).collect();
    let eigvecs = order
        .iter()
        .map(|&j| (0..n).map(|i| v[i * n + j]).collect())
        .collect();
    Ok((eigvals, eigvecs))
}
