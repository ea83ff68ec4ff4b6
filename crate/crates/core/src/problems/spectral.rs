//! Spectral differentiation matrices.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::expkernels::DenseMatrix;

/// Chebyshev collocation differentiation matrix on `x_j = cos(jπ/N)`, `j = 0..=N`
/// (same conventions as Trefethen's `cheb`). Returns `(D, x)`.
pub fn cheb(n: usize) -> Result<(DenseMatrix, Vec<f64>)> {
    if n == 0 {
        return Err(Error::Config("cheb needs N >= 1".into()));
    }
    let x: Vec<f64> = (0..=n).map(|j| (PI * j as f64 / n as f64).cos()).collect();
    let c: Vec<f64> = (0..=n)
        .map(|j| {
            let w = if j == 0 || j == n { 2.0 } else { 1.0 };
            if j % 2 == 0 {
                w
            } else {
                -w
            }
        })
        .collect();
    let mut d = DenseMatrix::from_fn(n + 1, n + 1, |i, j| {
        if i == j {
            0.0
        } else {
            c[i] / c[j] / (x[i] - x[j])
        }
    });
    // negative-sum trick for the diagonal
    for i in 0..=n {
        let s: f64 = (0..=n).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
        d[(i, i)] = -s;
    }
    Ok((d, x))
}

/// Periodic pseudospectral second-derivative matrix on `x_j = jL/N`, `N` even,
/// with `μ = 2π/L`.
pub fn fourier_d2(n: usize, length: f64) -> Result<DenseMatrix> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "pseudospectral grid needs an even N, got {n}"
        )));
    }
    if !(length > 0.0) {
        return Err(Error::Config(format!(
            "period must be positive, got {length}"
        )));
    }
    let mu = 2.0 * PI / length;
    let mu2 = mu * mu;
    let half = (n / 2) as f64;
    let dx = length / n as f64;
    Ok(DenseMatrix::from_fn(n, n, |j, k| {
        if j == k {
            -mu2 * (2.0 * half * half + 1.0) / 6.0
        } else {
            let sign = if (j + k + 1) % 2 == 0 { 1.0 } else { -1.0 };
            let s = (mu * (j as f64 - k as f64) * dx / 2.0).sin();
            0.5 * mu2 * sign / (s * s)
        }
    }))
}
