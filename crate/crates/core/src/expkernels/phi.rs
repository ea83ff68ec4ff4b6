//! φ-functions of a matrix, read off the exponential of an augmented block matrix
//! so that no inverse of the (possibly singular) argument is ever formed.

use super::expm::{check_input, expm};
use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

pub const MAX_PHI_ORDER: usize = 3;

/// `φ_k(A)` for `k` in `1..=3`.
pub fn phi(k: usize, a: &DenseMatrix) -> Result<DenseMatrix> {
    if !(1..=MAX_PHI_ORDER).contains(&k) {
        return Err(Error::Unsupported(format!(
            "phi order {k} (supported: 1..={MAX_PHI_ORDER})"
        )));
    }
    Ok(phi_sequence(k, a)?.pop().expect("k >= 1"))
}

/// `[φ_1(A), ..., φ_k(A)]` from one exponential of the `(k+1)n` block matrix
///
/// ```text
/// [ A  I  0 ]
/// [ 0  0  I ]
/// [ 0  0  0 ]
/// ```
///
/// whose first block row is `[e^A, φ_1(A), ..., φ_k(A)]`.
pub fn phi_sequence(k: usize, a: &DenseMatrix) -> Result<Vec<DenseMatrix>> {
    check_input(a, "phi")?;
    if !(1..=MAX_PHI_ORDER).contains(&k) {
        return Err(Error::Unsupported(format!(
            "phi order {k} (supported: 1..={MAX_PHI_ORDER})"
        )));
    }
    let n = a.rows();
    let big = (k + 1) * n;
    let mut aug = DenseMatrix::zeros(big, big);
    aug.set_block(0, 0, a);
    for blk in 0..k {
        for i in 0..n {
            aug[(blk * n + i, (blk + 1) * n + i)] = 1.0;
        }
    }
    let e = expm(&aug)?;
    Ok((1..=k).map(|j| e.block(0, j * n, n, n)).collect())
}
