//! Scaling-and-squaring matrix exponential with diagonal Padé approximants,
//! following Higham's 2005 selection of degree and scaling from the 1-norm.

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

// Largest 1-norms for which the [m/m] approximant is accurate to unit roundoff.
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.53939833006323e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA_13: f64 = 5.371920351148152e0;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE_9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

pub(crate) fn check_input(a: &DenseMatrix, what: &'static str) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "{what} needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    if !a.all_finite() {
        return Err(Error::Domain(what));
    }
    Ok(())
}

/// Matrix exponential `e^A`.
pub fn expm(a: &DenseMatrix) -> Result<DenseMatrix> {
    scaled_pade(a, false)
}

/// `e^A - I`, computed without forming `e^A` first. For small `‖A‖` the
/// difference keeps full relative accuracy, which matters when `e^{hM}` is
/// applied over very many short steps.
pub fn expm_minus_identity(a: &DenseMatrix) -> Result<DenseMatrix> {
    scaled_pade(a, true)
}

fn scaled_pade(a: &DenseMatrix, minus_identity: bool) -> Result<DenseMatrix> {
    check_input(a, "expm")?;
    let n = a.rows();
    if a.is_zero() {
        return Ok(if minus_identity {
            DenseMatrix::zeros(n, n)
        } else {
            DenseMatrix::identity(n)
        });
    }
    let finish = |u: &DenseMatrix, v: &DenseMatrix| {
        if minus_identity {
            pade_minus_identity(u, v)
        } else {
            solve_pade(u, v)
        }
    };
    let norm = a.norm1();

    for &(m, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &PADE_3,
                5 => &PADE_5,
                7 => &PADE_7,
                _ => &PADE_9,
            };
            let (u, v) = pade_low(a, coeffs);
            return finish(&u, &v);
        }
    }

    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled = a.scaled(0.5f64.powi(s));
    let (u, v) = pade_13(&scaled);
    let mut r = finish(&u, &v)?;
    for _ in 0..s {
        let mut next = r.matmul(&r);
        if minus_identity {
            // (I + D)^2 - I = D D + 2 D
            next.axpy(2.0, &r);
        }
        r = next;
    }
    Ok(r)
}

/// Odd/even split for degrees 3..9: U = A * sum b_{2j+1} A^{2j}, V = sum b_{2j} A^{2j}.
fn pade_low(a: &DenseMatrix, b: &[f64]) -> (DenseMatrix, DenseMatrix) {
    let n = a.rows();
    let a2 = a.matmul(a);
    let mut powers = vec![DenseMatrix::identity(n), a2.clone()];
    while powers.len() < b.len() / 2 {
        let next = powers.last().expect("non-empty").matmul(&a2);
        powers.push(next);
    }
    let mut u_inner = DenseMatrix::zeros(n, n);
    let mut v = DenseMatrix::zeros(n, n);
    for (j, p) in powers.iter().enumerate() {
        u_inner.axpy(b[2 * j + 1], p);
        v.axpy(b[2 * j], p);
    }
    (a.matmul(&u_inner), v)
}

fn pade_13(a: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let b = &PADE_13;
    let n = a.rows();
    let ident = DenseMatrix::identity(n);
    let a2 = a.matmul(a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);

    let mut w1 = a6.scaled(b[13]);
    w1.axpy(b[11], &a4);
    w1.axpy(b[9], &a2);
    let mut u = a6.matmul(&w1);
    u.axpy(b[7], &a6);
    u.axpy(b[5], &a4);
    u.axpy(b[3], &a2);
    u.axpy(b[1], &ident);
    let u = a.matmul(&u);

    let mut z1 = a6.scaled(b[12]);
    z1.axpy(b[10], &a4);
    z1.axpy(b[8], &a2);
    let mut v = a6.matmul(&z1);
    v.axpy(b[6], &a6);
    v.axpy(b[4], &a4);
    v.axpy(b[2], &a2);
    v.axpy(b[0], &ident);
    (u, v)
}

/// r = (V - U)^{-1} (V + U)
fn solve_pade(u: &DenseMatrix, v: &DenseMatrix) -> Result<DenseMatrix> {
    v.sub(u).solve(&v.add(u))
}

/// r - I = (V - U)^{-1} (2 U)
fn pade_minus_identity(u: &DenseMatrix, v: &DenseMatrix) -> Result<DenseMatrix> {
    let q = v.sub(u);
    q.solve(&u.scaled(2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_matrix_gives_identity() {
        let e = expm(&DenseMatrix::zeros(3, 3)).unwrap();
        assert_eq!(e, DenseMatrix::identity(3));
    }

    #[test]
    fn quarter_rotation() {
        let a = DenseMatrix::from_rows(&[&[0.0, -FRAC_PI_2], &[FRAC_PI_2, 0.0]]);
        let e = expm(&a).unwrap();
        let want = DenseMatrix::from_rows(&[&[0.0, -1.0], &[1.0, 0.0]]);
        assert!(e.sub(&want).max_abs() < 1e-15, "{e:?}");
    }

    #[test]
    fn scalar_values_across_degrees() {
        for z in [1e-3, 0.2, 0.9, 2.0, 4.0, 30.0, -30.0] {
            let e = expm(&DenseMatrix::from_rows(&[&[z]])).unwrap();
            let rel = (e[(0, 0)] - z.exp()).abs() / z.exp();
            // repeated squaring amplifies rounding for large |z|
            let tol = if z.abs() > 10.0 { 1e-13 } else { 1e-14 };
            assert!(rel < tol, "z = {z}: rel err {rel:e}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            expm(&DenseMatrix::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
        let nan = DenseMatrix::from_rows(&[&[f64::NAN]]);
        assert_eq!(expm(&nan), Err(Error::Domain("expm")));
    }

    #[test]
    fn difference_form_keeps_relative_accuracy() {
        // e^z - 1 for tiny z has no cancellation in the difference form
        for z in [1e-12, -3e-9, 2.5e-5] {
            let d = expm_minus_identity(&DenseMatrix::from_rows(&[&[z]])).unwrap();
            let rel = (d[(0, 0)] - z.exp_m1()).abs() / z.exp_m1().abs();
            assert!(rel < 4e-16, "z = {z}: rel err {rel:e}");
        }
        for a in [
            DenseMatrix::from_rows(&[&[0.3, -4.0], &[4.0, 0.3]]),
            DenseMatrix::from_rows(&[&[1e-3, 2e-3], &[0.0, -1e-3]]),
        ] {
            let mut d = expm_minus_identity(&a).unwrap();
            d.add_diagonal(1.0);
            assert!(d.sub(&expm(&a).unwrap()).max_abs() < 1e-14);
        }
    }

    #[test]
    fn nilpotent_block() {
        // exp([[0,1],[0,0]]) = [[1,1],[0,1]]
        let a = DenseMatrix::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let e = expm(&a).unwrap();
        let want = DenseMatrix::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
        assert!(e.sub(&want).max_abs() < 1e-15);
    }
}
