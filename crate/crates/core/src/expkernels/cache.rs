use std::collections::HashMap;
use std::sync::Arc;

use num_traits::{ToPrimitive, Zero};

use super::expm::{expm, expm_minus_identity};
use super::matrix::DenseMatrix;
use super::phi::phi;
use crate::error::{Error, Result};
use crate::Rational;

/// Which matrix function of `c h M` an entry holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MatrixFunction {
    Exp,
    Phi(u8),
}

/// Dense matrix functions of `c h M` for one fixed stepsize `h` and matrix `M`.
///
/// Entries are built on first request and reused afterwards. Requests for node
/// zero are answered with the exact value (`I` or `I/k!`) and never count as a build.
/// Exponentials of arguments with `‖c h M‖₁ ≤ 1` are held as `e^{c h M} - I` and
/// applied as `v + (e^{c h M} - I) v`. Their rounding error then scales with
/// `‖c h M‖` instead of `1`, which keeps fine-step runs over many steps accurate.
#[derive(Debug, Clone)]
pub struct ExpCache {
    h: f64,
    m: Arc<DenseMatrix>,
    entries: HashMap<(MatrixFunction, Rational), Entry>,
    builds: u64,
}

/// Largest `‖c h M‖₁` for which an exponential is stored as `e^{c h M} - I`.
const INCREMENT_NORM: f64 = 1.0;

#[derive(Debug, Clone)]
enum Entry {
    Full(DenseMatrix),
    /// `e^{c h M} - I`
    Increment(DenseMatrix),
}

impl ExpCache {
    pub fn new(m: Arc<DenseMatrix>, h: f64) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "linear operator is {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        if !m.all_finite() {
            return Err(Error::Domain("linear operator"));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Config(format!("stepsize must be positive, got {h}")));
        }
        Ok(ExpCache {
            h,
            m,
            entries: HashMap::new(),
            builds: 0,
        })
    }

    pub fn stepsize(&self) -> f64 {
        self.h
    }

    pub fn matrix(&self) -> &Arc<DenseMatrix> {
        &self.m
    }

    /// Number of matrix functions computed so far.
    pub fn builds(&self) -> u64 {
        self.builds
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// True when the cache was built for exactly this `(M, h)`.
    pub fn is_valid_for(&self, m: &Arc<DenseMatrix>, h: f64) -> bool {
        self.h == h && (Arc::ptr_eq(&self.m, m) || *self.m == **m)
    }

    /// Drops every entry and rebinds the cache to a new stepsize.
    pub fn reset(&mut self, h: f64) -> Result<()> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Config(format!("stepsize must be positive, got {h}")));
        }
        self.h = h;
        self.entries.clear();
        Ok(())
    }

    /// Builds the entry if missing.
    pub fn ensure(&mut self, func: MatrixFunction, c: Rational) -> Result<()> {
        let key = (func, c);
        if self.entries.contains_key(&key) {
            return Ok(());
        }
        let n = self.m.rows();
        let value = if c.is_zero() {
            match func {
                MatrixFunction::Exp => Entry::Increment(DenseMatrix::zeros(n, n)),
                MatrixFunction::Phi(k) => {
                    let fact: f64 = (1..=k as u32).map(f64::from).product();
                    let mut id = DenseMatrix::identity(n);
                    id.scale_mut(1.0 / fact);
                    Entry::Full(id)
                }
            }
        } else {
            let arg = self.m.scaled(c.to_f64().expect("finite node") * self.h);
            let v = match func {
                MatrixFunction::Exp if arg.norm1() <= INCREMENT_NORM => {
                    Entry::Increment(expm_minus_identity(&arg)?)
                }
                MatrixFunction::Exp => Entry::Full(expm(&arg)?),
                MatrixFunction::Phi(k) => Entry::Full(phi(k as usize, &arg)?),
            };
            self.builds += 1;
            v
        };
        self.entries.insert(key, value);
        Ok(())
    }

    /// `func(c h M) v` from a built entry; `None` if the entry is missing.
    pub fn apply(&self, func: MatrixFunction, c: Rational, v: &[f64]) -> Option<Vec<f64>> {
        Some(match self.entries.get(&(func, c))? {
            Entry::Full(mat) => mat.matvec(v),
            Entry::Increment(d) => {
                let mut out = d.matvec(v);
                for (o, x) in out.iter_mut().zip(v) {
                    *o += x;
                }
                out
            }
        })
    }

    /// The full matrix `func(c h M)` of a built entry.
    pub fn value(&self, func: MatrixFunction, c: Rational) -> Option<DenseMatrix> {
        Some(match self.entries.get(&(func, c))? {
            Entry::Full(mat) => mat.clone(),
            Entry::Increment(d) => {
                let mut e = d.clone();
                e.add_diagonal(1.0);
                e
            }
        })
    }

    /// `e^{c h M}`, built on first request.
    pub fn cached_exp(&mut self, c: Rational) -> Result<DenseMatrix> {
        self.ensure(MatrixFunction::Exp, c)?;
        Ok(self.value(MatrixFunction::Exp, c).expect("just built"))
    }

    /// `φ_k(c h M)`, built on first request.
    pub fn cached_phi(&mut self, k: u8, c: Rational) -> Result<DenseMatrix> {
        self.ensure(MatrixFunction::Phi(k), c)?;
        Ok(self.value(MatrixFunction::Phi(k), c).expect("just built"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wind_matrix() -> Arc<DenseMatrix> {
        Arc::new(DenseMatrix::from_rows(&[&[-0.2, -2.0], &[2.0, -0.2]]))
    }

    #[test]
    fn node_zero_is_identity_without_build() {
        let mut cache = ExpCache::new(wind_matrix(), 0.1).unwrap();
        let e = cache.cached_exp(Rational::zero()).unwrap().clone();
        assert_eq!(e, DenseMatrix::identity(2));
        assert_eq!(cache.builds(), 0);
    }

    #[test]
    fn repeated_requests_build_once() {
        let mut cache = ExpCache::new(wind_matrix(), 0.1).unwrap();
        let one = Rational::from_integer(1);
        let a = cache.cached_exp(one).unwrap().clone();
        let b = cache.cached_exp(one).unwrap().clone();
        assert_eq!(a, b);
        assert_eq!(cache.builds(), 1);
    }

    #[test]
    fn half_steps_compose() {
        let mut cache = ExpCache::new(wind_matrix(), 0.3).unwrap();
        let half = cache.cached_exp(Rational::new(1, 2)).unwrap().clone();
        let full = cache.cached_exp(Rational::from_integer(1)).unwrap().clone();
        let composed = half.matmul(&half);
        assert!(composed.sub(&full).norm_fro() <= 1e-11 * full.norm_fro());
    }

    #[test]
    fn validity_tracks_h_and_matrix() {
        let m = wind_matrix();
        let mut cache = ExpCache::new(m.clone(), 0.1).unwrap();
        assert!(cache.is_valid_for(&m, 0.1));
        assert!(!cache.is_valid_for(&m, 0.2));
        let other = Arc::new(DenseMatrix::identity(2));
        assert!(!cache.is_valid_for(&other, 0.1));
        cache.cached_exp(Rational::from_integer(1)).unwrap();
        cache.reset(0.2).unwrap();
        assert!(cache.is_empty());
        assert!(cache.is_valid_for(&m, 0.2));
    }

    #[test]
    fn rejects_nonpositive_stepsize() {
        assert!(ExpCache::new(wind_matrix(), 0.0).is_err());
        assert!(ExpCache::new(wind_matrix(), f64::NAN).is_err());
    }
}
