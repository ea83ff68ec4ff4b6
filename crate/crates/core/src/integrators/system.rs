use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expkernels::DenseMatrix;

/// The nonlinear part `f` of `y' = M y + f(y)`.
pub trait Nonlinearity: Send + Sync {
    /// `out = f(y)`
    fn eval(&self, y: &[f64], out: &mut [f64]);

    /// `out = f'(y) v`. Only the third-order corrections need it.
    fn jvp(&self, _y: &[f64], _v: &[f64], _out: &mut [f64]) -> Result<()> {
        Err(Error::MissingJacobian)
    }
}

/// `f ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNonlinearity;

impl Nonlinearity for ZeroNonlinearity {
    fn eval(&self, _y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }

    fn jvp(&self, _y: &[f64], _v: &[f64], out: &mut [f64]) -> Result<()> {
        out.fill(0.0);
        Ok(())
    }
}

type EvalFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
type JvpFn = dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync;

/// Nonlinearity assembled from closures.
pub struct FnNonlinearity {
    eval: Box<EvalFn>,
    jvp: Option<Box<JvpFn>>,
}

impl FnNonlinearity {
    pub fn new(eval: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        FnNonlinearity {
            eval: Box::new(eval),
            jvp: None,
        }
    }

    pub fn with_jvp(
        mut self,
        jvp: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        self.jvp = Some(Box::new(jvp));
        self
    }
}

impl Nonlinearity for FnNonlinearity {
    fn eval(&self, y: &[f64], out: &mut [f64]) {
        (self.eval)(y, out)
    }

    fn jvp(&self, y: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        match &self.jvp {
            Some(j) => {
                j(y, v, out);
                Ok(())
            }
            None => Err(Error::MissingJacobian),
        }
    }
}

/// A semi-linear initial value problem `y' = M y + f(y)`, `y(t0) = y0`, on `[t0, t_end]`.
#[derive(Clone)]
pub struct SemiLinearSystem {
    pub m: Arc<DenseMatrix>,
    pub f: Arc<dyn Nonlinearity>,
    pub y0: Vec<f64>,
    pub t0: f64,
    pub t_end: f64,
}

impl fmt::Debug for SemiLinearSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SemiLinearSystem")
            .field("dim", &self.dim())
            .field("t0", &self.t0)
            .field("t_end", &self.t_end)
            .finish_non_exhaustive()
    }
}

impl SemiLinearSystem {
    pub fn new(
        m: DenseMatrix,
        f: Arc<dyn Nonlinearity>,
        y0: Vec<f64>,
        t0: f64,
        t_end: f64,
    ) -> Result<Self> {
        if !m.is_square() || m.rows() != y0.len() {
            return Err(Error::Dimension(format!(
                "operator {}x{} with state of length {}",
                m.rows(),
                m.cols(),
                y0.len()
            )));
        }
        if !m.all_finite() {
            return Err(Error::Domain("linear operator"));
        }
        if !(t_end > t0) {
            return Err(Error::Config(format!("empty interval [{t0}, {t_end}]")));
        }
        Ok(SemiLinearSystem {
            m: Arc::new(m),
            f,
            y0,
            t0,
            t_end,
        })
    }

    pub fn dim(&self) -> usize {
        self.y0.len()
    }

    /// Same system with the nonlinearity suppressed.
    pub fn linear_only(&self) -> Self {
        SemiLinearSystem {
            f: Arc::new(ZeroNonlinearity),
            ..self.clone()
        }
    }

    /// Same system with a different linear part.
    pub fn with_matrix(&self, m: DenseMatrix) -> Result<Self> {
        SemiLinearSystem::new(m, self.f.clone(), self.y0.clone(), self.t0, self.t_end)
    }

    pub fn with_interval(mut self, t0: f64, t_end: f64) -> Result<Self> {
        if !(t_end > t0) {
            return Err(Error::Config(format!("empty interval [{t0}, {t_end}]")));
        }
        self.t0 = t0;
        self.t_end = t_end;
        Ok(self)
    }

    pub fn eval_f(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; y.len()];
        self.f.eval(y, &mut out);
        out
    }

    pub fn eval_jvp(&self, y: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; y.len()];
        self.f.jvp(y, v, &mut out)?;
        Ok(out)
    }

    /// Worst relative mismatch between `jvp(y, v)` and the central difference
    /// `(f(y + εv) − f(y − εv)) / 2ε`, measured in the max norm against `‖v‖∞`.
    pub fn jvp_fd_mismatch(&self, y: &[f64], v: &[f64], eps: f64) -> Result<f64> {
        let plus: Vec<f64> = y.iter().zip(v).map(|(a, b)| a + eps * b).collect();
        let minus: Vec<f64> = y.iter().zip(v).map(|(a, b)| a - eps * b).collect();
        let fp = self.eval_f(&plus);
        let fm = self.eval_f(&minus);
        let j = self.eval_jvp(y, v)?;
        let vnorm = max_norm(v).max(f64::MIN_POSITIVE);
        let err = fp
            .iter()
            .zip(&fm)
            .zip(&j)
            .map(|((p, m), jv)| ((p - m) / (2.0 * eps) - jv).abs())
            .fold(0.0, f64::max);
        Ok(err / vnorm)
    }
}

pub fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
