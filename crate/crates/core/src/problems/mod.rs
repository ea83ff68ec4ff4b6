//! The three benchmark systems and the certified reference oracle.

mod reference;
mod spectral;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::expkernels::DenseMatrix;
use crate::integrators::{Nonlinearity, SemiLinearSystem};

pub use reference::{reference_solution, Reference, ReferenceOracle, REFCACHE_ENV};
pub use spectral::{cheb, fourier_d2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemId {
    AllenCahn,
    Wind,
    Nls,
}

impl ProblemId {
    pub const ALL: [ProblemId; 3] = [ProblemId::AllenCahn, ProblemId::Wind, ProblemId::Nls];

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemId::AllenCahn => "allen_cahn",
            ProblemId::Wind => "wind",
            ProblemId::Nls => "nls",
        }
    }

    /// Stepsize exponents `k` (h = 2^-k) of the published sweeps.
    pub fn default_k_range(self) -> (u32, u32) {
        match self {
            ProblemId::AllenCahn => (8, 13),
            ProblemId::Wind => (3, 8),
            ProblemId::Nls => (2, 7),
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "allen_cahn" => Ok(ProblemId::AllenCahn),
            "wind" => Ok(ProblemId::Wind),
            "nls" => Ok(ProblemId::Nls),
            _ => Err(Error::Config(format!("unknown problem '{s}'"))),
        }
    }
}

/// How the Dirichlet values `u(±1) = ±1` enter the split `M y + f(y)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySplit {
    /// State `w = u − x` on the interior nodes. The linear profile `x` carries the
    /// boundary values and has `u_xx = 0`, so `f(w) = (w + x) − (w + x)³` has no
    /// constant forcing.
    #[default]
    Lifted,
    /// State `u` on the interior nodes with the constant boundary flux added to `f`.
    Folded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllenCahnConfig {
    pub n: usize,
    pub epsilon: f64,
    pub t_end: f64,
    #[serde(default)]
    pub split: BoundarySplit,
}

impl Default for AllenCahnConfig {
    fn default() -> Self {
        AllenCahnConfig {
            n: 32,
            epsilon: 0.01,
            t_end: 1.0,
            split: BoundarySplit::Lifted,
        }
    }
}

impl AllenCahnConfig {
    /// Added to the state to recover `u` at the interior nodes.
    pub fn state_offset(&self) -> Result<Vec<f64>> {
        let (_, x) = cheb(self.n)?;
        Ok(match self.split {
            BoundarySplit::Lifted => x[1..self.n].to_vec(),
            BoundarySplit::Folded => vec![0.0; self.n - 1],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindConfig {
    pub zeta: f64,
    pub lambda: f64,
    pub y0: [f64; 2],
    pub t_end: f64,
}

impl Default for WindConfig {
    fn default() -> Self {
        WindConfig {
            zeta: 0.2,
            lambda: 2.0,
            y0: [0.5, 0.5],
            t_end: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NlsConfig {
    pub n: usize,
    pub length: f64,
    pub t_end: f64,
}

impl Default for NlsConfig {
    fn default() -> Self {
        NlsConfig {
            n: 64,
            length: 4.0 * 2f64.sqrt() * PI,
            t_end: 1.0,
        }
    }
}

impl NlsConfig {
    pub fn mu(&self) -> f64 {
        2.0 * PI / self.length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "snake_case")]
pub enum ProblemConfig {
    AllenCahn(AllenCahnConfig),
    Wind(WindConfig),
    Nls(NlsConfig),
}

impl ProblemConfig {
    pub fn default_for(id: ProblemId) -> Self {
        match id {
            ProblemId::AllenCahn => ProblemConfig::AllenCahn(AllenCahnConfig::default()),
            ProblemId::Wind => ProblemConfig::Wind(WindConfig::default()),
            ProblemId::Nls => ProblemConfig::Nls(NlsConfig::default()),
        }
    }

    pub fn id(&self) -> ProblemId {
        match self {
            ProblemConfig::AllenCahn(_) => ProblemId::AllenCahn,
            ProblemConfig::Wind(_) => ProblemId::Wind,
            ProblemConfig::Nls(_) => ProblemId::Nls,
        }
    }
}

/// A benchmark configuration, optionally with `f` suppressed for exactness checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub config: ProblemConfig,
    #[serde(default)]
    pub linear_only: bool,
}

impl Problem {
    pub fn new(config: ProblemConfig) -> Self {
        Problem {
            config,
            linear_only: false,
        }
    }

    pub fn default_for(id: ProblemId) -> Self {
        Problem::new(ProblemConfig::default_for(id))
    }

    pub fn linear_only(mut self) -> Self {
        self.linear_only = true;
        self
    }

    pub fn id(&self) -> ProblemId {
        self.config.id()
    }

    pub fn build(&self) -> Result<SemiLinearSystem> {
        let sys = match &self.config {
            ProblemConfig::AllenCahn(c) => build_allen_cahn(c)?,
            ProblemConfig::Wind(c) => build_wind(c)?,
            ProblemConfig::Nls(c) => build_nls(c)?,
        };
        Ok(if self.linear_only {
            sys.linear_only()
        } else {
            sys
        })
    }

    /// Hex SHA-256 of the canonical JSON form; keys the reference cache.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// `u − u³ + b` with `u = y + shift`.
struct AllenCahnNonlinearity {
    shift: Vec<f64>,
    boundary: Vec<f64>,
}

impl Nonlinearity for AllenCahnNonlinearity {
    fn eval(&self, y: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let u = y[i] + self.shift[i];
            *o = u - u * u * u + self.boundary[i];
        }
    }

    fn jvp(&self, y: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        for (i, o) in out.iter_mut().enumerate() {
            let u = y[i] + self.shift[i];
            *o = (1.0 - 3.0 * u * u) * v[i];
        }
        Ok(())
    }
}

/// `u_t = ε u_xx + u − u³` on `[−1, 1]` with `u(±1) = ±1`, collocated on the
/// interior Chebyshev nodes. See [`BoundarySplit`] for the two state choices.
pub fn build_allen_cahn(cfg: &AllenCahnConfig) -> Result<SemiLinearSystem> {
    if cfg.n < 2 {
        return Err(Error::Config("Allen–Cahn needs N >= 2".into()));
    }
    let n = cfg.n;
    let (d, x) = cheb(n)?;
    let d2 = d.matmul(&d);
    let dim = n - 1;
    let m = DenseMatrix::from_fn(dim, dim, |i, j| cfg.epsilon * d2[(i + 1, j + 1)]);
    let shift = cfg.state_offset()?;
    let boundary: Vec<f64> = match cfg.split {
        BoundarySplit::Lifted => vec![0.0; dim],
        // u(x_0 = 1) = 1, u(x_N = -1) = -1
        BoundarySplit::Folded => (1..n)
            .map(|i| cfg.epsilon * (d2[(i, 0)] - d2[(i, n)]))
            .collect(),
    };
    let y0: Vec<f64> = (1..n)
        .map(|i| allen_cahn_initial(x[i]) - shift[i - 1])
        .collect();
    SemiLinearSystem::new(
        m,
        Arc::new(AllenCahnNonlinearity { shift, boundary }),
        y0,
        0.0,
        cfg.t_end,
    )
}

pub fn allen_cahn_initial(x: f64) -> f64 {
    0.53 * x + 0.47 * (-1.5 * PI * x).sin()
}

struct WindNonlinearity;

impl Nonlinearity for WindNonlinearity {
    fn eval(&self, y: &[f64], out: &mut [f64]) {
        out[0] = y[0] * y[1];
        out[1] = 0.5 * (y[0] * y[0] - y[1] * y[1]);
    }

    fn jvp(&self, y: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        // J = [[x2, x1], [x1, -x2]]
        out[0] = y[1] * v[0] + y[0] * v[1];
        out[1] = y[0] * v[0] - y[1] * v[1];
        Ok(())
    }
}

/// Averaged system in wind-induced oscillation.
pub fn build_wind(cfg: &WindConfig) -> Result<SemiLinearSystem> {
    if !(cfg.zeta >= 0.0) {
        return Err(Error::Config(format!(
            "damping must be non-negative, got {}",
            cfg.zeta
        )));
    }
    let m = DenseMatrix::from_rows(&[&[-cfg.zeta, -cfg.lambda], &[cfg.lambda, -cfg.zeta]]);
    SemiLinearSystem::new(
        m,
        Arc::new(WindNonlinearity),
        cfg.y0.to_vec(),
        0.0,
        cfg.t_end,
    )
}

struct NlsNonlinearity {
    n: usize,
}

impl Nonlinearity for NlsNonlinearity {
    fn eval(&self, y: &[f64], out: &mut [f64]) {
        let (p, q) = y.split_at(self.n);
        let (o1, o2) = out.split_at_mut(self.n);
        for j in 0..self.n {
            let r = p[j] * p[j] + q[j] * q[j];
            o1[j] = -2.0 * r * q[j];
            o2[j] = 2.0 * r * p[j];
        }
    }

    fn jvp(&self, y: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        let (p, q) = y.split_at(self.n);
        let (dp, dq) = v.split_at(self.n);
        let (o1, o2) = out.split_at_mut(self.n);
        for j in 0..self.n {
            let (pj, qj) = (p[j], q[j]);
            let pq = pj * qj;
            o1[j] = -4.0 * pq * dp[j] - 2.0 * (pj * pj + 3.0 * qj * qj) * dq[j];
            o2[j] = 2.0 * (3.0 * pj * pj + qj * qj) * dp[j] + 4.0 * pq * dq[j];
        }
        Ok(())
    }
}

/// Cubic NLS `iψ_t + ψ_xx + 2|ψ|²ψ = 0` split into real and imaginary parts
/// `(p, q)` on a periodic pseudospectral grid.
pub fn build_nls(cfg: &NlsConfig) -> Result<SemiLinearSystem> {
    let n = cfg.n;
    let d2 = fourier_d2(n, cfg.length)?;
    let mut m = DenseMatrix::zeros(2 * n, 2 * n);
    m.set_block(0, n, &d2.scaled(-1.0));
    m.set_block(n, 0, &d2);
    let mu = cfg.mu();
    let dx = cfg.length / n as f64;
    let mut y0 = vec![0.0; 2 * n];
    for (j, p) in y0.iter_mut().take(n).enumerate() {
        *p = 0.5 + 0.025 * (mu * j as f64 * dx).cos();
    }
    SemiLinearSystem::new(m, Arc::new(NlsNonlinearity { n }), y0, 0.0, cfg.t_end)
}
