//! Explicit exponential Runge–Kutta integrators for semi-linear systems
//! `y' = M y + f(y)` whose linear part is stiff or highly oscillatory.
//!
//! * [`expkernels`]: dense `expm`, φ-functions and the per-stepsize cache.
//! * [`integrators`]: the MVERK/SVERK catalog, baselines and step evaluators.
//! * [`adaptive`]: the embedded first/second-order pair with its stepsize controller.
//! * [`problems`]: Allen–Cahn, wind-induced oscillation and NLS benchmarks, plus
//!   the certified reference oracle.
//! * [`harness`]: verification suites, convergence/efficiency sweeps and CSV output.

// `!(x > 0.0)` is used on purpose so NaN is rejected with the invalid values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Tableau loops index several arrays by stage number.
#![allow(clippy::needless_range_loop)]

pub mod adaptive;
pub mod error;
pub mod expkernels;
pub mod harness;
pub mod integrators;
pub mod problems;

pub use error::{Error, Result};

/// Exact tableau coefficients.
pub type Rational = num_rational::Ratio<i64>;
