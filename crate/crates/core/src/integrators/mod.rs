//! MVERK and SVERK schemes, the exponential Euler / ERK baselines, and
//! the fixed-step driver.
//!
//! MVERK methods keep classical internal stages and use `e^{hM}` once, in the
//! update. SVERK methods start each internal stage from `e^{c_i h M} y0` but keep
//! scalar coefficients. Both add a correction term that vanishes as `M → 0`.

mod methods;
mod step;
mod system;
mod work;

pub use methods::{
    method_spec, order_residuals, Coefficients, Correction, Family, MethodId, MethodSpec,
    PhiCombination, PhiTerm, StagePattern,
};
pub use step::{
    correction_term, integrate_fixed, integrate_fixed_into, prepare_cache, step, step_count,
    FixedRun,
};
pub use system::{
    max_diff, max_norm, FnNonlinearity, Nonlinearity, SemiLinearSystem, ZeroNonlinearity,
};
pub use work::{StepOutcome, WorkCounters};
