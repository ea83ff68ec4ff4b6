use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

/// Exact event counts for one step or one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkCounters {
    pub f_evals: u64,
    pub jvp_calls: u64,
    /// Products with the linear operator `M`.
    pub matvecs: u64,
    /// Products with a cached matrix function (`e^{chM}` or `φ_k(chM)`).
    pub exp_matvecs: u64,
    /// Matrix functions computed.
    pub exp_builds: u64,
}

impl WorkCounters {
    /// All dense matrix-vector products, whatever the matrix.
    pub fn total_matvecs(&self) -> u64 {
        self.matvecs + self.exp_matvecs
    }
}

impl AddAssign for WorkCounters {
    fn add_assign(&mut self, o: Self) {
        self.f_evals += o.f_evals;
        self.jvp_calls += o.jvp_calls;
        self.matvecs += o.matvecs;
        self.exp_matvecs += o.exp_matvecs;
        self.exp_builds += o.exp_builds;
    }
}

impl Add for WorkCounters {
    type Output = Self;

    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

/// Result of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub y1: Vec<f64>,
    pub err_estimate: Option<Vec<f64>>,
    pub work: WorkCounters,
}
