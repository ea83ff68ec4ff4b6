//! Experiment plans, CSV records, slope fitting and the verification suites
//! behind the `xrk` command line tool.

mod runs;
mod verify;

use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrators::MethodId;
use crate::problems::{Problem, ProblemId, Reference};

pub use runs::{
    median_ns, run_adaptive, run_cell, run_convergence, run_efficiency, trace_violations,
    write_trace_csv, AdaptiveReport, Sweep, TRACE_HEADER,
};
pub use verify::{
    classical_rk_step, describe_slope, run_verify, suite_a_stability, suite_classical_reduction,
    suite_homogeneous, suite_jvp_consistency, suite_order_residuals, suite_slopes, Claim,
    ClassicalRk, VerifyOptions, VerifyReport, REDUCTIONS,
};

/// Bit-exact header of the convergence/efficiency CSV.
pub const CSV_HEADER: &str =
    "problem,method,h,ge_max,cpu_ns,n_steps,n_f_evals,n_matvec,n_exp_builds";

/// A sweep over `h = 2^-k`, `k = kmin..=kmax`, for a list of methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub problem: Problem,
    pub methods: Vec<MethodId>,
    pub kmin: u32,
    pub kmax: u32,
    /// Timed repetitions per cell (efficiency runs only).
    pub reps: usize,
}

impl ExperimentPlan {
    /// All methods over the problem's default k-range.
    pub fn default_for(id: ProblemId) -> Self {
        let (kmin, kmax) = id.default_k_range();
        ExperimentPlan {
            problem: Problem::default_for(id),
            methods: MethodId::ALL.to_vec(),
            kmin,
            kmax,
            reps: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("plan has no methods".into()));
        }
        if self.kmin > self.kmax {
            return Err(Error::Config(format!(
                "empty k-range {}..{}",
                self.kmin, self.kmax
            )));
        }
        if self.kmax > 40 {
            return Err(Error::Config(format!("kmax = {} is too large", self.kmax)));
        }
        Ok(())
    }

    pub fn stepsizes(&self) -> Vec<f64> {
        (self.kmin..=self.kmax)
            .map(|k| 0.5f64.powi(k as i32))
            .collect()
    }

    pub fn h_min(&self) -> f64 {
        0.5f64.powi(self.kmax as i32)
    }
}

/// One (problem, method, h) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub problem: ProblemId,
    pub method: MethodId,
    pub h: f64,
    /// Max-norm global error at the end of the horizon; `inf` after a blow-up.
    pub ge_max: f64,
    pub cpu_ns: u64,
    pub n_steps: u64,
    pub n_f_evals: u64,
    /// Products with `M` plus products with cached exponential matrices.
    pub n_matvec: u64,
    pub n_exp_builds: u64,
}

impl ConvergenceRecord {
    pub fn blew_up(&self) -> bool {
        !self.ge_max.is_finite()
    }

    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        write!(
            s,
            "{},{},{},{:e},{},{},{},{},{}",
            self.problem,
            self.method,
            self.h,
            self.ge_max,
            self.cpu_ns,
            self.n_steps,
            self.n_f_evals,
            self.n_matvec,
            self.n_exp_builds
        )
        .expect("writing to a String");
        s
    }
}

pub fn write_csv<W: Write>(mut w: W, records: &[ConvergenceRecord]) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(w, "{}", r.csv_row())?;
    }
    w.flush()
}

/// Least-squares line through `(log2 h, log2 GE)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square deviation from the line, in units of log2.
    pub residual: f64,
    pub points: usize,
}

/// Fits `log2 ge = slope * log2 h + intercept`. Needs at least two distinct `h`.
pub fn fit_slope(points: &[(f64, f64)]) -> Option<SlopeFit> {
    let xy: Vec<(f64, f64)> = points.iter().map(|&(h, e)| (h.log2(), e.log2())).collect();
    let n = xy.len();
    if n < 2 {
        return None;
    }
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xy
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum();
    Some(SlopeFit {
        slope,
        intercept,
        residual: (ss / n as f64).sqrt(),
        points: n,
    })
}

/// Why a cell was left out of a slope fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exclusion {
    /// The run overflowed (`ge_max = inf`).
    BlowUp,
    /// The error is below what the reference and the arithmetic can resolve.
    Unresolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcludedCell {
    pub h: f64,
    pub ge_max: f64,
    pub reason: Exclusion,
}

/// Slope of one method's convergence cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSlope {
    pub method: MethodId,
    pub nominal_order: u32,
    /// Fit over the resolved, finite cells.
    pub fit: Option<SlopeFit>,
    /// Fit over every finite cell, resolved or not.
    pub raw_fit: Option<SlopeFit>,
    pub excluded: Vec<ExcludedCell>,
}

impl MethodSlope {
    pub fn within(&self, tol: f64) -> bool {
        self.fit
            .is_some_and(|f| (f.slope - self.nominal_order as f64).abs() <= tol)
    }
}

/// Smallest global error a cell can meaningfully report: ten times the
/// reference's self-consistency gap, or the worst-case rounding accumulated
/// over the run's steps, whichever is larger.
pub fn resolution_floor(record: &ConvergenceRecord, reference: &Reference) -> f64 {
    let scale = crate::integrators::max_norm(&reference.y).max(1.0);
    let rounding = record.n_steps as f64 * f64::EPSILON * scale;
    let gap = if reference.gap.is_finite() {
        reference.gap
    } else {
        0.0
    };
    (10.0 * gap).max(rounding)
}

/// Per-method slopes in order of first appearance. With a reference, cells at
/// or below [`resolution_floor`] are excluded; blown-up cells always are.
pub fn method_slopes(
    records: &[ConvergenceRecord],
    reference: Option<&Reference>,
) -> Vec<MethodSlope> {
    let mut methods: Vec<MethodId> = Vec::new();
    for r in records {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let mut used = Vec::new();
            let mut finite = Vec::new();
            let mut excluded = Vec::new();
            for r in records.iter().filter(|r| r.method == m) {
                if !(r.ge_max.is_finite() && r.ge_max > 0.0) {
                    excluded.push(ExcludedCell {
                        h: r.h,
                        ge_max: r.ge_max,
                        reason: if r.ge_max.is_finite() {
                            Exclusion::Unresolved
                        } else {
                            Exclusion::BlowUp
                        },
                    });
                    continue;
                }
                finite.push((r.h, r.ge_max));
                if reference.is_some_and(|re| r.ge_max <= resolution_floor(r, re)) {
                    excluded.push(ExcludedCell {
                        h: r.h,
                        ge_max: r.ge_max,
                        reason: Exclusion::Unresolved,
                    });
                } else {
                    used.push((r.h, r.ge_max));
                }
            }
            MethodSlope {
                method: m,
                nominal_order: crate::integrators::method_spec(m).order(),
                fit: fit_slope(&used),
                raw_fit: fit_slope(&finite),
                excluded,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_exact() {
        let mut out = Vec::new();
        write_csv(&mut out, &[]).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "problem,method,h,ge_max,cpu_ns,n_steps,n_f_evals,n_matvec,n_exp_builds\n"
        );
    }

    #[test]
    fn row_format_and_inf_sentinel() {
        let mut r = ConvergenceRecord {
            problem: ProblemId::Wind,
            method: MethodId::Mverk2_1,
            h: 0.125,
            ge_max: 1.5e-4,
            cpu_ns: 1200,
            n_steps: 80,
            n_f_evals: 160,
            n_matvec: 240,
            n_exp_builds: 1,
        };
        assert_eq!(r.csv_row(), "wind,MVERK2_1,0.125,1.5e-4,1200,80,160,240,1");
        r.ge_max = f64::INFINITY;
        assert!(r.csv_row().contains(",inf,"));
        assert!(r.blew_up());
    }

    #[test]
    fn exact_power_law_fits_exactly() {
        let pts: Vec<(f64, f64)> = (3..9)
            .map(|k| {
                let h = 0.5f64.powi(k);
                (h, 7.0 * h.powi(3))
            })
            .collect();
        let f = fit_slope(&pts).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-12);
        assert!((f.intercept - 7f64.log2()).abs() < 1e-12);
        assert!(f.residual < 1e-12);
        assert!(fit_slope(&pts[..1]).is_none());
        assert!(fit_slope(&[(0.5, 1.0), (0.5, 2.0)]).is_none());
    }

    #[test]
    fn plan_validation() {
        let mut p = ExperimentPlan::default_for(ProblemId::Wind);
        assert!(p.validate().is_ok());
        assert_eq!(p.stepsizes().len(), 6);
        assert_eq!(p.h_min(), 1.0 / 256.0);
        p.kmin = 9;
        assert!(p.validate().is_err());
        p.kmin = 3;
        p.methods.clear();
        assert!(p.validate().is_err());
    }

    #[test]
    fn blown_up_cells_are_excluded_from_the_fit() {
        let mk = |h: f64, ge: f64| ConvergenceRecord {
            problem: ProblemId::Nls,
            method: MethodId::Erk3,
            h,
            ge_max: ge,
            cpu_ns: 1,
            n_steps: 1,
            n_f_evals: 1,
            n_matvec: 1,
            n_exp_builds: 1,
        };
        let recs = vec![
            mk(0.25, f64::INFINITY),
            mk(0.125, 1e-3),
            mk(0.0625, 1.25e-4),
            mk(0.03125, 1.5625e-5),
        ];
        let s = &method_slopes(&recs, None)[0];
        assert_eq!(s.excluded.len(), 1);
        assert_eq!(
            (s.excluded[0].h, s.excluded[0].reason),
            (0.25, Exclusion::BlowUp)
        );
        assert!(s.within(1e-9));
        assert_eq!(s.fit.unwrap().points, 3);
    }

    #[test]
    fn cells_below_the_floor_are_excluded() {
        let mk = |k: i32, ge: f64| ConvergenceRecord {
            problem: ProblemId::AllenCahn,
            method: MethodId::Erk3,
            h: 0.5f64.powi(k),
            ge_max: ge,
            cpu_ns: 1,
            n_steps: 1 << k,
            n_f_evals: 1,
            n_matvec: 1,
            n_exp_builds: 1,
        };
        let recs = vec![
            mk(8, 1.6e-10),
            mk(9, 2e-11),
            mk(10, 2.5e-12),
            mk(11, 4e-13),
            mk(12, 3.9e-13),
        ];
        let reference = Reference {
            y: vec![0.9, -1.0],
            h_ref: 1e-6,
            gap: 9e-14,
            method: MethodId::Mverk3_2,
            from_disk: false,
        };
        // floors: 2048 u = 4.5e-13 at k = 11, 4096 u = 9.1e-13 at k = 12
        let s = &method_slopes(&recs, Some(&reference))[0];
        let dropped: Vec<f64> = s.excluded.iter().map(|e| e.h).collect();
        assert_eq!(dropped, vec![0.5f64.powi(11), 0.5f64.powi(12)]);
        assert_eq!(s.fit.unwrap().points, 3);
        assert_eq!(s.raw_fit.unwrap().points, 5);
        assert!(s.within(0.1), "{s:?}");
        assert!(!method_slopes(&recs, None)[0].within(0.3));
    }
}
