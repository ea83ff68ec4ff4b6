use std::io::{self, Write};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use super::{method_slopes, ConvergenceRecord, ExperimentPlan, MethodSlope};
use crate::adaptive::{integrate_adaptive, AdaptiveRun, ControllerConfig, Verdict};
use crate::error::{Error, Result};
use crate::expkernels::ExpCache;
use crate::integrators::{
    integrate_fixed_into, max_diff, method_spec, step_count, MethodId, SemiLinearSystem,
    WorkCounters,
};
use crate::problems::{Problem, Reference, ReferenceOracle};

struct CellRun {
    ge: f64,
    steps: u64,
    work: WorkCounters,
}

/// Integrates one cell from scratch, cache construction included. A blow-up
/// yields `ge = inf` and keeps the work done up to that point.
fn integrate_cell(
    method: MethodId,
    sys: &SemiLinearSystem,
    h: f64,
    reference: &[f64],
) -> Result<CellRun> {
    let spec = method_spec(method);
    let steps = step_count(sys.t0, sys.t_end, h)? as u64;
    let mut cache = ExpCache::new(Arc::clone(&sys.m), h)?;
    let mut work = WorkCounters::default();
    let ge = match integrate_fixed_into(&spec, sys, h, &mut cache, &mut work) {
        Ok((y, _)) => {
            let e = max_diff(&y, reference);
            if e.is_finite() {
                e
            } else {
                f64::INFINITY
            }
        }
        Err(Error::BlowUp { .. }) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    Ok(CellRun { ge, steps, work })
}

fn record(
    problem: &Problem,
    method: MethodId,
    h: f64,
    cpu_ns: u64,
    run: &CellRun,
) -> ConvergenceRecord {
    ConvergenceRecord {
        problem: problem.id(),
        method,
        h,
        ge_max: run.ge,
        cpu_ns: cpu_ns.max(1),
        n_steps: run.steps,
        n_f_evals: run.work.f_evals,
        n_matvec: run.work.total_matvecs(),
        n_exp_builds: run.work.exp_builds,
    }
}

fn elapsed_ns(start: Instant) -> u64 {
    u64::try_from(start.elapsed().as_nanos()).unwrap_or(u64::MAX)
}

/// A single timed cell.
pub fn run_cell(
    problem: &Problem,
    sys: &SemiLinearSystem,
    method: MethodId,
    h: f64,
    reference: &[f64],
) -> Result<ConvergenceRecord> {
    let start = Instant::now();
    let run = integrate_cell(method, sys, h, reference)?;
    let ns = elapsed_ns(start);
    Ok(record(problem, method, h, ns, &run))
}

/// The rows of a sweep together with the reference they were measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub records: Vec<ConvergenceRecord>,
    pub reference: Reference,
}

impl Sweep {
    pub fn slopes(&self) -> Vec<MethodSlope> {
        method_slopes(&self.records, Some(&self.reference))
    }
}

/// Accuracy sweep. Cells run in parallel, each with its own cache; rows come
/// back ordered by method, then by increasing `k`.
pub fn run_convergence(plan: &ExperimentPlan, oracle: &ReferenceOracle) -> Result<Sweep> {
    plan.validate()?;
    let sys = plan.problem.build()?;
    let reference = oracle.reference(&plan.problem, plan.h_min())?;
    let cells: Vec<(MethodId, f64)> = plan
        .methods
        .iter()
        .flat_map(|&m| plan.stepsizes().into_iter().map(move |h| (m, h)))
        .collect();
    let records = cells
        .par_iter()
        .map(|&(m, h)| run_cell(&plan.problem, &sys, m, h, &reference.y))
        .collect::<Result<Vec<_>>>()?;
    Ok(Sweep { records, reference })
}

/// Median of the raw timings (mean of the two middle values for an even count).
pub fn median_ns(samples: &[u64]) -> u64 {
    assert!(!samples.is_empty(), "median of no samples");
    let mut s = samples.to_vec();
    s.sort_unstable();
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        ((s[n / 2 - 1] as u128 + s[n / 2] as u128) / 2) as u64
    }
}

/// Timing sweep. Cells run one after another; each is run once untimed, then
/// `reps` timed times, and `cpu_ns` is the median. The reference is computed
/// before any timing starts.
pub fn run_efficiency(plan: &ExperimentPlan, oracle: &ReferenceOracle) -> Result<Sweep> {
    plan.validate()?;
    if plan.reps < 5 {
        return Err(Error::Config(format!(
            "efficiency runs need at least 5 repetitions, got {}",
            plan.reps
        )));
    }
    let sys = plan.problem.build()?;
    let reference = oracle.reference(&plan.problem, plan.h_min())?;
    let mut out = Vec::new();
    for &m in &plan.methods {
        for h in plan.stepsizes() {
            let warm = integrate_cell(m, &sys, h, &reference.y)?;
            let mut samples = Vec::with_capacity(plan.reps);
            for _ in 0..plan.reps {
                let start = Instant::now();
                let run = integrate_cell(m, &sys, h, &reference.y)?;
                samples.push(elapsed_ns(start));
                debug_assert_eq!(run.ge.to_bits(), warm.ge.to_bits());
            }
            out.push(record(&plan.problem, m, h, median_ns(&samples), &warm));
        }
    }
    Ok(Sweep {
        records: out,
        reference,
    })
}

/// An adaptive run with its final error against the oracle.
#[derive(Debug, Clone)]
pub struct AdaptiveReport {
    pub run: AdaptiveRun,
    pub config: ControllerConfig,
    /// Max-norm error at `t_end`; `None` after early termination.
    pub final_ge: Option<f64>,
}

impl AdaptiveReport {
    pub fn terminated_early(&self) -> bool {
        self.run.early_termination.is_some()
    }

    pub fn summary(&self) -> String {
        let s = &self.run.stats;
        let ge = self
            .final_ge
            .map_or_else(|| "n/a".to_string(), |g| format!("{g:e}"));
        format!(
            "accepts={} rejects={} cache_rebuilds={} exp_builds={} final_t={} final_ge={} terminated={}",
            s.accepts,
            s.rejects,
            s.cache_rebuilds,
            s.work.exp_builds,
            self.run.final_time(),
            ge,
            self.terminated_early()
        )
    }
}

/// Adaptive integration over the problem's horizon. The reference uses the
/// oracle with the problem's finest default stepsize.
pub fn run_adaptive(
    problem: &Problem,
    config: &ControllerConfig,
    oracle: &ReferenceOracle,
) -> Result<AdaptiveReport> {
    config.validate()?;
    let sys = problem.build()?;
    let run = integrate_adaptive(&sys, config)?;
    let final_ge = if run.early_termination.is_none() {
        let (_, kmax) = problem.id().default_k_range();
        let reference = oracle.reference(problem, 0.5f64.powi(kmax as i32))?;
        Some(max_diff(run.final_state(), &reference.y))
    } else {
        None
    };
    Ok(AdaptiveReport {
        run,
        config: *config,
        final_ge,
    })
}

pub const TRACE_HEADER: &str = "t,h,est,verdict";

pub fn write_trace_csv<W: Write>(mut w: W, run: &AdaptiveRun) -> io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in &run.trace {
        writeln!(w, "{},{},{:e},{}", r.t, r.h, r.est, r.verdict)?;
    }
    w.flush()
}

/// Controller contract violations found in a trace: accepted rows above the
/// tolerance, stepsizes above `maxh`, and consecutive attempts whose ratio leaves
/// `[0.1, 2]`. Attempts shortened to land on the end point are not transitions.
pub fn trace_violations(run: &AdaptiveRun, cfg: &ControllerConfig) -> Vec<String> {
    let mut v = Vec::new();
    for (i, r) in run.trace.iter().enumerate() {
        if r.verdict == Verdict::Accepted && r.est > cfg.tolerance {
            v.push(format!(
                "row {i}: accepted with est {:e} > {:e}",
                r.est, cfg.tolerance
            ));
        }
        if r.h > cfg.maxh {
            v.push(format!("row {i}: h = {} above maxh", r.h));
        }
    }
    for (i, w) in run.trace.windows(2).enumerate() {
        if w[1].truncated {
            continue;
        }
        let ratio = w[1].h / w[0].h;
        if !(0.1 * (1.0 - 1e-12)..=2.0 * (1.0 + 1e-12)).contains(&ratio) {
            v.push(format!("rows {i}->{}: h ratio {ratio}", i + 1));
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{ProblemConfig, ProblemId, WindConfig};

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median_ns(&[5, 1, 9, 3, 7]), 5);
        assert_eq!(median_ns(&[4, 1, 3, 2]), 2);
    }

    fn short_wind() -> Problem {
        Problem::new(ProblemConfig::Wind(WindConfig {
            t_end: 1.0,
            ..Default::default()
        }))
    }

    #[test]
    fn convergence_rows_are_ordered_and_deterministic() {
        let plan = ExperimentPlan {
            problem: short_wind(),
            methods: vec![MethodId::Mverk1, MethodId::Mverk2_1],
            kmin: 3,
            kmax: 6,
            reps: 5,
        };
        let oracle = ReferenceOracle::in_memory();
        let a = run_convergence(&plan, &oracle).unwrap().records;
        let b = run_convergence(&plan, &oracle).unwrap().records;
        assert_eq!(a.len(), 8);
        assert_eq!(a[0].method, MethodId::Mverk1);
        assert_eq!(a[0].h, 0.125);
        assert_eq!(a[7].h, 1.0 / 64.0);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.ge_max.to_bits(), y.ge_max.to_bits());
            assert_eq!(
                (x.n_steps, x.n_f_evals, x.n_matvec, x.n_exp_builds),
                (y.n_steps, y.n_f_evals, y.n_matvec, y.n_exp_builds)
            );
        }
        // MVERK1: one f, one exponential product per step, one build
        assert_eq!(a[0].n_steps, 8);
        assert_eq!(
            (a[0].n_f_evals, a[0].n_matvec, a[0].n_exp_builds),
            (8, 8, 1)
        );
        let slopes = crate::harness::method_slopes(&a, None);
        assert!(slopes[0].within(0.3), "{slopes:?}");
        assert!(slopes[1].within(0.3), "{slopes:?}");
    }

    #[test]
    fn linear_only_plan_is_exact() {
        let plan = ExperimentPlan {
            problem: short_wind().linear_only(),
            methods: MethodId::ALL.to_vec(),
            kmin: 2,
            kmax: 4,
            reps: 5,
        };
        for r in run_convergence(&plan, &ReferenceOracle::in_memory())
            .unwrap()
            .records
        {
            assert!(r.ge_max <= 1e-11, "{r:?}");
        }
    }

    #[test]
    fn efficiency_needs_five_reps() {
        let mut plan = ExperimentPlan::default_for(ProblemId::Wind);
        plan.reps = 3;
        assert!(matches!(
            run_efficiency(&plan, &ReferenceOracle::in_memory()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn efficiency_rows_match_convergence_rows() {
        let plan = ExperimentPlan {
            problem: short_wind(),
            methods: vec![MethodId::EEuler],
            kmin: 5,
            kmax: 6,
            reps: 5,
        };
        let oracle = ReferenceOracle::in_memory();
        let c = run_convergence(&plan, &oracle).unwrap().records;
        let e = run_efficiency(&plan, &oracle).unwrap().records;
        for (x, y) in c.iter().zip(&e) {
            assert_eq!(x.ge_max.to_bits(), y.ge_max.to_bits());
            assert_eq!(y.n_exp_builds, 2);
            assert!(y.cpu_ns > 0);
        }
    }

    #[test]
    fn adaptive_trace_on_short_wind() {
        let cfg = ControllerConfig::new(1e-3, 0.1, 1.0, 1e-8).unwrap();
        let rep = run_adaptive(&short_wind(), &cfg, &ReferenceOracle::in_memory()).unwrap();
        assert!(!rep.terminated_early());
        assert!(trace_violations(&rep.run, &cfg).is_empty());
        assert!(rep.final_ge.unwrap() <= 100.0 * cfg.tolerance);
        let mut out = Vec::new();
        write_trace_csv(&mut out, &rep.run).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("t,h,est,verdict\n0,0.1,"));
        assert_eq!(text.lines().count(), rep.run.trace.len() + 1);
    }
}
