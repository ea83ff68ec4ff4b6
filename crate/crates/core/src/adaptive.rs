//! Variable stepsize control with the embedded pair (modified exponential Euler,
//! two-stage MVERK of Heun type).
//!
//! The error estimate is `‖ỹ − y‖∞ / h`, a local error per unit step. A step is
//! accepted when the estimate is at most `ε`, and the same `h` is kept for the
//! next step. On rejection the step is retried with `q h`, `q = ε h / (2‖ỹ − y‖∞)`,
//! where `q` is clamped to `[0.1, 2]` and the result capped by `maxh`. A proposed
//! stepsize below `minih` stops the integration.

use std::fmt;
use std::sync::Arc;

use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expkernels::{ExpCache, MatrixFunction};
use crate::integrators::{max_diff, SemiLinearSystem, WorkCounters};
use crate::Rational;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Bound on the local error per unit step (max norm).
    pub tolerance: f64,
    pub h0: f64,
    pub maxh: f64,
    pub minih: f64,
}

impl ControllerConfig {
    pub fn new(tolerance: f64, h0: f64, maxh: f64, minih: f64) -> Result<Self> {
        let cfg = ControllerConfig {
            tolerance,
            h0,
            maxh,
            minih,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if !(0.0 < self.minih && self.minih <= self.h0 && self.h0 <= self.maxh) {
            return Err(Error::Config(format!(
                "need 0 < minih <= h0 <= maxh, got minih = {}, h0 = {}, maxh = {}",
                self.minih, self.h0, self.maxh
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accepted,
    Rejected,
    Terminated,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Accepted => "accepted",
            Verdict::Rejected => "rejected",
            Verdict::Terminated => "terminated",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDecision {
    pub verdict: Verdict,
    pub h_next: f64,
    pub estimate: f64,
}

/// Accept/reject decision for an attempted step of size `h` with estimate `est`.
pub fn control(est: f64, h: f64, cfg: &ControllerConfig) -> StepDecision {
    if est <= cfg.tolerance {
        return StepDecision {
            verdict: Verdict::Accepted,
            h_next: h.min(cfg.maxh),
            estimate: est,
        };
    }
    // q = ε h / (2‖ỹ − y‖) = ε / (2 est)
    let q = (cfg.tolerance / (2.0 * est)).clamp(0.1, 2.0);
    let h_next = (q * h).min(cfg.maxh);
    let verdict = if h_next < cfg.minih {
        Verdict::Terminated
    } else {
        Verdict::Rejected
    };
    StepDecision {
        verdict,
        h_next,
        estimate: est,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedStep {
    /// First-order (modified exponential Euler) result.
    pub y_low: Vec<f64>,
    /// Second-order (MVERK2_1) result.
    pub y_high: Vec<f64>,
    pub est: f64,
    pub work: WorkCounters,
}

/// Both members of the pair from `(t, y)`, sharing one product `e^{hM} y`.
pub fn embedded_step(
    sys: &SemiLinearSystem,
    t: f64,
    y: &[f64],
    h: f64,
    cache: &mut ExpCache,
) -> Result<EmbeddedStep> {
    if !cache.is_valid_for(&sys.m, h) {
        return Err(Error::Config(format!(
            "cache built for h = {} used with h = {h}",
            cache.stepsize()
        )));
    }
    let before = cache.builds();
    let one = Rational::one();
    cache.ensure(MatrixFunction::Exp, one)?;
    let mut work = WorkCounters {
        exp_builds: cache.builds() - before,
        ..Default::default()
    };

    let ey = cache
        .apply(MatrixFunction::Exp, one, y)
        .expect("just ensured");
    work.exp_matvecs += 1;
    let f0 = sys.eval_f(y);
    work.f_evals += 1;

    let y_low: Vec<f64> = ey.iter().zip(&f0).map(|(e, f)| e + h * f).collect();

    let my = sys.m.matvec(y);
    let y2: Vec<f64> = (0..y.len()).map(|i| y[i] + h * (my[i] + f0[i])).collect();
    let f2 = sys.eval_f(&y2);
    let mf0 = sys.m.matvec(&f0);
    work.f_evals += 1;
    work.matvecs += 2;
    let y_high: Vec<f64> = (0..y.len())
        .map(|i| ey[i] + 0.5 * h * (f0[i] + f2[i]) + 0.5 * h * h * mf0[i])
        .collect();

    if !y_low.iter().chain(&y_high).all(|v| v.is_finite()) {
        return Err(Error::BlowUp { t: t + h });
    }
    let est = max_diff(&y_high, &y_low) / h;
    Ok(EmbeddedStep {
        y_low,
        y_high,
        est,
        work,
    })
}

/// One attempted step in an adaptive run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub h: f64,
    pub est: f64,
    pub verdict: Verdict,
    pub h_next: f64,
    /// The attempt was shortened to land on the end of the interval.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveStats {
    pub accepts: u64,
    pub rejects: u64,
    /// Cache rebuilds caused by a change of the controller stepsize.
    pub cache_rebuilds: u64,
    /// Short-lived caches for the final, shortened step.
    pub transient_caches: u64,
    pub work: WorkCounters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveRun {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub trace: Vec<TraceRow>,
    pub stats: AdaptiveStats,
    /// Set when the controller asked for a stepsize below `minih`: `(t, y)` reached.
    pub early_termination: Option<(f64, Vec<f64>)>,
}

impl AdaptiveRun {
    pub fn final_state(&self) -> &[f64] {
        self.states
            .last()
            .expect("trajectory holds the initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self
            .times
            .last()
            .expect("trajectory holds the initial time")
    }
}

/// Integrates over the system's interval with the embedded pair, advancing the
/// first-order solution. The last step is shortened to land exactly on `t_end`.
pub fn integrate_adaptive(sys: &SemiLinearSystem, cfg: &ControllerConfig) -> Result<AdaptiveRun> {
    cfg.validate()?;
    let t_end = sys.t_end;
    let mut t = sys.t0;
    let mut y = sys.y0.clone();
    let mut h = cfg.h0.min(cfg.maxh);
    let mut cache = ExpCache::new(Arc::clone(&sys.m), h)?;
    let mut run = AdaptiveRun {
        times: vec![t],
        states: vec![y.clone()],
        trace: Vec::new(),
        stats: AdaptiveStats::default(),
        early_termination: None,
    };
    let eps_t = 1e-13 * t_end.abs().max(1.0);

    while t_end - t > eps_t {
        let remaining = t_end - t;
        let lands = h >= remaining - eps_t;
        let h_try = if lands { remaining } else { h };
        let truncated = lands && h_try != h;

        let step = if truncated {
            let mut transient = ExpCache::new(Arc::clone(&sys.m), h_try)?;
            run.stats.transient_caches += 1;
            embedded_step(sys, t, &y, h_try, &mut transient)?
        } else {
            if cache.stepsize() != h {
                cache.reset(h)?;
                run.stats.cache_rebuilds += 1;
            }
            embedded_step(sys, t, &y, h_try, &mut cache)?
        };
        run.stats.work += step.work;

        let decision = control(step.est, h_try, cfg);
        run.trace.push(TraceRow {
            t,
            h: h_try,
            est: step.est,
            verdict: decision.verdict,
            h_next: decision.h_next,
            truncated,
        });
        match decision.verdict {
            Verdict::Accepted => {
                run.stats.accepts += 1;
                t = if lands { t_end } else { t + h_try };
                y = step.y_low;
                run.times.push(t);
                run.states.push(y.clone());
                if !truncated {
                    h = decision.h_next;
                }
            }
            Verdict::Rejected => {
                run.stats.rejects += 1;
                h = decision.h_next;
            }
            Verdict::Terminated => {
                run.stats.rejects += 1;
                run.early_termination = Some((t, y.clone()));
                break;
            }
        }
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expkernels::DenseMatrix;
    use crate::integrators::{FnNonlinearity, ZeroNonlinearity};

    fn cfg(eps: f64) -> ControllerConfig {
        ControllerConfig::new(eps, 0.1, 1.0, 1e-8).unwrap()
    }

    #[test]
    fn accept_keeps_stepsize() {
        let c = cfg(1e-3);
        let d = control(0.5e-3, 0.1, &c);
        assert_eq!(d.verdict, Verdict::Accepted);
        assert_eq!(d.h_next, 0.1);
    }

    #[test]
    fn large_estimate_shrinks_by_ten() {
        let c = cfg(1e-3);
        let d = control(1e-2, 0.1, &c);
        assert_eq!(d.verdict, Verdict::Rejected);
        assert!((d.h_next - 0.01).abs() < 1e-17);
    }

    #[test]
    fn moderate_estimate_uses_q() {
        let c = cfg(1e-3);
        let d = control(1.25e-3, 0.1, &c);
        assert_eq!(d.verdict, Verdict::Rejected);
        assert!((d.h_next - 0.04).abs() < 1e-15, "{}", d.h_next);
    }

    #[test]
    fn tiny_proposal_terminates() {
        let c = ControllerConfig::new(1e-3, 1e-7, 1.0, 5e-8).unwrap();
        let d = control(1.0, 1e-7, &c);
        assert_eq!(d.verdict, Verdict::Terminated);
        assert!(d.h_next < c.minih);
    }

    #[test]
    fn accept_respects_maxh() {
        let c = ControllerConfig::new(1e-3, 0.1, 0.2, 1e-8).unwrap();
        assert_eq!(control(0.0, 0.5, &c).h_next, 0.2);
    }

    #[test]
    fn config_validation() {
        assert!(ControllerConfig::new(0.0, 0.1, 1.0, 1e-8).is_err());
        assert!(ControllerConfig::new(1e-3, 2.0, 1.0, 1e-8).is_err());
        assert!(ControllerConfig::new(1e-3, 1e-9, 1.0, 1e-8).is_err());
    }

    #[test]
    fn euler_vs_heun_on_growth() {
        // M = 0, f(y) = y, y = 1, h = 0.1
        let sys = SemiLinearSystem::new(
            DenseMatrix::zeros(1, 1),
            Arc::new(FnNonlinearity::new(|y, out| out.copy_from_slice(y))),
            vec![1.0],
            0.0,
            1.0,
        )
        .unwrap();
        let mut cache = ExpCache::new(sys.m.clone(), 0.1).unwrap();
        let s = embedded_step(&sys, 0.0, &[1.0], 0.1, &mut cache).unwrap();
        assert!((s.y_low[0] - 1.1).abs() < 1e-15);
        assert!((s.y_high[0] - 1.105).abs() < 1e-15);
        assert!((s.est - 0.05).abs() < 1e-13);
    }

    #[test]
    fn linear_problem_never_rejects() {
        let m = DenseMatrix::from_rows(&[&[-0.2, -2.0], &[2.0, -0.2]]);
        let sys =
            SemiLinearSystem::new(m, Arc::new(ZeroNonlinearity), vec![0.5, 0.5], 0.0, 1.0).unwrap();
        let c = ControllerConfig::new(1e-6, 0.125, 1.0, 1e-8).unwrap();
        let run = integrate_adaptive(&sys, &c).unwrap();
        assert_eq!(run.stats.rejects, 0);
        assert_eq!(run.stats.accepts, 8);
        assert!(run.trace.iter().all(|r| r.h == 0.125 && r.est == 0.0));
        let exact = crate::expkernels::expm(&sys.m).unwrap().matvec(&sys.y0);
        assert!(max_diff(run.final_state(), &exact) < 1e-13);
        assert_eq!(run.final_time(), 1.0);
    }

    #[test]
    fn last_step_is_truncated_onto_the_end() {
        let m = DenseMatrix::from_rows(&[&[-1.0]]);
        let sys =
            SemiLinearSystem::new(m, Arc::new(ZeroNonlinearity), vec![1.0], 0.0, 1.0).unwrap();
        let c = ControllerConfig::new(1e-6, 0.3, 1.0, 1e-8).unwrap();
        let run = integrate_adaptive(&sys, &c).unwrap();
        let last = run.trace.last().unwrap();
        assert!(last.truncated);
        assert!((last.h - 0.1).abs() < 1e-12);
        assert_eq!(run.final_time(), 1.0);
        assert_eq!(run.stats.transient_caches, 1);
        assert!((run.final_state()[0] - (-1f64).exp()).abs() < 1e-14);
    }
}
