//! Single-step evaluation for every catalog method, and the fixed-step driver.

use num_traits::{One, ToPrimitive, Zero};

use super::methods::{Coefficients, Correction, Family, MethodSpec, StagePattern};
use super::system::SemiLinearSystem;
use super::work::{StepOutcome, WorkCounters};
use crate::error::{Error, Result};
use crate::expkernels::{ExpCache, MatrixFunction};
use crate::Rational;

/// Makes sure `cache` holds every matrix function `spec` will ask for.
pub fn prepare_cache(spec: &MethodSpec, cache: &mut ExpCache) -> Result<()> {
    for (func, c) in spec.required_functions() {
        cache.ensure(func, c)?;
    }
    Ok(())
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn check_finite(v: &[f64], t: f64) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::BlowUp { t })
    }
}

/// Counts every evaluation it performs.
struct Evaluator<'a> {
    sys: &'a SemiLinearSystem,
    cache: &'a ExpCache,
    work: WorkCounters,
    exp_applied: Vec<(Rational, Vec<f64>)>,
}

impl<'a> Evaluator<'a> {
    fn new(sys: &'a SemiLinearSystem, cache: &'a ExpCache) -> Self {
        Evaluator {
            sys,
            cache,
            work: WorkCounters::default(),
            exp_applied: Vec::new(),
        }
    }

    fn f(&mut self, y: &[f64]) -> Vec<f64> {
        self.work.f_evals += 1;
        self.sys.eval_f(y)
    }

    fn m(&mut self, v: &[f64]) -> Vec<f64> {
        self.work.matvecs += 1;
        self.sys.m.matvec(v)
    }

    fn jvp(&mut self, y: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.work.jvp_calls += 1;
        self.sys.eval_jvp(y, v)
    }

    fn apply(&mut self, func: MatrixFunction, c: Rational, v: &[f64]) -> Vec<f64> {
        self.work.exp_matvecs += 1;
        self.cache
            .apply(func, c, v)
            .expect("cache prepared for every required function")
    }

    /// `e^{c h M} y0`, computed at most once per node and step.
    fn exp_times_y0(&mut self, c: Rational, y0: &[f64]) -> Vec<f64> {
        if c.is_zero() {
            return y0.to_vec();
        }
        if let Some((_, v)) = self.exp_applied.iter().find(|(node, _)| *node == c) {
            return v.clone();
        }
        let v = self.apply(MatrixFunction::Exp, c, y0);
        self.exp_applied.push((c, v.clone()));
        v
    }

    fn correction(
        &mut self,
        corr: Correction,
        h: f64,
        y0: &[f64],
        f0: &[f64],
        g0: Option<&[f64]>,
    ) -> Result<Option<Vec<f64>>> {
        let g0 = |ev: &mut Self| -> Vec<f64> {
            match g0 {
                Some(g) => g.to_vec(),
                None => {
                    let mut g = ev.m(y0);
                    axpy(1.0, f0, &mut g);
                    g
                }
            }
        };
        let out = match corr {
            Correction::None | Correction::BaselinePhi => return Ok(None),
            Correction::W2 | Correction::W2Tilde => {
                let mut w = self.m(f0);
                w.iter_mut().for_each(|x| *x *= 0.5 * h * h);
                w
            }
            Correction::W3 => {
                let g = g0(self);
                let mf0 = self.m(f0);
                let jg = self.jvp(y0, &g)?;
                let inner: Vec<f64> = f0
                    .iter()
                    .zip(&mf0)
                    .zip(&jg)
                    .map(|((f, mf), j)| 3.0 * f + h * (mf + j))
                    .collect();
                let mut w = self.m(&inner);
                w.iter_mut().for_each(|x| *x *= h * h / 6.0);
                w
            }
            Correction::W3Tilde => {
                let g = g0(self);
                let mf0 = self.m(f0);
                let mmf0 = self.m(&mf0);
                let jmf0 = self.jvp(y0, &mf0)?;
                let jg = self.jvp(y0, &g)?;
                let mjg = self.m(&jg);
                let h2 = 0.5 * h * h;
                let h3 = h * h * h / 6.0;
                (0..y0.len())
                    .map(|i| h2 * mf0[i] + h3 * (mmf0[i] + jmf0[i] + mjg[i]))
                    .collect()
            }
        };
        Ok(Some(out))
    }
}

/// The additive correction of the update, as a vector, for the step starting at `y0`.
pub fn correction_term(
    corr: Correction,
    h: f64,
    sys: &SemiLinearSystem,
    y0: &[f64],
) -> Result<Vec<f64>> {
    let cache = ExpCache::new(sys.m.clone(), h)?;
    let mut ev = Evaluator::new(sys, &cache);
    let f0 = ev.f(y0);
    Ok(ev
        .correction(corr, h, y0, &f0, None)?
        .unwrap_or_else(|| vec![0.0; y0.len()]))
}

/// Advances `y` at time `t` by one step of size `h`.
pub fn step(
    spec: &MethodSpec,
    sys: &SemiLinearSystem,
    t: f64,
    y: &[f64],
    h: f64,
    cache: &mut ExpCache,
) -> Result<StepOutcome> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("stepsize must be positive, got {h}")));
    }
    if y.len() != sys.dim() {
        return Err(Error::Dimension(format!(
            "state of length {} for a system of dimension {}",
            y.len(),
            sys.dim()
        )));
    }
    if !cache.is_valid_for(&sys.m, h) {
        return Err(Error::Config(format!(
            "cache built for h = {} does not match this step (h = {h}) or operator",
            cache.stepsize()
        )));
    }
    let builds_before = cache.builds();
    prepare_cache(spec, cache)?;
    let builds = cache.builds() - builds_before;

    let mut ev = Evaluator::new(sys, cache);
    let y1 = match spec.coefficients() {
        Coefficients::Scalar { a_f64, b_f64, .. } => {
            scalar_step(spec, &mut ev, a_f64, b_f64, t, y, h)?
        }
        Coefficients::Phi { a, b } => phi_step(spec, &mut ev, a, b, t, y, h)?,
    };
    check_finite(&y1, t + h)?;
    let mut work = ev.work;
    work.exp_builds += builds;
    Ok(StepOutcome {
        y1,
        err_estimate: None,
        work,
    })
}

fn stage_start(ev: &mut Evaluator<'_>, pattern: StagePattern, y: &[f64]) -> Vec<f64> {
    match pattern {
        StagePattern::Identity => y.to_vec(),
        StagePattern::Exp(c) => ev.exp_times_y0(c, y),
    }
}

fn scalar_step(
    spec: &MethodSpec,
    ev: &mut Evaluator<'_>,
    a: &[Vec<f64>],
    b: &[f64],
    t: f64,
    y: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let s = spec.stages();
    let mverk = spec.family() == Family::Mverk;
    let mut fvals: Vec<Vec<f64>> = Vec::with_capacity(s);
    // MVERK stages feed M Y_j + f(Y_j) forward; SVERK stages feed f(Y_j).
    let mut gvals: Vec<Option<Vec<f64>>> = Vec::with_capacity(s);

    for i in 0..s {
        let mut yi = stage_start(ev, spec.patterns()[i], y);
        for j in 0..i {
            if a[i][j] != 0.0 {
                let src = if mverk {
                    gvals[j].as_deref().expect("forward term computed")
                } else {
                    &fvals[j]
                };
                axpy(h * a[i][j], src, &mut yi);
            }
        }
        let c = spec.nodes()[i].to_f64().unwrap_or(0.0);
        check_finite(&yi, t + c * h)?;
        let fi = ev.f(&yi);
        let used_later = (i + 1..s).any(|k| a[k][i] != 0.0);
        let gi = if mverk && used_later {
            let mut g = ev.m(&yi);
            axpy(1.0, &fi, &mut g);
            Some(g)
        } else {
            None
        };
        fvals.push(fi);
        gvals.push(gi);
    }

    let mut y1 = ev.exp_times_y0(Rational::one(), y);
    for (bi, fi) in b.iter().zip(&fvals) {
        if *bi != 0.0 {
            axpy(h * bi, fi, &mut y1);
        }
    }

    let first_is_y0 = spec.nodes()[0].is_zero() && spec.patterns()[0] == StagePattern::Identity;
    let f0 = if first_is_y0 {
        fvals[0].clone()
    } else {
        ev.f(y)
    };
    let g0 = if mverk && first_is_y0 {
        gvals[0].clone()
    } else {
        None
    };
    if let Some(w) = ev.correction(spec.correction(), h, y, &f0, g0.as_deref())? {
        axpy(1.0, &w, &mut y1);
    }
    Ok(y1)
}

fn phi_step(
    spec: &MethodSpec,
    ev: &mut Evaluator<'_>,
    a: &[Vec<super::methods::PhiCombination>],
    b: &[super::methods::PhiCombination],
    t: f64,
    y: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let s = spec.stages();
    let mut fvals: Vec<Vec<f64>> = Vec::with_capacity(s);
    for i in 0..s {
        let mut yi = stage_start(ev, spec.patterns()[i], y);
        for (j, comb) in a[i].iter().enumerate() {
            for term in &comb.0 {
                if term.coeff.is_zero() {
                    continue;
                }
                let v = ev.apply(MatrixFunction::Phi(term.order), term.node, &fvals[j]);
                axpy(h * term.coeff.to_f64().expect("finite"), &v, &mut yi);
            }
        }
        let c = spec.nodes()[i].to_f64().unwrap_or(0.0);
        check_finite(&yi, t + c * h)?;
        let fi = ev.f(&yi);
        fvals.push(fi);
    }
    let mut y1 = ev.exp_times_y0(Rational::one(), y);
    for (comb, fi) in b.iter().zip(&fvals) {
        for term in &comb.0 {
            if term.coeff.is_zero() {
                continue;
            }
            let v = ev.apply(MatrixFunction::Phi(term.order), term.node, fi);
            axpy(h * term.coeff.to_f64().expect("finite"), &v, &mut y1);
        }
    }
    Ok(y1)
}

/// Number of steps of size `h` covering `[t0, t_end]`; must be an integer.
pub fn step_count(t0: f64, t_end: f64, h: f64) -> Result<usize> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("stepsize must be positive, got {h}")));
    }
    let n = (t_end - t0) / h;
    let rounded = n.round();
    if rounded < 1.0 || (n - rounded).abs() > 1e-12 * rounded.max(1.0) {
        return Err(Error::Config(format!(
            "interval length {} is not an integer multiple of h = {h}",
            t_end - t0
        )));
    }
    Ok(rounded as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedRun {
    pub y: Vec<f64>,
    pub steps: usize,
    pub work: WorkCounters,
}

/// Fixed-step integration over the system's interval.
pub fn integrate_fixed(
    spec: &MethodSpec,
    sys: &SemiLinearSystem,
    h: f64,
    cache: &mut ExpCache,
) -> Result<FixedRun> {
    let mut work = WorkCounters::default();
    let (y, steps) = integrate_fixed_into(spec, sys, h, cache, &mut work)?;
    Ok(FixedRun { y, steps, work })
}

/// As [`integrate_fixed`], accumulating into `work` so counts survive a blow-up.
pub fn integrate_fixed_into(
    spec: &MethodSpec,
    sys: &SemiLinearSystem,
    h: f64,
    cache: &mut ExpCache,
    work: &mut WorkCounters,
) -> Result<(Vec<f64>, usize)> {
    let n = step_count(sys.t0, sys.t_end, h)?;
    if !cache.is_valid_for(&sys.m, h) {
        return Err(Error::Config(format!(
            "cache built for h = {} does not match h = {h}",
            cache.stepsize()
        )));
    }
    let before = cache.builds();
    prepare_cache(spec, cache)?;
    work.exp_builds += cache.builds() - before;

    let mut y = sys.y0.clone();
    for k in 0..n {
        let t = sys.t0 + k as f64 * h;
        let out = step(spec, sys, t, &y, h, cache)?;
        *work += out.work;
        y = out.y1;
    }
    Ok((y, n))
}
