use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{run_convergence, ExperimentPlan, MethodSlope};
use crate::error::Result;
use crate::expkernels::{expm, DenseMatrix, ExpCache};
use crate::integrators::{
    integrate_fixed, max_diff, method_spec, order_residuals, step, FnNonlinearity, MethodId,
    MethodSpec, SemiLinearSystem, ZeroNonlinearity,
};
use crate::problems::{Problem, ProblemId, ReferenceOracle};

/// One checked statement with its measured value.
#[derive(Debug, Clone, PartialEq)]
pub struct Claim {
    pub suite: &'static str,
    pub subject: String,
    pub passed: bool,
    pub measured: String,
}

impl fmt::Display for Claim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<22} {:<10} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite,
            self.subject,
            self.measured
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub claims: Vec<Claim>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.claims.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Claim> {
        self.claims.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.claims {
            writeln!(f, "{c}")?;
        }
        let failed = self.failures().count();
        write!(
            f,
            "{} claims, {} passed, {} failed",
            self.claims.len(),
            self.claims.len() - failed,
            failed
        )
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub seed: u64,
    pub oracle: ReferenceOracle,
    /// Problem for the empirical-order suite.
    pub slope_problem: Problem,
    pub slope_tolerance: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            seed: 42,
            oracle: ReferenceOracle::from_env(),
            slope_problem: Problem::default_for(ProblemId::Wind),
            slope_tolerance: 0.25,
        }
    }
}

/// Every suite over the shipped catalog.
pub fn run_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    let new_specs: Vec<MethodSpec> = MethodId::NEW_METHODS
        .iter()
        .map(|&m| method_spec(m))
        .collect();
    let mut claims = suite_order_residuals(&new_specs);
    claims.extend(suite_homogeneous(&MethodId::ALL, opts.seed)?);
    claims.extend(suite_classical_reduction(&REDUCTIONS, opts.seed)?);
    claims.extend(suite_a_stability(&MethodId::ALL)?);
    claims.extend(suite_jvp_consistency(&ProblemId::ALL, opts.seed)?);
    claims.extend(suite_slopes(
        &opts.slope_problem,
        &MethodId::ALL,
        &opts.oracle,
        opts.slope_tolerance,
    )?);
    Ok(VerifyReport { claims })
}

/// Order conditions hold exactly (up to the final conversion to `f64`).
pub fn suite_order_residuals(specs: &[MethodSpec]) -> Vec<Claim> {
    specs
        .iter()
        .map(|spec| match order_residuals(spec) {
            Ok(res) => {
                let worst = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
                Claim {
                    suite: "order-residual",
                    subject: spec.id().to_string(),
                    passed: worst <= 1e-15,
                    measured: format!("max|residual| = {worst:e}"),
                }
            }
            Err(e) => Claim {
                suite: "order-residual",
                subject: spec.id().to_string(),
                passed: false,
                measured: e.to_string(),
            },
        })
        .collect()
}

fn random_skew(n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let a = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    a.sub(&a.transpose())
}

/// With `f ≡ 0` every method reproduces `e^{tM} y0`.
pub fn suite_homogeneous(methods: &[MethodId], seed: u64) -> Result<Vec<Claim>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = random_skew(6, &mut rng);
    let y0: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (h, steps) = (0.05, 100);
    let t_end = h * steps as f64;
    let exact = expm(&m.scaled(t_end))?.matvec(&y0);
    let sys = SemiLinearSystem::new(m, Arc::new(ZeroNonlinearity), y0, 0.0, t_end)?;
    methods
        .iter()
        .map(|&id| {
            let mut cache = ExpCache::new(sys.m.clone(), h)?;
            let run = integrate_fixed(&method_spec(id), &sys, h, &mut cache)?;
            let err = max_diff(&run.y, &exact);
            Ok(Claim {
                suite: "homogeneous-exactness",
                subject: id.to_string(),
                passed: run.steps == steps && err <= 1e-11,
                measured: format!("max error = {err:e} after {} steps", run.steps),
            })
        })
        .collect()
}

/// Classical explicit Runge–Kutta schemes the new methods reduce to when `M = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassicalRk {
    /// Trapezoidal Heun, order 2.
    Heun2,
    /// Midpoint rule, order 2.
    ModifiedEuler,
    /// Third-order scheme with c = (0, 1/2, 3/4), b = (2/9, 1/3, 4/9).
    Rk3,
    /// Heun's third-order scheme with c = (0, 1/3, 2/3), b = (1/4, 0, 3/4).
    Heun3,
}

impl ClassicalRk {
    fn tableau(self) -> (Vec<Vec<f64>>, Vec<f64>) {
        match self {
            ClassicalRk::Heun2 => (vec![vec![], vec![1.0]], vec![0.5, 0.5]),
            ClassicalRk::ModifiedEuler => (vec![vec![], vec![0.5]], vec![0.0, 1.0]),
            ClassicalRk::Rk3 => (
                vec![vec![], vec![0.5], vec![0.0, 0.75]],
                vec![2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0],
            ),
            ClassicalRk::Heun3 => (
                vec![vec![], vec![1.0 / 3.0], vec![0.0, 2.0 / 3.0]],
                vec![0.25, 0.0, 0.75],
            ),
        }
    }
}

impl fmt::Display for ClassicalRk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassicalRk::Heun2 => "Heun-2",
            ClassicalRk::ModifiedEuler => "modified Euler",
            ClassicalRk::Rk3 => "RK3",
            ClassicalRk::Heun3 => "Heun-3",
        })
    }
}

/// One step of a classical explicit RK scheme for `y' = f(y)`.
pub fn classical_rk_step(
    rk: ClassicalRk,
    f: &dyn Fn(&[f64]) -> Vec<f64>,
    y: &[f64],
    h: f64,
) -> Vec<f64> {
    let (a, b) = rk.tableau();
    let mut ks: Vec<Vec<f64>> = Vec::with_capacity(b.len());
    for row in &a {
        let mut yi = y.to_vec();
        for (aij, kj) in row.iter().zip(&ks) {
            for (v, k) in yi.iter_mut().zip(kj) {
                *v += h * aij * k;
            }
        }
        ks.push(f(&yi));
    }
    let mut y1 = y.to_vec();
    for (bi, ki) in b.iter().zip(&ks) {
        for (v, k) in y1.iter_mut().zip(ki) {
            *v += h * bi * k;
        }
    }
    y1
}

/// Reduction statements checked by [`run_verify`].
pub const REDUCTIONS: [(MethodId, ClassicalRk); 6] = [
    (MethodId::Mverk2_1, ClassicalRk::Heun2),
    (MethodId::Mverk2_2, ClassicalRk::ModifiedEuler),
    (MethodId::Mverk3_2, ClassicalRk::Rk3),
    (MethodId::Mverk3_1, ClassicalRk::Heun3),
    (MethodId::Sverk3_1, ClassicalRk::Rk3),
    (MethodId::Sverk3_2, ClassicalRk::Heun3),
];

fn smooth_f(y: &[f64]) -> Vec<f64> {
    vec![
        y[1].sin() + y[2] * y[2],
        y[0].cos() * y[2],
        0.5 - y[0] * y[1],
    ]
}

fn smooth_jvp(y: &[f64], v: &[f64]) -> Vec<f64> {
    vec![
        y[1].cos() * v[1] + 2.0 * y[2] * v[2],
        -y[0].sin() * y[2] * v[0] + y[0].cos() * v[2],
        -y[1] * v[0] - y[0] * v[1],
    ]
}

/// With `M = 0` each step agrees with the named classical scheme.
pub fn suite_classical_reduction(
    pairs: &[(MethodId, ClassicalRk)],
    seed: u64,
) -> Result<Vec<Claim>> {
    let h = 0.1;
    let f = FnNonlinearity::new(|y, out| out.copy_from_slice(&smooth_f(y)))
        .with_jvp(|y, v, out| out.copy_from_slice(&smooth_jvp(y, v)));
    let sys = SemiLinearSystem::new(DenseMatrix::zeros(3, 3), Arc::new(f), vec![0.0; 3], 0.0, h)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let states: Vec<Vec<f64>> = (0..50)
        .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    pairs
        .iter()
        .map(|&(id, rk)| {
            let spec = method_spec(id);
            let mut cache = ExpCache::new(sys.m.clone(), h)?;
            let mut worst = 0.0f64;
            for y in &states {
                let got = step(&spec, &sys, 0.0, y, h, &mut cache)?.y1;
                let want = classical_rk_step(rk, &smooth_f, y, h);
                worst = worst.max(max_diff(&got, &want));
            }
            Ok(Claim {
                suite: "classical-reduction",
                subject: id.to_string(),
                passed: worst <= 1e-14,
                measured: format!("vs {rk}: max diff = {worst:e} over {} states", states.len()),
            })
        })
        .collect()
}

/// Decay of `y' = λ y` written as a real 2x2 system, at every step.
pub fn suite_a_stability(methods: &[MethodId]) -> Result<Vec<Claim>> {
    let lambdas = [(-50.0, 0.0), (-1.0, 20.0), (-1e-3, 50.0)];
    let (h, steps) = (0.1, 200usize);
    let mut claims = Vec::new();
    for &id in methods {
        let spec = method_spec(id);
        let mut worst = 0.0f64;
        let mut ok = true;
        for &(re, im) in &lambdas {
            let m = DenseMatrix::from_rows(&[&[re, -im], &[im, re]]);
            let y0 = vec![1.0, -0.5];
            let sys = SemiLinearSystem::new(m, Arc::new(ZeroNonlinearity), y0.clone(), 0.0, 1.0)?;
            let mut cache = ExpCache::new(sys.m.clone(), h)?;
            let n0 = l2(&y0);
            let mut y = y0;
            for n in 1..=steps {
                y = step(&spec, &sys, 0.0, &y, h, &mut cache)?.y1;
                let bound = n0 * (re * h * n as f64).exp();
                let norm = l2(&y);
                // e^{-50 t} leaves the normal range; below it only underflow remains
                if norm > bound * (1.0 + 1e-12) + f64::MIN_POSITIVE {
                    ok = false;
                }
                if bound >= f64::MIN_POSITIVE {
                    worst = worst.max(norm / bound);
                }
            }
        }
        claims.push(Claim {
            suite: "a-stability",
            subject: id.to_string(),
            passed: ok,
            measured: format!("max |y_n| / (|y0| e^(Re(λ) t_n)) = {worst:.15}"),
        });
    }
    Ok(claims)
}

/// Euclidean norm, scaled so tiny entries do not underflow when squared.
fn l2(v: &[f64]) -> f64 {
    let big = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if big == 0.0 {
        return 0.0;
    }
    big * v.iter().map(|x| (x / big).powi(2)).sum::<f64>().sqrt()
}

/// Analytic Jacobian-vector products agree with central differences.
pub fn suite_jvp_consistency(problems: &[ProblemId], seed: u64) -> Result<Vec<Claim>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1a0b);
    problems
        .iter()
        .map(|&id| {
            let sys = Problem::default_for(id).build()?;
            let mut worst = 0.0f64;
            for trial in 0..4 {
                let y: Vec<f64> = sys
                    .y0
                    .iter()
                    .map(|v| {
                        if trial == 0 {
                            *v
                        } else {
                            v + 0.1 * rng.gen_range(-1.0..1.0)
                        }
                    })
                    .collect();
                let v: Vec<f64> = (0..sys.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                worst = worst.max(sys.jvp_fd_mismatch(&y, &v, 1e-5)?);
            }
            Ok(Claim {
                suite: "jvp-consistency",
                subject: id.as_str().to_string(),
                passed: worst <= 1e-6,
                measured: format!("max relative mismatch = {worst:e}"),
            })
        })
        .collect()
}

/// Empirical orders from a convergence sweep over the problem's default k-range.
pub fn suite_slopes(
    problem: &Problem,
    methods: &[MethodId],
    oracle: &ReferenceOracle,
    tol: f64,
) -> Result<Vec<Claim>> {
    let mut plan = ExperimentPlan::default_for(problem.id());
    plan.problem = *problem;
    plan.methods = methods.to_vec();
    let sweep = run_convergence(&plan, oracle)?;
    Ok(sweep
        .slopes()
        .into_iter()
        .map(|s| Claim {
            suite: "empirical-order",
            subject: s.method.to_string(),
            passed: s.within(tol),
            measured: describe_slope(&s),
        })
        .collect())
}

/// One-line summary of a fitted slope and any excluded cells.
pub fn describe_slope(s: &MethodSlope) -> String {
    let mut out = match s.fit {
        Some(f) => format!(
            "slope = {:.3} (nominal {}, residual {:.3}, {} cells)",
            f.slope, s.nominal_order, f.residual, f.points
        ),
        None => format!("no fit (nominal {})", s.nominal_order),
    };
    if !s.excluded.is_empty() {
        let cells: Vec<String> = s
            .excluded
            .iter()
            .map(|e| format!("h={} ge={:e} {:?}", e.h, e.ge_max, e.reason))
            .collect();
        out.push_str(&format!("; excluded [{}]", cells.join(", ")));
        if let Some(raw) = s.raw_fit {
            out.push_str(&format!("; all finite cells slope = {:.3}", raw.slope));
        }
    }
    out
}
