use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use xrk::adaptive::ControllerConfig;
use xrk::harness::{
    describe_slope, run_adaptive, run_convergence, run_efficiency, run_verify, trace_violations,
    write_csv, write_trace_csv, ExperimentPlan, VerifyOptions,
};
use xrk::integrators::{method_spec, MethodId};
use xrk::problems::{
    AllenCahnConfig, BoundarySplit, Problem, ProblemConfig, ProblemId, ReferenceOracle, WindConfig,
};
use xrk::Error;

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "xrk",
    version,
    about = "Exponential Runge-Kutta integrators: verification, convergence and timing studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the verification suites and report each claim.
    Verify {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Global error against the reference for each (method, h) cell.
    Convergence(SweepArgs),
    /// As `convergence`, with the median CPU time of repeated runs.
    Efficiency(SweepArgs),
    /// Adaptive integration with the embedded first/second-order pair.
    Adaptive {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Error tolerance per unit step.
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long, default_value_t = 0.1)]
        h0: f64,
        #[arg(long, default_value_t = 1.0)]
        maxh: f64,
        #[arg(long, default_value_t = 1e-8)]
        minih: f64,
        /// Trace CSV destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the method catalog.
    ListMethods,
}

#[derive(Args, Debug)]
struct ProblemArgs {
    #[arg(long, default_value = "wind", value_parser = parse_problem)]
    problem: ProblemId,
    /// Wind damping.
    #[arg(long)]
    zeta: Option<f64>,
    /// Wind frequency.
    #[arg(long)]
    lambda: Option<f64>,
    /// Wind initial state, two comma-separated values.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    y0: Option<Vec<f64>>,
    /// How the Allen-Cahn boundary values enter the split.
    #[arg(long, value_enum, default_value_t = SplitArg::Lifted)]
    split: SplitArg,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Comma-separated method names, or `all`.
    #[arg(long, default_value = "all")]
    methods: String,
    #[arg(long)]
    kmin: Option<u32>,
    #[arg(long)]
    kmax: Option<u32>,
    /// Timed repetitions per cell.
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Accepted for reproducible invocations; sweeps draw no random numbers.
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Lifted,
    Folded,
}

fn parse_problem(s: &str) -> Result<ProblemId, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_methods(s: &str) -> Result<Vec<MethodId>, Error> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(MethodId::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let id: MethodId = part.parse()?;
        if !out.contains(&id) {
            out.push(id);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no methods given".into()));
    }
    Ok(out)
}

impl ProblemArgs {
    fn build(&self) -> Result<Problem, Error> {
        let wind_override = self.zeta.is_some() || self.lambda.is_some() || self.y0.is_some();
        let config = match self.problem {
            ProblemId::Wind => {
                let mut cfg = WindConfig::default();
                if let Some(z) = self.zeta {
                    cfg.zeta = z;
                }
                if let Some(l) = self.lambda {
                    cfg.lambda = l;
                }
                if let Some(y) = &self.y0 {
                    cfg.y0 = [y[0], y[1]];
                }
                ProblemConfig::Wind(cfg)
            }
            _ if wind_override => {
                return Err(Error::Config(
                    "--zeta, --lambda and --y0 apply to the wind problem only".into(),
                ))
            }
            ProblemId::AllenCahn => ProblemConfig::AllenCahn(AllenCahnConfig {
                split: match self.split {
                    SplitArg::Lifted => BoundarySplit::Lifted,
                    SplitArg::Folded => BoundarySplit::Folded,
                },
                ..Default::default()
            }),
            id => ProblemConfig::default_for(id),
        };
        let problem = Problem::new(config);
        problem.build()?;
        Ok(problem)
    }
}

impl SweepArgs {
    fn plan(&self) -> Result<ExperimentPlan, Error> {
        let problem = self.problem.build()?;
        let (kmin, kmax) = problem.id().default_k_range();
        let plan = ExperimentPlan {
            problem,
            methods: parse_methods(&self.methods)?,
            kmin: self.kmin.unwrap_or(kmin),
            kmax: self.kmax.unwrap_or(kmax),
            reps: self.reps,
        };
        plan.validate()?;
        Ok(plan)
    }
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn sweep(args: &SweepArgs, timed: bool) -> Result<ExitCode, Error> {
    let plan = args.plan()?;
    let oracle = ReferenceOracle::from_env();
    let result = if timed {
        run_efficiency(&plan, &oracle)?
    } else {
        run_convergence(&plan, &oracle)?
    };
    let mut w = output(&args.out)?;
    write_csv(&mut w, &result.records)?;
    w.flush()?;
    drop(w);
    eprintln!(
        "{}: {} cells, reference gap {:e} at h_ref = {:e}",
        plan.problem.id(),
        result.records.len(),
        result.reference.gap,
        result.reference.h_ref
    );
    for s in result.slopes() {
        eprintln!("  {:<9} {}", s.method.to_string(), describe_slope(&s));
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Verify { problem, seed } => {
            let slope_problem = problem.build()?;
            let slope_tolerance = if slope_problem.id() == ProblemId::Wind {
                0.25
            } else {
                0.3
            };
            let opts = VerifyOptions {
                seed,
                oracle: ReferenceOracle::from_env(),
                slope_problem,
                slope_tolerance,
            };
            let report = run_verify(&opts)?;
            println!("{report}");
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFY_FAILED)
            })
        }
        Command::Convergence(args) => sweep(&args, false),
        Command::Efficiency(args) => sweep(&args, true),
        Command::Adaptive {
            problem,
            eps,
            h0,
            maxh,
            minih,
            out,
        } => {
            let problem = problem.build()?;
            let cfg = ControllerConfig::new(eps, h0, maxh, minih)?;
            let report = run_adaptive(&problem, &cfg, &ReferenceOracle::from_env())?;
            let mut w = output(&out)?;
            write_trace_csv(&mut w, &report.run)?;
            w.flush()?;
            drop(w);
            eprintln!("{}", report.summary());
            for v in trace_violations(&report.run, &cfg) {
                eprintln!("  violation: {v}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::ListMethods => {
            println!(
                "{:<9} {:<14} {:>6} {:>5}  {:<12} nodes",
                "method", "family", "stages", "order", "correction"
            );
            for id in MethodId::ALL {
                let spec = method_spec(id);
                let nodes: Vec<String> = spec.nodes().iter().map(|c| c.to_string()).collect();
                println!(
                    "{:<9} {:<14} {:>6} {:>5}  {:<12} {}",
                    id.to_string(),
                    format!("{:?}", spec.family()),
                    spec.stages(),
                    spec.order(),
                    format!("{:?}", spec.correction()),
                    nodes.join(" ")
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Oracle { .. } => ExitCode::from(EXIT_VERIFY_FAILED),
                _ => ExitCode::from(EXIT_CONFIG),
            }
        }
    }
}
