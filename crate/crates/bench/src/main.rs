use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fbf_bench::commands::{cmd_certify, cmd_compare, cmd_flow, cmd_solve, cmd_sweep_rho, FlowSpec, Variant};
use fbf_bench::config::{LambdaModeSpec, LambdaSpec, RhoSpec, RunSpec, SolverSpec, StopSpec};
use fbf_bench::registry::{lookup, registry};
use fbf_bench::{BenchError, Result, EXIT_OK};
use fbf_core::flow::Integrator;
use fbf_core::solvers::Method;

#[derive(Parser)]
#[command(name = "fbf-bench", version, about = "Forward-backward-forward experiments for variational inequalities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver configuration.
    Solve(SolveArgs),
    /// Sweep the relaxation parameter of fbf.
    SweepRho(SweepArgs),
    /// Run several methods on one problem.
    Compare(CompareArgs),
    /// Integrate the continuous-time dynamics.
    Flow(FlowArgs),
    /// List built-in problems and their constants.
    ListProblems,
    /// Check a stored trace against its convergence certificates.
    Certify(CertifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Fbf,
    Extragradient,
    SubgradientExtragradient,
    ProjectedGradient,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Fbf => Method::Fbf,
            MethodArg::Extragradient => Method::Extragradient,
            MethodArg::SubgradientExtragradient => Method::SubgradientExtragradient,
            MethodArg::ProjectedGradient => Method::ProjectedGradient,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LambdaModeArg {
    Fixed,
    Adaptive,
}

#[derive(Args, Clone)]
struct SolverFlags {
    #[arg(long)]
    problem: Option<String>,
    /// Stepsize: a number or `c/L`.
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long, value_enum)]
    lambda_mode: Option<LambdaModeArg>,
    #[arg(long)]
    mu: Option<f64>,
    /// Distance-to-reference tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated starting point.
    #[arg(long, value_delimiter = ',')]
    x0: Option<Vec<f64>>,
    /// Output path prefix.
    #[arg(long)]
    out: Option<String>,
}

impl SolverFlags {
    fn apply(&self, solver: &mut SolverSpec) -> Result<()> {
        if let Some(l) = &self.lambda {
            solver.lambda = l.parse::<LambdaSpec>()?;
        }
        if let Some(mode) = self.lambda_mode {
            solver.lambda_mode = match mode {
                LambdaModeArg::Fixed => LambdaModeSpec::Fixed,
                LambdaModeArg::Adaptive => LambdaModeSpec::Adaptive,
            };
        }
        if let Some(mu) = self.mu {
            solver.mu = mu;
        }
        if let Some(tol) = self.tol {
            solver.stop = StopSpec::DistToRef { tol };
        }
        if let Some(n) = self.max_iter {
            solver.max_iter = n;
        }
        if let Some(seed) = self.seed {
            solver.seed = seed;
        }
        if let Some(x0) = &self.x0 {
            solver.x0 = Some(x0.clone());
        }
        Ok(())
    }

    fn problem(&self) -> Result<String> {
        self.problem
            .clone()
            .ok_or_else(|| BenchError::Config("--problem is required".into()))
    }

    fn out(&self, default: &str) -> String {
        self.out.clone().unwrap_or_else(|| default.to_string())
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Run configuration JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    rho: Option<f64>,
    #[command(flatten)]
    flags: SolverFlags,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated list, or `start:stop:step`.
    #[arg(long, default_value = "0.5:1.3:0.1")]
    rho: String,
    #[command(flatten)]
    flags: SolverFlags,
}

#[derive(Args)]
struct CompareArgs {
    /// Comma-separated: fbf, fbf-adaptive, extragradient, subgradient_extragradient, projected_gradient.
    #[arg(long, value_delimiter = ',', default_value = "fbf,extragradient,subgradient_extragradient")]
    method: Vec<String>,
    #[command(flatten)]
    flags: SolverFlags,
}

#[derive(Args)]
struct FlowArgs {
    #[arg(long)]
    problem: String,
    /// Stepsizes as multiples of 1/L.
    #[arg(long, value_delimiter = ',', default_value = "0.99,0.8,0.5")]
    lambda: Vec<f64>,
    #[arg(long, default_value_t = 200.0)]
    horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    #[arg(long, default_value_t = 100)]
    stride: usize,
    #[arg(long)]
    euler: bool,
    #[arg(long, value_delimiter = ',')]
    x0: Option<Vec<f64>>,
    #[arg(long, default_value = "flow")]
    out: String,
}

#[derive(Args)]
struct CertifyArgs {
    /// Trace CSV written by `solve`.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    problem: String,
}

fn parse_rhos(text: &str) -> Result<Vec<f64>> {
    let bad = || BenchError::Config(format!("cannot parse relaxation list {text:?}"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() == 3 {
        let nums: Vec<f64> = parts.iter().map(|p| p.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?;
        let (start, stop, step) = (nums[0], nums[1], nums[2]);
        if step.is_nan() || step <= 0.0 || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize;
        // round to the step's grid so 0.5 + 3·0.1 prints as 0.8
        return Ok((0..=count).map(|k| ((start + k as f64 * step) * 1e9).round() / 1e9).collect());
    }
    text.split(',').map(|p| p.trim().parse().map_err(|_| bad())).collect()
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve(args) => {
            let mut spec = match &args.config {
                Some(path) => RunSpec::from_json(&std::fs::read_to_string(path)?)?,
                None => RunSpec {
                    problem: args.flags.problem()?,
                    solver: SolverSpec::default(),
                    output: args.flags.out("run"),
                    emit: Default::default(),
                },
            };
            if let Some(p) = &args.flags.problem {
                spec.problem = p.clone();
            }
            if let Some(out) = &args.flags.out {
                spec.output = out.clone();
            }
            if let Some(m) = args.method {
                spec.solver.method = m.into();
            }
            if let Some(r) = args.rho {
                spec.solver.rho = RhoSpec::Constant(r);
            }
            args.flags.apply(&mut spec.solver)?;
            let outcome = cmd_solve(&spec)?;
            println!(
                "{} {}: {} after {} iterations (dist_ref {:?}) -> {}",
                spec.problem,
                outcome.report.method,
                outcome.report.status,
                outcome.run.iterations(),
                outcome.report.summary.final_dist_ref,
                outcome.trace_path.display()
            );
            Ok(outcome.exit_code)
        }
        Command::SweepRho(args) => {
            let mut solver = SolverSpec::default();
            args.flags.apply(&mut solver)?;
            let problem = args.flags.problem()?;
            let out = cmd_sweep_rho(&problem, &solver, &parse_rhos(&args.rho)?, &args.flags.out("sweep"))?;
            println!("rho,iterations");
            for row in &out.rows {
                println!("{},{}", row.rho, row.iterations);
            }
            Ok(out.exit_code)
        }
        Command::Compare(args) => {
            let mut solver = SolverSpec::default();
            args.flags.apply(&mut solver)?;
            let variants = args
                .method
                .iter()
                .map(|m| Variant::parse(m.trim(), &solver))
                .collect::<Result<Vec<_>>>()?;
            let out = cmd_compare(&args.flags.problem()?, &variants, &args.flags.out("compare"))?;
            println!("label,iterations,proj_calls,final_dist_ref");
            for row in &out.rows {
                println!("{},{},{},{:?}", row.label, row.iterations, row.proj_calls, row.final_dist_ref);
            }
            Ok(out.exit_code)
        }
        Command::Flow(args) => {
            let spec = FlowSpec {
                coefficients: args.lambda,
                horizon: args.horizon,
                step: args.step,
                integrator: if args.euler { Integrator::ExplicitEuler } else { Integrator::Rk4 },
                sample_stride: args.stride,
                x0: args.x0,
            };
            let out = cmd_flow(&args.problem, &spec, &args.out)?;
            for (row, path) in out.rows.iter().zip(&out.paths) {
                println!("λ = {}/L: final dist_ref {:?} -> {}", row.coefficient, row.final_dist_ref, path.display());
            }
            Ok(EXIT_OK)
        }
        Command::ListProblems => {
            println!("name,dim,lipschitz,lipschitz_estimate,modulus,description");
            for p in registry()? {
                println!(
                    "{},{},{},{},{},{}",
                    p.name,
                    p.dim(),
                    p.lipschitz,
                    p.lipschitz_estimate,
                    p.modulus,
                    p.description
                );
            }
            Ok(EXIT_OK)
        }
        Command::Certify(args) => {
            lookup(&args.problem)?;
            let (out, _) = cmd_certify(&args.trace, &args.problem)?;
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
