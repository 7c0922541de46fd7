//! Subcommand implementations. Each returns its artifacts' contents as
//! well as writing them, so callers and tests can inspect results directly.

use std::path::{Path, PathBuf};

use fbf_core::diagnostics::{certify_trace, CertificateConstants, RateReport, TraceRow};
use fbf_core::flow::{integrate, FlowConfig, Integrator};
use fbf_core::solvers::{solve, Method, RunReport, Status};
use fbf_core::Vector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{LambdaSpec, Resolved, RhoSpec, RunSpec, SolverSpec, StopSpec};
use crate::io;
use crate::registry::{lookup, ProblemInstance};
use crate::{BenchError, Result, EXIT_MAX_ITER, EXIT_OK};

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

pub fn exit_code(status: Status) -> i32 {
    match status {
        Status::MaxIter | Status::Running => EXIT_MAX_ITER,
        Status::SolvedExact | Status::TolReached => EXIT_OK,
    }
}

fn status_name(status: Status) -> &'static str {
    match status {
        Status::Running => "running",
        Status::SolvedExact => "solved_exact",
        Status::TolReached => "tol_reached",
        Status::MaxIter => "max_iter",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryJson {
    pub iterations: usize,
    pub final_residual: Option<f64>,
    pub final_dist_ref: Option<f64>,
    pub total_f_evals: usize,
    pub total_proj_calls: usize,
    pub wall_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalState {
    pub n: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub t: Vec<f64>,
    pub lambda: f64,
    pub rho: f64,
    pub f_evals: usize,
    pub proj_calls: usize,
    pub halfspace_calls: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsJson {
    pub lipschitz: f64,
    pub lipschitz_source: crate::registry::LipschitzSource,
    pub lipschitz_estimate: f64,
    pub modulus: f64,
    pub lipschitz_samples: usize,
    pub lipschitz_seed: u64,
    pub region_lo: Vec<f64>,
    pub region_hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateJson {
    pub fejer_violations: usize,
    pub key_inequality_violations: usize,
    pub rate_violations: usize,
    pub delta_empirical: Option<f64>,
    pub delta_theoretical_max: Option<f64>,
}

impl From<&RateReport> for CertificateJson {
    fn from(r: &RateReport) -> Self {
        Self {
            fejer_violations: r.fejer_violations,
            key_inequality_violations: r.key_inequality_violations,
            rate_violations: r.rate_violations,
            delta_empirical: finite(r.delta_empirical),
            delta_theoretical_max: finite(r.max_delta()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub runspec: RunSpec,
    pub problem: String,
    pub method: String,
    pub status: String,
    pub exit_code: i32,
    pub resolved: Resolved,
    pub constants: ConstantsJson,
    pub stop_rule: String,
    pub summary: SummaryJson,
    pub final_state: FinalState,
    /// Present for fbf runs with a reference solution and ρ ≤ 1.
    pub certificate: Option<CertificateJson>,
}

pub struct SolveOutcome {
    pub exit_code: i32,
    pub run: RunReport,
    pub report: ReportJson,
    pub trace_path: PathBuf,
    pub report_path: PathBuf,
}

fn constants_json(problem: &ProblemInstance) -> ConstantsJson {
    let c = problem.constants();
    ConstantsJson {
        lipschitz: c.lipschitz,
        lipschitz_source: c.lipschitz_source,
        lipschitz_estimate: c.lipschitz_estimate,
        modulus: c.modulus,
        lipschitz_samples: c.lipschitz_samples,
        lipschitz_seed: c.lipschitz_seed,
        region_lo: c.region_lo,
        region_hi: c.region_hi,
    }
}

fn stop_description(stop: &StopSpec) -> String {
    match stop {
        StopSpec::DistToRef { tol } => format!(
            "‖x_n − x_ref‖ ≤ {tol:e}, x_ref from {} fbf iterations",
            crate::registry::REFERENCE_ITERATIONS
        ),
        StopSpec::Residual { tol } => format!("‖x_n − y_n‖ ≤ {tol:e}"),
        StopSpec::Exact => "exact termination only".into(),
    }
}

fn rho_within_unit(rho: &RhoSpec) -> bool {
    match rho {
        RhoSpec::Constant(r) => (0.0..=1.0).contains(r),
        RhoSpec::Sequence(rs) => rs.iter().all(|r| (0.0..=1.0).contains(r)),
    }
}

/// Certificate for an fbf trace against the problem's reference solution.
pub fn certify_run(problem: &ProblemInstance, x0: &Vector, trace: &[TraceRow]) -> Option<RateReport> {
    let x_ref = problem.x_ref.as_ref()?;
    let modulus = (problem.modulus > 0.0).then_some(problem.modulus);
    Some(certify_trace(
        trace,
        (x0 - x_ref).norm(),
        CertificateConstants {
            lipschitz: problem.lipschitz,
            modulus,
        },
    ))
}

/// Runs one configuration; writes the trace CSV and report JSON per `emit`.
pub fn cmd_solve(spec: &RunSpec) -> Result<SolveOutcome> {
    let problem = lookup(&spec.problem)?;
    let (config, resolved) = spec.solver.to_config(problem)?;
    let run = solve(&config, &problem.op, &problem.set)?;

    let certificate = (spec.solver.method == Method::Fbf
        && rho_within_unit(&spec.solver.rho)
        && matches!(spec.solver.stop, StopSpec::DistToRef { .. }))
    .then(|| certify_run(problem, &config.x0, &run.trace))
    .flatten()
    .map(|r| CertificateJson::from(&r));

    let code = exit_code(run.status);
    let s = &run.state;
    let report = ReportJson {
        runspec: spec.clone(),
        problem: problem.name.to_string(),
        method: spec.solver.method.name().to_string(),
        status: status_name(run.status).to_string(),
        exit_code: code,
        resolved,
        constants: constants_json(problem),
        stop_rule: stop_description(&spec.solver.stop),
        summary: SummaryJson {
            iterations: run.summary.iterations,
            final_residual: finite(run.summary.final_residual),
            final_dist_ref: finite(run.summary.final_dist_ref),
            total_f_evals: run.summary.total_f_evals,
            total_proj_calls: run.summary.total_proj_calls,
            wall_ns: run.summary.wall_ns,
        },
        final_state: FinalState {
            n: s.n,
            x: s.x.iter().copied().collect(),
            y: s.y.iter().copied().collect(),
            t: s.t.iter().copied().collect(),
            lambda: s.lambda,
            rho: s.rho,
            f_evals: s.f_evals,
            proj_calls: s.proj_calls,
            halfspace_calls: s.halfspace_calls,
        },
        certificate,
    };

    let trace_path = io::trace_path(&spec.output);
    let report_path = io::report_path(&spec.output);
    if spec.emit.csv() {
        io::write_trace(&trace_path, &run.trace)?;
    }
    if spec.emit.json() {
        io::write_json(&report_path, &report)?;
    }
    Ok(SolveOutcome {
        exit_code: code,
        run,
        report,
        trace_path,
        report_path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rho: f64,
    pub iterations: usize,
    pub wall_ns: u64,
}

pub struct SweepOutcome {
    pub exit_code: i32,
    pub rows: Vec<SweepRow>,
    pub cells: Vec<SolveOutcome>,
    pub summary_path: PathBuf,
}

fn rho_tag(rho: f64) -> String {
    format!("{rho:.4}").trim_end_matches('0').trim_end_matches('.').to_string()
}

/// One fbf run per relaxation parameter, executed in parallel and reported
/// in ascending `ρ`.
pub fn cmd_sweep_rho(problem: &str, base: &SolverSpec, rhos: &[f64], prefix: &str) -> Result<SweepOutcome> {
    if rhos.is_empty() {
        return Err(BenchError::Config("no relaxation parameters given".into()));
    }
    let mut rhos = rhos.to_vec();
    rhos.sort_by(f64::total_cmp);
    let specs: Vec<RunSpec> = rhos
        .iter()
        .map(|&rho| RunSpec {
            problem: problem.to_string(),
            solver: SolverSpec {
                method: Method::Fbf,
                rho: RhoSpec::Constant(rho),
                ..base.clone()
            },
            output: format!("{prefix}_rho{}", rho_tag(rho)),
            emit: crate::config::Emit::Both,
        })
        .collect();
    let cells = specs.par_iter().map(cmd_solve).collect::<Result<Vec<_>>>()?;
    let rows: Vec<SweepRow> = rhos
        .iter()
        .zip(&cells)
        .map(|(&rho, c)| SweepRow {
            rho,
            iterations: c.run.iterations(),
            wall_ns: c.run.summary.wall_ns,
        })
        .collect();
    let summary_path = PathBuf::from(format!("{prefix}_summary.csv"));
    io::write_table(&summary_path, &rows)?;
    Ok(SweepOutcome {
        exit_code: cells.iter().map(|c| c.exit_code).max().unwrap_or(EXIT_OK),
        rows,
        cells,
        summary_path,
    })
}

/// A labelled solver variant for [`cmd_compare`].
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub label: String,
    pub solver: SolverSpec,
}

impl Variant {
    /// Parses `fbf`, `fbf-adaptive`, `extragradient`,
    /// `subgradient_extragradient` or `projected_gradient` on top of `base`.
    pub fn parse(label: &str, base: &SolverSpec) -> Result<Self> {
        use crate::config::LambdaModeSpec;
        let mut solver = base.clone();
        match label {
            "fbf" => solver.method = Method::Fbf,
            "fbf-adaptive" => {
                solver.method = Method::Fbf;
                solver.lambda_mode = LambdaModeSpec::Adaptive;
            }
            "extragradient" | "eg" => solver.method = Method::Extragradient,
            "subgradient_extragradient" | "seg" => solver.method = Method::SubgradientExtragradient,
            "projected_gradient" | "pg" => solver.method = Method::ProjectedGradient,
            other => return Err(BenchError::Config(format!("unknown method variant {other:?}"))),
        }
        if solver.method != Method::Fbf {
            solver.rho = RhoSpec::Constant(1.0);
        }
        Ok(Self {
            label: label.to_string(),
            solver,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub label: String,
    pub method: String,
    pub status: String,
    pub iterations: usize,
    pub f_evals: usize,
    pub proj_calls: usize,
    pub final_dist_ref: Option<f64>,
    pub wall_ns: u64,
}

pub struct CompareOutcome {
    pub exit_code: i32,
    pub rows: Vec<CompareRow>,
    pub cells: Vec<SolveOutcome>,
    pub summary_path: PathBuf,
}

/// Runs every variant on one problem; rows are ordered by method, then label.
pub fn cmd_compare(problem: &str, variants: &[Variant], prefix: &str) -> Result<CompareOutcome> {
    if variants.is_empty() {
        return Err(BenchError::Config("no variants to compare".into()));
    }
    let mut variants = variants.to_vec();
    variants.sort_by(|a, b| a.solver.method.name().cmp(b.solver.method.name()).then(a.label.cmp(&b.label)));
    let specs: Vec<RunSpec> = variants
        .iter()
        .map(|v| RunSpec {
            problem: problem.to_string(),
            solver: v.solver.clone(),
            output: format!("{prefix}_{}", v.label),
            emit: crate::config::Emit::Both,
        })
        .collect();
    let cells = specs.par_iter().map(cmd_solve).collect::<Result<Vec<_>>>()?;
    let rows: Vec<CompareRow> = variants
        .iter()
        .zip(&cells)
        .map(|(v, c)| CompareRow {
            label: v.label.clone(),
            method: v.solver.method.name().to_string(),
            status: c.report.status.clone(),
            iterations: c.run.iterations(),
            f_evals: c.run.summary.total_f_evals,
            proj_calls: c.run.summary.total_proj_calls,
            final_dist_ref: finite(c.run.summary.final_dist_ref),
            wall_ns: c.run.summary.wall_ns,
        })
        .collect();
    let summary_path = PathBuf::from(format!("{prefix}_compare.csv"));
    io::write_table(&summary_path, &rows)?;
    Ok(CompareOutcome {
        exit_code: cells.iter().map(|c| c.exit_code).max().unwrap_or(EXIT_OK),
        rows,
        cells,
        summary_path,
    })
}

#[derive(Debug, Clone)]
pub struct FlowSpec {
    /// Stepsizes as multiples of `1/L`.
    pub coefficients: Vec<f64>,
    pub horizon: f64,
    pub step: f64,
    pub integrator: Integrator,
    pub sample_stride: usize,
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRow {
    pub coefficient: f64,
    pub lambda: f64,
    pub samples: usize,
    pub final_dist_ref: Option<f64>,
    pub final_gap: f64,
}

pub struct FlowOutcome {
    pub rows: Vec<FlowRow>,
    pub trajectories: Vec<fbf_core::flow::Trajectory>,
    pub paths: Vec<PathBuf>,
}

/// Integrates the continuous dynamics once per stepsize coefficient.
pub fn cmd_flow(problem: &str, spec: &FlowSpec, prefix: &str) -> Result<FlowOutcome> {
    let problem = lookup(problem)?;
    let x0 = match &spec.x0 {
        Some(x) if x.len() != problem.dim() => {
            return Err(BenchError::Config(format!("x0 needs {} entries", problem.dim())))
        }
        Some(x) => Vector::from_row_slice(x),
        None => problem.x0.clone(),
    };
    let runs = spec
        .coefficients
        .par_iter()
        .map(|&c| {
            let lambda = LambdaSpec::OverL(c).resolve(problem.lipschitz);
            let config = FlowConfig {
                lambda,
                x0: x0.clone(),
                step: spec.step,
                horizon: spec.horizon,
                integrator: spec.integrator,
                sample_stride: spec.sample_stride,
                lipschitz: Some(problem.lipschitz),
            };
            integrate(&config, &problem.op, &problem.set, problem.x_ref.as_ref()).map(|t| (c, lambda, t))
        })
        .collect::<fbf_core::Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut paths = Vec::new();
    let mut trajectories = Vec::new();
    for (c, lambda, traj) in runs {
        let path = PathBuf::from(format!("{prefix}_lambda{}_trajectory.csv", rho_tag(c)));
        io::write_trajectory(&path, &traj)?;
        rows.push(FlowRow {
            coefficient: c,
            lambda,
            samples: traj.len(),
            final_dist_ref: traj.dist_ref().last().copied().and_then(finite),
            final_gap: *traj.gap.last().unwrap_or(&f64::NAN),
        });
        paths.push(path);
        trajectories.push(traj);
    }
    io::write_table(Path::new(&format!("{prefix}_flow.csv")), &rows)?;
    Ok(FlowOutcome {
        rows,
        trajectories,
        paths,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CertifyOutcome {
    pub trace: String,
    pub problem: String,
    pub rows: usize,
    pub initial_dist: f64,
    pub certificate: CertificateJson,
}

/// Re-runs the diagnostics on a persisted trace. The starting point comes
/// from the neighbouring report when there is one, else the problem default.
pub fn cmd_certify(trace_path: &Path, problem: &str) -> Result<(CertifyOutcome, RateReport)> {
    let problem = lookup(problem)?;
    let trace = io::read_trace(trace_path)?;
    let sibling = trace_path
        .to_str()
        .and_then(|s| s.strip_suffix("_trace.csv"))
        .map(io::report_path)
        .filter(|p| p.exists());
    let x0 = match sibling {
        Some(path) => {
            let report: ReportJson = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            Vector::from_vec(report.resolved.x0)
        }
        None => problem.x0.clone(),
    };
    let report = certify_run(problem, &x0, &trace)
        .ok_or_else(|| BenchError::Config(format!("{} has no reference solution", problem.name)))?;
    let x_ref = problem.x_ref.as_ref().expect("checked above");
    Ok((
        CertifyOutcome {
            trace: trace_path.display().to_string(),
            problem: problem.name.to_string(),
            rows: trace.len(),
            initial_dist: (&x0 - x_ref).norm(),
            certificate: CertificateJson::from(&report),
        },
        report,
    ))
}
