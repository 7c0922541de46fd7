//! Discrete methods for `VI(F, C)`.
//!
//! [`fbf_step`] is Tseng's forward-backward-forward iteration with a
//! relaxation parameter `ρ_n`:
//!
//! ```text
//! y_n     = P_C(x_n − λ_n F(x_n))
//! t_n     = y_n + λ_n (F(x_n) − F(y_n))
//! x_{n+1} = ρ_n t_n + (1 − ρ_n) x_n
//! ```
//!
//! The extragradient, subgradient-extragradient and projected-gradient
//! steps are provided as baselines. [`solve`] drives any of them and
//! records one [`TraceRow`] per executed iteration.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diagnostics::{summarize, RunSummary, TraceRow};
use crate::geometry::{project_halfspace, FeasibleSet};
use crate::operators::Operator;
use crate::{check_dim, ensure_finite, Error, Result, Vector};

/// Iterates with a norm above this are reported as divergence.
pub const DIVERGENCE_NORM: f64 = 1e12;
/// Componentwise threshold under which `F(x) − F(y)` counts as zero in
/// the adaptive stepsize rule.
pub const ADAPTIVE_ZERO: f64 = 1e-15;

/// Tolerance for the exact-termination test at iterate `x`.
pub fn exact_tol(x: &Vector) -> f64 {
    1e-13 * (1.0 + x.norm())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fbf,
    Extragradient,
    SubgradientExtragradient,
    ProjectedGradient,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Fbf => "fbf",
            Method::Extragradient => "extragradient",
            Method::SubgradientExtragradient => "subgradient_extragradient",
            Method::ProjectedGradient => "projected_gradient",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaMode {
    Fixed { lambda: f64 },
    Adaptive { lambda0: f64, mu: f64 },
}

impl LambdaMode {
    pub fn initial(&self) -> f64 {
        match *self {
            LambdaMode::Fixed { lambda } => lambda,
            LambdaMode::Adaptive { lambda0, .. } => lambda0,
        }
    }
}

/// Relaxation parameters. A sequence shorter than the run repeats its last
/// entry.
#[derive(Debug, Clone, PartialEq)]
pub enum RhoSchedule {
    Constant(f64),
    Sequence(Vec<f64>),
}

impl RhoSchedule {
    pub fn at(&self, n: usize) -> f64 {
        match self {
            RhoSchedule::Constant(rho) => *rho,
            RhoSchedule::Sequence(seq) => *seq.get(n).or(seq.last()).unwrap_or(&1.0),
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            RhoSchedule::Constant(rho) => vec![*rho],
            RhoSchedule::Sequence(seq) => seq.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopRule {
    /// Stop once the natural residual `‖x_n − y_n‖` of an iteration falls to
    /// `tol`.
    ResidualBelow(f64),
    /// Stop at the first iterate with `‖x_n − reference‖ ≤ tol`.
    DistToRefBelow { tol: f64, reference: Vector },
    /// Run until the exact-termination test fires or `max_iter`.
    ExactTermination,
}

impl StopRule {
    pub fn reference(&self) -> Option<&Vector> {
        match self {
            StopRule::DistToRefBelow { reference, .. } => Some(reference),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    pub lambda_mode: LambdaMode,
    pub rho: RhoSchedule,
    pub x0: Vector,
    pub max_iter: usize,
    pub stop: StopRule,
    pub seed: u64,
    /// Lipschitz estimate used to validate the stepsize.
    pub lipschitz: Option<f64>,
    /// Accept `λ·L ≥ 1` or `ρ` beyond the overrelaxation bound.
    pub allow_large_step: bool,
}

impl SolverConfig {
    /// Plain FBF with fixed `λ`, `ρ = 1` and exact termination.
    pub fn fbf(lambda: f64, x0: Vector, max_iter: usize) -> Self {
        Self {
            method: Method::Fbf,
            lambda_mode: LambdaMode::Fixed { lambda },
            rho: RhoSchedule::Constant(1.0),
            x0,
            max_iter,
            stop: StopRule::ExactTermination,
            seed: 0,
            lipschitz: None,
            allow_large_step: false,
        }
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_rho(mut self, rho: RhoSchedule) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_stop(mut self, stop: StopRule) -> Self {
        self.stop = stop;
        self
    }

    pub fn with_lipschitz(mut self, lipschitz: f64) -> Self {
        self.lipschitz = Some(lipschitz);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        ensure_finite(&self.x0, "starting point")?;
        if self.x0.is_empty() {
            return bad("starting point is empty".into());
        }
        match self.lambda_mode {
            LambdaMode::Fixed { lambda } => {
                if !(lambda > 0.0) || !lambda.is_finite() {
                    return bad(format!("stepsize λ = {lambda} must be positive"));
                }
                if let Some(l) = self.lipschitz {
                    if lambda * l >= 1.0 && !self.allow_large_step {
                        return bad(format!(
                            "λ·L = {} ≥ 1; convergence needs λ < 1/L (allow_large_step overrides)",
                            lambda * l
                        ));
                    }
                }
            }
            LambdaMode::Adaptive { lambda0, mu } => {
                if self.method != Method::Fbf {
                    return bad("adaptive stepsizes are only defined for fbf".into());
                }
                if !(lambda0 > 0.0) || !lambda0.is_finite() {
                    return bad(format!("λ0 = {lambda0} must be positive"));
                }
                if !(mu > 0.0 && mu < 1.0) {
                    return bad(format!("μ = {mu} must lie in (0, 1)"));
                }
            }
        }
        let rhos = self.rho.values();
        if rhos.is_empty() {
            return bad("relaxation sequence is empty".into());
        }
        for &rho in &rhos {
            if !(0.0..2.0).contains(&rho) {
                return bad(format!("ρ = {rho} outside [0, 2)"));
            }
            if self.method != Method::Fbf && rho != 1.0 {
                return bad(format!("relaxation ρ = {rho} is only supported for fbf"));
            }
            if rho > 1.0 && !self.allow_large_step {
                if let (Some(l), LambdaMode::Fixed { lambda }) = (self.lipschitz, self.lambda_mode) {
                    let bound = overrelaxation_bound(lambda, l);
                    if rho >= bound {
                        return bad(format!("ρ = {rho} violates ρ < 2 − 2λL/(1 + λL) = {bound}"));
                    }
                }
            }
        }
        match &self.stop {
            StopRule::ResidualBelow(tol) if !(*tol >= 0.0) => {
                return bad(format!("residual tolerance {tol} must be ≥ 0"))
            }
            StopRule::DistToRefBelow { tol, reference } => {
                if !(*tol >= 0.0) {
                    return bad(format!("distance tolerance {tol} must be ≥ 0"));
                }
                check_dim(self.x0.len(), reference.len())?;
                ensure_finite(reference, "reference solution")?;
            }
            _ => {}
        }
        Ok(())
    }
}

/// Upper limit `2 − 2λL/(1 + λL)` on overrelaxation parameters.
pub fn overrelaxation_bound(lambda: f64, lipschitz: f64) -> f64 {
    let ll = lambda * lipschitz;
    2.0 - 2.0 * ll / (1.0 + ll)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    SolvedExact,
    TolReached,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    /// Number of completed iterations.
    pub n: usize,
    /// Current iterate; after exact termination, the solution `y_n`.
    pub x: Vector,
    /// `y_n` of the last iteration.
    pub y: Vector,
    /// `t_n` of the last fbf iteration.
    pub t: Vector,
    /// Stepsize for the next iteration.
    pub lambda: f64,
    /// Relaxation used by the last iteration.
    pub rho: f64,
    pub f_evals: usize,
    /// Projections onto `C`.
    pub proj_calls: usize,
    /// Closed-form halfspace projections (subgradient-extragradient).
    pub halfspace_calls: usize,
    pub status: Status,
}

impl SolverState {
    pub fn new(config: &SolverConfig) -> Self {
        Self {
            n: 0,
            x: config.x0.clone(),
            y: config.x0.clone(),
            t: config.x0.clone(),
            lambda: config.lambda_mode.initial(),
            rho: config.rho.at(0),
            f_evals: 0,
            proj_calls: 0,
            halfspace_calls: 0,
            status: Status::Running,
        }
    }
}

fn ensure_running(state: &SolverState) -> Result<()> {
    if state.status == Status::Running {
        Ok(())
    } else {
        Err(Error::Precondition(format!("solver already stopped ({:?})", state.status)))
    }
}

fn accept(state: &SolverState, next: &Vector) -> Result<()> {
    let reason = if !next.iter().all(|v| v.is_finite()) {
        "non-finite iterate".to_string()
    } else if next.norm() > DIVERGENCE_NORM {
        format!("‖x‖ = {:e} exceeds {DIVERGENCE_NORM:e}", next.norm())
    } else {
        return Ok(());
    };
    Err(Error::Diverged {
        iter: state.n,
        reason,
        state: Box::new(state.clone()),
    })
}

/// Evaluates `F`, surfacing non-finite values as divergence with the state.
fn eval_tracked(op: &dyn Operator, x: &Vector, state: &mut SolverState) -> Result<Vector> {
    state.f_evals += 1;
    op.eval(x).map_err(|err| match err {
        Error::NonFinite(what) => Error::Diverged {
            iter: state.n,
            reason: format!("non-finite {what}"),
            state: Box::new(state.clone()),
        },
        other => other,
    })
}

fn project_tracked(set: &FeasibleSet, v: &Vector, state: &mut SolverState) -> Result<Vector> {
    state.proj_calls += 1;
    accept(state, v)?;
    set.project(v)
}

fn finish_exact(mut state: SolverState, y: Vector) -> SolverState {
    state.x = y.clone();
    state.t = y.clone();
    state.y = y;
    state.status = Status::SolvedExact;
    state.n += 1;
    state
}

/// One relaxed forward-backward-forward iteration: two operator evaluations
/// and one projection.
pub fn fbf_step(
    mut state: SolverState,
    op: &dyn Operator,
    set: &FeasibleSet,
    config: &SolverConfig,
) -> Result<SolverState> {
    ensure_running(&state)?;
    let lambda = state.lambda;
    let rho = config.rho.at(state.n);
    state.rho = rho;
    let x = state.x.clone();

    let fx = eval_tracked(op, &x, &mut state)?;
    let y = project_tracked(set, &(&x - &fx * lambda), &mut state)?;
    let fy = eval_tracked(op, &y, &mut state)?;

    let tol = exact_tol(&x);
    if (&y - &x).norm() <= tol || fy.norm() <= tol {
        return Ok(finish_exact(state, y));
    }

    let t = &y + (&fx - &fy) * lambda;
    let next = &x + (&t - &x) * rho;
    accept(&state, &next)?;

    if let LambdaMode::Adaptive { mu, .. } = config.lambda_mode {
        state.lambda = adaptive_lambda(lambda, mu, &x, &y, &fx, &fy);
    }
    state.x = next;
    state.y = y;
    state.t = t;
    state.n += 1;
    Ok(state)
}

/// Adaptive stepsize update:
/// `λ_{n+1} = min(μ‖x_n − y_n‖ / ‖F(x_n) − F(y_n)‖, λ_n)` when
/// `F(x_n) ≠ F(y_n)`, else `λ_n`.
pub fn adaptive_lambda(lambda: f64, mu: f64, x: &Vector, y: &Vector, fx: &Vector, fy: &Vector) -> f64 {
    let diff = fx - fy;
    if diff.iter().all(|d| d.abs() <= ADAPTIVE_ZERO) {
        return lambda;
    }
    (mu * (x - y).norm() / diff.norm()).min(lambda)
}

/// Korpelevich's extragradient iteration: two evaluations, two projections.
pub fn extragradient_step(mut state: SolverState, op: &dyn Operator, set: &FeasibleSet) -> Result<SolverState> {
    ensure_running(&state)?;
    let lambda = state.lambda;
    state.rho = 1.0;
    let x = state.x.clone();

    let fx = eval_tracked(op, &x, &mut state)?;
    let y = project_tracked(set, &(&x - &fx * lambda), &mut state)?;
    let fy = eval_tracked(op, &y, &mut state)?;
    let tol = exact_tol(&x);
    if (&y - &x).norm() <= tol || fy.norm() <= tol {
        return Ok(finish_exact(state, y));
    }
    let next = project_tracked(set, &(&x - &fy * lambda), &mut state)?;
    accept(&state, &next)?;
    state.x = next;
    state.y = y;
    state.n += 1;
    Ok(state)
}

/// Subgradient-extragradient iteration: the second projection goes onto the
/// halfspace `T_n = {w : ⟨x_n − λF(x_n) − y_n, w − y_n⟩ ≤ 0}` in closed form.
pub fn subgradient_extragradient_step(
    mut state: SolverState,
    op: &dyn Operator,
    set: &FeasibleSet,
) -> Result<SolverState> {
    ensure_running(&state)?;
    let lambda = state.lambda;
    state.rho = 1.0;
    let x = state.x.clone();

    let fx = eval_tracked(op, &x, &mut state)?;
    let forward = &x - &fx * lambda;
    let y = project_tracked(set, &forward, &mut state)?;
    let fy = eval_tracked(op, &y, &mut state)?;
    let tol = exact_tol(&x);
    if (&y - &x).norm() <= tol || fy.norm() <= tol {
        return Ok(finish_exact(state, y));
    }
    let normal = &forward - &y;
    let offset = normal.dot(&y);
    let target = &x - &fy * lambda;
    accept(&state, &target)?;
    state.halfspace_calls += 1;
    let next = project_halfspace(&normal, offset, &target);
    accept(&state, &next)?;
    state.x = next;
    state.y = y;
    state.n += 1;
    Ok(state)
}

/// `x_{n+1} = P_C(x_n − λF(x_n))`: one evaluation, one projection.
pub fn projected_gradient_step(mut state: SolverState, op: &dyn Operator, set: &FeasibleSet) -> Result<SolverState> {
    ensure_running(&state)?;
    let lambda = state.lambda;
    state.rho = 1.0;
    let x = state.x.clone();

    let fx = eval_tracked(op, &x, &mut state)?;
    let y = project_tracked(set, &(&x - &fx * lambda), &mut state)?;
    if (&y - &x).norm() <= exact_tol(&x) {
        return Ok(finish_exact(state, y));
    }
    state.x = y.clone();
    state.y = y;
    state.n += 1;
    Ok(state)
}

/// `‖x − P_C(x − λF(x))‖`, zero exactly at solutions of `VI(F, C)`.
pub fn natural_residual(op: &dyn Operator, set: &FeasibleSet, x: &Vector, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Precondition(format!("λ = {lambda} must be positive")));
    }
    let fx = op.eval(x)?;
    Ok((x - set.project(&(x - fx * lambda))?).norm())
}

/// Applies one iteration of the configured method.
pub fn step(state: SolverState, op: &dyn Operator, set: &FeasibleSet, config: &SolverConfig) -> Result<SolverState> {
    match config.method {
        Method::Fbf => fbf_step(state, op, set, config),
        Method::Extragradient => extragradient_step(state, op, set),
        Method::SubgradientExtragradient => subgradient_extragradient_step(state, op, set),
        Method::ProjectedGradient => projected_gradient_step(state, op, set),
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub status: Status,
    pub state: SolverState,
    pub trace: Vec<TraceRow>,
    pub summary: RunSummary,
}

impl RunReport {
    pub fn solution(&self) -> &Vector {
        &self.state.x
    }

    pub fn iterations(&self) -> usize {
        self.trace.len()
    }
}

/// Runs the configured method until a stop rule fires.
///
/// Row `n` of the trace describes the iteration `x_n → x_{n+1}`:
/// `residual = ‖x_n − y_n‖`, `step_norm = ‖x_{n+1} − x_n‖` and
/// `dist_ref = ‖x_{n+1} − x_ref‖` (NaN without a reference). Counters are
/// cumulative.
pub fn solve(config: &SolverConfig, op: &dyn Operator, set: &FeasibleSet) -> Result<RunReport> {
    config.validate()?;
    check_dim(op.dim(), config.x0.len())?;
    check_dim(set.dim(), config.x0.len())?;

    let started = Instant::now();
    let mut state = SolverState::new(config);
    let mut trace = Vec::new();
    let reference = config.stop.reference();
    let reached = |x: &Vector| match &config.stop {
        StopRule::DistToRefBelow { tol, reference } => (x - reference).norm() <= *tol,
        _ => false,
    };

    let status = loop {
        if reached(&state.x) {
            break Status::TolReached;
        }
        if state.n >= config.max_iter {
            break Status::MaxIter;
        }
        let x_prev = state.x.clone();
        let lambda = state.lambda;
        let iter = state.n;
        state = step(state, op, set, config)?;
        let row = TraceRow {
            iter,
            lambda,
            rho: state.rho,
            residual: (&x_prev - &state.y).norm(),
            dist_ref: reference.map_or(f64::NAN, |r| (&state.x - r).norm()),
            step_norm: (&state.x - &x_prev).norm(),
            f_evals: state.f_evals,
            proj_calls: state.proj_calls,
            elapsed_ns: started.elapsed().as_nanos() as u64,
        };
        let residual = row.residual;
        trace.push(row);
        if state.status == Status::SolvedExact {
            break Status::SolvedExact;
        }
        if let StopRule::ResidualBelow(tol) = config.stop {
            if residual <= tol {
                break Status::TolReached;
            }
        }
    };
    state.status = status;
    let mut summary = summarize(&trace);
    summary.wall_ns = started.elapsed().as_nanos() as u64;
    Ok(RunReport {
        status,
        state,
        trace,
        summary,
    })
}
