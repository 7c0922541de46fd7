//! Continuous-time forward-backward-forward dynamics
//!
//! ```text
//! y(t) = P_C(x(t) − λF(x(t)))
//! ẋ(t) = −x(t) + y(t) + λ(F(x(t)) − F(y(t)))
//! ```
//!
//! integrated with fixed-step explicit Euler or classical RK4. An Euler
//! step of size `ρ` is exactly one relaxed FBF iteration with parameter `ρ`.

use crate::geometry::FeasibleSet;
use crate::operators::Operator;
use crate::{check_dim, ensure_finite, Error, Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    ExplicitEuler,
    Rk4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub lambda: f64,
    pub x0: Vector,
    pub step: f64,
    pub horizon: f64,
    pub integrator: Integrator,
    /// Keep every `sample_stride`-th state (the last state is always kept).
    pub sample_stride: usize,
    pub lipschitz: Option<f64>,
}

impl FlowConfig {
    pub fn rk4(lambda: f64, x0: Vector, step: f64, horizon: f64) -> Self {
        Self {
            lambda,
            x0,
            step,
            horizon,
            integrator: Integrator::Rk4,
            sample_stride: 100,
            lipschitz: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.lambda > 0.0) {
            return bad(format!("λ = {} must be positive", self.lambda));
        }
        if !(self.step > 0.0) || !(self.horizon > 0.0) || self.step > self.horizon {
            return bad(format!("need 0 < h ≤ T, got h = {}, T = {}", self.step, self.horizon));
        }
        if self.sample_stride == 0 {
            return bad("sample stride must be ≥ 1".into());
        }
        if let Some(l) = self.lipschitz {
            if self.lambda * l >= 1.0 {
                return bad(format!("λ·L = {} must be < 1", self.lambda * l));
            }
        }
        ensure_finite(&self.x0, "flow starting point")
    }
}

/// Sampled trajectory. `lyapunov` holds `‖x(t) − x_ref‖²` when a
/// reference was supplied, `gap` holds `‖x(t) − y(t)‖`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub lyapunov: Vec<f64>,
    pub gap: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&Vector> {
        self.states.last()
    }

    /// `‖x(t) − x_ref‖` at each sample, NaN without a reference.
    pub fn dist_ref(&self) -> Vec<f64> {
        if self.lyapunov.is_empty() {
            vec![f64::NAN; self.len()]
        } else {
            self.lyapunov.iter().map(|v| v.sqrt()).collect()
        }
    }
}

/// Returns `(ẋ, y)` at `x`.
fn field_and_projection(op: &dyn Operator, set: &FeasibleSet, lambda: f64, x: &Vector) -> Result<(Vector, Vector)> {
    let fx = op.eval(x)?;
    let y = set.project(&(x - &fx * lambda))?;
    let fy = op.eval(&y)?;
    let t = &y + (fx - fy) * lambda;
    Ok((t - x, y))
}

/// `−x + y + λ(F(x) − F(y))` with `y = P_C(x − λF(x))`.
pub fn vector_field(op: &dyn Operator, set: &FeasibleSet, lambda: f64, x: &Vector) -> Result<Vector> {
    if !(lambda > 0.0) {
        return Err(Error::Precondition(format!("λ = {lambda} must be positive")));
    }
    check_dim(op.dim(), x.len())?;
    Ok(field_and_projection(op, set, lambda, x)?.0)
}

/// One explicit Euler step `x + h·ẋ`.
pub fn euler_step(op: &dyn Operator, set: &FeasibleSet, lambda: f64, x: &Vector, h: f64) -> Result<Vector> {
    Ok(x + vector_field(op, set, lambda, x)? * h)
}

fn rk4_step(op: &dyn Operator, set: &FeasibleSet, lambda: f64, x: &Vector, h: f64) -> Result<Vector> {
    let k1 = vector_field(op, set, lambda, x)?;
    let k2 = vector_field(op, set, lambda, &(x + &k1 * (0.5 * h)))?;
    let k3 = vector_field(op, set, lambda, &(x + &k2 * (0.5 * h)))?;
    let k4 = vector_field(op, set, lambda, &(x + &k3 * h))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Integrates the dynamics from `config.x0` over `[0, T]` with
/// `round(T/h)` fixed steps.
pub fn integrate(
    config: &FlowConfig,
    op: &dyn Operator,
    set: &FeasibleSet,
    x_ref: Option<&Vector>,
) -> Result<Trajectory> {
    config.validate()?;
    check_dim(op.dim(), config.x0.len())?;
    check_dim(set.dim(), config.x0.len())?;
    if let Some(r) = x_ref {
        check_dim(config.x0.len(), r.len())?;
    }

    let steps = (config.horizon / config.step).round().max(1.0) as usize;
    let mut traj = Trajectory::default();
    let record = |traj: &mut Trajectory, t: f64, x: &Vector| -> Result<()> {
        let (_, y) = field_and_projection(op, set, config.lambda, x)?;
        traj.times.push(t);
        traj.gap.push((x - y).norm());
        if let Some(r) = x_ref {
            traj.lyapunov.push((x - r).norm_squared());
        }
        traj.states.push(x.clone());
        Ok(())
    };

    let mut x = config.x0.clone();
    record(&mut traj, 0.0, &x)?;
    for k in 1..=steps {
        let t = k as f64 * config.step;
        x = match config.integrator {
            Integrator::ExplicitEuler => euler_step(op, set, config.lambda, &x, config.step),
            Integrator::Rk4 => rk4_step(op, set, config.lambda, &x, config.step),
        }
        .map_err(|err| match err {
            Error::NonFinite(_) => Error::FlowDiverged { time: t },
            other => other,
        })?;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::FlowDiverged { time: t });
        }
        if k % config.sample_stride == 0 || k == steps {
            record(&mut traj, t, &x)?;
        }
    }
    Ok(traj)
}

/// Exponential decay rate `α = 2(1 − λL)(λγ/(1 + λL + λγ))²` of
/// `‖x(t) − x*‖²` under strong pseudo-monotonicity.
pub fn exp_rate_alpha(lambda: f64, lipschitz: f64, gamma: f64) -> Result<f64> {
    if !(lambda > 0.0 && lipschitz > 0.0 && lambda * lipschitz < 1.0) {
        return Err(Error::Precondition(format!(
            "need 0 < λ < 1/L, got λ = {lambda}, L = {lipschitz}"
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::Precondition(format!("γ = {gamma} must be positive")));
    }
    let lg = lambda * gamma;
    let k = lg / (1.0 + lambda * lipschitz + lg);
    Ok(2.0 * (1.0 - lambda * lipschitz) * k * k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::FnOperator;
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    #[test]
    fn zero_operator_field() {
        let set = FeasibleSet::cube(2, 0.0, 1.0).unwrap();
        let zero = FnOperator::new(2, |_: &Vector| Vector::zeros(2));
        let x = v(&[2.0, 0.5]);
        assert_eq!(vector_field(&zero, &set, 0.4, &x).unwrap(), v(&[-1.0, 0.0]));
    }

    #[test]
    fn equilibrium_at_solution() {
        let set = FeasibleSet::cube(1, -1.0, 1.0).unwrap();
        let id = FnOperator::new(1, |x: &Vector| x.clone());
        assert_eq!(vector_field(&id, &set, 0.5, &v(&[0.0])).unwrap(), v(&[0.0]));
    }

    #[test]
    fn alpha_examples() {
        let l = 5.0679;
        let lg: f64 = 0.5 * 0.0764 / l;
        let oracle = 2.0 * 0.5 * (lg / (1.5 + lg)).powi(2);
        let a = exp_rate_alpha(0.5 / l, l, 0.0764).unwrap();
        assert_abs_diff_eq!(a, oracle, epsilon = 1e-18);
        assert_abs_diff_eq!(a, 2.50e-5, epsilon = 5e-8);
        assert!(exp_rate_alpha((1.0 - 1e-9) / l, l, 0.0764).unwrap() < 1e-12);
        assert!(exp_rate_alpha(1.0 / l, l, 0.0764).is_err());
        let lam = 0.01;
        assert!(exp_rate_alpha(lam, 2.0, 0.2).unwrap() > exp_rate_alpha(lam, 2.0, 0.1).unwrap());
    }

    #[test]
    fn linear_flow_decays() {
        // F(x) = x on the real line: ẋ = −x + (1−λ)x + λ·λx = −λ(1−λ)x
        let set = FeasibleSet::cube(1, -1e12, 1e12).unwrap();
        let id = FnOperator::new(1, |x: &Vector| x.clone());
        let mut cfg = FlowConfig::rk4(0.5, v(&[1.0]), 1e-2, 4.0);
        cfg.sample_stride = 50;
        let traj = integrate(&cfg, &id, &set, Some(&v(&[0.0]))).unwrap();
        assert_eq!(traj.times.len(), 9);
        assert_abs_diff_eq!(traj.final_state().unwrap()[0], (-0.25f64 * 4.0).exp(), epsilon = 1e-9);
        assert!(traj.lyapunov.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = FlowConfig::rk4(0.5, v(&[1.0]), 1.0, 0.5);
        assert!(cfg.validate().is_err());
        cfg.step = 0.1;
        cfg.sample_stride = 0;
        assert!(cfg.validate().is_err());
        cfg.sample_stride = 1;
        cfg.lipschitz = Some(2.0);
        assert!(cfg.validate().is_err());
    }
}
