//! Rate formulas, per-iteration certificates and trace summaries.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Absolute slack for the Fejér and key-inequality checks.
pub const CERTIFICATE_SLACK: f64 = 1e-8;
/// Absolute slack for the per-iteration linear-rate check.
pub const RATE_SLACK: f64 = 1e-10;

/// One executed iteration `x_n → x_{n+1}`.
///
/// `residual` is `‖x_n − y_n‖`, `step_norm` is `‖x_{n+1} − x_n‖` and
/// `dist_ref` is `‖x_{n+1} − x_ref‖` (NaN without a reference). Counters
/// are cumulative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub lambda: f64,
    pub rho: f64,
    pub residual: f64,
    pub dist_ref: f64,
    pub step_norm: f64,
    pub f_evals: usize,
    pub proj_calls: usize,
    pub elapsed_ns: u64,
}

impl TraceRow {
    /// Equality ignoring `elapsed_ns`; NaN distances compare equal.
    pub fn same_numbers(&self, other: &TraceRow) -> bool {
        let eq = |a: f64, b: f64| a == b || (a.is_nan() && b.is_nan());
        self.iter == other.iter
            && eq(self.lambda, other.lambda)
            && eq(self.rho, other.rho)
            && eq(self.residual, other.residual)
            && eq(self.dist_ref, other.dist_ref)
            && eq(self.step_norm, other.step_norm)
            && self.f_evals == other.f_evals
            && self.proj_calls == other.proj_calls
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub iterations: usize,
    pub final_residual: f64,
    pub final_dist_ref: f64,
    pub total_f_evals: usize,
    pub total_proj_calls: usize,
    pub wall_ns: u64,
    /// Set when the trace had no rows.
    pub empty: bool,
}

pub fn summarize(trace: &[TraceRow]) -> RunSummary {
    match trace.last() {
        None => RunSummary {
            iterations: 0,
            final_residual: 0.0,
            final_dist_ref: 0.0,
            total_f_evals: 0,
            total_proj_calls: 0,
            wall_ns: 0,
            empty: true,
        },
        Some(last) => RunSummary {
            iterations: trace.len(),
            final_residual: last.residual,
            final_dist_ref: last.dist_ref,
            total_f_evals: last.f_evals,
            total_proj_calls: last.proj_calls,
            wall_ns: last.elapsed_ns,
            empty: false,
        },
    }
}

fn strong_factor(lambda: f64, lipschitz: f64, gamma: f64) -> f64 {
    let lg = lambda * gamma;
    lg / (1.0 + lambda * lipschitz + lg)
}

/// Per-iteration contraction factor under strong pseudo-monotonicity:
/// `δ = (1 − ρ(1 − λ²L²)(λγ/(1 + λL + λγ))²)^{1/2}`.
pub fn linear_rate_delta(lambda: f64, lipschitz: f64, gamma: f64, rho: f64) -> Result<f64> {
    if !(lambda > 0.0 && lipschitz > 0.0 && lambda * lipschitz < 1.0) {
        return Err(Error::Precondition(format!(
            "need 0 < λ < 1/L, got λ = {lambda}, L = {lipschitz}"
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::Precondition(format!("γ = {gamma} must be positive")));
    }
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Precondition(format!("ρ = {rho} outside (0, 1]")));
    }
    let ll = lambda * lipschitz;
    let k = strong_factor(lambda, lipschitz, gamma);
    Ok((1.0 - rho * (1.0 - ll * ll) * k * k).sqrt())
}

/// Constants a trace is certified against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertificateConstants {
    pub lipschitz: f64,
    /// Strong pseudo-monotonicity modulus, if any; enables the rate checks.
    pub modulus: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// `δ_n` for each row; NaN where the formula's preconditions fail or no
    /// modulus was given.
    pub delta_theoretical: Vec<f64>,
    /// Geometric factor fitted on the tail half of the distances; NaN when
    /// fewer than two usable points remain.
    pub delta_empirical: f64,
    pub fejer_violations: usize,
    pub key_inequality_violations: usize,
    /// Rows with `d_{n+1} > δ_n d_n + RATE_SLACK`.
    pub rate_violations: usize,
}

impl RateReport {
    pub fn max_delta(&self) -> f64 {
        self.delta_theoretical
            .iter()
            .copied()
            .filter(|d| d.is_finite())
            .fold(f64::NAN, f64::max)
    }
}

/// Checks a forward-backward-forward trace against its per-iteration
/// guarantees.
///
/// With `d_n = ‖x_n − x_ref‖` (`d_0 = initial_dist`, `d_{n+1}` the row's
/// `dist_ref`) each row is tested for Fejér monotonicity `d_{n+1} ≤ d_n` and
/// for the key inequality
/// `d_{n+1}² ≤ d_n² − ρ(1 − λ²L²)‖y_n − x_n‖² − ρ(1 − ρ)‖t_n − x_n‖²`,
/// using `‖t_n − x_n‖ = step_norm/ρ`. Violations are counted, never raised.
pub fn certify_trace(trace: &[TraceRow], initial_dist: f64, constants: CertificateConstants) -> RateReport {
    let mut fejer = 0;
    let mut key_ineq = 0;
    let mut rate = 0;
    let mut deltas = Vec::with_capacity(trace.len());
    let mut prev = initial_dist;
    let l = constants.lipschitz;

    for row in trace {
        let next = row.dist_ref;
        if next > prev + CERTIFICATE_SLACK {
            fejer += 1;
        }
        let rho = row.rho;
        let relax_term = if rho > 0.0 {
            (1.0 - rho) * row.step_norm * row.step_norm / rho
        } else {
            0.0
        };
        let ll = row.lambda * l;
        let bound = prev * prev - rho * (1.0 - ll * ll) * row.residual * row.residual - relax_term;
        if next * next > bound + CERTIFICATE_SLACK {
            key_ineq += 1;
        }
        let delta = constants
            .modulus
            .and_then(|gamma| linear_rate_delta(row.lambda, l, gamma, rho).ok())
            .unwrap_or(f64::NAN);
        if delta.is_finite() && next > delta * prev + RATE_SLACK {
            rate += 1;
        }
        deltas.push(delta);
        prev = next;
    }

    RateReport {
        delta_theoretical: deltas,
        delta_empirical: fit_geometric_tail(trace),
        fejer_violations: fejer,
        key_inequality_violations: key_ineq,
        rate_violations: rate,
    }
}

/// Least-squares slope of `ln dist_ref` against the iteration index over
/// the tail half of the trace, returned as `exp(slope)`.
pub fn fit_geometric_tail(trace: &[TraceRow]) -> f64 {
    let tail = &trace[trace.len() / 2..];
    let points: Vec<(f64, f64)> = tail
        .iter()
        .filter(|r| r.dist_ref.is_finite() && r.dist_ref > 0.0)
        .map(|r| (r.iter as f64, r.dist_ref.ln()))
        .collect();
    if points.len() < 2 {
        return f64::NAN;
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    (sxy / sxx).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn row(iter: usize, dist: f64) -> TraceRow {
        TraceRow {
            iter,
            lambda: 0.1,
            rho: 1.0,
            residual: 0.0,
            dist_ref: dist,
            step_norm: 0.0,
            f_evals: 2 * (iter + 1),
            proj_calls: iter + 1,
            elapsed_ns: 0,
        }
    }

    const CONSTANTS: CertificateConstants = CertificateConstants {
        lipschitz: 1.0,
        modulus: None,
    };

    #[test]
    fn geometric_trace_fit() {
        let trace: Vec<_> = (0..60).map(|n| row(n, 0.75f64.powi(n as i32 + 1))).collect();
        let report = certify_trace(&trace, 1.0, CONSTANTS);
        assert_abs_diff_eq!(report.delta_empirical, 0.75, epsilon = 1e-6);
        assert_eq!(report.fejer_violations, 0);
        assert_eq!(report.key_inequality_violations, 0);
    }

    #[test]
    fn injected_increase_is_counted() {
        let mut trace: Vec<_> = (0..20).map(|n| row(n, 0.9f64.powi(n as i32 + 1))).collect();
        trace[7].dist_ref = 2.0;
        trace[8].dist_ref = 0.9f64.powi(9);
        let report = certify_trace(&trace, 1.0, CONSTANTS);
        assert_eq!(report.fejer_violations, 1);
    }

    #[test]
    fn delta_examples() {
        let l = 5.0679;
        let d = linear_rate_delta(0.5 / l, l, 0.0764, 1.0).unwrap();
        // independent evaluation: λL = 0.5, λγ = 0.5·0.0764/5.0679
        let lg = 0.5 * 0.0764 / 5.0679;
        let k: f64 = lg / (1.5 + lg);
        let oracle = (1.0 - 0.75 * k * k).sqrt();
        assert_abs_diff_eq!(d, oracle, epsilon = 1e-15);
        assert_abs_diff_eq!(d, 0.999_990_6, epsilon = 5e-8);
        assert_abs_diff_eq!(linear_rate_delta(0.5 / l, l, 0.0764, 1e-12).unwrap(), 1.0, epsilon = 1e-15);
        assert!(linear_rate_delta(1.0 / l, l, 0.0764, 1.0).is_err());
        assert!(linear_rate_delta(0.1, l, 0.0, 1.0).is_err());
        assert!(linear_rate_delta(0.1, l, 0.1, 0.0).is_err());
    }

    #[test]
    fn delta_monotone_on_grid() {
        let (l, g) = (2.0, 0.5);
        let rhos: Vec<f64> = (1..=100).map(|k| k as f64 / 100.0).collect();
        for w in rhos.windows(2) {
            assert!(linear_rate_delta(0.3, l, g, w[1]).unwrap() < linear_rate_delta(0.3, l, g, w[0]).unwrap());
        }
        // δ increases as λL → 1 with λγ held fixed through γ = c/λ
        let lambdas: Vec<f64> = (1..=100).map(|k| 0.499 * k as f64 / 100.0).collect();
        for w in lambdas.windows(2) {
            let d0 = linear_rate_delta(w[0], l, 0.05 / w[0], 1.0).unwrap();
            let d1 = linear_rate_delta(w[1], l, 0.05 / w[1], 1.0).unwrap();
            assert!(d1 > d0);
        }
    }

    #[test]
    fn summarize_empty_and_last() {
        let s = summarize(&[]);
        assert!(s.empty);
        assert_eq!(s.iterations, 0);
        let trace: Vec<_> = (0..5).map(|n| row(n, 1.0 / (n + 1) as f64)).collect();
        let s = summarize(&trace);
        assert_eq!((s.iterations, s.total_f_evals, s.total_proj_calls), (5, 10, 5));
        assert_eq!(s.final_dist_ref, 0.2);
    }
}
