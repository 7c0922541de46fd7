mod common;

use common::*;
use fbf_core::diagnostics::{certify_trace, CertificateConstants};
use fbf_core::geometry::FeasibleSet;
use fbf_core::operators::{FnOperator, Operator, OperatorSpec};
use fbf_core::solvers::{
    exact_tol, natural_residual, solve, LambdaMode, Method, RhoSchedule, SolverConfig, Status, StopRule,
};
use fbf_core::{Matrix, Vector};
use proptest::prelude::*;

fn vec_in(dim: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vector> {
    prop::collection::vec(lo..hi, dim).prop_map(Vector::from_vec)
}

fn polytope_bound() -> f64 {
    polytope_op().lipschitz_upper_bound().unwrap()
}

fn to_ref(tol: f64, reference: Vector) -> StopRule {
    StopRule::DistToRefBelow { tol, reference }
}

#[test]
fn polytope_solution_is_exact() {
    let op = polytope_op();
    let set = polytope_set();
    assert!(natural_residual(&op, &set, &polytope_solution(), 0.1).unwrap() <= 1e-15);
    assert!(natural_residual(&op, &set, &v(&[1.0, 3.0, 2.0, 1.0, 4.0]), 0.1).unwrap() > 0.1);
}

#[test]
fn plane_solution_has_zero_residual() {
    assert_eq!(natural_residual(&plane_op(), &plane_set(), &Vector::zeros(3), 0.3).unwrap(), 0.0);
}

#[test]
fn fractional_fixed_step_reaches_ones() {
    let set = FeasibleSet::cube(5, 1.0, 3.0).unwrap();
    let ones = Vector::from_element(5, 1.0);
    let config = SolverConfig::fbf(0.9 / 148.68, v(&[3.0, 1.5, 2.0, 1.5, 2.0]), 10_000)
        .with_lipschitz(148.68)
        .with_stop(to_ref(1e-6, ones.clone()));
    let report = solve(&config, &fractional_op(), &set).unwrap();
    assert_eq!(report.status, Status::TolReached);
    assert!((report.solution() - ones).norm() <= 1e-6);
}

#[test]
fn overrelaxed_run_is_eventually_fejer() {
    let l = polytope_bound();
    let config = SolverConfig::fbf(0.5 / l, v(&[1.0, 3.0, 2.0, 1.0, 4.0]), 20_000)
        .with_lipschitz(l)
        .with_rho(RhoSchedule::Constant(1.3))
        .with_stop(to_ref(1e-9, polytope_solution()));
    let report = solve(&config, &polytope_op(), &polytope_set()).unwrap();
    assert_eq!(report.status, Status::TolReached);
    let tail = &report.trace[report.trace.len() / 2..];
    assert!(tail.windows(2).all(|w| w[1].dist_ref <= w[0].dist_ref + 1e-10));
}

#[test]
fn counters_per_method() {
    let l = polytope_bound();
    let x0 = v(&[1.0, 3.0, 2.0, 1.0, 4.0]);
    let base = SolverConfig::fbf(0.9 / l, x0, 40).with_lipschitz(l);
    let op = polytope_op();
    let set = polytope_set();
    for (method, evals, projs) in [
        (Method::Fbf, 2, 1),
        (Method::Extragradient, 2, 2),
        (Method::SubgradientExtragradient, 2, 1),
        (Method::ProjectedGradient, 1, 1),
    ] {
        let report = solve(&base.clone().with_method(method), &op, &set).unwrap();
        assert_eq!(report.status, Status::MaxIter);
        for row in &report.trace {
            let n = row.iter + 1;
            assert_eq!((row.f_evals, row.proj_calls), (evals * n, projs * n), "{method:?}");
        }
        if method == Method::SubgradientExtragradient {
            assert_eq!(report.state.halfspace_calls, 40);
        }
    }
}

#[test]
fn exact_termination_is_sound() {
    // F(x) = x − c on a box: clamp(c) is a fixed point of the forward step
    let set = FeasibleSet::cube(3, -1.0, 1.0).unwrap();
    let c = v(&[0.5, 3.0, -2.0]);
    let shift = c.clone();
    let op = FnOperator::new(3, move |x: &Vector| x - &shift);
    let x0 = set.project(&c).unwrap();
    let config = SolverConfig::fbf(0.4, x0.clone(), 10).with_lipschitz(1.0);
    let report = solve(&config, &op, &set).unwrap();
    assert_eq!(report.status, Status::SolvedExact);
    assert_eq!(report.iterations(), 1);
    let x = report.solution();
    assert!(natural_residual(&op, &set, x, 0.4).unwrap() <= exact_tol(x) * (1.0 + 0.4));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn polytope_key_inequality_and_fejer(x0 in vec_in(5, -1.0, 6.0), rho in 0.0..=1.0f64, c in 0.1..0.95f64) {
        let l = polytope_bound();
        let config = SolverConfig::fbf(c / l, x0, 3_000)
            .with_lipschitz(l)
            .with_rho(RhoSchedule::Constant(rho))
            .with_stop(to_ref(1e-8, polytope_solution()));
        let report = solve(&config, &polytope_op(), &polytope_set()).unwrap();
        let d0 = (&config.x0 - polytope_solution()).norm();
        let cert = certify_trace(&report.trace, d0, CertificateConstants { lipschitz: l, modulus: None });
        prop_assert_eq!(cert.key_inequality_violations, 0);
        prop_assert_eq!(cert.fejer_violations, 0);
    }

    #[test]
    fn fractional_key_inequality(x0 in vec_in(5, 0.0, 4.0), rho in 0.05..=1.0f64) {
        let set = FeasibleSet::cube(5, 1.0, 3.0).unwrap();
        let ones = Vector::from_element(5, 1.0);
        let config = SolverConfig::fbf(0.9 / 148.68, x0, 2_000)
            .with_lipschitz(148.68)
            .with_rho(RhoSchedule::Constant(rho))
            .with_stop(to_ref(1e-8, ones.clone()));
        let report = solve(&config, &fractional_op(), &set).unwrap();
        let d0 = (&config.x0 - ones).norm();
        let cert = certify_trace(&report.trace, d0, CertificateConstants { lipschitz: 148.68, modulus: None });
        prop_assert_eq!(cert.key_inequality_violations, 0);
        prop_assert_eq!(cert.fejer_violations, 0);
    }

    #[test]
    fn plane_linear_rate(x0 in vec_in(3, -5.0, 5.0), rho in 0.05..=1.0f64, c in 0.2..0.99f64) {
        let op = plane_op();
        let l = op.lipschitz_upper_bound().unwrap();
        let gamma = op.structural_modulus().unwrap();
        let config = SolverConfig::fbf(c / l, x0, 400)
            .with_lipschitz(l)
            .with_rho(RhoSchedule::Constant(rho))
            .with_stop(to_ref(1e-12, Vector::zeros(3)));
        let report = solve(&config, &op, &plane_set()).unwrap();
        let cert = certify_trace(
            &report.trace,
            config.x0.norm(),
            CertificateConstants { lipschitz: l, modulus: Some(gamma) },
        );
        prop_assert_eq!(cert.rate_violations, 0);
        prop_assert_eq!(cert.key_inequality_violations, 0);
        prop_assert!(cert.delta_theoretical.iter().all(|d| *d > 0.0 && *d < 1.0));
    }

    #[test]
    fn adaptive_steps_are_bounded(x0 in vec_in(5, 0.0, 5.0), lambda0 in 0.01..2.0f64, mu in 0.1..0.95f64) {
        let l = polytope_bound();
        let mut config = SolverConfig::fbf(1.0, x0, 500).with_stop(to_ref(1e-6, polytope_solution()));
        config.lambda_mode = LambdaMode::Adaptive { lambda0, mu };
        let report = solve(&config, &polytope_op(), &polytope_set()).unwrap();
        let floor = lambda0.min(mu / l) - 1e-12;
        prop_assert!(report.trace.windows(2).all(|w| w[1].lambda <= w[0].lambda));
        prop_assert!(report.trace.iter().all(|r| r.lambda >= floor));
        prop_assert!(report.state.lambda >= floor);
    }

    #[test]
    fn constant_adaptive_sequence_below_mu_over_l(x0 in vec_in(5, 0.0, 5.0), mu in 0.1..0.95f64) {
        let l = polytope_bound();
        let lambda0 = 0.99 * mu / l;
        let mut config = SolverConfig::fbf(1.0, x0, 200);
        config.lambda_mode = LambdaMode::Adaptive { lambda0, mu };
        let report = solve(&config, &polytope_op(), &polytope_set()).unwrap();
        prop_assert!(report.trace.iter().all(|r| r.lambda == lambda0));
    }

    #[test]
    fn solve_is_deterministic(x0 in vec_in(5, 0.0, 5.0), rho in 0.3..1.2f64) {
        let l = polytope_bound();
        let config = SolverConfig::fbf(0.5 / l, x0, 300)
            .with_lipschitz(l)
            .with_rho(RhoSchedule::Constant(rho))
            .with_stop(to_ref(1e-6, polytope_solution()));
        let a = solve(&config, &polytope_op(), &polytope_set()).unwrap();
        let b = solve(&config, &polytope_op(), &polytope_set()).unwrap();
        prop_assert_eq!(a.trace.len(), b.trace.len());
        prop_assert!(a.trace.iter().zip(&b.trace).all(|(p, q)| p.same_numbers(q)));
    }

    #[test]
    fn affine_monotone_problems_converge(b in prop::collection::vec(-1.0..1.0f64, 9), q in vec_in(3, -2.0, 2.0)) {
        let b = Matrix::from_row_slice(3, 3, &b);
        let m = b.transpose() * &b + Matrix::identity(3, 3);
        let op = OperatorSpec::affine(m, q).unwrap();
        let l = op.lipschitz_upper_bound().unwrap();
        let set = FeasibleSet::cube(3, 0.0, 1.0).unwrap();
        let config = SolverConfig::fbf(0.5 / l, Vector::from_element(3, 0.5), 5_000)
            .with_lipschitz(l)
            .with_stop(StopRule::ResidualBelow(1e-10));
        let report = solve(&config, &op, &set).unwrap();
        prop_assert!(report.status != Status::MaxIter);
        prop_assert!(natural_residual(&op, &set, report.solution(), 0.5 / l).unwrap() <= 1e-8);
        prop_assert_eq!(op.dim(), 3);
    }
}
