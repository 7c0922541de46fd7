//! Built-in problem instances. Constants are computed on first lookup and
//! cached for the life of the process.

use std::sync::OnceLock;

use fbf_core::geometry::{FeasibleSet, Relation};
use fbf_core::operators::{estimate_lipschitz, GShape, OperatorSpec, Region, ScalarShape};
use fbf_core::solvers::{natural_residual, solve, SolverConfig};
use fbf_core::{Matrix, Vector};
use serde::Serialize;

use crate::{BenchError, Result};

pub const LIPSCHITZ_SAMPLES: usize = 100_000;
pub const LIPSCHITZ_SEED: u64 = 42;
pub const REFERENCE_ITERATIONS: usize = 10_000;
pub const REFERENCE_RESIDUAL: f64 = 1e-8;
/// Stated bound on the fractional gradient's Jacobian over its region.
pub const FRACTIONAL_LIPSCHITZ: f64 = 148.68;

pub const NAMES: [&str; 5] = ["polytope5", "fractional5", "plane3", "scalar-exp", "scalar-exp-strong"];

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub name: &'static str,
    pub description: &'static str,
    pub op: OperatorSpec,
    pub set: FeasibleSet,
    /// Bounding box of the feasible set enlarged by `region_radius`.
    pub region: Region,
    pub region_radius: f64,
    pub x0: Vector,
    pub x_ref: Option<Vector>,
    /// Constant stepsizes are expressed against; see `lipschitz_source`.
    pub lipschitz: f64,
    pub lipschitz_source: LipschitzSource,
    pub lipschitz_estimate: f64,
    /// Strong pseudo-monotonicity modulus, zero when none is known.
    pub modulus: f64,
    pub lipschitz_samples: usize,
    pub lipschitz_seed: u64,
}

/// Where a problem's working Lipschitz constant comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LipschitzSource {
    /// Sampled Jacobian norms over the region.
    Estimate,
    /// A published bound for the problem.
    Stated(f64),
    /// The operator's closed-form global bound.
    AnalyticBound,
}

#[derive(Debug, Clone, Serialize)]
pub struct Constants {
    pub lipschitz: f64,
    pub lipschitz_source: LipschitzSource,
    pub lipschitz_estimate: f64,
    pub modulus: f64,
    pub lipschitz_samples: usize,
    pub lipschitz_seed: u64,
    pub region_lo: Vec<f64>,
    pub region_hi: Vec<f64>,
}

impl ProblemInstance {
    pub fn constants(&self) -> Constants {
        Constants {
            lipschitz: self.lipschitz,
            lipschitz_source: self.lipschitz_source,
            lipschitz_estimate: self.lipschitz_estimate,
            modulus: self.modulus,
            lipschitz_samples: self.lipschitz_samples,
            lipschitz_seed: self.lipschitz_seed,
            region_lo: self.region.lo().iter().copied().collect(),
            region_hi: self.region.hi().iter().copied().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }
}

fn v(xs: &[f64]) -> Vector {
    Vector::from_row_slice(xs)
}

pub fn polytope_matrix() -> Matrix {
    Matrix::from_row_slice(
        5,
        5,
        &[
            5.0, -1.0, 2.0, 0.0, 2.0, //
            -1.0, 6.0, -1.0, 3.0, 0.0, //
            2.0, -1.0, 3.0, 0.0, 1.0, //
            0.0, 3.0, 0.0, 5.0, 0.0, //
            2.0, 0.0, 1.0, 0.0, 4.0,
        ],
    )
}

pub fn plane_matrix() -> Matrix {
    Matrix::from_row_slice(3, 3, &[1.0, 0.0, -1.0, 0.0, 1.5, 0.0, -1.0, 0.0, 2.0])
}

struct Draft {
    name: &'static str,
    description: &'static str,
    op: OperatorSpec,
    set: FeasibleSet,
    radius: f64,
    x0: Vector,
    lipschitz: LipschitzSource,
}

fn draft(name: &str) -> Option<Draft> {
    let sqrt2 = std::f64::consts::SQRT_2;
    let d = match name {
        "polytope5" => Draft {
            name: "polytope5",
            description: "pseudo-affine operator on {0 ≤ x ≤ 5, Σx ≤ 5} in R^5",
            op: OperatorSpec::pseudo_affine(
                polytope_matrix(),
                v(&[-1.0, 2.0, 1.0, 0.0, -1.0]),
                GShape::ExpNormSqPlusAlpha { alpha: 0.1 },
            )
            .ok()?,
            set: FeasibleSet::box_linear(
                Vector::zeros(5),
                Vector::from_element(5, 5.0),
                Vector::from_element(5, 1.0),
                5.0,
                Relation::LessEq,
            )
            .ok()?,
            // diameter of the set
            radius: 5.0 * sqrt2,
            x0: v(&[1.0, 3.0, 2.0, 1.0, 4.0]),
            lipschitz: LipschitzSource::Estimate,
        },
        "fractional5" => Draft {
            name: "fractional5",
            description: "gradient of a quadratic fractional program on [1, 3]^5",
            op: OperatorSpec::fractional_gradient(
                polytope_matrix(),
                v(&[1.0, 2.0, -1.0, -2.0, 1.0]),
                v(&[1.0, 0.0, -1.0, 0.0, 1.0]),
                -2.0,
                20.0,
            )
            .ok()?,
            set: FeasibleSet::cube(5, 1.0, 3.0).ok()?,
            radius: 2.0 * 5f64.sqrt(),
            x0: v(&[3.0, 1.5, 2.0, 1.5, 2.0]),
            lipschitz: LipschitzSource::Stated(FRACTIONAL_LIPSCHITZ),
        },
        "plane3" => Draft {
            name: "plane3",
            description: "strongly pseudo-monotone, non-monotone operator on [-5, 5]^3 ∩ {Σx = 0}",
            op: OperatorSpec::pseudo_affine(plane_matrix(), Vector::zeros(3), GShape::ExpNormSqPlusAlpha { alpha: 0.2 })
                .ok()?,
            set: FeasibleSet::box_linear(
                Vector::from_element(3, -5.0),
                Vector::from_element(3, 5.0),
                Vector::from_element(3, 1.0),
                0.0,
                Relation::Equal,
            )
            .ok()?,
            radius: 10.0 * sqrt2,
            x0: v(&[-4.0, 3.0, 5.0]),
            lipschitz: LipschitzSource::AnalyticBound,
        },
        "scalar-exp" => Draft {
            name: "scalar-exp",
            description: "x·exp(−x²) on [-5, 5]",
            op: OperatorSpec::scalar(ScalarShape::ExpBell),
            set: FeasibleSet::cube(1, -5.0, 5.0).ok()?,
            radius: 10.0,
            x0: v(&[2.0]),
            lipschitz: LipschitzSource::Estimate,
        },
        "scalar-exp-strong" => Draft {
            name: "scalar-exp-strong",
            description: "x·exp(−x²) + 0.1x on [-5, 5]",
            op: OperatorSpec::scalar(ScalarShape::ExpBellPlusLinear { slope: 0.1 }),
            set: FeasibleSet::cube(1, -5.0, 5.0).ok()?,
            radius: 10.0,
            x0: v(&[2.0]),
            lipschitz: LipschitzSource::Estimate,
        },
        _ => return None,
    };
    Some(d)
}

fn build(d: Draft) -> fbf_core::Result<ProblemInstance> {
    let (lo, hi) = d
        .set
        .bounding_box()
        .ok_or_else(|| fbf_core::Error::InvalidSet(format!("{} has no bounding box", d.name)))?;
    let region = Region::inflated(&lo, &hi, d.radius)?;
    d.op.check_region(&region)?;
    let lipschitz_estimate = estimate_lipschitz(&d.op, &region, LIPSCHITZ_SAMPLES, LIPSCHITZ_SEED)?;
    let lipschitz = match d.lipschitz {
        LipschitzSource::Estimate => lipschitz_estimate,
        LipschitzSource::Stated(l) => l,
        LipschitzSource::AnalyticBound => d.op.lipschitz_upper_bound().ok_or_else(|| {
            fbf_core::Error::InvalidOperator(format!("{} has no closed-form Lipschitz bound", d.name))
        })?,
    };
    let modulus = d.op.structural_modulus()?;

    let lambda = 0.5 / lipschitz;
    let config = SolverConfig::fbf(lambda, d.x0.clone(), REFERENCE_ITERATIONS).with_lipschitz(lipschitz);
    let run = solve(&config, &d.op, &d.set)?;
    let x_ref = run.solution().clone();
    let residual = natural_residual(&d.op, &d.set, &x_ref, lambda)?;
    if residual > REFERENCE_RESIDUAL {
        return Err(fbf_core::Error::Precondition(format!(
            "{}: reference residual {residual:e} above {REFERENCE_RESIDUAL:e}",
            d.name
        )));
    }

    Ok(ProblemInstance {
        name: d.name,
        description: d.description,
        op: d.op,
        set: d.set,
        region,
        region_radius: d.radius,
        x0: d.x0,
        x_ref: Some(x_ref),
        lipschitz,
        lipschitz_source: d.lipschitz,
        lipschitz_estimate,
        modulus,
        lipschitz_samples: LIPSCHITZ_SAMPLES,
        lipschitz_seed: LIPSCHITZ_SEED,
    })
}

static CACHE: [OnceLock<std::result::Result<ProblemInstance, String>>; 5] =
    [OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new(), OnceLock::new()];

/// Looks up a problem by name, building it on first access.
pub fn lookup(name: &str) -> Result<&'static ProblemInstance> {
    let index = NAMES.iter().position(|n| *n == name).ok_or_else(|| BenchError::UnknownProblem {
        name: name.to_string(),
        valid: NAMES.iter().map(|s| s.to_string()).collect(),
    })?;
    let cached = CACHE[index].get_or_init(|| {
        draft(name)
            .ok_or_else(|| format!("{name}: invalid built-in data"))
            .and_then(|d| build(d).map_err(|e| e.to_string()))
    });
    cached
        .as_ref()
        .map_err(|msg| BenchError::Core(fbf_core::Error::Precondition(msg.clone())))
}

/// Every registered problem, in registry order.
pub fn registry() -> Result<Vec<&'static ProblemInstance>> {
    NAMES.iter().map(|n| lookup(n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_name_lists_valid_ones() {
        let err = lookup("unknown").unwrap_err();
        let msg = err.to_string();
        for name in NAMES {
            assert!(msg.contains(name), "{msg}");
        }
    }

    #[test]
    fn fractional_reference_is_ones() {
        let p = lookup("fractional5").unwrap();
        let x_ref = p.x_ref.as_ref().unwrap();
        assert!((x_ref - Vector::from_element(5, 1.0)).amax() <= 1e-12);
        assert_eq!(p.lipschitz, FRACTIONAL_LIPSCHITZ);
        assert!(p.lipschitz_estimate <= FRACTIONAL_LIPSCHITZ * 1.05);
    }

    #[test]
    fn plane_reference_and_modulus() {
        let p = lookup("plane3").unwrap();
        assert!(p.x_ref.as_ref().unwrap().amax() <= 1e-10);
        assert!((p.modulus - 0.0764).abs() <= 1e-4);
        assert!((p.lipschitz - 5.0679).abs() <= 1e-4);
        assert!(p.lipschitz_estimate < p.lipschitz);
    }
}
