//! JSON run configuration.
//!
//! ```json
//! {
//!   "problem": "polytope5",
//!   "solver": { "method": "fbf", "lambda": "0.5/L", "rho": 1.2, "max_iter": 5000,
//!               "stop": { "kind": "dist_to_ref", "tol": 1e-6 } },
//!   "output": "out/polytope",
//!   "emit": "both"
//! }
//! ```
//!
//! `lambda` is either a number or `"c/L"`, resolved against the problem's
//! Lipschitz constant. In adaptive mode it is the initial stepsize.

use std::fmt;
use std::str::FromStr;

use fbf_core::solvers::{LambdaMode, Method, RhoSchedule, SolverConfig, StopRule};
use fbf_core::Vector;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::registry::ProblemInstance;
use crate::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSpec {
    Absolute(f64),
    /// `c/L`
    OverL(f64),
}

impl LambdaSpec {
    pub fn resolve(self, lipschitz: f64) -> f64 {
        match self {
            Self::Absolute(v) => v,
            Self::OverL(c) => c / lipschitz,
        }
    }
}

impl Default for LambdaSpec {
    fn default() -> Self {
        Self::OverL(0.5)
    }
}

impl fmt::Display for LambdaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Absolute(v) => write!(f, "{v}"),
            Self::OverL(c) => write!(f, "{c}/L"),
        }
    }
}

impl FromStr for LambdaSpec {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || BenchError::Config(format!("stepsize {s:?} is neither a number nor of the form c/L"));
        if let Some(c) = s.strip_suffix("/L") {
            return c.trim().parse().map(Self::OverL).map_err(|_| bad());
        }
        s.parse().map(Self::Absolute).map_err(|_| bad())
    }
}

impl Serialize for LambdaSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Absolute(v) => serializer.serialize_f64(*v),
            Self::OverL(_) => serializer.serialize_str(&self.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for LambdaSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) => Ok(Self::Absolute(v)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaModeSpec {
    #[default]
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoSpec {
    Constant(f64),
    Sequence(Vec<f64>),
}

impl Default for RhoSpec {
    fn default() -> Self {
        Self::Constant(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StopSpec {
    /// `‖x_n − x_ref‖ ≤ tol` against the problem's reference solution.
    DistToRef { tol: f64 },
    /// `‖x_n − y_n‖ ≤ tol`
    Residual { tol: f64 },
    Exact,
}

impl Default for StopSpec {
    fn default() -> Self {
        Self::DistToRef { tol: 1e-6 }
    }
}

fn default_max_iter() -> usize {
    10_000
}

fn default_mu() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub lambda: LambdaSpec,
    #[serde(default)]
    pub lambda_mode: LambdaModeSpec,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default)]
    pub rho: RhoSpec,
    /// Defaults to the problem's starting point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub stop: StopSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub allow_large_step: bool,
}

fn default_method() -> Method {
    Method::Fbf
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            method: Method::Fbf,
            lambda: LambdaSpec::default(),
            lambda_mode: LambdaModeSpec::Fixed,
            mu: default_mu(),
            rho: RhoSpec::default(),
            x0: None,
            max_iter: default_max_iter(),
            stop: StopSpec::default(),
            seed: 0,
            allow_large_step: false,
        }
    }
}

/// Numbers a solver run was actually configured with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub lambda: f64,
    pub lipschitz: f64,
    pub x0: Vec<f64>,
    pub x_ref: Option<Vec<f64>>,
}

impl SolverSpec {
    /// Builds the core solver configuration against a problem instance.
    pub fn to_config(&self, problem: &ProblemInstance) -> Result<(SolverConfig, Resolved)> {
        let lambda = self.lambda.resolve(problem.lipschitz);
        let x0 = match &self.x0 {
            Some(x) if x.len() != problem.dim() => {
                return Err(BenchError::Config(format!(
                    "x0 has {} entries, {} expects {}",
                    x.len(),
                    problem.name,
                    problem.dim()
                )))
            }
            Some(x) => Vector::from_row_slice(x),
            None => problem.x0.clone(),
        };
        let stop = match self.stop {
            StopSpec::DistToRef { tol } => StopRule::DistToRefBelow {
                tol,
                reference: problem
                    .x_ref
                    .clone()
                    .ok_or_else(|| BenchError::Config(format!("{} has no reference solution", problem.name)))?,
            },
            StopSpec::Residual { tol } => StopRule::ResidualBelow(tol),
            StopSpec::Exact => StopRule::ExactTermination,
        };
        let lambda_mode = match self.lambda_mode {
            LambdaModeSpec::Fixed => LambdaMode::Fixed { lambda },
            LambdaModeSpec::Adaptive => LambdaMode::Adaptive {
                lambda0: lambda,
                mu: self.mu,
            },
        };
        let rho = match &self.rho {
            RhoSpec::Constant(r) => RhoSchedule::Constant(*r),
            RhoSpec::Sequence(rs) => RhoSchedule::Sequence(rs.clone()),
        };
        let config = SolverConfig {
            method: self.method,
            lambda_mode,
            rho,
            x0: x0.clone(),
            max_iter: self.max_iter,
            stop,
            seed: self.seed,
            // adaptive runs are meant for an unknown constant
            lipschitz: (self.lambda_mode == LambdaModeSpec::Fixed).then_some(problem.lipschitz),
            allow_large_step: self.allow_large_step,
        };
        config.validate()?;
        Ok((
            config,
            Resolved {
                lambda,
                lipschitz: problem.lipschitz,
                x0: x0.iter().copied().collect(),
                x_ref: problem.x_ref.as_ref().map(|r| r.iter().copied().collect()),
            },
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emit {
    Csv,
    Json,
    #[default]
    Both,
}

impl Emit {
    pub fn csv(self) -> bool {
        matches!(self, Self::Csv | Self::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Self::Json | Self::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub problem: String,
    #[serde(default)]
    pub solver: SolverSpec,
    /// Path prefix for `<output>_trace.csv` and `<output>_report.json`.
    pub output: String,
    #[serde(default)]
    pub emit: Emit,
}

impl RunSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_forms() {
        assert_eq!("0.5/L".parse::<LambdaSpec>().unwrap(), LambdaSpec::OverL(0.5));
        assert_eq!("0.01".parse::<LambdaSpec>().unwrap(), LambdaSpec::Absolute(0.01));
        assert!("x/L".parse::<LambdaSpec>().is_err());
        assert!("fast".parse::<LambdaSpec>().is_err());
        assert_eq!(LambdaSpec::OverL(0.99).resolve(2.0), 0.495);
    }

    #[test]
    fn defaults_and_unknown_fields() {
        let spec = RunSpec::from_json(r#"{"problem": "plane3", "output": "out/p"}"#).unwrap();
        assert_eq!(spec.solver, SolverSpec::default());
        assert_eq!(spec.emit, Emit::Both);
        assert!(RunSpec::from_json(r#"{"problem": "plane3", "output": "o", "colour": 1}"#).is_err());
        assert!(RunSpec::from_json(r#"{"problem": "plane3", "output": "o", "solver": {"lamda": 1}}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        let spec = RunSpec {
            problem: "polytope5".into(),
            solver: SolverSpec {
                method: Method::Extragradient,
                lambda: LambdaSpec::OverL(0.99),
                rho: RhoSpec::Sequence(vec![1.0, 1.0]),
                x0: Some(vec![1.0, 2.0, 0.0, 0.0, 0.0]),
                stop: StopSpec::Residual { tol: 1e-9 },
                seed: 17,
                ..SolverSpec::default()
            },
            output: "a/b".into(),
            emit: Emit::Json,
        };
        let back = RunSpec::from_json(&spec.to_json().unwrap()).unwrap();
        assert_eq!(back, spec);
    }
}
