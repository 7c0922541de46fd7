//! Solvers for variational inequalities `VI(F, C)`: find `x* ∈ C` with
//! `⟨F(x*), x − x*⟩ ≥ 0` for every `x ∈ C`.
//!
//! The crate is organised around the pieces a run needs:
//!
//! * [`geometry`] -- feasible sets with exact Euclidean projections.
//! * [`operators`] -- the operator families (pseudo-affine maps, gradients of
//!   quadratic fractional programs, scalar test maps) together with sampled
//!   Lipschitz estimation and monotonicity probes.
//! * [`solvers`] -- Tseng's forward-backward-forward method with relaxation
//!   and adaptive stepsizes, plus the extragradient, subgradient-extragradient
//!   and projected-gradient baselines.
//! * [`flow`] -- the continuous-time forward-backward-forward dynamical
//!   system and its fixed-step integrators.
//! * [`diagnostics`] -- rate formulas, per-iteration certificates and trace
//!   summaries.
//!
//! Vectors and matrices are `nalgebra` dense types; see [`Vector`] and
//! [`Matrix`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod operators;
pub mod solvers;

pub use error::{Error, Result};

/// Dense real vector used for iterates and operator values.
pub type Vector = nalgebra::DVector<f64>;

/// Dense real matrix.
pub type Matrix = nalgebra::DMatrix<f64>;

/// Checks that every entry of `v` is finite.
pub fn ensure_finite(v: &Vector, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
