//! Operators `F: Rⁿ → Rⁿ` and their sampled analysis.
//!
//! [`OperatorSpec`] covers the families used by the built-in problems. Any
//! other map can be wrapped in [`FnOperator`]. Analysis routines sample a
//! [`Region`] with a counter-based generator (one ChaCha stream per sample
//! index), so results depend only on the seed and the sample count, never on
//! how the work is split across threads.

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::{check_dim, ensure_finite, Error, Matrix, Result, Vector};

/// Difference step for Jacobian estimates.
pub const FD_STEP: f64 = 1e-6;
/// Power-iteration length for spectral norms.
pub const POWER_ITERATIONS: usize = 50;
/// Slack used by the monotonicity probes.
pub const PROBE_SLACK: f64 = 1e-10;
/// At most this many violating pairs are kept in a [`ProbeReport`].
pub const MAX_REPORTED_VIOLATIONS: usize = 10;

/// Anything evaluable as `x ↦ F(x)`.
pub trait Operator: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &Vector) -> Result<Vector>;
}

/// Closure-backed operator.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F> FnOperator<F>
where
    F: Fn(&Vector) -> Vector + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> Operator for FnOperator<F>
where
    F: Fn(&Vector) -> Vector + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim, x.len())?;
        let y = (self.f)(x);
        check_dim(self.dim, y.len())?;
        ensure_finite(&y, "operator value")?;
        Ok(y)
    }
}

/// Positive scalar weight `g` of a pseudo-affine operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GShape {
    /// `g(x) = exp(−‖x‖²) + alpha`
    ExpNormSqPlusAlpha { alpha: f64 },
}

impl GShape {
    pub fn value(&self, x: &Vector) -> f64 {
        match *self {
            GShape::ExpNormSqPlusAlpha { alpha } => (-x.norm_squared()).exp() + alpha,
        }
    }

    /// A uniform positive lower bound of `g`, zero when none is known.
    pub fn infimum(&self) -> f64 {
        match *self {
            GShape::ExpNormSqPlusAlpha { alpha } => alpha,
        }
    }

    /// Upper bound of `|∇g|` over all of Rⁿ.
    fn gradient_bound(&self) -> f64 {
        match *self {
            // |∇g| = 2r·exp(−r²) peaks at r = 1/√2.
            GShape::ExpNormSqPlusAlpha { .. } => (2.0 / std::f64::consts::E).sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarShape {
    /// `F(x) = x·exp(−x²)`
    ExpBell,
    /// `F(x) = x·exp(−x²) + slope·x`
    ExpBellPlusLinear { slope: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorSpec {
    /// `F(x) = Mx + p`
    Affine { m: Matrix, p: Vector },
    /// `F(x) = g(x)(Mx + p)`
    PseudoAffine { m: Matrix, p: Vector, g: GShape },
    /// Gradient of `f(x) = (xᵀMx + aᵀx + c)/(bᵀx + d)` for symmetric `M`.
    FractionalGradient {
        m: Matrix,
        a: Vector,
        b: Vector,
        c: f64,
        d: f64,
    },
    Scalar1D(ScalarShape),
}

fn check_square(m: &Matrix, n: usize) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::InvalidOperator(format!(
            "matrix is {}×{}, expected {n}×{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !m.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("operator matrix".into()));
    }
    Ok(())
}

impl OperatorSpec {
    pub fn affine(m: Matrix, p: Vector) -> Result<Self> {
        check_square(&m, p.len())?;
        ensure_finite(&p, "affine offset")?;
        Ok(Self::Affine { m, p })
    }

    pub fn pseudo_affine(m: Matrix, p: Vector, g: GShape) -> Result<Self> {
        check_square(&m, p.len())?;
        ensure_finite(&p, "pseudo-affine offset")?;
        let GShape::ExpNormSqPlusAlpha { alpha } = g;
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidOperator(format!("alpha = {alpha} must be ≥ 0")));
        }
        Ok(Self::PseudoAffine { m, p, g })
    }

    pub fn fractional_gradient(m: Matrix, a: Vector, b: Vector, c: f64, d: f64) -> Result<Self> {
        check_square(&m, a.len())?;
        check_dim(a.len(), b.len())?;
        ensure_finite(&a, "fractional numerator vector")?;
        ensure_finite(&b, "fractional denominator vector")?;
        if !c.is_finite() || !d.is_finite() {
            return Err(Error::NonFinite("fractional constants".into()));
        }
        if (&m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
            return Err(Error::InvalidOperator("fractional matrix must be symmetric".into()));
        }
        Ok(Self::FractionalGradient { m, a, b, c, d })
    }

    pub fn scalar(shape: ScalarShape) -> Self {
        Self::Scalar1D(shape)
    }

    /// Checks `bᵀx + d > 0` on the whole region (the minimum over a box is
    /// attained at a corner). Other variants always pass.
    pub fn check_region(&self, region: &Region) -> Result<()> {
        check_dim(self.dim(), region.dim())?;
        if let Self::FractionalGradient { b, d, .. } = self {
            let min: f64 = (0..b.len())
                .map(|i| (b[i] * region.lo[i]).min(b[i] * region.hi[i]))
                .sum::<f64>()
                + d;
            if !(min > 0.0) {
                return Err(Error::NonPositiveDenominator(min));
            }
        }
        Ok(())
    }

    /// Objective `(xᵀMx + aᵀx + c)/(bᵀx + d)` of a fractional-gradient operator.
    pub fn fractional_value(&self, x: &Vector) -> Result<f64> {
        let Self::FractionalGradient { m, a, b, c, d } = self else {
            return Err(Error::InvalidOperator(
                "fractional_value needs a fractional-gradient operator".into(),
            ));
        };
        check_dim(a.len(), x.len())?;
        let den = b.dot(x) + d;
        if !(den > 0.0) {
            return Err(Error::NonPositiveDenominator(den));
        }
        Ok((x.dot(&(m * x)) + a.dot(x) + c) / den)
    }

    /// Strong pseudo-monotonicity modulus known from the operator's
    /// structure, zero when none.
    ///
    /// For `g·(Mx + p)` this is `inf g · λ_min(sym M)`; for the scalar
    /// `x·exp(−x²) + s·x` it is `s`.
    pub fn structural_modulus(&self) -> Result<f64> {
        match self {
            Self::Affine { m, .. } => strong_pm_modulus(m, 1.0),
            Self::PseudoAffine { m, g, .. } => {
                let q = g.infimum();
                if q > 0.0 {
                    strong_pm_modulus(m, q)
                } else {
                    Ok(0.0)
                }
            }
            Self::FractionalGradient { .. } => Ok(0.0),
            Self::Scalar1D(ScalarShape::ExpBell) => Ok(0.0),
            Self::Scalar1D(ScalarShape::ExpBellPlusLinear { slope }) => Ok(slope.max(0.0)),
        }
    }

    /// Global Lipschitz bound from the triangle inequality, when available.
    ///
    /// For `g·(Mx + p)` with `g = exp(−‖x‖²) + α` the Jacobian is
    /// `gM + (Mx + p)∇gᵀ`, bounded by `‖M‖(1 + α + 2/e) + ‖p‖·√(2/e)`.
    pub fn lipschitz_upper_bound(&self) -> Option<f64> {
        match self {
            Self::Affine { m, .. } => Some(spectral_norm_exact(m)),
            Self::PseudoAffine { m, p, g } => {
                let GShape::ExpNormSqPlusAlpha { alpha } = *g;
                let norm_m = spectral_norm_exact(m);
                Some(
                    norm_m * (1.0 + alpha + 2.0 / std::f64::consts::E)
                        + p.norm() * g.gradient_bound(),
                )
            }
            _ => None,
        }
    }
}

impl Operator for OperatorSpec {
    fn dim(&self) -> usize {
        match self {
            Self::Affine { p, .. } | Self::PseudoAffine { p, .. } => p.len(),
            Self::FractionalGradient { a, .. } => a.len(),
            Self::Scalar1D(_) => 1,
        }
    }

    fn eval(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim(), x.len())?;
        let y = match self {
            Self::Affine { m, p } => m * x + p,
            Self::PseudoAffine { m, p, g } => (m * x + p) * g.value(x),
            Self::FractionalGradient { m, a, b, c, d } => {
                let den = b.dot(x) + d;
                if !(den > 0.0) {
                    return Err(Error::NonPositiveDenominator(den));
                }
                let mx = m * x;
                let num = x.dot(&mx) + a.dot(x) + c;
                ((mx * 2.0 + a) * den - b * num) / (den * den)
            }
            Self::Scalar1D(shape) => {
                let t = x[0];
                let bell = t * (-t * t).exp();
                let value = match *shape {
                    ScalarShape::ExpBell => bell,
                    ScalarShape::ExpBellPlusLinear { slope } => bell + slope * t,
                };
                Vector::from_element(1, value)
            }
        };
        ensure_finite(&y, "operator value")?;
        Ok(y)
    }
}

/// Axis-aligned box over which operators are analysed.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    lo: Vector,
    hi: Vector,
}

impl Region {
    pub fn new(lo: Vector, hi: Vector) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        ensure_finite(&lo, "region lower corner")?;
        ensure_finite(&hi, "region upper corner")?;
        if lo.is_empty() || (0..lo.len()).any(|i| lo[i] > hi[i]) {
            return Err(Error::Precondition("region needs lo ≤ hi and dim ≥ 1".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(Vector::from_element(dim, lo), Vector::from_element(dim, hi))
    }

    /// `[lo − r, hi + r]`: the bounding box of all points within distance
    /// `r` of the box `[lo, hi]`.
    pub fn inflated(lo: &Vector, hi: &Vector, radius: f64) -> Result<Self> {
        Self::new(lo.add_scalar(-radius), hi.add_scalar(radius))
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &Vector {
        &self.lo
    }

    pub fn hi(&self) -> &Vector {
        &self.hi
    }

    pub fn clamp(&self, x: &Vector) -> Vector {
        Vector::from_iterator(x.len(), (0..x.len()).map(|i| x[i].clamp(self.lo[i], self.hi[i])))
    }

    fn sample(&self, rng: &mut impl Rng) -> Vector {
        Vector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|i| {
                let u: f64 = rng.random();
                self.lo[i] + u * (self.hi[i] - self.lo[i])
            }),
        )
    }
}

fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Central-difference Jacobian, column `j` holding `∂F/∂x_j`.
pub fn jacobian_fd(op: &dyn Operator, x: &Vector, step: f64) -> Result<Matrix> {
    let n = op.dim();
    check_dim(n, x.len())?;
    let mut jac = Matrix::zeros(n, n);
    let mut probe = x.clone();
    for j in 0..n {
        probe[j] = x[j] + step;
        let fwd = op.eval(&probe)?;
        probe[j] = x[j] - step;
        let bwd = op.eval(&probe)?;
        probe[j] = x[j];
        jac.set_column(j, &((fwd - bwd) / (2.0 * step)));
    }
    if !jac.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("Jacobian estimate".into()));
    }
    Ok(jac)
}

/// Largest singular value by power iteration on `JᵀJ`. The returned
/// `‖Jv‖` for a unit `v` never exceeds the true norm.
pub fn spectral_norm_power(jac: &Matrix, iterations: usize) -> f64 {
    let n = jac.ncols();
    // Deterministic start with no symmetry that could leave it orthogonal to
    // a dominant singular vector of a structured matrix.
    let mut v = Vector::from_iterator(n, (0..n).map(|i| 1.0 + 0.618_033_988_75 * (i as f64 + 1.0).sqrt()));
    v.normalize_mut();
    let mut best: f64 = (jac * &v).norm();
    for _ in 0..iterations {
        let w = jac.transpose() * (jac * &v);
        let norm = w.norm();
        if norm == 0.0 {
            break;
        }
        v = w / norm;
        best = best.max((jac * &v).norm());
    }
    best
}

fn spectral_norm_exact(m: &Matrix) -> f64 {
    m.singular_values().max()
}

fn jacobian_norm(op: &dyn Operator, x: &Vector) -> Result<f64> {
    Ok(spectral_norm_power(&jacobian_fd(op, x, FD_STEP)?, POWER_ITERATIONS))
}

/// Number of best samples polished by local pattern search.
const REFINE_STARTS: usize = 8;
const REFINE_MAX_ROUNDS: usize = 400;

/// Sampled estimate of the Lipschitz constant of `op` on `region`.
///
/// Takes the largest Jacobian spectral norm over `samples` uniform points,
/// then polishes the best few with a coordinate pattern search that stays
/// inside the region. The result is a lower bound of the true constant, so
/// callers wanting a safe stepsize should divide by a margin.
pub fn estimate_lipschitz(op: &dyn Operator, region: &Region, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Precondition("at least one sample is required".into()));
    }
    check_dim(op.dim(), region.dim())?;

    let scored: Vec<(f64, usize)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let x = region.sample(&mut stream_rng(seed, i as u64));
            jacobian_norm(op, &x).map(|s| (s, i))
        })
        .collect::<Result<_>>()?;

    let mut order = scored.clone();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let starts: Vec<Vector> = order
        .iter()
        .take(REFINE_STARTS)
        .map(|&(_, i)| region.sample(&mut stream_rng(seed, i as u64)))
        .collect();

    let polished = starts
        .par_iter()
        .map(|x| refine_max(op, region, x.clone()))
        .collect::<Result<Vec<f64>>>()?;

    Ok(order[0].0.max(polished.into_iter().fold(f64::NEG_INFINITY, f64::max)))
}

fn refine_max(op: &dyn Operator, region: &Region, mut x: Vector) -> Result<f64> {
    let widths = region.hi() - region.lo();
    let mut best = jacobian_norm(op, &x)?;
    let mut scale = 0.05;
    for _ in 0..REFINE_MAX_ROUNDS {
        if scale < 1e-9 {
            break;
        }
        let mut improved = false;
        for j in 0..x.len() {
            for sign in [1.0, -1.0] {
                let mut cand = x.clone();
                cand[j] += sign * scale * widths[j];
                let cand = region.clamp(&cand);
                let value = jacobian_norm(op, &cand)?;
                if value > best {
                    best = value;
                    x = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            scale *= 0.5;
        }
    }
    Ok(best)
}

/// `q_lower · λ_min((M + Mᵀ)/2)`, or zero when the symmetric part is not
/// positive definite.
pub fn strong_pm_modulus(m: &Matrix, q_lower: f64) -> Result<f64> {
    if !(q_lower > 0.0) || !q_lower.is_finite() {
        return Err(Error::Precondition(format!("q_lower = {q_lower} must be > 0")));
    }
    if m.nrows() != m.ncols() || m.is_empty() {
        return Err(Error::InvalidOperator("modulus needs a square matrix".into()));
    }
    if !m.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("modulus matrix".into()));
    }
    let sym = (m + m.transpose()) * 0.5;
    let lambda_min = SymmetricEigen::new(sym).eigenvalues.min();
    Ok(if lambda_min > 0.0 { q_lower * lambda_min } else { 0.0 })
}

/// Monotonicity notions checked by [`probe_class`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MonotonicityClass {
    /// `⟨F(x) − F(y), x − y⟩ ≥ 0`
    Monotone,
    /// `⟨F(x), y − x⟩ ≥ 0 ⇒ ⟨F(y), y − x⟩ ≥ 0`
    PseudoMonotone,
    /// `⟨F(x), y − x⟩ ≥ 0 ⇒ ⟨F(y), y − x⟩ ≥ γ‖x − y‖²`
    StronglyPseudoMonotone(f64),
}

#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub violations: Vec<(Vector, Vector)>,
    pub violation_count: usize,
    pub pairs: usize,
    pub seed: u64,
    pub passed: bool,
}

/// Samples `pairs` point pairs uniformly in `region` and checks the
/// defining inequality of `class` on each. A pass is evidence, not proof.
pub fn probe_class(
    op: &dyn Operator,
    region: &Region,
    class: MonotonicityClass,
    pairs: usize,
    seed: u64,
) -> Result<ProbeReport> {
    if pairs == 0 {
        return Err(Error::Precondition("at least one pair is required".into()));
    }
    check_dim(op.dim(), region.dim())?;
    let mut violations = Vec::new();
    let mut violation_count = 0;
    for i in 0..pairs {
        let mut rng = stream_rng(seed, i as u64);
        let x = region.sample(&mut rng);
        let y = region.sample(&mut rng);
        if violates(op, class, &x, &y)? {
            violation_count += 1;
            if violations.len() < MAX_REPORTED_VIOLATIONS {
                violations.push((x, y));
            }
        }
    }
    Ok(ProbeReport {
        passed: violation_count == 0,
        violations,
        violation_count,
        pairs,
        seed,
    })
}

fn violates(op: &dyn Operator, class: MonotonicityClass, x: &Vector, y: &Vector) -> Result<bool> {
    let fx = op.eval(x)?;
    let fy = op.eval(y)?;
    let d = y - x;
    Ok(match class {
        MonotonicityClass::Monotone => (&fx - &fy).dot(&(x - y)) < -PROBE_SLACK,
        MonotonicityClass::PseudoMonotone => fx.dot(&d) >= 0.0 && fy.dot(&d) < -PROBE_SLACK,
        MonotonicityClass::StronglyPseudoMonotone(gamma) => {
            fx.dot(&d) >= 0.0 && fy.dot(&d) < gamma * d.norm_squared() - PROBE_SLACK
        }
    })
}

/// Constants estimated for an operator on a region.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OperatorAnalysis {
    pub lipschitz_estimate: f64,
    /// Zero when no modulus is known.
    pub strong_pm_modulus: f64,
    pub sample_count: usize,
    pub seed: u64,
}

pub fn analyze(op: &OperatorSpec, region: &Region, samples: usize, seed: u64) -> Result<OperatorAnalysis> {
    op.check_region(region)?;
    Ok(OperatorAnalysis {
        lipschitz_estimate: estimate_lipschitz(op, region, samples, seed)?,
        strong_pm_modulus: op.structural_modulus()?,
        sample_count: samples,
        seed,
    })
}
