//! Feasible sets and exact Euclidean projections.
//!
//! Boxes, halfspaces and hyperplanes project in closed form. A box cut by a
//! single linear constraint (`BoxLinear`) projects as
//! `p(τ) = clamp(v − τ a, lo, hi)` where the multiplier `τ` is located by
//! bisection on the nonincreasing map `τ ↦ a·p(τ)`.

use crate::{check_dim, ensure_finite, Error, Result, Vector};

/// Bisection stops once `|a·p(τ) − cap| ≤ BISECTION_RTOL · max(1, |cap|)`.
pub const BISECTION_RTOL: f64 = 1e-12;
/// Hard cap on bisection iterations.
pub const BISECTION_MAX_ITER: usize = 200;
const BRACKET_MAX_EXPANSIONS: usize = 200;

/// Direction of the linear constraint of a [`SetKind::BoxLinear`] set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    LessEq,
    Equal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SetKind {
    /// `{x : lo ≤ x ≤ hi}`
    Box { lo: Vector, hi: Vector },
    /// `{x : a·x ≤ b}`
    Halfspace { normal: Vector, offset: f64 },
    /// `{x : a·x = b}`
    Hyperplane { normal: Vector, offset: f64 },
    /// `{x : lo ≤ x ≤ hi, a·x (≤ | =) cap}`
    BoxLinear {
        lo: Vector,
        hi: Vector,
        normal: Vector,
        cap: f64,
        relation: Relation,
    },
}

/// A nonempty closed convex set with an exact projection.
///
/// Construct through [`FeasibleSet::boxed`], [`FeasibleSet::halfspace`],
/// [`FeasibleSet::hyperplane`] or [`FeasibleSet::box_linear`]; each checks
/// the set is well formed and nonempty.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSet {
    kind: SetKind,
}

fn check_bounds(lo: &Vector, hi: &Vector) -> Result<()> {
    check_dim(lo.len(), hi.len())?;
    if lo.is_empty() {
        return Err(Error::InvalidSet("dimension must be positive".into()));
    }
    ensure_finite(lo, "lower bounds")?;
    ensure_finite(hi, "upper bounds")?;
    if let Some(i) = (0..lo.len()).find(|&i| lo[i] > hi[i]) {
        return Err(Error::InvalidSet(format!(
            "lo[{i}] = {} exceeds hi[{i}] = {}",
            lo[i], hi[i]
        )));
    }
    Ok(())
}

fn check_normal(a: &Vector, b: f64) -> Result<()> {
    if a.is_empty() {
        return Err(Error::InvalidSet("dimension must be positive".into()));
    }
    ensure_finite(a, "constraint normal")?;
    if !b.is_finite() {
        return Err(Error::NonFinite("constraint offset".into()));
    }
    if a.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidSet("constraint normal is zero".into()));
    }
    Ok(())
}

/// Range of `a·x` over the box `[lo, hi]`.
fn linear_range(lo: &Vector, hi: &Vector, a: &Vector) -> (f64, f64) {
    let mut min = 0.0;
    let mut max = 0.0;
    for i in 0..a.len() {
        let (u, w) = (a[i] * lo[i], a[i] * hi[i]);
        min += u.min(w);
        max += u.max(w);
    }
    (min, max)
}

impl FeasibleSet {
    pub fn boxed(lo: Vector, hi: Vector) -> Result<Self> {
        check_bounds(&lo, &hi)?;
        Ok(Self {
            kind: SetKind::Box { lo, hi },
        })
    }

    pub fn halfspace(normal: Vector, offset: f64) -> Result<Self> {
        check_normal(&normal, offset)?;
        Ok(Self {
            kind: SetKind::Halfspace { normal, offset },
        })
    }

    pub fn hyperplane(normal: Vector, offset: f64) -> Result<Self> {
        check_normal(&normal, offset)?;
        Ok(Self {
            kind: SetKind::Hyperplane { normal, offset },
        })
    }

    pub fn box_linear(
        lo: Vector,
        hi: Vector,
        normal: Vector,
        cap: f64,
        relation: Relation,
    ) -> Result<Self> {
        check_bounds(&lo, &hi)?;
        check_dim(lo.len(), normal.len())?;
        check_normal(&normal, cap)?;
        let (min, max) = linear_range(&lo, &hi, &normal);
        let empty = match relation {
            Relation::LessEq => min > cap,
            Relation::Equal => min > cap || max < cap,
        };
        if empty {
            return Err(Error::InvalidSet(format!(
                "a·x ranges over [{min}, {max}] on the box, cap {cap} is unattainable"
            )));
        }
        Ok(Self {
            kind: SetKind::BoxLinear {
                lo,
                hi,
                normal,
                cap,
                relation,
            },
        })
    }

    /// Box `[lo, hi]^dim` with equal bounds in every coordinate.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::boxed(Vector::from_element(dim, lo), Vector::from_element(dim, hi))
    }

    pub fn kind(&self) -> &SetKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            SetKind::Box { lo, .. } | SetKind::BoxLinear { lo, .. } => lo.len(),
            SetKind::Halfspace { normal, .. } | SetKind::Hyperplane { normal, .. } => normal.len(),
        }
    }

    /// Componentwise bounds of the set when it is bounded in every coordinate.
    pub fn bounding_box(&self) -> Option<(Vector, Vector)> {
        match &self.kind {
            SetKind::Box { lo, hi } | SetKind::BoxLinear { lo, hi, .. } => {
                Some((lo.clone(), hi.clone()))
            }
            _ => None,
        }
    }

    /// Euclidean projection of `v` onto the set.
    pub fn project(&self, v: &Vector) -> Result<Vector> {
        check_dim(self.dim(), v.len())?;
        match &self.kind {
            SetKind::Box { lo, hi } => Ok(clamp(v, lo, hi)),
            SetKind::Halfspace { normal, offset } => Ok(project_halfspace(normal, *offset, v)),
            SetKind::Hyperplane { normal, offset } => {
                let shift = (normal.dot(v) - offset) / normal.norm_squared();
                Ok(v - normal * shift)
            }
            SetKind::BoxLinear {
                lo,
                hi,
                normal,
                cap,
                relation,
            } => project_box_linear(lo, hi, normal, *cap, *relation, v),
        }
    }

    /// Whether every defining constraint holds within `tol`.
    pub fn contains(&self, v: &Vector, tol: f64) -> Result<bool> {
        check_dim(self.dim(), v.len())?;
        if !(tol >= 0.0) {
            return Err(Error::Precondition(format!("tolerance {tol} must be ≥ 0")));
        }
        let in_box = |lo: &Vector, hi: &Vector| {
            (0..v.len()).all(|i| v[i] >= lo[i] - tol && v[i] <= hi[i] + tol)
        };
        Ok(match &self.kind {
            SetKind::Box { lo, hi } => in_box(lo, hi),
            SetKind::Halfspace { normal, offset } => normal.dot(v) <= offset + tol,
            SetKind::Hyperplane { normal, offset } => (normal.dot(v) - offset).abs() <= tol,
            SetKind::BoxLinear {
                lo,
                hi,
                normal,
                cap,
                relation,
            } => {
                let s = normal.dot(v);
                in_box(lo, hi)
                    && match relation {
                        Relation::LessEq => s <= cap + tol,
                        Relation::Equal => (s - cap).abs() <= tol,
                    }
            }
        })
    }
}

fn clamp(v: &Vector, lo: &Vector, hi: &Vector) -> Vector {
    Vector::from_iterator(v.len(), (0..v.len()).map(|i| v[i].clamp(lo[i], hi[i])))
}

/// Projection onto `{w : a·w ≤ b}`. A zero normal describes the whole
/// space, so the projection is the identity.
pub fn project_halfspace(normal: &Vector, offset: f64, v: &Vector) -> Vector {
    let nn = normal.norm_squared();
    if nn == 0.0 {
        return v.clone();
    }
    let excess = normal.dot(v) - offset;
    if excess <= 0.0 {
        v.clone()
    } else {
        v - normal * (excess / nn)
    }
}

fn project_box_linear(
    lo: &Vector,
    hi: &Vector,
    a: &Vector,
    cap: f64,
    relation: Relation,
    v: &Vector,
) -> Result<Vector> {
    let at = |tau: f64| -> Vector {
        Vector::from_iterator(
            v.len(),
            (0..v.len()).map(|i| (v[i] - tau * a[i]).clamp(lo[i], hi[i])),
        )
    };
    let tol = BISECTION_RTOL * cap.abs().max(1.0);
    let p0 = at(0.0);
    let s0 = a.dot(&p0);
    if (s0 - cap).abs() <= tol || (relation == Relation::LessEq && s0 <= cap) {
        return Ok(p0);
    }

    // φ(τ) = a·p(τ) is nonincreasing; a positive τ lowers it.
    let phi = |tau: f64| a.dot(&at(tau));
    let min_support = a
        .iter()
        .filter(|x| **x != 0.0)
        .fold(f64::INFINITY, |m, x| m.min(x.abs()));
    let mut reach = (v.norm() + lo.norm() + hi.norm() + cap.abs()) / min_support;
    if !(reach > 0.0) || !reach.is_finite() {
        reach = 1.0;
    }

    // Bracket [lower, upper] with φ(lower) ≥ cap ≥ φ(upper).
    let (mut lower, mut upper) = if s0 > cap { (0.0, reach) } else { (-reach, 0.0) };
    let mut expansions = 0;
    while !(phi(lower) >= cap && phi(upper) <= cap) {
        if expansions == BRACKET_MAX_EXPANSIONS {
            return Err(Error::BracketFailure);
        }
        if s0 > cap {
            upper *= 2.0;
        } else {
            lower *= 2.0;
        }
        expansions += 1;
    }

    let mut tau = 0.0;
    let mut best = p0;
    for _ in 0..BISECTION_MAX_ITER {
        tau = 0.5 * (lower + upper);
        let p = at(tau);
        let s = a.dot(&p);
        best = p;
        if (s - cap).abs() <= tol || tau == lower || tau == upper {
            break;
        }
        if s > cap {
            lower = tau;
        } else {
            upper = tau;
        }
    }
    Ok(polish(&at, a, v, lo, hi, cap, tau, best))
}

/// φ is affine on the active pattern at `tau`; solve it there exactly and
/// keep the result if it is no worse.
#[allow(clippy::too_many_arguments)]
fn polish(
    at: &dyn Fn(f64) -> Vector,
    a: &Vector,
    v: &Vector,
    lo: &Vector,
    hi: &Vector,
    cap: f64,
    tau: f64,
    best: Vector,
) -> Vector {
    let (mut fixed, mut free_av, mut free_aa) = (0.0, 0.0, 0.0);
    for i in 0..v.len() {
        let z = v[i] - tau * a[i];
        if z > lo[i] && z < hi[i] {
            free_av += a[i] * v[i];
            free_aa += a[i] * a[i];
        } else {
            fixed += a[i] * best[i];
        }
    }
    if free_aa == 0.0 {
        return best;
    }
    let exact = at((free_av + fixed - cap) / free_aa);
    if (a.dot(&exact) - cap).abs() <= (a.dot(&best) - cap).abs() {
        exact
    } else {
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    fn polytope() -> FeasibleSet {
        FeasibleSet::box_linear(
            Vector::zeros(5),
            Vector::from_element(5, 5.0),
            Vector::from_element(5, 1.0),
            5.0,
            Relation::LessEq,
        )
        .unwrap()
    }

    #[test]
    fn box_clamps() {
        let set = FeasibleSet::cube(5, 0.0, 5.0).unwrap();
        let p = set.project(&Vector::from_element(5, 6.0)).unwrap();
        assert_eq!(p, Vector::from_element(5, 5.0));
    }

    #[test]
    fn halfspace_closed_form() {
        let set = FeasibleSet::halfspace(v(&[1.0, 0.0]), 0.0).unwrap();
        assert_eq!(set.project(&v(&[2.0, 3.0])).unwrap(), v(&[0.0, 3.0]));
        assert_eq!(set.project(&v(&[-2.0, 3.0])).unwrap(), v(&[-2.0, 3.0]));
    }

    #[test]
    fn zero_normal_halfspace_is_identity() {
        let x = v(&[1.5, -2.0]);
        assert_eq!(project_halfspace(&Vector::zeros(2), 0.0, &x), x);
        assert!(FeasibleSet::halfspace(Vector::zeros(2), 0.0).is_err());
    }

    /// Dense τ-grid oracle: scan τ at step 1e-6 and keep the τ whose clamp
    /// point lands closest to the constraint.
    fn tau_grid_oracle(v: &Vector, lo: f64, hi: f64, cap: f64, tau_max: f64) -> Vector {
        let n = (tau_max / 1e-6) as usize;
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=n {
            let tau = k as f64 * 1e-6;
            let s: f64 = v.iter().map(|x| (x - tau).clamp(lo, hi)).sum();
            let gap = (s - cap).abs();
            if gap < best.0 {
                best = (gap, tau);
            }
        }
        v.map(|x| (x - best.1).clamp(lo, hi))
    }

    #[test]
    fn capped_box_matches_tau_grid() {
        let x = v(&[4.0, 4.0, 0.0, 0.0, 0.0]);
        let oracle = tau_grid_oracle(&x, 0.0, 5.0, 5.0, 4.0);
        assert_abs_diff_eq!(oracle, v(&[2.5, 2.5, 0.0, 0.0, 0.0]), epsilon = 1e-6);
        let p = polytope().project(&x).unwrap();
        assert_abs_diff_eq!(p, v(&[2.5, 2.5, 0.0, 0.0, 0.0]), epsilon = 1e-12);
    }

    #[test]
    fn capped_box_inactive_constraint() {
        let x = v(&[1.0, 3.0, 2.0, -1.0, 7.0]);
        let p = polytope().project(&x).unwrap();
        // clamp gives (1,3,2,0,5), sum 11 > 5, so the constraint binds
        assert_abs_diff_eq!(p.sum(), 5.0, epsilon = 1e-11);
        let inside = v(&[1.0, 0.5, 0.0, 0.0, 2.0]);
        assert_eq!(polytope().project(&inside).unwrap(), inside);
    }

    #[test]
    fn equality_plane_symmetric_case() {
        let set = FeasibleSet::box_linear(
            Vector::from_element(3, -5.0),
            Vector::from_element(3, 5.0),
            Vector::from_element(3, 1.0),
            0.0,
            Relation::Equal,
        )
        .unwrap();
        let p = set.project(&v(&[1.0, 1.0, 1.0])).unwrap();
        assert_abs_diff_eq!(p, Vector::zeros(3), epsilon = 1e-12);
        // sum below the cap pushes τ negative
        let p = set.project(&v(&[-3.0, -1.0, 0.5])).unwrap();
        assert_abs_diff_eq!(p.sum(), 0.0, epsilon = 1e-11);
    }

    #[test]
    fn contains_examples() {
        let set = FeasibleSet::cube(5, 0.0, 5.0).unwrap();
        assert!(set.contains(&v(&[1.0, 3.0, 2.0, 1.0, 4.0]), 0.0).unwrap());
        let unit = FeasibleSet::cube(1, 0.0, 1.0).unwrap();
        assert!(unit.contains(&v(&[1.0 + 1e-12]), 1e-9).unwrap());
        let half = FeasibleSet::halfspace(v(&[1.0]), 0.0).unwrap();
        assert!(!half.contains(&v(&[0.1]), 0.0).unwrap());
    }

    #[test]
    fn rejects_bad_sets() {
        assert!(matches!(
            FeasibleSet::boxed(v(&[1.0]), v(&[0.0])),
            Err(Error::InvalidSet(_))
        ));
        assert!(FeasibleSet::box_linear(
            Vector::zeros(2),
            Vector::from_element(2, 1.0),
            Vector::from_element(2, 1.0),
            -0.5,
            Relation::LessEq,
        )
        .is_err());
        assert!(FeasibleSet::box_linear(
            Vector::zeros(2),
            Vector::from_element(2, 1.0),
            Vector::from_element(2, 1.0),
            3.0,
            Relation::Equal,
        )
        .is_err());
        assert!(matches!(
            polytope().project(&Vector::zeros(3)),
            Err(Error::DimensionMismatch { expected: 5, got: 3 })
        ));
        assert!(polytope().contains(&Vector::zeros(5), -1.0).is_err());
    }

    #[test]
    fn hyperplane_projection() {
        let set = FeasibleSet::hyperplane(v(&[1.0, 1.0]), 2.0).unwrap();
        let p = set.project(&v(&[0.0, 0.0])).unwrap();
        assert_abs_diff_eq!(p, v(&[1.0, 1.0]), epsilon = 1e-15);
    }
}
