#![allow(dead_code)]

use fbf_core::geometry::{FeasibleSet, Relation};
use fbf_core::operators::{GShape, OperatorSpec, ScalarShape};
use fbf_core::{Matrix, Vector};

pub fn v(xs: &[f64]) -> Vector {
    Vector::from_row_slice(xs)
}

pub fn m5() -> Matrix {
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

pub fn m3() -> Matrix {
    Matrix::from_row_slice(3, 3, &[1.0, 0.0, -1.0, 0.0, 1.5, 0.0, -1.0, 0.0, 2.0])
}

pub fn polytope_op() -> OperatorSpec {
    OperatorSpec::pseudo_affine(
        m5(),
        v(&[-1.0, 2.0, 1.0, 0.0, -1.0]),
        GShape::ExpNormSqPlusAlpha { alpha: 0.1 },
    )
    .unwrap()
}

pub fn polytope_set() -> FeasibleSet {
    FeasibleSet::box_linear(
        Vector::zeros(5),
        Vector::from_element(5, 5.0),
        Vector::from_element(5, 1.0),
        5.0,
        Relation::LessEq,
    )
    .unwrap()
}

/// Closed-form solution of the polytope problem.
pub fn polytope_solution() -> Vector {
    v(&[0.125, 0.0, 0.0, 0.0, 0.1875])
}

pub fn plane_op() -> OperatorSpec {
    OperatorSpec::pseudo_affine(m3(), Vector::zeros(3), GShape::ExpNormSqPlusAlpha { alpha: 0.2 }).unwrap()
}

pub fn plane_set() -> FeasibleSet {
    FeasibleSet::box_linear(
        Vector::from_element(3, -5.0),
        Vector::from_element(3, 5.0),
        Vector::from_element(3, 1.0),
        0.0,
        Relation::Equal,
    )
    .unwrap()
}

pub fn fractional_op() -> OperatorSpec {
    OperatorSpec::fractional_gradient(
        m5(),
        v(&[1.0, 2.0, -1.0, -2.0, 1.0]),
        v(&[1.0, 0.0, -1.0, 0.0, 1.0]),
        -2.0,
        20.0,
    )
    .unwrap()
}

pub fn scalar_strong() -> OperatorSpec {
    OperatorSpec::scalar(ScalarShape::ExpBellPlusLinear { slope: 0.1 })
}

/// Exact projection onto `{lo ≤ x ≤ hi, a·x (≤|=) cap}` by enumerating
/// every assignment of coordinates to {free, at lo, at hi} and of the
/// linear constraint to {active, inactive}, keeping the closest feasible
/// candidate.
pub fn brute_force_box_linear(
    lo: &Vector,
    hi: &Vector,
    a: &Vector,
    cap: f64,
    relation: Relation,
    v: &Vector,
) -> Vector {
    let n = v.len();
    let feasible = |p: &Vector| {
        let s = a.dot(p);
        (0..n).all(|i| p[i] >= lo[i] - 1e-12 && p[i] <= hi[i] + 1e-12)
            && match relation {
                Relation::LessEq => s <= cap + 1e-10,
                Relation::Equal => (s - cap).abs() <= 1e-10,
            }
    };
    let mut best: Option<(f64, Vector)> = None;
    let mut consider = |p: Vector| {
        if feasible(&p) {
            let d = (&p - v).norm_squared();
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, p));
            }
        }
    };
    for code in 0..3usize.pow(n as u32) {
        let mut pattern = vec![0u8; n];
        let mut c = code;
        for slot in pattern.iter_mut() {
            *slot = (c % 3) as u8;
            c /= 3;
        }
        let fixed = |i: usize| match pattern[i] {
            1 => Some(lo[i]),
            2 => Some(hi[i]),
            _ => None,
        };
        // inactive linear constraint: free coordinates keep v
        let p = Vector::from_iterator(n, (0..n).map(|i| fixed(i).unwrap_or(v[i])));
        consider(p);
        // active: free coordinates move along a with one multiplier
        let (mut rhs, mut aa) = (cap, 0.0);
        for i in 0..n {
            match fixed(i) {
                Some(b) => rhs -= a[i] * b,
                None => {
                    rhs -= a[i] * v[i];
                    aa += a[i] * a[i];
                }
            }
        }
        if aa > 0.0 {
            let tau = -rhs / aa;
            let p = Vector::from_iterator(n, (0..n).map(|i| fixed(i).unwrap_or(v[i] - tau * a[i])));
            consider(p);
        }
    }
    best.expect("nonempty set").1
}
