use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::poly::{jacobian, PolyMatrix, PolyVector, Polynomial, Var};

/// `f(x) = A(x)·Z(x)` together with the data the convex designs need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLikeForm {
    pub a: PolyMatrix,
    pub z: PolyVector,
    /// `G(x) = ∂Z/∂x`.
    pub g: PolyMatrix,
    /// Rows of `B` that vanish identically (zero-based).
    pub j: Vec<usize>,
    /// The state variables indexed by `j`; Lyapunov matrices may depend on
    /// these only.
    pub xt: Vec<Var>,
}

impl LinearLikeForm {
    /// Row `j` of `A` applied to `Z`.
    pub fn a_row_z(&self, j: usize) -> Polynomial {
        self.a.row(j).dot(&self.z)
    }
}

/// Factor `f = A·Z`, assigning each term of `f_i` to the first entry of `Z`
/// that divides it. Entries of `Z` must be single terms.
pub fn to_linear_like(
    f: &PolyVector,
    z: &PolyVector,
    b: &PolyMatrix,
) -> Result<LinearLikeForm, SynthError> {
    let n = f.len();
    let heads = z
        .iter()
        .map(|zj| {
            let mut t = zj.terms();
            match (t.next(), t.next()) {
                (Some((m, c)), None) if !m.is_one() => Ok((m.clone(), c)),
                _ => Err(SynthError::Model(format!("entry {zj} of Z is not a nonconstant monomial"))),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut a = PolyMatrix::zeros(n, z.len());
    for (i, fi) in f.iter().enumerate() {
        for (mono, c) in fi.terms() {
            let hit = heads.iter().enumerate().find_map(|(j, (h, hc))| {
                mono.div(h).map(|q| (j, q, c / hc))
            });
            let Some((j, q, coeff)) = hit else {
                return Err(SynthError::Unfactorable { row: i, monomial: mono.clone() });
            };
            a[(i, j)].add_term(q, coeff);
        }
    }
    let back = a.mul_vec(z)?;
    for (i, (lhs, rhs)) in back.iter().zip(f.iter()).enumerate() {
        let gap = (lhs - rhs).max_abs_coeff();
        if gap > 1e-12 * (1.0 + rhs.max_abs_coeff()) {
            return Err(SynthError::Model(format!("A·Z differs from f in row {i} by {gap:e}")));
        }
    }
    let vars: Vec<Var> = (0..n).map(Var::x).collect();
    let j: Vec<usize> =
        (0..b.nrows()).filter(|&r| (0..b.ncols()).all(|c| b[(r, c)].is_zero())).collect();
    let xt = j.iter().map(|&k| Var::x(k)).collect();
    Ok(LinearLikeForm { a, z: z.clone(), g: jacobian(z, &vars), j, xt })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn greedy_factorization_of_second_example() {
        let f = PolyVector::parse(&["-x1 + x2", "x1^2 - x2 - 2*x1^2*x2 - x2^2"]).unwrap();
        let b = PolyMatrix::parse(&[&["0"], &["1"]]).unwrap();
        let ll = to_linear_like(&f, &PolyVector::states(2), &b).unwrap();
        let want = PolyMatrix::parse(&[&["-1", "1"], &["x1 - 2*x1*x2", "-1 - x2"]]).unwrap();
        assert_eq!(ll.a, want);
        assert_eq!(ll.j, vec![0]);
        assert_eq!(ll.xt, vec![Var::x(0)]);
        assert_eq!(ll.g, PolyMatrix::identity(2));
    }

    #[test]
    fn constant_drift_is_rejected() {
        let f = PolyVector::parse(&["x1 + 1"]).unwrap();
        let b = PolyMatrix::parse(&[&["1"]]).unwrap();
        let err = to_linear_like(&f, &PolyVector::states(1), &b).unwrap_err();
        assert!(matches!(err, SynthError::Unfactorable { row: 0, .. }));
    }

    #[test]
    fn scaled_monomial_vector() {
        let f = PolyVector::parse(&["x1^3"]).unwrap();
        let z = PolyVector::parse(&["2*x1"]).unwrap();
        let b = PolyMatrix::parse(&[&["1"]]).unwrap();
        let ll = to_linear_like(&f, &z, &b).unwrap();
        assert_eq!(ll.a[(0, 0)], "0.5*x1^2".parse().unwrap());
        assert!(ll.j.is_empty());
    }
}
