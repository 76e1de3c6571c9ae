use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Monomial, PolyError, PolyMatrix, PolyVector, Polynomial, Var};

/// `entry(i, j) = ∂v_i/∂vars_j`.
pub fn jacobian(v: &PolyVector, vars: &[Var]) -> PolyMatrix {
    let mut out = PolyMatrix::zeros(v.len(), vars.len());
    for (i, p) in v.iter().enumerate() {
        for (j, &x) in vars.iter().enumerate() {
            out[(i, j)] = p.diff(x);
        }
    }
    out
}

/// Selects which monomials [`monomial_basis`] keeps.
pub enum BasisFilter {
    /// Degrees `1..=max_degree` (no constant, so `Z(0) = 0`).
    All,
    /// Degrees `0..=max_degree`.
    WithConstant,
    /// Even total degree in `2..=max_degree`.
    Even,
    Custom(Box<dyn Fn(&Monomial) -> bool>),
}

/// Monomials in `vars` up to `max_degree`, ordered by degree and, within a
/// degree, with `x1` before `x2`.
pub fn monomial_basis(vars: &[Var], max_degree: u32, filter: &BasisFilter) -> PolyVector {
    let mut all = Vec::new();
    let mut exps = vec![0u32; vars.len()];
    enumerate(vars, 0, max_degree, &mut exps, &mut all);
    all.retain(|m: &Monomial| match filter {
        BasisFilter::All => !m.is_one(),
        BasisFilter::WithConstant => true,
        BasisFilter::Even => !m.is_one() && m.degree().is_multiple_of(2),
        BasisFilter::Custom(f) => f(m),
    });
    all.sort_by(|a, b| a.degree().cmp(&b.degree()).then(b.cmp(a)));
    all.into_iter().map(|m| Polynomial::term(1.0, m)).collect()
}

/// Every monomial in `vars` of total degree at most `max_degree`, ordered as
/// in [`monomial_basis`].
pub fn monomials_upto(vars: &[Var], max_degree: u32) -> Vec<Monomial> {
    let mut all = Vec::new();
    let mut exps = vec![0u32; vars.len()];
    enumerate(vars, 0, max_degree, &mut exps, &mut all);
    all.sort_by(|a, b| a.degree().cmp(&b.degree()).then(b.cmp(a)));
    all
}

fn enumerate(vars: &[Var], k: usize, left: u32, exps: &mut Vec<u32>, out: &mut Vec<Monomial>) {
    if k == vars.len() {
        out.push(Monomial::from_pairs(vars.iter().copied().zip(exps.iter().copied())));
        return;
    }
    for e in 0..=left {
        exps[k] = e;
        enumerate(vars, k + 1, left - e, exps, out);
    }
    exps[k] = 0;
}

/// `[f, g] = (∂g/∂x)·f − (∂f/∂x)·g` over the state variables `x1..xn`.
pub fn lie_bracket(f: &PolyVector, g: &PolyVector) -> Result<PolyVector, PolyError> {
    if f.len() != g.len() {
        return Err(PolyError::Dimension(format!(
            "lie bracket of fields with dimensions {} and {}",
            f.len(),
            g.len()
        )));
    }
    let vars: Vec<Var> = (0..f.len()).map(Var::x).collect();
    let jf = jacobian(f, &vars);
    let jg = jacobian(g, &vars);
    Ok(jg.mul_vec(f)?.sub(&jf.mul_vec(g)?))
}

/// Outcome of [`involutivity_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct Involutivity {
    pub involutive: bool,
    /// Failing column pair and sample point, when not involutive.
    pub witness: Option<(usize, usize, Vec<f64>)>,
}

pub const INVOLUTIVITY_SAMPLES: usize = 20;
pub const INVOLUTIVITY_SEED: u64 = 0x5eed_0001;
pub const RANK_TOL: f64 = 1e-8;

fn numeric_rank(m: &DMatrix<f64>) -> usize {
    if m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    sv.iter().filter(|&&s| s > RANK_TOL).count()
}

/// Decide numerically whether `span{columns}` is closed under Lie brackets.
///
/// Every pairwise bracket is evaluated at fixed-seed sample points in
/// `[-1, 1]^n`; the distribution fails when appending a bracket raises the
/// rank of the column set at any point where the columns have full rank.
pub fn involutivity_check(columns: &[PolyVector]) -> Result<Involutivity, PolyError> {
    let Some(first) = columns.first() else {
        return Ok(Involutivity { involutive: true, witness: None });
    };
    let n = first.len();
    if columns.iter().any(|c| c.len() != n) {
        return Err(PolyError::Dimension("columns of unequal length".into()));
    }
    let k = columns.len();
    let mut brackets = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            brackets.push((i, j, lie_bracket(&columns[i], &columns[j])?));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(INVOLUTIVITY_SEED);
    let mut any_full = false;
    for _ in 0..INVOLUTIVITY_SAMPLES {
        let pt: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let mut base = DMatrix::zeros(n, k);
        for (j, c) in columns.iter().enumerate() {
            for (i, v) in c.eval_state(&pt, 0.0)?.into_iter().enumerate() {
                base[(i, j)] = v;
            }
        }
        let r = numeric_rank(&base);
        if r < k {
            continue;
        }
        any_full = true;
        for (a, b, br) in &brackets {
            let vals = br.eval_state(&pt, 0.0)?;
            let ext = base.clone().insert_column(k, 0.0);
            let mut ext = ext;
            for (i, v) in vals.into_iter().enumerate() {
                ext[(i, k)] = v;
            }
            if numeric_rank(&ext) > r {
                return Ok(Involutivity { involutive: false, witness: Some((*a, *b, pt)) });
            }
        }
    }
    if !any_full {
        return Err(PolyError::RankDeficient);
    }
    Ok(Involutivity { involutive: true, witness: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(items: &[&str]) -> PolyVector {
        PolyVector::parse(items).unwrap()
    }

    #[test]
    fn jacobian_of_states_is_identity() {
        let vars = [Var::x(0), Var::x(1)];
        assert_eq!(jacobian(&PolyVector::states(2), &vars), PolyMatrix::identity(2));
    }

    #[test]
    fn jacobian_of_example_manifold() {
        let j = jacobian(&pv(&["0.982*x2"]), &[Var::x(0), Var::x(1)]);
        assert!(j[(0, 0)].is_zero());
        assert_eq!(j[(0, 1)], Polynomial::constant(0.982));
    }

    #[test]
    fn basis_examples() {
        let b = monomial_basis(&[Var::x(0), Var::x(1)], 1, &BasisFilter::All);
        assert_eq!(b, pv(&["x1", "x2"]));
        let b = monomial_basis(&[Var::x(0)], 2, &BasisFilter::All);
        assert_eq!(b, pv(&["x1", "x1^2"]));
        let vars = [Var::x(0), Var::x(1), Var::x(2)];
        assert_eq!(monomial_basis(&vars, 2, &BasisFilter::All).len(), 9);
        let even = monomial_basis(&vars, 2, &BasisFilter::Even);
        assert_eq!(even.len(), 6);
    }

    #[test]
    fn bracket_of_constant_fields_vanishes() {
        let br = lie_bracket(&pv(&["1", "2"]), &pv(&["0", "3"])).unwrap();
        assert!(br.iter().all(Polynomial::is_zero));
    }

    #[test]
    fn bracket_hand_expansion() {
        // f = [x2, 0], g = [0, x1]:
        // (∂g/∂x)f = [0, x2], (∂f/∂x)g = [x1, 0]  ⇒  [f, g] = [-x1, x2].
        let br = lie_bracket(&pv(&["x2", "0"]), &pv(&["0", "x1"])).unwrap();
        assert_eq!(br, pv(&["-x1", "x2"]));
    }

    #[test]
    fn bracket_dimension_mismatch() {
        assert!(lie_bracket(&pv(&["x1"]), &pv(&["x1", "x2"])).is_err());
    }

    #[test]
    fn single_column_is_involutive() {
        let r = involutivity_check(&[pv(&["1", "0"])]).unwrap();
        assert!(r.involutive);
    }

    #[test]
    fn non_involutive_pair_is_caught() {
        // [e1, (0,1,x1)] = (0,0,1) is not in the span: classic contact distribution.
        let r = involutivity_check(&[pv(&["1", "0", "0"]), pv(&["0", "1", "x1"])]).unwrap();
        assert!(!r.involutive);
        let (a, b, pt) = r.witness.unwrap();
        assert_eq!((a, b), (0, 1));
        assert_eq!(pt.len(), 3);
    }

    #[test]
    fn zero_columns_are_rank_deficient() {
        assert_eq!(involutivity_check(&[pv(&["0", "0"])]), Err(PolyError::RankDeficient));
    }
}
