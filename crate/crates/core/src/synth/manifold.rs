use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::poly::{jacobian, LinPoly, Monomial, PolyMatrix, PolyVector, Polynomial, Var};
use crate::sos::{LinMatrix, NamedCertificate, SosOptions, SosProgram};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldMapOptions {
    /// Maximum degree of each `g_i`; `None` uses `deg B + 1`.
    pub g_degree: Option<u32>,
    pub l_degree: u32,
    /// Fixed positive weight `w(x)`.
    pub w: Polynomial,
    pub eps1: f64,
    pub sos: SosOptions,
}

impl Default for ManifoldMapOptions {
    fn default() -> Self {
        ManifoldMapOptions {
            g_degree: None,
            l_degree: 0,
            w: Polynomial::one(),
            eps1: 0.1,
            sos: SosOptions::default(),
        }
    }
}

/// A manifold map `g` with `M = ∂g/∂x = L·Bᵀ / w` and `L ⪰ ε1·I`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldMap {
    pub g: PolyVector,
    pub l: PolyMatrix,
    pub m: PolyMatrix,
    pub w: Polynomial,
    pub certificates: Vec<NamedCertificate>,
}

/// Search `g` (no constant term) and symmetric `L` with `w·∂g/∂x = L·Bᵀ`
/// and `L − ε1·I` matrix-SOS. `tr L(0)` is pinned to `m` to fix the scale.
pub fn solve_manifold_map(
    b: &PolyMatrix,
    opts: &ManifoldMapOptions,
) -> Result<ManifoldMap, SynthError> {
    let (n, m) = (b.nrows(), b.ncols());
    let vars: Vec<Var> = (0..n).map(Var::x).collect();
    let g_degree = opts.g_degree.unwrap_or(b.degree() + 1).max(1);
    let mut prog = SosProgram::new(vars.clone()).with_options(opts.sos);

    let g: Vec<LinPoly> =
        (0..m).map(|i| prog.free_poly_deg(&format!("g{}", i + 1), &vars, 1, g_degree)).collect();
    let mut l = LinMatrix::zeros(m, m);
    let mut trace0 = LinPoly::zero();
    for i in 0..m {
        for j in i..m {
            let name = format!("L{}{}", i + 1, j + 1);
            let c = prog.free_poly(&format!("{name} constant"), &[Monomial::one()]);
            let mut e = c.clone();
            if opts.l_degree > 0 {
                e = e.add(&prog.free_poly_deg(&name, &vars, 1, opts.l_degree));
            }
            if i == j {
                trace0 = trace0.add(&c);
            }
            l.set(i, j, e.clone());
            l.set(j, i, e);
        }
    }
    prog.require_zero("L scale", trace0.sub(&LinPoly::from(Polynomial::constant(m as f64))));
    for (i, gi) in g.iter().enumerate() {
        for (jx, &v) in vars.iter().enumerate() {
            let mut lhs = gi.diff(v).mul_poly(&opts.w);
            for r in 0..m {
                lhs = lhs.sub(&l.get(i, r).mul_poly(&b[(jx, r)]));
            }
            prog.require_zero(&format!("integrability ({}, {})", i + 1, jx + 1), lhs);
        }
    }
    let margin = l.sub(&LinMatrix::diagonal(m, &LinPoly::from(Polynomial::constant(opts.eps1))))?;
    prog.require_sos_matrix("L positive", margin).map_err(|e| SynthError::from_sos("L", e, ""))?;

    let sol = prog.solve().map_err(|e| match e {
        crate::sos::SosError::Infeasible { .. }
        | crate::sos::SosError::InfeasibleByConstruction { .. } => SynthError::Integrability(
            "raise the degree of g or L, or supply a weight w(x) that clears denominators"
                .to_string(),
        ),
        other => SynthError::from_sos("manifold map", other, ""),
    })?;
    let g = PolyVector::new(g.iter().map(|p| sol.poly(p)).collect());
    let l = sol.matrix(&l);
    let jac = jacobian(&g, &vars);
    Ok(ManifoldMap { m: jac, g, l, w: opts.w.clone(), certificates: sol.certificates })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_column_gives_linear_manifold() {
        let b = PolyMatrix::parse(&[&["0"], &["1"]]).unwrap();
        let mm = solve_manifold_map(&b, &ManifoldMapOptions::default()).unwrap();
        assert!((&mm.g[0] - &"x2".parse::<Polynomial>().unwrap()).max_abs_coeff() < 1e-7);
        assert_eq!(mm.m.nrows(), 1);
        assert!((mm.m[(0, 1)].constant_term() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn state_dependent_input_needs_a_nonlinear_manifold() {
        // B = (0, 1 + x1²): g = (1 + x1²)x2 would need ∂g/∂x1 = 0, so no g
        // exists with w = 1 and L constant; L may absorb the factor instead.
        let b = PolyMatrix::parse(&[&["0"], &["1 + x1^2"]]).unwrap();
        let err = solve_manifold_map(&b, &ManifoldMapOptions::default()).unwrap_err();
        assert!(matches!(err, SynthError::Integrability(_)), "{err:?}");
        let opts = ManifoldMapOptions { w: "1 + x1^2".parse().unwrap(), ..Default::default() };
        let mm = solve_manifold_map(&b, &opts).unwrap();
        let mb = mm.m.mul(&b).unwrap();
        let v = mb.eval_state(&[0.7, -0.3], 0.0).unwrap()[(0, 0)];
        assert!(v > 0.0, "{v}");
    }
}
