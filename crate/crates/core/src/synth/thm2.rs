use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::design::{ControllerDesign, Design, Lyapunov, ManifoldDesign, Manifest, SwitchDirection, Theorem};
use super::gain::{switching_gain, GainExtras};
use super::linear_like::{to_linear_like, LinearLikeForm};
use super::manifold::{solve_manifold_map, ManifoldMapOptions};
use super::model::{sample_points, PlantModel, SAMPLE_SEED};
use super::SynthError;
use crate::expr::{Expr, VecExpr};
use crate::poly::{LinPoly, PolyMatrix, PolyVector, Polynomial, Var};
use crate::sos::{LinMatrix, SosOptions, SosProgram};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm2Options {
    pub q_degree: u32,
    pub n_degree: u32,
    pub eps1: f64,
    pub eps2: f64,
    /// Fixed SOS scaling `q(x̃)`.
    pub q: Polynomial,
    pub manifold: ManifoldMapOptions,
    pub sos: SosOptions,
}

impl Default for Thm2Options {
    fn default() -> Self {
        Thm2Options {
            q_degree: 1,
            n_degree: 2,
            eps1: 0.1,
            eps2: 0.01,
            q: Polynomial::one(),
            manifold: ManifoldMapOptions::default(),
            sos: SosOptions::default(),
        }
    }
}

/// The two matrices that must be SOS: `Q − ε1·I` and
/// `Σ_J (q·∂Q/∂x_j − Q·∂q/∂x_j)(A_j Z) − q·(QAᵀGᵀ + GAQ + NᵀBᵀGᵀ + GBN) − ε2·I`.
pub fn thm2_constraint_matrices(
    ll: &LinearLikeForm,
    b: &PolyMatrix,
    q: &Polynomial,
    qm: &LinMatrix,
    nm: &LinMatrix,
    eps1: f64,
    eps2: f64,
) -> Result<(LinMatrix, LinMatrix), SynthError> {
    let big_n = ll.z.len();
    let eye = |e: f64| LinMatrix::diagonal(big_n, &LinPoly::from(Polynomial::constant(e)));
    let ga = ll.g.mul(&ll.a)?;
    let gb = ll.g.mul(b)?;
    let t1 = LinMatrix::poly_mul(&ga, qm)?;
    let t2 = LinMatrix::poly_mul(&gb, nm)?;
    let sym = t1.add(&t1.transpose())?.add(&t2)?.add(&t2.transpose())?.mul_scalar_poly(q);
    let mut corr = LinMatrix::zeros(big_n, big_n);
    for &j in &ll.j {
        let v = Var::x(j);
        let az = ll.a_row_z(j);
        let term = qm.diff(v).mul_scalar_poly(q).sub(&qm.mul_scalar_poly(&q.diff(v)))?;
        corr = corr.add(&term.mul_scalar_poly(&az))?;
    }
    let lyap = qm.sub(&eye(eps1))?;
    let decrease = corr.sub(&sym)?.sub(&eye(eps2))?;
    Ok((lyap, decrease))
}

pub(crate) fn symmetric_decision(prog: &mut SosProgram, name: &str, size: usize, vars: &[Var], deg: u32) -> LinMatrix {
    let mut m = LinMatrix::zeros(size, size);
    for i in 0..size {
        for j in i..size {
            let e = prog.free_poly_deg(&format!("{name}{}{}", i + 1, j + 1), vars, 0, deg);
            m.set(i, j, e.clone());
            m.set(j, i, e);
        }
    }
    m
}

/// Reject a Lyapunov matrix that is singular or indefinite at sample points
/// of `[-1, 1]^n`, shrunk into the ball of the given radius when certificates
/// are local.
pub(crate) fn check_definite(
    p: &PolyMatrix,
    n: usize,
    radius: Option<f64>,
    what: &str,
) -> Result<(), SynthError> {
    let scale = radius.map_or(1.0, |r| r / (n as f64).sqrt());
    for pt in sample_points(n, 20, SAMPLE_SEED) {
        let pt: Vec<f64> = pt.iter().map(|v| v * scale).collect();
        let v = p.eval_state(&pt, 0.0)?;
        let sym = (&v + v.transpose()) * 0.5;
        if crate::sdp::min_eigenvalue(&sym) <= 0.0 {
            return Err(SynthError::Singular(format!("{what} is not positive definite at {pt:?}")));
        }
    }
    Ok(())
}

/// The Lyapunov/feedback SOS program, before solving.
pub fn theorem2_program(plant: &PlantModel, opts: &Thm2Options) -> Result<SosProgram, SynthError> {
    Ok(thm2_build(plant, opts)?.0)
}

fn thm2_build(
    plant: &PlantModel,
    opts: &Thm2Options,
) -> Result<(SosProgram, LinMatrix, LinMatrix, LinearLikeForm), SynthError> {
    plant.validate()?;
    let ll = to_linear_like(&plant.f, &plant.z_vector(), &plant.b)?;
    let vars = plant.state_vars();
    let (big_n, m) = (ll.z.len(), plant.m());
    let mut prog = SosProgram::new(vars.clone()).with_options(opts.sos);
    let qm = symmetric_decision(&mut prog, "Q", big_n, &ll.xt, opts.q_degree);
    let mut nm = LinMatrix::zeros(m, big_n);
    for i in 0..m {
        for j in 0..big_n {
            nm.set(i, j, prog.free_poly_deg(&format!("N{}{}", i + 1, j + 1), &vars, 0, opts.n_degree));
        }
    }
    let (lyap, decrease) =
        thm2_constraint_matrices(&ll, &plant.b, &opts.q, &qm, &nm, opts.eps1, opts.eps2)?;
    let suggestion = "raise the degree of Q or N";
    prog.require_sos_matrix("Q positive", lyap).map_err(|e| SynthError::from_sos("Q", e, suggestion))?;
    prog.require_sos_matrix("closed-loop decrease", decrease)
        .map_err(|e| SynthError::from_sos("decrease", e, suggestion))?;
    Ok((prog, qm, nm, ll))
}

/// Convex nominal-manifold design with a rational feedback `k = q·N·Q⁻¹·Z`.
pub fn theorem2_synthesize(plant: &PlantModel, opts: &Thm2Options) -> Result<Design, SynthError> {
    let (prog, qm, nm, ll) = thm2_build(plant, opts)?;
    let suggestion = "raise the degree of Q or N";
    let sol = prog.solve().map_err(|e| SynthError::from_sos("theorem 2 program", e, suggestion))?;

    let q_sol = sol.matrix(&qm);
    let n_sol = sol.matrix(&nm);
    check_definite(&q_sol, plant.n(), None, "Q(x̃)")?;
    let map = solve_manifold_map(&plant.b, &opts.manifold)?;

    let k = VecExpr::Solve {
        left: n_sol.map(|p| p * &opts.q),
        mat: q_sol.clone(),
        right: Box::new(VecExpr::polys(&ll.z)),
    };
    let manifold = nominal_manifold(plant, &map.g, &map.m, &map.l, &map.w, &k)?;
    let rho = switching_gain(
        Theorem::Thm2,
        plant,
        &manifold,
        &GainExtras { k: Some(k.clone()), ..Default::default() },
    )?;

    let mut manifest = Manifest {
        degrees: BTreeMap::from([
            ("Q".to_string(), opts.q_degree),
            ("N".to_string(), opts.n_degree),
            ("L".to_string(), opts.manifold.l_degree),
        ]),
        parameters: BTreeMap::from([("eps1".to_string(), opts.eps1), ("eps2".to_string(), opts.eps2)]),
        ..Default::default()
    };
    manifest.absorb(&sol.certificates, sol.iterations);
    manifest.absorb(&map.certificates, 0);
    let mut certificates = sol.certificates;
    certificates.extend(map.certificates);
    // V = Zᵀ·p⁻¹·Z with p = Q/q; only constant q gives a polynomial p.
    let p = if opts.q.is_constant() {
        q_sol.scale(1.0 / opts.q.constant_term())
    } else {
        manifest.notes.push("q is not constant; the stored Lyapunov matrix is Q and V = q·Zᵀ·Q⁻¹·Z".into());
        q_sol.clone()
    };
    let lyapunov = Lyapunov::Rational { z: ll.z.clone(), p };
    Ok(Design {
        theorem: Theorem::Thm2,
        plant: plant.clone(),
        manifold,
        controller: ControllerDesign { k: Some(k), direction: SwitchDirection::MbTranspose, rho, alpha: 0.0 },
        lyapunov,
        gamma: None,
        certificates,
        manifest,
    })
}

/// Manifold whose sliding dynamics are the nominal closed loop `f + B·k`:
/// `D = −M·(f + B·k)`.
pub(crate) fn nominal_manifold(
    plant: &PlantModel,
    g: &PolyVector,
    m: &PolyMatrix,
    l: &PolyMatrix,
    w: &Polynomial,
    k: &VecExpr,
) -> Result<ManifoldDesign, SynthError> {
    let closed = VecExpr::Add(
        Box::new(VecExpr::polys(&plant.f)),
        Box::new(VecExpr::MatMul(plant.b.clone(), Box::new(k.clone()))),
    );
    let d = VecExpr::Scale(Box::new(Expr::c(-1.0)), Box::new(VecExpr::MatMul(m.clone(), Box::new(closed))));
    Ok(ManifoldDesign { g: g.clone(), m: m.clone(), d, l: l.clone(), w: w.clone() })
}
