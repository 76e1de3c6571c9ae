use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::design::{ControllerDesign, Design, Lyapunov, Manifest, SwitchDirection, Theorem};
use super::gain::{switching_gain, GainExtras};
use super::linear_like::{to_linear_like, LinearLikeForm};
use super::manifold::{solve_manifold_map, ManifoldMapOptions};
use super::model::PlantModel;
use super::thm2::{check_definite, nominal_manifold, symmetric_decision};
use super::SynthError;
use crate::expr::VecExpr;
use crate::poly::{LinPoly, PolyMatrix, Polynomial, Var};
use crate::sos::{LinMatrix, SosError, SosOptions, SosProgram, SosSolution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaChoice {
    Fixed(f64),
    /// Bisection down to the given width.
    Minimize { tol: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm4Options {
    pub p_degree: u32,
    pub eps1: f64,
    pub eps2: f64,
    pub gamma: GammaChoice,
    /// Certify on the ball `‖x‖ ≤ r` through matrix S-procedure multipliers
    /// instead of globally.
    pub region_radius: Option<f64>,
    pub multiplier_degree: u32,
    pub manifold: ManifoldMapOptions,
    pub sos: SosOptions,
}

impl Default for Thm4Options {
    fn default() -> Self {
        Thm4Options {
            p_degree: 2,
            eps1: 0.1,
            eps2: 0.01,
            gamma: GammaChoice::Minimize { tol: 1e-3, max: 1e4 },
            region_radius: None,
            multiplier_degree: 2,
            manifold: ManifoldMapOptions::default(),
            sos: SosOptions::default(),
        }
    }
}

/// Channels of the H∞ problem: disturbance `B1`, input `B2`, output `C1`.
#[derive(Debug, Clone, PartialEq)]
pub struct HinfChannels {
    pub b1: PolyMatrix,
    pub b2: PolyMatrix,
    pub c1: PolyMatrix,
}

impl HinfChannels {
    pub fn from_plant(plant: &PlantModel, big_n: usize) -> Result<Self, SynthError> {
        let b1 = plant
            .bperp
            .clone()
            .ok_or_else(|| SynthError::Model("theorem 4 needs Bperp as the disturbance channel".into()))?;
        let c1 = plant.c1.clone().unwrap_or_else(|| PolyMatrix::identity(big_n));
        if c1.ncols() != big_n {
            return Err(SynthError::Model(format!("C1 needs {big_n} columns, has {}", c1.ncols())));
        }
        Ok(HinfChannels { b1, b2: plant.b.clone(), c1 })
    }
}

/// `P − ε1·I` and the negated block matrix
/// `−[[ψ1, P·C1ᵀ, G·B1], [C1·P, −(γ−ε2)I, 0], [B1ᵀGᵀ, 0, −(γ−ε2)I]]` with
/// `ψ1 = GAP + PAᵀGᵀ − γ·G·B2·B2ᵀ·Gᵀ − Σ_J ∂P/∂x_j·(A_j Z) + ε2·I`.
pub fn thm4_constraint_matrices(
    ll: &LinearLikeForm,
    ch: &HinfChannels,
    pm: &LinMatrix,
    gamma: f64,
    eps1: f64,
    eps2: f64,
) -> Result<(LinMatrix, LinMatrix), SynthError> {
    let big_n = ll.z.len();
    let eye = |k: usize, e: f64| LinMatrix::diagonal(k, &LinPoly::from(Polynomial::constant(e)));
    let gap = LinMatrix::poly_mul(&ll.g.mul(&ll.a)?, pm)?;
    let gb2 = ll.g.mul(&ch.b2)?;
    let gbbg = gb2.mul(&gb2.transpose())?.scale(gamma);
    let mut psi = gap.add(&gap.transpose())?.sub(&LinMatrix::from(&gbbg))?.add(&eye(big_n, eps2))?;
    for &j in &ll.j {
        psi = psi.sub(&pm.diff(Var::x(j)).mul_scalar_poly(&ll.a_row_z(j)))?;
    }
    let pc = pm.mul_poly(&ch.c1.transpose())?;
    let gb1 = LinMatrix::from(&ll.g.mul(&ch.b1)?);
    let (p_out, r) = (ch.c1.nrows(), ch.b1.ncols());
    let inner = LinMatrix::from_blocks(&[
        vec![psi, pc.clone(), gb1.clone()],
        vec![pc.transpose(), eye(p_out, -(gamma - eps2)), LinMatrix::zeros(p_out, r)],
        vec![gb1.transpose(), LinMatrix::zeros(r, p_out), eye(r, -(gamma - eps2))],
    ])?;
    Ok((pm.sub(&eye(big_n, eps1))?, inner.scale(-1.0)))
}

struct Attempt {
    sol: SosSolution,
    p: LinMatrix,
}

fn attempt(
    plant: &PlantModel,
    ll: &LinearLikeForm,
    ch: &HinfChannels,
    gamma: f64,
    opts: &Thm4Options,
) -> Result<Attempt, SosError> {
    let (prog, p) = build(plant, ll, ch, gamma, opts)?;
    let sol = prog.solve()?;
    Ok(Attempt { sol, p })
}

/// The SOS program at a fixed `γ`, before solving.
pub fn theorem4_program(plant: &PlantModel, opts: &Thm4Options, gamma: f64) -> Result<SosProgram, SynthError> {
    plant.validate()?;
    let ll = to_linear_like(&plant.f, &plant.z_vector(), &plant.b)?;
    let ch = HinfChannels::from_plant(plant, ll.z.len())?;
    build(plant, &ll, &ch, gamma, opts)
        .map(|b| b.0)
        .map_err(|e| SynthError::from_sos("theorem 4 program", e, "check the H∞ channels"))
}

fn build(
    plant: &PlantModel,
    ll: &LinearLikeForm,
    ch: &HinfChannels,
    gamma: f64,
    opts: &Thm4Options,
) -> Result<(SosProgram, LinMatrix), SosError> {
    let mut prog = SosProgram::new(plant.state_vars()).with_options(opts.sos);
    let p = symmetric_decision(&mut prog, "P", ll.z.len(), &ll.xt, opts.p_degree);
    let (pos, block) = thm4_constraint_matrices(ll, ch, &p, gamma, opts.eps1, opts.eps2)
        .map_err(|e| SosError::InfeasibleByConstruction { constraint: "H∞ block".into(), reason: e.to_string() })?;
    match opts.region_radius {
        Some(r) => {
            let ball = Polynomial::constant(r * r) - (0..plant.n())
                .map(|i| Polynomial::x(i).pow(2))
                .fold(Polynomial::zero(), |a, b| a + b);
            let region = [ball];
            prog.require_sos_matrix_on("P positive", pos, &region, opts.multiplier_degree)?;
            prog.require_sos_matrix_on("H∞ block", block, &region, opts.multiplier_degree)?;
        }
        None => {
            prog.require_sos_matrix("P positive", pos)?;
            prog.require_sos_matrix("H∞ block", block)?;
        }
    }
    Ok((prog, p))
}

fn is_infeasible(e: &SosError) -> bool {
    matches!(e, SosError::Infeasible { .. } | SosError::InfeasibleByConstruction { .. })
}

/// Convex nominal-manifold design with H∞ attenuation of the unmatched
/// channel; `γ` is fixed or minimized by bisection.
pub fn theorem4_synthesize(plant: &PlantModel, opts: &Thm4Options) -> Result<Design, SynthError> {
    plant.validate()?;
    let ll = to_linear_like(&plant.f, &plant.z_vector(), &plant.b)?;
    let ch = HinfChannels::from_plant(plant, ll.z.len())?;
    let suggestion = "raise the degree of P or relax gamma";
    let mut iterations = Vec::new();
    let (gamma, best) = match opts.gamma {
        GammaChoice::Fixed(g) => {
            let a = attempt(plant, &ll, &ch, g, opts)
                .map_err(|e| SynthError::from_sos("theorem 4 program", e, suggestion))?;
            iterations.push(a.sol.iterations);
            (g, a)
        }
        GammaChoice::Minimize { tol, max } => {
            let mut hi = 1.0;
            let mut best = None;
            while best.is_none() {
                match attempt(plant, &ll, &ch, hi, opts) {
                    Ok(a) => {
                        iterations.push(a.sol.iterations);
                        best = Some(a);
                    }
                    Err(e) if is_infeasible(&e) && hi < max => hi *= 2.0,
                    Err(e) => return Err(SynthError::from_sos("theorem 4 program", e, suggestion)),
                }
            }
            let mut lo = if hi > 1.0 { hi / 2.0 } else { opts.eps2 };
            let mut best = best.expect("loop exits with a feasible attempt");
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                match attempt(plant, &ll, &ch, mid, opts) {
                    Ok(a) => {
                        iterations.push(a.sol.iterations);
                        hi = mid;
                        best = a;
                    }
                    Err(e) if is_infeasible(&e) => lo = mid,
                    Err(e) => return Err(SynthError::from_sos("theorem 4 bisection", e, suggestion)),
                }
            }
            (hi, best)
        }
    };
    let Attempt { sol, p } = best;
    let p_sol = sol.matrix(&p);
    check_definite(&p_sol, plant.n(), opts.region_radius, "P(x̃)")?;
    let map = solve_manifold_map(&plant.b, &opts.manifold)?;

    let gain = ll.g.mul(&ch.b2)?.transpose().scale(-gamma);
    let k = VecExpr::Solve { left: gain, mat: p_sol.clone(), right: Box::new(VecExpr::polys(&ll.z)) };
    let manifold = nominal_manifold(plant, &map.g, &map.m, &map.l, &map.w, &k)?;
    let rho = switching_gain(
        Theorem::Thm4,
        plant,
        &manifold,
        &GainExtras { k: Some(k.clone()), ..Default::default() },
    )?;
    let mut manifest = Manifest {
        degrees: BTreeMap::from([
            ("P".to_string(), opts.p_degree),
            ("L".to_string(), opts.manifold.l_degree),
        ]),
        parameters: BTreeMap::from([
            ("eps1".to_string(), opts.eps1),
            ("eps2".to_string(), opts.eps2),
            ("gamma".to_string(), gamma),
            ("region_radius".to_string(), opts.region_radius.unwrap_or(f64::INFINITY)),
        ]),
        ..Default::default()
    };
    manifest.absorb(&sol.certificates, sol.iterations);
    manifest.solver_iterations = iterations;
    manifest.absorb(&map.certificates, 0);
    let mut certificates = sol.certificates;
    certificates.extend(map.certificates);
    Ok(Design {
        theorem: Theorem::Thm4,
        plant: plant.clone(),
        manifold,
        controller: ControllerDesign { k: Some(k), direction: SwitchDirection::MbTranspose, rho, alpha: 0.0 },
        lyapunov: Lyapunov::Rational { z: ll.z.clone(), p: p_sol },
        gamma: Some(gamma),
        certificates,
        manifest,
    })
}
