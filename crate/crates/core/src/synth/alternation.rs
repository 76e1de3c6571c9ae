//! Alternating search for the bilinear general-manifold designs.
//!
//! The decrease condition couples the Lyapunov polynomial `V` with the
//! manifold-side unknowns (`K` for the projected form, or `g` and `D` for the
//! single-input form). Each half-step fixes one side and solves an SOS
//! program for the other, optimizing a shared score so the score of the kept
//! iterate never decreases.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::design::{ControllerDesign, Design, Lyapunov, ManifoldDesign, Manifest, SwitchDirection, Theorem};
use super::gain::{switching_gain, GainExtras};
use super::manifold::{solve_manifold_map, ManifoldMapOptions};
use super::model::PlantModel;
use super::SynthError;
use crate::expr::{Expr, VecExpr};
use crate::poly::{
    involutivity_check, jacobian, LinPoly, Monomial, PolyMatrix, PolyVector, Polynomial, Unknown, Var,
};
use crate::sos::{LinMatrix, NamedCertificate, SosError, SosOptions, SosProgram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Thm1Route {
    /// Decrease along `(I − BB⁺)f − B(BᵀB)⁻¹K`; needs constant `BᵀB`.
    Projected,
    /// Single-input form `(MB·I − B·M)f − B·D`, no integrability needed.
    Siso,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternationOptions {
    pub max_rounds: usize,
    /// Stop once a round improves the score by less than this.
    pub tol: f64,
    pub v_degree: u32,
    pub k_degree: u32,
    /// Degrees of `g` and `D` on the single-input route.
    pub g_degree: u32,
    pub d_degree: u32,
    /// `l1 = l2 = l_eps·Σxᵢ²`.
    pub l_eps: f64,
    /// Lower bound on `MB` on the single-input route.
    pub mb_eps: f64,
}

impl Default for AlternationOptions {
    fn default() -> Self {
        AlternationOptions {
            max_rounds: 30,
            tol: 1e-6,
            v_degree: 2,
            k_degree: 1,
            g_degree: 1,
            d_degree: 3,
            l_eps: 1e-4,
            mb_eps: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm1Options {
    pub route: Thm1Route,
    pub alternation: AlternationOptions,
    pub manifold: ManifoldMapOptions,
    pub sos: SosOptions,
}

impl Default for Thm1Options {
    fn default() -> Self {
        Thm1Options {
            route: Thm1Route::Projected,
            alternation: AlternationOptions::default(),
            manifold: ManifoldMapOptions::default(),
            sos: SosOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm3Options {
    pub alternation: AlternationOptions,
    /// Weight `c` in the penalty output `z = [x; c·K]`.
    pub penalty: f64,
    /// Fixed `γ`; `None` minimizes `γ²` in every half-step.
    pub gamma: Option<f64>,
    pub manifold: ManifoldMapOptions,
    pub sos: SosOptions,
}

impl Default for Thm3Options {
    fn default() -> Self {
        Thm3Options {
            alternation: AlternationOptions::default(),
            penalty: 0.1,
            gamma: None,
            manifold: ManifoldMapOptions::default(),
            sos: SosOptions::default(),
        }
    }
}

/// Trace of an alternation run. `scores` holds the kept iterate's score after
/// each round: the margin `t` (capped at 1) or `−γ²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternationReport {
    pub rounds: usize,
    pub scores: Vec<f64>,
    pub best_margin: f64,
    pub converged: bool,
    pub reason: String,
    /// Best iterate, for inspection after a stall.
    pub v: Option<Polynomial>,
}

#[derive(Debug, Clone, PartialEq)]
enum Side {
    Projected { k: PolyVector },
    Siso { g: Polynomial, d: Polynomial },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Score {
    /// Maximize `t ≤ 1` in `−V̇ − l2 − t·Σxᵢ² ∈ Σ`; optional fixed `γ²`.
    Margin { gamma2: Option<f64> },
    /// Minimize `γ²`.
    Gamma2,
}

struct Problem {
    n: usize,
    vars: Vec<Var>,
    /// Disturbance variables `w`, appended after the states.
    wvars: Vec<Var>,
    b: PolyMatrix,
    bperp: Option<PolyMatrix>,
    /// `(I − BB⁺)f` and `B(BᵀB)⁻¹` on the projected route.
    fp: PolyVector,
    h: PolyMatrix,
    f: PolyVector,
    l: Polynomial,
    penalty: Option<f64>,
    score: Score,
    opts: AlternationOptions,
    sos: SosOptions,
}

struct StepOut {
    v: Polynomial,
    side: Side,
    score: f64,
    certificates: Vec<NamedCertificate>,
    iterations: usize,
}

fn sum_squares(vars: &[Var]) -> Polynomial {
    vars.iter().map(|&v| Polynomial::var(v).pow(2)).fold(Polynomial::zero(), |a, b| a + b)
}

fn lin_const(c: f64) -> LinPoly {
    LinPoly::from(Polynomial::constant(c))
}

impl Problem {
    fn universe(&self) -> Vec<Var> {
        self.vars.iter().chain(&self.wvars).copied().collect()
    }

    /// The closed-loop field as affine polynomials, introducing side unknowns
    /// when `side` is `None`. Returns the field and the side decision handles.
    fn field(
        &self,
        prog: &mut SosProgram,
        side: Option<&Side>,
        siso: bool,
    ) -> (Vec<LinPoly>, Vec<LinPoly>) {
        let o = &self.opts;
        if !siso {
            let k: Vec<LinPoly> = match side {
                Some(Side::Projected { k }) => k.iter().map(LinPoly::from).collect(),
                _ => (0..self.b.ncols())
                    .map(|i| prog.free_poly_deg(&format!("K{}", i + 1), &self.vars, 1, o.k_degree))
                    .collect(),
            };
            let field = (0..self.n)
                .map(|i| {
                    let mut e = LinPoly::from(&self.fp[i]);
                    for (j, kj) in k.iter().enumerate() {
                        e = e.sub(&kj.mul_poly(&self.h[(i, j)]));
                    }
                    e
                })
                .collect();
            return (field, k);
        }
        let (g, d) = match side {
            Some(Side::Siso { g, d }) => (LinPoly::from(g), LinPoly::from(d)),
            _ => (
                prog.free_poly_deg("g", &self.vars, 1, o.g_degree),
                prog.free_poly_deg("D", &self.vars, 0, o.d_degree),
            ),
        };
        let m: Vec<LinPoly> = self.vars.iter().map(|&v| g.diff(v)).collect();
        let mb = m.iter().enumerate().fold(LinPoly::zero(), |a, (j, mj)| a.add(&mj.mul_poly(&self.b[(j, 0)])));
        let mf = m.iter().enumerate().fold(LinPoly::zero(), |a, (j, mj)| a.add(&mj.mul_poly(&self.f[j])));
        let field = (0..self.n)
            .map(|i| {
                let bi = &self.b[(i, 0)];
                mb.mul_poly(&self.f[i]).sub(&mf.mul_poly(bi)).sub(&d.mul_poly(bi))
            })
            .collect();
        (field, vec![g, d, mb])
    }

    fn build(&self, fixed_v: Option<&Polynomial>, fixed_side: Option<&Side>, siso: bool) -> Result<Built, SosError> {
        let mut prog = SosProgram::new(self.universe()).with_options(self.sos);
        let v = match fixed_v {
            Some(v) => LinPoly::from(v),
            None => {
                let v = prog.free_poly_deg("V", &self.vars, 2, self.opts.v_degree);
                prog.require_sos("V positive", v.sub(&LinPoly::from(&self.l)));
                if matches!(self.score, Score::Margin { .. }) {
                    let trace = self.vars.iter().fold(LinPoly::zero(), |a, &x| {
                        a.add(&v.coeff_of(&Monomial::from_pairs([(x, 2)])))
                    });
                    prog.require_zero("V scale", trace.sub(&lin_const(self.n as f64)));
                }
                v
            }
        };
        let (field, side_vars) = self.field(&mut prog, fixed_side, siso);
        if siso && fixed_side.is_none() {
            prog.require_sos("MB positive", side_vars[2].sub(&lin_const(self.opts.mb_eps)));
        }
        let mut vdot = LinPoly::zero();
        for (i, &x) in self.vars.iter().enumerate() {
            let mut fi = field[i].clone();
            if let Some(bp) = &self.bperp {
                for (r, &w) in self.wvars.iter().enumerate() {
                    fi = fi.add(&LinPoly::from(&bp[(i, r)] * &Polynomial::var(w)));
                }
            }
            vdot = vdot.add(&v.diff(x).mul(&fi).map_err(|e| SosError::InfeasibleByConstruction {
                constraint: "decrease".into(),
                reason: e.to_string(),
            })?);
        }
        let xx = sum_squares(&self.vars);
        let ww = sum_squares(&self.wvars);
        let mut dec = vdot.scale(-1.0).sub(&LinPoly::from(&self.l));
        let score_unknown = match self.score {
            Score::Margin { gamma2 } => {
                // t = 1 − slack with slack ≥ 0.
                let slack = prog.scalar("margin slack", Some(0.0));
                dec = dec
                    .sub(&LinPoly::from(&xx))
                    .add(&LinPoly::unknown_term(slack, 1.0, Monomial::one()).mul_poly(&xx));
                if let Some(g2) = gamma2 {
                    dec = dec.add(&LinPoly::from(ww.scale(g2)));
                }
                slack
            }
            Score::Gamma2 => {
                let g2 = prog.scalar("gamma squared", Some(0.0));
                dec = dec.add(&LinPoly::unknown_term(g2, 1.0, Monomial::one()).mul_poly(&ww));
                g2
            }
        };
        prog.minimize(score_unknown, 1.0);
        match self.penalty {
            Some(c) => {
                // −V̇ − l2 − xᵀx − c²KᵀK + γ²wᵀw ≥ 0 as a Schur complement.
                dec = dec.sub(&LinPoly::from(&xx));
                let k = &side_vars;
                let m = k.len();
                let mut mat = LinMatrix::zeros(m + 1, m + 1);
                mat.set(0, 0, dec);
                for (i, ki) in k.iter().enumerate() {
                    mat.set(0, i + 1, ki.scale(c));
                    mat.set(i + 1, 0, ki.scale(c));
                    mat.set(i + 1, i + 1, lin_const(1.0));
                }
                prog.require_sos_matrix("dissipation", mat)?;
            }
            None => prog.require_sos("decrease", dec),
        }
        Ok(Built { prog, v, side_vars, score_unknown })
    }

    fn step(&self, fixed_v: Option<&Polynomial>, fixed_side: Option<&Side>, siso: bool) -> Result<StepOut, SosError> {
        let Built { prog, v, side_vars, score_unknown } = self.build(fixed_v, fixed_side, siso)?;
        let sol = prog.solve()?;
        let raw = sol.value(score_unknown);
        let score = match self.score {
            Score::Margin { .. } => 1.0 - raw,
            Score::Gamma2 => -raw,
        };
        let side = match fixed_side {
            Some(s) => s.clone(),
            None if siso => Side::Siso { g: sol.poly(&side_vars[0]), d: sol.poly(&side_vars[1]) },
            None => Side::Projected { k: side_vars.iter().map(|p| sol.poly(p)).collect() },
        };
        let v = sol.poly(&v);
        Ok(StepOut { v, side, score, certificates: sol.certificates, iterations: sol.iterations })
    }
}

/// A half-step program with handles to its decision polynomials.
struct Built {
    prog: SosProgram,
    v: LinPoly,
    side_vars: Vec<LinPoly>,
    score_unknown: Unknown,
}

fn run(pb: &Problem, siso: bool) -> Result<(StepOut, AlternationReport), SynthError> {
    let v0 = sum_squares(&pb.vars);
    let stall = |rounds, scores: Vec<f64>, reason: String, v| {
        let best_margin = scores.last().copied().unwrap_or(f64::NEG_INFINITY);
        SynthError::Stall(Box::new(AlternationReport {
            rounds,
            scores,
            best_margin,
            converged: false,
            reason,
            v,
        }))
    };
    let mut best = match pb.step(Some(&v0), None, siso) {
        Ok(s) => s,
        Err(e) => return Err(stall(0, vec![], format!("first manifold step failed: {e}"), Some(v0))),
    };
    let mut scores = vec![best.score];
    let mut iterations = vec![best.iterations];
    let cap = matches!(pb.score, Score::Margin { .. });
    let mut converged = false;
    let mut rounds = 0;
    let mut reason = String::from("round limit reached");
    while rounds < pb.opts.max_rounds {
        rounds += 1;
        let before = best.score;
        for phase in 0..2 {
            let out = if phase == 0 {
                pb.step(None, Some(&best.side), siso)
            } else {
                pb.step(Some(&best.v), None, siso)
            };
            // A failed or worse half-step keeps the previous iterate.
            if let Ok(out) = out {
                iterations.push(out.iterations);
                if out.score >= best.score {
                    best = out;
                }
            }
        }
        scores.push(best.score);
        if cap && best.score >= 1.0 - 1e-9 {
            converged = true;
            reason = "margin reached its cap".into();
            break;
        }
        if best.score - before < pb.opts.tol {
            converged = true;
            reason = format!("improvement below {:e}", pb.opts.tol);
            break;
        }
    }
    let certified = match pb.score {
        Score::Margin { .. } => best.score >= 0.0,
        Score::Gamma2 => true,
    };
    if !certified {
        let v = Some(best.v.clone());
        return Err(stall(rounds, scores, format!("{reason}; best margin is negative"), v));
    }
    let best_margin = *scores.last().expect("at least one score");
    best.iterations = iterations.iter().sum();
    Ok((best, AlternationReport { rounds, scores, best_margin, converged, reason, v: None }))
}

fn projected_parts(plant: &PlantModel) -> Result<(PolyVector, PolyMatrix), SynthError> {
    let btb = plant.b.transpose().mul(&plant.b)?;
    if !btb.is_constant() {
        return Err(SynthError::Model("the projected route needs a constant BᵀB".into()));
    }
    let m = plant.m();
    let vals: Vec<f64> = btb.entries().iter().map(|p| p.constant_term()).collect();
    let inv = DMatrix::from_row_slice(m, m, &vals)
        .try_inverse()
        .ok_or_else(|| SynthError::Singular("BᵀB".into()))?;
    let inv = PolyMatrix::from_constant(m, m, inv.transpose().as_slice());
    let h = plant.b.mul(&inv)?;
    let fp = plant.f.sub(&h.mul(&plant.b.transpose())?.mul_vec(&plant.f)?);
    Ok((fp, h))
}

fn check_assumption2(plant: &PlantModel) -> Result<(), SynthError> {
    if let Some(bp) = &plant.bperp {
        let inv = involutivity_check(&bp.columns())?;
        if !inv.involutive {
            return Err(SynthError::NotInvolutive(format!("witness {:?}", inv.witness)));
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    theorem: Theorem,
    plant: &PlantModel,
    best: StepOut,
    report: AlternationReport,
    manifold_opts: &ManifoldMapOptions,
    opts: &AlternationOptions,
    gamma: Option<f64>,
) -> Result<Design, SynthError> {
    let vars = plant.state_vars();
    let mut certificates = best.certificates;
    let manifold = match &best.side {
        Side::Projected { k } => {
            let map = solve_manifold_map(&plant.b, manifold_opts)?;
            certificates.extend(map.certificates.iter().cloned());
            let lk = VecExpr::MatMul(map.l.clone(), Box::new(VecExpr::polys(k)));
            let d = if map.w.is_constant() && map.w.constant_term() == 1.0 {
                lk
            } else {
                VecExpr::Scale(Box::new(Expr::c(1.0).div(Expr::poly(map.w.clone()))), Box::new(lk))
            };
            ManifoldDesign { g: map.g, m: map.m, d, l: map.l, w: map.w }
        }
        Side::Siso { g, d } => {
            let gv = PolyVector::new(vec![g.clone()]);
            let m = jacobian(&gv, &vars);
            let mb = m.mul(&plant.b)?;
            ManifoldDesign {
                g: gv,
                m,
                d: VecExpr::polys(&PolyVector::new(vec![d.clone()])),
                l: mb,
                w: Polynomial::one(),
            }
        }
    };
    let rho = switching_gain(theorem, plant, &manifold, &GainExtras::default())?;
    let mut manifest = Manifest {
        degrees: BTreeMap::from([
            ("V".to_string(), opts.v_degree),
            ("K".to_string(), opts.k_degree),
            ("g".to_string(), opts.g_degree),
            ("D".to_string(), opts.d_degree),
        ]),
        parameters: BTreeMap::from([("l_eps".to_string(), opts.l_eps)]),
        rounds: Some(report.rounds),
        margins: report.scores.clone(),
        notes: vec![report.reason.clone()],
        ..Default::default()
    };
    if let Some(g) = gamma {
        manifest.parameters.insert("gamma".into(), g);
    }
    manifest.absorb(&certificates, best.iterations);
    Ok(Design {
        theorem,
        plant: plant.clone(),
        manifold,
        controller: ControllerDesign { k: None, direction: SwitchDirection::Unit, rho, alpha: 0.0 },
        lyapunov: Lyapunov::Poly { v: best.v },
        gamma,
        certificates,
        manifest,
    })
}

/// General-manifold design for matched perturbations.
pub fn theorem1_synthesize(plant: &PlantModel, opts: &Thm1Options) -> Result<Design, SynthError> {
    let (pb, siso) = thm1_problem(plant, opts)?;
    let (best, report) = run(&pb, siso)?;
    assemble(Theorem::Thm1, plant, best, report, &opts.manifold, &opts.alternation, None)
}

/// The first half-step program (manifold side at `V = Σxᵢ²`).
pub fn theorem1_program(plant: &PlantModel, opts: &Thm1Options) -> Result<SosProgram, SynthError> {
    let (pb, siso) = thm1_problem(plant, opts)?;
    first_program(&pb, siso)
}

fn first_program(pb: &Problem, siso: bool) -> Result<SosProgram, SynthError> {
    let v0 = sum_squares(&pb.vars);
    pb.build(Some(&v0), None, siso)
        .map(|b| b.prog)
        .map_err(|e| SynthError::from_sos("first manifold step", e, "check the plant dimensions"))
}

fn thm1_problem(plant: &PlantModel, opts: &Thm1Options) -> Result<(Problem, bool), SynthError> {
    plant.validate()?;
    let vars = plant.state_vars();
    let siso = opts.route == Thm1Route::Siso;
    let (fp, h) = if siso {
        if plant.m() != 1 {
            return Err(SynthError::Model("the single-input route needs m = 1".into()));
        }
        (plant.f.clone(), plant.b.clone())
    } else {
        check_assumption2(plant)?;
        projected_parts(plant)?
    };
    let pb = Problem {
        n: plant.n(),
        l: sum_squares(&vars).scale(opts.alternation.l_eps),
        vars,
        wvars: vec![],
        b: plant.b.clone(),
        bperp: None,
        fp,
        h,
        f: plant.f.clone(),
        penalty: None,
        score: Score::Margin { gamma2: None },
        opts: opts.alternation.clone(),
        sos: opts.sos,
    };
    Ok((pb, siso))
}

/// General-manifold design with an L2-gain bound from the unmatched
/// perturbation to `z = [x; c·K]`.
pub fn theorem3_synthesize(plant: &PlantModel, opts: &Thm3Options) -> Result<Design, SynthError> {
    let pb = thm3_problem(plant, opts)?;
    let (best, report) = run(&pb, false)?;
    let gamma = match opts.gamma {
        Some(g) => g,
        None => (-best.score).max(0.0).sqrt(),
    };
    assemble(Theorem::Thm3, plant, best, report, &opts.manifold, &opts.alternation, Some(gamma))
}

/// The first half-step program of [`theorem3_synthesize`].
pub fn theorem3_program(plant: &PlantModel, opts: &Thm3Options) -> Result<SosProgram, SynthError> {
    first_program(&thm3_problem(plant, opts)?, false)
}

fn thm3_problem(plant: &PlantModel, opts: &Thm3Options) -> Result<Problem, SynthError> {
    plant.validate()?;
    let bperp = plant
        .bperp
        .clone()
        .ok_or_else(|| SynthError::Model("theorem 3 needs Bperp".into()))?;
    check_assumption2(plant)?;
    let (fp, h) = projected_parts(plant)?;
    let n = plant.n();
    let vars = plant.state_vars();
    let wvars = (0..bperp.ncols()).map(|r| Var::x(n + r)).collect();
    let score = match opts.gamma {
        Some(g) => Score::Margin { gamma2: Some(g * g) },
        None => Score::Gamma2,
    };
    let pb = Problem {
        n,
        l: sum_squares(&vars).scale(opts.alternation.l_eps),
        vars,
        wvars,
        b: plant.b.clone(),
        bperp: Some(bperp),
        fp,
        h,
        f: plant.f.clone(),
        penalty: Some(opts.penalty),
        score,
        opts: opts.alternation.clone(),
        sos: opts.sos,
    };
    Ok(pb)
}
