use nalgebra::{DMatrix, DVector};

use super::design::{Design, ManifoldDesign, Theorem};
use super::model::PlantModel;
use super::{SynthError, GAIN_MARGIN};
use crate::expr::{Expr, VecExpr};
use crate::poly::PolyMatrix;

/// Continuous additions to the control that enter the gain formula.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GainExtras {
    /// Continuous feedback `k(x)` of the nominal-manifold designs.
    pub k: Option<VecExpr>,
    /// `u01`, applied directly.
    pub u01: Option<VecExpr>,
    /// `u02`, applied through `(MB)⁻¹`.
    pub u02: Option<VecExpr>,
}

fn norm(v: VecExpr) -> Expr {
    Expr::norm(v)
}

/// Lower bound on the switching gain plus [`GAIN_MARGIN`], as an expression
/// in `(x, t)`. Every variant divides by `1 − β0`.
pub fn switching_gain(
    theorem: Theorem,
    plant: &PlantModel,
    manifold: &ManifoldDesign,
    extras: &GainExtras,
) -> Result<Expr, SynthError> {
    let beta0 = plant.beta0;
    let mut terms = vec![plant.beta1.clone()];
    match theorem {
        Theorem::Thm2 | Theorem::Thm4 => {
            let k = extras
                .k
                .clone()
                .ok_or_else(|| SynthError::Model("gain needs the continuous feedback k".into()))?;
            if beta0 > 0.0 {
                terms.push(Expr::c(beta0).mul(norm(k)));
            }
            if theorem == Theorem::Thm4 {
                terms.push(unmatched_term(plant, None)?);
            }
        }
        Theorem::Thm1 | Theorem::Thm3 => {
            let mb = manifold.m.mul(&plant.b)?;
            let mut drift = VecExpr::Add(
                Box::new(VecExpr::polys(&manifold.m.mul_vec(&plant.f)?)),
                Box::new(manifold.d.clone()),
            );
            if let Some(u02) = &extras.u02 {
                drift = VecExpr::Add(Box::new(drift), Box::new(u02.clone()));
            }
            let mb_norm = Expr::MatNorm(mb.clone());
            terms.push(norm(drift).div(mb_norm.clone()));
            if theorem == Theorem::Thm3 {
                terms.push(unmatched_term(plant, Some(&manifold.m))?.div(mb_norm));
            }
            if let Some(u01) = &extras.u01 {
                terms.push(norm(u01.clone()));
            }
            if beta0 > 0.0 && (extras.u01.is_some() || extras.u02.is_some()) {
                let mut u0: Option<VecExpr> = extras.u01.clone();
                if let Some(u02) = &extras.u02 {
                    let part = VecExpr::Solve {
                        left: PolyMatrix::identity(plant.m()),
                        mat: mb,
                        right: Box::new(u02.clone()),
                    };
                    u0 = Some(match u0 {
                        Some(a) => VecExpr::Add(Box::new(a), Box::new(part)),
                        None => part,
                    });
                }
                terms.push(Expr::c(beta0).mul(norm(u0.expect("u01 or u02 present"))));
            }
        }
    }
    let sum = Expr::Add(terms);
    Ok(Expr::c(1.0 / (1.0 - beta0)).mul(sum).add(Expr::c(GAIN_MARGIN)))
}

/// `‖M·B⊥‖·β2` (or `‖B⊥‖·β2` without `M`).
fn unmatched_term(plant: &PlantModel, m: Option<&PolyMatrix>) -> Result<Expr, SynthError> {
    let bp = plant
        .bperp
        .as_ref()
        .ok_or_else(|| SynthError::Model("unmatched gain needs Bperp".into()))?;
    let mat = match m {
        Some(m) => m.mul(bp)?,
        None => bp.clone(),
    };
    Ok(Expr::MatNorm(mat).mul(plant.beta2.clone()))
}

/// Nominal sliding vector field and the equivalent unmatched perturbation.
#[derive(Debug, Clone, PartialEq)]
pub struct SlidingDynamics {
    /// `(I − B(MB)⁻¹M)f − B(MB)⁻¹D`
    pub nominal: DVector<f64>,
    /// `(I − B(MB)⁻¹M)B⊥φ2`
    pub phi_eq: DVector<f64>,
}

struct Pointwise {
    b: DMatrix<f64>,
    m: DMatrix<f64>,
    mb_inv: DMatrix<f64>,
    f: DVector<f64>,
    d: DVector<f64>,
}

fn pointwise(design: &Design, x: &[f64], t: f64) -> Result<Pointwise, SynthError> {
    let b = design.plant.b.eval_state(x, t)?;
    let m = design.manifold.m.eval_state(x, t)?;
    let mb_inv = (&m * &b)
        .try_inverse()
        .ok_or_else(|| SynthError::Singular(format!("M·B at {x:?}")))?;
    let f = DVector::from_vec(design.plant.f.eval_state(x, t)?);
    let d = design.manifold.d.eval(x, t)?;
    Ok(Pointwise { b, m, mb_inv, f, d })
}

fn unmatched(design: &Design, x: &[f64], t: f64, phi2: Option<&DVector<f64>>) -> Result<DVector<f64>, SynthError> {
    let n = design.plant.n();
    match (phi2, &design.plant.bperp) {
        (Some(p), Some(bp)) => Ok(bp.eval_state(x, t)? * p),
        (Some(_), None) => Err(SynthError::Model("phi2 given but the plant has no Bperp".into())),
        (None, _) => Ok(DVector::zeros(n)),
    }
}

pub fn sliding_dynamics(
    design: &Design,
    x: &[f64],
    t: f64,
    phi2: Option<&DVector<f64>>,
) -> Result<SlidingDynamics, SynthError> {
    let p = pointwise(design, x, t)?;
    let n = design.plant.n();
    let proj = DMatrix::identity(n, n) - &p.b * &p.mb_inv * &p.m;
    let nominal = &proj * &p.f - &p.b * &p.mb_inv * &p.d;
    let phi_eq = proj * unmatched(design, x, t, phi2)?;
    Ok(SlidingDynamics { nominal, phi_eq })
}

/// Control that keeps `ṡ = 0` under the given perturbation values:
/// `(I + φ0)⁻¹·(−(MB)⁻¹(Mf + D + M·B⊥φ2) − φ1)`.
pub fn equivalent_control(
    design: &Design,
    x: &[f64],
    t: f64,
    phi0: &DMatrix<f64>,
    phi1: &DVector<f64>,
    phi2: Option<&DVector<f64>>,
) -> Result<DVector<f64>, SynthError> {
    let p = pointwise(design, x, t)?;
    let m = design.plant.m();
    let drift = &p.m * (&p.f + unmatched(design, x, t, phi2)?) + &p.d;
    let rhs = -(&p.mb_inv * drift) - phi1;
    (DMatrix::identity(m, m) + phi0)
        .lu()
        .solve(&rhs)
        .ok_or_else(|| SynthError::Singular(format!("I + phi0 at {x:?}")))
}
