//! Audits of externally supplied Lyapunov/feedback matrices against the
//! synthesis constraints, and the matrix-inverse derivative identity.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::linear_like::to_linear_like;
use super::model::{sample_points, PlantModel};
use super::thm2::thm2_constraint_matrices;
use super::thm4::{thm4_constraint_matrices, HinfChannels};
use super::SynthError;
use crate::poly::{PolyMatrix, Polynomial, Var};
use crate::sdp::min_eigenvalue;
use crate::sos::{check_sos_matrix, LinMatrix};

/// One constraint matrix, checked globally and on a sampled region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintAudit {
    pub name: String,
    /// Matrix-SOS with a certificate verified at the audit tolerance.
    pub sos: bool,
    /// Smallest eigenvalue over grid points of the box `[-h, h]^n` where the
    /// region polynomial (if any) is nonnegative.
    pub local_margin: f64,
    pub worst_point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub tolerance: f64,
    pub region: AuditRegion,
    pub constraints: Vec<ConstraintAudit>,
}

impl AuditReport {
    pub fn all_sos(&self) -> bool {
        self.constraints.iter().all(|c| c.sos)
    }

    pub fn min_margin(&self) -> f64 {
        self.constraints.iter().map(|c| c.local_margin).fold(f64::INFINITY, f64::min)
    }
}

/// Grid resolution per axis for local margins.
const GRID: usize = 41;

/// Smallest eigenvalue of the symmetric part of `m` over the grid points of
/// `[-h, h]^n` with `region ≥ 0`.
pub fn local_margin(
    m: &PolyMatrix,
    n: usize,
    h: f64,
    region: Option<&Polynomial>,
) -> Result<(f64, Vec<f64>), SynthError> {
    let mut best = (f64::INFINITY, vec![0.0; n]);
    let total = GRID.pow(n as u32);
    for k in 0..total {
        let mut idx = k;
        let pt: Vec<f64> = (0..n)
            .map(|_| {
                let i = idx % GRID;
                idx /= GRID;
                -h + 2.0 * h * i as f64 / (GRID - 1) as f64
            })
            .collect();
        if let Some(r) = region {
            if r.eval_state(&pt, 0.0)? < 0.0 {
                continue;
            }
        }
        let v = m.eval_state(&pt, 0.0)?;
        let e = min_eigenvalue(&((&v + v.transpose()) * 0.5));
        if e < best.0 {
            best = (e, pt);
        }
    }
    Ok(best)
}

/// Where local margins are taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRegion {
    pub half_width: f64,
    /// Optional extra constraint `r(x) ≥ 0`, e.g. a Lyapunov sublevel set.
    pub region: Option<Polynomial>,
}

impl AuditRegion {
    pub fn boxed(half_width: f64) -> Self {
        AuditRegion { half_width, region: None }
    }
}

fn audit(name: &str, m: &LinMatrix, n: usize, tol: f64, at: &AuditRegion) -> Result<ConstraintAudit, SynthError> {
    let pm = m.resolve(&|_| 0.0);
    let (sos, _) = check_sos_matrix(&pm, tol);
    let (local_margin, worst_point) = local_margin(&pm, n, at.half_width, at.region.as_ref())?;
    Ok(ConstraintAudit { name: name.into(), sos, local_margin, worst_point })
}

/// Check a given `Q(x̃)` and `N(x)` against the Lyapunov and decrease
/// conditions of the rational-feedback design.
pub fn audit_thm2(
    plant: &PlantModel,
    q_mat: &PolyMatrix,
    n_mat: &PolyMatrix,
    q: &Polynomial,
    eps: (f64, f64),
    tol: f64,
    at: &AuditRegion,
) -> Result<AuditReport, SynthError> {
    let ll = to_linear_like(&plant.f, &plant.z_vector(), &plant.b)?;
    let (lyap, decrease) =
        thm2_constraint_matrices(&ll, &plant.b, q, &LinMatrix::from(q_mat), &LinMatrix::from(n_mat), eps.0, eps.1)?;
    Ok(AuditReport {
        tolerance: tol,
        region: at.clone(),
        constraints: vec![
            audit("Q positive", &lyap, plant.n(), tol, at)?,
            audit("decrease", &decrease, plant.n(), tol, at)?,
        ],
    })
}

/// Check a given `P(x̃)` and `γ` against the H∞ design conditions.
pub fn audit_thm4(
    plant: &PlantModel,
    p_mat: &PolyMatrix,
    gamma: f64,
    eps: (f64, f64),
    tol: f64,
    at: &AuditRegion,
) -> Result<AuditReport, SynthError> {
    let ll = to_linear_like(&plant.f, &plant.z_vector(), &plant.b)?;
    let ch = HinfChannels::from_plant(plant, ll.z.len())?;
    let (pos, block) = thm4_constraint_matrices(&ll, &ch, &LinMatrix::from(p_mat), gamma, eps.0, eps.1)?;
    Ok(AuditReport {
        tolerance: tol,
        region: at.clone(),
        constraints: vec![
            audit("P positive", &pos, plant.n(), tol, at)?,
            audit("H∞ block", &block, plant.n(), tol, at)?,
        ],
    })
}

/// Worst relative mismatch between `∂P/∂x_j` and `−P·(∂P⁻¹/∂x_j)·P`, the
/// latter from central differences of `P⁻¹`, over `count` points of
/// `[-h, h]^n`.
pub fn inverse_derivative_mismatch(
    p: &PolyMatrix,
    n: usize,
    count: usize,
    h: f64,
    seed: u64,
) -> Result<f64, SynthError> {
    let inv = |x: &[f64]| -> Result<DMatrix<f64>, SynthError> {
        p.eval_state(x, 0.0)?
            .try_inverse()
            .ok_or_else(|| SynthError::Singular(format!("P at {x:?}")))
    };
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for pt in sample_points(n, count, seed) {
        let x: Vec<f64> = pt.iter().map(|v| v * h).collect();
        let pv = p.eval_state(&x, 0.0)?;
        for j in 0..n {
            let exact = p.diff(Var::x(j)).eval_state(&x, 0.0)?;
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += step;
            xm[j] -= step;
            let dinv = (inv(&xp)? - inv(&xm)?) / (2.0 * step);
            let approx = -(&pv * dinv * &pv);
            let scale = exact.norm().max(pv.norm());
            worst = worst.max((exact - approx).norm() / scale);
        }
    }
    Ok(worst)
}
