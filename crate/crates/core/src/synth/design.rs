use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::model::PlantModel;
use crate::expr::{EvalError, Expr, VecExpr};
use crate::poly::{PolyMatrix, PolyVector, Polynomial};
use crate::sos::NamedCertificate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Theorem {
    Thm1,
    Thm2,
    Thm3,
    Thm4,
}

/// Direction of the discontinuous control term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchDirection {
    /// `s / ‖s‖`
    Unit,
    /// `(MB)ᵀs / ‖(MB)ᵀs‖`; for `M = L·Bᵀ/w` this is the
    /// `(L·Bᵀ·w⁻¹·B)ᵀs` direction.
    MbTranspose,
}

/// `s = g(x) + z`, `ż = D(x)`, `z(x₀) = −g(x₀)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldDesign {
    pub g: PolyVector,
    /// `∂g/∂x`.
    pub m: PolyMatrix,
    pub d: VecExpr,
    pub l: PolyMatrix,
    pub w: Polynomial,
}

impl ManifoldDesign {
    pub fn z0(&self, x0: &[f64]) -> Result<DVector<f64>, EvalError> {
        Ok(-DVector::from_vec(self.g.eval_state(x0, 0.0)?))
    }

    pub fn s(&self, x: &[f64], z: &DVector<f64>) -> Result<DVector<f64>, EvalError> {
        Ok(DVector::from_vec(self.g.eval_state(x, 0.0)?) + z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerDesign {
    /// Continuous part; absent for the purely switching laws.
    pub k: Option<VecExpr>,
    pub direction: SwitchDirection,
    pub rho: Expr,
    /// Boundary layer: the switching term is dropped while `‖s‖ < alpha`.
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Lyapunov {
    Poly { v: Polynomial },
    /// `V = Zᵀ P⁻¹ Z`.
    Rational { z: PolyVector, p: PolyMatrix },
}

impl Lyapunov {
    pub fn eval(&self, x: &[f64]) -> Result<f64, EvalError> {
        match self {
            Lyapunov::Poly { v } => Ok(v.eval_state(x, 0.0)?),
            Lyapunov::Rational { z, p } => {
                let zv = DVector::from_vec(z.eval_state(x, 0.0)?);
                let pm: DMatrix<f64> = p.eval_state(x, 0.0)?;
                let sol = pm.lu().solve(&zv).ok_or_else(|| EvalError::Singular("P(x)".into()))?;
                Ok(zv.dot(&sol))
            }
        }
    }
}

/// Reproducibility record stored with every design.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub degrees: BTreeMap<String, u32>,
    pub parameters: BTreeMap<String, f64>,
    pub solver_iterations: Vec<usize>,
    pub max_residual: f64,
    pub min_eigenvalue: f64,
    pub rounds: Option<usize>,
    pub margins: Vec<f64>,
    pub notes: Vec<String>,
}

impl Manifest {
    pub(crate) fn absorb(&mut self, certs: &[NamedCertificate], iterations: usize) {
        if self.solver_iterations.is_empty() {
            self.min_eigenvalue = f64::INFINITY;
        }
        self.solver_iterations.push(iterations);
        for c in certs {
            self.max_residual = self.max_residual.max(c.report.max_residual);
            self.min_eigenvalue = self.min_eigenvalue.min(c.report.min_eigenvalue);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub theorem: Theorem,
    pub plant: PlantModel,
    pub manifold: ManifoldDesign,
    pub controller: ControllerDesign,
    pub lyapunov: Lyapunov,
    /// Attained H∞ level, when the design bounds one.
    pub gamma: Option<f64>,
    pub certificates: Vec<NamedCertificate>,
    pub manifest: Manifest,
}

impl Design {
    /// Worst certificate residual and Gram eigenvalue across all certificates.
    pub fn certificate_extremes(&self) -> (f64, f64) {
        self.certificates.iter().fold((0.0, f64::INFINITY), |(r, e), c| {
            (r.max(c.report.max_residual), e.min(c.report.min_eigenvalue))
        })
    }

    pub fn all_certificates_pass(&self) -> bool {
        self.certificates.iter().all(|c| c.report.passed)
    }

    /// Control input at `(x, t)` given the manifold value `s`.
    pub fn control(&self, x: &[f64], t: f64, s: &DVector<f64>) -> Result<DVector<f64>, EvalError> {
        let m = self.plant.m();
        let mut u = match &self.controller.k {
            Some(k) => k.eval(x, t)?,
            None => DVector::zeros(m),
        };
        if s.norm() >= self.controller.alpha && s.norm() > 0.0 {
            let dir = self.switch_direction(x, s)?;
            let rho = self.controller.rho.eval(x, t)?;
            u -= dir * rho;
        }
        Ok(u)
    }

    /// Unit switching direction at `x` for manifold value `s ≠ 0`.
    pub fn switch_direction(
        &self,
        x: &[f64],
        s: &DVector<f64>,
    ) -> Result<DVector<f64>, EvalError> {
        let v = match self.controller.direction {
            SwitchDirection::Unit => s.clone(),
            SwitchDirection::MbTranspose => {
                let mb = self.manifold.m.eval_state(x, 0.0)? * self.plant.b.eval_state(x, 0.0)?;
                mb.transpose() * s
            }
        };
        let nv = v.norm();
        if nv == 0.0 {
            return Err(EvalError::Singular("switching direction (MB)ᵀs vanishes".into()));
        }
        Ok(v / nv)
    }
}
