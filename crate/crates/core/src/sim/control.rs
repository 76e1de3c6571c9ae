use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::plant::{eval_vec, ExprMatrix, SimPlant};
use crate::expr::{EvalError, Expr, VecExpr};
use crate::synth::{Design, Lyapunov, SwitchDirection};

/// Rate of the integral state `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "d", rename_all = "snake_case")]
pub enum ZRate {
    /// `ż = D(x)`.
    Explicit(VecExpr),
    /// `ż = −M·(f + B·k)` from the simulated plant's nominal part.
    NominalClosedLoop,
}

/// Controller state beyond the plant, e.g. a dynamic extension. It occupies
/// the variable slots after the plant states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraState {
    pub init: f64,
    pub rate: Expr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerMode {
    /// Drop the switching term while `‖s‖ < α`.
    #[default]
    Switch,
    /// Replace `v/‖v‖` by `v/max(‖v‖, α)`.
    Saturation,
}

/// Integral sliding-mode law `u = k − ρ·d(s)` on `s = g(x) + z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GismLaw {
    pub g: VecExpr,
    /// `∂g/∂x`.
    pub m: ExprMatrix,
    pub zdot: ZRate,
    #[serde(default)]
    pub k: Option<VecExpr>,
    pub direction: SwitchDirection,
    pub rho: Expr,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub layer: LayerMode,
    #[serde(default)]
    pub extra_states: Vec<ExtraState>,
    /// Recorded along traces when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<Lyapunov>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    pub u: DVector<f64>,
    /// Discontinuous part actually applied.
    pub switching: DVector<f64>,
    pub rho: f64,
    /// `M·B` was numerically singular at this evaluation.
    pub singular_mb: bool,
}

impl From<&Design> for GismLaw {
    fn from(d: &Design) -> Self {
        GismLaw {
            g: VecExpr::polys(&d.manifold.g),
            m: ExprMatrix::from(&d.manifold.m),
            zdot: ZRate::Explicit(d.manifold.d.clone()),
            k: d.controller.k.clone(),
            direction: d.controller.direction,
            rho: d.controller.rho.clone(),
            alpha: d.controller.alpha,
            layer: LayerMode::Switch,
            extra_states: vec![],
            lyapunov: Some(d.lyapunov.clone()),
        }
    }
}

impl GismLaw {
    pub fn s(&self, x: &[f64], z: &DVector<f64>, t: f64) -> Result<DVector<f64>, EvalError> {
        Ok(self.g.eval(x, t)? + z)
    }

    pub fn z0(&self, x0: &[f64], t0: f64) -> Result<DVector<f64>, EvalError> {
        Ok(-self.g.eval(x0, t0)?)
    }

    /// Continuous part `k(x)`, zero when the law has none.
    pub fn continuous(&self, x: &[f64], t: f64, m: usize) -> Result<DVector<f64>, EvalError> {
        match &self.k {
            Some(k) => k.eval(x, t),
            None => Ok(DVector::zeros(m)),
        }
    }

    pub fn zdot(&self, plant: &SimPlant, x: &[f64], t: f64) -> Result<DVector<f64>, EvalError> {
        match &self.zdot {
            ZRate::Explicit(d) => d.eval(x, t),
            ZRate::NominalClosedLoop => {
                let xp = &x[..plant.n()];
                let k = self.continuous(x, t, plant.m())?;
                let closed = eval_vec(&plant.f, xp, t)? + plant.b.eval(xp, t)? * k;
                Ok(-(self.m.eval(x, t)? * closed))
            }
        }
    }

    pub fn extra_rates(&self, x: &[f64], t: f64) -> Result<Vec<f64>, EvalError> {
        self.extra_states.iter().map(|e| e.rate.eval(x, t)).collect()
    }

    /// Control at state `x` (plant plus extra states) and sliding variable `s`.
    pub fn control(&self, plant: &SimPlant, x: &[f64], t: f64, s: &DVector<f64>) -> Result<ControlOutput, EvalError> {
        let m = plant.m();
        let k = self.continuous(x, t, m)?;
        let mb = self.m.eval(x, t)? * plant.b.eval(&x[..plant.n()], t)?;
        let sv = mb.singular_values();
        let singular_mb = sv.min() <= 1e-12 * sv.max().max(1.0);
        let v = match self.direction {
            SwitchDirection::Unit => s.clone(),
            SwitchDirection::MbTranspose => mb.transpose() * s,
        };
        let rho = self.rho.eval(x, t)?;
        let norm = v.norm();
        let switching = match self.layer {
            LayerMode::Switch if s.norm() >= self.alpha && norm > 0.0 => &v * (-rho / norm),
            LayerMode::Saturation if norm > 0.0 => &v * (-rho / norm.max(self.alpha)),
            _ => DVector::zeros(m),
        };
        Ok(ControlOutput { u: k + &switching, switching, rho, singular_mb })
    }
}
