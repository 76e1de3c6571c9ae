use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::expr::{EvalError, Expr};
use crate::poly::PolyMatrix;
use crate::synth::PlantModel;

/// Dense matrix of expressions; serialized as nested rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<Expr>>", into = "Vec<Vec<Expr>>")]
pub struct ExprMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Expr>,
}

impl TryFrom<Vec<Vec<Expr>>> for ExprMatrix {
    type Error = String;
    fn try_from(rows: Vec<Vec<Expr>>) -> Result<Self, String> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err("ragged expression matrix".into());
        }
        Ok(ExprMatrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() })
    }
}

impl From<ExprMatrix> for Vec<Vec<Expr>> {
    fn from(m: ExprMatrix) -> Self {
        if m.cols == 0 {
            return vec![vec![]; m.rows];
        }
        m.data.chunks(m.cols).map(<[Expr]>::to_vec).collect()
    }
}

impl From<&PolyMatrix> for ExprMatrix {
    fn from(p: &PolyMatrix) -> Self {
        ExprMatrix {
            rows: p.nrows(),
            cols: p.ncols(),
            data: p.entries().iter().cloned().map(Expr::Poly).collect(),
        }
    }
}

impl ExprMatrix {
    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn eval(&self, x: &[f64], t: f64) -> Result<DMatrix<f64>, EvalError> {
        let vals = self.data.iter().map(|e| e.eval(x, t)).collect::<Result<Vec<_>, _>>()?;
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &vals))
    }
}

pub(crate) fn eval_vec(v: &[Expr], x: &[f64], t: f64) -> Result<DVector<f64>, EvalError> {
    Ok(DVector::from_vec(v.iter().map(|e| e.eval(x, t)).collect::<Result<Vec<_>, _>>()?))
}

/// Nominal dynamics `ẋ = f + B·u` plus the unmatched channel, all as
/// expressions so non-polynomial plants simulate without recasting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPlant {
    pub f: Vec<Expr>,
    pub b: ExprMatrix,
    #[serde(default)]
    pub bperp: Option<ExprMatrix>,
    #[serde(default)]
    pub beta0: f64,
    #[serde(default = "zero")]
    pub beta1: Expr,
    #[serde(default = "zero")]
    pub beta2: Expr,
}

fn zero() -> Expr {
    Expr::c(0.0)
}

impl From<&PlantModel> for SimPlant {
    fn from(p: &PlantModel) -> Self {
        SimPlant {
            f: p.f.iter().cloned().map(Expr::Poly).collect(),
            b: ExprMatrix::from(&p.b),
            bperp: p.bperp.as_ref().map(ExprMatrix::from),
            beta0: p.beta0,
            beta1: p.beta1.clone(),
            beta2: p.beta2.clone(),
        }
    }
}

impl SimPlant {
    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }
}

/// Perturbation signals over `(x, t)`; absent entries are zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Signals {
    #[serde(default)]
    pub phi0: Option<ExprMatrix>,
    #[serde(default)]
    pub phi1: Option<Vec<Expr>>,
    #[serde(default)]
    pub phi2: Option<Vec<Expr>>,
}

/// Perturbation values at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiValues {
    pub phi0: DMatrix<f64>,
    pub phi1: DVector<f64>,
    pub phi2: Option<DVector<f64>>,
}

impl Signals {
    pub fn zero() -> Self {
        Signals::default()
    }

    pub fn eval(&self, plant: &SimPlant, x: &[f64], t: f64) -> Result<PhiValues, EvalError> {
        let m = plant.m();
        let phi0 = match &self.phi0 {
            Some(p) => p.eval(x, t)?,
            None => DMatrix::zeros(m, m),
        };
        let phi1 = match &self.phi1 {
            Some(p) => eval_vec(p, x, t)?,
            None => DVector::zeros(m),
        };
        let phi2 = self.phi2.as_ref().map(|p| eval_vec(p, x, t)).transpose()?;
        if phi0.shape() != (m, m) || phi1.len() != m {
            return Err(EvalError::Dimension("perturbation sizes do not match B".into()));
        }
        Ok(PhiValues { phi0, phi1, phi2 })
    }
}

impl SimPlant {
    /// `f + B·((I + φ0)u + φ1) + B⊥·φ2`.
    pub fn rhs(&self, x: &[f64], u: &DVector<f64>, t: f64, phi: &PhiValues) -> Result<DVector<f64>, EvalError> {
        let f = eval_vec(&self.f, x, t)?;
        let b = self.b.eval(x, t)?;
        let m = self.m();
        let input = (DMatrix::identity(m, m) + &phi.phi0) * u + &phi.phi1;
        let mut dx = f + b * input;
        if let (Some(bp), Some(p2)) = (&self.bperp, &phi.phi2) {
            dx += bp.eval(x, t)? * p2;
        }
        Ok(dx)
    }

    /// First bound violated by `phi`, if any.
    pub fn bound_violation(&self, x: &[f64], t: f64, phi: &PhiValues) -> Result<Option<String>, EvalError> {
        const SLACK: f64 = 1e-9;
        let n0 = crate::expr::spectral_norm(&phi.phi0);
        if n0 > self.beta0 + SLACK {
            return Ok(Some(format!("‖φ0‖ = {n0} exceeds β0 = {}", self.beta0)));
        }
        let b1 = self.beta1.eval(x, t)?;
        if phi.phi1.norm() > b1 + SLACK {
            return Ok(Some(format!("‖φ1‖ = {} exceeds β1 = {b1}", phi.phi1.norm())));
        }
        if let Some(p2) = &phi.phi2 {
            let b2 = self.beta2.eval(x, t)?;
            if p2.norm() > b2 + SLACK {
                return Ok(Some(format!("‖φ2‖ = {} exceeds β2 = {b2}", p2.norm())));
            }
        }
        Ok(None)
    }
}
