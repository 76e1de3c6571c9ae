use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::expr::Expr;
use crate::poly::{PolyMatrix, PolyVector, Var};

pub const SAMPLE_SEED: u64 = 0x5eed_0002;
const SAMPLE_COUNT: usize = 20;
const RANK_TOL: f64 = 1e-8;

/// `count` points drawn uniformly from `[-1, 1]^n` with a fixed seed.
pub fn sample_points(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()).collect()
}

/// Uncertain polynomial plant `ẋ = f + B·((I + φ0)u + φ1) + B⊥·φ2` with
/// `‖φ0‖ ≤ β0`, `‖φ1‖ ≤ β1(x, t)` and `‖φ2‖ ≤ β2(x, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    pub f: PolyVector,
    pub b: PolyMatrix,
    #[serde(default)]
    pub bperp: Option<PolyMatrix>,
    #[serde(default)]
    pub beta0: f64,
    #[serde(default = "zero_expr")]
    pub beta1: Expr,
    #[serde(default = "zero_expr")]
    pub beta2: Expr,
    /// Monomial vector `Z(x)` of the linear-like form; defaults to `x`.
    #[serde(default)]
    pub z: Option<PolyVector>,
    /// Performance output matrix for H∞ designs; defaults to the identity.
    #[serde(default)]
    pub c1: Option<PolyMatrix>,
}

fn zero_expr() -> Expr {
    Expr::c(0.0)
}

impl PlantModel {
    pub fn new(f: PolyVector, b: PolyMatrix) -> Self {
        PlantModel {
            f,
            b,
            bperp: None,
            beta0: 0.0,
            beta1: zero_expr(),
            beta2: zero_expr(),
            z: None,
            c1: None,
        }
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn state_vars(&self) -> Vec<Var> {
        (0..self.n()).map(Var::x).collect()
    }

    pub fn z_vector(&self) -> PolyVector {
        self.z.clone().unwrap_or_else(|| PolyVector::states(self.n()))
    }

    /// Check dimensions, `0 ≤ β0 < 1`, full column rank of `B` and
    /// `Bᵀ·B⊥ = 0` at fixed-seed sample points.
    pub fn validate(&self) -> Result<(), SynthError> {
        let (n, m) = (self.n(), self.m());
        if n == 0 || m == 0 || m > n {
            return Err(SynthError::Model(format!("need 0 < m ≤ n, got n = {n}, m = {m}")));
        }
        if self.b.nrows() != n {
            return Err(SynthError::Model(format!("B has {} rows, f has {n}", self.b.nrows())));
        }
        if !(0.0..1.0).contains(&self.beta0) {
            return Err(SynthError::Model(format!("beta0 = {} outside [0, 1)", self.beta0)));
        }
        for v in self.f.vars().into_iter().chain(self.b.entries().iter().flat_map(|p| p.vars())) {
            if v.state_index().is_none_or(|i| i >= n) {
                return Err(SynthError::Model(format!("plant uses variable {v} outside x1..x{n}")));
            }
        }
        if let Some(z) = &self.z {
            if z.iter().any(|p| p.constant_term() != 0.0) {
                return Err(SynthError::Model("Z(x) must vanish at the origin".into()));
            }
        }
        let points = sample_points(n, SAMPLE_COUNT, SAMPLE_SEED);
        for pt in &points {
            let bv = self.b.eval_state(pt, 0.0)?;
            if rank(&bv) < m {
                return Err(SynthError::Model(format!("B loses column rank at {pt:?}")));
            }
        }
        if let Some(bp) = &self.bperp {
            if bp.nrows() != n || bp.ncols() != n - m {
                return Err(SynthError::Model(format!(
                    "Bperp must be {n}×{}, got {}×{}",
                    n - m,
                    bp.nrows(),
                    bp.ncols()
                )));
            }
            for pt in &points {
                let bv = self.b.eval_state(pt, 0.0)?;
                let pv = bp.eval_state(pt, 0.0)?;
                let cross = bv.transpose() * &pv;
                if cross.amax() > 1e-9 * (1.0 + bv.amax() * pv.amax()) {
                    return Err(SynthError::Model(format!("Bᵀ·Bperp ≠ 0 at {pt:?}")));
                }
                if rank(&pv) < n - m {
                    return Err(SynthError::Model(format!("Bperp loses column rank at {pt:?}")));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn rank(m: &DMatrix<f64>) -> usize {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0;
    }
    m.clone().svd(false, false).singular_values.iter().filter(|&&s| s > RANK_TOL).count()
}
