//! Dense block semidefinite programs.
//!
//! Primal form:
//!
//! ```text
//! minimize   Σ_b <C_b, X_b> + c_fᵀ x_f
//! subject to Σ_b <A_ib, X_b> + f_iᵀ x_f = b_i,   X_b ⪰ 0,   x_f free
//! ```
//!
//! with dual `maximize bᵀy s.t. C − Σ y_i A_i = S ⪰ 0, Fᵀy = c_f`.

mod sdpa;
mod solver;

pub use sdpa::{export_sdpa, parse_sdpa, SdpaError};
pub use solver::{solve, SolverOptions, MAX_ITER_ENV};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

/// One upper-triangular entry of a symmetric constraint matrix.
///
/// `(i, j, v)` with `i <= j` stands for `v` at both `(i, j)` and `(j, i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub block: usize,
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Constraint {
    pub entries: Vec<Entry>,
    /// `(free variable index, coefficient)`.
    pub free: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl Constraint {
    /// `<A, X>` for block matrices `x`.
    pub fn apply(&self, x: &[DMatrix<f64>]) -> f64 {
        self.entries
            .iter()
            .map(|e| {
                let v = x[e.block][(e.i, e.j)];
                if e.i == e.j {
                    e.value * v
                } else {
                    2.0 * e.value * v
                }
            })
            .sum()
    }

    pub(crate) fn frobenius_sq(&self) -> f64 {
        let mats: f64 = self
            .entries
            .iter()
            .map(|e| if e.i == e.j { e.value * e.value } else { 2.0 * e.value * e.value })
            .sum();
        mats + self.free.iter().map(|&(_, c)| c * c).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpProblem {
    pub block_sizes: Vec<usize>,
    pub objective: Vec<DMatrix<f64>>,
    pub constraints: Vec<Constraint>,
    pub num_free: usize,
    pub free_objective: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SdpError {
    #[error("block {block}: {msg}")]
    Block { block: usize, msg: String },
    #[error("constraint {index}: {msg}")]
    Constraint { index: usize, msg: String },
}

impl SdpProblem {
    pub fn new(block_sizes: Vec<usize>, num_free: usize) -> Self {
        let objective = block_sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        SdpProblem {
            block_sizes,
            objective,
            constraints: Vec::new(),
            num_free,
            free_objective: vec![0.0; num_free],
        }
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn rhs(&self) -> DVector<f64> {
        DVector::from_iterator(self.constraints.len(), self.constraints.iter().map(|c| c.rhs))
    }

    /// Check shapes and symmetry.
    pub fn validate(&self) -> Result<(), SdpError> {
        if self.objective.len() != self.block_sizes.len() {
            return Err(SdpError::Block { block: 0, msg: "objective block count".into() });
        }
        for (b, (c, &n)) in self.objective.iter().zip(&self.block_sizes).enumerate() {
            if c.nrows() != n || c.ncols() != n {
                return Err(SdpError::Block { block: b, msg: "objective shape".into() });
            }
            if (c - c.transpose()).amax() > 1e-14 * (1.0 + c.amax()) {
                return Err(SdpError::Block { block: b, msg: "objective not symmetric".into() });
            }
        }
        if self.free_objective.len() != self.num_free {
            return Err(SdpError::Block { block: 0, msg: "free objective length".into() });
        }
        for (k, c) in self.constraints.iter().enumerate() {
            for e in &c.entries {
                let ok = e.block < self.block_sizes.len()
                    && e.i <= e.j
                    && e.j < self.block_sizes[e.block];
                if !ok {
                    return Err(SdpError::Constraint {
                        index: k,
                        msg: format!("bad entry ({}, {}, {})", e.block, e.i, e.j),
                    });
                }
            }
            if c.free.iter().any(|&(f, _)| f >= self.num_free) {
                return Err(SdpError::Constraint { index: k, msg: "free index".into() });
            }
        }
        Ok(())
    }

    /// `Σ y_i A_i` per block.
    pub fn adjoint(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut out: Vec<DMatrix<f64>> =
            self.block_sizes.iter().map(|&n| DMatrix::zeros(n, n)).collect();
        for (c, &yi) in self.constraints.iter().zip(y.iter()) {
            for e in &c.entries {
                out[e.block][(e.i, e.j)] += yi * e.value;
                if e.i != e.j {
                    out[e.block][(e.j, e.i)] += yi * e.value;
                }
            }
        }
        out
    }

    pub fn free_adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.num_free);
        for (c, &yi) in self.constraints.iter().zip(y.iter()) {
            for &(f, v) in &c.free {
                out[f] += yi * v;
            }
        }
        out
    }

    pub fn apply(&self, x: &[DMatrix<f64>], xf: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.constraints.len(),
            self.constraints
                .iter()
                .map(|c| c.apply(x) + c.free.iter().map(|&(f, v)| v * xf[f]).sum::<f64>()),
        )
    }

    pub fn primal_objective(&self, x: &[DMatrix<f64>], xf: &DVector<f64>) -> f64 {
        self.objective.iter().zip(x).map(|(c, x)| c.dot(x)).sum::<f64>()
            + self.free_objective.iter().zip(xf.iter()).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Copy with every constraint scaled to unit Frobenius norm; returns the
    /// scale factors used.
    pub(crate) fn normalized(&self) -> (SdpProblem, Vec<f64>) {
        let mut out = self.clone();
        let mut scales = Vec::with_capacity(out.constraints.len());
        for c in &mut out.constraints {
            let nrm = c.frobenius_sq().sqrt();
            let s = if nrm > 0.0 { nrm } else { 1.0 };
            for e in &mut c.entries {
                e.value /= s;
            }
            for f in &mut c.free {
                f.1 /= s;
            }
            c.rhs /= s;
            scales.push(s);
        }
        (out, scales)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SdpStatus {
    Optimal,
    /// A certificate ray was detected; see [`SdpSolution::infeasibility`].
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Infeasibility {
    /// No `X ⪰ 0` satisfies the equality constraints (dual improving ray).
    Primal,
    /// The dual is infeasible (primal improving ray).
    Dual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    pub x: Vec<DMatrix<f64>>,
    pub x_free: DVector<f64>,
    pub y: DVector<f64>,
    pub s: Vec<DMatrix<f64>>,
    pub status: SdpStatus,
    pub infeasibility: Option<Infeasibility>,
    pub iterations: usize,
    /// Relative residuals at the returned iterate, as used for termination.
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
}

/// Absolute KKT residuals of a primal-dual pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `‖A(X) + F x_f − b‖₂`
    pub primal: f64,
    /// `sqrt(‖Aᵀy + S − C‖_F² + ‖Fᵀy − c_f‖²)`
    pub dual: f64,
    /// `|<C,X> + c_fᵀx_f − bᵀy|`
    pub gap: f64,
    pub min_eig_x: f64,
    pub min_eig_s: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }
}

pub fn check_kkt(p: &SdpProblem, s: &SdpSolution) -> KktReport {
    let ax = p.apply(&s.x, &s.x_free);
    let primal = (ax - p.rhs()).norm();
    let aty = p.adjoint(&s.y);
    let mut dual_sq = 0.0;
    for ((c, a), sb) in p.objective.iter().zip(&aty).zip(&s.s) {
        dual_sq += (a + sb - c).norm_squared();
    }
    let fty = p.free_adjoint(&s.y);
    dual_sq += (fty - DVector::from_column_slice(&p.free_objective)).norm_squared();
    let pobj = p.primal_objective(&s.x, &s.x_free);
    let dobj = p.rhs().dot(&s.y);
    let min_eig = |ms: &[DMatrix<f64>]| {
        ms.iter()
            .filter(|m| m.nrows() > 0)
            .map(min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    };
    KktReport {
        primal,
        dual: dual_sq.sqrt(),
        gap: (pobj - dobj).abs(),
        min_eig_x: min_eig(&s.x),
        min_eig_s: min_eig(&s.s),
    }
}

/// Smallest eigenvalue of a symmetric matrix (symmetrized first).
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}
