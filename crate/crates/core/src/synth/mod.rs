//! Synthesis of integral sliding manifolds and controllers from SOS programs.
//!
//! Four design routes are offered. [`theorem2_synthesize`] and
//! [`theorem4_synthesize`] are convex: a state-dependent Lyapunov matrix and a
//! feedback gain come out of one SOS program (the latter with an H∞ bound
//! minimized by bisection). [`theorem1_synthesize`] and
//! [`theorem3_synthesize`] search a Lyapunov polynomial jointly with a general
//! manifold and are bilinear, so they alternate between the two halves.

mod alternation;
mod audit;
mod design;
mod gain;
mod linear_like;
mod manifold;
mod model;
mod thm2;
mod thm4;

pub use alternation::{
    theorem1_program, theorem1_synthesize, theorem3_program, theorem3_synthesize, AlternationOptions, AlternationReport, Thm1Options, Thm1Route, Thm3Options,
};
pub use audit::{audit_thm2, audit_thm4, inverse_derivative_mismatch, local_margin, AuditRegion, AuditReport, ConstraintAudit};
pub use design::{
    ControllerDesign, Design, Lyapunov, ManifoldDesign, Manifest, SwitchDirection,
    Theorem,
};
pub use gain::{
    equivalent_control, sliding_dynamics, switching_gain, GainExtras, SlidingDynamics,
};
pub use linear_like::{to_linear_like, LinearLikeForm};
pub use manifold::{solve_manifold_map, ManifoldMap, ManifoldMapOptions};
pub use model::{sample_points, PlantModel, SAMPLE_SEED};
pub use thm2::{theorem2_program, theorem2_synthesize, thm2_constraint_matrices, Thm2Options};
pub use thm4::{
    theorem4_program, theorem4_synthesize, thm4_constraint_matrices, GammaChoice, HinfChannels, Thm4Options,
};

use crate::expr::EvalError;
use crate::poly::{Monomial, PolyError};
use crate::sos::SosError;

/// Margin added to gain lower bounds that the theory states strictly.
pub const GAIN_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("model error: {0}")]
    Model(String),
    #[error("row {row} of f has term {monomial} divisible by no entry of Z")]
    Unfactorable { row: usize, monomial: Monomial },
    #[error("the distribution spanned by the columns of Bperp is not involutive: {0}")]
    NotInvolutive(String),
    #[error("{stage} infeasible ({source}); {suggestion}")]
    Infeasible { stage: String, source: SosError, suggestion: String },
    #[error("no manifold g with w·dg/dx = L·Bᵀ at the chosen degrees; {0}")]
    Integrability(String),
    #[error("{stage}: numerical failure ({source})")]
    Numerical { stage: String, source: SosError },
    #[error("alternation stalled after {} rounds (best margin {:.3e})", .0.rounds, .0.best_margin)]
    Stall(Box<AlternationReport>),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl SynthError {
    /// Classify a solver failure at `stage`.
    pub(crate) fn from_sos(stage: &str, e: SosError, suggestion: &str) -> Self {
        match e {
            SosError::Infeasible { .. }
            | SosError::InfeasibleByConstruction { .. }
            | SosError::Unbounded => SynthError::Infeasible {
                stage: stage.to_string(),
                source: e,
                suggestion: suggestion.to_string(),
            },
            other => SynthError::Numerical { stage: stage.to_string(), source: other },
        }
    }
}
