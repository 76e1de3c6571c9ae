//! Closed-loop simulation of integral sliding-mode designs under
//! perturbations, with sliding metrics and bundled scenarios.

mod control;
mod metrics;
mod plant;
mod run;
mod scenario;

pub use control::{ControlOutput, ExtraState, GismLaw, LayerMode, ZRate};
pub use metrics::{sliding_metrics, SlidingMetrics, BAND_FACTOR};
pub use plant::{ExprMatrix, PhiValues, Signals, SimPlant};
pub use run::{simulate, Guard, SimConfig, SimEvent, SimTrace};
pub use scenario::{
    glucose_model, scenario_fixtures, GlucoseParams, Interval, ModelFile, SynthesisSettings, SCENARIOS,
};

use crate::expr::EvalError;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("model schema: {0}")]
    Schema(String),
    #[error("missing parameters: {0}")]
    MissingParameters(&'static str),
    #[error("configuration: {0}")]
    Config(String),
    #[error("perturbation bound violated at t = {t}: {message}")]
    BoundViolation { t: f64, message: String },
    #[error("state diverged at t = {t}")]
    Divergence { t: f64, trace: Box<SimTrace> },
    #[error(transparent)]
    Eval(#[from] EvalError),
}
