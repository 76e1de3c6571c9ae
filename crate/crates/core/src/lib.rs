//! Sum-of-squares synthesis of generalized integral sliding-mode manifolds
//! and controllers, with closed-loop simulation.

pub mod expr;
pub mod poly;
pub mod recast;
pub mod sdp;
pub mod sim;
pub mod sos;
pub mod synth;
