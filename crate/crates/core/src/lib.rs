//! Worst-case certification of parametric first-order methods.
//!
//! A [`model_ir::ProblemFamily`] describes the parameter set, the initial set and the
//! algorithm; [`verifier::run_sequential`] computes the worst-case fixed-point residual
//! for K = 1, 2, ... by solving one MILP per K.

pub mod bounds;
pub mod cutgen;
pub mod encoder;
pub mod linalg;
pub mod model_ir;
pub mod verifier;
