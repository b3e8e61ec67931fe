//! Solver-agnostic MILP modeling layer.
//!
//! Models are built with [`MilpModel`] and solved through a [`Backend`]: HiGHS for real
//! workloads (feature `highs`, on by default) or [`ReferenceBackend`] for small models.

pub mod lp_format;
pub mod model;
pub mod reference;
pub mod solve;

#[cfg(feature = "highs")]
mod highs_backend;

#[cfg(feature = "highs")]
pub use highs_backend::HighsBackend;
pub use model::{
    ConstrId, Constraint, Infeasibility, LinExpr, MilpModel, ModelError, ObjSense, Sense, Var, VarId, VarKind,
};
pub use reference::ReferenceBackend;
pub use solve::{Backend, SolveOptions, SolveResult, SolveStatus};

/// The default production backend.
#[cfg(feature = "highs")]
pub fn default_backend() -> Box<dyn Backend> {
    Box::new(HighsBackend::default())
}

#[cfg(not(feature = "highs"))]
pub fn default_backend() -> Box<dyn Backend> {
    Box::new(ReferenceBackend)
}
