//! Numerical laboratory for almost Hermitian geometry.
//!
//! Structures are supplied as exact 2-jets of `(g, J)` at chart points. From a
//! jet the crate computes Levi-Civita and Chern calculus, the classified
//! quadratic tensors, principal symbols of the relevant operators, and the
//! right-hand sides of several curvature flows, which can also be integrated
//! on homogeneous models.
//!
//! Index conventions used throughout:
//!
//! * `J^a_b` is stored at `[a, b]`, i.e. `J e_b = J^a_b e_a`;
//! * derivative slots come first: `dg[c, a, b] = ∂_c g_ab`;
//! * `DJ(X, Y, Z) = g((D_X J) Y, Z)`, `ω(X, Y) = g(JX, Y)`;
//! * `Rm(X, Y, Z, W) = g(D_X D_Y Z − D_Y D_X Z − D_[X,Y] Z, W)` and
//!   `Ric(X, Y) = Rm(e_i, X, Y, e_i)`.

pub mod autodiff;
pub mod chern;
pub mod classify;
pub mod flows;
pub mod report;
pub mod riemann;
pub mod structures;
pub mod suite;
pub mod symbols;
pub mod tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {0} is not an even integer ≥ 2")]
    OddDimension(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("slot {slot} out of range for rank {rank}")]
    SlotOutOfRange { slot: usize, rank: usize },
    #[error("trace slots must differ (both are {0})")]
    IdenticalSlots(usize),
    #[error("metric is not positive definite: {0}")]
    NotSpd(String),
    #[error("J² + I residual {0:e} exceeds tolerance")]
    NotAlmostComplex(f64),
    #[error("g(J·,J·) − g residual {0:e} exceeds tolerance")]
    NotCompatible(f64),
    #[error("unknown structure `{0}`")]
    UnknownStructure(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("point outside chart domain: {0}")]
    OutsideDomain(String),
    #[error("setting mismatch: {0}")]
    SettingMismatch(String),
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("invalid flow specification: {0}")]
    FlowSpec(String),
    #[error("torsion type residual {0:e} exceeds tolerance")]
    TorsionType(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub use structures::{Setting, StructureJet, StructureProvider};
pub use tensor::{PointStructure, PropertyFlags, Tensor, Variance};
