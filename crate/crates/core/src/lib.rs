//! Class-specific Boolean matrix factorization.
//!
//! Factorizes a class-labeled binary matrix `D` into a common pattern matrix
//! `X`, per-class pattern alterations `V`, and a usage matrix `Y`, so that each
//! class block is approximated by the Boolean product of its usage with the
//! altered patterns. The factorization rank is selected automatically by
//! minimizing an MDL-derived description length; the relaxed objective is
//! optimized with proximal alternating linearized minimization (PALM).
//!
//! The crate ships the optimizer ([`csalt`], [`palm`], [`objective`]), matrix
//! primitives ([`binmat`]), a planted-model generator ([`synthgen`]) and a
//! recovery evaluation suite ([`eval`]). All numeric kernels are generic over
//! the floating-point scalar; [`Real`] fixes the default precision.

use std::iter::Sum;

use ndarray::NdFloat;
use num_traits::FromPrimitive;

pub mod binmat;
pub mod csalt;
pub mod eval;
pub mod objective;
pub mod palm;
pub mod synthgen;

/// Floating-point scalar the numeric core is generic over.
///
/// Implemented by `f32` and `f64`.
pub trait Scalar: NdFloat + FromPrimitive + Sum {
    /// Lossless-enough conversion from `f64` constants.
    fn from_f64c(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable")
    }

    /// Conversion from counts.
    fn from_count(x: usize) -> Self {
        Self::from_usize(x).expect("count representable")
    }
}

impl<T: NdFloat + FromPrimitive + Sum> Scalar for T {}

/// Default scalar type; all CLI entry points run at this precision.
pub type Real = f64;

/// Real-valued matrix (relaxed factor iterates live in `[0,1]` entrywise).
pub type RealMatrix<F> = ndarray::Array2<F>;

/// [`RealMatrix`] at default precision.
pub type RealMatrixF64 = RealMatrix<Real>;

pub use binmat::{BinaryMatrix, ClassPartition};
pub use csalt::{factorize, factorize_unsupervised, CsaltConfig, FactorModel, FactorizeResult};
pub use eval::{evaluate, EvalReport};
pub use objective::{ObjectiveContext, RelaxedState};
pub use palm::PalmConfig;
pub use synthgen::{generate, GeneratorSpec, GroundTruth};

/// Errors reported by the factorization pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },
    #[error("unknown class id {class} (class count {count})")]
    UnknownClass { class: usize, count: usize },
    #[error("column {col} of the data matrix has no ones; code lengths are undefined")]
    EmptyColumn { col: usize },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("generator constraints infeasible: {0}")]
    ConstraintInfeasible(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_mismatch<T>(
    context: &'static str,
    expected: impl Into<String>,
    found: impl Into<String>,
) -> Result<T> {
    Err(Error::DimensionMismatch {
        context,
        expected: expected.into(),
        found: found.into(),
    })
}
