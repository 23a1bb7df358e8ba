//! Arbitrary-precision basic hypergeometric series and an identity verifier.
//!
//! - [`precision`]: the [`PrecisionComplex`] scalar.
//! - [`qcore`]: q-shifted factorials and theta functions.
//! - [`engine`]: unilateral, bilateral and very-well-poised series.

pub mod catalog;
pub mod classical;
pub mod engine;
pub mod error;
pub mod expr;
pub mod precision;
pub mod qcore;
pub mod verifier;

pub use error::{Error, Result};
pub use precision::PrecisionComplex;
pub use qcore::{QBase, TruncationControl};
