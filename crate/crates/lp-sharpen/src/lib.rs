//! Density sharpening for discrete distributions.
//!
//! Starting from a user-specified null pmf `p0(x)` on an ordered discrete
//! support, this crate constructs the LP-orthonormal polynomial system of
//! that measure, estimates sharpened models `p0(x)·d(F0(x))` in Fourier and
//! maximum-entropy form, and runs goodness-of-fit, relative-entropy and
//! bootstrap inference on top of them. Discovery tooling (pointwise bump
//! scans over the comparison density, SVD embedding of many empirical
//! distributions) and a simulation harness for power studies round out the
//! toolkit. Everything is seedable and deterministic.
//!
//! The `lp-sharpen` binary exposes the same functionality as subcommands;
//! see the crate README for the CLI surface.

pub mod base;
pub mod basis;
pub mod cli;
pub mod discovery;
pub mod error;
pub mod inference;
pub mod io;
pub mod rng;
pub mod sharpen;
pub mod simulate;

pub use base::{make_parametric, BaseMeasure, EmpiricalCounts, Family, TruncationPolicy};
pub use basis::LpBasis;
pub use discovery::{BumpScanResult, DssResult};
pub use error::{Error, Result};
pub use inference::GofReport;
pub use sharpen::{LpCoefficients, ModelForm, Selection, SharpenedModel};
pub use simulate::PowerStudySpec;

/// Crate version embedded in every emitted artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
