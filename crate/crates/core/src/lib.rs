//! Sketch-and-project linear solvers driven by basic, synchronous-parallel
//! and asynchronous master-worker SGD, together with the convergence-rate
//! machinery used to compare them.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command
//! line and everything else touching the operating system live in the `asgd`
//! companion crate.
//!
//! Layout:
//!
//! * [`linalg`]: small dense kernel (Jacobi eigensolver, pseudoinverse,
//!   B-norms and B-projections).
//! * [`sketch`]: linear systems, sketch distributions, `Z_S`, `E[Z]` and the
//!   spectral profile of `W = B^{-1/2} E[Z] B^{-1/2}`.
//! * [`solvers`]: the update kernels and the basic/parallel run loops.
//! * [`rate`]: closed-form rates, recurrence coefficients, Perron roots,
//!   complexity bounds and processor thresholds.
//! * [`sim`]: deterministic logical-time simulation of the asynchronous
//!   master-worker scheme.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod linalg;
pub mod rate;
pub mod rng;
pub mod sim;
pub mod sketch;
pub mod solvers;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, SpdMatrix};
pub use rate::{CaseTag, ComplexityBound, RateCoefficients};
pub use sketch::{LinearSystem, SketchDistribution, SpectralProfile};
