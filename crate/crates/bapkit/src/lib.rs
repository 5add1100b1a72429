//! Fast-growing perturbations for dynamical systems via a matrix-free block
//! Arnoldi approximation of the leading singular vectors of the evolved
//! increment matrix.
//!
//! The crate has five layers:
//!
//! * [`dynamics`]: the two test systems (cyclic Lorenz-96 and a 2-D shallow
//!   water model), a shared [`dynamics::Flow`] abstraction, and the
//!   total-energy coordinate transform.
//! * [`linalg`]: dense helpers on small matrices (orthonormalization, thin QR,
//!   SVD triplets, departure from normality) and the singular value error
//!   bound check used by verification.
//! * [`bap`]: the evolved increment function, explicit increment matrices,
//!   chord start blocks, and the block Arnoldi driver that produces
//!   perturbation directions without ever forming the full matrix.
//! * [`metrics`]: exponential growth rate curves, their means over sampled
//!   states, relative growth integrals, and cost accounting.
//! * [`harness`]: experiment configuration, the CSV-producing commands behind
//!   the CLI, and the self-check suite.

pub mod bap;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;

pub use error::{Error, Result};
