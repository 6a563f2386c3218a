//! Feynman-Kac Monte Carlo for spin-1/2 Pauli and Pauli-Fierz semigroups.
//!
//! The spin is carried by a Poisson-driven flip process and the quantized
//! field by a finite list of Gaussian modes, so every semigroup matrix
//! element becomes an expectation over (Brownian path, jump times, field
//! draw). The [`oracle`] module builds the same models as dense matrices.

pub mod error;
pub mod estimate;
pub mod linalg;
pub mod rng;

pub mod process;
pub mod integrators;
pub mod pauli_fk;
pub mod field;
pub mod pf_mc;
pub mod oracle;
pub mod cli;

pub use error::{Error, Result};
pub use estimate::McEstimate;
pub use num_complex::Complex64 as C64;
