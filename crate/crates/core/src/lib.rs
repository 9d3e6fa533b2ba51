//! Classical optimization of shallow brickwall circuits approximating
//! `exp(-itH)` for open Ising chains.
//!
//! The objective `Re tr[U(θ)† W U_prev]` is evaluated by contracting a stack
//! of matrix product operators site by site; gradients and Hessians reuse the
//! cached left/right environments of that contraction. Dense routes exist for
//! small systems and serve as oracles and as the source of the error metrics.

pub mod analysis;
pub mod circuits;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod metrics;
pub mod mpo;
pub mod objective;
pub mod optimizers;
pub mod propagators;
pub mod tensor;
pub mod trotter;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;

/// Largest qubit count for which any dense `2^n x 2^n` object is built.
pub const DENSE_MAX_QUBITS: usize = 14;
