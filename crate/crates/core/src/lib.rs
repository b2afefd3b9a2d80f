//! Chebyshev spectral filtering of matrix-product states toward sharp energy
//! windows, with exact small-system oracles and a variational baseline.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use blas_src as _;

pub mod analysis;
pub mod dmrg;
pub mod error;
pub mod exact;
pub mod filter;
pub mod hamiltonian;
pub mod linalg;
pub mod mpo;
pub mod mps;
pub mod pauli;
pub mod tensor;
pub mod variational;

pub use error::{Error, Result};
pub use linalg::Truncation;
pub use mpo::Mpo;
pub use mps::Mps;
pub use num_complex::Complex64 as C64;
