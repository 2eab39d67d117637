//! Dense complex linear algebra: matrices, Hermitian eigensolver, Haar
//! sampling and register-aware statevectors.

pub mod eigen;
pub mod haar;
pub mod matrix;
pub mod state;

pub use eigen::{eigh, eigvalsh, expm_i, operator_norm, unitarity_residual, EigenDecomposition};
pub use matrix::{inner, norm_sqr, ComplexMatrix, C64, ONE, ZERO};
pub use state::{apply_to_register, Register, Statevector};
