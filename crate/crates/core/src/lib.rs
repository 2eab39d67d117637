pub mod error;
pub mod linalg;
pub mod rng;

pub use error::{Error, Result};
pub mod checks;
pub mod ensemble;
pub mod experiments;
pub mod hamiltonian;
pub mod oracle;
pub mod protocol;
pub mod qpe;
pub mod spectral;
