//! Dense matrix exponential and φ-functions, plus the per-stepsize cache that
//! every integrator goes through. Nothing else in the crate computes exponentials.

mod cache;
mod expm;
mod matrix;
mod phi;

pub use cache::{ExpCache, MatrixFunction};
pub use expm::{expm, expm_minus_identity};
pub use matrix::DenseMatrix;
pub use phi::{phi, phi_sequence, MAX_PHI_ORDER};
