//! Dense numeric substrate: matrices, seeded randomness, rectifier MLPs,
//! Adam and a finite-difference gradient oracle.

pub mod adam;
pub mod gradcheck;
pub mod matrix;
pub mod mlp;
pub mod rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{finite_diff_grad, max_relative_error, richardson_diff_grad};
pub use matrix::DenseMatrix;
pub use mlp::{mlp_backward, mlp_forward, mlp_param_count, Layer, MlpCache, MlpGradient, MlpParams};
pub use rng::Rng;
