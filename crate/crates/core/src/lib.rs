//! Partition of unity classifiers.
//!
//! A classifier is an ordered list of gates `g_i(x) in [0, 1]`. Each gate
//! accepts a fraction of the probability mass left over by the gates before
//! it, so the resulting partition functions are nonnegative and sum to one
//! by construction. Gates range from generic MLP gates to shape-informed
//! gates (balls, ellipsoids, direction-dependent shells) with a handful of
//! parameters.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`.

pub mod baseline;
pub mod classifier;
pub mod constructive;
pub mod datasets;
pub mod error;
pub mod gates;
pub mod model;
pub mod numeric;
pub mod partition;
pub mod scalar;
pub mod training;

pub use baseline::{softmax, SoftmaxMlp};
pub use classifier::{argmax, Classifier};
pub use datasets::{Dataset, StandardizationStats, SyntheticKind};
pub use error::{PunnError, Result};
pub use gates::{ActivationKind, GateArgument, GateFamily, GateShape, GateSpec};
pub use model::{AnyModel, ModelSpec};
pub use numeric::{AdamConfig, DenseMatrix, Rng};
pub use partition::{LossConfig, PartitionModel};
pub use scalar::Scalar;
pub use training::{evaluate, train, RunMetrics, TrainConfig};

pub type Matrix = numeric::DenseMatrix<f64>;
pub type Gate = gates::GateSpec<f64>;
pub type Punn = partition::PartitionModel<f64>;
pub type Mlp = baseline::SoftmaxMlp<f64>;
pub type Model = model::AnyModel<f64>;
pub type Data = datasets::Dataset<f64>;
