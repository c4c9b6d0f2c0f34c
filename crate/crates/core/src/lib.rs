//! Matrix completion under weighted trace-norm regularization with arbitrary
//! sampling distributions.

pub mod adversarial;
pub mod bench;
pub mod complexity;
pub mod distributions;
pub mod error;
pub mod linalg;
pub mod loss;
pub mod model;
pub mod rng;
pub mod solvers;
pub mod weighting;

pub use distributions::{JointDistribution, SampleSet, TransductivePool};
pub use error::{Error, Result};
pub use linalg::Matrix;
pub use loss::{LossKind, LossSpec};
pub use model::CompletionModel;
pub use solvers::{NoiseConfig, SolverConfig};
pub use weighting::{MarginalWeights, NormBudget, SmoothingConfig, WeightKind};
