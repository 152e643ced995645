//! Exact multi-output Gaussian process regression.
//!
//! Every output dimension is an independent scalar GP over shared inputs with
//! a zero prior mean and an anisotropic squared-exponential kernel, so the
//! joint predictive covariance is diagonal.

mod kernel;
mod likelihood;
mod model;
mod optimize;
mod persist;

pub use kernel::{gram_matrix, kernel_eval, Hyperparameters};
pub use likelihood::log_marginal_likelihood;
pub use model::{GpModel, Prediction, TrainingSet};
pub use optimize::{optimize_hyperparameters, optimize_hyperparameters_with, OptimizeConfig, OptimizeOutcome, OutputFit};
