//! Mean-field variational inference for the generative model.

mod elbo;
mod kmeans;
mod schedule;
mod train;
mod variational;

pub use elbo::{elbo_iwae, elbo_iwae_grad, elbo_iwae_with, BoundGradients, BoundOptions};
pub(crate) use elbo::check_batch;
pub use kmeans::{init_kmeans, weighted_kmeans, KMeansResult};
pub use schedule::{lr_schedule, Plateau};
pub(crate) use train::{run_epochs, BatchObjective};
pub use train::{fit, fit_from, initialize, FitOutput, LossTrace, TrainConfig, CENTER_PRIOR_LOG_SCALE, WIDTH_PRIOR_LOG_SCALE};
pub use variational::{GaussianParams, VariationalState};
