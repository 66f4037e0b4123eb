//! Forward models mapping a casting action to its settled endpoint.

mod dataset;
mod gp;
mod model;
mod nn;

pub use dataset::{combine_datasets, CombineSettings, RegressionDataset};
pub use gp::{optimize_hyper, GpHyper, GpRegressor, HyperSearch, GP_CAPACITY};
pub use model::{gp_fit, nn_train, BackendKind, ForwardModel, Normalization};
pub use nn::{train_mlp, Dense, Gradient, Mlp, NNConfig, TrainReport};
