pub mod autodiff;
pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod graph;
mod hashing;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod score;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = linalg::Mat<f64>;
pub type Dataset = data::Dataset<f64>;
pub type Corpus = data::Corpus<f64>;
pub type GraphBundle = graph::GraphBundle<f64>;
pub type ModelParams = model::ModelParams<f64>;
pub type Network = model::Network<Matrix>;
pub type Checkpoint = checkpoint::Checkpoint<f64>;
