//! Federated learning simulator with a probe-based Sybil filter.
//!
//! Every round each client trains the shared CNN on its own shard. The
//! server then feeds one fixed random image (the probe) through every local
//! model, classifies the 10-way responses with nearest-neighbour search
//! against a handful of server-controlled indicator clients, and averages
//! only the models that look honest.
//!
//! Modules:
//! - [`tensor`], [`nn`]: the CNN, its backward pass and the Adam optimizer.
//! - [`dataset`]: IDX loading, synthetic data, IID partitioning, poisoning.
//! - [`filter`]: probe generation, Euclidean 1-NN classification, decisions.
//! - [`federation`]: local training, FedAvg and the round loop.
//! - [`analysis`]: PCA projection of probe vectors and CSV output.
//! - [`config`]: experiment configuration and its `key = value` format.

pub mod analysis;
pub mod config;
pub mod dataset;
mod error;
pub mod federation;
pub mod filter;
pub mod nn;
pub mod seed;
pub mod tensor;

pub use config::ExperimentConfig;
pub use dataset::{Example, PoisonKind, PoisonSpec, Shard};
pub use error::{Error, Result};
pub use federation::{ClientConfig, ClientRole, RoundReport, TrainConfig};
pub use filter::{FilterDecision, IndicatorSet, ProbeVector};
pub use nn::{AdamState, Gradients, ModelParams};
pub use tensor::Tensor;

/// Number of output classes of the network.
pub const NUM_CLASSES: usize = 10;
/// Side length of the square input images.
pub const IMAGE_SIDE: usize = 28;
