//! Vision transformer producing fixed-length fingerprint embeddings.

pub mod checkpoint;
pub mod config;
pub mod model;
pub mod ops;
pub mod params;
pub mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use config::ModelConfig;
pub use model::{
    backward, cross_entropy, extract_embedding, forward, input_gradient, loss_and_backward, saliency,
    ForwardOutput, SaliencyTarget,
};
pub use params::{ModelParams, Tensor};
pub use train::{train, LabeledSample, Schedule, TrainLog};
