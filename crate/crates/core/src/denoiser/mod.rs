//! The masked-attention noise predictor, its training loop and checkpoints.

mod checkpoint;
mod config;
mod gradcheck;
mod masks;
pub(crate) mod model;
mod nn;
mod params;
mod train;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_expecting, parameter_digest, read_manifest, save_checkpoint,
    CheckpointManifest, TensorEntry, CHECKPOINT_FORMAT, MANIFEST_FILE,
};
pub use config::{ModelConfig, TrainConfig};
pub use masks::{build_masks, AttentionMasks};
pub use model::{loss, timestep_features, DenoiserModel, DiscreteLogits, ForwardOutput, LossParts};
pub use params::{Attention, Block, BoundaryEncoder, Linear, Norm, Params, BOUNDARY_FEATURES};
pub use train::{fine_tune, train, train_with, training_mse, LossRecord, TrainHooks, MSE_GRID};
pub use gradcheck::{gradcheck_config, gradient_check, TensorGradError};
