//! Tensor core, layers and the DenseNet classifier.

pub mod adam;
pub mod checkpoint;
pub mod densenet;
pub mod gradcheck;
pub mod layers;
pub mod tensor;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, EncodingInfo, OptimizerState};
pub use densenet::{DenseNet, NetworkConfig};
pub use layers::Mode;
pub use tensor::{Scalar, Tensor};
pub use train::{evaluate, fine_tune, train, train_with, EpochLog, EvalReport, LabeledImages, TrainConfig, TrainReport, Trainer};
