//! Skeleton sequences to enhanced pose-motion color images, classified by a
//! compact densely connected network.
//!
//! The pipeline is:
//!
//! 1. [`skeleton`]: parse MSR Action3D / NTU RGB+D / canonical JSON files and
//!    build evaluation splits.
//! 2. [`preproc`]: Savitzky-Golay smoothing and training-split normalization
//!    statistics.
//! 3. [`encoder`]: pose and motion feature columns (joint-joint distance and
//!    orientation), JET coloring, assembly and resize to 32x32.
//! 4. [`enhance`]: tile-wise adaptive histogram equalization and image-space
//!    augmentation.
//! 5. [`nn`]: a small tensor core with hand-written backward passes, the
//!    DenseNet classifier, Adam, training, evaluation and checkpoints.
//! 6. [`pipeline`]: the commands behind the `spmf` binary.
//!
//! [`synthetic`] generates labelled toy skeleton corpora with distinct motion
//! signatures, used by the examples and tests.

pub mod encoder;
pub mod enhance;
pub mod error;
pub mod nn;
pub mod pipeline;
pub mod preproc;
pub mod skeleton;
pub mod synthetic;

pub use error::{Error, Result};
