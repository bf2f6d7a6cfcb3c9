//! Frame-level binary segmentation (VAD, music detection) over precomputed
//! encoder features: a hand-rolled MLP head trained with BCE, Viterbi
//! smoothing of its posteriors, and gradient checking for the training
//! machinery. Feature files are the integration boundary, so the harness
//! never depends on a neural runtime.

pub mod features;
pub mod mlp;
pub mod train;
pub mod viterbi;

pub use features::{
    frames_for_duration, read_feature_seq, read_label_file, slice_audio, slice_features,
    write_feature_seq, write_label_file, FeatureSeq, FrameSeries,
};
pub use mlp::{
    grad_check, read_model, write_model, DropoutMasks, GradCheckConfig, HeadModel, MlpConfig,
};
pub use train::{
    frame_accuracy, predict_posteriors, train_head, Adam, EpochStats, LabeledSeq, TrainConfig,
    TrainLog,
};
pub use viterbi::viterbi_smooth;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FramesegError {
    #[error("input has width {got}, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{features} frames but {labels} labels")]
    LengthMismatch { features: usize, labels: usize },
    #[error("split {0:?} is empty")]
    EmptySplit(String),
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("posterior {0} is not a probability")]
    DegeneratePosterior(f64),
    #[error("switch probability {0} outside (0, 0.5]")]
    InvalidPSwitch(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
