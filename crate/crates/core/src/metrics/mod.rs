//! Scalar evaluation machinery: WER and its gendered relative difference,
//! frame-level classification metrics, bootstrap confidence intervals, and
//! detection metrics (ROC/AUC, EER, minDCF) over score sets.

pub mod bootstrap;
pub mod frames;
pub mod scores;
pub mod wer;

pub use bootstrap::{bootstrap_ci, weighted_mean, BootstrapConfig, WeightedItem};
pub use frames::{frame_metrics, FrameMetrics};
pub use scores::{
    eer, min_dcf, read_score_file, roc_auc, write_score_file, DcfParams, Label, RocPoint,
    ScoreSet, Trial,
};
pub use wer::{delta_rel, render_with_ci, tokenize, wer, wer_strings, GenderWerReport, WerBreakdown};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("reference is empty")]
    EmptyReference,
    #[error("both WERs are zero; relative difference undefined")]
    BothZero,
    #[error("length mismatch: pred {pred} frames, gold {gold} frames")]
    LengthMismatch { pred: usize, gold: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("score set has only {0} trials")]
    SingleClass(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed score file: {0}")]
    MalformedScoreFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
