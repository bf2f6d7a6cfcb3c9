//! Corpus curation and data-selection toolkit for large broadcast-audio
//! collections.
//!
//! The crate covers the full desk-scale pipeline: fingerprint-based
//! deduplication of broadcast recordings, removal of held-out evaluation
//! material, 30 s chunk sampling, automatic content description, construction
//! of acoustically controlled pretraining subsamples, and the downstream
//! evaluation harness (frame segmentation heads with Viterbi smoothing,
//! WER and gendered-WER analysis, verification scoring, membership-inference
//! analysis).
//!
//! Modules map one-to-one onto pipeline responsibilities:
//!
//! - [`audio`] — WAV decode/encode, resampling, synthesis, filtering
//! - [`fingerprint`] — corruption-robust binary hash codes per audio window
//! - [`dedup`] — fingerprint index, copy detection, blocklist removal
//! - [`corpus`] — source catalog, chunk sampling, corpus statistics
//! - [`describe`] — per-chunk annotations, baseline detectors, labeling rules
//! - [`subsample`] — the six controlled pretraining subsets
//! - [`frameseg`] — 50 Hz frame classification heads and Viterbi smoothing
//! - [`metrics`] — WER, frame metrics, bootstrap CIs, ROC/EER/minDCF
//! - [`mia`] — membership-inference splits, probe, and attack harness

pub mod audio;
pub mod corpus;
pub mod dedup;
pub mod describe;
pub mod fingerprint;
pub mod frameseg;
pub mod metrics;
pub mod mia;
pub mod subsample;

/// Sample rate every module downstream of decoding assumes, in Hz.
pub const CANONICAL_RATE: u32 = 16_000;

/// Frame rate of segmentation heads and label tracks, in Hz.
pub const FRAME_RATE: u32 = 50;

/// Chunk duration used throughout the corpus, in seconds.
pub const CHUNK_SECONDS: f64 = 30.0;
