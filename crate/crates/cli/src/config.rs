//! Declarative pipeline configuration: a TOML file with one section per
//! stage, hashed so every output in the run ledger is traceable to the exact
//! config that produced it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Output locations. Relative paths resolve against the directory holding
/// the config file, so a config can travel with its corpus; everything the
/// pipeline derives (fingerprints, reports, manifests, sidecars, subsamples,
/// the ledger) lives under `work`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub work: PathBuf,
    pub catalog: PathBuf,
    pub eval_audio: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            work: PathBuf::from("work"),
            catalog: PathBuf::from("catalog.tsv"),
            eval_audio: PathBuf::from("eval"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DedupParams {
    /// Consecutive matching codes required to declare a duplicate span.
    pub min_run: usize,
    /// Per-code Hamming tolerance in bits.
    pub tol: u32,
}

impl Default for DedupParams {
    fn default() -> Self {
        DedupParams { min_run: 4, tol: 6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ChunkParams {
    /// Number of 30 s chunks to sample from the kept sources.
    pub count: usize,
    pub seed: u64,
}

/// Where chunk annotations come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescribeMode {
    /// Read pre-computed `<chunk_id>.json` sidecars from `sidecars`.
    Ingest,
    /// Run the built-in energy-VAD and spectral-flatness detectors on the
    /// chunk audio. Language and gender come out unknown.
    Baseline,
    /// Deterministic synthetic annotations, for end-to-end pipeline tests
    /// without a pretrained describer.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DescribeParams {
    pub mode: DescribeMode,
    /// Sidecar directory read in `ingest` mode.
    pub sidecars: PathBuf,
}

impl Default for DescribeParams {
    fn default() -> Self {
        DescribeParams { mode: DescribeMode::Baseline, sidecars: PathBuf::from("sidecars") }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SubsampleParams {
    /// Segments per subsample.
    pub size: usize,
    /// Base seed; subsample k is built with `seed + k`.
    pub seed: u64,
    pub dup_fraction: f64,
    pub dup_copies: usize,
    pub gender_target: f64,
}

impl Default for SubsampleParams {
    fn default() -> Self {
        SubsampleParams {
            size: 0,
            seed: 0,
            dup_fraction: 0.01,
            dup_copies: 10,
            gender_target: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub dedup: DedupParams,
    pub chunk: ChunkParams,
    pub describe: DescribeParams,
    pub subsample: SubsampleParams,
}

impl PipelineConfig {
    fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.dedup.min_run < 1 {
            return bad("dedup.min_run must be at least 1".into());
        }
        if self.dedup.tol > 32 {
            return bad(format!("dedup.tol {} exceeds the 32-bit code width", self.dedup.tol));
        }
        if self.chunk.count < 1 {
            return bad("chunk.count must be at least 1".into());
        }
        if self.subsample.size < 1 {
            return bad("subsample.size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.subsample.dup_fraction) {
            return bad(format!(
                "subsample.dup_fraction {} outside [0, 1)",
                self.subsample.dup_fraction
            ));
        }
        if self.subsample.dup_copies < 1 {
            return bad("subsample.dup_copies must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.subsample.gender_target) {
            return bad(format!(
                "subsample.gender_target {} outside [0, 1]",
                self.subsample.gender_target
            ));
        }
        Ok(())
    }

    /// Hash of the canonical serialization (defaults filled in, key order
    /// fixed), truncated to 12 hex digits. Computed before path resolution,
    /// so the same config file hashes identically wherever it lives.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    /// Resolve the path fields against the config file's directory.
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.paths.work,
            &mut self.paths.catalog,
            &mut self.paths.eval_audio,
            &mut self.describe.sidecars,
        ] {
            if p.is_relative() {
                let joined = base.join(p.as_path());
                *p = joined;
            }
        }
    }
}

/// Parse, validate, hash and resolve a config file.
pub fn load(path: &Path) -> Result<(PipelineConfig, String), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg: PipelineConfig =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    let hash = cfg.hash();
    cfg.resolve(path.parent().unwrap_or(Path::new(".")));
    Ok((cfg, hash))
}
