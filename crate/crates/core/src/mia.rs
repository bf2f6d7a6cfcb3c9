//! Membership-inference-attack harness: carve seen/unseen/duplicated
//! splits out of the pretraining manifests, train a probe (softmax-weighted
//! sum of per-layer features, time-pooled, into an MLP), and score the
//! attack as ROC/AUC comparisons.
//!
//! Real encoders are not required: the probe consumes feature files, and a
//! planted-signal synthetic generator provides a testable stand-in where
//! duplicated chunks carry a stronger bias along a hidden direction.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frameseg::{
    Adam, DropoutMasks, EpochStats, FeatureSeq, FramesegError, HeadModel, MlpConfig, TrainConfig,
    TrainLog,
};
use crate::metrics::{roc_auc, MetricsError, ScoreSet};
use crate::CHUNK_SECONDS;

#[derive(Debug, Error)]
pub enum MiaError {
    #[error("pool for {set:?} has {available} ids, {needed} needed")]
    InsufficientPool { set: String, needed: usize, available: usize },
    #[error("sets {0} and {1} overlap (e.g. {2:?})")]
    Overlap(String, String, String),
    #[error("probe has {expected} layer weights, stack has {got} layers")]
    LayerCountMismatch { expected: usize, got: usize },
    #[error("inconsistent feature stack: {0}")]
    ShapeMismatch(String),
    #[error("no features for chunk {0}")]
    MissingFeatures(String),
    #[error("split {0:?} is empty")]
    EmptySplit(String),
    #[error("malformed splits file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Train(#[from] FramesegError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSizes {
    pub train_members: usize,
    pub train_nonmembers: usize,
    pub test_each: usize,
    /// Multiplicity that marks a chunk as "duplicated" in the duplicates
    /// manifest.
    pub dup_multiplicity: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        SplitSizes { train_members: 1320, train_nonmembers: 1320, test_each: 1200, dup_multiplicity: 10 }
    }
}

impl SplitSizes {
    pub fn scaled_down(factor: usize) -> Self {
        let d = SplitSizes::default();
        SplitSizes {
            train_members: d.train_members / factor,
            train_nonmembers: d.train_nonmembers / factor,
            test_each: d.test_each / factor,
            dup_multiplicity: d.dup_multiplicity,
        }
    }
}

/// The five id sets of the attack protocol.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MiaSplits {
    pub train_members: Vec<String>,
    pub train_nonmembers: Vec<String>,
    pub test_unseen: Vec<String>,
    pub test_once: Vec<String>,
    pub test_duplicated: Vec<String>,
}

impl MiaSplits {
    pub fn sets(&self) -> [(&'static str, &Vec<String>); 5] {
        [
            ("train_members", &self.train_members),
            ("train_nonmembers", &self.train_nonmembers),
            ("test_unseen", &self.test_unseen),
            ("test_once", &self.test_once),
            ("test_duplicated", &self.test_duplicated),
        ]
    }

    /// All ten pairwise intersections must be empty.
    pub fn check_disjoint(&self) -> Result<(), MiaError> {
        let sets = self.sets();
        for i in 0..sets.len() {
            let lookup: std::collections::BTreeSet<&str> =
                sets[i].1.iter().map(|s| s.as_str()).collect();
            for (name_j, ids_j) in &sets[i + 1..] {
                if let Some(shared) = ids_j.iter().find(|id| lookup.contains(id.as_str())) {
                    return Err(MiaError::Overlap(
                        sets[i].0.to_string(),
                        name_j.to_string(),
                        shared.clone(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn train_hours(&self) -> f64 {
        (self.train_members.len() + self.train_nonmembers.len()) as f64 * CHUNK_SECONDS / 3600.0
    }

    pub fn test_hours(&self) -> [f64; 3] {
        [&self.test_unseen, &self.test_once, &self.test_duplicated]
            .map(|s| s.len() as f64 * CHUNK_SECONDS / 3600.0)
    }
}

fn counts(ids: &[String]) -> BTreeMap<&str, usize> {
    let mut map: BTreeMap<&str, usize> = BTreeMap::new();
    for id in ids {
        *map.entry(id).or_default() += 1;
    }
    map
}

fn draw(pool: &mut Vec<String>, n: usize, rng: &mut ChaCha20Rng) -> Vec<String> {
    for i in 0..n {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    let mut out: Vec<String> = pool.drain(..n).collect();
    out.sort();
    out
}

/// Carve the five sets from the two pretraining manifests (lists of chunk
/// ids with multiplicity) and a candidate pool of never-pretrained chunks.
///
/// Members and the once-test set come from chunks seen exactly once by both
/// pretraining runs; the duplicated test set from chunks repeated
/// `dup_multiplicity` times in the duplicates manifest; nonmembers and the
/// unseen test set from candidates absent from both manifests.
pub fn build_splits(
    base_manifest_ids: &[String],
    duplicates_manifest_ids: &[String],
    candidate_pool: &[String],
    sizes: &SplitSizes,
    seed: u64,
) -> Result<MiaSplits, MiaError> {
    let base_counts = counts(base_manifest_ids);
    let dup_counts = counts(duplicates_manifest_ids);

    let mut once_pool: Vec<String> = base_counts
        .iter()
        .filter(|(id, &c)| c == 1 && dup_counts.get(**id) == Some(&1))
        .map(|(id, _)| id.to_string())
        .collect();
    let mut dup_pool: Vec<String> = dup_counts
        .iter()
        .filter(|(_, &c)| c == sizes.dup_multiplicity)
        .map(|(id, _)| id.to_string())
        .collect();
    let mut unseen_pool: Vec<String> = {
        let mut seen = std::collections::BTreeSet::new();
        candidate_pool
            .iter()
            .filter(|id| {
                !base_counts.contains_key(id.as_str())
                    && !dup_counts.contains_key(id.as_str())
                    && seen.insert(id.as_str())
            })
            .cloned()
            .collect()
    };

    let need_once = sizes.train_members + sizes.test_each;
    let need_unseen = sizes.train_nonmembers + sizes.test_each;
    let checks = [
        ("once", need_once, once_pool.len()),
        ("duplicated", sizes.test_each, dup_pool.len()),
        ("unseen", need_unseen, unseen_pool.len()),
    ];
    for (set, needed, available) in checks {
        if available < needed {
            return Err(MiaError::InsufficientPool { set: set.into(), needed, available });
        }
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let train_members = draw(&mut once_pool, sizes.train_members, &mut rng);
    let test_once = draw(&mut once_pool, sizes.test_each, &mut rng);
    let test_duplicated = draw(&mut dup_pool, sizes.test_each, &mut rng);
    let train_nonmembers = draw(&mut unseen_pool, sizes.train_nonmembers, &mut rng);
    let test_unseen = draw(&mut unseen_pool, sizes.test_each, &mut rng);

    let splits =
        MiaSplits { train_members, train_nonmembers, test_unseen, test_once, test_duplicated };
    splits.check_disjoint()?;
    Ok(splits)
}

pub fn write_splits(path: &Path, splits: &MiaSplits) -> Result<(), MiaError> {
    let mut text = serde_json::to_string_pretty(splits)
        .map_err(|e| MiaError::Malformed(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_splits(path: &Path) -> Result<MiaSplits, MiaError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| MiaError::Malformed(e.to_string()))
}

/// All encoder layers of one chunk, equal T × D each.
pub type LayerStack = Vec<FeatureSeq>;

fn validate_stack(id: &str, stack: &LayerStack) -> Result<(usize, usize), MiaError> {
    let first = stack
        .first()
        .ok_or_else(|| MiaError::ShapeMismatch(format!("{id}: empty layer stack")))?;
    for layer in stack {
        if layer.t != first.t || layer.d != first.d {
            return Err(MiaError::ShapeMismatch(format!(
                "{id}: layer {} is {}×{}, expected {}×{}",
                layer.layer_tags, layer.t, layer.d, first.t, first.d
            )));
        }
    }
    Ok((first.t, first.d))
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Attack probe: softmax-normalized layer weights, weighted sum of hidden
/// states, mean over time, then the MLP head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub layer_logits: Vec<f64>,
    pub mlp: HeadModel,
}

impl ProbeModel {
    pub fn layer_weights(&self) -> Vec<f64> {
        softmax(&self.layer_logits)
    }

    fn check_shape(&self) -> Result<(), MiaError> {
        if self.layer_logits.is_empty() || self.layer_logits.iter().any(|l| !l.is_finite()) {
            return Err(MiaError::Malformed("probe layer logits".into()));
        }
        self.mlp.check_shape()?;
        Ok(())
    }
}

pub fn write_probe(path: &Path, probe: &ProbeModel) -> Result<(), MiaError> {
    let mut text =
        serde_json::to_string_pretty(probe).map_err(|e| MiaError::Malformed(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_probe(path: &Path) -> Result<ProbeModel, MiaError> {
    let text = fs::read_to_string(path)?;
    let probe: ProbeModel =
        serde_json::from_str(&text).map_err(|e| MiaError::Malformed(e.to_string()))?;
    probe.check_shape()?;
    Ok(probe)
}

/// Pool a layer stack into the probe's input vector under the given layer
/// weights. Weighting commutes with the time mean, so pooling first is
/// exact.
fn pooled_input(weights: &[f64], means: &[Vec<f64>]) -> Vec<f64> {
    let d = means[0].len();
    let mut x = vec![0.0; d];
    for (w, m) in weights.iter().zip(means) {
        for (xk, &mk) in x.iter_mut().zip(m) {
            *xk += w * mk;
        }
    }
    x
}

pub fn probe_forward(model: &ProbeModel, stack: &LayerStack) -> Result<f64, MiaError> {
    if stack.len() != model.layer_logits.len() {
        return Err(MiaError::LayerCountMismatch {
            expected: model.layer_logits.len(),
            got: stack.len(),
        });
    }
    let (_, d) = validate_stack(&stack[0].chunk_id, stack)?;
    if d != model.mlp.cfg.input_dim {
        return Err(MiaError::Train(FramesegError::DimensionMismatch {
            expected: model.mlp.cfg.input_dim,
            got: d,
        }));
    }
    let means: Vec<Vec<f64>> = stack.iter().map(|s| s.time_mean()).collect();
    let x = pooled_input(&model.layer_weights(), &means);
    Ok(model.mlp.forward_eval(&x, 1)?[0])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeTrainConfig {
    pub mlp: TrainConfig,
    /// Fraction of the labeled chunks held out for dev-best selection.
    pub dev_fraction: f64,
}

impl Default for ProbeTrainConfig {
    fn default() -> Self {
        ProbeTrainConfig { mlp: TrainConfig::default(), dev_fraction: 0.2 }
    }
}

struct PooledChunk {
    label: f64,
    means: Vec<Vec<f64>>,
}

fn pool_labeled(
    features: &BTreeMap<String, LayerStack>,
    ids: &[String],
    label: f64,
    out: &mut Vec<PooledChunk>,
) -> Result<(), MiaError> {
    for id in ids {
        let stack = features.get(id).ok_or_else(|| MiaError::MissingFeatures(id.clone()))?;
        validate_stack(id, stack)?;
        out.push(PooledChunk { label, means: stack.iter().map(|s| s.time_mean()).collect() });
    }
    Ok(())
}

fn assemble(chunks: &[&PooledChunk], weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::new();
    let mut y = Vec::with_capacity(chunks.len());
    for c in chunks {
        x.extend_from_slice(&pooled_input(weights, &c.means));
        y.push(c.label);
    }
    (x, y)
}

/// Joint training of the layer weights and the MLP on member/nonmember
/// labels (binary cross-entropy, one label per chunk). The layer-weight
/// gradient flows through the softmax Jacobian:
/// ∂x/∂θ_l = s_l (mean_l − x).
pub fn train_probe(
    features: &BTreeMap<String, LayerStack>,
    splits: &MiaSplits,
    cfg: &ProbeTrainConfig,
) -> Result<(ProbeModel, TrainLog), MiaError> {
    cfg.mlp.validate()?;
    if splits.train_members.is_empty() {
        return Err(MiaError::EmptySplit("train_members".into()));
    }
    if splits.train_nonmembers.is_empty() {
        return Err(MiaError::EmptySplit("train_nonmembers".into()));
    }

    let mut chunks = Vec::new();
    pool_labeled(features, &splits.train_members, 1.0, &mut chunks)?;
    pool_labeled(features, &splits.train_nonmembers, 0.0, &mut chunks)?;
    let n_layers = chunks[0].means.len();
    let d = chunks[0].means[0].len();
    for c in &chunks {
        if c.means.len() != n_layers {
            return Err(MiaError::LayerCountMismatch { expected: n_layers, got: c.means.len() });
        }
        if c.means[0].len() != d {
            return Err(MiaError::ShapeMismatch(format!(
                "feature width {} differs from {d}",
                c.means[0].len()
            )));
        }
    }

    // Held-out dev chunks for checkpoint selection.
    let mut rng_split = ChaCha20Rng::seed_from_u64(cfg.mlp.seed);
    rng_split.set_stream(3);
    let mut order: Vec<usize> = (0..chunks.len()).collect();
    for i in 0..order.len() {
        let j = rng_split.gen_range(i..order.len());
        order.swap(i, j);
    }
    let dev_n = ((chunks.len() as f64 * cfg.dev_fraction).round() as usize)
        .clamp(1, chunks.len() - 1);
    let dev_idx: Vec<usize> = order[..dev_n].to_vec();
    let train_idx: Vec<usize> = order[dev_n..].to_vec();

    let mlp_cfg = MlpConfig { input_dim: d, hidden: cfg.mlp.hidden, dropout_p: cfg.mlp.dropout_p };
    let mut mlp = HeadModel::new(mlp_cfg, cfg.mlp.seed);
    let mut layer_logits = vec![0.0; n_layers];
    let mut adam_mlp = Adam::new(cfg.mlp.learning_rate, mlp.param_count());
    let mut adam_w = Adam::new(cfg.mlp.learning_rate, n_layers);

    let mut rng_order = ChaCha20Rng::seed_from_u64(cfg.mlp.seed);
    rng_order.set_stream(1);
    let mut rng_masks = ChaCha20Rng::seed_from_u64(cfg.mlp.seed);
    rng_masks.set_stream(2);

    let mut log = TrainLog { epochs: Vec::new(), best_epoch: 0 };
    let mut best: Option<(f64, ProbeModel)> = None;
    let mut stale = 0usize;
    let mut order = train_idx;

    for epoch in 0..cfg.mlp.max_epochs {
        for i in 0..order.len() {
            let j = rng_order.gen_range(i..order.len());
            order.swap(i, j);
        }

        let mut epoch_loss = 0.0;
        let mut epoch_chunks = 0usize;
        for batch in order.chunks(cfg.mlp.batch_size) {
            let weights = softmax(&layer_logits);
            let members: Vec<&PooledChunk> = batch.iter().map(|&i| &chunks[i]).collect();
            let (x, y, n) = {
                let (x, y) = assemble(&members, &weights);
                let n = members.len();
                (x, y, n)
            };
            let masks = DropoutMasks::sample(n, cfg.mlp.hidden, cfg.mlp.dropout_p, &mut rng_masks);
            let (loss, grad, dx, stats) = mlp.loss_and_grad(&x, &y, n, &masks)?;
            if !loss.is_finite() {
                return Err(MiaError::Train(FramesegError::NonFiniteLoss { epoch }));
            }
            mlp.update_running(&stats, 0.1);
            adam_mlp.step(mlp.params_mut(), &grad);

            let mut grad_w = vec![0.0; n_layers];
            for (i, chunk) in members.iter().enumerate() {
                let xi = &x[i * d..(i + 1) * d];
                let dxi = &dx[i * d..(i + 1) * d];
                for (l, gw) in grad_w.iter_mut().enumerate() {
                    let mut dot = 0.0;
                    for k in 0..d {
                        dot += dxi[k] * (chunk.means[l][k] - xi[k]);
                    }
                    *gw += weights[l] * dot;
                }
            }
            adam_w.step(&mut layer_logits, &grad_w);

            epoch_loss += loss * n as f64;
            epoch_chunks += n;
        }

        // Dev under the current weights, eval mode.
        let weights = softmax(&layer_logits);
        let dev_members: Vec<&PooledChunk> = dev_idx.iter().map(|&i| &chunks[i]).collect();
        let (dev_x, dev_y) = assemble(&dev_members, &weights);
        let logits = mlp.eval_logits(&dev_x, dev_members.len())?;
        let mut dev_loss = 0.0;
        let mut correct = 0usize;
        for (&z, &yi) in logits.iter().zip(&dev_y) {
            dev_loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - yi * z;
            if (z > 0.0) == (yi > 0.5) {
                correct += 1;
            }
        }
        dev_loss /= dev_members.len() as f64;
        if !dev_loss.is_finite() {
            return Err(MiaError::Train(FramesegError::NonFiniteLoss { epoch }));
        }
        log.epochs.push(EpochStats {
            epoch,
            train_loss: epoch_loss / epoch_chunks as f64,
            dev_loss,
            dev_accuracy: correct as f64 / dev_members.len() as f64,
        });

        if best.as_ref().map_or(true, |(b, _)| dev_loss < *b) {
            best = Some((
                dev_loss,
                ProbeModel { layer_logits: layer_logits.clone(), mlp: mlp.clone() },
            ));
            log.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.mlp.patience {
                break;
            }
        }
    }

    let (_, model) = best.expect("at least one epoch ran");
    Ok((model, log))
}

/// The two comparisons of the attack: unseen-vs-once (n=0|1) and
/// unseen-vs-duplicated (n=0|10), member-positive.
#[derive(Debug, Clone)]
pub struct AttackReport {
    pub once: ScoreSet,
    pub duplicated: ScoreSet,
    pub auc_once: f64,
    pub auc_duplicated: f64,
}

impl AttackReport {
    pub fn render(&self) -> String {
        format!(
            "comparison\tauc\nunseen_vs_once\t{:.4}\nunseen_vs_duplicated\t{:.4}\n",
            self.auc_once, self.auc_duplicated
        )
    }
}

pub fn run_attack(
    model: &ProbeModel,
    splits: &MiaSplits,
    features: &BTreeMap<String, LayerStack>,
) -> Result<AttackReport, MiaError> {
    splits.check_disjoint()?;
    let score_all = |ids: &[String]| -> Result<Vec<(String, f64)>, MiaError> {
        ids.iter()
            .map(|id| {
                let stack =
                    features.get(id).ok_or_else(|| MiaError::MissingFeatures(id.clone()))?;
                Ok((id.clone(), probe_forward(model, stack)?))
            })
            .collect()
    };
    let unseen = score_all(&splits.test_unseen)?;
    let once = score_all(&splits.test_once)?;
    let duplicated = score_all(&splits.test_duplicated)?;

    let to_set = |pos: &[(String, f64)], neg: &[(String, f64)]| -> ScoreSet {
        let mut set = ScoreSet::new();
        for (id, score) in pos {
            set.trials.push(crate::metrics::Trial {
                trial_id: id.clone(),
                score: *score,
                label: crate::metrics::Label::Positive,
            });
        }
        for (id, score) in neg {
            set.trials.push(crate::metrics::Trial {
                trial_id: id.clone(),
                score: *score,
                label: crate::metrics::Label::Negative,
            });
        }
        set
    };
    let once_set = to_set(&once, &unseen);
    let dup_set = to_set(&duplicated, &unseen);
    let (_, auc_once) = roc_auc(&once_set)?;
    let (_, auc_duplicated) = roc_auc(&dup_set)?;
    Ok(AttackReport { once: once_set, duplicated: dup_set, auc_once, auc_duplicated })
}

/// Synthetic feature generator with a planted membership signal: members
/// carry a weak shift along a hidden unit direction, duplicated chunks a
/// strong one — mimicking the memorization gradient the attack measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticFeatureConfig {
    pub n_layers: usize,
    pub frames: usize,
    pub dim: usize,
    pub member_shift: f64,
    pub duplicated_shift: f64,
    /// Per-chunk random offset magnitude — the noise floor the shifts
    /// compete against.
    pub chunk_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticFeatureConfig {
    fn default() -> Self {
        SyntheticFeatureConfig {
            n_layers: 3,
            frames: 25,
            dim: 8,
            member_shift: 0.12,
            duplicated_shift: 1.6,
            chunk_noise: 1.0,
            seed: 0,
        }
    }
}

pub(crate) fn randn(rng: &mut ChaCha20Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    (-2.0 * u1.ln()).sqrt() * u2.cos()
}

pub fn synth_attack_features(
    splits: &MiaSplits,
    cfg: &SyntheticFeatureConfig,
) -> BTreeMap<String, LayerStack> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut direction: Vec<f64> = (0..cfg.dim).map(|_| randn(&mut rng)).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut direction {
        *v /= norm;
    }

    let mut features = BTreeMap::new();
    let groups: [(f64, Vec<&String>); 3] = [
        (cfg.member_shift, splits.train_members.iter().chain(&splits.test_once).collect()),
        (cfg.duplicated_shift, splits.test_duplicated.iter().collect()),
        (0.0, splits.train_nonmembers.iter().chain(&splits.test_unseen).collect()),
    ];
    for (shift, ids) in groups {
        for id in ids {
            let offset: Vec<f64> = direction
                .iter()
                .map(|&u| shift * u + cfg.chunk_noise * randn(&mut rng))
                .collect();
            let stack: LayerStack = (0..cfg.n_layers)
                .map(|l| {
                    let data: Vec<f64> = (0..cfg.frames * cfg.dim)
                        .map(|k| offset[k % cfg.dim] + randn(&mut rng))
                        .collect();
                    FeatureSeq::new(id.clone(), cfg.frames, cfg.dim, data, format!("layer{l}"))
                        .expect("consistent synthetic shape")
                })
                .collect();
            features.insert(id.to_string(), stack);
        }
    }
    features
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Synthetic manifests: `n_once` ids seen once in both manifests,
    /// `n_dup` ids repeated `mult` times in the duplicates manifest, plus a
    /// candidate pool of `n_unseen` fresh ids.
    fn manifests(n_once: usize, n_dup: usize, n_unseen: usize, mult: usize) -> (Vec<String>, Vec<String>, Vec<String>) {
        let once: Vec<String> = (0..n_once).map(|i| format!("o{i:05}")).collect();
        let dup: Vec<String> = (0..n_dup).map(|i| format!("d{i:05}")).collect();
        let base = once.clone();
        let mut duplicates = once.clone();
        for id in &dup {
            duplicates.extend(std::iter::repeat(id.clone()).take(mult));
        }
        let candidates: Vec<String> = (0..n_unseen).map(|i| format!("u{i:05}")).collect();
        (base, duplicates, candidates)
    }

    #[test]
    fn paper_default_sizes_give_paper_hours() {
        let sizes = SplitSizes::default();
        let (base, duplicates, candidates) = manifests(
            sizes.train_members + sizes.test_each,
            sizes.test_each,
            sizes.train_nonmembers + sizes.test_each,
            sizes.dup_multiplicity,
        );
        let splits = build_splits(&base, &duplicates, &candidates, &sizes, 7).unwrap();
        assert_eq!(splits.train_members.len(), 1320);
        assert_eq!(splits.train_nonmembers.len(), 1320);
        assert_eq!(splits.test_unseen.len(), 1200);
        assert_eq!(splits.test_once.len(), 1200);
        assert_eq!(splits.test_duplicated.len(), 1200);
        assert!((splits.train_hours() - 22.0).abs() < 1e-9);
        for h in splits.test_hours() {
            assert!((h - 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn scaled_splits_are_pairwise_disjoint_and_deterministic() {
        let sizes = SplitSizes::scaled_down(10);
        assert_eq!(
            (sizes.train_members, sizes.train_nonmembers, sizes.test_each),
            (132, 132, 120)
        );
        let (base, duplicates, candidates) = manifests(300, 150, 300, 10);
        let a = build_splits(&base, &duplicates, &candidates, &sizes, 3).unwrap();
        let b = build_splits(&base, &duplicates, &candidates, &sizes, 3).unwrap();
        assert_eq!(a, b);
        a.check_disjoint().unwrap();

        // Exhaustive pairwise check, independent of check_disjoint.
        let sets = a.sets();
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                let si: std::collections::BTreeSet<&String> = sets[i].1.iter().collect();
                for id in sets[j].1 {
                    assert!(!si.contains(id), "{} and {} share {id}", sets[i].0, sets[j].0);
                }
            }
        }

        // Pool membership: once ids from the o-pool, duplicated from d-pool,
        // unseen from u-pool.
        assert!(a.test_once.iter().all(|id| id.starts_with('o')));
        assert!(a.test_duplicated.iter().all(|id| id.starts_with('d')));
        assert!(a.test_unseen.iter().all(|id| id.starts_with('u')));
        assert!(a.train_members.iter().all(|id| id.starts_with('o')));
        assert!(a.train_nonmembers.iter().all(|id| id.starts_with('u')));
    }

    #[test]
    fn short_duplicate_pool_is_refused() {
        let sizes = SplitSizes::scaled_down(10);
        let (base, duplicates, candidates) = manifests(300, 119, 300, 10);
        let err = build_splits(&base, &duplicates, &candidates, &sizes, 3).unwrap_err();
        assert!(matches!(
            err,
            MiaError::InsufficientPool { ref set, needed: 120, available: 119 } if set == "duplicated"
        ));
    }

    #[test]
    fn wrong_multiplicity_does_not_count_as_duplicated() {
        let sizes = SplitSizes { dup_multiplicity: 10, ..SplitSizes::scaled_down(10) };
        // Repeated only 9 times: not a duplicated chunk.
        let (base, duplicates, candidates) = manifests(300, 150, 300, 9);
        let err = build_splits(&base, &duplicates, &candidates, &sizes, 3).unwrap_err();
        assert!(matches!(err, MiaError::InsufficientPool { available: 0, .. }));
    }

    #[test]
    fn splits_file_roundtrip() {
        let sizes = SplitSizes::scaled_down(10);
        let (base, duplicates, candidates) = manifests(300, 150, 300, 10);
        let splits = build_splits(&base, &duplicates, &candidates, &sizes, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("splits.json");
        write_splits(&path, &splits).unwrap();
        assert_eq!(read_splits(&path).unwrap(), splits);
    }

    fn tiny_stack(id: &str, values: &[f64], n_layers: usize) -> LayerStack {
        (0..n_layers)
            .map(|l| {
                FeatureSeq::new(
                    id,
                    1,
                    values.len(),
                    values.to_vec(),
                    format!("layer{l}"),
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn identical_layers_make_weighting_a_no_op() {
        let d = 5;
        let mlp = HeadModel::new(MlpConfig { input_dim: d, hidden: 4, dropout_p: 0.0 }, 9);
        let stack = tiny_stack("c", &[0.3, -1.0, 0.5, 2.0, -0.2], 3);
        let equal = ProbeModel { layer_logits: vec![0.0; 3], mlp: mlp.clone() };
        let score = probe_forward(&equal, &stack).unwrap();
        let single = mlp.forward_eval(&stack[0].time_mean(), 1).unwrap()[0];
        assert!((score - single).abs() < 1e-12);
    }

    #[test]
    fn softmax_weights_are_shift_invariant_and_normalized() {
        let mlp = HeadModel::new(MlpConfig { input_dim: 2, hidden: 4, dropout_p: 0.0 }, 2);
        let mut layers = tiny_stack("c", &[1.0, 0.0], 3);
        layers[1] = FeatureSeq::new("c", 1, 2, vec![0.0, 1.0], "layer1").unwrap();
        layers[2] = FeatureSeq::new("c", 1, 2, vec![-1.0, 0.5], "layer2").unwrap();
        // Integer logits so the +4 shift is exact in floating point.
        let probe = ProbeModel { layer_logits: vec![1.0, -2.0, 3.0], mlp: mlp.clone() };
        let shifted = ProbeModel { layer_logits: vec![5.0, 2.0, 7.0], mlp };
        assert!((probe.layer_weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(probe.layer_weights(), shifted.layer_weights());
        assert_eq!(
            probe_forward(&probe, &layers).unwrap(),
            probe_forward(&shifted, &layers).unwrap()
        );
    }

    #[test]
    fn extreme_logits_select_a_single_layer() {
        let d = 4;
        let mlp = HeadModel::new(MlpConfig { input_dim: d, hidden: 4, dropout_p: 0.0 }, 11);
        let mut layers = tiny_stack("c", &[0.2, 0.4, -0.6, 1.0], 3);
        layers[1] = FeatureSeq::new("c", 1, d, vec![5.0, -3.0, 2.0, 0.0], "layer1").unwrap();
        layers[2] = FeatureSeq::new("c", 1, d, vec![-2.0, 1.0, 1.0, 1.0], "layer2").unwrap();
        let one_hot = ProbeModel { layer_logits: vec![-30.0, 30.0, -30.0], mlp: mlp.clone() };
        let score = probe_forward(&one_hot, &layers).unwrap();
        let single = mlp.forward_eval(&layers[1].time_mean(), 1).unwrap()[0];
        assert!((score - single).abs() < 1e-6);
    }

    #[test]
    fn zero_mlp_probe_scores_half_and_attack_is_chance() {
        let sizes = SplitSizes { train_members: 12, train_nonmembers: 12, test_each: 10, dup_multiplicity: 10 };
        let (base, duplicates, candidates) = manifests(40, 20, 40, 10);
        let splits = build_splits(&base, &duplicates, &candidates, &sizes, 1).unwrap();
        let features = synth_attack_features(&splits, &SyntheticFeatureConfig::default());
        let probe = ProbeModel {
            layer_logits: vec![0.0; 3],
            mlp: HeadModel::zeroed(MlpConfig { input_dim: 8, hidden: 4, dropout_p: 0.0 }),
        };
        let report = run_attack(&probe, &splits, &features).unwrap();
        assert_eq!(report.auc_once, 0.5);
        assert_eq!(report.auc_duplicated, 0.5);
    }

    #[test]
    fn layer_count_mismatch_is_refused() {
        let mlp = HeadModel::new(MlpConfig { input_dim: 3, hidden: 4, dropout_p: 0.0 }, 1);
        let probe = ProbeModel { layer_logits: vec![0.0; 4], mlp };
        let stack = tiny_stack("c", &[0.0, 1.0, 2.0], 3);
        assert!(matches!(
            probe_forward(&probe, &stack),
            Err(MiaError::LayerCountMismatch { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn missing_features_are_reported_by_id() {
        let sizes = SplitSizes { train_members: 4, train_nonmembers: 4, test_each: 3, dup_multiplicity: 10 };
        let (base, duplicates, candidates) = manifests(10, 5, 10, 10);
        let splits = build_splits(&base, &duplicates, &candidates, &sizes, 1).unwrap();
        let mut features = synth_attack_features(&splits, &SyntheticFeatureConfig::default());
        let victim = splits.test_once[0].clone();
        features.remove(&victim);
        let probe = ProbeModel {
            layer_logits: vec![0.0; 3],
            mlp: HeadModel::zeroed(MlpConfig { input_dim: 8, hidden: 4, dropout_p: 0.0 }),
        };
        assert!(matches!(
            run_attack(&probe, &splits, &features),
            Err(MiaError::MissingFeatures(id)) if id == victim
        ));
    }

    #[test]
    fn planted_signal_attack_matches_the_memorization_pattern() {
        let sizes = SplitSizes { train_members: 2000, train_nonmembers: 2000, test_each: 400, dup_multiplicity: 10 };
        let (base, duplicates, candidates) = manifests(2500, 450, 2500, 10);
        let splits = build_splits(&base, &duplicates, &candidates, &sizes, 17).unwrap();
        let features = synth_attack_features(&splits, &SyntheticFeatureConfig::default());

        let cfg = ProbeTrainConfig {
            mlp: TrainConfig {
                learning_rate: 3e-4,
                batch_size: 64,
                max_epochs: 150,
                dropout_p: 0.0,
                hidden: 16,
                seed: 6,
                patience: 150,
            },
            dev_fraction: 0.2,
        };
        let (probe, log) = train_probe(&features, &splits, &cfg).unwrap();
        assert!(!log.epochs.is_empty());

        let report = run_attack(&probe, &splits, &features).unwrap();
        assert!(
            report.auc_duplicated >= 0.60,
            "duplicated-set AUC too weak: {}",
            report.auc_duplicated
        );
        assert!(
            (0.45..=0.55).contains(&report.auc_once),
            "once-set AUC should hover near chance: {}",
            report.auc_once
        );
        assert!(report.auc_duplicated > report.auc_once);

        // Permutation null: shuffling the labels of a comparison kills it.
        let mut scores: Vec<f64> = report
            .duplicated
            .trials
            .iter()
            .map(|t| t.score)
            .collect();
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for i in (1..scores.len()).rev() {
            let j = rng.gen_range(0..=i);
            scores.swap(i, j);
        }
        let half = scores.len() / 2;
        let null = ScoreSet::from_scores(&scores[..half], &scores[half..]);
        let (_, null_auc) = roc_auc(&null).unwrap();
        assert!((0.4..=0.6).contains(&null_auc), "null AUC {null_auc}");
    }

    #[test]
    fn probe_training_is_deterministic() {
        let sizes = SplitSizes { train_members: 30, train_nonmembers: 30, test_each: 10, dup_multiplicity: 10 };
        let (base, duplicates, candidates) = manifests(60, 20, 60, 10);
        let splits = build_splits(&base, &duplicates, &candidates, &sizes, 4).unwrap();
        let features = synth_attack_features(&splits, &SyntheticFeatureConfig::default());
        let cfg = ProbeTrainConfig {
            mlp: TrainConfig {
                learning_rate: 1e-3,
                batch_size: 16,
                max_epochs: 5,
                dropout_p: 0.1,
                hidden: 8,
                seed: 6,
                patience: 5,
            },
            dev_fraction: 0.2,
        };
        let (a, log_a) = train_probe(&features, &splits, &cfg).unwrap();
        let (b, log_b) = train_probe(&features, &splits, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(log_a, log_b);
    }

    #[test]
    fn probe_file_roundtrip_is_exact() {
        let probe = ProbeModel {
            layer_logits: vec![0.25, -1.5, 2.0],
            mlp: HeadModel::new(MlpConfig { input_dim: 8, hidden: 4, dropout_p: 0.0 }, 11),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("probe.json");
        write_probe(&path, &probe).unwrap();
        assert_eq!(read_probe(&path).unwrap(), probe);

        let empty = ProbeModel { layer_logits: vec![], mlp: probe.mlp.clone() };
        write_probe(&path, &empty).unwrap();
        assert!(matches!(read_probe(&path), Err(MiaError::Malformed(_))));
    }
}
