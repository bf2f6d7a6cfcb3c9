//! BCE training of the segmentation head over labeled feature windows, with
//! dev-best checkpointing and early stopping.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::features::FeatureSeq;
use super::mlp::{DropoutMasks, HeadModel, MlpConfig};
use super::FramesegError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Windows (sequences) per optimizer step.
    pub batch_size: usize,
    pub max_epochs: usize,
    pub dropout_p: f64,
    pub hidden: usize,
    pub seed: u64,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 100,
            dropout_p: 0.1,
            hidden: 256,
            seed: 0,
            patience: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), FramesegError> {
        if self.learning_rate <= 0.0
            || self.batch_size == 0
            || self.max_epochs == 0
            || self.hidden == 0
            || self.patience == 0
        {
            return Err(FramesegError::InvalidConfig(
                "learning rate, batch size, epochs, hidden width and patience must be positive"
                    .into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(FramesegError::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout_p
            )));
        }
        Ok(())
    }
}

/// A feature window with one binary label per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeq {
    pub features: FeatureSeq,
    pub labels: Vec<u8>,
}

impl LabeledSeq {
    pub fn new(features: FeatureSeq, labels: Vec<u8>) -> Result<Self, FramesegError> {
        if labels.len() != features.t {
            return Err(FramesegError::LengthMismatch {
                features: features.t,
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
            return Err(FramesegError::Malformed(format!("label {bad} is not 0/1")));
        }
        Ok(LabeledSeq { features, labels })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: f64,
    pub dev_accuracy: f64,
}

/// The training curve; `best_epoch` indexes the checkpoint that was kept.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
}

impl TrainLog {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&format!(
                "epoch {:>3}\ttrain_loss {:.6}\tdev_loss {:.6}\tdev_acc {:.4}{}\n",
                e.epoch,
                e.train_loss,
                e.dev_loss,
                e.dev_accuracy,
                if e.epoch == self.best_epoch { "\t*" } else { "" }
            ));
        }
        out
    }
}

/// Adam with the usual defaults (β₁ 0.9, β₂ 0.999, ε 1e−8).
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), grads.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, &g), (m, v)) in
            params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

fn flatten(seqs: &[LabeledSeq], indices: &[usize]) -> (Vec<f64>, Vec<f64>, usize) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut n = 0;
    for &i in indices {
        let s = &seqs[i];
        x.extend_from_slice(&s.features.data);
        y.extend(s.labels.iter().map(|&l| f64::from(l)));
        n += s.features.t;
    }
    (x, y, n)
}

fn dev_eval(model: &HeadModel, dev: &[LabeledSeq]) -> Result<(f64, f64), FramesegError> {
    let indices: Vec<usize> = (0..dev.len()).collect();
    let (x, y, n) = flatten(dev, &indices);
    let logits = model.eval_logits(&x, n)?;
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (&z, &yi) in logits.iter().zip(&y) {
        loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - yi * z;
        if (z > 0.0) == (yi > 0.5) {
            correct += 1;
        }
    }
    Ok((loss / n as f64, correct as f64 / n as f64))
}

fn check_dims(seqs: &[LabeledSeq], d: usize) -> Result<(), FramesegError> {
    for s in seqs {
        if s.features.d != d {
            return Err(FramesegError::DimensionMismatch { expected: d, got: s.features.d });
        }
        if s.labels.len() != s.features.t {
            return Err(FramesegError::LengthMismatch {
                features: s.features.t,
                labels: s.labels.len(),
            });
        }
    }
    Ok(())
}

/// Minimize BCE over the train split; keep the parameters of the epoch with
/// the lowest dev loss. Deterministic per (data, config): shuffling and
/// dropout draw from fixed RNG streams.
pub fn train_head(
    train: &[LabeledSeq],
    dev: &[LabeledSeq],
    cfg: &TrainConfig,
) -> Result<(HeadModel, TrainLog), FramesegError> {
    cfg.validate()?;
    if train.is_empty() || train.iter().all(|s| s.features.t == 0) {
        return Err(FramesegError::EmptySplit("train".into()));
    }
    if dev.is_empty() || dev.iter().all(|s| s.features.t == 0) {
        return Err(FramesegError::EmptySplit("dev".into()));
    }
    let d = train[0].features.d;
    check_dims(train, d)?;
    check_dims(dev, d)?;

    let mlp_cfg = MlpConfig { input_dim: d, hidden: cfg.hidden, dropout_p: cfg.dropout_p };
    let mut model = HeadModel::new(mlp_cfg, cfg.seed);
    let mut adam = Adam::new(cfg.learning_rate, model.param_count());

    let mut rng_order = ChaCha20Rng::seed_from_u64(cfg.seed);
    rng_order.set_stream(1);
    let mut rng_masks = ChaCha20Rng::seed_from_u64(cfg.seed);
    rng_masks.set_stream(2);

    let mut log = TrainLog { epochs: Vec::new(), best_epoch: 0 };
    let mut best: Option<(f64, HeadModel)> = None;
    let mut stale = 0usize;

    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.max_epochs {
        for i in 0..order.len() {
            let j = rng_order.gen_range(i..order.len());
            order.swap(i, j);
        }

        let mut epoch_loss = 0.0;
        let mut epoch_frames = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let (x, y, n) = flatten(train, batch);
            if n == 0 {
                continue;
            }
            let masks = DropoutMasks::sample(n, cfg.hidden, cfg.dropout_p, &mut rng_masks);
            let (loss, grad, _, stats) = model.loss_and_grad(&x, &y, n, &masks)?;
            if !loss.is_finite() {
                return Err(FramesegError::NonFiniteLoss { epoch });
            }
            model.update_running(&stats, 0.1);
            adam.step(model.params_mut(), &grad);
            epoch_loss += loss * n as f64;
            epoch_frames += n;
        }

        let (dev_loss, dev_accuracy) = dev_eval(&model, dev)?;
        if !dev_loss.is_finite() {
            return Err(FramesegError::NonFiniteLoss { epoch });
        }
        log.epochs.push(EpochStats {
            epoch,
            train_loss: epoch_loss / epoch_frames as f64,
            dev_loss,
            dev_accuracy,
        });

        if best.as_ref().map_or(true, |(b, _)| dev_loss < *b) {
            best = Some((dev_loss, model.clone()));
            log.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let (_, best_model) = best.expect("at least one epoch ran");
    Ok((best_model, log))
}

/// Eval-mode posteriors for one window.
pub fn predict_posteriors(
    model: &HeadModel,
    features: &FeatureSeq,
) -> Result<Vec<f64>, FramesegError> {
    let posts = model.forward_eval(&features.data, features.t)?;
    debug_assert!(posts.iter().all(|&p| (0.0..=1.0).contains(&p)));
    Ok(posts)
}

/// Frame accuracy of thresholded eval-mode posteriors.
pub fn frame_accuracy(model: &HeadModel, data: &[LabeledSeq]) -> Result<f64, FramesegError> {
    let (_, acc) = dev_eval(model, data)?;
    Ok(acc)
}
