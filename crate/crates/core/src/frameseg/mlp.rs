//! The segmentation head of the downstream stack:
//! Linear → BatchNorm → ReLU → Dropout, twice, then Linear → Sigmoid.
//!
//! Parameters live in one flat f64 vector so the optimizer, the finite-
//! difference checker and fault injection all address them uniformly.
//! Training-mode forward/backward is a pure function of (parameters, batch,
//! dropout masks); running statistics are updated separately.

use std::fs;
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::FramesegError;

const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub dropout_p: f64,
}

impl MlpConfig {
    pub fn param_count(&self) -> usize {
        let (d, h) = (self.input_dim, self.hidden);
        // linear1 + norm1 affine + linear2 + norm2 affine + linear3
        d * h + h + 2 * h + h * h + h + 2 * h + h + 1
    }
}

/// Byte map of the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpLayout {
    pub w1: Range<usize>,
    pub b1: Range<usize>,
    pub g1: Range<usize>,
    pub beta1: Range<usize>,
    pub w2: Range<usize>,
    pub b2: Range<usize>,
    pub g2: Range<usize>,
    pub beta2: Range<usize>,
    pub w3: Range<usize>,
    pub b3: Range<usize>,
}

impl MlpLayout {
    fn new(cfg: &MlpConfig) -> Self {
        let (d, h) = (cfg.input_dim, cfg.hidden);
        let mut at = 0usize;
        let mut next = |len: usize| {
            let r = at..at + len;
            at += len;
            r
        };
        MlpLayout {
            w1: next(h * d),
            b1: next(h),
            g1: next(h),
            beta1: next(h),
            w2: next(h * h),
            b2: next(h),
            g2: next(h),
            beta2: next(h),
            w3: next(h),
            b3: next(1),
        }
    }

    pub fn bias_ranges(&self) -> [Range<usize>; 3] {
        [self.b1.clone(), self.b2.clone(), self.b3.clone()]
    }
}

/// Keep/drop decisions for the two dropout layers of one batch, fixed up
/// front so a loss evaluation is repeatable (finite differences need the
/// exact same stochastic function on every probe).
#[derive(Debug, Clone)]
pub struct DropoutMasks {
    pub keep1: Vec<bool>,
    pub keep2: Vec<bool>,
}

impl DropoutMasks {
    pub fn sample(n: usize, hidden: usize, dropout_p: f64, rng: &mut ChaCha20Rng) -> Self {
        let mut draw = |_| rng.gen_range(0.0..1.0) >= dropout_p;
        DropoutMasks {
            keep1: (0..n * hidden).map(&mut draw).collect(),
            keep2: (0..n * hidden).map(&mut draw).collect(),
        }
    }

    /// Keep everything — train-mode forward without dropout noise.
    pub fn full(n: usize, hidden: usize) -> Self {
        DropoutMasks { keep1: vec![true; n * hidden], keep2: vec![true; n * hidden] }
    }
}

/// Batch statistics produced by a train-mode forward, to be folded into the
/// running estimates once the step is accepted.
#[derive(Debug, Clone)]
pub struct BatchStats {
    pub mean1: Vec<f64>,
    pub var1: Vec<f64>,
    pub mean2: Vec<f64>,
    pub var2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadModel {
    pub cfg: MlpConfig,
    params: Vec<f64>,
    running_mean1: Vec<f64>,
    running_var1: Vec<f64>,
    running_mean2: Vec<f64>,
    running_var2: Vec<f64>,
}

impl HeadModel {
    /// He-uniform weight init, zero biases, identity norm affine.
    pub fn new(cfg: MlpConfig, seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut model = Self::zeroed(cfg);
        let layout = model.layout();
        let mut init = |range: Range<usize>, fan_in: usize, params: &mut [f64]| {
            let limit = (6.0 / fan_in as f64).sqrt();
            for p in &mut params[range] {
                *p = rng.gen_range(-limit..limit);
            }
        };
        init(layout.w1, cfg.input_dim, &mut model.params);
        init(layout.w2, cfg.hidden, &mut model.params);
        init(layout.w3, cfg.hidden, &mut model.params);
        model
    }

    /// All-zero weights and biases (posterior ½ everywhere); norm affine is
    /// identity and running stats are the standard-normal defaults.
    pub fn zeroed(cfg: MlpConfig) -> Self {
        let h = cfg.hidden;
        let mut params = vec![0.0; cfg.param_count()];
        let layout = MlpLayout::new(&cfg);
        for i in layout.g1.chain(layout.g2) {
            params[i] = 1.0;
        }
        HeadModel {
            cfg,
            params,
            running_mean1: vec![0.0; h],
            running_var1: vec![1.0; h],
            running_mean2: vec![0.0; h],
            running_var2: vec![1.0; h],
        }
    }

    pub fn layout(&self) -> MlpLayout {
        MlpLayout::new(&self.cfg)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn check_batch(&self, x: &[f64], n: usize) -> Result<(), FramesegError> {
        if n == 0 {
            return Err(FramesegError::EmptySplit("batch".into()));
        }
        if x.len() != n * self.cfg.input_dim {
            return Err(FramesegError::DimensionMismatch {
                expected: n * self.cfg.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// x: n×in → out: n×out, out_features rows of w.
    fn linear(x: &[f64], n: usize, d_in: usize, w: &[f64], b: &[f64], d_out: usize) -> Vec<f64> {
        let mut out = vec![0.0; n * d_out];
        for i in 0..n {
            let xi = &x[i * d_in..(i + 1) * d_in];
            let oi = &mut out[i * d_out..(i + 1) * d_out];
            for (j, o) in oi.iter_mut().enumerate() {
                let wj = &w[j * d_in..(j + 1) * d_in];
                let mut acc = b[j];
                for (xv, wv) in xi.iter().zip(wj) {
                    acc += xv * wv;
                }
                *o = acc;
            }
        }
        out
    }

    fn column_stats(z: &[f64], n: usize, h: usize) -> (Vec<f64>, Vec<f64>) {
        let mut mean = vec![0.0; h];
        for i in 0..n {
            for (m, &v) in mean.iter_mut().zip(&z[i * h..(i + 1) * h]) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut var = vec![0.0; h];
        for i in 0..n {
            for j in 0..h {
                let d = z[i * h + j] - mean[j];
                var[j] += d * d;
            }
        }
        for v in &mut var {
            *v /= n as f64;
        }
        (mean, var)
    }

    /// Posteriors in eval mode: running statistics, no dropout. Pure.
    pub fn forward_eval(&self, x: &[f64], n: usize) -> Result<Vec<f64>, FramesegError> {
        Ok(self.eval_logits(x, n)?.into_iter().map(sigmoid).collect())
    }

    pub fn eval_logits(&self, x: &[f64], n: usize) -> Result<Vec<f64>, FramesegError> {
        self.check_batch(x, n)?;
        let (d, h) = (self.cfg.input_dim, self.cfg.hidden);
        let l = self.layout();
        let p = &self.params;

        let mut act = Self::linear(x, n, d, &p[l.w1], &p[l.b1], h);
        self.eval_norm_relu(&mut act, n, &l.g1, &l.beta1, &self.running_mean1, &self.running_var1);
        let mut act2 = Self::linear(&act, n, h, &p[l.w2], &p[l.b2], h);
        self.eval_norm_relu(&mut act2, n, &l.g2, &l.beta2, &self.running_mean2, &self.running_var2);

        let w3 = &p[l.w3];
        let b3 = p[l.b3][0];
        Ok((0..n)
            .map(|i| {
                let row = &act2[i * h..(i + 1) * h];
                b3 + row.iter().zip(w3).map(|(a, w)| a * w).sum::<f64>()
            })
            .collect())
    }

    fn eval_norm_relu(
        &self,
        z: &mut [f64],
        n: usize,
        g: &Range<usize>,
        beta: &Range<usize>,
        mean: &[f64],
        var: &[f64],
    ) {
        let h = self.cfg.hidden;
        let g = &self.params[g.clone()];
        let beta = &self.params[beta.clone()];
        for i in 0..n {
            for j in 0..h {
                let xhat = (z[i * h + j] - mean[j]) / (var[j] + BN_EPS).sqrt();
                z[i * h + j] = (g[j] * xhat + beta[j]).max(0.0);
            }
        }
    }

    /// Train-mode loss, parameter gradients and input gradients for one
    /// batch under fixed dropout masks. Pure: running statistics are
    /// returned, not applied.
    pub fn loss_and_grad(
        &self,
        x: &[f64],
        y: &[f64],
        n: usize,
        masks: &DropoutMasks,
    ) -> Result<(f64, Vec<f64>, Vec<f64>, BatchStats), FramesegError> {
        self.check_batch(x, n)?;
        if y.len() != n {
            return Err(FramesegError::LengthMismatch { features: n, labels: y.len() });
        }
        let (d, h) = (self.cfg.input_dim, self.cfg.hidden);
        let l = self.layout();
        let p = &self.params;
        let keep_scale = 1.0 / (1.0 - self.cfg.dropout_p);

        // ---- forward, caching every intermediate ----
        let z1 = Self::linear(x, n, d, &p[l.w1.clone()], &p[l.b1.clone()], h);
        let (mean1, var1) = Self::column_stats(&z1, n, h);
        let (xhat1, a1) = norm_affine(&z1, n, h, &mean1, &var1, &p[l.g1.clone()], &p[l.beta1.clone()]);
        let h1: Vec<f64> = a1
            .iter()
            .enumerate()
            .map(|(k, &a)| {
                if a > 0.0 && masks.keep1[k] {
                    a * keep_scale
                } else {
                    0.0
                }
            })
            .collect();

        let z2 = Self::linear(&h1, n, h, &p[l.w2.clone()], &p[l.b2.clone()], h);
        let (mean2, var2) = Self::column_stats(&z2, n, h);
        let (xhat2, a2) = norm_affine(&z2, n, h, &mean2, &var2, &p[l.g2.clone()], &p[l.beta2.clone()]);
        let h2: Vec<f64> = a2
            .iter()
            .enumerate()
            .map(|(k, &a)| {
                if a > 0.0 && masks.keep2[k] {
                    a * keep_scale
                } else {
                    0.0
                }
            })
            .collect();

        let w3 = &p[l.w3.clone()];
        let b3 = p[l.b3.clone()][0];
        let logits: Vec<f64> = (0..n)
            .map(|i| {
                let row = &h2[i * h..(i + 1) * h];
                b3 + row.iter().zip(w3).map(|(a, w)| a * w).sum::<f64>()
            })
            .collect();

        // Stable BCE: mean(softplus(z) − y·z).
        let loss = logits
            .iter()
            .zip(y)
            .map(|(&z, &yi)| softplus(z) - yi * z)
            .sum::<f64>()
            / n as f64;

        // ---- backward ----
        let mut grad = vec![0.0; self.params.len()];
        let dlogit: Vec<f64> = logits
            .iter()
            .zip(y)
            .map(|(&z, &yi)| (sigmoid(z) - yi) / n as f64)
            .collect();

        for i in 0..n {
            grad[l.b3.start] += dlogit[i];
            for j in 0..h {
                grad[l.w3.start + j] += dlogit[i] * h2[i * h + j];
            }
        }
        let mut dh2 = vec![0.0; n * h];
        for i in 0..n {
            for j in 0..h {
                dh2[i * h + j] = dlogit[i] * w3[j];
            }
        }

        let da2: Vec<f64> = dh2
            .iter()
            .enumerate()
            .map(|(k, &g)| {
                if a2[k] > 0.0 && masks.keep2[k] {
                    g * keep_scale
                } else {
                    0.0
                }
            })
            .collect();
        let dz2 =
            norm_backward(&da2, &xhat2, n, h, &var2, &p[l.g2.clone()], &mut grad[l.g2.clone()]);
        accumulate_beta(&da2, n, h, &mut grad[l.beta2.clone()]);

        for i in 0..n {
            for j in 0..h {
                let g = dz2[i * h + j];
                grad[l.b2.start + j] += g;
                for k in 0..h {
                    grad[l.w2.start + j * h + k] += g * h1[i * h + k];
                }
            }
        }
        let mut dh1 = vec![0.0; n * h];
        let w2 = &p[l.w2.clone()];
        for i in 0..n {
            for j in 0..h {
                let g = dz2[i * h + j];
                if g != 0.0 {
                    for k in 0..h {
                        dh1[i * h + k] += g * w2[j * h + k];
                    }
                }
            }
        }

        let da1: Vec<f64> = dh1
            .iter()
            .enumerate()
            .map(|(k, &g)| {
                if a1[k] > 0.0 && masks.keep1[k] {
                    g * keep_scale
                } else {
                    0.0
                }
            })
            .collect();
        let dz1 =
            norm_backward(&da1, &xhat1, n, h, &var1, &p[l.g1.clone()], &mut grad[l.g1.clone()]);
        accumulate_beta(&da1, n, h, &mut grad[l.beta1.clone()]);

        let mut dx = vec![0.0; n * d];
        let w1 = &p[l.w1.clone()];
        for i in 0..n {
            for j in 0..h {
                let g = dz1[i * h + j];
                grad[l.b1.start + j] += g;
                if g != 0.0 {
                    for k in 0..d {
                        grad[l.w1.start + j * d + k] += g * x[i * d + k];
                        dx[i * d + k] += g * w1[j * d + k];
                    }
                }
            }
        }

        Ok((loss, grad, dx, BatchStats { mean1, var1, mean2, var2 }))
    }

    /// Train-mode loss only, for finite-difference probing.
    pub fn loss_only(
        &self,
        x: &[f64],
        y: &[f64],
        n: usize,
        masks: &DropoutMasks,
    ) -> Result<f64, FramesegError> {
        Ok(self.loss_and_grad(x, y, n, masks)?.0)
    }

    /// Fold one batch's statistics into the running estimates.
    pub fn update_running(&mut self, stats: &BatchStats, momentum: f64) {
        let blend = |run: &mut Vec<f64>, batch: &[f64]| {
            for (r, &b) in run.iter_mut().zip(batch) {
                *r = (1.0 - momentum) * *r + momentum * b;
            }
        };
        blend(&mut self.running_mean1, &stats.mean1);
        blend(&mut self.running_var1, &stats.var1);
        blend(&mut self.running_mean2, &stats.mean2);
        blend(&mut self.running_var2, &stats.var2);
    }

    pub(crate) fn check_shape(&self) -> Result<(), FramesegError> {
        let h = self.cfg.hidden;
        if self.params.len() != self.cfg.param_count()
            || self.running_mean1.len() != h
            || self.running_var1.len() != h
            || self.running_mean2.len() != h
            || self.running_var2.len() != h
        {
            return Err(FramesegError::Malformed(
                "model arrays disagree with the declared dimensions".into(),
            ));
        }
        if !self.params.iter().all(|p| p.is_finite()) {
            return Err(FramesegError::Malformed("non-finite parameter".into()));
        }
        Ok(())
    }
}

/// Serialize a trained head (parameters plus running statistics) to JSON.
pub fn write_model(path: &Path, model: &HeadModel) -> Result<(), FramesegError> {
    let mut text = serde_json::to_string_pretty(model)
        .map_err(|e| FramesegError::Malformed(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<HeadModel, FramesegError> {
    let text = fs::read_to_string(path)?;
    let model: HeadModel =
        serde_json::from_str(&text).map_err(|e| FramesegError::Malformed(e.to_string()))?;
    model.check_shape()?;
    Ok(model)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Normalize with the given batch stats, apply the affine transform; returns
/// (xhat, activations before ReLU).
fn norm_affine(
    z: &[f64],
    n: usize,
    h: usize,
    mean: &[f64],
    var: &[f64],
    g: &[f64],
    beta: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut xhat = vec![0.0; n * h];
    let mut a = vec![0.0; n * h];
    for i in 0..n {
        for j in 0..h {
            let xh = (z[i * h + j] - mean[j]) / (var[j] + BN_EPS).sqrt();
            xhat[i * h + j] = xh;
            a[i * h + j] = g[j] * xh + beta[j];
        }
    }
    (xhat, a)
}

fn accumulate_beta(da: &[f64], n: usize, h: usize, dbeta: &mut [f64]) {
    for i in 0..n {
        for (db, &g) in dbeta.iter_mut().zip(&da[i * h..(i + 1) * h]) {
            *db += g;
        }
    }
}

/// Batch-norm backward through the batch statistics. Accumulates dgamma,
/// returns dz.
fn norm_backward(
    da: &[f64],
    xhat: &[f64],
    n: usize,
    h: usize,
    var: &[f64],
    g: &[f64],
    dgamma: &mut [f64],
) -> Vec<f64> {
    let mut sum_dxhat = vec![0.0; h];
    let mut sum_dxhat_xhat = vec![0.0; h];
    for i in 0..n {
        for j in 0..h {
            let k = i * h + j;
            dgamma[j] += da[k] * xhat[k];
            let dxh = da[k] * g[j];
            sum_dxhat[j] += dxh;
            sum_dxhat_xhat[j] += dxh * xhat[k];
        }
    }
    let mut dz = vec![0.0; n * h];
    let nf = n as f64;
    for i in 0..n {
        for j in 0..h {
            let k = i * h + j;
            let dxh = da[k] * g[j];
            dz[k] = (nf * dxh - sum_dxhat[j] - xhat[k] * sum_dxhat_xhat[j])
                / (nf * (var[j] + BN_EPS).sqrt());
        }
    }
    dz
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    /// How many randomly chosen parameters to probe (layer corners are
    /// always included on top).
    pub n_params: usize,
    pub seed: u64,
    /// Fault injection: corrupt the analytic bias gradients before
    /// comparing, to prove the check can fail.
    pub tamper_bias_grad: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { epsilon: 1e-5, n_params: 120, seed: 0, tamper_bias_grad: false }
    }
}

/// Maximum relative error between analytic gradients and central finite
/// differences over a random parameter sample. Dropout masks are drawn once
/// and shared by every probe, so the loss is a deterministic function of
/// the parameters during the check.
pub fn grad_check(
    model: &HeadModel,
    x: &[f64],
    y: &[f64],
    n: usize,
    cfg: &GradCheckConfig,
) -> Result<f64, FramesegError> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let masks = DropoutMasks::sample(n, model.cfg.hidden, model.cfg.dropout_p, &mut rng);
    let (_, mut grad, _, _) = model.loss_and_grad(x, y, n, &masks)?;

    if cfg.tamper_bias_grad {
        let layout = model.layout();
        for range in layout.bias_ranges() {
            for g in &mut grad[range] {
                *g = *g * 2.0 + 0.1;
            }
        }
    }

    // Distinct random parameters (all of them when the model is small),
    // plus both corners of every layer's range.
    let mut indices: Vec<usize> = (0..model.param_count()).collect();
    for i in 0..cfg.n_params.min(indices.len()) {
        let j = rng.gen_range(i..indices.len());
        indices.swap(i, j);
    }
    indices.truncate(cfg.n_params.min(model.param_count()));
    let layout = model.layout();
    for r in [
        &layout.w1, &layout.b1, &layout.g1, &layout.beta1, &layout.w2, &layout.b2, &layout.g2,
        &layout.beta2, &layout.w3, &layout.b3,
    ] {
        indices.push(r.start);
        indices.push(r.end - 1);
    }
    indices.sort_unstable();
    indices.dedup();

    let mut probe = model.clone();
    let mut max_rel = 0.0f64;
    for idx in indices {
        let theta = model.params()[idx];
        probe.params_mut()[idx] = theta + cfg.epsilon;
        let plus = probe.loss_only(x, y, n, &masks)?;
        probe.params_mut()[idx] = theta - cfg.epsilon;
        let minus = probe.loss_only(x, y, n, &masks)?;
        probe.params_mut()[idx] = theta;
        let numeric = (plus - minus) / (2.0 * cfg.epsilon);
        // Absolute floor: gradients below 1e-4 are compared on an absolute
        // scale, where the FD truncation error itself is ~1e-9.
        let rel = (grad[idx] - numeric).abs() / grad[idx].abs().max(numeric.abs()).max(1e-4);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> MlpConfig {
        MlpConfig { input_dim: 7, hidden: 6, dropout_p: 0.1 }
    }

    fn random_batch(n: usize, d: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let y: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.gen_bool(0.5)))).collect();
        (x, y)
    }

    #[test]
    fn zero_model_outputs_half_everywhere() {
        let model = HeadModel::zeroed(small_cfg());
        let (x, _) = random_batch(5, 7, 1);
        let posts = model.forward_eval(&x, 5).unwrap();
        assert_eq!(posts, vec![0.5; 5]);
    }

    #[test]
    fn eval_mode_is_deterministic_and_in_range() {
        let model = HeadModel::new(small_cfg(), 3);
        let (x, _) = random_batch(5, 7, 2);
        let a = model.forward_eval(&x, 5).unwrap();
        let b = model.forward_eval(&x, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        assert!(a.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn parameter_count_matches_the_stack() {
        let cfg = small_cfg();
        let model = HeadModel::new(cfg, 0);
        let (d, h) = (cfg.input_dim, cfg.hidden);
        assert_eq!(model.param_count(), d * h + h + 2 * h + h * h + h + 2 * h + h + 1);
        let l = model.layout();
        assert_eq!(l.b3.end, model.param_count());
    }

    #[test]
    fn dimension_mismatch_is_refused() {
        let model = HeadModel::new(small_cfg(), 0);
        let x = vec![0.0; 5 * 4];
        assert!(matches!(
            model.forward_eval(&x, 5),
            Err(FramesegError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let model = HeadModel::new(small_cfg(), 11);
        let (x, y) = random_batch(12, 7, 12);
        let err = grad_check(&model, &x, &y, 12, &GradCheckConfig::default()).unwrap();
        assert!(err <= 1e-4, "max relative error {err}");
    }

    #[test]
    fn gradient_check_without_dropout_also_passes() {
        let cfg = MlpConfig { dropout_p: 0.0, ..small_cfg() };
        let model = HeadModel::new(cfg, 7);
        let (x, y) = random_batch(9, 7, 8);
        let err = grad_check(&model, &x, &y, 9, &GradCheckConfig::default()).unwrap();
        assert!(err <= 1e-4, "max relative error {err}");
    }

    #[test]
    fn corrupted_bias_gradient_is_detected() {
        let model = HeadModel::new(small_cfg(), 11);
        let (x, y) = random_batch(12, 7, 12);
        let cfg = GradCheckConfig { tamper_bias_grad: true, ..GradCheckConfig::default() };
        let err = grad_check(&model, &x, &y, 12, &cfg).unwrap();
        assert!(err > 1e-2, "tampered gradients slipped through: {err}");
    }

    #[test]
    fn zero_input_zeroes_first_layer_weight_gradients() {
        let model = HeadModel::new(small_cfg(), 5);
        let x = vec![0.0; 10 * 7];
        let y = vec![1.0; 10];
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let masks = DropoutMasks::sample(10, 6, 0.1, &mut rng);
        let (_, grad, _, _) = model.loss_and_grad(&x, &y, 10, &masks).unwrap();
        let l = model.layout();
        assert!(grad[l.w1].iter().all(|&g| g == 0.0));
        // Bias gradients are generally nonzero: learning still happens.
        assert!(grad[l.b3].iter().any(|&g| g != 0.0));
    }

    #[test]
    fn input_gradients_match_finite_differences() {
        let cfg = MlpConfig { dropout_p: 0.0, ..small_cfg() };
        let model = HeadModel::new(cfg, 21);
        let (mut x, y) = random_batch(6, 7, 22);
        let masks = DropoutMasks::full(6, cfg.hidden);
        let (_, _, dx, _) = model.loss_and_grad(&x, &y, 6, &masks).unwrap();
        let eps = 1e-5;
        for idx in [0usize, 5, 13, 27, 41] {
            let orig = x[idx];
            x[idx] = orig + eps;
            let plus = model.loss_only(&x, &y, 6, &masks).unwrap();
            x[idx] = orig - eps;
            let minus = model.loss_only(&x, &y, 6, &masks).unwrap();
            x[idx] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let rel = (dx[idx] - numeric).abs() / dx[idx].abs().max(numeric.abs()).max(1e-4);
            assert!(rel <= 1e-4, "input grad {idx}: analytic {} vs fd {numeric}", dx[idx]);
        }
    }

    #[test]
    fn running_stats_blend_toward_batch_stats() {
        let mut model = HeadModel::new(small_cfg(), 2);
        let (x, y) = random_batch(16, 7, 3);
        let masks = DropoutMasks::full(16, 6);
        let (_, _, _, stats) = model.loss_and_grad(&x, &y, 16, &masks).unwrap();
        let before = model.running_mean1.clone();
        model.update_running(&stats, 0.1);
        for ((b, a), target) in before.iter().zip(&model.running_mean1).zip(&stats.mean1) {
            assert!((a - (0.9 * b + 0.1 * target)).abs() < 1e-12);
        }
    }

    #[test]
    fn model_file_roundtrip_is_exact() {
        let mut model = HeadModel::new(small_cfg(), 31);
        let (x, y) = random_batch(8, 7, 5);
        let masks = DropoutMasks::full(8, 6);
        let (_, _, _, stats) = model.loss_and_grad(&x, &y, 8, &masks).unwrap();
        model.update_running(&stats, 0.1);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("head.json");
        write_model(&path, &model).unwrap();
        let back = read_model(&path).unwrap();
        assert_eq!(back, model);

        // Truncated parameter vector must be rejected.
        let mut crippled = model.clone();
        crippled.params.pop();
        write_model(&path, &crippled).unwrap();
        assert!(matches!(read_model(&path), Err(FramesegError::Malformed(_))));
    }
}
