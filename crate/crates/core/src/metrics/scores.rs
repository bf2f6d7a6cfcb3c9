//! Detection metrics over scored trials: ROC/AUC, equal error rate and
//! minimum detection cost.
//!
//! Conventions: higher score means "more positive"; a trial is accepted at
//! threshold θ when its score ≥ θ. All three metrics depend on scores only
//! through their ordering, so they are invariant under strictly increasing
//! transforms.

use std::fs;
use std::path::Path;

use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Positive => "positive",
            Label::Negative => "negative",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub trial_id: String,
    pub score: f64,
    pub label: Label,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    pub trials: Vec<Trial>,
}

impl ScoreSet {
    pub fn new() -> Self {
        ScoreSet::default()
    }

    /// Build from raw positive/negative score lists with generated ids.
    pub fn from_scores(positives: &[f64], negatives: &[f64]) -> Self {
        let mut trials = Vec::with_capacity(positives.len() + negatives.len());
        for (i, &s) in positives.iter().enumerate() {
            trials.push(Trial { trial_id: format!("pos{i:06}"), score: s, label: Label::Positive });
        }
        for (i, &s) in negatives.iter().enumerate() {
            trials.push(Trial { trial_id: format!("neg{i:06}"), score: s, label: Label::Negative });
        }
        ScoreSet { trials }
    }

    pub fn scores_with_label(&self, label: Label) -> Vec<f64> {
        self.trials.iter().filter(|t| t.label == label).map(|t| t.score).collect()
    }

    fn split(&self) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
        let pos = self.scores_with_label(Label::Positive);
        let neg = self.scores_with_label(Label::Negative);
        if pos.is_empty() {
            return Err(MetricsError::SingleClass("negative".into()));
        }
        if neg.is_empty() {
            return Err(MetricsError::SingleClass("positive".into()));
        }
        Ok((pos, neg))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcfParams {
    pub p_target: f64,
    pub c_fa: f64,
    pub c_miss: f64,
}

impl DcfParams {
    pub fn with_p_target(p_target: f64) -> Self {
        DcfParams { p_target, c_fa: 1.0, c_miss: 1.0 }
    }
}

impl Default for DcfParams {
    fn default() -> Self {
        DcfParams::with_p_target(0.01)
    }
}

/// Error-rate curve sampled at every distinct score plus the two degenerate
/// thresholds: (threshold, false-accept rate, false-reject rate), ascending
/// in threshold. FAR is non-increasing and FRR non-decreasing along it.
fn sweep(pos: &[f64], neg: &[f64]) -> Vec<(f64, f64, f64)> {
    let mut pos = pos.to_vec();
    let mut neg = neg.to_vec();
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);

    let mut thresholds: Vec<f64> = pos.iter().chain(neg.iter()).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let mut points = Vec::with_capacity(thresholds.len() + 2);
    points.push((f64::NEG_INFINITY, 1.0, 0.0)); // accept everything
    for &theta in &thresholds {
        let rejected_pos = pos.partition_point(|&s| s < theta);
        let rejected_neg = neg.partition_point(|&s| s < theta);
        let far = (neg.len() - rejected_neg) as f64 / neg.len() as f64;
        let frr = rejected_pos as f64 / pos.len() as f64;
        points.push((theta, far, frr));
    }
    points.push((f64::INFINITY, 0.0, 1.0)); // reject everything
    points
}

/// ROC curve and its area. The AUC is computed as the Mann–Whitney
/// statistic P(score_pos > score_neg) + ½·P(score_pos = score_neg), which
/// equals the trapezoidal area under the tie-aware ROC.
pub fn roc_auc(set: &ScoreSet) -> Result<(Vec<RocPoint>, f64), MetricsError> {
    let (pos, neg) = set.split()?;

    let points: Vec<RocPoint> = sweep(&pos, &neg)
        .into_iter()
        .rev() // descending threshold: (0,0) up to (1,1)
        .map(|(theta, far, frr)| RocPoint { threshold: theta, fpr: far, tpr: 1.0 - frr })
        .collect();

    // Average ranks over the pooled sample handle ties exactly.
    let mut pooled: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j < pooled.len() && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0; // mean of ranks i+1..=j
        rank_sum_pos +=
            avg_rank * pooled[i..j].iter().filter(|(_, is_pos)| *is_pos).count() as f64;
        i = j;
    }
    let n_pos = pos.len() as f64;
    let n_neg = neg.len() as f64;
    let auc = (rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
    Ok((points, auc))
}

/// Equal error rate in percent: the crossing of the false-accept and
/// false-reject curves, linearly interpolated between adjacent thresholds.
pub fn eer(set: &ScoreSet) -> Result<f64, MetricsError> {
    let (pos, neg) = set.split()?;
    let points = sweep(&pos, &neg);
    for w in points.windows(2) {
        let (_, far1, frr1) = w[0];
        let (_, far2, frr2) = w[1];
        let d1 = far1 - frr1;
        let d2 = far2 - frr2;
        if d1 >= 0.0 && d2 <= 0.0 {
            if d1 == 0.0 {
                return Ok(100.0 * frr1);
            }
            let alpha = d1 / (d1 - d2); // d1 > 0 ≥ d2, so the gap is positive
            return Ok(100.0 * (frr1 + alpha * (frr2 - frr1)));
        }
    }
    // FAR starts at 1 ≥ FRR 0 and ends at 0 ≤ FRR 1, so a crossing exists.
    unreachable!("error-rate curves always cross");
}

/// Minimum of the detection cost over all thresholds, normalized by the
/// best degenerate system min(C_miss·P_tar, C_fa·(1−P_tar)).
pub fn min_dcf(set: &ScoreSet, params: &DcfParams) -> Result<f64, MetricsError> {
    if !(params.p_target > 0.0 && params.p_target < 1.0) {
        return Err(MetricsError::InvalidConfig(format!(
            "p_target {} outside (0, 1)",
            params.p_target
        )));
    }
    if params.c_fa <= 0.0 || params.c_miss <= 0.0 {
        return Err(MetricsError::InvalidConfig("costs must be positive".into()));
    }
    let (pos, neg) = set.split()?;
    let miss_weight = params.c_miss * params.p_target;
    let fa_weight = params.c_fa * (1.0 - params.p_target);
    let raw = sweep(&pos, &neg)
        .into_iter()
        .map(|(_, far, frr)| miss_weight * frr + fa_weight * far)
        .fold(f64::INFINITY, f64::min);
    Ok(raw / miss_weight.min(fa_weight))
}

/// Score files are plain lines: `trial_id score label`.
pub fn write_score_file(path: &Path, set: &ScoreSet) -> Result<(), MetricsError> {
    let mut out = String::new();
    for t in &set.trials {
        out.push_str(&format!("{}\t{}\t{}\n", t.trial_id, t.score, t.label.as_str()));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_score_file(path: &Path) -> Result<ScoreSet, MetricsError> {
    let text = fs::read_to_string(path)?;
    let mut set = ScoreSet::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [trial_id, score, label] = fields[..] else {
            return Err(MetricsError::MalformedScoreFile(format!(
                "line {}: expected `trial_id score label`, got {line:?}",
                lineno + 1
            )));
        };
        let score: f64 = score.parse().map_err(|_| {
            MetricsError::MalformedScoreFile(format!("line {}: bad score {score:?}", lineno + 1))
        })?;
        if !score.is_finite() {
            return Err(MetricsError::MalformedScoreFile(format!(
                "line {}: non-finite score",
                lineno + 1
            )));
        }
        let label = match label {
            "positive" => Label::Positive,
            "negative" => Label::Negative,
            other => {
                return Err(MetricsError::MalformedScoreFile(format!(
                    "line {}: unknown label {other:?}",
                    lineno + 1
                )))
            }
        };
        set.trials.push(Trial { trial_id: trial_id.to_string(), score, label });
    }
    Ok(set)
}
