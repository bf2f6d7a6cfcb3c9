//! Word error rate via minimal-edit alignment, and the gendered relative
//! difference Δ_rel = 100 (WER_F − WER_M) / (0.5 (WER_F + WER_M)).

use super::MetricsError;

/// Edit counts from one optimal alignment of hypothesis against reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WerBreakdown {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub hits: usize,
    pub ref_len: usize,
}

impl WerBreakdown {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// (S + D + I) / N; can exceed 1 when the hypothesis is much longer.
    pub fn wer(&self) -> f64 {
        self.errors() as f64 / self.ref_len as f64
    }

    /// Pool counts across utterances: corpus WER is total errors over total
    /// reference length, not the mean of per-utterance rates.
    pub fn merge(&mut self, other: &WerBreakdown) {
        self.substitutions += other.substitutions;
        self.deletions += other.deletions;
        self.insertions += other.insertions;
        self.hits += other.hits;
        self.ref_len += other.ref_len;
    }
}

/// Lowercase, drop punctuation, split on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(|w| w.chars().filter(|c| c.is_alphanumeric()).collect::<String>())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Minimal-edit alignment with unit costs; counts come from one optimal
/// backtrace (ties prefer match/substitution, then deletion).
pub fn wer<T: AsRef<str>>(reference: &[T], hypothesis: &[T]) -> Result<WerBreakdown, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let n = reference.len();
    let m = hypothesis.len();
    let mut cost = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in cost.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        cost[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = cost[i - 1][j - 1]
                + usize::from(reference[i - 1].as_ref() != hypothesis[j - 1].as_ref());
            let del = cost[i - 1][j] + 1;
            let ins = cost[i][j - 1] + 1;
            cost[i][j] = sub.min(del).min(ins);
        }
    }

    let mut counts = WerBreakdown {
        substitutions: 0,
        deletions: 0,
        insertions: 0,
        hits: 0,
        ref_len: n,
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let matched = reference[i - 1].as_ref() == hypothesis[j - 1].as_ref();
            if cost[i][j] == cost[i - 1][j - 1] + usize::from(!matched) {
                if matched {
                    counts.hits += 1;
                } else {
                    counts.substitutions += 1;
                }
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && cost[i][j] == cost[i - 1][j] + 1 {
            counts.deletions += 1;
            i -= 1;
        } else {
            counts.insertions += 1;
            j -= 1;
        }
    }
    debug_assert_eq!(counts.errors(), cost[n][m]);
    Ok(counts)
}

/// Tokenize both sides with the default rules, then align.
pub fn wer_strings(reference: &str, hypothesis: &str) -> Result<WerBreakdown, MetricsError> {
    wer(&tokenize(reference), &tokenize(hypothesis))
}

/// Δ_rel in percent; positive when female WER is worse.
pub fn delta_rel(wer_f: f64, wer_m: f64) -> Result<f64, MetricsError> {
    if wer_f + wer_m <= 0.0 {
        return Err(MetricsError::BothZero);
    }
    Ok(100.0 * (wer_f - wer_m) / (0.5 * (wer_f + wer_m)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenderWerReport {
    pub wer_male: f64,
    pub wer_female: f64,
    pub delta_rel: f64,
}

impl GenderWerReport {
    pub fn new(wer_female: f64, wer_male: f64) -> Result<Self, MetricsError> {
        Ok(GenderWerReport {
            wer_male,
            wer_female,
            delta_rel: delta_rel(wer_female, wer_male)?,
        })
    }
}

/// Table cell in the report style: point value with a ± half-width suffix.
pub fn render_with_ci(point: f64, interval: (f64, f64)) -> String {
    format!("{:.1} ±{:.1}", point, (interval.1 - interval.0) / 2.0)
}
