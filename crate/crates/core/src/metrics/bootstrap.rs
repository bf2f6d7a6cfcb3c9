//! Percentile bootstrap confidence intervals, resampling at evaluation-item
//! granularity (utterance, file or trial) so weighted aggregates pool
//! correctly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    /// Two-sided confidence level in percent; 97.5 keeps tails of 1.25%.
    pub confidence: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig { n_resamples: 1000, confidence: 97.5, seed: 0 }
    }
}

/// One evaluation item: its per-item statistic value and its pooling weight
/// (reference length for WER, frame count for segmentation, 1 for trials).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedItem {
    pub value: f64,
    pub weight: f64,
}

impl WeightedItem {
    pub fn new(value: f64, weight: f64) -> Self {
        WeightedItem { value, weight }
    }

    pub fn unweighted(value: f64) -> Self {
        WeightedItem { value, weight: 1.0 }
    }
}

/// Σ w·v / Σ w — the pooling aggregate for rate statistics.
pub fn weighted_mean(items: &[WeightedItem]) -> f64 {
    let (num, den) = items
        .iter()
        .fold((0.0, 0.0), |(n, d), it| (n + it.weight * it.value, d + it.weight));
    num / den
}

/// Percentile interval of `statistic` over `n_resamples` resamples drawn
/// with replacement. Each resample uses its own RNG stream derived from
/// (seed, resample index), so the interval is reproducible and independent
/// of evaluation order.
pub fn bootstrap_ci<F>(
    items: &[WeightedItem],
    statistic: F,
    cfg: &BootstrapConfig,
) -> Result<(f64, f64), MetricsError>
where
    F: Fn(&[WeightedItem]) -> f64,
{
    if items.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if cfg.n_resamples < 1 {
        return Err(MetricsError::InvalidConfig("n_resamples must be at least 1".into()));
    }
    if !(cfg.confidence > 0.0 && cfg.confidence < 100.0) {
        return Err(MetricsError::InvalidConfig(format!(
            "confidence {} outside (0, 100)",
            cfg.confidence
        )));
    }

    let mut stats = Vec::with_capacity(cfg.n_resamples);
    let mut resample = Vec::with_capacity(items.len());
    for r in 0..cfg.n_resamples {
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        rng.set_stream(r as u64);
        resample.clear();
        for _ in 0..items.len() {
            resample.push(items[rng.gen_range(0..items.len())]);
        }
        stats.push(statistic(&resample));
    }
    stats.sort_by(f64::total_cmp);

    let tail = (100.0 - cfg.confidence) / 2.0;
    Ok((percentile(&stats, tail), percentile(&stats, 100.0 - tail)))
}

/// Linear interpolation between order statistics.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = rank - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_items_give_zero_width_interval() {
        let items = vec![WeightedItem::new(0.25, 3.0); 40];
        let (lo, hi) = bootstrap_ci(&items, weighted_mean, &BootstrapConfig::default()).unwrap();
        assert_eq!(lo, 0.25);
        assert_eq!(hi, 0.25);
    }

    #[test]
    fn same_seed_reproduces_the_interval() {
        let items: Vec<WeightedItem> = (0..60)
            .map(|i| WeightedItem::new((i % 7) as f64 / 6.0, 1.0 + (i % 3) as f64))
            .collect();
        let cfg = BootstrapConfig { seed: 99, ..BootstrapConfig::default() };
        let a = bootstrap_ci(&items, weighted_mean, &cfg).unwrap();
        let b = bootstrap_ci(&items, weighted_mean, &cfg).unwrap();
        assert_eq!(a, b);

        let other = BootstrapConfig { seed: 100, ..cfg };
        let c = bootstrap_ci(&items, weighted_mean, &other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn interval_brackets_the_point_estimate() {
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha20Rng;
        for seed in 0..10u64 {
            let mut rng = ChaCha20Rng::seed_from_u64(seed + 1234);
            let items: Vec<WeightedItem> = (0..50)
                .map(|_| WeightedItem::unweighted(rng.gen_range(0.0..1.0)))
                .collect();
            let point = weighted_mean(&items);
            let cfg = BootstrapConfig { seed, ..BootstrapConfig::default() };
            let (lo, hi) = bootstrap_ci(&items, weighted_mean, &cfg).unwrap();
            assert!(lo <= point && point <= hi, "seed {seed}: ({lo}, {hi}) vs {point}");
            assert!(lo < hi);
        }
    }

    #[test]
    fn narrower_confidence_nests_inside_wider() {
        let items: Vec<WeightedItem> =
            (0..80).map(|i| WeightedItem::unweighted(((i * 37) % 100) as f64)).collect();
        let wide = bootstrap_ci(
            &items,
            weighted_mean,
            &BootstrapConfig { confidence: 97.5, seed: 5, n_resamples: 1000 },
        )
        .unwrap();
        let narrow = bootstrap_ci(
            &items,
            weighted_mean,
            &BootstrapConfig { confidence: 80.0, seed: 5, n_resamples: 1000 },
        )
        .unwrap();
        assert!(wide.0 <= narrow.0);
        assert!(narrow.1 <= wide.1);
    }

    #[test]
    fn bad_inputs_are_refused() {
        assert!(matches!(
            bootstrap_ci(&[], weighted_mean, &BootstrapConfig::default()),
            Err(MetricsError::EmptyInput)
        ));
        let items = [WeightedItem::unweighted(1.0)];
        assert!(matches!(
            bootstrap_ci(
                &items,
                weighted_mean,
                &BootstrapConfig { n_resamples: 0, ..BootstrapConfig::default() }
            ),
            Err(MetricsError::InvalidConfig(_))
        ));
        assert!(matches!(
            bootstrap_ci(
                &items,
                weighted_mean,
                &BootstrapConfig { confidence: 100.0, ..BootstrapConfig::default() }
            ),
            Err(MetricsError::InvalidConfig(_))
        ));
    }

    #[test]
    fn weighted_mean_pools_not_averages() {
        let items = [WeightedItem::new(1.0, 9.0), WeightedItem::new(0.0, 1.0)];
        assert!((weighted_mean(&items) - 0.9).abs() < 1e-12);
    }
}
