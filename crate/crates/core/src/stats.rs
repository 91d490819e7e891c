//! Summary statistics for benchmark timings.
//!
//! The bootstrap procedure is pinned exactly so reports are reproducible
//! across runs and machines: `resamples` rounds, each drawing `n` indices
//! sequentially from a ChaCha12 stream seeded with `seed` via
//! `random_range(0..n)`, then nearest-rank percentiles over the sorted
//! resampled medians.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Default resampling rounds for confidence intervals.
pub const DEFAULT_RESAMPLES: u32 = 10_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("need at least 2 samples for a confidence interval, got {0}")]
    InsufficientSamples(usize),
    #[error("confidence level must be inside (0, 1), got {0}")]
    BadLevel(f64),
    #[error("resamples must be positive")]
    NoResamples,
}

/// Sorted-middle median: the central element for odd counts, the mean of the
/// two central elements for even counts. Panics on empty input.
pub fn median(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty(), "median of empty sample set");
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Percentile-bootstrap confidence interval for the median.
///
/// Returns `(lo, hi)`, both elements of the resampled-median distribution.
pub fn bootstrap_ci(
    samples: &[f64],
    level: f64,
    resamples: u32,
    seed: u64,
) -> Result<(f64, f64), StatsError> {
    let n = samples.len();
    if n < 2 {
        return Err(StatsError::InsufficientSamples(n));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::BadLevel(level));
    }
    if resamples == 0 {
        return Err(StatsError::NoResamples);
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut medians = Vec::with_capacity(resamples as usize);
    let mut draw = vec![0.0f64; n];
    for _ in 0..resamples {
        for slot in draw.iter_mut() {
            *slot = samples[rng.random_range(0..n)];
        }
        medians.push(median(&draw));
    }
    medians.sort_by(f64::total_cmp);

    let alpha = 1.0 - level;
    let lo = medians[nearest_rank_index(alpha / 2.0, medians.len())];
    let hi = medians[nearest_rank_index(1.0 - alpha / 2.0, medians.len())];
    Ok((lo, hi))
}

/// Nearest-rank index for percentile `p` over `len` sorted values:
/// `ceil(p * len) - 1`, clamped to the valid range.
pub fn nearest_rank_index(p: f64, len: usize) -> usize {
    let rank = (p * len as f64).ceil() as i64 - 1;
    rank.clamp(0, len as i64 - 1) as usize
}
