//! Ranking-quality metrics and run statistics.
//!
//! The metrics here score a surrogate model's predicted ordering against
//! ground-truth measurements: pairwise ordering accuracy, precision at a
//! cutoff, and normalized discounted cumulative gain (nDCG). Run statistics
//! summarize repeated tuning runs (trials-to-best) with quartiles, IQR, and
//! outlier fences.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// One scored configuration: model prediction plus ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    /// Linear index of the configuration in its space.
    pub index: usize,
    pub predicted: f64,
    /// Measured throughput; exactly 0.0 for invalid configurations.
    pub measured: f64,
    pub valid: bool,
}

/// Items sorted by model prediction, best first.
///
/// Ties in `predicted` break toward the lower linear index so that rankings
/// are reproducible regardless of input order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankedList {
    items: Vec<RankedItem>,
}

impl RankedList {
    pub fn from_unsorted(mut items: Vec<RankedItem>) -> Self {
        items.sort_by(|a, b| {
            b.predicted
                .total_cmp(&a.predicted)
                .then_with(|| a.index.cmp(&b.index))
        });
        RankedList { items }
    }

    pub fn items(&self) -> &[RankedItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Which pairs a pairwise-accuracy computation scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairFilter {
    /// All pairs except invalid-invalid ones (both measurements zero by
    /// definition, so their order is meaningless).
    Standard,
    /// Only pairs of one valid and one invalid configuration.
    ValidInvalid,
    /// Only pairs of two valid configurations.
    ValidValid,
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Fraction of scored pairs whose predicted order matches the measured order.
///
/// A pair is correct when `sign(pred_i - pred_j) == sign(meas_i - meas_j)`;
/// ties count as correct only against ties. Which pairs are scored is set by
/// `filter`; with [`PairFilter::Standard`], invalid-invalid pairs are skipped.
/// Errors when the slices disagree in length, fewer than two items are given,
/// or no pair survives the filter.
pub fn pairwise_accuracy_filtered(
    predicted: &[f64],
    measured: &[f64],
    valid: &[bool],
    filter: PairFilter,
) -> Result<f64> {
    if predicted.len() != measured.len() {
        return Err(Error::LengthMismatch {
            context: "pairwise accuracy (predicted vs measured)",
            expected: predicted.len(),
            actual: measured.len(),
        });
    }
    if predicted.len() != valid.len() {
        return Err(Error::LengthMismatch {
            context: "pairwise accuracy (predicted vs validity)",
            expected: predicted.len(),
            actual: valid.len(),
        });
    }
    if predicted.len() < 2 {
        return Err(Error::EmptyInput { what: "pairwise accuracy input (needs >= 2 items)" });
    }
    let mut scored = 0u64;
    let mut correct = 0u64;
    for i in 0..predicted.len() {
        for j in (i + 1)..predicted.len() {
            let keep = match filter {
                PairFilter::Standard => valid[i] || valid[j],
                PairFilter::ValidInvalid => valid[i] != valid[j],
                PairFilter::ValidValid => valid[i] && valid[j],
            };
            if !keep {
                continue;
            }
            scored += 1;
            if sign(predicted[i] - predicted[j]) == sign(measured[i] - measured[j]) {
                correct += 1;
            }
        }
    }
    if scored == 0 {
        return Err(Error::EmptyInput { what: "pairwise accuracy (no pair passes the filter)" });
    }
    Ok(correct as f64 / scored as f64)
}

/// [`pairwise_accuracy_filtered`] with the standard filter (invalid-invalid
/// pairs excluded).
pub fn pairwise_accuracy(predicted: &[f64], measured: &[f64], valid: &[bool]) -> Result<f64> {
    pairwise_accuracy_filtered(predicted, measured, valid, PairFilter::Standard)
}

/// Fraction of the top `n` ranked items that are valid configurations.
///
/// Errors unless `1 <= n <= len`.
pub fn precision_at_n(ranked: &RankedList, n: usize) -> Result<f64> {
    if n < 1 || n > ranked.len() {
        return Err(Error::RankCutoffOutOfRange { n, len: ranked.len() });
    }
    let hits = ranked.items[..n].iter().filter(|it| it.valid).count();
    Ok(hits as f64 / n as f64)
}

/// Normalized discounted cumulative gain at cutoff `n`.
///
/// Gain of the rank-`i` item (1-based) is its measured throughput discounted
/// by `log2(i + 1)`; the normalizer is the same sum over the
/// measured-descending ideal ordering. Errors unless `1 <= n <= len`, and when
/// every measurement is zero (the ideal gain would be zero).
pub fn ndcg_at_n(ranked: &RankedList, n: usize) -> Result<f64> {
    if n < 1 || n > ranked.len() {
        return Err(Error::RankCutoffOutOfRange { n, len: ranked.len() });
    }
    let dcg = dcg_prefix(ranked.items.iter().map(|it| it.measured), n);
    let mut ideal: Vec<f64> = ranked.items.iter().map(|it| it.measured).collect();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg_prefix(ideal.into_iter(), n);
    if idcg == 0.0 {
        return Err(Error::DegenerateRanking);
    }
    Ok(dcg / idcg)
}

fn dcg_prefix(gains: impl Iterator<Item = f64>, n: usize) -> f64 {
    gains
        .take(n)
        .enumerate()
        .map(|(i, g)| g / ((i + 2) as f64).log2())
        .sum()
}

/// Per-run outcome of a tuning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStatistics {
    /// 1-based trial at which the run first measured the space's true best
    /// throughput; `convergence.len() + 1` when it never did.
    pub trials_to_best: usize,
    /// Best throughput seen up to and including each trial.
    pub convergence: Vec<f64>,
}

/// Quartile summary of trials-to-best over repeated runs.
///
/// Quantiles use linear interpolation between order statistics. Outliers lie
/// beyond 1.5 x IQR from the quartiles; whiskers are the extreme non-outlier
/// values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStatistics {
    pub n_runs: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub lo_whisker: f64,
    pub hi_whisker: f64,
    /// Values beyond the 1.5 x IQR fences, ascending.
    pub outliers: Vec<f64>,
}

/// Summarize trials-to-best across runs. Errors on an empty slice.
pub fn aggregate_runs(runs: &[RunStatistics]) -> Result<AggregateStatistics> {
    let values: Vec<f64> = runs.iter().map(|r| r.trials_to_best as f64).collect();
    aggregate_values(&values)
}

/// [`aggregate_runs`] over raw values (exposed for reports built from logs).
pub fn aggregate_values(values: &[f64]) -> Result<AggregateStatistics> {
    if values.is_empty() {
        return Err(Error::EmptyInput { what: "run list" });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let lo_fence = q1 - 1.5 * iqr;
    let hi_fence = q3 + 1.5 * iqr;
    let outliers: Vec<f64> =
        sorted.iter().copied().filter(|&v| v < lo_fence || v > hi_fence).collect();
    let inliers: Vec<f64> =
        sorted.iter().copied().filter(|&v| v >= lo_fence && v <= hi_fence).collect();
    // At least the median is always inside the fences.
    let lo_whisker = inliers.first().copied().unwrap_or(median);
    let hi_whisker = inliers.last().copied().unwrap_or(median);
    Ok(AggregateStatistics {
        n_runs: values.len(),
        median,
        q1,
        q3,
        iqr,
        lo_whisker,
        hi_whisker,
        outliers,
    })
}

/// Quantile of pre-sorted data by linear interpolation between the two
/// nearest order statistics (the common "type 7" rule).
///
/// `q` is clamped to `[0, 1]`; the slice must be non-empty and ascending.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let q = q.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}
