//! Standalone model-quality study: how does the share of valid rows in a
//! fixed-size training set affect the surrogate's ranking power?
//!
//! For each `(ratio, sample_size)` cell the study repeatedly draws a training
//! set with exactly `floor(ratio * sample_size)` valid rows from a 75% train
//! partition of the space, fits a fresh model, and scores it on the held-out
//! 25% partition (left at its natural valid ratio). Reported per cell are the
//! means over repeats of nDCG@n, precision@n, and pairwise ranking accuracy
//! split into valid-vs-invalid and valid-vs-valid pairs (invalid-invalid
//! pairs carry no ranking information and are never scored).

use rand::prelude::*;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::metrics::{
    ndcg_at_n, pairwise_accuracy_filtered, precision_at_n, PairFilter, RankedItem, RankedList,
};
use crate::oracle::GroundTruthTable;
use crate::space::SearchSpace;
use crate::surrogate::{featurize_point, GbtParams, SurrogateModel, TrainingSet};
use crate::Result;

/// Grid and procedure parameters for [`controlled_ratio_study`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyParams {
    /// Valid-row fractions to impose on the training set; each in (0, 1).
    pub ratios: Vec<f64>,
    /// Training-set sizes to sweep.
    pub sample_sizes: Vec<usize>,
    /// Rank cutoff for nDCG@n and precision@n on the test partition.
    pub n_at: usize,
    /// Independent redraws per cell.
    pub repeats: usize,
    /// Fraction of the space assigned to the train partition.
    pub train_fraction: f64,
    pub gbt: GbtParams,
    pub seed: u64,
}

impl Default for StudyParams {
    fn default() -> Self {
        StudyParams {
            ratios: vec![0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95],
            sample_sizes: vec![200],
            n_at: 32,
            repeats: 10,
            train_fraction: 0.75,
            gbt: GbtParams::default(),
            seed: 0,
        }
    }
}

impl StudyParams {
    fn validate(&self) -> Result<()> {
        if self.ratios.is_empty() {
            return Err(Error::EmptyInput { what: "study ratios" });
        }
        for &r in &self.ratios {
            if !(0.0 < r && r < 1.0) {
                return Err(Error::InvalidParam {
                    name: "ratios",
                    reason: format!("each ratio must be in (0, 1), got {r}"),
                });
            }
        }
        if self.sample_sizes.is_empty() {
            return Err(Error::EmptyInput { what: "study sample sizes" });
        }
        if self.sample_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidParam {
                name: "sample_sizes",
                reason: "sizes must be >= 1".into(),
            });
        }
        if self.n_at == 0 {
            return Err(Error::InvalidParam { name: "n_at", reason: "must be >= 1".into() });
        }
        if self.repeats == 0 {
            return Err(Error::InvalidParam { name: "repeats", reason: "must be >= 1".into() });
        }
        if !(0.0 < self.train_fraction && self.train_fraction < 1.0) {
            return Err(Error::InvalidParam {
                name: "train_fraction",
                reason: format!("must be in (0, 1), got {}", self.train_fraction),
            });
        }
        self.gbt.validate()
    }
}

/// Mean metrics for one `(ratio, sample_size)` grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub ratio: f64,
    pub sample_size: usize,
    pub mean_ndcg: f64,
    pub mean_precision: f64,
    /// Pairwise accuracy over valid-vs-invalid test pairs.
    pub mean_acc_valid_invalid: f64,
    /// Pairwise accuracy over valid-vs-valid test pairs.
    pub mean_acc_valid_valid: f64,
    pub repeats: usize,
}

/// Full study grid, one cell per `(ratio, sample_size)` in parameter order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub workload_id: String,
    pub n_at: usize,
    pub cells: Vec<StudyCell>,
}

impl StudyReport {
    pub fn cell(&self, ratio: f64, sample_size: usize) -> Option<&StudyCell> {
        self.cells
            .iter()
            .find(|c| c.ratio == ratio && c.sample_size == sample_size)
    }
}

/// Split rows for one repeat: the training draw plus the untouched test set.
struct RepeatDraw {
    train_rows: Vec<usize>,
    test_rows: Vec<usize>,
}

/// Shuffle the space, carve off the train partition, and draw exactly
/// `n_valid` valid and `sample_size - n_valid` invalid rows from it.
fn draw_repeat(
    truth: &GroundTruthTable,
    ratio: f64,
    sample_size: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<RepeatDraw> {
    let size = truth.size();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..size).collect();
    order.shuffle(&mut rng);
    let cut = ((size as f64) * train_fraction).floor() as usize;
    let (train_pool, test_pool) = order.split_at(cut);

    let n_valid = ((sample_size as f64) * ratio).floor() as usize;
    let n_invalid = sample_size - n_valid;
    let valid_pool: Vec<usize> =
        train_pool.iter().copied().filter(|&l| truth.validity_labels()[l]).collect();
    let invalid_pool: Vec<usize> =
        train_pool.iter().copied().filter(|&l| !truth.validity_labels()[l]).collect();
    if valid_pool.len() < n_valid {
        return Err(Error::UnrealizableRatio {
            ratio,
            needed: n_valid,
            available: valid_pool.len(),
        });
    }
    if invalid_pool.len() < n_invalid {
        return Err(Error::UnrealizableRatio {
            ratio,
            needed: n_invalid,
            available: invalid_pool.len(),
        });
    }
    let mut train_rows: Vec<usize> = Vec::with_capacity(sample_size);
    train_rows.extend_from_slice(&valid_pool[..n_valid]);
    train_rows.extend_from_slice(&invalid_pool[..n_invalid]);
    Ok(RepeatDraw { train_rows, test_rows: test_pool.to_vec() })
}

/// Outcome of one fitted repeat.
struct RepeatMetrics {
    ndcg: f64,
    precision: f64,
    acc_valid_invalid: f64,
    acc_valid_valid: f64,
}

fn run_repeat(
    features: &[Vec<f64>],
    truth: &GroundTruthTable,
    params: &StudyParams,
    ratio: f64,
    sample_size: usize,
    shuffle_seed: u64,
    fit_seed: u64,
) -> Result<RepeatMetrics> {
    let draw = draw_repeat(truth, ratio, sample_size, params.train_fraction, shuffle_seed)?;

    // Training targets: throughput normalized by the best drawn valid row.
    let max_gflops = draw
        .train_rows
        .iter()
        .map(|&l| truth.validity_labels()[l])
        .zip(&draw.train_rows)
        .filter(|&(v, _)| v)
        .map(|(_, &l)| truth.throughputs()[l])
        .fold(0.0f64, f64::max);
    let mut ts = TrainingSet::new();
    for &l in &draw.train_rows {
        if truth.validity_labels()[l] {
            ts.push_valid(features[l].clone(), truth.throughputs()[l] / max_gflops)?;
        } else {
            ts.push_invalid(features[l].clone())?;
        }
    }
    let model = SurrogateModel::fit(params.gbt.clone(), &ts, fit_seed)?;

    // Score the untouched test partition.
    let mut predicted = Vec::with_capacity(draw.test_rows.len());
    let mut measured = Vec::with_capacity(draw.test_rows.len());
    let mut valid = Vec::with_capacity(draw.test_rows.len());
    let mut items = Vec::with_capacity(draw.test_rows.len());
    for &l in &draw.test_rows {
        let p = model.predict_unchecked(&features[l]);
        predicted.push(p);
        measured.push(truth.throughputs()[l]);
        valid.push(truth.validity_labels()[l]);
        items.push(RankedItem {
            index: l,
            predicted: p,
            measured: truth.throughputs()[l],
            valid: truth.validity_labels()[l],
        });
    }
    let ranked = RankedList::from_unsorted(items);
    Ok(RepeatMetrics {
        ndcg: ndcg_at_n(&ranked, params.n_at)?,
        precision: precision_at_n(&ranked, params.n_at)?,
        acc_valid_invalid: pairwise_accuracy_filtered(
            &predicted,
            &measured,
            &valid,
            PairFilter::ValidInvalid,
        )?,
        acc_valid_valid: pairwise_accuracy_filtered(
            &predicted,
            &measured,
            &valid,
            PairFilter::ValidValid,
        )?,
    })
}

/// Sweep the `(ratio, sample_size)` grid against one recorded space.
///
/// Deterministic for a given `params.seed` regardless of worker count; cell
/// order follows the parameter lists (ratios outer, sizes inner is *not*
/// used — sizes are outer so each size's ratio sweep stays contiguous).
pub fn controlled_ratio_study(
    space: &SearchSpace,
    truth: &GroundTruthTable,
    params: &StudyParams,
) -> Result<StudyReport> {
    params.validate()?;
    if !truth.matches(space) {
        return Err(Error::TruthMismatch {
            reason: format!(
                "table for `{}` does not cover space `{}`",
                truth.workload_id(),
                space.workload_id()
            ),
        });
    }
    // Feature matrix for the whole space, shared read-only by all repeats.
    let features: Vec<Vec<f64>> = (0..space.size())
        .map(|l| featurize_point(space, &space.to_coords(l)?))
        .collect::<Result<_>>()?;

    // Pre-draw every repeat's seeds in a fixed order so parallel execution
    // cannot change the results.
    let mut rng = StdRng::seed_from_u64(params.seed);
    let mut tasks: Vec<(usize, f64, usize, u64, u64)> = Vec::new();
    for (ci, (&sample_size, &ratio)) in params
        .sample_sizes
        .iter()
        .flat_map(|s| params.ratios.iter().map(move |r| (s, r)))
        .enumerate()
    {
        for _ in 0..params.repeats {
            tasks.push((ci, ratio, sample_size, rng.gen(), rng.gen()));
        }
    }
    let metrics: Vec<RepeatMetrics> = tasks
        .par_iter()
        .map(|&(_, ratio, sample_size, shuffle_seed, fit_seed)| {
            run_repeat(&features, truth, params, ratio, sample_size, shuffle_seed, fit_seed)
        })
        .collect::<Result<_>>()?;

    let n_cells = params.sample_sizes.len() * params.ratios.len();
    let mut cells = Vec::with_capacity(n_cells);
    for ci in 0..n_cells {
        let slice = &metrics[ci * params.repeats..(ci + 1) * params.repeats];
        let (_, ratio, sample_size, _, _) = tasks[ci * params.repeats];
        let mean = |f: fn(&RepeatMetrics) -> f64| {
            slice.iter().map(f).sum::<f64>() / slice.len() as f64
        };
        cells.push(StudyCell {
            ratio,
            sample_size,
            mean_ndcg: mean(|m| m.ndcg),
            mean_precision: mean(|m| m.precision),
            mean_acc_valid_invalid: mean(|m| m.acc_valid_invalid),
            mean_acc_valid_valid: mean(|m| m.acc_valid_valid),
            repeats: params.repeats,
        });
    }
    Ok(StudyReport { workload_id: space.workload_id().to_string(), n_at: params.n_at, cells })
}
