//! The tuning loop: fit a surrogate, propose a batch by simulated annealing,
//! measure, repeat.
//!
//! Two modes share every moving part except initialization and scoring:
//!
//! - **Baseline**: the first epoch measures uniformly random configurations,
//!   and batch proposal scores points by raw model prediction.
//! - **Enhanced**: the first epoch measures a spread-out subset of a
//!   validity presample (mostly valid points, plus some invalid ones near
//!   the cliffs), and scoring is biased by validity knowledge — points known
//!   invalid are pinned to a score so low they can never be proposed, points
//!   known valid (and not yet measured) get a small bonus.
//!
//! Every run is a pure function of `(space, truth, config, presample)`: the
//! same seed reproduces the same trials bit for bit.

use std::time::Instant;

use rand::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::metrics::RunStatistics;
use crate::oracle::GroundTruthTable;
use crate::sampler::{select_initial_batch, PresampleSet};
use crate::space::{ConfigIndex, SearchSpace};
use crate::surrogate::{featurize_point_into, FeatureVector, GbtParams, SurrogateModel, TrainingSet};
use crate::Result;

/// Which initialization and scoring the tuner uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TunerMode {
    Baseline,
    Enhanced,
}

impl std::fmt::Display for TunerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TunerMode::Baseline => "baseline",
            TunerMode::Enhanced => "enhanced",
        })
    }
}

/// Simulated-annealing schedule for batch proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaParams {
    /// Number of parallel walkers.
    pub population: usize,
    /// Mutation rounds; temperature decays once per round.
    pub rounds: usize,
    pub initial_temp: f64,
    /// Multiplicative decay per round, in (0, 1].
    pub cooling: f64,
}

impl Default for SaParams {
    fn default() -> Self {
        SaParams { population: 128, rounds: 200, initial_temp: 1.0, cooling: 0.98 }
    }
}

impl SaParams {
    fn validate(&self) -> Result<()> {
        if self.population == 0 {
            return Err(Error::InvalidParam { name: "population", reason: "must be >= 1".into() });
        }
        if self.rounds == 0 {
            return Err(Error::InvalidParam { name: "rounds", reason: "must be >= 1".into() });
        }
        if !(self.initial_temp > 0.0) {
            return Err(Error::InvalidParam {
                name: "initial_temp",
                reason: format!("must be > 0, got {}", self.initial_temp),
            });
        }
        if !(self.cooling > 0.0 && self.cooling <= 1.0) {
            return Err(Error::InvalidParam {
                name: "cooling",
                reason: format!("must be in (0, 1], got {}", self.cooling),
            });
        }
        Ok(())
    }
}

/// Full tuning-run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunerConfig {
    pub mode: TunerMode,
    /// Total measurement budget.
    pub total_trials: usize,
    /// Measurements per epoch (and size of proposed batches).
    pub epoch_size: usize,
    /// Cap on valid points in the enhanced first epoch; the rest of the
    /// batch is filled with invalid presampled points.
    pub max_valid_initial: usize,
    /// Additive score bonus for known-valid, not-yet-measured points.
    pub bias_valid: f64,
    /// Absolute score assigned to known-invalid points; far below anything a
    /// model in [0, 1] plus `bias_valid` can produce.
    pub bias_invalid: f64,
    pub sa: SaParams,
    pub gbt: GbtParams,
    pub seed: u64,
}

impl Default for TunerConfig {
    fn default() -> Self {
        TunerConfig {
            mode: TunerMode::Baseline,
            total_trials: 750,
            epoch_size: 50,
            max_valid_initial: 25,
            bias_valid: 0.1,
            bias_invalid: -1e6,
            sa: SaParams::default(),
            gbt: GbtParams::default(),
            seed: 0,
        }
    }
}

impl TunerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_trials == 0 {
            return Err(Error::InvalidParam {
                name: "total_trials",
                reason: "must be >= 1".into(),
            });
        }
        if self.epoch_size == 0 || self.epoch_size > self.total_trials {
            return Err(Error::InvalidParam {
                name: "epoch_size",
                reason: format!(
                    "must be in 1..={}, got {}",
                    self.total_trials, self.epoch_size
                ),
            });
        }
        if self.bias_valid < 0.0 {
            return Err(Error::InvalidParam {
                name: "bias_valid",
                reason: format!("must be >= 0, got {}", self.bias_valid),
            });
        }
        // Must sit strictly below every achievable biased prediction; model
        // outputs live in [0, 1] but leave generous headroom.
        if self.bias_invalid >= -(1.0 + self.bias_valid) {
            return Err(Error::InvalidParam {
                name: "bias_invalid",
                reason: format!(
                    "must be < {}, got {}",
                    -(1.0 + self.bias_valid),
                    self.bias_invalid
                ),
            });
        }
        self.sa.validate()
    }
}

/// Model predictions shifted by validity knowledge.
pub struct BiasedScorer<'a> {
    space: &'a SearchSpace,
    model: &'a SurrogateModel,
    known_valid: &'a [bool],
    known_invalid: &'a [bool],
    bias_valid: f64,
    bias_invalid: f64,
}

impl<'a> BiasedScorer<'a> {
    pub fn new(
        space: &'a SearchSpace,
        model: &'a SurrogateModel,
        known_valid: &'a [bool],
        known_invalid: &'a [bool],
        bias_valid: f64,
        bias_invalid: f64,
    ) -> Result<Self> {
        for (labels, what) in [(known_valid, "known_valid"), (known_invalid, "known_invalid")] {
            if labels.len() != space.size() {
                return Err(Error::LengthMismatch {
                    context: "validity labels",
                    expected: space.size(),
                    actual: labels.len(),
                });
            }
            let _ = what;
        }
        Ok(BiasedScorer { space, model, known_valid, known_invalid, bias_valid, bias_invalid })
    }

    /// Score of one point: `bias_invalid` absolutely for known-invalid
    /// points, otherwise the model prediction plus `bias_valid` when the
    /// point is known valid.
    pub fn score(&self, point: &ConfigIndex) -> f64 {
        let mut buf = Vec::new();
        self.score_buffered(point, &mut buf)
    }

    fn score_buffered(&self, point: &ConfigIndex, buf: &mut FeatureVector) -> f64 {
        if self.known_invalid[point.linear] {
            return self.bias_invalid;
        }
        featurize_point_into(self.space, point, buf).expect("point belongs to space");
        let mut score = self.model.predict_unchecked(buf);
        if self.known_valid[point.linear] {
            score += self.bias_valid;
        }
        score
    }

    fn space(&self) -> &'a SearchSpace {
        self.space
    }

    fn is_proposable(&self, linear: usize, measured: &[bool]) -> bool {
        !measured[linear] && !self.known_invalid[linear]
    }
}

/// Keeps the k best `(score, linear)` pairs; ties prefer lower linear index.
struct TopK {
    k: usize,
    // Ordered worst-first: ascending score, descending linear.
    set: std::collections::BTreeSet<(u64, std::cmp::Reverse<usize>)>,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK { k, set: std::collections::BTreeSet::new() }
    }

    /// Monotone mapping of f64 to sortable bits (all finite values).
    fn key(score: f64) -> u64 {
        let bits = score.to_bits();
        if score >= 0.0 {
            bits | (1 << 63)
        } else {
            !bits
        }
    }

    fn offer(&mut self, score: f64, linear: usize) {
        let entry = (Self::key(score), std::cmp::Reverse(linear));
        if self.set.len() < self.k {
            self.set.insert(entry);
            return;
        }
        let worst = *self.set.iter().next().expect("non-empty");
        if entry > worst && self.set.insert(entry) {
            self.set.remove(&worst);
        }
    }

    /// Linear indices, best score first.
    fn into_descending(self) -> Vec<usize> {
        self.set.into_iter().rev().map(|(_, std::cmp::Reverse(l))| l).collect()
    }
}

/// Propose up to `k` unmeasured configurations by simulated annealing over
/// the biased score surface.
///
/// Walkers start uniformly at random; each round every walker mutates one
/// knob by one uniformly chosen alternative and accepts by the Metropolis
/// rule. Every scored point that is proposable — not measured, not known
/// invalid — competes for the batch, so the returned batch can never contain
/// a measured or known-invalid configuration. When no more than `k`
/// proposable points remain in the whole space, they are returned directly
/// (ascending), which covers the endgame of nearly exhausted spaces.
pub fn sa_select_batch(
    scorer: &BiasedScorer,
    measured: &[bool],
    k: usize,
    sa: &SaParams,
    seed: u64,
) -> Result<Vec<ConfigIndex>> {
    sa.validate()?;
    let space = scorer.space();
    if k == 0 {
        return Err(Error::InvalidParam { name: "k", reason: "must be >= 1".into() });
    }
    if measured.len() != space.size() {
        return Err(Error::LengthMismatch {
            context: "measured labels",
            expected: space.size(),
            actual: measured.len(),
        });
    }
    let proposable = (0..space.size())
        .filter(|&l| scorer.is_proposable(l, measured))
        .count();
    if proposable <= k {
        return (0..space.size())
            .filter(|&l| scorer.is_proposable(l, measured))
            .map(|l| space.to_coords(l))
            .collect();
    }

    let mut rng = StdRng::seed_from_u64(seed);
    let mut top = TopK::new(k);
    let mut buf = FeatureVector::new();
    let cards: Vec<usize> = space.knobs().iter().map(|kb| kb.cardinality()).collect();
    let mutable_knobs: Vec<usize> =
        (0..cards.len()).filter(|&i| cards[i] > 1).collect();
    debug_assert!(!mutable_knobs.is_empty(), "space bigger than k has a mutable knob");

    let mut walkers: Vec<(ConfigIndex, f64)> = (0..sa.population)
        .map(|_| {
            let point = space
                .to_coords(rng.gen_range(0..space.size()))
                .expect("in range");
            let score = scorer.score_buffered(&point, &mut buf);
            (point, score)
        })
        .collect();
    for (point, score) in &walkers {
        if scorer.is_proposable(point.linear, measured) {
            top.offer(*score, point.linear);
        }
    }

    let mut temp = sa.initial_temp;
    for _ in 0..sa.rounds {
        for w in 0..walkers.len() {
            let (ref point, score) = walkers[w];
            // Mutate one knob to a uniformly chosen different menu position.
            let knob = mutable_knobs[rng.gen_range(0..mutable_knobs.len())];
            let old_coord = point.coords[knob];
            let step = rng.gen_range(0..cards[knob] - 1);
            let new_coord = if step >= old_coord { step + 1 } else { step };
            let mut coords = point.coords.clone();
            coords[knob] = new_coord;
            let linear = (point.linear + new_coord * space.strides()[knob])
                - old_coord * space.strides()[knob];
            let proposal = ConfigIndex { coords, linear };
            let proposal_score = scorer.score_buffered(&proposal, &mut buf);
            if scorer.is_proposable(proposal.linear, measured) {
                top.offer(proposal_score, proposal.linear);
            }
            let delta = proposal_score - score;
            if delta >= 0.0 || rng.gen::<f64>() < (delta / temp).exp() {
                walkers[w] = (proposal, proposal_score);
            }
        }
        temp *= sa.cooling;
    }
    top.into_descending().into_iter().map(|l| space.to_coords(l)).collect()
}

/// One measurement during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// 1-based trial number.
    pub trial: usize,
    /// Linear index of the measured configuration.
    pub index: usize,
    pub valid: bool,
    pub gflops: f64,
    pub best_so_far: f64,
}

/// Wall-clock seconds spent in each phase of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    /// Filled in by the caller that ran presampling (zero for baseline).
    pub presample_s: f64,
    pub fit_s: f64,
    pub select_s: f64,
    pub measure_s: f64,
}

impl PhaseTimings {
    pub fn total(&self) -> f64 {
        self.presample_s + self.fit_s + self.select_s + self.measure_s
    }
}

/// Complete outcome of one tuning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub workload_id: String,
    pub mode: TunerMode,
    pub seed: u64,
    pub trials: Vec<TrialRecord>,
    pub stats: RunStatistics,
    pub best_index: usize,
    pub best_gflops: f64,
    /// Whether the run measured the space's true optimum.
    pub reached_global_best: bool,
    /// Number of known-invalid configurations that appeared in any
    /// SA-proposed batch (enhanced mode guarantees 0).
    pub known_invalid_batched: usize,
    /// True when proposal ran out of configurations before the budget.
    pub ended_early: bool,
    pub epochs: usize,
    /// Not part of the deterministic run identity; excluded from logs.
    #[serde(skip)]
    pub timings: PhaseTimings,
}

/// Execute one tuning run against an exhaustive ground-truth table.
///
/// `presample` is required in enhanced mode (its space hash must match) and
/// ignored entirely in baseline mode. The run is bit-reproducible from
/// `(space, truth, config)`.
pub fn run_tuning(
    space: &SearchSpace,
    truth: &GroundTruthTable,
    config: &TunerConfig,
    presample: Option<&PresampleSet>,
) -> Result<RunRecord> {
    config.validate()?;
    if !truth.matches(space) {
        return Err(Error::TruthMismatch {
            reason: format!(
                "table for `{}` does not cover space `{}`",
                truth.workload_id(),
                space.workload_id()
            ),
        });
    }
    let mut timings = PhaseTimings::default();
    let mut rng = StdRng::seed_from_u64(config.seed);
    let size = space.size();

    // Validity knowledge: seeded from the presample in enhanced mode, grown
    // by measurements in both modes.
    let (mut known_valid, mut known_invalid) = match config.mode {
        TunerMode::Enhanced => {
            let set = presample.ok_or(Error::MissingPresample)?;
            if set.space_hash() != space.structural_hash() {
                return Err(Error::TruthMismatch {
                    reason: "presample set belongs to a different space".into(),
                });
            }
            set.known_labels(size)
        }
        TunerMode::Baseline => (vec![false; size], vec![false; size]),
    };

    // First-epoch batch.
    let initial_seed = rng.gen::<u64>();
    let mut batch: Vec<ConfigIndex> = match config.mode {
        TunerMode::Enhanced => {
            let set = presample.expect("checked above");
            select_initial_batch(
                set,
                config.epoch_size.min(config.total_trials),
                config.max_valid_initial,
                initial_seed,
            )?
            .points
        }
        TunerMode::Baseline => {
            let k = config.epoch_size.min(config.total_trials).min(size);
            let mut pick_rng = StdRng::seed_from_u64(initial_seed);
            rand::seq::index::sample(&mut pick_rng, size, k)
                .into_iter()
                .map(|l| space.to_coords(l))
                .collect::<Result<Vec<_>>>()?
        }
    };

    let (global_best_index, global_best_gflops) = truth.best();
    let mut measured = vec![false; size];
    let mut measured_rows: Vec<(ConfigIndex, crate::oracle::MeasurementResult)> = Vec::new();
    let mut trials: Vec<TrialRecord> = Vec::with_capacity(config.total_trials);
    let mut convergence: Vec<f64> = Vec::with_capacity(config.total_trials);
    let mut best: Option<(usize, f64)> = None;
    let mut trials_to_best: Option<usize> = None;
    let mut known_invalid_batched = 0usize;
    let mut ended_early = false;
    let mut epochs = 0usize;

    loop {
        // Measure phase.
        let t0 = Instant::now();
        for point in &batch {
            debug_assert!(!measured[point.linear], "a batch repeated a measurement");
            let m = truth.lookup(point)?;
            // Count knowledge violations before recording new knowledge; the
            // first epoch is seeded (not SA-proposed), so it is exempt.
            if epochs > 0 && known_invalid[point.linear] {
                known_invalid_batched += 1;
            }
            measured[point.linear] = true;
            known_valid[point.linear] = m.valid;
            known_invalid[point.linear] = !m.valid;
            let trial = trials.len() + 1;
            if best.map_or(true, |(_, g)| m.gflops > g) {
                best = Some((point.linear, m.gflops));
            }
            let best_so_far = best.map_or(0.0, |(_, g)| g);
            if trials_to_best.is_none() && m.gflops == global_best_gflops {
                trials_to_best = Some(trial);
            }
            trials.push(TrialRecord {
                trial,
                index: point.linear,
                valid: m.valid,
                gflops: m.gflops,
                best_so_far,
            });
            convergence.push(best_so_far);
            measured_rows.push((point.clone(), m));
        }
        timings.measure_s += t0.elapsed().as_secs_f64();

        if trials.len() >= config.total_trials {
            break;
        }

        // Fit phase: fresh model on everything measured so far.
        let t1 = Instant::now();
        let ts = TrainingSet::from_measurements(space, &measured_rows)?;
        let fit_seed = rng.gen::<u64>();
        let model = SurrogateModel::fit(config.gbt.clone(), &ts, fit_seed)?;
        timings.fit_s += t1.elapsed().as_secs_f64();

        // Select phase.
        let t2 = Instant::now();
        let scorer = BiasedScorer::new(
            space,
            &model,
            &known_valid,
            &known_invalid,
            config.bias_valid,
            config.bias_invalid,
        )?;
        let k = config.epoch_size.min(config.total_trials - trials.len());
        let sa_seed = rng.gen::<u64>();
        batch = sa_select_batch(&scorer, &measured, k, &config.sa, sa_seed)?;
        timings.select_s += t2.elapsed().as_secs_f64();

        if batch.is_empty() {
            // Nothing left to propose (exhausted or fully known-invalid).
            ended_early = true;
            break;
        }
        epochs += 1;
    }

    let (best_index, best_gflops) = best.unwrap_or((0, 0.0));
    let stats = RunStatistics {
        trials_to_best: trials_to_best.unwrap_or(config.total_trials + 1),
        convergence,
    };
    Ok(RunRecord {
        workload_id: space.workload_id().to_string(),
        mode: config.mode,
        seed: config.seed,
        reached_global_best: trials_to_best.is_some(),
        trials,
        stats,
        best_index,
        best_gflops,
        known_invalid_batched,
        ended_early,
        epochs: epochs + 1,
        timings,
    })
    .map(|r| {
        debug_assert!(r.reached_global_best == (r.best_index == global_best_index)
            || r.best_gflops == global_best_gflops);
        r
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{HardwareBudget, Oracle, WorkloadSpec};
    use crate::sampler::presample;
    use crate::space::Knob;

    /// Small real oracle: the speech-style conv with a 768-point space.
    fn small_oracle() -> Oracle {
        let w = WorkloadSpec {
            id: "wl_3".into(),
            batch: 1,
            channel_out: 32,
            image_h: 79,
            image_w: 341,
            kernel_h: 10,
            kernel_w: 5,
            channel_in: 32,
            stride_h: 2,
            stride_w: 2,
            pad_h: 0,
            pad_w: 0,
        };
        Oracle::new(w, HardwareBudget::default()).unwrap()
    }

    fn tiny_space() -> SearchSpace {
        SearchSpace::new(
            "tiny",
            vec![
                Knob::split("a", vec![1, 2, 4, 8]).unwrap(),
                Knob::split("b", vec![1, 2, 4]).unwrap(),
                Knob::other_option("c", vec![0, 1, 2, 3]).unwrap(),
                Knob::other_option("d", vec![0, 1, 2]).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn config_validation_catches_bad_ranges() {
        let ok = TunerConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            TunerConfig { total_trials: 0, ..ok.clone() },
            TunerConfig { epoch_size: 0, ..ok.clone() },
            TunerConfig { epoch_size: 751, ..ok.clone() },
            TunerConfig { bias_valid: -0.1, ..ok.clone() },
            TunerConfig { bias_invalid: 0.5, ..ok.clone() },
            TunerConfig { bias_invalid: -1.0, ..ok.clone() },
            TunerConfig {
                sa: SaParams { cooling: 0.0, ..SaParams::default() },
                ..ok.clone()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?} should be rejected");
        }
    }

    #[test]
    fn scorer_applies_biases_by_knowledge() {
        let space = tiny_space();
        let model = SurrogateModel::untrained(GbtParams::default());
        let mut known_valid = vec![false; space.size()];
        let mut known_invalid = vec![false; space.size()];
        known_valid[3] = true;
        known_invalid[5] = true;
        let scorer =
            BiasedScorer::new(&space, &model, &known_valid, &known_invalid, 0.1, -1e6).unwrap();
        // Untrained model predicts 0 everywhere, so scores are pure bias.
        assert_eq!(scorer.score(&space.to_coords(3).unwrap()), 0.1);
        assert_eq!(scorer.score(&space.to_coords(5).unwrap()), -1e6);
        assert_eq!(scorer.score(&space.to_coords(7).unwrap()), 0.0);
    }

    /// A model overfit to the exhaustive truth of the tiny space, so SA's
    /// score surface equals the (normalized) true surface.
    fn truth_model(space: &SearchSpace) -> (SurrogateModel, Vec<f64>) {
        use crate::surrogate::featurize_point;
        let mut ts = TrainingSet::new();
        // Synthetic smooth-but-bumpy target over the 144 points.
        let mut targets = Vec::with_capacity(space.size());
        for linear in 0..space.size() {
            let p = space.to_coords(linear).unwrap();
            let fv = featurize_point(space, &p).unwrap();
            let t = 0.05
                + 0.9
                    * ((fv[0] * 0.8).sin().abs() * 0.4
                        + (fv[1] - 1.0).abs() / 2.0 * 0.3
                        + fv[2] / 3.0 * 0.2
                        + fv[3] / 2.0 * 0.1)
                        .min(1.0);
            targets.push(t);
            ts.push_valid(fv, t).unwrap();
        }
        let params = GbtParams {
            n_trees: 400,
            max_depth: 20,
            learning_rate: 0.3,
            min_samples_leaf: 1,
            subsample: 1.0,
        };
        (SurrogateModel::fit(params, &ts, 0).unwrap(), targets)
    }

    #[test]
    fn sa_batch_finds_the_true_top_k_on_a_small_space() {
        let space = tiny_space();
        let (model, _) = truth_model(&space);
        let known = vec![false; space.size()];
        let scorer = BiasedScorer::new(&space, &model, &known, &known, 0.1, -1e6).unwrap();
        let measured = vec![false; space.size()];
        let k = 10;
        // Brute-force expected batch: top-k by (score desc, linear asc).
        let mut scored: Vec<(f64, usize)> = (0..space.size())
            .map(|l| (scorer.score(&space.to_coords(l).unwrap()), l))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let expected: Vec<usize> = scored[..k].iter().map(|&(_, l)| l).collect();
        // 128 walkers x 200 rounds on 144 points visit everything.
        let batch = sa_select_batch(&scorer, &measured, k, &SaParams::default(), 9).unwrap();
        let got: Vec<usize> = batch.iter().map(|p| p.linear).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn sa_batch_excludes_measured_and_known_invalid() {
        let space = tiny_space();
        let (model, _) = truth_model(&space);
        let mut rng = StdRng::seed_from_u64(5);
        let mut measured = vec![false; space.size()];
        let mut known_invalid = vec![false; space.size()];
        let known_valid = vec![false; space.size()];
        for _ in 0..40 {
            measured[rng.gen_range(0..space.size())] = true;
        }
        for _ in 0..40 {
            known_invalid[rng.gen_range(0..space.size())] = true;
        }
        let scorer =
            BiasedScorer::new(&space, &model, &known_valid, &known_invalid, 0.1, -1e6).unwrap();
        for seed in 0..10 {
            let batch =
                sa_select_batch(&scorer, &measured, 12, &SaParams::default(), seed).unwrap();
            assert_eq!(batch.len(), 12);
            for p in &batch {
                assert!(!measured[p.linear], "proposed an already measured point");
                assert!(!known_invalid[p.linear], "proposed a known-invalid point");
            }
        }
    }

    #[test]
    fn sa_batch_returns_remainder_when_space_nearly_exhausted() {
        let space = tiny_space();
        let (model, _) = truth_model(&space);
        let mut measured = vec![true; space.size()];
        let mut known_invalid = vec![false; space.size()];
        let known_valid = vec![false; space.size()];
        // Leave 7 unmeasured, 2 of them known invalid -> 5 proposable.
        for &l in &[10, 20, 30, 40, 50, 60, 70] {
            measured[l] = false;
        }
        known_invalid[30] = true;
        known_invalid[60] = true;
        let scorer =
            BiasedScorer::new(&space, &model, &known_valid, &known_invalid, 0.1, -1e6).unwrap();
        let batch = sa_select_batch(&scorer, &measured, 12, &SaParams::default(), 0).unwrap();
        let got: Vec<usize> = batch.iter().map(|p| p.linear).collect();
        assert_eq!(got, vec![10, 20, 40, 50, 70]);
    }

    fn quick_config(mode: TunerMode, seed: u64) -> TunerConfig {
        TunerConfig {
            mode,
            total_trials: 120,
            epoch_size: 20,
            max_valid_initial: 10,
            sa: SaParams { population: 48, rounds: 60, ..SaParams::default() },
            gbt: GbtParams { n_trees: 20, ..GbtParams::default() },
            seed,
            ..TunerConfig::default()
        }
    }

    #[test]
    fn baseline_run_reaches_budget_with_consistent_accounting() {
        let oracle = small_oracle();
        let truth = oracle.record_ground_truth().unwrap();
        let record = run_tuning(
            oracle.space(),
            &truth,
            &quick_config(TunerMode::Baseline, 7),
            None,
        )
        .unwrap();
        assert_eq!(record.trials.len(), 120);
        assert!(!record.ended_early);
        let mut seen = std::collections::HashSet::new();
        let mut best = 0.0f64;
        for (i, t) in record.trials.iter().enumerate() {
            assert_eq!(t.trial, i + 1);
            assert!(seen.insert(t.index), "trial {} re-measured {}", t.trial, t.index);
            best = best.max(t.gflops);
            assert_eq!(t.best_so_far, best, "best_so_far must track the running max");
            assert_eq!(t.gflops, truth.gflops_at(t.index).unwrap());
        }
        assert_eq!(record.stats.convergence.len(), 120);
        if record.reached_global_best {
            assert_eq!(
                record.stats.convergence[record.stats.trials_to_best - 1],
                truth.best().1
            );
        } else {
            assert_eq!(record.stats.trials_to_best, 121);
        }
        // Baseline gathers no presample knowledge, so nothing is "known
        // invalid" at proposal time.
        assert_eq!(record.known_invalid_batched, 0);
    }

    #[test]
    fn runs_are_bit_reproducible_per_seed() {
        let oracle = small_oracle();
        let truth = oracle.record_ground_truth().unwrap();
        let space = oracle.space();
        let set = presample(space, 200, 16, 99, |p| {
            truth.is_valid(p.linear).unwrap()
        })
        .unwrap();
        for mode in [TunerMode::Baseline, TunerMode::Enhanced] {
            let cfg = quick_config(mode, 31);
            let a = run_tuning(space, &truth, &cfg, Some(&set)).unwrap();
            let b = run_tuning(space, &truth, &cfg, Some(&set)).unwrap();
            assert_eq!(
                serde_json::to_string(&a).unwrap(),
                serde_json::to_string(&b).unwrap(),
                "{mode} run must be reproducible"
            );
            let c = run_tuning(
                space,
                &truth,
                &TunerConfig { seed: 32, ..cfg },
                Some(&set),
            )
            .unwrap();
            assert_ne!(
                serde_json::to_string(&a).unwrap(),
                serde_json::to_string(&c).unwrap(),
                "different seeds should differ"
            );
        }
    }

    #[test]
    fn enhanced_requires_matching_presample_and_baseline_ignores_it() {
        let oracle = small_oracle();
        let truth = oracle.record_ground_truth().unwrap();
        let space = oracle.space();
        assert!(matches!(
            run_tuning(space, &truth, &quick_config(TunerMode::Enhanced, 1), None),
            Err(Error::MissingPresample)
        ));
        // A presample from a different space is rejected.
        let foreign_space = tiny_space();
        let foreign = presample(&foreign_space, 30, 4, 1, |_| true).unwrap();
        assert!(run_tuning(
            space,
            &truth,
            &quick_config(TunerMode::Enhanced, 1),
            Some(&foreign)
        )
        .is_err());
        // Baseline output is identical with or without a presample.
        let set = presample(space, 100, 8, 2, |p| truth.is_valid(p.linear).unwrap()).unwrap();
        let cfg = quick_config(TunerMode::Baseline, 5);
        let without = run_tuning(space, &truth, &cfg, None).unwrap();
        let with = run_tuning(space, &truth, &cfg, Some(&set)).unwrap();
        assert_eq!(
            serde_json::to_string(&without).unwrap(),
            serde_json::to_string(&with).unwrap()
        );
    }

    #[test]
    fn enhanced_first_epoch_mixes_spread_valid_and_invalid_points() {
        let oracle = small_oracle();
        let truth = oracle.record_ground_truth().unwrap();
        let space = oracle.space();
        let set = presample(space, 300, 16, 4, |p| truth.is_valid(p.linear).unwrap()).unwrap();
        let cfg = quick_config(TunerMode::Enhanced, 17);
        let record = run_tuning(space, &truth, &cfg, Some(&set)).unwrap();
        let first_epoch = &record.trials[..cfg.epoch_size.min(record.trials.len())];
        let n_valid = first_epoch.iter().filter(|t| t.valid).count();
        assert!(
            n_valid >= cfg.max_valid_initial.min(set.valid_count()),
            "first epoch should contain the capped valid picks (got {n_valid})"
        );
        assert_eq!(record.known_invalid_batched, 0);
    }

    #[test]
    fn sentinel_is_budget_plus_one_when_best_is_missed() {
        let oracle = small_oracle();
        let truth = oracle.record_ground_truth().unwrap();
        // A 5-trial budget cannot find the optimum of a 768-point space
        // from a random start (seed chosen to miss it).
        let cfg = TunerConfig {
            total_trials: 5,
            epoch_size: 5,
            sa: SaParams { population: 8, rounds: 5, ..SaParams::default() },
            gbt: GbtParams { n_trees: 5, ..GbtParams::default() },
            seed: 3,
            ..TunerConfig::default()
        };
        let record = run_tuning(oracle.space(), &truth, &cfg, None).unwrap();
        assert!(!record.reached_global_best);
        assert_eq!(record.stats.trials_to_best, 6);
    }

    #[test]
    fn exhausting_the_space_ends_the_run_early() {
        let oracle = small_oracle();
        let truth = oracle.record_ground_truth().unwrap();
        let space = oracle.space();
        // Budget of 900 > 768 points: the run must stop once every point is
        // measured, without repeating any.
        let cfg = TunerConfig {
            total_trials: 900,
            epoch_size: 100,
            sa: SaParams { population: 32, rounds: 30, ..SaParams::default() },
            gbt: GbtParams { n_trees: 10, ..GbtParams::default() },
            seed: 11,
            ..TunerConfig::default()
        };
        let record = run_tuning(space, &truth, &cfg, None).unwrap();
        assert!(record.ended_early);
        assert_eq!(record.trials.len(), 768, "must measure the whole space exactly once");
        assert!(record.reached_global_best);
    }
}
