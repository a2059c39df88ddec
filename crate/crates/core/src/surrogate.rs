//! Gradient-boosted regression trees over configuration features.
//!
//! The surrogate maps a configuration's feature vector to a predicted
//! relative throughput. It is a plain least-squares boosting ensemble of
//! axis-aligned CART trees, written out longhand so that every tie-break is
//! pinned down: split search scans features in ascending index order and
//! thresholds in ascending value order, keeping a candidate only on strictly
//! greater gain. Two fits of the same data with the same parameters and seed
//! produce bit-identical models on any platform.

use rand::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::space::{ConfigIndex, Configuration, KnobKind, SearchSpace};
use crate::Result;

/// Feature encoding of one configuration.
pub type FeatureVector = Vec<f64>;

/// Encode a space point: `log2(value)` for split knobs (tile factors live on
/// a log scale), menu position for categorical knobs.
pub fn featurize_point(space: &SearchSpace, point: &ConfigIndex) -> Result<FeatureVector> {
    let mut out = Vec::with_capacity(space.num_knobs());
    featurize_point_into(space, point, &mut out)?;
    Ok(out)
}

/// [`featurize_point`] writing into a caller-owned buffer (hot paths).
pub fn featurize_point_into(
    space: &SearchSpace,
    point: &ConfigIndex,
    out: &mut FeatureVector,
) -> Result<()> {
    if point.coords.len() != space.num_knobs() {
        return Err(Error::ConfigNotInSpace {
            reason: format!("point {:?} does not address this space", point.coords),
        });
    }
    out.clear();
    for (&coord, knob) in point.coords.iter().zip(space.knobs()) {
        let value = *knob.values.get(coord).ok_or_else(|| Error::ConfigNotInSpace {
            reason: format!("coordinate {coord} out of range for knob `{}`", knob.name),
        })?;
        out.push(match knob.kind {
            KnobKind::Split => (value as f64).log2(),
            KnobKind::OtherOption => coord as f64,
        });
    }
    Ok(())
}

/// Encode resolved knob values (resolves them back to menu positions first).
pub fn featurize(space: &SearchSpace, config: &Configuration) -> Result<FeatureVector> {
    let point = space.index_of(config)?;
    featurize_point(space, &point)
}

/// Supervised rows for fitting: features plus a relative-throughput target.
///
/// Targets are 0.0 exactly for invalid configurations and in `(0, 1]` for
/// valid ones (normalized by the best measurement in the batch).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    features: Vec<FeatureVector>,
    targets: Vec<f64>,
}

impl TrainingSet {
    pub fn new() -> Self {
        TrainingSet::default()
    }

    /// Add a valid configuration's row. The target must lie in `(0, 1]`.
    pub fn push_valid(&mut self, features: FeatureVector, target: f64) -> Result<()> {
        if !(target > 0.0 && target <= 1.0) {
            return Err(Error::InvalidParam {
                name: "target",
                reason: format!("valid rows need a target in (0, 1], got {target}"),
            });
        }
        self.push_row(features, target)
    }

    /// Add an invalid configuration's row (target pinned to exactly 0).
    pub fn push_invalid(&mut self, features: FeatureVector) -> Result<()> {
        self.push_row(features, 0.0)
    }

    fn push_row(&mut self, features: FeatureVector, target: f64) -> Result<()> {
        if let Some(first) = self.features.first() {
            if features.len() != first.len() {
                return Err(Error::LengthMismatch {
                    context: "training row",
                    expected: first.len(),
                    actual: features.len(),
                });
            }
        }
        if features.is_empty() {
            return Err(Error::EmptyInput { what: "feature vector" });
        }
        self.features.push(features);
        self.targets.push(target);
        Ok(())
    }

    /// Build a training set from measured points, normalizing valid targets
    /// by the best throughput among them.
    pub fn from_measurements(
        space: &SearchSpace,
        measured: &[(ConfigIndex, crate::oracle::MeasurementResult)],
    ) -> Result<Self> {
        let best = measured
            .iter()
            .filter(|(_, m)| m.valid)
            .map(|(_, m)| m.gflops)
            .fold(0.0f64, f64::max);
        let mut ts = TrainingSet::new();
        for (point, m) in measured {
            let fv = featurize_point(space, point)?;
            if m.valid {
                // best >= m.gflops > 0, so the ratio is in (0, 1].
                ts.push_valid(fv, m.gflops / best)?;
            } else {
                ts.push_invalid(fv)?;
            }
        }
        Ok(ts)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn features(&self) -> &[FeatureVector] {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

/// Boosting hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    /// Fraction of rows drawn (without replacement) per tree; 1.0 disables
    /// subsampling and makes the fit independent of the seed.
    pub subsample: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_trees: 50,
            max_depth: 6,
            learning_rate: 0.1,
            min_samples_leaf: 2,
            subsample: 1.0,
        }
    }
}

impl GbtParams {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParam { name: "n_trees", reason: "must be >= 1".into() });
        }
        if self.max_depth == 0 {
            return Err(Error::InvalidParam { name: "max_depth", reason: "must be >= 1".into() });
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 2.0) {
            return Err(Error::InvalidParam {
                name: "learning_rate",
                reason: format!("must be in (0, 2], got {}", self.learning_rate),
            });
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidParam {
                name: "min_samples_leaf",
                reason: "must be >= 1".into(),
            });
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::InvalidParam {
                name: "subsample",
                reason: format!("must be in (0, 1], got {}", self.subsample),
            });
        }
        Ok(())
    }
}

/// One regression-tree node; trees serialize as nested records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: Box<Node>, right: Box<Node> },
}

impl Node {
    fn eval(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }
}

/// Serialization schema version for [`SurrogateModel`].
const MODEL_VERSION: u32 = 1;

/// The boosted ensemble. An untrained model predicts exactly 0 everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    version: u32,
    params: GbtParams,
    /// `None` until fitted.
    n_features: Option<usize>,
    base: f64,
    trees: Vec<Node>,
    /// Training MSE after the base prediction and after each tree.
    train_mse: Vec<f64>,
}

impl SurrogateModel {
    /// A model that has seen no data; predicts 0 for every input.
    pub fn untrained(params: GbtParams) -> Self {
        SurrogateModel {
            version: MODEL_VERSION,
            params,
            n_features: None,
            base: 0.0,
            trees: Vec::new(),
            train_mse: Vec::new(),
        }
    }

    pub fn is_fitted(&self) -> bool {
        self.n_features.is_some()
    }

    pub fn params(&self) -> &GbtParams {
        &self.params
    }

    /// Training MSE trace: entry 0 after the constant base, then one entry
    /// per boosting round. Non-increasing when `subsample == 1.0`.
    pub fn train_mse(&self) -> &[f64] {
        &self.train_mse
    }

    /// Fit an ensemble. The seed only matters when `subsample < 1.0`.
    pub fn fit(params: GbtParams, ts: &TrainingSet, seed: u64) -> Result<Self> {
        params.validate()?;
        if ts.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        let xs = ts.features();
        let ys = ts.targets();
        let n = ys.len();
        let base = ys.iter().sum::<f64>() / n as f64;
        let mut preds = vec![base; n];
        let mut train_mse = vec![mse(&preds, ys)];
        let mut rng = StdRng::seed_from_u64(seed);
        let mut trees = Vec::with_capacity(params.n_trees);
        let all_rows: Vec<u32> = (0..n as u32).collect();
        for _ in 0..params.n_trees {
            let residuals: Vec<f64> = ys.iter().zip(&preds).map(|(y, p)| y - p).collect();
            let rows = if params.subsample < 1.0 {
                let keep = ((params.subsample * n as f64).floor() as usize).max(1);
                sample_rows(&mut rng, n, keep)
            } else {
                all_rows.clone()
            };
            let tree = build_node(xs, &residuals, rows, 0, &params);
            for (i, x) in xs.iter().enumerate() {
                preds[i] += params.learning_rate * tree.eval(x);
            }
            train_mse.push(mse(&preds, ys));
            trees.push(tree);
        }
        Ok(SurrogateModel {
            version: MODEL_VERSION,
            params,
            n_features: Some(ts.n_features()),
            base,
            trees,
            train_mse,
        })
    }

    /// Predict relative throughput for one feature vector.
    ///
    /// Untrained models return 0 for any input; fitted models reject vectors
    /// whose length differs from the training data.
    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        match self.n_features {
            None => Ok(0.0),
            Some(expected) if features.len() != expected => Err(Error::LengthMismatch {
                context: "prediction features",
                expected,
                actual: features.len(),
            }),
            Some(_) => Ok(self.predict_unchecked(features)),
        }
    }

    /// [`SurrogateModel::predict`] without the length check. The caller must
    /// have validated the feature length (or the model is known fitted on
    /// vectors of this length).
    pub fn predict_unchecked(&self, features: &[f64]) -> f64 {
        let mut acc = self.base;
        for tree in &self.trees {
            acc += self.params.learning_rate * tree.eval(features);
        }
        acc
    }

    pub fn predict_batch(&self, rows: &[FeatureVector]) -> Result<Vec<f64>> {
        rows.iter().map(|r| self.predict(r)).collect()
    }

    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::json("<model json>", e))
    }

    pub fn from_json_string(text: &str) -> Result<Self> {
        let model: SurrogateModel =
            serde_json::from_str(text).map_err(|e| Error::json("<model json>", e))?;
        if model.version != MODEL_VERSION {
            return Err(Error::Schema {
                path: "<model json>".into(),
                reason: format!(
                    "model schema version {} (this build reads {MODEL_VERSION})",
                    model.version
                ),
            });
        }
        Ok(model)
    }
}

fn mse(preds: &[f64], ys: &[f64]) -> f64 {
    preds.iter().zip(ys).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / ys.len() as f64
}

/// `keep` distinct row indices, ascending (partial Fisher-Yates, then sort so
/// downstream sums are order-stable).
fn sample_rows(rng: &mut StdRng, n: usize, keep: usize) -> Vec<u32> {
    let mut scratch: Vec<u32> = (0..n as u32).collect();
    for i in 0..keep.min(n) {
        let j = rng.gen_range(i..n);
        scratch.swap(i, j);
    }
    scratch.truncate(keep.min(n));
    scratch.sort_unstable();
    scratch
}

/// Best split of `rows`: `(gain, feature, threshold)`, or `None` when no
/// split has positive gain. Ties resolve to the lowest feature index, then
/// the lowest threshold, because candidates are scanned in that order and
/// replaced only on strictly greater gain.
fn best_split(
    xs: &[FeatureVector],
    residuals: &[f64],
    rows: &[u32],
    params: &GbtParams,
) -> Option<(f64, usize, f64)> {
    let n = rows.len();
    let (sum, sum2) = rows.iter().fold((0.0, 0.0), |(s, s2), &r| {
        let y = residuals[r as usize];
        (s + y, s2 + y * y)
    });
    let sse_parent = (sum2 - sum * sum / n as f64).max(0.0);
    if sse_parent == 0.0 {
        return None;
    }
    let n_features = xs[0].len();
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order: Vec<u32> = Vec::with_capacity(n);
    for feature in 0..n_features {
        order.clear();
        order.extend_from_slice(rows);
        order.sort_unstable_by(|&a, &b| {
            xs[a as usize][feature]
                .total_cmp(&xs[b as usize][feature])
                .then_with(|| a.cmp(&b))
        });
        let mut left_sum = 0.0;
        let mut left_sum2 = 0.0;
        for i in 0..n - 1 {
            let r = order[i] as usize;
            let y = residuals[r];
            left_sum += y;
            left_sum2 += y * y;
            let a = xs[r][feature];
            let b = xs[order[i + 1] as usize][feature];
            if a == b {
                continue;
            }
            let (n_left, n_right) = (i + 1, n - i - 1);
            if n_left < params.min_samples_leaf || n_right < params.min_samples_leaf {
                continue;
            }
            let right_sum = sum - left_sum;
            let right_sum2 = sum2 - left_sum2;
            let sse_left = (left_sum2 - left_sum * left_sum / n_left as f64).max(0.0);
            let sse_right = (right_sum2 - right_sum * right_sum / n_right as f64).max(0.0);
            let gain = sse_parent - sse_left - sse_right;
            if gain > 0.0 && best.map_or(true, |(g, _, _)| gain > g) {
                // Midpoint, guarded so `value <= threshold` reproduces the
                // positional split even when (a+b)/2 rounds up to b.
                let mid = 0.5 * (a + b);
                let threshold = if mid < b { mid } else { a };
                best = Some((gain, feature, threshold));
            }
        }
    }
    best
}

fn build_node(
    xs: &[FeatureVector],
    residuals: &[f64],
    rows: Vec<u32>,
    depth: usize,
    params: &GbtParams,
) -> Node {
    let n = rows.len();
    let mean = rows.iter().map(|&r| residuals[r as usize]).sum::<f64>() / n as f64;
    if depth >= params.max_depth || n < 2 * params.min_samples_leaf {
        return Node::Leaf { value: mean };
    }
    let Some((_, feature, threshold)) = best_split(xs, residuals, &rows, params) else {
        return Node::Leaf { value: mean };
    };
    let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
        rows.into_iter().partition(|&r| xs[r as usize][feature] <= threshold);
    debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());
    Node::Split {
        feature,
        threshold,
        left: Box::new(build_node(xs, residuals, left_rows, depth + 1, params)),
        right: Box::new(build_node(xs, residuals, right_rows, depth + 1, params)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Knob;
    use proptest::prelude::*;

    fn toy_space() -> SearchSpace {
        SearchSpace::new(
            "toy",
            vec![
                Knob::split("tile", vec![1, 2, 4, 8]).unwrap(),
                Knob::other_option("order", vec![1, 2, 3]).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn features_use_log2_for_splits_and_position_for_categories() {
        let s = toy_space();
        let p = s.from_coords(&[3, 2]).unwrap(); // tile=8, order=3
        assert_eq!(featurize_point(&s, &p).unwrap(), vec![3.0, 2.0]);
        let c = s.configuration(&p).unwrap();
        assert_eq!(featurize(&s, &c).unwrap(), vec![3.0, 2.0]);
    }

    #[test]
    fn training_set_enforces_target_ranges() {
        let mut ts = TrainingSet::new();
        assert!(ts.push_valid(vec![1.0], 0.5).is_ok());
        assert!(ts.push_valid(vec![2.0], 1.0).is_ok());
        assert!(ts.push_valid(vec![3.0], 0.0).is_err());
        assert!(ts.push_valid(vec![3.0], 1.5).is_err());
        assert!(ts.push_invalid(vec![4.0]).is_ok());
        assert_eq!(ts.targets()[2], 0.0);
        // Mixed feature arity is rejected.
        assert!(ts.push_invalid(vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn from_measurements_normalizes_by_batch_best() {
        use crate::oracle::MeasurementResult;
        let s = toy_space();
        let rows = vec![
            (s.to_coords(0).unwrap(), MeasurementResult { valid: true, gflops: 5.0 }),
            (s.to_coords(1).unwrap(), MeasurementResult { valid: true, gflops: 20.0 }),
            (s.to_coords(2).unwrap(), MeasurementResult { valid: false, gflops: 0.0 }),
        ];
        let ts = TrainingSet::from_measurements(&s, &rows).unwrap();
        assert_eq!(ts.targets(), &[0.25, 1.0, 0.0]);
    }

    #[test]
    fn untrained_model_predicts_exactly_zero() {
        let m = SurrogateModel::untrained(GbtParams::default());
        assert!(!m.is_fitted());
        assert_eq!(m.predict(&[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(m.predict(&[]).unwrap(), 0.0);
    }

    #[test]
    fn single_row_fit_reproduces_target_exactly() {
        let mut ts = TrainingSet::new();
        ts.push_valid(vec![2.0, 0.0], 0.625).unwrap();
        let m = SurrogateModel::fit(GbtParams::default(), &ts, 0).unwrap();
        // Base = the lone target; every tree fits an all-zero residual.
        assert_eq!(m.predict(&[2.0, 0.0]).unwrap(), 0.625);
        assert_eq!(m.predict(&[9.0, 9.0]).unwrap(), 0.625);
    }

    #[test]
    fn fitted_model_rejects_wrong_arity() {
        let mut ts = TrainingSet::new();
        ts.push_valid(vec![1.0, 2.0], 0.5).unwrap();
        ts.push_valid(vec![2.0, 1.0], 1.0).unwrap();
        let m = SurrogateModel::fit(GbtParams::default(), &ts, 0).unwrap();
        assert!(m.predict(&[1.0]).is_err());
        assert!(m.predict(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let ts = TrainingSet::new();
        assert!(matches!(
            SurrogateModel::fit(GbtParams::default(), &ts, 0),
            Err(Error::EmptyTrainingSet)
        ));
    }

    fn synthetic_rows(n: usize, seed: u64) -> TrainingSet {
        use rand::Rng as _;
        let mut rng = StdRng::seed_from_u64(seed);
        let mut ts = TrainingSet::new();
        for _ in 0..n {
            let fv: FeatureVector = (0..5).map(|_| rng.gen_range(0.0..4.0)).collect();
            // A bumpy but deterministic target surface in (0, 1].
            let t = 0.05
                + 0.9
                    * ((fv[0] - fv[1]).abs() / 4.0 * 0.5
                        + (fv[2] * 1.7).sin().abs() * 0.3
                        + fv[4] / 4.0 * 0.2);
            ts.push_valid(fv, t.min(1.0)).unwrap();
        }
        ts
    }

    #[test]
    fn training_mse_is_non_increasing_without_subsampling() {
        let ts = synthetic_rows(120, 7);
        let m = SurrogateModel::fit(GbtParams::default(), &ts, 0).unwrap();
        let trace = m.train_mse();
        assert_eq!(trace.len(), m.params().n_trees + 1);
        for w in trace.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-12,
                "MSE increased between rounds: {} -> {}",
                w[0],
                w[1]
            );
        }
        // And boosting actually helps on this surface.
        assert!(trace.last().unwrap() < &(trace[0] * 0.5));
    }

    #[test]
    fn deep_ensemble_interpolates_distinct_points() {
        // With one row per leaf allowed and enough rounds, boosting drives
        // the training error to ~0 on rows with distinct features.
        let ts = synthetic_rows(40, 11);
        let params = GbtParams {
            n_trees: 300,
            max_depth: 25,
            learning_rate: 0.3,
            min_samples_leaf: 1,
            subsample: 1.0,
        };
        let m = SurrogateModel::fit(params, &ts, 0).unwrap();
        for (fv, &y) in ts.features().iter().zip(ts.targets()) {
            let err = (m.predict(fv).unwrap() - y).abs();
            assert!(err < 0.02, "residual {err} too large for interpolating fit");
        }
    }

    #[test]
    fn equal_gains_resolve_to_lowest_feature_and_threshold() {
        // Two rows differing in both features symmetrically: either feature
        // splits them with identical gain, so feature 0 must win.
        let mut ts = TrainingSet::new();
        ts.push_valid(vec![0.0, 0.0], 0.2).unwrap();
        ts.push_valid(vec![1.0, 1.0], 1.0).unwrap();
        let params = GbtParams { min_samples_leaf: 1, ..GbtParams::default() };
        let best = best_split(ts.features(), ts.targets(), &[0, 1], &params).unwrap();
        assert_eq!(best.1, 0, "tie must break to the lowest feature index");
        assert_eq!(best.2, 0.5);
    }

    #[test]
    fn same_seed_same_data_is_bit_identical() {
        let ts = synthetic_rows(60, 3);
        let params = GbtParams { subsample: 0.7, ..GbtParams::default() };
        let a = SurrogateModel::fit(params.clone(), &ts, 42).unwrap();
        let b = SurrogateModel::fit(params, &ts, 42).unwrap();
        assert_eq!(a.to_json_string().unwrap(), b.to_json_string().unwrap());
    }

    #[test]
    fn serialization_round_trip_preserves_predictions() {
        let ts = synthetic_rows(60, 5);
        let m = SurrogateModel::fit(GbtParams::default(), &ts, 0).unwrap();
        let text = m.to_json_string().unwrap();
        let back = SurrogateModel::from_json_string(&text).unwrap();
        assert_eq!(back, m);
        for fv in ts.features() {
            assert_eq!(
                m.predict(fv).unwrap().to_bits(),
                back.predict(fv).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn unknown_schema_version_is_rejected() {
        let ts = synthetic_rows(10, 1);
        let m = SurrogateModel::fit(GbtParams::default(), &ts, 0).unwrap();
        let text = m.to_json_string().unwrap().replace("\"version\":1", "\"version\":9");
        assert!(matches!(SurrogateModel::from_json_string(&text), Err(Error::Schema { .. })));
    }

    #[test]
    fn invalid_params_are_rejected() {
        let ts = synthetic_rows(10, 1);
        for params in [
            GbtParams { n_trees: 0, ..GbtParams::default() },
            GbtParams { max_depth: 0, ..GbtParams::default() },
            GbtParams { learning_rate: 0.0, ..GbtParams::default() },
            GbtParams { min_samples_leaf: 0, ..GbtParams::default() },
            GbtParams { subsample: 0.0, ..GbtParams::default() },
        ] {
            assert!(SurrogateModel::fit(params, &ts, 0).is_err());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn prop_predictions_are_finite_and_deterministic(seed in any::<u64>()) {
            let ts = synthetic_rows(30, seed);
            let m1 = SurrogateModel::fit(GbtParams::default(), &ts, seed).unwrap();
            let m2 = SurrogateModel::fit(GbtParams::default(), &ts, seed).unwrap();
            for fv in ts.features() {
                let p = m1.predict(fv).unwrap();
                prop_assert!(p.is_finite());
                prop_assert_eq!(p.to_bits(), m2.predict(fv).unwrap().to_bits());
            }
        }
    }
}
