//! Validity-directed presampling and initial-batch selection.
//!
//! Presampling probes the space with cheap validity checks before any real
//! measurement: a rolling batch of candidates is checked, every neighbour of
//! a valid hit joins the candidate pool (valid regions are contiguous, so
//! hits beget hits), every miss adds one fresh random point, and the pool is
//! topped up from unvisited space whenever it runs short. The result is a set
//! of checked points whose valid fraction is well above the space's base
//! rate.
//!
//! From that set, [`select_initial_batch`] picks a spread-out subset (greedy
//! farthest-point under Manhattan distance) to seed the tuner's first epoch:
//! mostly valid points, plus enough invalid ones that the model can learn
//! where the cliffs are.

use rand::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::space::{manhattan_distance, ConfigIndex, SearchSpace};
use crate::Result;

/// Outcome of a presampling pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PresampleSet {
    /// Checked points with their validity, in evaluation order.
    entries: Vec<(ConfigIndex, bool)>,
    /// Candidate-pool members discovered but never evaluated (audit trail;
    /// together with `entries` this covers every visited point).
    leftover_candidates: Vec<usize>,
    /// True when the space ran out before `n_requested` evaluations.
    exhausted: bool,
    n_requested: usize,
    n_parallel: usize,
    seed: u64,
    space_hash: u64,
}

impl PresampleSet {
    pub fn entries(&self) -> &[(ConfigIndex, bool)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn exhausted(&self) -> bool {
        self.exhausted
    }

    pub fn n_requested(&self) -> usize {
        self.n_requested
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn space_hash(&self) -> u64 {
        self.space_hash
    }

    pub fn leftover_candidates(&self) -> &[usize] {
        &self.leftover_candidates
    }

    pub fn valid_count(&self) -> usize {
        self.entries.iter().filter(|(_, v)| *v).count()
    }

    pub fn invalid_count(&self) -> usize {
        self.len() - self.valid_count()
    }

    /// Fraction of checked points that were valid.
    pub fn valid_fraction(&self) -> f64 {
        if self.entries.is_empty() {
            0.0
        } else {
            self.valid_count() as f64 / self.len() as f64
        }
    }

    pub fn valid_points(&self) -> Vec<&ConfigIndex> {
        self.entries.iter().filter(|(_, v)| *v).map(|(p, _)| p).collect()
    }

    pub fn invalid_points(&self) -> Vec<&ConfigIndex> {
        self.entries.iter().filter(|(_, v)| !*v).map(|(p, _)| p).collect()
    }

    /// Per-point validity knowledge as two dense label arrays
    /// `(known_valid, known_invalid)` over `space_size` linear indices.
    pub fn known_labels(&self, space_size: usize) -> (Vec<bool>, Vec<bool>) {
        let mut known_valid = vec![false; space_size];
        let mut known_invalid = vec![false; space_size];
        for (p, v) in &self.entries {
            if *v {
                known_valid[p.linear] = true;
            } else {
                known_invalid[p.linear] = true;
            }
        }
        (known_valid, known_invalid)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

/// Uniform O(1) draws from the not-yet-visited portion of a space.
struct UnvisitedPool {
    /// Linear indices still unvisited, in arbitrary order.
    items: Vec<u32>,
    /// `slot[linear]` = position of `linear` in `items`, or `u32::MAX`.
    slot: Vec<u32>,
}

const GONE: u32 = u32::MAX;

impl UnvisitedPool {
    fn new(size: usize) -> Self {
        UnvisitedPool { items: (0..size as u32).collect(), slot: (0..size as u32).collect() }
    }

    fn len(&self) -> usize {
        self.items.len()
    }

    /// Remove and return a uniformly random unvisited index.
    fn draw(&mut self, rng: &mut StdRng) -> Option<usize> {
        if self.items.is_empty() {
            return None;
        }
        let pos = rng.gen_range(0..self.items.len());
        Some(self.remove_at(pos))
    }

    /// Mark `linear` visited; returns false if it already was.
    fn remove(&mut self, linear: usize) -> bool {
        let pos = self.slot[linear];
        if pos == GONE {
            return false;
        }
        self.remove_at(pos as usize);
        true
    }

    fn remove_at(&mut self, pos: usize) -> usize {
        let linear = self.items.swap_remove(pos);
        self.slot[linear as usize] = GONE;
        if pos < self.items.len() {
            self.slot[self.items[pos] as usize] = pos as u32;
        }
        linear as usize
    }
}

/// Probe `n_samples` configurations with `check`, steering toward valid
/// regions via grid adjacency.
///
/// Contract (for a non-exhausted space): between `n_samples` and
/// `n_samples + n_parallel - 1` points are evaluated, none twice; every
/// neighbour of a valid point enters the candidate pool the moment that
/// point is evaluated; every invalid point adds one random unvisited
/// configuration instead. When the space runs out first, all of it is
/// evaluated and the result is flagged [`PresampleSet::exhausted`]. The whole
/// pass is a pure function of `(space, check, n_samples, n_parallel, seed)`.
pub fn presample(
    space: &SearchSpace,
    n_samples: usize,
    n_parallel: usize,
    seed: u64,
    mut check: impl FnMut(&ConfigIndex) -> bool,
) -> Result<PresampleSet> {
    if n_samples == 0 {
        return Err(Error::InvalidParam { name: "n_samples", reason: "must be >= 1".into() });
    }
    if n_parallel == 0 {
        return Err(Error::InvalidParam { name: "n_parallel", reason: "must be >= 1".into() });
    }
    if space.size() > u32::MAX as usize {
        return Err(Error::InvalidParam {
            name: "space",
            reason: format!("size {} exceeds presampler's u32 indexing", space.size()),
        });
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let mut pool = UnvisitedPool::new(space.size());
    let mut entries: Vec<(ConfigIndex, bool)> = Vec::with_capacity(n_samples + n_parallel);
    let mut candidates: Vec<u32> = Vec::new();

    // First batch: uniform over the whole space.
    let mut batch: Vec<usize> = Vec::with_capacity(n_parallel);
    for _ in 0..n_parallel {
        match pool.draw(&mut rng) {
            Some(linear) => batch.push(linear),
            None => break,
        }
    }

    while !batch.is_empty() && entries.len() < n_samples {
        for &linear in &batch {
            let point = space.to_coords(linear)?;
            let is_valid = check(&point);
            if is_valid {
                // Spread into the surrounding region: every unvisited
                // neighbour becomes a candidate.
                for q in space.neighbors(&point) {
                    if pool.remove(q.linear) {
                        candidates.push(q.linear as u32);
                    }
                }
            } else if let Some(fresh) = pool.draw(&mut rng) {
                // Dead end: replace this thread of exploration with a fresh
                // random start.
                candidates.push(fresh as u32);
            }
            entries.push((point, is_valid));
        }
        if entries.len() >= n_samples {
            break;
        }
        // Top up the candidate pool when it cannot fill the next batch.
        while candidates.len() < n_parallel && pool.len() > 0 {
            let fresh = pool.draw(&mut rng).expect("pool non-empty");
            candidates.push(fresh as u32);
        }
        batch.clear();
        for _ in 0..n_parallel {
            if candidates.is_empty() {
                break;
            }
            let pick = rng.gen_range(0..candidates.len());
            batch.push(candidates.swap_remove(pick) as usize);
        }
    }

    let exhausted = entries.len() < n_samples;
    Ok(PresampleSet {
        entries,
        leftover_candidates: candidates.into_iter().map(|c| c as usize).collect(),
        exhausted,
        n_requested: n_samples,
        n_parallel,
        seed,
        space_hash: space.structural_hash(),
    })
}

/// The spread-out seed batch for the tuner's first epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InitialBatch {
    /// Selected points: the valid picks first, then the invalid picks.
    pub points: Vec<ConfigIndex>,
    pub valid_count: usize,
    pub invalid_count: usize,
}

/// Select up to `epoch_size` presampled points for the first epoch.
///
/// Valid points are preferred but capped at `max_valid`; the remaining slots
/// go to invalid points (when available — the batch may come up short). Each
/// side is chosen by greedy farthest-point traversal under Manhattan
/// distance: the first pick is seeded-random, every later pick maximizes the
/// minimum distance to the picks so far, ties breaking toward the lowest
/// linear index.
pub fn select_initial_batch(
    presample: &PresampleSet,
    epoch_size: usize,
    max_valid: usize,
    seed: u64,
) -> Result<InitialBatch> {
    if epoch_size == 0 {
        return Err(Error::InvalidParam { name: "epoch_size", reason: "must be >= 1".into() });
    }
    if presample.is_empty() {
        return Err(Error::EmptyInput { what: "presample set" });
    }
    let valid = presample.valid_points();
    let invalid = presample.invalid_points();
    let n_valid = valid.len().min(max_valid).min(epoch_size);
    let n_invalid = invalid.len().min(epoch_size - n_valid);
    let mut rng = StdRng::seed_from_u64(seed);
    let mut points = farthest_point_subset(&valid, n_valid, &mut rng);
    points.extend(farthest_point_subset(&invalid, n_invalid, &mut rng));
    Ok(InitialBatch { points, valid_count: n_valid, invalid_count: n_invalid })
}

/// Greedy farthest-point (k-center style) subset of `candidates`, in pick
/// order. All candidates must share one space (equal coordinate arity).
fn farthest_point_subset(
    candidates: &[&ConfigIndex],
    k: usize,
    rng: &mut StdRng,
) -> Vec<ConfigIndex> {
    if k == 0 || candidates.is_empty() {
        return Vec::new();
    }
    if k >= candidates.len() {
        return candidates.iter().map(|&p| p.clone()).collect();
    }
    let first = rng.gen_range(0..candidates.len());
    let mut picked = vec![candidates[first].clone()];
    // dist[i] = distance from candidate i to its nearest picked point.
    let mut dist: Vec<u64> = candidates
        .iter()
        .map(|p| manhattan_distance(p, candidates[first]).expect("same space"))
        .collect();
    while picked.len() < k {
        let mut best: Option<(u64, usize, usize)> = None; // (dist, linear, slot)
        for (i, p) in candidates.iter().enumerate() {
            if dist[i] == 0 {
                continue; // already picked (or coincides with a pick)
            }
            let key = (dist[i], p.linear, i);
            let better = match best {
                None => true,
                // Farther wins; on equal distance the lower linear index.
                Some((d, lin, _)) => key.0 > d || (key.0 == d && key.1 < lin),
            };
            if better {
                best = Some(key);
            }
        }
        let Some((_, _, slot)) = best else {
            break; // every remaining candidate coincides with a pick
        };
        let chosen = candidates[slot].clone();
        for (i, p) in candidates.iter().enumerate() {
            let d = manhattan_distance(p, &chosen).expect("same space");
            if d < dist[i] {
                dist[i] = d;
            }
        }
        picked.push(chosen);
    }
    picked
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Knob;
    use std::collections::HashSet;

    fn grid(cards: &[usize]) -> SearchSpace {
        let knobs: Vec<Knob> = cards
            .iter()
            .enumerate()
            .map(|(i, &c)| Knob::other_option(format!("k{i}"), (0..c as u64).collect()).unwrap())
            .collect();
        SearchSpace::new("grid", knobs).unwrap()
    }

    /// Valid iff every coordinate is below half its cardinality: one compact
    /// corner block, like buffer constraints produce.
    fn corner_block(space: &SearchSpace) -> impl Fn(&ConfigIndex) -> bool + '_ {
        move |p: &ConfigIndex| {
            p.coords
                .iter()
                .zip(space.knobs())
                .all(|(&c, k)| c < (k.cardinality() + 1) / 2)
        }
    }

    #[test]
    fn presample_visits_no_point_twice_and_respects_bounds() {
        let space = grid(&[8, 8, 6, 4]);
        for seed in 0..5 {
            let set = presample(&space, 200, 16, seed, corner_block(&space)).unwrap();
            assert!(!set.exhausted());
            assert!(set.len() >= 200, "undershoot: {}", set.len());
            assert!(set.len() < 200 + 16, "overshoot: {}", set.len());
            let distinct: HashSet<usize> =
                set.entries().iter().map(|(p, _)| p.linear).collect();
            assert_eq!(distinct.len(), set.len(), "a point was evaluated twice");
            // Leftover candidates are disjoint from evaluated points.
            for &c in set.leftover_candidates() {
                assert!(!distinct.contains(&c));
            }
        }
    }

    #[test]
    fn presample_expands_neighbors_of_valid_points() {
        let space = grid(&[8, 8, 6, 4]);
        let set = presample(&space, 150, 8, 3, corner_block(&space)).unwrap();
        let visited: HashSet<usize> = set
            .entries()
            .iter()
            .map(|(p, _)| p.linear)
            .chain(set.leftover_candidates().iter().copied())
            .collect();
        // Every neighbour of a valid evaluated point must have been pulled
        // into the candidate pool (hence visited) or evaluated itself.
        for (p, v) in set.entries() {
            if !v {
                continue;
            }
            for q in space.neighbors(p) {
                assert!(
                    visited.contains(&q.linear),
                    "neighbour {:?} of valid {:?} never became a candidate",
                    q.coords,
                    p.coords
                );
            }
        }
    }

    #[test]
    fn presample_beats_uniform_sampling_on_clustered_validity() {
        let space = grid(&[10, 10, 8]);
        let check = corner_block(&space);
        let base_rate = (0..space.size())
            .filter(|&l| check(&space.to_coords(l).unwrap()))
            .count() as f64
            / space.size() as f64;
        let set = presample(&space, 300, 16, 11, &check).unwrap();
        assert!(
            set.valid_fraction() > 1.5 * base_rate,
            "directed sampling should concentrate on the valid block \
             (got {:.3} vs base {:.3})",
            set.valid_fraction(),
            base_rate
        );
    }

    #[test]
    fn presample_is_deterministic_per_seed() {
        let space = grid(&[9, 7, 5]);
        let a = presample(&space, 120, 8, 42, corner_block(&space)).unwrap();
        let b = presample(&space, 120, 8, 42, corner_block(&space)).unwrap();
        assert_eq!(a.entries(), b.entries());
        assert_eq!(a.leftover_candidates(), b.leftover_candidates());
        let c = presample(&space, 120, 8, 43, corner_block(&space)).unwrap();
        assert_ne!(
            a.entries(),
            c.entries(),
            "different seeds should explore differently"
        );
    }

    #[test]
    fn presample_exhausts_small_spaces() {
        let space = grid(&[4, 4]);
        let set = presample(&space, 100, 8, 1, |_| true).unwrap();
        assert!(set.exhausted());
        assert_eq!(set.len(), 16, "exhaustion must still evaluate everything");
        let distinct: HashSet<usize> = set.entries().iter().map(|(p, _)| p.linear).collect();
        assert_eq!(distinct.len(), 16);
        // Requesting exactly the space size is not an exhaustion.
        let full = presample(&space, 16, 8, 1, |_| true).unwrap();
        assert!(!full.exhausted());
        assert_eq!(full.len(), 16);
    }

    #[test]
    fn presample_rejects_zero_params() {
        let space = grid(&[4, 4]);
        assert!(presample(&space, 0, 8, 1, |_| true).is_err());
        assert!(presample(&space, 8, 0, 1, |_| true).is_err());
    }

    #[test]
    fn known_labels_partition_the_entries() {
        let space = grid(&[6, 6]);
        let set = presample(&space, 20, 4, 9, corner_block(&space)).unwrap();
        let (known_valid, known_invalid) = set.known_labels(space.size());
        let nv = known_valid.iter().filter(|&&b| b).count();
        let ni = known_invalid.iter().filter(|&&b| b).count();
        assert_eq!(nv, set.valid_count());
        assert_eq!(ni, set.invalid_count());
        assert!(known_valid
            .iter()
            .zip(&known_invalid)
            .all(|(&a, &b)| !(a && b)));
    }

    #[test]
    fn presample_set_round_trips_through_disk() {
        let space = grid(&[6, 6, 3]);
        let set = presample(&space, 40, 4, 5, corner_block(&space)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("presample.json");
        set.save(&path).unwrap();
        let back = PresampleSet::load(&path).unwrap();
        assert_eq!(back.entries(), set.entries());
        assert_eq!(back.space_hash(), set.space_hash());
        assert_eq!(back.exhausted(), set.exhausted());
    }

    fn batch_from(space: &SearchSpace, linears: &[usize], valid: bool) -> PresampleSet {
        PresampleSet {
            entries: linears
                .iter()
                .map(|&l| (space.to_coords(l).unwrap(), valid))
                .collect(),
            leftover_candidates: vec![],
            exhausted: false,
            n_requested: linears.len(),
            n_parallel: 1,
            seed: 0,
            space_hash: space.structural_hash(),
        }
    }

    #[test]
    fn initial_batch_caps_valid_points_and_fills_with_invalid() {
        let space = grid(&[40]);
        let mut set = batch_from(&space, &(0..30).collect::<Vec<_>>(), true);
        set.entries
            .extend(batch_from(&space, &(30..40).collect::<Vec<_>>(), false).entries.iter().cloned());
        let b = select_initial_batch(&set, 20, 12, 7).unwrap();
        assert_eq!(b.valid_count, 12);
        assert_eq!(b.invalid_count, 8);
        assert_eq!(b.points.len(), 20);
        // Scarce valid points: take them all, top up with invalid.
        let mut set2 = batch_from(&space, &[0, 1, 2], true);
        set2.entries
            .extend(batch_from(&space, &(10..40).collect::<Vec<_>>(), false).entries.iter().cloned());
        let b2 = select_initial_batch(&set2, 20, 12, 7).unwrap();
        assert_eq!(b2.valid_count, 3);
        assert_eq!(b2.invalid_count, 17);
    }

    #[test]
    fn initial_batch_never_exceeds_available_points() {
        let space = grid(&[10]);
        let set = batch_from(&space, &[1, 3, 5], true);
        let b = select_initial_batch(&set, 50, 25, 0).unwrap();
        assert_eq!(b.points.len(), 3);
        assert_eq!(b.valid_count, 3);
        assert_eq!(b.invalid_count, 0);
    }

    #[test]
    fn farthest_point_picks_maximize_min_distance_stepwise() {
        let space = grid(&[16, 16]);
        let set = batch_from(&space, &(0..space.size()).step_by(5).collect::<Vec<_>>(), true);
        let candidates = set.valid_points();
        let b = select_initial_batch(&set, 6, 6, 123).unwrap();
        assert_eq!(b.points.len(), 6);
        // Re-verify the greedy invariant: each pick (after the first) is at
        // least as far from the earlier picks as any unpicked candidate.
        for step in 1..b.points.len() {
            let chosen = &b.points[step];
            let picked = &b.points[..step];
            let d_chosen = picked
                .iter()
                .map(|p| manhattan_distance(p, chosen).unwrap())
                .min()
                .unwrap();
            let chosen_set: HashSet<usize> =
                b.points[..=step].iter().map(|p| p.linear).collect();
            for cand in &candidates {
                if chosen_set.contains(&cand.linear) {
                    continue;
                }
                let d_cand = picked
                    .iter()
                    .map(|p| manhattan_distance(p, cand).unwrap())
                    .min()
                    .unwrap();
                assert!(
                    d_cand <= d_chosen,
                    "step {step}: candidate {} (d={d_cand}) beats pick {} (d={d_chosen})",
                    cand.linear,
                    chosen.linear
                );
            }
        }
    }

    #[test]
    fn farthest_point_is_near_optimal_k_center() {
        // Greedy farthest-point is a 2-approximation of the optimal k-center
        // radius; brute-force the optimum on a small instance and compare.
        let space = grid(&[12, 12]);
        let linears: Vec<usize> = vec![0, 3, 17, 40, 55, 77, 90, 101, 120, 143];
        let set = batch_from(&space, &linears, true);
        let candidates = set.valid_points();
        let k = 3;

        let radius = |centers: &[&ConfigIndex]| -> u64 {
            candidates
                .iter()
                .map(|p| {
                    centers
                        .iter()
                        .map(|c| manhattan_distance(p, c).unwrap())
                        .min()
                        .unwrap()
                })
                .max()
                .unwrap()
        };
        // Optimal radius by exhaustive subset enumeration.
        let n = candidates.len();
        let mut best_radius = u64::MAX;
        for i in 0..n {
            for j in (i + 1)..n {
                for l in (j + 1)..n {
                    let r = radius(&[candidates[i], candidates[j], candidates[l]]);
                    best_radius = best_radius.min(r);
                }
            }
        }
        for seed in 0..10 {
            let b = select_initial_batch(&set, k, k, seed).unwrap();
            let picked: Vec<&ConfigIndex> = b.points.iter().collect();
            let r = radius(&picked);
            assert!(
                r <= 2 * best_radius,
                "greedy radius {r} exceeds 2x optimal {best_radius} (seed {seed})"
            );
        }
    }

    #[test]
    fn initial_batch_rejects_empty_presample() {
        let space = grid(&[4]);
        let set = PresampleSet {
            entries: vec![],
            leftover_candidates: vec![],
            exhausted: false,
            n_requested: 0,
            n_parallel: 1,
            seed: 0,
            space_hash: space.structural_hash(),
        };
        assert!(select_initial_batch(&set, 10, 5, 0).is_err());
        let some = batch_from(&space, &[0], true);
        assert!(select_initial_batch(&some, 0, 5, 0).is_err());
    }
}
