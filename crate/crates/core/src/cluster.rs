//! Connected-component analysis of validity over the tuning grid.
//!
//! Two valid configurations are connected when they sit at Manhattan distance
//! 1 (one knob, one menu step). The summary compares the real component
//! structure against a label-shuffled control: the same number of valid
//! labels scattered uniformly over the grid. A largest real component far
//! above the shuffled distribution is evidence that validity is spatially
//! clustered rather than noise.

use rand::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::metrics::quantile_sorted;
use crate::space::SearchSpace;
use crate::Result;

/// Component structure of the valid region, plus the shuffled control.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphSummary {
    pub workload_id: String,
    pub n_points: usize,
    pub n_valid: usize,
    /// Number of connected components among valid points.
    pub component_count: usize,
    /// Size of the largest valid component (0 when nothing is valid).
    pub largest_component: usize,
    /// `(component size, how many components have that size)`, ascending.
    pub size_histogram: Vec<(usize, usize)>,
    /// Largest-component size of each label-shuffled control, in shuffle
    /// order (shuffle `i` is seeded from `seed + i + 1`).
    pub shuffle_largest: Vec<usize>,
}

impl GraphSummary {
    /// Quantile of the shuffled largest-component sizes (linear
    /// interpolation). `None` when no shuffles were run.
    pub fn shuffle_quantile(&self, q: f64) -> Option<f64> {
        if self.shuffle_largest.is_empty() {
            return None;
        }
        let mut sorted: Vec<f64> = self.shuffle_largest.iter().map(|&v| v as f64).collect();
        sorted.sort_by(f64::total_cmp);
        Some(quantile_sorted(&sorted, q))
    }
}

/// Union-find with path halving and union by size.
struct DisjointSet {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet { parent: (0..n as u32).collect(), size: vec![1; n] }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            self.parent[x as usize] = self.parent[self.parent[x as usize] as usize];
            x = self.parent[x as usize];
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
    }
}

/// Visit every grid edge `(p, q)` with both endpoints valid, exactly once.
///
/// Scans points in linear order with an odometer over coordinates and only
/// looks at the `+1` step per knob, so each undirected edge appears once.
fn for_each_valid_edge(space: &SearchSpace, valid: &[bool], mut f: impl FnMut(usize, usize)) {
    let cards: Vec<usize> = space.knobs().iter().map(|k| k.cardinality()).collect();
    let strides = space.strides();
    let mut coords = vec![0usize; cards.len()];
    for linear in 0..space.size() {
        if valid[linear] {
            for k in 0..cards.len() {
                if coords[k] + 1 < cards[k] {
                    let q = linear + strides[k];
                    if valid[q] {
                        f(linear, q);
                    }
                }
            }
        }
        // Advance the odometer (least significant digit is the last knob).
        for k in (0..cards.len()).rev() {
            coords[k] += 1;
            if coords[k] < cards[k] {
                break;
            }
            coords[k] = 0;
        }
    }
}

/// Component sizes of the valid region, descending.
fn component_sizes(space: &SearchSpace, valid: &[bool]) -> Vec<usize> {
    let mut ds = DisjointSet::new(space.size());
    for_each_valid_edge(space, valid, |p, q| ds.union(p as u32, q as u32));
    let mut count = std::collections::HashMap::new();
    for linear in 0..space.size() {
        if valid[linear] {
            let root = ds.find(linear as u32);
            *count.entry(root).or_insert(0usize) += 1;
        }
    }
    let mut sizes: Vec<usize> = count.into_values().collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

/// Analyze validity clustering and run `n_shuffles` label-shuffled controls.
///
/// `valid[i]` labels the point with linear index `i`. Shuffle `i` permutes
/// the labels with an RNG seeded from `seed + i + 1`, so results do not
/// depend on thread count or scheduling.
pub fn validity_graph(
    space: &SearchSpace,
    valid: &[bool],
    n_shuffles: usize,
    seed: u64,
) -> Result<GraphSummary> {
    if valid.len() != space.size() {
        return Err(Error::LengthMismatch {
            context: "validity labels",
            expected: space.size(),
            actual: valid.len(),
        });
    }
    let sizes = component_sizes(space, valid);
    let mut size_histogram = std::collections::BTreeMap::new();
    for &s in &sizes {
        *size_histogram.entry(s).or_insert(0usize) += 1;
    }
    let shuffle_largest: Vec<usize> = {
        use rayon::prelude::*;
        (0..n_shuffles)
            .into_par_iter()
            .map(|i| {
                let mut rng = StdRng::seed_from_u64(seed.wrapping_add(i as u64 + 1));
                let mut labels = valid.to_vec();
                labels.shuffle(&mut rng);
                component_sizes(space, &labels).first().copied().unwrap_or(0)
            })
            .collect()
    };
    Ok(GraphSummary {
        workload_id: space.workload_id().to_string(),
        n_points: space.size(),
        n_valid: valid.iter().filter(|&&v| v).count(),
        component_count: sizes.len(),
        largest_component: sizes.first().copied().unwrap_or(0),
        size_histogram: size_histogram.into_iter().collect(),
        shuffle_largest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Knob;

    fn grid(cards: &[usize]) -> SearchSpace {
        let knobs: Vec<Knob> = cards
            .iter()
            .enumerate()
            .map(|(i, &c)| Knob::other_option(format!("k{i}"), (0..c as u64).collect()).unwrap())
            .collect();
        SearchSpace::new("grid", knobs).unwrap()
    }

    #[test]
    fn checkerboard_has_only_singletons() {
        // On a 4x4 grid, valid iff (x + y) even: neighbours always differ in
        // parity, so no valid-valid edge exists.
        let s = grid(&[4, 4]);
        let valid: Vec<bool> = (0..s.size())
            .map(|lin| {
                let p = s.to_coords(lin).unwrap();
                (p.coords[0] + p.coords[1]) % 2 == 0
            })
            .collect();
        let g = validity_graph(&s, &valid, 0, 7).unwrap();
        assert_eq!(g.n_valid, 8);
        assert_eq!(g.component_count, 8);
        assert_eq!(g.largest_component, 1);
        assert_eq!(g.size_histogram, vec![(1, 8)]);
    }

    #[test]
    fn solid_block_is_one_component() {
        // Valid iff both coords < 3 on a 5x5 grid: a single 3x3 block.
        let s = grid(&[5, 5]);
        let valid: Vec<bool> = (0..s.size())
            .map(|lin| {
                let p = s.to_coords(lin).unwrap();
                p.coords[0] < 3 && p.coords[1] < 3
            })
            .collect();
        let g = validity_graph(&s, &valid, 0, 7).unwrap();
        assert_eq!(g.component_count, 1);
        assert_eq!(g.largest_component, 9);
    }

    #[test]
    fn two_blocks_separated_by_gap() {
        // 1-D menu of 7: valid {0,1} and {4,5,6} -> components of 2 and 3.
        let s = grid(&[7]);
        let valid = vec![true, true, false, false, true, true, true];
        let g = validity_graph(&s, &valid, 0, 7).unwrap();
        assert_eq!(g.component_count, 2);
        assert_eq!(g.largest_component, 3);
        assert_eq!(g.size_histogram, vec![(2, 1), (3, 1)]);
    }

    #[test]
    fn shuffles_preserve_valid_count_and_are_seed_deterministic() {
        let s = grid(&[6, 6, 4]);
        // A compact valid block of 24 points.
        let valid: Vec<bool> = (0..s.size())
            .map(|lin| {
                let p = s.to_coords(lin).unwrap();
                p.coords[0] < 3 && p.coords[1] < 2 && p.coords[2] < 4
            })
            .collect();
        let a = validity_graph(&s, &valid, 20, 99).unwrap();
        let b = validity_graph(&s, &valid, 20, 99).unwrap();
        assert_eq!(a.shuffle_largest, b.shuffle_largest);
        assert_eq!(a.shuffle_largest.len(), 20);
        // Every shuffle keeps the number of valid labels, so no control can
        // exceed the total valid count.
        assert!(a.shuffle_largest.iter().all(|&l| l >= 1 && l <= a.n_valid));
        // The block is maximally clustered; controls scatter the same mass.
        assert_eq!(a.largest_component, 24);
        let p90 = a.shuffle_quantile(0.9).unwrap();
        assert!(
            (a.largest_component as f64) > p90,
            "compact block should beat shuffled p90 ({p90})"
        );
    }

    #[test]
    fn summary_is_invariant_under_knob_reordering() {
        // Permuting knobs (and labels consistently) must not change any
        // structural quantity.
        let s1 = grid(&[4, 3, 2]);
        let s2 = grid(&[2, 4, 3]);
        let pred = |a: usize, b: usize, c: usize| a + b + c < 4 && a != 2;
        let v1: Vec<bool> = (0..s1.size())
            .map(|lin| {
                let p = s1.to_coords(lin).unwrap();
                pred(p.coords[0], p.coords[1], p.coords[2])
            })
            .collect();
        let v2: Vec<bool> = (0..s2.size())
            .map(|lin| {
                let p = s2.to_coords(lin).unwrap();
                pred(p.coords[1], p.coords[2], p.coords[0])
            })
            .collect();
        let g1 = validity_graph(&s1, &v1, 0, 1).unwrap();
        let g2 = validity_graph(&s2, &v2, 0, 1).unwrap();
        assert_eq!(g1.n_valid, g2.n_valid);
        assert_eq!(g1.component_count, g2.component_count);
        assert_eq!(g1.largest_component, g2.largest_component);
        assert_eq!(g1.size_histogram, g2.size_histogram);
    }

    #[test]
    fn wrong_label_length_is_rejected() {
        let s = grid(&[3, 3]);
        assert!(validity_graph(&s, &[true; 5], 0, 1).is_err());
    }
}
