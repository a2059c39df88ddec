//! Discrete tuning spaces: knobs, linear indexing, and grid adjacency.
//!
//! A space is the Cartesian product of per-knob value menus. Points are
//! addressed two ways: a coordinate vector (one menu position per knob) and a
//! linear index in mixed-radix encoding with knob 0 most significant. Both
//! views are kept together in [`ConfigIndex`] so hot paths never re-derive one
//! from the other.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

/// How a knob's values are interpreted downstream (e.g. by feature encoding).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnobKind {
    /// A tiling factor; values are positive and meaningful on a log scale.
    Split,
    /// A categorical choice; values are opaque labels.
    OtherOption,
}

/// One tunable dimension: a named, finite, duplicate-free menu of values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Knob {
    pub name: String,
    pub kind: KnobKind,
    pub values: Vec<u64>,
}

impl Knob {
    /// A tiling (split) knob. Values must be non-empty and duplicate-free.
    pub fn split(name: impl Into<String>, values: Vec<u64>) -> Result<Self> {
        Self::new(name.into(), KnobKind::Split, values)
    }

    /// A categorical knob. Values must be non-empty and duplicate-free.
    pub fn other_option(name: impl Into<String>, values: Vec<u64>) -> Result<Self> {
        Self::new(name.into(), KnobKind::OtherOption, values)
    }

    fn new(name: String, kind: KnobKind, values: Vec<u64>) -> Result<Self> {
        let knob = Knob { name, kind, values };
        knob.validate()?;
        Ok(knob)
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidKnob {
                name: self.name.clone(),
                reason: "empty value menu".into(),
            });
        }
        if self.kind == KnobKind::Split && self.values.contains(&0) {
            return Err(Error::InvalidKnob {
                name: self.name.clone(),
                reason: "split values must be positive".into(),
            });
        }
        let mut seen = self.values.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.values.len() {
            return Err(Error::InvalidKnob {
                name: self.name.clone(),
                reason: "duplicate values in menu".into(),
            });
        }
        Ok(())
    }

    pub fn cardinality(&self) -> usize {
        self.values.len()
    }

    /// Menu position of `value`, if present.
    pub fn position_of(&self, value: u64) -> Option<usize> {
        self.values.iter().position(|&v| v == value)
    }
}

/// A point of the space: coordinate vector plus its linear index.
///
/// The two encodings are redundant by construction; equality and hashing use
/// only the linear index.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigIndex {
    pub coords: Vec<usize>,
    pub linear: usize,
}

impl PartialEq for ConfigIndex {
    fn eq(&self, other: &Self) -> bool {
        self.linear == other.linear
    }
}

impl Eq for ConfigIndex {}

impl std::hash::Hash for ConfigIndex {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.linear.hash(state);
    }
}

/// A point resolved to concrete knob values (same order as the space's knobs).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Configuration {
    pub values: Vec<u64>,
}

/// Serialized form of a space: the knob list is the source of truth.
#[derive(Serialize, Deserialize)]
struct SpaceDef {
    workload_id: String,
    knobs: Vec<Knob>,
}

/// The Cartesian product of knob menus, with cached mixed-radix strides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchSpace {
    workload_id: String,
    knobs: Vec<Knob>,
    /// `strides[k]` = product of cardinalities of knobs after `k`.
    strides: Vec<usize>,
    size: usize,
}

impl SearchSpace {
    pub fn new(workload_id: impl Into<String>, knobs: Vec<Knob>) -> Result<Self> {
        let workload_id = workload_id.into();
        if knobs.is_empty() {
            return Err(Error::EmptyInput { what: "knob list" });
        }
        for knob in &knobs {
            knob.validate()?;
        }
        let mut strides = vec![1usize; knobs.len()];
        for k in (0..knobs.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1]
                .checked_mul(knobs[k + 1].cardinality())
                .ok_or(Error::InvalidCoords { reason: "space size overflows usize".into() })?;
        }
        let size = strides[0]
            .checked_mul(knobs[0].cardinality())
            .ok_or(Error::InvalidCoords { reason: "space size overflows usize".into() })?;
        Ok(SearchSpace { workload_id, knobs, strides, size })
    }

    pub fn workload_id(&self) -> &str {
        &self.workload_id
    }

    pub fn knobs(&self) -> &[Knob] {
        &self.knobs
    }

    pub fn num_knobs(&self) -> usize {
        self.knobs.len()
    }

    /// Total number of points (product of knob cardinalities).
    pub fn size(&self) -> usize {
        self.size
    }

    /// Mixed-radix strides (`strides[k]` multiplies coordinate `k`).
    pub(crate) fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Decode a linear index into a [`ConfigIndex`].
    ///
    /// Knob 0 is the most significant digit of the mixed-radix encoding.
    pub fn to_coords(&self, linear: usize) -> Result<ConfigIndex> {
        if linear >= self.size {
            return Err(Error::IndexOutOfRange { index: linear, size: self.size });
        }
        let mut coords = Vec::with_capacity(self.knobs.len());
        let mut rest = linear;
        for stride in &self.strides {
            coords.push(rest / stride);
            rest %= stride;
        }
        Ok(ConfigIndex { coords, linear })
    }

    /// Encode a coordinate vector into a [`ConfigIndex`].
    pub fn from_coords(&self, coords: &[usize]) -> Result<ConfigIndex> {
        if coords.len() != self.knobs.len() {
            return Err(Error::LengthMismatch {
                context: "coordinate vector",
                expected: self.knobs.len(),
                actual: coords.len(),
            });
        }
        let mut linear = 0usize;
        for (k, (&c, knob)) in coords.iter().zip(&self.knobs).enumerate() {
            if c >= knob.cardinality() {
                return Err(Error::InvalidCoords {
                    reason: format!(
                        "coordinate {c} out of range for knob `{}` (cardinality {})",
                        knob.name,
                        knob.cardinality()
                    ),
                });
            }
            linear += c * self.strides[k];
        }
        Ok(ConfigIndex { coords: coords.to_vec(), linear })
    }

    /// Resolve a point to its concrete knob values.
    pub fn configuration(&self, point: &ConfigIndex) -> Result<Configuration> {
        if point.coords.len() != self.knobs.len() || point.linear >= self.size {
            return Err(Error::ConfigNotInSpace {
                reason: format!("point {:?} does not address this space", point.coords),
            });
        }
        let values = point
            .coords
            .iter()
            .zip(&self.knobs)
            .map(|(&c, knob)| knob.values[c])
            .collect();
        Ok(Configuration { values })
    }

    /// Find the point whose resolved values equal `config`.
    pub fn index_of(&self, config: &Configuration) -> Result<ConfigIndex> {
        if config.values.len() != self.knobs.len() {
            return Err(Error::ConfigNotInSpace {
                reason: format!(
                    "expected {} values, got {}",
                    self.knobs.len(),
                    config.values.len()
                ),
            });
        }
        let mut coords = Vec::with_capacity(self.knobs.len());
        for (&value, knob) in config.values.iter().zip(&self.knobs) {
            let pos = knob.position_of(value).ok_or_else(|| Error::ConfigNotInSpace {
                reason: format!("value {value} not in menu of knob `{}`", knob.name),
            })?;
            coords.push(pos);
        }
        self.from_coords(&coords)
    }

    /// All points at Manhattan distance exactly 1 (one knob moved one menu
    /// step). Enumeration order is fixed: by knob index, `-1` step before `+1`.
    pub fn neighbors(&self, point: &ConfigIndex) -> Vec<ConfigIndex> {
        let mut out = Vec::with_capacity(2 * self.knobs.len());
        for k in 0..self.knobs.len() {
            let c = point.coords[k];
            if c > 0 {
                let mut coords = point.coords.clone();
                coords[k] = c - 1;
                let linear = point.linear - self.strides[k];
                out.push(ConfigIndex { coords, linear });
            }
            if c + 1 < self.knobs[k].cardinality() {
                let mut coords = point.coords.clone();
                coords[k] = c + 1;
                let linear = point.linear + self.strides[k];
                out.push(ConfigIndex { coords, linear });
            }
        }
        out
    }

    /// Stable 64-bit structural hash (FNV-1a over id, knob names, kinds, and
    /// menus). Used to pair ground-truth tables with the space they measure.
    pub fn structural_hash(&self) -> u64 {
        let mut h = Fnv1a::new();
        h.write(self.workload_id.as_bytes());
        h.write_u64(self.knobs.len() as u64);
        for knob in &self.knobs {
            h.write(knob.name.as_bytes());
            h.write_u64(match knob.kind {
                KnobKind::Split => 0,
                KnobKind::OtherOption => 1,
            });
            h.write_u64(knob.values.len() as u64);
            for &v in &knob.values {
                h.write_u64(v);
            }
        }
        h.finish()
    }
}

impl Serialize for SearchSpace {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        SpaceDef { workload_id: self.workload_id.clone(), knobs: self.knobs.clone() }
            .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SearchSpace {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let def = SpaceDef::deserialize(deserializer)?;
        SearchSpace::new(def.workload_id, def.knobs).map_err(serde::de::Error::custom)
    }
}

/// Manhattan distance between two coordinate vectors of equal arity.
pub fn manhattan_distance(a: &ConfigIndex, b: &ConfigIndex) -> Result<u64> {
    if a.coords.len() != b.coords.len() {
        return Err(Error::LengthMismatch {
            context: "manhattan distance",
            expected: a.coords.len(),
            actual: b.coords.len(),
        });
    }
    Ok(a.coords
        .iter()
        .zip(&b.coords)
        .map(|(&x, &y)| x.abs_diff(y) as u64)
        .sum())
}

/// Minimal FNV-1a (64-bit): stable across platforms and std versions, unlike
/// `DefaultHasher`.
struct Fnv1a(u64);

impl Fnv1a {
    fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.write(&v.to_le_bytes());
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// FNV-1a digest of a byte string (stable content hashing for resume keys).
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = Fnv1a::new();
    h.write(bytes);
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space_2_3() -> SearchSpace {
        SearchSpace::new(
            "toy",
            vec![
                Knob::split("a", vec![1, 2]).unwrap(),
                Knob::other_option("b", vec![0, 1, 2]).unwrap(),
            ],
        )
        .unwrap()
    }

    fn space_2_4_3() -> SearchSpace {
        SearchSpace::new(
            "toy3",
            vec![
                Knob::split("a", vec![1, 2]).unwrap(),
                Knob::split("b", vec![1, 2, 4, 8]).unwrap(),
                Knob::other_option("c", vec![0, 1, 2]).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn size_is_product_of_cardinalities() {
        assert_eq!(space_2_3().size(), 6);
        assert_eq!(space_2_4_3().size(), 24);
    }

    #[test]
    fn knob_zero_is_most_significant() {
        // Radices {2, 3}: linear 5 = 1 * 3 + 2.
        let s = space_2_3();
        let p = s.to_coords(5).unwrap();
        assert_eq!(p.coords, vec![1, 2]);
        assert_eq!(s.from_coords(&[1, 2]).unwrap().linear, 5);
    }

    #[test]
    fn round_trip_all_points_small_space() {
        let s = space_2_4_3();
        for linear in 0..s.size() {
            let p = s.to_coords(linear).unwrap();
            assert_eq!(s.from_coords(&p.coords).unwrap().linear, linear);
        }
    }

    #[test]
    fn out_of_range_inputs_are_rejected() {
        let s = space_2_3();
        assert!(matches!(s.to_coords(6), Err(Error::IndexOutOfRange { index: 6, size: 6 })));
        assert!(s.from_coords(&[0, 3]).is_err());
        assert!(s.from_coords(&[0]).is_err());
    }

    #[test]
    fn configuration_resolves_menu_values() {
        let s = space_2_4_3();
        let p = s.from_coords(&[1, 2, 0]).unwrap();
        let c = s.configuration(&p).unwrap();
        assert_eq!(c.values, vec![2, 4, 0]);
        assert_eq!(s.index_of(&c).unwrap(), p);
    }

    #[test]
    fn index_of_rejects_foreign_values() {
        let s = space_2_4_3();
        let c = Configuration { values: vec![2, 3, 0] }; // 3 not in knob b's menu
        assert!(matches!(s.index_of(&c), Err(Error::ConfigNotInSpace { .. })));
    }

    #[test]
    fn neighbors_enumerate_unit_steps_in_order() {
        let s = space_2_4_3();
        let p = s.from_coords(&[0, 1, 2]).unwrap();
        let n: Vec<Vec<usize>> = s.neighbors(&p).into_iter().map(|q| q.coords).collect();
        // Knob 0 can only go up; knob 1 both ways; knob 2 only down.
        assert_eq!(
            n,
            vec![vec![1, 1, 2], vec![0, 0, 2], vec![0, 2, 2], vec![0, 1, 1]]
        );
    }

    #[test]
    fn neighbors_are_at_distance_one() {
        let s = space_2_4_3();
        for linear in 0..s.size() {
            let p = s.to_coords(linear).unwrap();
            for q in s.neighbors(&p) {
                assert_eq!(manhattan_distance(&p, &q).unwrap(), 1);
                // And the linear index is consistent with the coords.
                assert_eq!(s.from_coords(&q.coords).unwrap().linear, q.linear);
            }
        }
    }

    #[test]
    fn manhattan_distance_requires_equal_arity() {
        let a = ConfigIndex { coords: vec![0, 1], linear: 0 };
        let b = ConfigIndex { coords: vec![0, 1, 2], linear: 0 };
        assert!(manhattan_distance(&a, &b).is_err());
    }

    #[test]
    fn duplicate_menu_values_are_rejected() {
        assert!(Knob::split("t", vec![1, 2, 2]).is_err());
        assert!(Knob::split("t", vec![]).is_err());
        assert!(Knob::split("t", vec![0, 1]).is_err());
    }

    #[test]
    fn structural_hash_tracks_structure_not_instance() {
        let a = space_2_4_3();
        let b = space_2_4_3();
        assert_eq!(a.structural_hash(), b.structural_hash());
        let c = SearchSpace::new(
            "toy3",
            vec![
                Knob::split("a", vec![1, 2]).unwrap(),
                Knob::split("b", vec![1, 2, 4, 16]).unwrap(), // one menu value differs
                Knob::other_option("c", vec![0, 1, 2]).unwrap(),
            ],
        )
        .unwrap();
        assert_ne!(a.structural_hash(), c.structural_hash());
    }

    #[test]
    fn serde_round_trip_preserves_space() {
        let s = space_2_4_3();
        let text = serde_json::to_string(&s).unwrap();
        let back: SearchSpace = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.structural_hash(), s.structural_hash());
    }

    proptest! {
        #[test]
        fn prop_linear_coord_round_trip(
            cards in proptest::collection::vec(1usize..6, 1..6),
            seed in any::<u64>(),
        ) {
            let knobs: Vec<Knob> = cards
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    Knob::other_option(format!("k{i}"), (0..c as u64).collect()).unwrap()
                })
                .collect();
            let s = SearchSpace::new("prop", knobs).unwrap();
            let linear = (seed as usize) % s.size();
            let p = s.to_coords(linear).unwrap();
            prop_assert_eq!(s.from_coords(&p.coords).unwrap().linear, linear);
            for (k, &c) in p.coords.iter().enumerate() {
                prop_assert!(c < cards[k]);
            }
        }

        #[test]
        fn prop_neighbor_count_matches_interior_rule(
            cards in proptest::collection::vec(1usize..5, 1..5),
            seed in any::<u64>(),
        ) {
            let knobs: Vec<Knob> = cards
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    Knob::other_option(format!("k{i}"), (0..c as u64).collect()).unwrap()
                })
                .collect();
            let s = SearchSpace::new("prop", knobs).unwrap();
            let linear = (seed as usize) % s.size();
            let p = s.to_coords(linear).unwrap();
            let expected: usize = p
                .coords
                .iter()
                .zip(&cards)
                .map(|(&c, &card)| usize::from(c > 0) + usize::from(c + 1 < card))
                .sum();
            prop_assert_eq!(s.neighbors(&p).len(), expected);
        }
    }
}
