//! Validity-aware auto-tuning over discrete loop-optimization spaces.
//!
//! The crate models the full loop of a surrogate-driven auto-tuner against a
//! synthetic accelerator:
//!
//! - [`space`]: knobs, Cartesian tuning spaces, linear indexing, adjacency;
//! - [`oracle`]: deterministic validity + throughput measurements and
//!   exhaustive ground-truth tables;
//! - [`cluster`]: connected-component analysis of where valid points live;
//! - [`surrogate`]: a from-scratch gradient-boosted-tree regressor over
//!   configuration features;
//! - [`metrics`]: ranking quality (pairwise accuracy, precision@n, nDCG@n)
//!   and run statistics;
//! - [`sampler`]: validity-directed presampling and farthest-point batch
//!   selection;
//! - [`tuner`]: the epoch loop (fit, simulated-annealing batch proposal,
//!   measure) in baseline and enhanced modes;
//! - [`study`]: controlled valid-ratio model studies;
//! - [`harness`]: multi-run experiment plans with resumable logs;
//! - [`report`]: CSV/JSON/SVG emission;
//! - [`fixtures`]: the built-in 13-workload suite with calibrated budgets.

pub mod cluster;
pub mod error;
pub mod fixtures;
pub mod harness;
pub mod metrics;
pub mod oracle;
pub mod report;
pub mod sampler;
pub mod space;
pub mod study;
pub mod surrogate;
pub mod tuner;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
