//! The built-in workload suite: thirteen convolution shapes with per-workload
//! hardware budgets calibrated so that each search space's valid ratio lands
//! near a published reference value.
//!
//! The manifest (`fixtures/suite.json`) and the golden ground-truth tables for
//! the two smallest workloads are generated artifacts, frozen into the repo
//! and embedded at compile time. Regenerate them with the `#[ignore]`d tests
//! in this module whenever the cost model or calibration changes:
//!
//! ```text
//! cargo test -p valitune --release fixtures:: -- --ignored
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::oracle::{HardwareBudget, WorkloadSpec};
use crate::Result;

/// Manifest schema version; bump when the layout changes.
pub const SUITE_VERSION: &str = "1";

/// The thirteen workload IDs shipped with the suite, ascending.
pub const SUITE_IDS: [u32; 13] = [3, 5, 8, 17, 42, 48, 53, 59, 76, 78, 92, 106, 107];

/// One suite workload: its shape, its calibrated budget, and the valid-ratio
/// band its recorded ground truth must fall into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub id: u32,
    pub workload: WorkloadSpec,
    pub budget: HardwareBudget,
    /// Valid ratio the budget was calibrated toward.
    pub target_ratio: f64,
    /// Ratio the calibrated budget actually achieves (frozen at generation).
    pub achieved_ratio: f64,
    /// Acceptable `[lo, hi]` for the recorded ratio; a regression outside it
    /// means the cost model drifted.
    pub ratio_band: (f64, f64),
}

/// The versioned collection of all suite workloads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    version: String,
    entries: Vec<SuiteEntry>,
}

impl SuiteManifest {
    /// The manifest compiled into the library.
    pub fn builtin() -> SuiteManifest {
        let manifest: SuiteManifest = serde_json::from_str(include_str!("../fixtures/suite.json"))
            .expect("embedded suite manifest parses");
        manifest.validate().expect("embedded suite manifest is well-formed");
        manifest
    }

    pub fn load(path: &Path) -> Result<SuiteManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: SuiteManifest = serde_json::from_str(&text).map_err(|e| {
            Error::Schema { path: path.to_path_buf(), reason: e.to_string() }
        })?;
        manifest.validate().map_err(|e| match e {
            Error::Schema { reason, .. } => Error::Schema { path: path.to_path_buf(), reason },
            other => other,
        })?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    fn validate(&self) -> Result<()> {
        let schema_err = |reason: String| Error::Schema {
            path: std::path::PathBuf::from("suite manifest"),
            reason,
        };
        if self.version != SUITE_VERSION {
            return Err(schema_err(format!(
                "version: expected {SUITE_VERSION:?}, got {:?}",
                self.version
            )));
        }
        let ids: Vec<u32> = self.entries.iter().map(|e| e.id).collect();
        if ids != SUITE_IDS {
            return Err(schema_err(format!("entries: expected ids {SUITE_IDS:?}, got {ids:?}")));
        }
        for entry in &self.entries {
            if entry.workload.id != workload_name(entry.id) {
                return Err(schema_err(format!(
                    "workload.id: expected {:?}, got {:?}",
                    workload_name(entry.id),
                    entry.workload.id
                )));
            }
            let (lo, hi) = entry.ratio_band;
            if !(0.0 < lo && lo <= hi && hi < 1.0) {
                return Err(schema_err(format!(
                    "ratio_band: bad band [{lo}, {hi}] for workload {}",
                    entry.id
                )));
            }
            entry.workload.validate()?;
        }
        Ok(())
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn entries(&self) -> &[SuiteEntry] {
        &self.entries
    }

    pub fn entry(&self, id: u32) -> Result<&SuiteEntry> {
        self.entries.iter().find(|e| e.id == id).ok_or_else(|| Error::Schema {
            path: std::path::PathBuf::from("suite manifest"),
            reason: format!("missing workload {id}"),
        })
    }
}

/// Canonical string ID for a numeric workload ID.
pub fn workload_name(id: u32) -> String {
    format!("wl_{id}")
}

/// The raw suite shapes and the valid ratios their budgets are calibrated
/// toward: `(id, workload, target_ratio)`.
pub fn suite_shapes() -> Vec<(u32, WorkloadSpec, f64)> {
    // (id, batch, c_out, img_h, img_w, k_h, k_w, c_in, stride, pad, ratio)
    let rows: [(u32, u64, u64, u64, u64, u64, u64, u64, u64, u64, f64); 13] = [
        (3, 1, 32, 79, 341, 10, 5, 32, 2, 0, 0.060),
        (5, 4, 32, 79, 341, 10, 5, 32, 2, 0, 0.068),
        (8, 1, 64, 12, 120, 3, 3, 32, 1, 1, 0.067),
        (17, 1, 256, 56, 56, 3, 3, 128, 1, 1, 0.027),
        (42, 1, 64, 56, 56, 3, 3, 64, 1, 1, 0.047),
        (48, 1, 1024, 14, 14, 1, 1, 256, 2, 0, 0.151),
        (53, 2, 128, 28, 28, 3, 3, 128, 1, 1, 0.035),
        (59, 2, 512, 7, 7, 1, 1, 2048, 2, 3, 0.008),
        (76, 1, 64, 112, 112, 1, 1, 64, 1, 0, 0.088),
        (78, 1, 64, 56, 56, 1, 1, 256, 1, 0, 0.099),
        (92, 2, 64, 112, 112, 1, 1, 64, 1, 0, 0.082),
        (106, 2, 2048, 14, 14, 1, 1, 1024, 2, 0, 0.122),
        (107, 2, 512, 7, 7, 1, 1, 2048, 1, 0, 0.231),
    ];
    rows.iter()
        .map(|&(id, batch, co, ih, iw, kh, kw, ci, stride, pad, ratio)| {
            let workload = WorkloadSpec {
                id: workload_name(id),
                batch,
                channel_out: co,
                image_h: ih,
                image_w: iw,
                kernel_h: kh,
                kernel_w: kw,
                channel_in: ci,
                stride_h: stride,
                stride_w: stride,
                pad_h: pad,
                pad_w: pad,
            };
            (id, workload, ratio)
        })
        .collect()
}

/// Band of acceptable recorded ratios around a target: `[0.6x, 1.6x]`.
/// The synthetic oracle cannot hit published ratios exactly; the band checks
/// that each space keeps the right order of magnitude of valid points.
pub fn ratio_band(target: f64) -> (f64, f64) {
    (0.6 * target, 1.6 * target)
}

/// Embedded golden ground-truth tables for the two smallest suite workloads.
/// Byte-compared against freshly recorded tables in regression tests.
pub const GOLDEN_TRUTH_IDS: [u32; 2] = [3, 48];

pub fn golden_truth_bytes(id: u32) -> Option<&'static str> {
    match id {
        3 => Some(include_str!("../fixtures/truth_wl_3.json")),
        48 => Some(include_str!("../fixtures/truth_wl_48.json")),
        _ => None,
    }
}
