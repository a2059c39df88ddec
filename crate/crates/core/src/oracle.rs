//! Synthetic, deterministic measurement oracle for conv2d-style workloads on
//! an accelerator with fixed on-chip buffers.
//!
//! The oracle plays the role real hardware plays in an auto-tuner: it decides
//! whether a configuration compiles/fits (validity) and how fast it runs
//! (throughput). Validity is a hard constraint system — tile footprints must
//! fit the input/weight/accumulator buffers, and the two innermost loop
//! orders additionally require a small channel-tile product. Throughput is an
//! analytical latency model (DMA setup per tile + compute at an effective
//! utilization). Both are pure functions of (workload, budget,
//! configuration): repeated measurements are bit-identical.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::space::{ConfigIndex, Configuration, Knob, SearchSpace};
use crate::Result;

/// Channels are laid out in hardware blocks of this many lanes; channel tiling
/// operates on whole blocks.
pub const CHANNEL_BLOCK: u64 = 16;

/// Largest space that may be measured exhaustively by default.
pub const MAX_EXHAUSTIVE: usize = 200_000;

/// A conv2d workload shape (NCHW, square strides/pads per axis).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub id: String,
    pub batch: u64,
    pub channel_out: u64,
    pub image_h: u64,
    pub image_w: u64,
    pub kernel_h: u64,
    pub kernel_w: u64,
    pub channel_in: u64,
    pub stride_h: u64,
    pub stride_w: u64,
    pub pad_h: u64,
    pub pad_w: u64,
}

impl WorkloadSpec {
    /// Output spatial dimensions: `(dim + 2*pad - kernel) / stride + 1`.
    ///
    /// Errors when the shape yields an empty output.
    pub fn out_dims(&self) -> Result<(u64, u64)> {
        self.validate()?;
        let oh = (self.image_h + 2 * self.pad_h).checked_sub(self.kernel_h);
        let ow = (self.image_w + 2 * self.pad_w).checked_sub(self.kernel_w);
        match (oh, ow) {
            (Some(h), Some(w)) => Ok((h / self.stride_h + 1, w / self.stride_w + 1)),
            _ => Err(Error::EmptyOutput {
                workload: self.id.clone(),
                out_h: (self.image_h + 2 * self.pad_h) as i64 - self.kernel_h as i64,
                out_w: (self.image_w + 2 * self.pad_w) as i64 - self.kernel_w as i64,
            }),
        }
    }

    /// Input/output channels in whole hardware blocks (at least 1).
    pub fn channel_blocks(&self) -> (u64, u64) {
        ((self.channel_in / CHANNEL_BLOCK).max(1), (self.channel_out / CHANNEL_BLOCK).max(1))
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let positive: [(&str, u64); 8] = [
            ("batch", self.batch),
            ("channel_out", self.channel_out),
            ("image_h", self.image_h),
            ("image_w", self.image_w),
            ("kernel_h", self.kernel_h),
            ("kernel_w", self.kernel_w),
            ("channel_in", self.channel_in),
            ("stride", self.stride_h.min(self.stride_w)),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidParam {
                    name: "workload",
                    reason: format!("{name} must be positive (workload {})", self.id),
                });
            }
        }
        Ok(())
    }
}

/// On-chip resources of the modeled accelerator.
///
/// The three buffer sizes are the calibration surface: scaling them moves the
/// validity ratio of a space up or down without touching its structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareBudget {
    pub input_buffer_bytes: u64,
    pub weight_buffer_bytes: u64,
    pub accum_buffer_bytes: u64,
    /// Bytes per input/weight element.
    pub elem_bytes: u64,
    /// Bytes per accumulator element.
    pub accum_elem_bytes: u64,
    /// MAC lanes per cycle; also bounds the channel-tile product for the
    /// reordered loop variants.
    pub compute_lanes: u64,
    /// Fixed DMA setup cost charged once per tile.
    pub dma_setup_cycles: u64,
}

impl Default for HardwareBudget {
    fn default() -> Self {
        HardwareBudget {
            input_buffer_bytes: 32 * 1024,
            weight_buffer_bytes: 256 * 1024,
            accum_buffer_bytes: 128 * 1024,
            elem_bytes: 1,
            accum_elem_bytes: 4,
            compute_lanes: 16,
            dma_setup_cycles: 256,
        }
    }
}

impl HardwareBudget {
    /// Same budget with the three buffer sizes scaled by `factor`
    /// (proportions preserved, each at least one byte).
    pub fn with_buffer_scale(&self, factor: f64) -> Self {
        let scale = |b: u64| ((b as f64 * factor).round() as u64).max(1);
        HardwareBudget {
            input_buffer_bytes: scale(self.input_buffer_bytes),
            weight_buffer_bytes: scale(self.weight_buffer_bytes),
            accum_buffer_bytes: scale(self.accum_buffer_bytes),
            ..self.clone()
        }
    }
}

/// Outcome of one (noise-free) measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementResult {
    pub valid: bool,
    /// Throughput; exactly 0.0 for invalid configurations.
    pub gflops: f64,
}

/// Build the tuning space for a workload.
///
/// Knob order is fixed (most significant first): `tile_b`, `tile_h`,
/// `tile_w`, `tile_ci`, `tile_co`, `loop_order`, `h_threads`, `oc_threads`.
/// Tile menus are the ascending divisors of the dimension they tile; channel
/// tiles count hardware blocks of [`CHANNEL_BLOCK`] lanes, and the `tile_ci`
/// menu is capped at 32 entries.
pub fn generate_space(w: &WorkloadSpec) -> Result<SearchSpace> {
    let (out_h, out_w) = w.out_dims()?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::EmptyOutput {
            workload: w.id.clone(),
            out_h: out_h as i64,
            out_w: out_w as i64,
        });
    }
    let (ci_blocks, co_blocks) = w.channel_blocks();
    let mut ci_divs = divisors(ci_blocks);
    ci_divs.truncate(32);
    let knobs = vec![
        Knob::split("tile_b", divisors(w.batch))?,
        Knob::split("tile_h", divisors(out_h))?,
        Knob::split("tile_w", divisors(out_w))?,
        Knob::split("tile_ci", ci_divs)?,
        Knob::split("tile_co", divisors(co_blocks))?,
        Knob::other_option("loop_order", vec![1, 2, 3, 4])?,
        Knob::other_option("h_threads", vec![1, 2])?,
        Knob::other_option("oc_threads", vec![1, 2])?,
    ];
    SearchSpace::new(w.id.clone(), knobs)
}

/// Ascending divisors of `n`.
fn divisors(n: u64) -> Vec<u64> {
    let mut out: Vec<u64> = (1..=n).filter(|d| n % d == 0).collect();
    out.sort_unstable();
    out
}

/// Workload + budget + generated space, bundled so measurements can resolve
/// and validate configurations against the exact space they belong to.
#[derive(Debug, Clone)]
pub struct Oracle {
    workload: WorkloadSpec,
    budget: HardwareBudget,
    space: SearchSpace,
    out_h: u64,
    out_w: u64,
    ci_blocks: u64,
    co_blocks: u64,
}

/// Resolved knob values of one configuration, in knob order.
struct Resolved {
    tile_b: u64,
    tile_h: u64,
    tile_w: u64,
    tile_ci: u64,
    tile_co: u64,
    loop_order: u64,
    h_threads: u64,
    oc_threads: u64,
}

impl Resolved {
    fn from_values(values: &[u64]) -> Result<Self> {
        if values.len() != 8 {
            return Err(Error::LengthMismatch {
                context: "configuration values",
                expected: 8,
                actual: values.len(),
            });
        }
        Ok(Resolved {
            tile_b: values[0],
            tile_h: values[1],
            tile_w: values[2],
            tile_ci: values[3],
            tile_co: values[4],
            loop_order: values[5],
            h_threads: values[6],
            oc_threads: values[7],
        })
    }
}

impl Oracle {
    pub fn new(workload: WorkloadSpec, budget: HardwareBudget) -> Result<Self> {
        let space = generate_space(&workload)?;
        let (out_h, out_w) = workload.out_dims()?;
        let (ci_blocks, co_blocks) = workload.channel_blocks();
        Ok(Oracle { workload, budget, space, out_h, out_w, ci_blocks, co_blocks })
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn workload(&self) -> &WorkloadSpec {
        &self.workload
    }

    pub fn budget(&self) -> &HardwareBudget {
        &self.budget
    }

    /// Whether `config` fits the hardware. Errors when the configuration does
    /// not belong to this oracle's space.
    pub fn check_validity(&self, config: &Configuration) -> Result<bool> {
        self.space.index_of(config)?;
        Ok(self.is_valid_values(&Resolved::from_values(&config.values)?))
    }

    /// [`Oracle::check_validity`] addressed by space point.
    pub fn is_valid_point(&self, point: &ConfigIndex) -> Result<bool> {
        let config = self.space.configuration(point)?;
        Ok(self.is_valid_values(&Resolved::from_values(&config.values)?))
    }

    /// Measure one configuration. Invalid configurations report 0.0 GFLOP/s.
    pub fn measure(&self, config: &Configuration) -> Result<MeasurementResult> {
        self.space.index_of(config)?;
        Ok(self.measure_values(&Resolved::from_values(&config.values)?))
    }

    /// [`Oracle::measure`] addressed by space point.
    pub fn measure_point(&self, point: &ConfigIndex) -> Result<MeasurementResult> {
        let config = self.space.configuration(point)?;
        Ok(self.measure_values(&Resolved::from_values(&config.values)?))
    }

    fn is_valid_values(&self, r: &Resolved) -> bool {
        let w = &self.workload;
        let b = &self.budget;
        // Input tile: the receptive field of a (tile_h x tile_w) output tile.
        let in_h = (r.tile_h - 1) * w.stride_h + w.kernel_h;
        let in_w = (r.tile_w - 1) * w.stride_w + w.kernel_w;
        let input_bytes = r.tile_b * r.tile_ci * CHANNEL_BLOCK * in_h * in_w * b.elem_bytes;
        let weight_bytes = r.tile_co * CHANNEL_BLOCK * r.tile_ci * CHANNEL_BLOCK
            * w.kernel_h
            * w.kernel_w
            * b.elem_bytes;
        let accum_bytes =
            r.tile_b * r.tile_co * CHANNEL_BLOCK * r.tile_h * r.tile_w * b.accum_elem_bytes;
        if input_bytes > b.input_buffer_bytes
            || weight_bytes > b.weight_buffer_bytes
            || accum_bytes > b.accum_buffer_bytes
        {
            return false;
        }
        // The channel-major loop orders keep both channel tiles resident in
        // the MAC array; that only works up to lanes^2 block pairs.
        if r.loop_order >= 3 && r.tile_ci * r.tile_co > b.compute_lanes * b.compute_lanes {
            return false;
        }
        true
    }

    fn measure_values(&self, r: &Resolved) -> MeasurementResult {
        if !self.is_valid_values(r) {
            return MeasurementResult { valid: false, gflops: 0.0 };
        }
        let w = &self.workload;
        let b = &self.budget;
        let n_tiles = (w.batch / r.tile_b)
            * (self.out_h / r.tile_h)
            * (self.out_w / r.tile_w)
            * (self.ci_blocks / r.tile_ci)
            * (self.co_blocks / r.tile_co);
        let macs = (w.batch * self.out_h * self.out_w) as f64
            * (self.ci_blocks * CHANNEL_BLOCK) as f64
            * (self.co_blocks * CHANNEL_BLOCK) as f64
            * (w.kernel_h * w.kernel_w) as f64;
        // Pipeline fill: larger tiles amortize the MAC array's ramp-up.
        let tile_volume = (r.tile_b * r.tile_h * r.tile_w * r.tile_ci * r.tile_co) as f64;
        let fill = tile_volume / (tile_volume + 4.0 * b.compute_lanes as f64);
        let order_eff = match r.loop_order {
            1 => 0.88,
            2 => 1.00,
            3 => 0.97,
            _ => 0.82,
        };
        // Threading pays off only when the threaded axis has >= 2 tiles to
        // hand out; otherwise the idle thread costs synchronization.
        let h_eff = thread_eff(r.h_threads, self.out_h / r.tile_h);
        let oc_eff = thread_eff(r.oc_threads, self.co_blocks / r.tile_co);
        let util = fill * order_eff * h_eff * oc_eff;
        let gflops = model_gflops(
            2.0 * macs,
            macs,
            n_tiles as f64,
            util,
            b.dma_setup_cycles as f64,
            b.compute_lanes as f64,
        );
        MeasurementResult { valid: true, gflops }
    }

    /// Measure every point of the space, in linear-index order.
    pub fn record_ground_truth(&self) -> Result<GroundTruthTable> {
        self.record_ground_truth_with_limit(MAX_EXHAUSTIVE)
    }

    /// [`Oracle::record_ground_truth`] with an explicit size cap.
    pub fn record_ground_truth_with_limit(&self, limit: usize) -> Result<GroundTruthTable> {
        use rayon::prelude::*;
        let size = self.space.size();
        if size > limit {
            return Err(Error::ExhaustiveBudgetExceeded { size, limit });
        }
        let results: Vec<MeasurementResult> = (0..size)
            .into_par_iter()
            .map(|linear| {
                // Points are valid by construction of the range.
                let point = self.space.to_coords(linear).expect("in range");
                self.measure_point(&point).expect("point belongs to space")
            })
            .collect();
        GroundTruthTable::from_results(
            self.space.workload_id().to_string(),
            self.space.structural_hash(),
            results,
        )
    }
}

fn thread_eff(threads: u64, tiles_on_axis: u64) -> f64 {
    if threads == 2 {
        if tiles_on_axis >= 2 {
            1.0
        } else {
            0.70
        }
    } else {
        0.78
    }
}

/// Analytical throughput: `flops / (dma_setup * n_tiles + macs / (lanes * util))`.
///
/// Strictly increasing in `util` and strictly decreasing in `n_tiles`, so a
/// configuration that needs fewer tiles at equal utilization is strictly
/// faster.
pub(crate) fn model_gflops(
    flops: f64,
    macs: f64,
    n_tiles: f64,
    util: f64,
    dma_setup_cycles: f64,
    lanes: f64,
) -> f64 {
    let latency_cycles = dma_setup_cycles * n_tiles + macs / (lanes * util);
    flops / latency_cycles
}

/// Exhaustive measurements for one space, addressable by linear index.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthTable {
    workload_id: String,
    space_hash: u64,
    valid: Vec<bool>,
    gflops: Vec<f64>,
    valid_count: usize,
    best_linear: usize,
    best_gflops: f64,
}

/// On-disk schema of a ground-truth table.
#[derive(Serialize, Deserialize)]
struct TruthFile {
    workload_id: String,
    /// Hex to survive JSON readers that truncate u64 to f64.
    space_hash: String,
    size: usize,
    valid: Vec<u8>,
    gflops: Vec<f64>,
}

impl GroundTruthTable {
    fn from_results(
        workload_id: String,
        space_hash: u64,
        results: Vec<MeasurementResult>,
    ) -> Result<Self> {
        if results.is_empty() {
            return Err(Error::EmptyInput { what: "ground-truth results" });
        }
        let valid: Vec<bool> = results.iter().map(|r| r.valid).collect();
        let gflops: Vec<f64> = results.iter().map(|r| r.gflops).collect();
        Self::from_parts(workload_id, space_hash, valid, gflops)
    }

    fn from_parts(
        workload_id: String,
        space_hash: u64,
        valid: Vec<bool>,
        gflops: Vec<f64>,
    ) -> Result<Self> {
        if valid.len() != gflops.len() {
            return Err(Error::LengthMismatch {
                context: "ground-truth table",
                expected: valid.len(),
                actual: gflops.len(),
            });
        }
        for (i, (&v, &g)) in valid.iter().zip(&gflops).enumerate() {
            let consistent = if v { g > 0.0 && g.is_finite() } else { g == 0.0 };
            if !consistent {
                return Err(Error::TruthMismatch {
                    reason: format!("entry {i}: valid={v} but gflops={g}"),
                });
            }
        }
        let valid_count = valid.iter().filter(|&&v| v).count();
        let (best_linear, best_gflops) = gflops
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then_with(|| b.0.cmp(&a.0)))
            .map(|(i, &g)| (i, g))
            .unwrap_or((0, 0.0));
        Ok(GroundTruthTable {
            workload_id,
            space_hash,
            valid,
            gflops,
            valid_count,
            best_linear,
            best_gflops,
        })
    }

    pub fn workload_id(&self) -> &str {
        &self.workload_id
    }

    pub fn size(&self) -> usize {
        self.valid.len()
    }

    pub fn valid_count(&self) -> usize {
        self.valid_count
    }

    pub fn valid_ratio(&self) -> f64 {
        self.valid_count as f64 / self.valid.len() as f64
    }

    /// Validity labels by linear index (input to clustering analysis).
    pub fn validity_labels(&self) -> &[bool] {
        &self.valid
    }

    /// Measured throughput by linear index (0.0 at invalid points).
    pub fn throughputs(&self) -> &[f64] {
        &self.gflops
    }

    pub fn is_valid(&self, linear: usize) -> Result<bool> {
        self.valid
            .get(linear)
            .copied()
            .ok_or(Error::IndexOutOfRange { index: linear, size: self.valid.len() })
    }

    pub fn gflops_at(&self, linear: usize) -> Result<f64> {
        self.gflops
            .get(linear)
            .copied()
            .ok_or(Error::IndexOutOfRange { index: linear, size: self.gflops.len() })
    }

    pub fn lookup(&self, point: &ConfigIndex) -> Result<MeasurementResult> {
        Ok(MeasurementResult {
            valid: self.is_valid(point.linear)?,
            gflops: self.gflops_at(point.linear)?,
        })
    }

    /// `(linear index, gflops)` of the best configuration; ties break toward
    /// the lower index.
    pub fn best(&self) -> (usize, f64) {
        (self.best_linear, self.best_gflops)
    }

    /// Whether this table was measured over `space` (same id, structure, and
    /// point count).
    pub fn matches(&self, space: &SearchSpace) -> bool {
        self.workload_id == space.workload_id()
            && self.space_hash == space.structural_hash()
            && self.valid.len() == space.size()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = TruthFile {
            workload_id: self.workload_id.clone(),
            space_hash: format!("{:016x}", self.space_hash),
            size: self.valid.len(),
            valid: self.valid.iter().map(|&v| u8::from(v)).collect(),
            gflops: self.gflops.clone(),
        };
        let text = serde_json::to_string(&file).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: TruthFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if file.valid.len() != file.size || file.gflops.len() != file.size {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                reason: format!(
                    "declared size {} but {} validity labels / {} measurements",
                    file.size,
                    file.valid.len(),
                    file.gflops.len()
                ),
            });
        }
        let space_hash = u64::from_str_radix(&file.space_hash, 16).map_err(|_| Error::Schema {
            path: path.to_path_buf(),
            reason: format!("space_hash `{}` is not 16 hex digits", file.space_hash),
        })?;
        Self::from_parts(
            file.workload_id,
            space_hash,
            file.valid.iter().map(|&v| v != 0).collect(),
            file.gflops,
        )
    }
}

/// Find a buffer scale for `base` so the workload's validity ratio lands near
/// `target_ratio`; returns the scaled budget and the ratio it achieves.
///
/// The ratio is monotone non-decreasing in the scale, so a bisection over
/// `[2^-10, 2^10]` converges; the space must be small enough to measure
/// exhaustively. Used offline to produce the shipped per-workload budgets.
pub fn calibrate_budget(
    workload: &WorkloadSpec,
    base: &HardwareBudget,
    target_ratio: f64,
) -> Result<(HardwareBudget, f64)> {
    if !(0.0 < target_ratio && target_ratio < 1.0) {
        return Err(Error::InvalidParam {
            name: "target_ratio",
            reason: format!("must be in (0, 1), got {target_ratio}"),
        });
    }
    let ratio_at = |scale: f64| -> Result<f64> {
        let oracle = Oracle::new(workload.clone(), base.with_buffer_scale(scale))?;
        Ok(oracle.record_ground_truth()?.valid_ratio())
    };
    let (mut lo, mut hi) = (2f64.powi(-10), 2f64.powi(10));
    let mut best = (1.0f64, f64::INFINITY); // (scale, |ratio - target|)
    for _ in 0..40 {
        let mid = (lo * hi).sqrt(); // geometric midpoint
        let ratio = ratio_at(mid)?;
        if (ratio - target_ratio).abs() < best.1 {
            best = (mid, (ratio - target_ratio).abs());
        }
        if ratio < target_ratio {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let budget = base.with_buffer_scale(best.0);
    let achieved = ratio_at(best.0)?;
    Ok((budget, achieved))
}
