//! Experiment orchestration: ground-truth caching, repeated seeded tuning
//! runs with resumable JSON-lines logs, deterministic aggregation, and
//! artifact emission.
//!
//! A plan fans its runs out over a worker pool (size from the
//! `VALITUNE_WORKERS` environment variable, default: available parallelism).
//! Every run writes one log file keyed by workload, mode, and seed, with a
//! header line carrying a content hash of the run's full configuration;
//! restarting a plan reuses logs whose header matches and re-executes the
//! rest. Logs contain only deterministic data, so a run repeated with the
//! same seed produces byte-identical output, and re-running a completed plan
//! rewrites nothing.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::fixtures::SuiteEntry;
use crate::metrics::{aggregate_runs, AggregateStatistics, RunStatistics};
use crate::oracle::{GroundTruthTable, Oracle};
use crate::report::{
    aggregates_csv, box_plot_svg, convergence_band, convergence_svg, study_csv, AggregateRow,
    ConvergenceBand,
};
use crate::sampler::presample;
use crate::space::SearchSpace;
use crate::study::{controlled_ratio_study, StudyParams, StudyReport};
use crate::tuner::{run_tuning, PhaseTimings, RunRecord, TrialRecord, TunerConfig, TunerMode};
use crate::Result;

/// Environment variable overriding the worker-pool size.
pub const WORKERS_ENV: &str = "VALITUNE_WORKERS";

/// Worker count: `VALITUNE_WORKERS` when set to a positive integer, else the
/// machine's available parallelism.
pub fn worker_count() -> usize {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                return n;
            }
        }
    }
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// A full experiment: every (workload, mode) cell run `repeats` times.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub workloads: Vec<SuiteEntry>,
    /// One tuner configuration per mode; the `seed` field is overwritten
    /// with the derived per-run seed.
    pub modes: Vec<TunerConfig>,
    pub repeats: usize,
    /// Per-run seed = `base_seed + run_index`, where `run_index` enumerates
    /// (workload, mode, repeat) in row-major order.
    pub base_seed: u64,
    pub output_dir: PathBuf,
    /// Presample budget per Enhanced run: `min(presample_budget, |space|)`.
    pub presample_budget: usize,
    /// Presample batch width.
    pub n_parallel: usize,
    /// Model studies to run after tuning, per workload ID.
    pub studies: Vec<(u32, StudyParams)>,
}

impl ExperimentPlan {
    /// A plan over `workloads` with the standard two-mode comparison.
    pub fn two_mode(
        workloads: Vec<SuiteEntry>,
        template: TunerConfig,
        repeats: usize,
        base_seed: u64,
        output_dir: impl Into<PathBuf>,
    ) -> Self {
        ExperimentPlan {
            workloads,
            modes: vec![
                TunerConfig { mode: TunerMode::Baseline, ..template.clone() },
                TunerConfig { mode: TunerMode::Enhanced, ..template },
            ],
            repeats,
            base_seed,
            output_dir: output_dir.into(),
            presample_budget: 1000,
            n_parallel: 8,
            studies: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.workloads.is_empty() {
            return Err(Error::EmptyInput { what: "plan workloads" });
        }
        if self.modes.is_empty() {
            return Err(Error::EmptyInput { what: "plan modes" });
        }
        for cfg in &self.modes {
            cfg.validate()?;
        }
        for (i, a) in self.modes.iter().enumerate() {
            if self.modes[..i].iter().any(|b| b.mode == a.mode) {
                return Err(Error::InvalidParam {
                    name: "modes",
                    reason: format!("duplicate mode `{}` (log names would collide)", a.mode),
                });
            }
        }
        if self.repeats == 0 {
            return Err(Error::InvalidParam { name: "repeats", reason: "must be >= 1".into() });
        }
        if self.presample_budget == 0 || self.n_parallel == 0 {
            return Err(Error::InvalidParam {
                name: "presample_budget/n_parallel",
                reason: "must be >= 1".into(),
            });
        }
        for (id, params) in &self.studies {
            if !self.workloads.iter().any(|e| e.id == *id) {
                return Err(Error::InvalidParam {
                    name: "studies",
                    reason: format!("study workload {id} is not in the plan"),
                });
            }
            let _ = params;
        }
        Ok(())
    }

    fn run_seed(&self, wi: usize, mi: usize, ri: usize) -> u64 {
        let run_index = ((wi * self.modes.len()) + mi) * self.repeats + ri;
        self.base_seed.wrapping_add(run_index as u64)
    }

    fn log_path(&self, entry: &SuiteEntry, mode: TunerMode, seed: u64) -> PathBuf {
        self.output_dir.join("runs").join(format!("wl_{}_{}_seed{}.jsonl", entry.id, mode, seed))
    }

    fn truth_path(&self, entry: &SuiteEntry) -> PathBuf {
        self.output_dir.join("truth").join(format!("wl_{}.json", entry.id))
    }
}

/// Salt mixed into a run seed to derive its presampling seed, so presampling
/// and tuning consume independent streams. Exposed so standalone runs can
/// reproduce a plan's presampling exactly.
pub const PRESAMPLE_SALT: u64 = 0x7072_6573_616d_706c;

/// One line of a run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum LogLine {
    Header {
        workload: String,
        mode: TunerMode,
        seed: u64,
        /// FNV-1a of the run's full configuration, space structure, and
        /// ground-truth identity; a mismatch marks the log stale.
        config_hash: String,
        space_hash: String,
        total_trials: usize,
        epoch_size: usize,
    },
    Trial { trial: usize, index: usize, valid: bool, gflops: f64, best: f64 },
    Done {
        trials: usize,
        best_index: usize,
        best_gflops: f64,
        trials_to_best: usize,
        known_invalid_batched: usize,
        ended_early: bool,
        epochs: usize,
        reached_global_best: bool,
    },
}

/// Content hash tying a log to the exact configuration that produced it.
fn config_hash(cfg: &TunerConfig, space: &SearchSpace, truth: &GroundTruthTable) -> String {
    let mut bytes = serde_json::to_vec(cfg).expect("config serializes");
    bytes.extend_from_slice(&space.structural_hash().to_le_bytes());
    bytes.extend_from_slice(&(truth.valid_count() as u64).to_le_bytes());
    bytes.extend_from_slice(&truth.best().1.to_bits().to_le_bytes());
    format!("{:016x}", crate::space::fnv1a(&bytes))
}

fn header_line(cfg: &TunerConfig, space: &SearchSpace, truth: &GroundTruthTable) -> LogLine {
    LogLine::Header {
        workload: space.workload_id().to_string(),
        mode: cfg.mode,
        seed: cfg.seed,
        config_hash: config_hash(cfg, space, truth),
        space_hash: format!("{:016x}", space.structural_hash()),
        total_trials: cfg.total_trials,
        epoch_size: cfg.epoch_size,
    }
}

/// Serialize a finished run as its log text (header, one line per trial,
/// final summary). Contains no timing data, so identical runs produce
/// identical bytes.
pub fn run_log_text(
    record: &RunRecord,
    cfg: &TunerConfig,
    space: &SearchSpace,
    truth: &GroundTruthTable,
) -> String {
    let mut lines = Vec::with_capacity(record.trials.len() + 2);
    lines.push(header_line(cfg, space, truth));
    for t in &record.trials {
        lines.push(LogLine::Trial {
            trial: t.trial,
            index: t.index,
            valid: t.valid,
            gflops: t.gflops,
            best: t.best_so_far,
        });
    }
    lines.push(LogLine::Done {
        trials: record.trials.len(),
        best_index: record.best_index,
        best_gflops: record.best_gflops,
        trials_to_best: record.stats.trials_to_best,
        known_invalid_batched: record.known_invalid_batched,
        ended_early: record.ended_early,
        epochs: record.epochs,
        reached_global_best: record.reached_global_best,
    });
    let mut out = String::new();
    for line in &lines {
        out.push_str(&serde_json::to_string(line).expect("log line serializes"));
        out.push('\n');
    }
    out
}

/// Parse a run log back into a [`RunRecord`] (timings zeroed — they are not
/// part of a run's identity). Errors on schema violations or truncation.
pub fn parse_run_log(path: &Path, text: &str) -> Result<RunRecord> {
    let schema = |reason: String| Error::Schema { path: path.to_path_buf(), reason };
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| schema("empty log".into()))?;
    let header: LogLine =
        serde_json::from_str(first).map_err(|e| schema(format!("bad header: {e}")))?;
    let (workload, mode, seed) = match header {
        LogLine::Header { workload, mode, seed, .. } => (workload, mode, seed),
        _ => return Err(schema("first line must be the header".into())),
    };
    let mut trials: Vec<TrialRecord> = Vec::new();
    let mut done: Option<LogLine> = None;
    for (i, raw) in lines {
        if done.is_some() {
            return Err(schema(format!("line {}: content after summary", i + 1)));
        }
        let line: LogLine =
            serde_json::from_str(raw).map_err(|e| schema(format!("line {}: {e}", i + 1)))?;
        match line {
            LogLine::Trial { trial, index, valid, gflops, best } => {
                if trial != trials.len() + 1 {
                    return Err(schema(format!(
                        "line {}: trial {} out of order (expected {})",
                        i + 1,
                        trial,
                        trials.len() + 1
                    )));
                }
                trials.push(TrialRecord { trial, index, valid, gflops, best_so_far: best });
            }
            LogLine::Done { .. } => done = Some(line),
            LogLine::Header { .. } => {
                return Err(schema(format!("line {}: duplicate header", i + 1)))
            }
        }
    }
    let Some(LogLine::Done {
        trials: n_trials,
        best_index,
        best_gflops,
        trials_to_best,
        known_invalid_batched,
        ended_early,
        epochs,
        reached_global_best,
    }) = done
    else {
        return Err(schema("missing summary line (run incomplete)".into()));
    };
    if n_trials != trials.len() {
        return Err(schema(format!(
            "summary says {n_trials} trials, log has {}",
            trials.len()
        )));
    }
    let convergence = trials.iter().map(|t| t.best_so_far).collect();
    Ok(RunRecord {
        workload_id: workload,
        mode,
        seed,
        trials,
        stats: RunStatistics { trials_to_best, convergence },
        best_index,
        best_gflops,
        reached_global_best,
        known_invalid_batched,
        ended_early,
        epochs,
        timings: PhaseTimings::default(),
    })
}

/// Whether `text` is a complete log produced by exactly this configuration.
fn log_is_current(
    path: &Path,
    text: &str,
    cfg: &TunerConfig,
    space: &SearchSpace,
    truth: &GroundTruthTable,
) -> bool {
    let expected =
        serde_json::to_string(&header_line(cfg, space, truth)).expect("header serializes");
    if text.lines().next() != Some(expected.as_str()) {
        return false;
    }
    parse_run_log(path, text).is_ok()
}

fn write_atomically(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Execute one run (presampling first in Enhanced mode) and serialize it.
fn execute_run(
    cfg: &TunerConfig,
    oracle: &Oracle,
    truth: &GroundTruthTable,
    presample_budget: usize,
    n_parallel: usize,
) -> Result<RunRecord> {
    let space = oracle.space();
    let set = match cfg.mode {
        TunerMode::Enhanced => {
            let t0 = std::time::Instant::now();
            let n = presample_budget.min(space.size());
            let labels = truth.validity_labels();
            let set = presample(space, n, n_parallel, cfg.seed ^ PRESAMPLE_SALT, |p| {
                labels[p.linear]
            })?;
            Some((set, t0.elapsed().as_secs_f64()))
        }
        TunerMode::Baseline => None,
    };
    let mut record = run_tuning(space, truth, cfg, set.as_ref().map(|(s, _)| s))?;
    if let Some((_, presample_s)) = set {
        record.timings.presample_s = presample_s;
    }
    Ok(record)
}

/// Load the workload's cached ground truth, or record and cache it.
fn load_or_record_truth(path: &Path, oracle: &Oracle) -> Result<GroundTruthTable> {
    if path.exists() {
        if let Ok(truth) = GroundTruthTable::load(path) {
            if truth.matches(oracle.space()) {
                return Ok(truth);
            }
        }
    }
    let truth = oracle.record_ground_truth()?;
    truth.save(path)?;
    Ok(truth)
}

/// One (workload, mode) cell of a finished experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportCell {
    pub workload_id: String,
    pub mode: TunerMode,
    pub aggregate: AggregateStatistics,
    /// Raw per-run outcomes, in repeat order.
    pub runs: Vec<RunStatistics>,
    pub band: ConvergenceBand,
    pub known_invalid_batched: usize,
    /// Mean per-phase seconds over runs executed in this process (zero for
    /// cells fully restored from logs). Not serialized: timing is not part
    /// of a report's deterministic identity.
    #[serde(skip)]
    pub mean_timings: PhaseTimings,
}

impl PartialEq for ReportCell {
    /// Equality over the deterministic fields; wall-clock timings are
    /// excluded so an executed cell equals its log-restored twin.
    fn eq(&self, other: &Self) -> bool {
        self.workload_id == other.workload_id
            && self.mode == other.mode
            && self.aggregate == other.aggregate
            && self.runs == other.runs
            && self.band == other.band
            && self.known_invalid_batched == other.known_invalid_batched
    }
}

/// Everything a finished plan produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// Cells in plan order: workloads outer, modes inner.
    pub cells: Vec<ReportCell>,
    pub studies: Vec<StudyReport>,
    /// Total runs in the plan.
    pub total_runs: usize,
    /// Runs executed by this invocation (the rest were restored from logs).
    #[serde(skip)]
    pub executed_runs: usize,
}

impl PartialEq for ExperimentReport {
    /// Equality over results only; how many runs were freshly executed does
    /// not change what the experiment found.
    fn eq(&self, other: &Self) -> bool {
        self.cells == other.cells
            && self.studies == other.studies
            && self.total_runs == other.total_runs
    }
}

impl ExperimentReport {
    /// Rows for the aggregate CSV and box plot, in cell order.
    pub fn aggregate_rows(&self) -> Vec<AggregateRow> {
        self.cells
            .iter()
            .map(|c| AggregateRow {
                workload_id: c.workload_id.clone(),
                mode: c.mode.to_string(),
                stats: c.aggregate.clone(),
            })
            .collect()
    }

    pub fn cell(&self, workload_id: &str, mode: TunerMode) -> Option<&ReportCell> {
        self.cells.iter().find(|c| c.workload_id == workload_id && c.mode == mode)
    }
}

/// Execute a plan: record (or load) ground truth, run every missing
/// (workload, mode, repeat) cell on the worker pool, and aggregate.
///
/// Fully resumable: a rerun reuses every log whose header matches and
/// re-executes only the rest.
pub fn run_plan(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    let runs_dir = plan.output_dir.join("runs");
    let truth_dir = plan.output_dir.join("truth");
    for dir in [&runs_dir, &truth_dir] {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    // Ground truth per workload, cached on disk.
    let mut recorded: Vec<(Oracle, GroundTruthTable)> = Vec::with_capacity(plan.workloads.len());
    for entry in &plan.workloads {
        let oracle = Oracle::new(entry.workload.clone(), entry.budget.clone())?;
        let truth = load_or_record_truth(&plan.truth_path(entry), &oracle)?;
        recorded.push((oracle, truth));
    }

    // Enumerate runs; reuse logs that are still current.
    struct Task {
        wi: usize,
        cfg: TunerConfig,
        log_path: PathBuf,
    }
    let mut tasks: Vec<Task> = Vec::new();
    let mut restored: Vec<Option<RunRecord>> = Vec::new();
    for (wi, entry) in plan.workloads.iter().enumerate() {
        let (oracle, truth) = &recorded[wi];
        for (mi, mode_cfg) in plan.modes.iter().enumerate() {
            for ri in 0..plan.repeats {
                let cfg =
                    TunerConfig { seed: plan.run_seed(wi, mi, ri), ..mode_cfg.clone() };
                let log_path = plan.log_path(entry, cfg.mode, cfg.seed);
                let reuse = std::fs::read_to_string(&log_path).ok().and_then(|text| {
                    if log_is_current(&log_path, &text, &cfg, oracle.space(), truth) {
                        parse_run_log(&log_path, &text).ok()
                    } else {
                        None
                    }
                });
                restored.push(reuse);
                tasks.push(Task { wi, cfg, log_path });
            }
        }
    }

    // Execute what's missing on the worker pool.
    let pending: Vec<usize> =
        (0..tasks.len()).filter(|&i| restored[i].is_none()).collect();
    let executed_runs = pending.len();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::InvalidParam {
            name: "workers",
            reason: format!("cannot build worker pool: {e}"),
        })?;
    let fresh: Vec<(usize, RunRecord)> = pool.install(|| {
        pending
            .par_iter()
            .map(|&i| {
                let task = &tasks[i];
                let (oracle, truth) = &recorded[task.wi];
                let record = execute_run(
                    &task.cfg,
                    oracle,
                    truth,
                    plan.presample_budget,
                    plan.n_parallel,
                )?;
                let text = run_log_text(&record, &task.cfg, oracle.space(), truth);
                write_atomically(&task.log_path, &text)?;
                Ok((i, record))
            })
            .collect::<Result<_>>()
    })?;
    for (i, record) in fresh {
        restored[i] = Some(record);
    }
    let records: Vec<RunRecord> =
        restored.into_iter().map(|r| r.expect("all runs present")).collect();

    // Aggregate in plan order.
    let mut cells = Vec::with_capacity(plan.workloads.len() * plan.modes.len());
    let mut offset = 0;
    for (wi, _) in plan.workloads.iter().enumerate() {
        for mode_cfg in &plan.modes {
            let cell_records = &records[offset..offset + plan.repeats];
            offset += plan.repeats;
            let runs: Vec<RunStatistics> =
                cell_records.iter().map(|r| r.stats.clone()).collect();
            let executed: Vec<&RunRecord> =
                cell_records.iter().filter(|r| r.timings.total() > 0.0).collect();
            let mean_timings = if executed.is_empty() {
                PhaseTimings::default()
            } else {
                let n = executed.len() as f64;
                PhaseTimings {
                    presample_s: executed.iter().map(|r| r.timings.presample_s).sum::<f64>() / n,
                    fit_s: executed.iter().map(|r| r.timings.fit_s).sum::<f64>() / n,
                    select_s: executed.iter().map(|r| r.timings.select_s).sum::<f64>() / n,
                    measure_s: executed.iter().map(|r| r.timings.measure_s).sum::<f64>() / n,
                }
            };
            cells.push(ReportCell {
                workload_id: plan.workloads[wi].workload.id.clone(),
                mode: mode_cfg.mode,
                aggregate: aggregate_runs(&runs)?,
                band: convergence_band(mode_cfg.mode.to_string(), &runs)?,
                known_invalid_batched: cell_records
                    .iter()
                    .map(|r| r.known_invalid_batched)
                    .sum(),
                runs,
                mean_timings,
            });
        }
    }

    // Model studies.
    let mut studies = Vec::with_capacity(plan.studies.len());
    for (id, params) in &plan.studies {
        let wi = plan
            .workloads
            .iter()
            .position(|e| e.id == *id)
            .expect("validated: study workload is in the plan");
        let (oracle, truth) = &recorded[wi];
        studies.push(controlled_ratio_study(oracle.space(), truth, params)?);
    }

    Ok(ExperimentReport { cells, studies, total_runs: tasks.len(), executed_runs })
}

/// Output format for [`emit_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
    All,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "svg" => Ok(ReportFormat::Svg),
            "all" => Ok(ReportFormat::All),
            other => Err(Error::InvalidParam {
                name: "format",
                reason: format!("unknown format `{other}` (csv|json|svg|all)"),
            }),
        }
    }
}

/// Write report artifacts into `out_dir`; returns the paths written.
///
/// Deterministic: emitting the same report twice produces identical bytes.
/// An empty report is an error — no artifact is ever written empty.
pub fn emit_report(
    report: &ExperimentReport,
    out_dir: &Path,
    format: ReportFormat,
) -> Result<Vec<PathBuf>> {
    if report.cells.is_empty() {
        return Err(Error::EmptyInput { what: "report cells" });
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut emit = |name: String, text: String| -> Result<()> {
        let path = out_dir.join(name);
        write_atomically(&path, &text)?;
        written.push(path);
        Ok(())
    };
    let rows = report.aggregate_rows();
    if matches!(format, ReportFormat::Csv | ReportFormat::All) {
        emit("aggregates.csv".into(), aggregates_csv(&rows)?)?;
        for study in &report.studies {
            emit(format!("study_{}.csv", study.workload_id), study_csv(study)?)?;
        }
    }
    if matches!(format, ReportFormat::Json | ReportFormat::All) {
        let mut text = serde_json::to_string_pretty(report).expect("report serializes");
        text.push('\n');
        emit("report.json".into(), text)?;
    }
    if matches!(format, ReportFormat::Svg | ReportFormat::All) {
        emit("box_trials_to_best.svg".into(), box_plot_svg(&rows)?)?;
        // One convergence plot per workload, bands in mode order.
        let mut workloads: Vec<&str> = Vec::new();
        for cell in &report.cells {
            if !workloads.contains(&cell.workload_id.as_str()) {
                workloads.push(&cell.workload_id);
            }
        }
        for w in workloads {
            let bands: Vec<ConvergenceBand> = report
                .cells
                .iter()
                .filter(|c| c.workload_id == w)
                .map(|c| c.band.clone())
                .collect();
            emit(format!("convergence_{w}.svg"), convergence_svg(w, &bands)?)?;
        }
    }
    Ok(written)
}

/// Rebuild an [`ExperimentReport`] from a completed plan's logs without
/// executing anything. Errors if any run log is missing or stale.
pub fn report_from_logs(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    let mut missing: Vec<String> = Vec::new();
    let report = run_plan_readonly(plan, &mut missing)?;
    if !missing.is_empty() {
        return Err(Error::Schema {
            path: plan.output_dir.clone(),
            reason: format!("incomplete plan: {} missing or stale runs", missing.len()),
        });
    }
    Ok(report)
}

/// Like [`run_plan`] but never executes; collects missing run names instead.
fn run_plan_readonly(
    plan: &ExperimentPlan,
    missing: &mut Vec<String>,
) -> Result<ExperimentReport> {
    let mut records: Vec<RunRecord> = Vec::new();
    let mut recorded: Vec<(Oracle, GroundTruthTable)> = Vec::with_capacity(plan.workloads.len());
    for entry in &plan.workloads {
        let oracle = Oracle::new(entry.workload.clone(), entry.budget.clone())?;
        let truth = load_or_record_truth(&plan.truth_path(entry), &oracle)?;
        recorded.push((oracle, truth));
    }
    for (wi, entry) in plan.workloads.iter().enumerate() {
        let (oracle, truth) = &recorded[wi];
        for (mi, mode_cfg) in plan.modes.iter().enumerate() {
            for ri in 0..plan.repeats {
                let cfg =
                    TunerConfig { seed: plan.run_seed(wi, mi, ri), ..mode_cfg.clone() };
                let log_path = plan.log_path(entry, cfg.mode, cfg.seed);
                match std::fs::read_to_string(&log_path) {
                    Ok(text)
                        if log_is_current(&log_path, &text, &cfg, oracle.space(), truth) =>
                    {
                        records.push(parse_run_log(&log_path, &text)?);
                    }
                    _ => missing.push(log_path.display().to_string()),
                }
            }
        }
    }
    if !missing.is_empty() {
        // Cells cannot be assembled; report a placeholder that the caller
        // turns into an error.
        return Ok(ExperimentReport {
            cells: Vec::new(),
            studies: Vec::new(),
            total_runs: plan.workloads.len() * plan.modes.len() * plan.repeats,
            executed_runs: 0,
        });
    }
    let mut cells = Vec::new();
    let mut offset = 0;
    for entry in &plan.workloads {
        for mode_cfg in &plan.modes {
            let cell_records = &records[offset..offset + plan.repeats];
            offset += plan.repeats;
            let runs: Vec<RunStatistics> =
                cell_records.iter().map(|r| r.stats.clone()).collect();
            cells.push(ReportCell {
                workload_id: entry.workload.id.clone(),
                mode: mode_cfg.mode,
                aggregate: aggregate_runs(&runs)?,
                band: convergence_band(mode_cfg.mode.to_string(), &runs)?,
                known_invalid_batched: cell_records
                    .iter()
                    .map(|r| r.known_invalid_batched)
                    .sum(),
                runs,
                mean_timings: PhaseTimings::default(),
            });
        }
    }
    let mut studies = Vec::new();
    for (id, params) in &plan.studies {
        let wi = plan.workloads.iter().position(|e| e.id == *id).ok_or_else(|| {
            Error::InvalidParam {
                name: "studies",
                reason: format!("study workload {id} is not in the plan"),
            }
        })?;
        let (oracle, truth) = &recorded[wi];
        studies.push(controlled_ratio_study(oracle.space(), truth, params)?);
    }
    Ok(ExperimentReport {
        cells,
        studies,
        total_runs: records.len(),
        executed_runs: 0,
    })
}
