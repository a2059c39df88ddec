//! `valitune`: validity-aware auto-tuning over synthetic accelerator spaces.
//!
//! Subcommands cover the full experiment lifecycle: inspect a workload's
//! search space (`gen-space`), record its exhaustive ground truth
//! (`record-truth`), explore validity (`presample`), run a single tuning run
//! (`tune`), sweep model quality against controlled training ratios
//! (`study`), execute the full repeated-runs comparison (`plan`), and
//! re-emit artifacts from a completed plan's logs (`report`).
//!
//! Set `VALITUNE_WORKERS` to bound the worker pool (default: all cores).

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use valitune::fixtures::{SuiteEntry, SuiteManifest, SUITE_IDS};
use valitune::harness::{
    emit_report, report_from_logs, run_log_text, run_plan, ExperimentPlan, ExperimentReport,
    ReportFormat, PRESAMPLE_SALT,
};
use valitune::oracle::Oracle;
use valitune::sampler::presample;
use valitune::study::{controlled_ratio_study, StudyParams};
use valitune::tuner::{run_tuning, TunerConfig, TunerMode};

#[derive(Parser)]
#[command(
    name = "valitune",
    version,
    about = "Validity-aware auto-tuning on synthetic accelerator workloads"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a workload's search space as JSON.
    GenSpace(GenSpaceArgs),
    /// Exhaustively measure a workload and write its ground-truth table.
    RecordTruth(RecordTruthArgs),
    /// Explore a workload's validity structure and write the sample set.
    Presample(PresampleArgs),
    /// Execute one tuning run and write its log.
    Tune(TuneArgs),
    /// Sweep surrogate quality against controlled training valid-ratios.
    Study(StudyArgs),
    /// Run the full repeated-runs experiment (resumable).
    Plan(PlanArgs),
    /// Re-emit report artifacts from a completed plan's logs.
    Report(PlanArgs),
}

#[derive(Args)]
struct GenSpaceArgs {
    /// Suite workload ID.
    #[arg(long)]
    workload: u32,
    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RecordTruthArgs {
    #[arg(long)]
    workload: u32,
    /// Output path for the truth table JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PresampleArgs {
    #[arg(long)]
    workload: u32,
    /// Validity-exploration budget (clamped to the space size).
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Batch width of the explorer.
    #[arg(long, default_value_t = 8)]
    parallel: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path for the sample-set JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    workload: u32,
    /// `baseline` (random init, unbiased) or `enhanced` (presampled init,
    /// validity-biased proposals).
    #[arg(long, value_parser = parse_mode)]
    mode: TunerMode,
    #[arg(long, default_value_t = 750)]
    trials: usize,
    #[arg(long = "epoch-size", default_value_t = 50)]
    epoch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path for the run log (stdout summary only when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    #[arg(long)]
    workload: u32,
    /// Comma-separated training valid-ratios in (0, 1).
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.05, 0.1, 0.3, 0.5, 0.7, 0.9, 0.95])]
    ratios: Vec<f64>,
    /// Comma-separated training-set sizes.
    #[arg(long = "sample-sizes", value_delimiter = ',', default_values_t = vec![200])]
    sample_sizes: Vec<usize>,
    /// Rank cutoff for nDCG@n / precision@n.
    #[arg(long = "n-at", default_value_t = 32)]
    n_at: usize,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for study artifacts.
    #[arg(long)]
    out: PathBuf,
    /// csv | json | all
    #[arg(long, default_value = "all", value_parser = parse_format)]
    format: ReportFormat,
}

#[derive(Args)]
struct PlanArgs {
    /// Comma-separated suite workload IDs (default: the whole suite).
    #[arg(long, value_delimiter = ',')]
    workloads: Option<Vec<u32>>,
    #[arg(long, default_value_t = 20)]
    repeats: usize,
    #[arg(long, default_value_t = 750)]
    trials: usize,
    #[arg(long = "epoch-size", default_value_t = 50)]
    epoch_size: usize,
    /// Base seed; per-run seeds are derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Plan directory (logs, truth cache, artifacts).
    #[arg(long)]
    out: PathBuf,
    /// csv | json | svg | all
    #[arg(long, default_value = "all", value_parser = parse_format)]
    format: ReportFormat,
}

fn parse_mode(s: &str) -> Result<TunerMode, String> {
    match s {
        "baseline" => Ok(TunerMode::Baseline),
        "enhanced" => Ok(TunerMode::Enhanced),
        other => Err(format!("unknown mode `{other}` (baseline|enhanced)")),
    }
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse::<ReportFormat>().map_err(|e| e.to_string())
}

fn suite_entry(id: u32) -> anyhow::Result<SuiteEntry> {
    let manifest = SuiteManifest::builtin();
    let entry = manifest
        .entry(id)
        .with_context(|| format!("known workloads: {SUITE_IDS:?}"))?;
    Ok(entry.clone())
}

fn oracle_for(id: u32) -> anyhow::Result<Oracle> {
    let entry = suite_entry(id)?;
    Ok(Oracle::new(entry.workload, entry.budget)?)
}

fn write_or_print(out: Option<&PathBuf>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_gen_space(args: GenSpaceArgs) -> anyhow::Result<()> {
    let oracle = oracle_for(args.workload)?;
    let mut text = serde_json::to_string_pretty(oracle.space())?;
    text.push('\n');
    write_or_print(args.out.as_ref(), &text)
}

fn cmd_record_truth(args: RecordTruthArgs) -> anyhow::Result<()> {
    let oracle = oracle_for(args.workload)?;
    let truth = oracle.record_ground_truth()?;
    truth.save(&args.out)?;
    let (best_index, best_gflops) = truth.best();
    println!(
        "wl_{}: {} configurations, {} valid (ratio {:.4}), best {:.3} gflops at index {}",
        args.workload,
        truth.size(),
        truth.valid_count(),
        truth.valid_ratio(),
        best_gflops,
        best_index
    );
    Ok(())
}

fn cmd_presample(args: PresampleArgs) -> anyhow::Result<()> {
    let oracle = oracle_for(args.workload)?;
    let space = oracle.space();
    let n = args.samples.min(space.size());
    let set = presample(space, n, args.parallel, args.seed, |p| {
        oracle.is_valid_point(p).expect("point from this space")
    })?;
    set.save(&args.out)?;
    println!(
        "wl_{}: sampled {} of {} configurations, {} valid (fraction {:.4}{})",
        args.workload,
        set.len(),
        space.size(),
        set.valid_count(),
        set.valid_fraction(),
        if set.exhausted() { ", space exhausted" } else { "" }
    );
    Ok(())
}

fn cmd_tune(args: TuneArgs) -> anyhow::Result<()> {
    let oracle = oracle_for(args.workload)?;
    let space = oracle.space();
    let truth = oracle.record_ground_truth()?;
    let cfg = TunerConfig {
        mode: args.mode,
        total_trials: args.trials,
        epoch_size: args.epoch_size,
        seed: args.seed,
        ..TunerConfig::default()
    };
    let set = match args.mode {
        TunerMode::Enhanced => {
            let n = 1000.min(space.size());
            let labels = truth.validity_labels();
            Some(presample(space, n, 8, args.seed ^ PRESAMPLE_SALT, |p| labels[p.linear])?)
        }
        TunerMode::Baseline => None,
    };
    let record = run_tuning(space, &truth, &cfg, set.as_ref())?;
    if let Some(path) = &args.out {
        std::fs::write(path, run_log_text(&record, &cfg, space, &truth))
            .with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote {}", path.display());
    }
    println!(
        "wl_{} {}: {} trials, best {:.3} gflops (space best {:.3}), \
         first hit at trial {}{}",
        args.workload,
        args.mode,
        record.trials.len(),
        record.best_gflops,
        truth.best().1,
        if record.reached_global_best {
            record.stats.trials_to_best.to_string()
        } else {
            "never".to_string()
        },
        if record.ended_early { ", ended early (pool exhausted)" } else { "" }
    );
    Ok(())
}

fn cmd_study(args: StudyArgs) -> anyhow::Result<()> {
    let oracle = oracle_for(args.workload)?;
    let truth = oracle.record_ground_truth()?;
    let params = StudyParams {
        ratios: args.ratios,
        sample_sizes: args.sample_sizes,
        n_at: args.n_at,
        repeats: args.repeats,
        seed: args.seed,
        ..StudyParams::default()
    };
    if matches!(args.format, ReportFormat::Svg) {
        bail!("study has no svg artifact; use csv, json, or all");
    }
    let report = controlled_ratio_study(oracle.space(), &truth, &params)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let mut written = Vec::new();
    if matches!(args.format, ReportFormat::Csv | ReportFormat::All) {
        let path = args.out.join(format!("study_{}.csv", report.workload_id));
        std::fs::write(&path, valitune::report::study_csv(&report)?)?;
        written.push(path);
    }
    if matches!(args.format, ReportFormat::Json | ReportFormat::All) {
        let path = args.out.join(format!("study_{}.json", report.workload_id));
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        written.push(path);
    }
    for c in &report.cells {
        println!(
            "ratio {:.2} size {:4}: nDCG@{} {:.3}, precision@{} {:.3}, \
             acc(v/i) {:.3}, acc(v/v) {:.3}",
            c.ratio,
            c.sample_size,
            report.n_at,
            c.mean_ndcg,
            report.n_at,
            c.mean_precision,
            c.mean_acc_valid_invalid,
            c.mean_acc_valid_valid
        );
    }
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn build_plan(args: &PlanArgs) -> anyhow::Result<ExperimentPlan> {
    let ids = args.workloads.clone().unwrap_or_else(|| SUITE_IDS.to_vec());
    let mut workloads = Vec::with_capacity(ids.len());
    for id in ids {
        workloads.push(suite_entry(id)?);
    }
    let template = TunerConfig {
        total_trials: args.trials,
        epoch_size: args.epoch_size,
        ..TunerConfig::default()
    };
    Ok(ExperimentPlan::two_mode(
        workloads,
        template,
        args.repeats,
        args.seed,
        &args.out,
    ))
}

fn print_report_summary(report: &ExperimentReport) {
    for pair in report.cells.chunks(2) {
        for cell in pair {
            println!(
                "{} {:>9}: median trials-to-best {:.1} (q1 {:.1}, q3 {:.1}, iqr {:.1}) \
                 over {} runs",
                cell.workload_id,
                cell.mode,
                cell.aggregate.median,
                cell.aggregate.q1,
                cell.aggregate.q3,
                cell.aggregate.iqr,
                cell.aggregate.n_runs
            );
        }
        if let [a, b] = pair {
            if a.aggregate.median > 0.0 && b.aggregate.median > 0.0 {
                println!(
                    "{}   ratio ({}/{}): {:.3}",
                    a.workload_id,
                    b.mode,
                    a.mode,
                    b.aggregate.median / a.aggregate.median
                );
            }
        }
    }
}

fn cmd_plan(args: PlanArgs) -> anyhow::Result<()> {
    let plan = build_plan(&args)?;
    let report = run_plan(&plan)?;
    println!(
        "{} runs total, {} executed now, {} restored from logs",
        report.total_runs,
        report.executed_runs,
        report.total_runs - report.executed_runs
    );
    print_report_summary(&report);
    let written = emit_report(&report, &plan.output_dir, args.format)?;
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_report(args: PlanArgs) -> anyhow::Result<()> {
    let plan = build_plan(&args)?;
    let report = report_from_logs(&plan)
        .context("plan incomplete; run `valitune plan` with the same flags first")?;
    print_report_summary(&report);
    let written = emit_report(&report, &plan.output_dir, args.format)?;
    for path in written {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSpace(args) => cmd_gen_space(args),
        Command::RecordTruth(args) => cmd_record_truth(args),
        Command::Presample(args) => cmd_presample(args),
        Command::Tune(args) => cmd_tune(args),
        Command::Study(args) => cmd_study(args),
        Command::Plan(args) => cmd_plan(args),
        Command::Report(args) => cmd_report(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
