//! Deterministic report artifacts: aggregate and study CSVs, box-plot SVGs,
//! and convergence-curve SVGs.
//!
//! Everything here is a pure string builder: identical inputs produce
//! identical bytes, so re-emitting a report never dirties an output
//! directory. Numbers are rendered with Rust's shortest-round-trip `f64`
//! formatting in both CSVs and SVG `data-*` attributes, which lets tests
//! cross-check plot geometry against table values by string equality.

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::metrics::{quantile_sorted, AggregateStatistics, RunStatistics};
use crate::study::StudyReport;
use crate::Result;

/// One box-plot box: the trials-to-best summary of a (workload, mode) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub workload_id: String,
    pub mode: String,
    pub stats: AggregateStatistics,
}

/// Shortest-round-trip decimal rendering shared by all artifacts.
fn fmt(v: f64) -> String {
    format!("{v}")
}

/// CSV of per-cell aggregates, one row per (workload, mode).
pub fn aggregates_csv(rows: &[AggregateRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::EmptyInput { what: "aggregate rows" });
    }
    let mut out = String::from(
        "workload,mode,n_runs,median,q1,q3,iqr,lo_whisker,hi_whisker,outliers\n",
    );
    for row in rows {
        let s = &row.stats;
        let outliers =
            s.outliers.iter().map(|&v| fmt(v)).collect::<Vec<_>>().join(";");
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row.workload_id,
            row.mode,
            s.n_runs,
            fmt(s.median),
            fmt(s.q1),
            fmt(s.q3),
            fmt(s.iqr),
            fmt(s.lo_whisker),
            fmt(s.hi_whisker),
            outliers
        ));
    }
    Ok(out)
}

/// CSV of a study grid, one row per (ratio, sample_size) cell.
pub fn study_csv(report: &StudyReport) -> Result<String> {
    if report.cells.is_empty() {
        return Err(Error::EmptyInput { what: "study cells" });
    }
    let mut out = String::from(
        "workload,n_at,sample_size,ratio,repeats,mean_ndcg,mean_precision,\
         mean_acc_valid_invalid,mean_acc_valid_valid\n",
    );
    for c in &report.cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            report.workload_id,
            report.n_at,
            c.sample_size,
            fmt(c.ratio),
            c.repeats,
            fmt(c.mean_ndcg),
            fmt(c.mean_precision),
            fmt(c.mean_acc_valid_invalid),
            fmt(c.mean_acc_valid_valid)
        ));
    }
    Ok(out)
}

fn mode_color(mode: &str) -> &'static str {
    match mode {
        "baseline" => "#9aa0a6",
        "enhanced" => "#1a73e8",
        _ => "#6b40b8",
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Grouped box plot of trials-to-best: one group per workload, one box per
/// mode. Every box carries its summary values as `data-*` attributes so the
/// plot can be audited against [`aggregates_csv`] without geometry math.
pub fn box_plot_svg(rows: &[AggregateRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::EmptyInput { what: "aggregate rows" });
    }
    // Workloads in first-appearance order; modes per workload likewise.
    let mut workloads: Vec<&str> = Vec::new();
    for row in rows {
        if !workloads.contains(&row.workload_id.as_str()) {
            workloads.push(&row.workload_id);
        }
    }
    let boxes_per_group = rows.len().div_ceil(workloads.len()).max(1);
    let (box_w, box_gap, group_gap) = (22.0, 8.0, 26.0);
    let group_w = boxes_per_group as f64 * (box_w + box_gap) + group_gap;
    let (margin_l, margin_r, margin_t, margin_b) = (58.0, 14.0, 18.0, 42.0);
    let plot_h = 280.0;
    let width = margin_l + workloads.len() as f64 * group_w + margin_r;
    let height = margin_t + plot_h + margin_b;

    let mut y_max = 0.0f64;
    for row in rows {
        y_max = y_max.max(row.stats.hi_whisker);
        for &o in &row.stats.outliers {
            y_max = y_max.max(o);
        }
    }
    let y_max = (y_max * 1.06).max(1.0);
    let y = |v: f64| margin_t + plot_h - (v / y_max) * plot_h;

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width} {height}\" \
         font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    svg.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    ));
    // Axes and y ticks.
    svg.push_str(&format!(
        "  <line x1=\"{margin_l}\" y1=\"{margin_t}\" x2=\"{margin_l}\" y2=\"{}\" \
         stroke=\"#333\"/>\n",
        margin_t + plot_h
    ));
    svg.push_str(&format!(
        "  <line x1=\"{margin_l}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"#333\"/>\n",
        margin_t + plot_h,
        width - margin_r
    ));
    for i in 0..=4 {
        let v = y_max * i as f64 / 4.0;
        let ty = y(v);
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{ty}\" x2=\"{margin_l}\" y2=\"{ty}\" stroke=\"#333\"/>\n",
            margin_l - 4.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            margin_l - 7.0,
            ty + 4.0,
            fmt((v * 10.0).round() / 10.0)
        ));
    }
    svg.push_str(
        "  <text x=\"14\" y=\"160\" transform=\"rotate(-90 14 160)\" text-anchor=\"middle\">\
         trials to best</text>\n",
    );

    let mut group_seen: Vec<usize> = vec![0; workloads.len()];
    for row in rows {
        let gi = workloads.iter().position(|w| *w == row.workload_id).expect("collected");
        let bi = group_seen[gi];
        group_seen[gi] += 1;
        let x0 = margin_l + gi as f64 * group_w + group_gap / 2.0
            + bi as f64 * (box_w + box_gap);
        let cx = x0 + box_w / 2.0;
        let s = &row.stats;
        let color = mode_color(&row.mode);
        svg.push_str(&format!(
            "  <g data-workload=\"{}\" data-mode=\"{}\" data-n-runs=\"{}\" \
             data-median=\"{}\" data-q1=\"{}\" data-q3=\"{}\" data-iqr=\"{}\" \
             data-lo-whisker=\"{}\" data-hi-whisker=\"{}\">\n",
            xml_escape(&row.workload_id),
            xml_escape(&row.mode),
            s.n_runs,
            fmt(s.median),
            fmt(s.q1),
            fmt(s.q3),
            fmt(s.iqr),
            fmt(s.lo_whisker),
            fmt(s.hi_whisker)
        ));
        // Whisker line plus caps.
        svg.push_str(&format!(
            "    <line x1=\"{cx}\" y1=\"{}\" x2=\"{cx}\" y2=\"{}\" stroke=\"{color}\"/>\n",
            y(s.lo_whisker),
            y(s.hi_whisker)
        ));
        for v in [s.lo_whisker, s.hi_whisker] {
            svg.push_str(&format!(
                "    <line x1=\"{0}\" y1=\"{2}\" x2=\"{1}\" y2=\"{2}\" stroke=\"{color}\"/>\n",
                cx - box_w / 4.0,
                cx + box_w / 4.0,
                y(v)
            ));
        }
        // Interquartile box and median line.
        svg.push_str(&format!(
            "    <rect x=\"{x0}\" y=\"{}\" width=\"{box_w}\" height=\"{}\" fill=\"{color}\" \
             fill-opacity=\"0.35\" stroke=\"{color}\"/>\n",
            y(s.q3),
            (y(s.q1) - y(s.q3)).max(0.5)
        ));
        svg.push_str(&format!(
            "    <line x1=\"{x0}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"{color}\" \
             stroke-width=\"2\"/>\n",
            y(s.median),
            x0 + box_w
        ));
        for &o in &s.outliers {
            svg.push_str(&format!(
                "    <circle cx=\"{cx}\" cy=\"{}\" r=\"2.5\" fill=\"none\" \
                 stroke=\"{color}\"/>\n",
                y(o)
            ));
        }
        svg.push_str("  </g>\n");
    }
    // Group labels.
    for (gi, w) in workloads.iter().enumerate() {
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            margin_l + gi as f64 * group_w + group_w / 2.0,
            margin_t + plot_h + 16.0,
            xml_escape(w)
        ));
    }
    // Legend: one entry per distinct mode, first-appearance order.
    let mut modes: Vec<&str> = Vec::new();
    for row in rows {
        if !modes.contains(&row.mode.as_str()) {
            modes.push(&row.mode);
        }
    }
    for (mi, mode) in modes.iter().enumerate() {
        let lx = margin_l + 8.0 + mi as f64 * 110.0;
        svg.push_str(&format!(
            "  <rect x=\"{lx}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\" \
             fill-opacity=\"0.5\"/>\n",
            height - 16.0,
            mode_color(mode)
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\">{}</text>\n",
            lx + 16.0,
            height - 6.0,
            xml_escape(mode)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Per-trial median and quartile band across runs.
///
/// Runs that ended early (exhausted spaces) are extended with their final
/// best-so-far value, since the best found does not degrade after the run
/// stops measuring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceBand {
    pub mode: String,
    pub median: Vec<f64>,
    pub q1: Vec<f64>,
    pub q3: Vec<f64>,
}

pub fn convergence_band(mode: impl Into<String>, runs: &[RunStatistics]) -> Result<ConvergenceBand> {
    if runs.is_empty() {
        return Err(Error::EmptyInput { what: "run list" });
    }
    let len = runs.iter().map(|r| r.convergence.len()).max().expect("non-empty");
    if len == 0 {
        return Err(Error::EmptyInput { what: "convergence curves" });
    }
    let mut median = Vec::with_capacity(len);
    let mut q1 = Vec::with_capacity(len);
    let mut q3 = Vec::with_capacity(len);
    let mut column = Vec::with_capacity(runs.len());
    for t in 0..len {
        column.clear();
        for r in runs {
            let v = r
                .convergence
                .get(t)
                .or_else(|| r.convergence.last())
                .copied()
                .expect("curves non-empty");
            column.push(v);
        }
        column.sort_by(f64::total_cmp);
        q1.push(quantile_sorted(&column, 0.25));
        median.push(quantile_sorted(&column, 0.5));
        q3.push(quantile_sorted(&column, 0.75));
    }
    Ok(ConvergenceBand { mode: mode.into(), median, q1, q3 })
}

/// Convergence plot for one workload: per mode, the median curve drawn bold
/// over a shaded interquartile band.
///
/// Bands may differ in length (a mode can exhaust its proposal pool before
/// the budget); each is drawn to its own final trial on a shared axis.
pub fn convergence_svg(workload_id: &str, bands: &[ConvergenceBand]) -> Result<String> {
    if bands.is_empty() {
        return Err(Error::EmptyInput { what: "convergence bands" });
    }
    for b in bands {
        if b.median.len() != b.q1.len() || b.median.len() != b.q3.len() {
            return Err(Error::LengthMismatch {
                context: "convergence band lengths",
                expected: b.median.len(),
                actual: b.q1.len().min(b.q3.len()),
            });
        }
    }
    let len = bands.iter().map(|b| b.median.len()).max().expect("non-empty");
    if len == 0 {
        return Err(Error::EmptyInput { what: "convergence curves" });
    }
    let (margin_l, margin_r, margin_t, margin_b) = (64.0, 16.0, 20.0, 42.0);
    let (plot_w, plot_h) = (520.0, 280.0);
    let width = margin_l + plot_w + margin_r;
    let height = margin_t + plot_h + margin_b;
    let y_top = bands
        .iter()
        .flat_map(|b| b.q3.iter().chain(b.median.iter()))
        .fold(0.0f64, |a, &v| a.max(v))
        .max(1e-12)
        * 1.05;
    let x = |t: usize| margin_l + (t as f64 / (len.max(2) - 1) as f64) * plot_w;
    let y = |v: f64| margin_t + plot_h - (v / y_top) * plot_h;

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width} {height}\" \
         font-family=\"sans-serif\" font-size=\"11\" data-workload=\"{}\">\n",
        xml_escape(workload_id)
    );
    svg.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n"
    ));
    svg.push_str(&format!(
        "  <line x1=\"{margin_l}\" y1=\"{margin_t}\" x2=\"{margin_l}\" y2=\"{}\" \
         stroke=\"#333\"/>\n",
        margin_t + plot_h
    ));
    svg.push_str(&format!(
        "  <line x1=\"{margin_l}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"#333\"/>\n",
        margin_t + plot_h,
        margin_l + plot_w
    ));
    for i in 0..=4 {
        let v = y_top * i as f64 / 4.0;
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            margin_l - 7.0,
            y(v) + 4.0,
            fmt((v * 10.0).round() / 10.0)
        ));
    }
    for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let t = ((len - 1) as f64 * frac).round() as usize;
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            x(t),
            margin_t + plot_h + 16.0,
            t + 1
        ));
    }
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">trial</text>\n",
        margin_l + plot_w / 2.0,
        height - 8.0
    ));
    svg.push_str(&format!(
        "  <text x=\"16\" y=\"160\" transform=\"rotate(-90 16 160)\" \
         text-anchor=\"middle\">best gflops</text>\n"
    ));

    for band in bands {
        let color = mode_color(&band.mode);
        let blen = band.median.len();
        // Interquartile band: q3 forward, then q1 reversed.
        let mut d = String::from("M");
        for t in 0..blen {
            d.push_str(&format!(" {} {}", x(t), y(band.q3[t])));
        }
        for t in (0..blen).rev() {
            d.push_str(&format!(" L {} {}", x(t), y(band.q1[t])));
        }
        d.push_str(" Z");
        svg.push_str(&format!(
            "  <path d=\"{d}\" fill=\"{color}\" fill-opacity=\"0.18\" stroke=\"none\" \
             data-mode=\"{}\" data-kind=\"iqr-band\"/>\n",
            xml_escape(&band.mode)
        ));
        let points: Vec<String> =
            (0..blen).map(|t| format!("{},{}", x(t), y(band.median[t]))).collect();
        svg.push_str(&format!(
            "  <polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2.2\" \
             data-mode=\"{}\" data-kind=\"median\" data-final-median=\"{}\"/>\n",
            points.join(" "),
            xml_escape(&band.mode),
            fmt(band.median[blen - 1])
        ));
    }
    for (mi, band) in bands.iter().enumerate() {
        let lx = margin_l + 8.0 + mi as f64 * 110.0;
        svg.push_str(&format!(
            "  <rect x=\"{lx}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\" \
             fill-opacity=\"0.5\"/>\n",
            margin_t + 6.0,
            mode_color(&band.mode)
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\">{}</text>\n",
            lx + 16.0,
            margin_t + 16.0,
            xml_escape(&band.mode)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Extract every `attr="value"` occurrence from an SVG (test support for
/// cross-checking plots against CSVs).
pub fn svg_attribute_values(svg: &str, attr: &str) -> Vec<String> {
    let needle = format!("{attr}=\"");
    let mut out = Vec::new();
    let mut rest = svg;
    while let Some(pos) = rest.find(&needle) {
        let tail = &rest[pos + needle.len()..];
        let end = tail.find('"').unwrap_or(tail.len());
        out.push(tail[..end].to_string());
        rest = &tail[end..];
    }
    out
}
