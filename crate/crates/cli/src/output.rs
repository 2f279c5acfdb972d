//! Report emission: JSON aggregates plus small fixed-schema CSV files.
//!
//! CSV schemas (header always present, rows in deterministic order):
//!
//! - `curve.csv`: scheme, rank, prob, stderr — one row per scheme and rank.
//! - `table.csv`: scheme, param_mode, mean_ap, se_ap, mean_ari, se_ari.
//! - `sweep.csv`: scheme, m, mean_ap, se_ap, mean_ari, se_ari.
//! - `mapping.csv`: compact, original — emitted when vertex ids were
//!   renumbered on load.

use std::path::Path;

use anyhow::{Context, Result};
use vn_core::evaluation::{ExperimentReport, ParamMode};

use crate::dataio::LoadedGraph;

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Format an optional statistic; absent values (schemes without the
/// metric) print as empty fields.
fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

fn mode_name(mode: ParamMode) -> &'static str {
    match mode {
        ParamMode::Known => "known",
        ParamMode::Estimated => "estimated",
    }
}

/// Full aggregates as JSON.
pub fn write_report_json(report: &ExperimentReport, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(report).context("serializing report")?;
    write_file(path, &(json + "\n"))
}

/// Per-rank mean nomination curves, all schemes stacked.
pub fn write_curve_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut out = String::from("scheme,rank,prob,stderr\n");
    for scheme in &report.schemes {
        for (idx, (&p, &se)) in scheme
            .curve
            .prob
            .iter()
            .zip(&scheme.curve.stderr)
            .enumerate()
        {
            out.push_str(&format!(
                "{},{},{p:.6},{se:.6}\n",
                scheme.scheme.name(),
                idx + 1
            ));
        }
    }
    write_file(path, &out)
}

/// One summary row per scheme.
pub fn write_table_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut out = String::from("scheme,param_mode,mean_ap,se_ap,mean_ari,se_ari\n");
    for scheme in &report.schemes {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            scheme.scheme.name(),
            mode_name(report.param_mode),
            opt(scheme.mean_ap),
            opt(scheme.se_ap),
            opt(scheme.mean_ari),
            opt(scheme.se_ari),
        ));
    }
    write_file(path, &out)
}

/// Seed-count sweep: one row per (m, scheme), m ascending outermost.
pub fn write_sweep_csv(rows: &[(usize, &ExperimentReport)], path: &Path) -> Result<()> {
    let mut out = String::from("scheme,m,mean_ap,se_ap,mean_ari,se_ari\n");
    for (m, report) in rows {
        for scheme in &report.schemes {
            out.push_str(&format!(
                "{},{m},{},{},{},{}\n",
                scheme.scheme.name(),
                opt(scheme.mean_ap),
                opt(scheme.se_ap),
                opt(scheme.mean_ari),
                opt(scheme.se_ari),
            ));
        }
    }
    write_file(path, &out)
}

/// Original-id mapping for a compacted graph.
pub fn write_mapping_csv(loaded: &LoadedGraph, path: &Path) -> Result<()> {
    let mut out = String::from("compact,original\n");
    for (compact, original) in loaded.original_ids.iter().enumerate() {
        out.push_str(&format!("{compact},{original}\n"));
    }
    write_file(path, &out)
}

/// Loader warnings, printed to standard error by the caller.
pub fn loader_warnings(loaded: &LoadedGraph) -> Vec<String> {
    let mut warnings = Vec::new();
    if loaded.self_loops_dropped > 0 {
        warnings.push(format!(
            "warning: dropped {} self-loop(s)",
            loaded.self_loops_dropped
        ));
    }
    if loaded.duplicates_collapsed > 0 {
        warnings.push(format!(
            "warning: collapsed {} duplicate edge(s), keeping the largest weight",
            loaded.duplicates_collapsed
        ));
    }
    warnings
}
