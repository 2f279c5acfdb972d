//! The three subcommands: `simulate`, `nominate`, and `diagnostics`.
//!
//! Commands return the process exit code: 0 only when every requested
//! scheme completed every trial, with per-scheme failures enumerated on
//! standard error.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use vn_core::evaluation::{run_experiment, ExperimentConfig, ExperimentReport, ExperimentSource};
use vn_core::sbm::{separation_diagnostics, BlockAssignment, SeedPolicy};

use crate::config::{rows_to_matrix, CliConfig, SourceSpec};
use crate::dataio::load_dataset;
use crate::output;

/// Print per-scheme aggregates to stdout and failures to stderr; return
/// the number of failed trials across schemes.
fn summarize(report: &ExperimentReport, prefix: &str) -> usize {
    let mut failures = 0usize;
    for scheme in &report.schemes {
        let ap = scheme
            .mean_ap
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "-".into());
        let ari = scheme
            .mean_ari
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{prefix}{}: mean AP {ap}, mean ARI {ari} ({}/{} trials)",
            scheme.scheme.name(),
            scheme.trials_completed,
            report.trials
        );
        if scheme.failures > 0 {
            eprintln!(
                "scheme {}: {} of {} trials failed",
                scheme.scheme.name(),
                scheme.failures,
                report.trials
            );
            failures += scheme.failures;
        }
    }
    for message in &report.failure_messages {
        eprintln!("  {message}");
    }
    failures
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Run a simulation study from an SBM config; write report.json,
/// curve.csv, and table.csv into the output directory.
pub fn cmd_simulate(
    config_path: &Path,
    trials_override: Option<usize>,
    output_override: Option<PathBuf>,
) -> Result<i32> {
    let mut config = CliConfig::from_file(config_path)?;
    if let Some(trials) = trials_override {
        config.trials = trials;
    }
    let model = config.block_model()?;
    let assignment = BlockAssignment::sorted(model.block_sizes());
    let out_dir = output_override.unwrap_or_else(|| config.output_dir.clone());

    let mut experiment = ExperimentConfig::new(
        ExperimentSource::Sbm { model, assignment },
        config.schemes.clone(),
        config.seed_policy.to_policy(),
        config.param_mode,
        config.trials,
        config.master_seed,
    );
    experiment.smoothing = config.smoothing;
    experiment.fw = config.fw.to_options();
    experiment.feature_term = config.feature_term.to_term();
    experiment.feature_weight = config.feature_weight;

    let report = run_experiment(&experiment)?;
    ensure_dir(&out_dir)?;
    output::write_report_json(&report, &out_dir.join("report.json"))?;
    output::write_curve_csv(&report, &out_dir.join("curve.csv"))?;
    output::write_table_csv(&report, &out_dir.join("table.csv"))?;

    println!(
        "{} trials, chance level {:.4}, {:.1}s",
        report.trials, report.chance_level, report.wall_secs
    );
    let failures = summarize(&report, "");
    Ok(if failures == 0 { 0 } else { 1 })
}

/// Nominate on a fixed dataset over a sweep of seed counts; write
/// sweep.csv (and mapping.csv when vertex ids were renumbered).
pub fn cmd_nominate(
    config_path: &Path,
    interest_override: Option<usize>,
    output_override: Option<PathBuf>,
) -> Result<i32> {
    let config = CliConfig::from_file(config_path)?;
    let SourceSpec::Dataset {
        edges,
        labels,
        features,
        weighted,
    } = &config.source
    else {
        bail!("nominate needs a dataset source");
    };
    let interest = interest_override.or(config.interest_block);
    let (bundle, loaded) = load_dataset(edges, labels, features.as_deref(), *weighted, interest)?;
    for warning in output::loader_warnings(&loaded) {
        eprintln!("{warning}");
    }
    let out_dir = output_override.unwrap_or_else(|| config.output_dir.clone());
    ensure_dir(&out_dir)?;
    if loaded.compacted {
        output::write_mapping_csv(&loaded, &out_dir.join("mapping.csv"))?;
        eprintln!("note: vertex ids renumbered; see mapping.csv");
    }

    // Policy per sweep point: the configured policy with its count
    // replaced, or as-is for a single run.
    let sweep: Vec<(usize, SeedPolicy)> = match &config.seed_sweep {
        Some(counts) => {
            let mut counts = counts.clone();
            counts.sort_unstable();
            counts.dedup();
            counts
                .into_iter()
                .map(|m| Ok((m, config.seed_policy.with_count(m)?)))
                .collect::<Result<_>>()?
        }
        None => {
            let policy = config.seed_policy.to_policy();
            let m = match &policy {
                SeedPolicy::UniformAll { m } => *m,
                SeedPolicy::BlockRestricted { m, .. } => *m,
                SeedPolicy::Stratified { per_block } => per_block.iter().sum(),
            };
            vec![(m, policy)]
        }
    };

    let mut failures = 0usize;
    let mut reports: Vec<(usize, ExperimentReport)> = Vec::new();
    for (m, policy) in sweep {
        let mut experiment = ExperimentConfig::new(
            ExperimentSource::Dataset {
                graph: bundle.graph.clone(),
                labels: bundle.labels.clone(),
                features: bundle.features.clone(),
            },
            config.schemes.clone(),
            policy,
            config.param_mode,
            config.trials,
            config.master_seed,
        );
        experiment.smoothing = config.smoothing;
        experiment.fw = config.fw.to_options();
        experiment.feature_term = config.feature_term.to_term();
        experiment.feature_weight = config.feature_weight;

        let report = run_experiment(&experiment)?;
        println!(
            "{}, m = {m}: {} trials, chance level {:.4}, {:.1}s",
            bundle.name, report.trials, report.chance_level, report.wall_secs
        );
        failures += summarize(&report, "  ");
        reports.push((m, report));
    }

    let rows: Vec<(usize, &ExperimentReport)> = reports.iter().map(|(m, r)| (*m, r)).collect();
    output::write_sweep_csv(&rows, &out_dir.join("sweep.csv"))?;
    Ok(if failures == 0 { 0 } else { 1 })
}

/// Print separation diagnostics for an edge-probability matrix given
/// either as a JSON matrix file or as the sbm source of a config.
pub fn cmd_diagnostics(lambda_path: Option<&Path>, config_path: Option<&Path>) -> Result<i32> {
    let lambda = match (lambda_path, config_path) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let rows: Vec<Vec<f64>> = serde_json::from_str(&text)
                .with_context(|| format!("parsing {} as a JSON matrix", path.display()))?;
            rows_to_matrix(&rows)?
        }
        (None, Some(path)) => CliConfig::from_file(path)?.block_model()?.lambda().clone(),
        _ => bail!("pass exactly one of --lambda and --config"),
    };
    let d = separation_diagnostics(&lambda)?;
    println!("alpha = {:.6}", d.alpha);
    println!("beta  = {:.6}", d.beta);
    println!("c     = {:.6}", d.c);
    println!("gamma = {:.6}", d.gamma);
    println!("kappa = {:.6}", d.kappa);
    match d.condition_ratio() {
        Some(ratio) => println!("condition ratio c^2/(alpha*beta*gamma*kappa) = {ratio:.6}"),
        None => {
            println!("condition ratio c^2/(alpha*beta*gamma*kappa) = undefined (zero separation)")
        }
    }
    let hold = |ok: bool| if ok { "holds" } else { "violated" };
    println!(
        "diagonal-vs-row separation (every diagonal entry differs from the rest of its row): {}",
        hold(d.alpha > 0.0)
    );
    println!(
        "distinct-entry gaps (gamma and kappa positive): {}",
        hold(d.gamma > 0.0 && d.kappa > 0.0)
    );
    println!(
        "bounded condition ratio: {}",
        if d.condition_ratio().is_some() {
            "finite"
        } else {
            "undefined"
        }
    );
    Ok(0)
}
