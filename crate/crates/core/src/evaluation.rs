//! Metrics and the Monte-Carlo experiment harness.
//!
//! Average precision is computed in exact rational arithmetic (two
//! algebraically equivalent forms that must agree bit-for-bit), the
//! adjusted Rand index by standard pair counting, and experiments run
//! trials concurrently on per-trial random streams so reports are
//! bit-reproducible from the master seed.

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{nominate_features, FeatureSet, FeatureTerm};
use crate::matching::FwOptions;
use crate::nomination::{nominate_canonical, nominate_ml, nominate_ml_restricted, NominationList};
use crate::rng;
use crate::sbm::{
    estimate_model, sample_sbm, select_seeds, BlockAssignment, BlockModel, Graph, SeedPolicy,
    SeedSet,
};
use crate::spectral::{nominate_spectral, KmeansOptions};

/// How many times seed selection is redrawn looking for a trial with at
/// least one interesting nonseed before giving up.
const MAX_SEED_REDRAWS: usize = 1000;

/// How many per-trial failure messages a report retains verbatim.
const MAX_FAILURE_MESSAGES: usize = 20;

// ---------------------------------------------------------------------------
// Truth labels
// ---------------------------------------------------------------------------

/// Which nonseed vertices belong to the block of interest (block 0).
#[derive(Debug, Clone)]
pub struct TruthLabels {
    flags: Vec<Option<bool>>,
    u1: usize,
    u: usize,
}

impl TruthLabels {
    /// Mark each nonseed of `assignment` as interesting iff it lies in
    /// block 0.
    pub fn from_assignment(assignment: &BlockAssignment, seeds: &SeedSet) -> Result<Self> {
        if assignment.n() != seeds.n() {
            return Err(Error::Dimension(format!(
                "assignment over {} vertices but seeds over {}",
                assignment.n(),
                seeds.n()
            )));
        }
        let mask = seeds.seed_mask();
        let mut u1 = 0;
        let mut u = 0;
        let flags = (0..assignment.n())
            .map(|v| {
                if mask[v] {
                    None
                } else {
                    u += 1;
                    let interesting = assignment.label(v) == 0;
                    if interesting {
                        u1 += 1;
                    }
                    Some(interesting)
                }
            })
            .collect();
        Ok(TruthLabels { flags, u1, u })
    }

    /// Count of interesting nonseeds.
    pub fn u1(&self) -> usize {
        self.u1
    }

    /// Count of nonseeds.
    pub fn u(&self) -> usize {
        self.u
    }

    /// Whether vertex `v` is interesting; `None` for seeds.
    pub fn is_interesting(&self, v: usize) -> Option<bool> {
        self.flags.get(v).copied().flatten()
    }

    /// Per-rank interest indicators for a nomination list, validating that
    /// the list ranks every nonseed exactly once and nothing else.
    pub fn flags_for(&self, list: &NominationList) -> Result<Vec<bool>> {
        if list.entries.len() != self.u {
            return Err(Error::Dimension(format!(
                "list ranks {} vertices but there are {} nonseeds",
                list.entries.len(),
                self.u
            )));
        }
        let mut seen = vec![false; self.flags.len()];
        let mut out = Vec::with_capacity(self.u);
        for entry in &list.entries {
            let flag = self.flags.get(entry.vertex).copied().flatten();
            match flag {
                Some(f) if !seen[entry.vertex] => {
                    seen[entry.vertex] = true;
                    out.push(f);
                }
                Some(_) => {
                    return Err(Error::InvalidInput(format!(
                        "vertex {} ranked twice",
                        entry.vertex
                    )))
                }
                None => {
                    return Err(Error::InvalidInput(format!(
                        "ranked vertex {} is not a nonseed",
                        entry.vertex
                    )))
                }
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Average precision
// ---------------------------------------------------------------------------

/// Convert an exact rational to the nearest f64 without overflowing huge
/// numerators: split off the integer part and scale the remainder by 2^63.
fn rational_to_f64(q: &BigRational) -> f64 {
    if q.is_zero() {
        return 0.0;
    }
    let negative = q.is_negative();
    let n = q.numer().abs();
    let d = q.denom().abs();
    let trunc = (&n / &d).to_f64().unwrap_or(f64::INFINITY);
    let rem = &n % &d;
    let scaled = (rem << 63usize) / &d;
    let frac = scaled.to_f64().unwrap_or(0.0) / (1u64 << 63) as f64;
    let value = trunc + frac;
    if negative {
        -value
    } else {
        value
    }
}

fn check_ap_inputs(flags: &[bool], u1: usize) -> Result<()> {
    if u1 == 0 {
        return Err(Error::Degenerate(
            "average precision is undefined with no interesting vertices".into(),
        ));
    }
    if u1 > flags.len() {
        return Err(Error::Dimension(format!(
            "u1 = {u1} exceeds list length {}",
            flags.len()
        )));
    }
    Ok(())
}

/// Average precision from per-rank interest indicators: the mean, over the
/// first u₁ ranks, of the running precision at each rank. Computed in exact
/// rational arithmetic and converted once at the end.
pub fn average_precision_from_flags(flags: &[bool], u1: usize) -> Result<f64> {
    check_ap_inputs(flags, u1)?;
    let mut hits = 0u64;
    let mut total = BigRational::zero();
    for (i, &flag) in flags.iter().take(u1).enumerate() {
        if flag {
            hits += 1;
        }
        total += BigRational::new(BigInt::from(hits), BigInt::from(i as u64 + 1));
    }
    Ok(rational_to_f64(&(total / BigInt::from(u1 as u64))))
}

/// The same value written as a convex combination of the indicators:
/// AP = Σ_i (H_{u₁} − H_{i−1})/u₁ · 1{rank i interesting}, with H the
/// harmonic numbers. Agrees with [`average_precision_from_flags`] exactly.
pub fn average_precision_harmonic_from_flags(flags: &[bool], u1: usize) -> Result<f64> {
    check_ap_inputs(flags, u1)?;
    let mut harmonics = Vec::with_capacity(u1 + 1);
    harmonics.push(BigRational::zero());
    for j in 1..=u1 {
        let next = &harmonics[j - 1] + BigRational::new(BigInt::from(1), BigInt::from(j as u64));
        harmonics.push(next);
    }
    let mut total = BigRational::zero();
    for (i, &flag) in flags.iter().take(u1).enumerate() {
        if flag {
            total += &harmonics[u1] - &harmonics[i];
        }
    }
    Ok(rational_to_f64(&(total / BigInt::from(u1 as u64))))
}

/// Average precision of a nomination list against truth labels.
pub fn average_precision(list: &NominationList, truth: &TruthLabels) -> Result<f64> {
    let flags = truth.flags_for(list)?;
    average_precision_from_flags(&flags, truth.u1())
}

/// Harmonic-form average precision of a nomination list.
pub fn average_precision_harmonic(list: &NominationList, truth: &TruthLabels) -> Result<f64> {
    let flags = truth.flags_for(list)?;
    average_precision_harmonic_from_flags(&flags, truth.u1())
}

// ---------------------------------------------------------------------------
// Adjusted Rand index
// ---------------------------------------------------------------------------

/// Standard pair-counting adjusted Rand index between two partitions of
/// the same vertex set (labels are arbitrary ids). Returns 1 when both
/// partitions are trivial in the same way (the expected-index denominator
/// vanishes only for identical trivial partitions).
pub fn adjusted_rand_index(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "partitions over {} and {} vertices",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("empty partitions".into()));
    }
    let mut cells: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *cells.entry((p, t)).or_insert(0) += 1;
        *rows.entry(p).or_insert(0) += 1;
        *cols.entry(t).or_insert(0) += 1;
    }
    let comb2 = |x: u64| (x * x.saturating_sub(1) / 2) as f64;
    let sum_cells: f64 = cells.values().map(|&c| comb2(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| comb2(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| comb2(c)).sum();
    let total = comb2(pred.len() as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_rows * sum_cols / total;
    let denom = 0.5 * (sum_rows + sum_cols) - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((sum_cells - expected) / denom)
}

// ---------------------------------------------------------------------------
// Mean nomination curves
// ---------------------------------------------------------------------------

/// Per-rank empirical probability that the rank-k vertex is interesting,
/// with standard errors, aggregated over trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanNominationCurve {
    pub prob: Vec<f64>,
    pub stderr: Vec<f64>,
    pub trials: usize,
}

/// Aggregate per-trial interest indicators into a mean nomination curve.
pub fn mean_nomination_curve_from_flags(flags: &[Vec<bool>]) -> Result<MeanNominationCurve> {
    if flags.is_empty() {
        return Err(Error::InvalidInput(
            "cannot average an empty collection of lists".into(),
        ));
    }
    let u = flags[0].len();
    if flags.iter().any(|f| f.len() != u) {
        return Err(Error::Dimension("lists have differing lengths".into()));
    }
    let t = flags.len();
    let mut prob = Vec::with_capacity(u);
    let mut stderr = Vec::with_capacity(u);
    for k in 0..u {
        let count = flags.iter().filter(|f| f[k]).count();
        let p = count as f64 / t as f64;
        prob.push(p);
        if t >= 2 {
            let ss = count as f64 * (1.0 - p) * (1.0 - p) + (t - count) as f64 * p * p;
            let var = ss / (t - 1) as f64;
            stderr.push((var / t as f64).sqrt());
        } else {
            stderr.push(0.0);
        }
    }
    Ok(MeanNominationCurve {
        prob,
        stderr,
        trials: t,
    })
}

/// Mean nomination curve of several lists against shared truth labels.
pub fn mean_nomination_curve(
    lists: &[NominationList],
    truth: &TruthLabels,
) -> Result<MeanNominationCurve> {
    let flags: Vec<Vec<bool>> = lists
        .iter()
        .map(|l| truth.flags_for(l))
        .collect::<Result<_>>()?;
    mean_nomination_curve_from_flags(&flags)
}

// ---------------------------------------------------------------------------
// Experiment harness
// ---------------------------------------------------------------------------

/// Nomination schemes the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeSpec {
    /// Seeded-graph-matching nomination.
    Ml,
    /// Seed-restricted nomination (exact assignment on seed edges only).
    Restricted,
    /// Exact posterior nomination by membership enumeration.
    Canonical,
    /// Spectral embedding + K-means, with sphere projection.
    Spectral,
    /// Spectral without sphere projection.
    SpectralRaw,
    /// Seeded-graph-matching with a feature term.
    MlFeatures,
}

impl SchemeSpec {
    pub const ALL: [SchemeSpec; 6] = [
        SchemeSpec::Ml,
        SchemeSpec::Restricted,
        SchemeSpec::Canonical,
        SchemeSpec::Spectral,
        SchemeSpec::SpectralRaw,
        SchemeSpec::MlFeatures,
    ];

    /// Stable lowercase name (matches the serialized form).
    pub fn name(self) -> &'static str {
        match self {
            SchemeSpec::Ml => "ml",
            SchemeSpec::Restricted => "restricted",
            SchemeSpec::Canonical => "canonical",
            SchemeSpec::Spectral => "spectral",
            SchemeSpec::SpectralRaw => "spectral-raw",
            SchemeSpec::MlFeatures => "ml-features",
        }
    }

    /// Random-stream lane, so adding or removing schemes never perturbs
    /// another scheme's draws.
    fn lane(self) -> u64 {
        match self {
            SchemeSpec::Ml => 1,
            SchemeSpec::Restricted => 2,
            SchemeSpec::Canonical => 3,
            SchemeSpec::Spectral => 4,
            SchemeSpec::SpectralRaw => 5,
            SchemeSpec::MlFeatures => 6,
        }
    }

    fn needs_lambda(self) -> bool {
        !matches!(self, SchemeSpec::Spectral | SchemeSpec::SpectralRaw)
    }

    /// Whether the scheme's block guesses enter the ARI (the enumeration
    /// scheme reports marginal modes rather than a matched partition, so it
    /// is excluded).
    fn reports_ari(self) -> bool {
        !matches!(self, SchemeSpec::Canonical)
    }
}

/// Whether schemes see the true model parameters or estimates from seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamMode {
    Known,
    Estimated,
}

/// Where each trial's graph comes from.
#[derive(Debug, Clone)]
pub enum ExperimentSource {
    /// Sample a fresh graph from the model each trial.
    Sbm {
        model: BlockModel,
        assignment: BlockAssignment,
    },
    /// A fixed observed graph; trials vary only in seed selection.
    Dataset {
        graph: Graph,
        labels: BlockAssignment,
        features: Option<FeatureSet>,
    },
}

impl ExperimentSource {
    fn assignment(&self) -> &BlockAssignment {
        match self {
            ExperimentSource::Sbm { assignment, .. } => assignment,
            ExperimentSource::Dataset { labels, .. } => labels,
        }
    }
}

/// Full experiment description; reproducible from `master_seed`.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub source: ExperimentSource,
    pub schemes: Vec<SchemeSpec>,
    pub seed_policy: SeedPolicy,
    pub param_mode: ParamMode,
    /// Apply add-one smoothing when estimating edge probabilities.
    pub smoothing: bool,
    pub trials: usize,
    pub master_seed: u64,
    pub fw: FwOptions,
    pub feature_term: FeatureTerm,
    /// Weight of the feature term in the matching objective; defaults to
    /// the nonseed count.
    pub feature_weight: Option<f64>,
}

impl ExperimentConfig {
    /// A config with library defaults for the tuning knobs.
    pub fn new(
        source: ExperimentSource,
        schemes: Vec<SchemeSpec>,
        seed_policy: SeedPolicy,
        param_mode: ParamMode,
        trials: usize,
        master_seed: u64,
    ) -> Self {
        ExperimentConfig {
            source,
            schemes,
            seed_policy,
            param_mode,
            smoothing: true,
            trials,
            master_seed,
            fw: FwOptions::default(),
            feature_term: FeatureTerm::default(),
            feature_weight: None,
        }
    }
}

/// Aggregates for one scheme.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeReport {
    pub scheme: SchemeSpec,
    pub mean_ap: Option<f64>,
    pub se_ap: Option<f64>,
    pub mean_ari: Option<f64>,
    pub se_ari: Option<f64>,
    pub curve: MeanNominationCurve,
    pub trials_completed: usize,
    pub failures: usize,
}

/// Everything an experiment run reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schemes: Vec<SchemeReport>,
    /// Mean per-trial chance level u₁/u.
    pub chance_level: f64,
    pub trials: usize,
    pub param_mode: ParamMode,
    pub master_seed: u64,
    pub wall_secs: f64,
    /// Up to [`MAX_FAILURE_MESSAGES`] verbatim per-trial failure messages.
    pub failure_messages: Vec<String>,
}

struct SchemeOutcome {
    ap: f64,
    ari: Option<f64>,
    flags: Vec<bool>,
}

struct TrialOutcome {
    u1: usize,
    u: usize,
    outcomes: Vec<std::result::Result<SchemeOutcome, String>>,
}

fn validate_config(config: &ExperimentConfig) -> Result<()> {
    if config.trials == 0 {
        return Err(Error::InvalidInput("need at least one trial".into()));
    }
    if config.schemes.is_empty() {
        return Err(Error::InvalidInput("no schemes enabled".into()));
    }
    for (i, s) in config.schemes.iter().enumerate() {
        if config.schemes[..i].contains(s) {
            return Err(Error::InvalidInput(format!(
                "scheme {} listed twice",
                s.name()
            )));
        }
    }
    match &config.source {
        ExperimentSource::Sbm { model, assignment } => {
            if model.n() != assignment.n() || model.k() != assignment.k() {
                return Err(Error::Dimension(
                    "model and assignment shapes disagree".into(),
                ));
            }
            if config.schemes.contains(&SchemeSpec::MlFeatures) {
                return Err(Error::InvalidInput(
                    "the feature scheme needs a dataset source with features".into(),
                ));
            }
        }
        ExperimentSource::Dataset {
            graph,
            labels,
            features,
        } => {
            if graph.n() != labels.n() {
                return Err(Error::Dimension(format!(
                    "graph has {} vertices but labels {}",
                    graph.n(),
                    labels.n()
                )));
            }
            if let Some(f) = features {
                if f.n() != graph.n() {
                    return Err(Error::Dimension(format!(
                        "{} feature rows for {} vertices",
                        f.n(),
                        graph.n()
                    )));
                }
            } else if config.schemes.contains(&SchemeSpec::MlFeatures) {
                return Err(Error::InvalidInput(
                    "the feature scheme needs a dataset source with features".into(),
                ));
            }
        }
    }
    Ok(())
}

/// The Λ the schemes see in Known mode: the model's own matrix for a
/// sampled source, or a full-graph smoothed estimate for a dataset.
fn known_lambda(config: &ExperimentConfig) -> Result<Option<DMatrix<f64>>> {
    if !config.schemes.iter().any(|s| s.needs_lambda()) {
        return Ok(None);
    }
    match (&config.source, config.param_mode) {
        (_, ParamMode::Estimated) => Ok(None),
        (ExperimentSource::Sbm { model, .. }, ParamMode::Known) => Ok(Some(model.lambda().clone())),
        (ExperimentSource::Dataset { graph, labels, .. }, ParamMode::Known) => {
            let everyone = SeedSet::new(labels, (0..labels.n()).collect())?;
            let fit = estimate_model(graph, &everyone, true)?;
            Ok(Some(fit.lambda_hat().clone()))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_scheme(
    scheme: SchemeSpec,
    graph: &Graph,
    seeds: &SeedSet,
    lambda: Option<&DMatrix<f64>>,
    block_sizes: &[usize],
    features: Option<&FeatureSet>,
    config: &ExperimentConfig,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<NominationList> {
    let lam = || {
        lambda.ok_or_else(|| {
            Error::InvalidInput("scheme needs edge probabilities but none are available".into())
        })
    };
    match scheme {
        SchemeSpec::Ml => nominate_ml(graph, seeds, lam()?, block_sizes, &config.fw, rng),
        SchemeSpec::Restricted => nominate_ml_restricted(graph, seeds, lam()?, block_sizes, rng),
        SchemeSpec::Canonical => nominate_canonical(graph, seeds, lam()?, block_sizes, rng),
        SchemeSpec::Spectral => nominate_spectral(
            graph,
            seeds,
            block_sizes.len(),
            true,
            &KmeansOptions::default(),
            rng,
        ),
        SchemeSpec::SpectralRaw => nominate_spectral(
            graph,
            seeds,
            block_sizes.len(),
            false,
            &KmeansOptions::default(),
            rng,
        ),
        SchemeSpec::MlFeatures => nominate_features(
            graph,
            seeds,
            lam()?,
            block_sizes,
            features.ok_or_else(|| Error::InvalidInput("no features available".into()))?,
            config.feature_term,
            config.feature_weight,
            &config.fw,
            rng,
        ),
    }
}

/// ARI of the scheme's block guesses against the true labels, over
/// nonseeds. `None` when the scheme doesn't report a partition.
fn scheme_ari(
    scheme: SchemeSpec,
    list: &NominationList,
    assignment: &BlockAssignment,
) -> Result<Option<f64>> {
    if !scheme.reports_ari() {
        return Ok(None);
    }
    let mut entries: Vec<(usize, Option<usize>)> =
        list.entries.iter().map(|e| (e.vertex, e.block)).collect();
    entries.sort_unstable();
    let mut pred = Vec::with_capacity(entries.len());
    let mut truth = Vec::with_capacity(entries.len());
    for (v, block) in entries {
        match block {
            Some(b) => {
                pred.push(b);
                truth.push(assignment.label(v));
            }
            None => return Ok(None),
        }
    }
    if pred.is_empty() {
        return Ok(None);
    }
    adjusted_rand_index(&pred, &truth).map(Some)
}

fn run_trial(
    config: &ExperimentConfig,
    known: Option<&DMatrix<f64>>,
    block_sizes: &[usize],
    trial: usize,
) -> Result<TrialOutcome> {
    let mut sample_rng = rng::stream(config.master_seed, &[0, trial as u64]);
    let assignment = config.source.assignment();
    let sampled;
    let (graph, features): (&Graph, Option<&FeatureSet>) = match &config.source {
        ExperimentSource::Sbm { model, assignment } => {
            sampled = sample_sbm(model, assignment, &mut sample_rng)?;
            (&sampled, None)
        }
        ExperimentSource::Dataset {
            graph, features, ..
        } => (graph, features.as_ref()),
    };
    let (seeds, truth) = {
        let mut drawn = None;
        for _ in 0..MAX_SEED_REDRAWS {
            let s = select_seeds(assignment, &config.seed_policy, &mut sample_rng)?;
            let t = TruthLabels::from_assignment(assignment, &s)?;
            if t.u1() >= 1 {
                drawn = Some((s, t));
                break;
            }
        }
        drawn.ok_or_else(|| {
            Error::InfeasibleSeeds(format!(
                "no interesting nonseeds after {MAX_SEED_REDRAWS} seed draws (trial {trial})"
            ))
        })?
    };
    let estimated;
    let lambda: Option<&DMatrix<f64>> = match config.param_mode {
        ParamMode::Known => known,
        ParamMode::Estimated => {
            if config.schemes.iter().any(|s| s.needs_lambda()) {
                match estimate_model(graph, &seeds, config.smoothing) {
                    Ok(fit) => {
                        estimated = fit;
                        Some(estimated.lambda_hat())
                    }
                    Err(e) => {
                        // Estimation failure disables the λ-dependent
                        // schemes for this trial but is not fatal.
                        let outcomes = config
                            .schemes
                            .iter()
                            .map(|s| {
                                if s.needs_lambda() {
                                    Err(format!("estimation failed: {e}"))
                                } else {
                                    run_scheme_outcome(
                                        *s,
                                        graph,
                                        &seeds,
                                        None,
                                        block_sizes,
                                        features,
                                        config,
                                        assignment,
                                        &truth,
                                        trial,
                                    )
                                }
                            })
                            .collect();
                        return Ok(TrialOutcome {
                            u1: truth.u1(),
                            u: truth.u(),
                            outcomes,
                        });
                    }
                }
            } else {
                None
            }
        }
    };
    let outcomes = config
        .schemes
        .iter()
        .map(|s| {
            run_scheme_outcome(
                *s,
                graph,
                &seeds,
                lambda,
                block_sizes,
                features,
                config,
                assignment,
                &truth,
                trial,
            )
        })
        .collect();
    Ok(TrialOutcome {
        u1: truth.u1(),
        u: truth.u(),
        outcomes,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_scheme_outcome(
    scheme: SchemeSpec,
    graph: &Graph,
    seeds: &SeedSet,
    lambda: Option<&DMatrix<f64>>,
    block_sizes: &[usize],
    features: Option<&FeatureSet>,
    config: &ExperimentConfig,
    assignment: &BlockAssignment,
    truth: &TruthLabels,
    trial: usize,
) -> std::result::Result<SchemeOutcome, String> {
    let mut scheme_rng = rng::stream(config.master_seed, &[scheme.lane(), trial as u64]);
    let list = run_scheme(
        scheme,
        graph,
        seeds,
        lambda,
        block_sizes,
        features,
        config,
        &mut scheme_rng,
    )
    .map_err(|e| e.to_string())?;
    let flags = truth.flags_for(&list).map_err(|e| e.to_string())?;
    let ap = average_precision_from_flags(&flags, truth.u1()).map_err(|e| e.to_string())?;
    let ari = scheme_ari(scheme, &list, assignment).map_err(|e| e.to_string())?;
    let _ = trial;
    Ok(SchemeOutcome { ap, ari, flags })
}

fn mean_and_se(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let t = values.len() as f64;
    let mean = values.iter().sum::<f64>() / t;
    if values.len() < 2 {
        return (Some(mean), Some(0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (t - 1.0);
    (Some(mean), Some((var / t).sqrt()))
}

/// Run the configured Monte-Carlo experiment: per trial, obtain a graph,
/// draw seeds (redrawing while no nonseed is interesting), run every
/// enabled scheme on its own random lane, and aggregate AP/ARI and mean
/// nomination curves with standard errors. Per-scheme failures are counted
/// and reported, not fatal. Identical configs and master seeds give
/// bit-identical reports.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    validate_config(config)?;
    let known = known_lambda(config)?;
    let block_sizes = config.source.assignment().counts();
    let trials: Vec<TrialOutcome> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, known.as_ref(), &block_sizes, t))
        .collect::<Result<Vec<_>>>()?;
    let chance_level =
        trials.iter().map(|t| t.u1 as f64 / t.u as f64).sum::<f64>() / config.trials as f64;
    let mut failure_messages = Vec::new();
    let mut schemes = Vec::with_capacity(config.schemes.len());
    for (si, &scheme) in config.schemes.iter().enumerate() {
        let mut aps = Vec::new();
        let mut aris = Vec::new();
        let mut flag_sets = Vec::new();
        let mut failures = 0;
        for (ti, trial) in trials.iter().enumerate() {
            match &trial.outcomes[si] {
                Ok(outcome) => {
                    aps.push(outcome.ap);
                    if let Some(a) = outcome.ari {
                        aris.push(a);
                    }
                    flag_sets.push(outcome.flags.clone());
                }
                Err(msg) => {
                    failures += 1;
                    if failure_messages.len() < MAX_FAILURE_MESSAGES {
                        failure_messages.push(format!("trial {ti}, {}: {msg}", scheme.name()));
                    }
                }
            }
        }
        let (mean_ap, se_ap) = mean_and_se(&aps);
        let (mean_ari, se_ari) = if scheme.reports_ari() {
            mean_and_se(&aris)
        } else {
            (None, None)
        };
        let curve = if flag_sets.is_empty() {
            MeanNominationCurve {
                prob: vec![],
                stderr: vec![],
                trials: 0,
            }
        } else {
            mean_nomination_curve_from_flags(&flag_sets)?
        };
        schemes.push(SchemeReport {
            scheme,
            mean_ap,
            se_ap,
            mean_ari,
            se_ari,
            curve,
            trials_completed: aps.len(),
            failures,
        });
    }
    Ok(ExperimentReport {
        schemes,
        chance_level,
        trials: config.trials,
        param_mode: config.param_mode,
        master_seed: config.master_seed,
        wall_secs: start.elapsed().as_secs_f64(),
        failure_messages,
    })
}

// ---------------------------------------------------------------------------
// Benchmark presets
// ---------------------------------------------------------------------------

/// Benchmark model families used across the test suite and CLI examples.
pub mod presets {
    use super::*;

    /// A three-block edge-probability family: a fixed base matrix blended
    /// toward a flat 0.5 background. `t = 1` keeps the full block signal,
    /// `t = 0` removes it entirely.
    pub fn blended_three_block_lambda(t: f64) -> Result<DMatrix<f64>> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::ProbabilityRange { value: t });
        }
        let base = DMatrix::from_row_slice(3, 3, &[0.5, 0.3, 0.4, 0.3, 0.8, 0.6, 0.4, 0.6, 0.3]);
        Ok(base.map(|b| t * b + (1.0 - t) * 0.5))
    }

    /// Ten-vertex three-block benchmark (blocks 4/3/3, full signal).
    pub fn small_model() -> BlockModel {
        BlockModel::new(vec![4, 3, 3], blended_three_block_lambda(1.0).unwrap())
            .expect("preset is valid")
    }

    /// Five-hundred-vertex three-block benchmark (blocks 200/150/150,
    /// signal blended at t = 0.3).
    pub fn medium_model() -> BlockModel {
        BlockModel::new(
            vec![200, 150, 150],
            blended_three_block_lambda(0.3).unwrap(),
        )
        .expect("preset is valid")
    }
}
