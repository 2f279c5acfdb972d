//! JSON experiment configuration: a serde mirror of the library's
//! `ExperimentConfig` plus the file-source and output fields only the
//! command line needs.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use vn_core::evaluation::{ParamMode, SchemeSpec};
use vn_core::matching::{FwInit, FwOptions};
use vn_core::sbm::{BlockModel, SeedPolicy};

/// Top-level config document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    /// Where graphs come from: an SBM to sample or files to load.
    pub source: SourceSpec,
    /// Schemes to run, in report order.
    pub schemes: Vec<SchemeSpec>,
    pub seed_policy: SeedPolicySpec,
    /// Seed-count sweep for `nominate`; each entry replaces the count in
    /// `seed_policy`. Omit for a single run at the configured count.
    #[serde(default)]
    pub seed_sweep: Option<Vec<usize>>,
    pub param_mode: ParamMode,
    /// Add-one smoothing for estimated parameters.
    #[serde(default = "default_smoothing")]
    pub smoothing: bool,
    pub trials: usize,
    pub master_seed: u64,
    /// Matcher options; defaults match the library.
    #[serde(default)]
    pub fw: FwSpec,
    #[serde(default)]
    pub feature_term: FeatureTermSpec,
    /// Weight of the feature term; omit to use the nonseed count.
    #[serde(default)]
    pub feature_weight: Option<f64>,
    /// Label value (as written in the label file) of the block of
    /// interest; omit to use the first label that appears.
    #[serde(default)]
    pub interest_block: Option<usize>,
    pub output_dir: PathBuf,
}

fn default_smoothing() -> bool {
    true
}

/// Graph source: exactly one of the two variants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    /// Sample fresh graphs from a block model each trial.
    Sbm {
        block_sizes: Vec<usize>,
        /// Symmetric K×K edge-probability matrix, row by row.
        lambda: Vec<Vec<f64>>,
    },
    /// A fixed dataset; trials vary only in seed selection.
    Dataset {
        edges: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        features: Option<PathBuf>,
        #[serde(default)]
        weighted: bool,
    },
}

/// Serde mirror of [`SeedPolicy`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum SeedPolicySpec {
    UniformAll { m: usize },
    BlockRestricted { m: usize, block: usize },
    Stratified { per_block: Vec<usize> },
}

impl SeedPolicySpec {
    pub fn to_policy(&self) -> SeedPolicy {
        match self {
            SeedPolicySpec::UniformAll { m } => SeedPolicy::UniformAll { m: *m },
            SeedPolicySpec::BlockRestricted { m, block } => SeedPolicy::BlockRestricted {
                m: *m,
                block: *block,
            },
            SeedPolicySpec::Stratified { per_block } => SeedPolicy::Stratified {
                per_block: per_block.clone(),
            },
        }
    }

    /// The same policy with its seed count replaced, for sweeps.
    pub fn with_count(&self, m: usize) -> Result<SeedPolicy> {
        match self {
            SeedPolicySpec::UniformAll { .. } => Ok(SeedPolicy::UniformAll { m }),
            SeedPolicySpec::BlockRestricted { block, .. } => {
                Ok(SeedPolicy::BlockRestricted { m, block: *block })
            }
            SeedPolicySpec::Stratified { .. } => {
                bail!("seed_sweep needs a single-count seed policy, not stratified")
            }
        }
    }
}

/// Serde mirror of [`FwOptions`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FwSpec {
    pub max_iters: usize,
    pub tol: f64,
    pub restarts: usize,
    pub init: FwInitSpec,
}

impl Default for FwSpec {
    fn default() -> Self {
        let d = FwOptions::default();
        FwSpec {
            max_iters: d.max_iters,
            tol: d.tol,
            restarts: d.restarts,
            init: FwInitSpec::Barycenter,
        }
    }
}

impl FwSpec {
    pub fn to_options(&self) -> FwOptions {
        FwOptions {
            max_iters: self.max_iters,
            tol: self.tol,
            restarts: self.restarts,
            init: match self.init {
                FwInitSpec::Barycenter => FwInit::Barycenter,
                FwInitSpec::Identity => FwInit::Identity,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FwInitSpec {
    Barycenter,
    Identity,
}

/// Serde mirror of [`vn_core::features::FeatureTerm`].
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureTermSpec {
    #[default]
    LogDensity,
    RawDensity,
    MeanFeature,
}

impl FeatureTermSpec {
    pub fn to_term(self) -> vn_core::features::FeatureTerm {
        match self {
            FeatureTermSpec::LogDensity => vn_core::features::FeatureTerm::LogDensity,
            FeatureTermSpec::RawDensity => vn_core::features::FeatureTerm::RawDensity,
            FeatureTermSpec::MeanFeature => vn_core::features::FeatureTerm::MeanFeature,
        }
    }
}

impl CliConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: CliConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        if config.trials == 0 {
            bail!("trials must be at least 1");
        }
        Ok(config)
    }

    /// Build the block model of an SBM source.
    pub fn block_model(&self) -> Result<BlockModel> {
        match &self.source {
            SourceSpec::Sbm {
                block_sizes,
                lambda,
            } => Ok(BlockModel::new(
                block_sizes.clone(),
                rows_to_matrix(lambda)?,
            )?),
            SourceSpec::Dataset { .. } => bail!("this command needs an sbm source"),
        }
    }
}

/// Parse a row-of-rows matrix, validating rectangularity.
pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let k = rows.len();
    if k == 0 {
        bail!("matrix has no rows");
    }
    if rows.iter().any(|r| r.len() != k) {
        bail!("matrix rows must all have length {k}");
    }
    Ok(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
}
