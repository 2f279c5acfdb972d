//! Vertex features and the feature-aware nomination scheme.
//!
//! Features are real vectors, modeled per block as diagonal-covariance
//! Gaussians fitted from the seed vertices. The matcher gains a linear
//! term rewarding assignments whose slots' block densities fit the vertex
//! features, and the ranking scores use the joint log-likelihood of graph
//! and features.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matching::FwOptions;
use crate::nomination::{nominate_matched, NominationList};
use crate::sbm::{Graph, SeedSet};

/// Variance floor for fitted feature densities: degenerate sample variances
/// (single seed, identical observations) are raised to this value so
/// densities stay proper.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// One feature vector per vertex (rows).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    data: DMatrix<f64>,
}

impl FeatureSet {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.ncols() == 0 {
            return Err(Error::InvalidInput(
                "features need at least one dimension".into(),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("features must be finite".into()));
        }
        Ok(FeatureSet { data })
    }

    /// Vertex count.
    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }
}

/// Per-block diagonal-Gaussian feature densities: row k holds block k's
/// mean and variance per dimension.
#[derive(Debug, Clone)]
pub struct FeatureDensities {
    mean: DMatrix<f64>,
    var: DMatrix<f64>,
}

impl FeatureDensities {
    pub fn k(&self) -> usize {
        self.mean.nrows()
    }

    pub fn dim(&self) -> usize {
        self.mean.ncols()
    }

    pub fn mean(&self) -> &DMatrix<f64> {
        &self.mean
    }

    pub fn variance(&self) -> &DMatrix<f64> {
        &self.var
    }

    /// Log-density ln f̂_k(x) of one feature vector under block k, computed
    /// analytically (never through a raw density that could underflow to
    /// zero before the logarithm).
    pub fn log_density(&self, block: usize, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim(), "feature dimension mismatch");
        let mut total = 0.0;
        for (t, &xt) in x.iter().enumerate() {
            let mu = self.mean[(block, t)];
            let v = self.var[(block, t)];
            total += -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (xt - mu).powi(2) / (2.0 * v);
        }
        total
    }

    /// The K×u table of log-densities for the given vertices (columns).
    pub fn log_density_table(&self, features: &FeatureSet, vertices: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.k(), vertices.len(), |k, i| {
            let row: Vec<f64> = features.data.row(vertices[i]).iter().copied().collect();
            self.log_density(k, &row)
        })
    }
}

/// Fit per-block diagonal Gaussians from the seed vertices' features: the
/// sample mean and the maximum-likelihood variance (divisor m_k), floored
/// at [`VARIANCE_FLOOR`]. Every block must have at least one seed.
pub fn estimate_feature_densities(
    features: &FeatureSet,
    seeds: &SeedSet,
) -> Result<FeatureDensities> {
    if features.n() != seeds.n() {
        return Err(Error::Dimension(format!(
            "{} feature rows for {} vertices",
            features.n(),
            seeds.n()
        )));
    }
    let k = seeds.k();
    let d = features.dim();
    if let Some(empty) = seeds.per_block().iter().position(|&c| c == 0) {
        return Err(Error::InfeasibleSeeds(format!(
            "block {empty} has no seeds to fit feature densities from"
        )));
    }
    let mut mean: DMatrix<f64> = DMatrix::zeros(k, d);
    let mut var: DMatrix<f64> = DMatrix::zeros(k, d);
    for (&v, &b) in seeds.ids().iter().zip(seeds.labels()) {
        for t in 0..d {
            mean[(b, t)] += features.data[(v, t)];
        }
    }
    for b in 0..k {
        let mk = seeds.per_block()[b] as f64;
        for t in 0..d {
            mean[(b, t)] /= mk;
        }
    }
    for (&v, &b) in seeds.ids().iter().zip(seeds.labels()) {
        for t in 0..d {
            let diff: f64 = features.data[(v, t)] - mean[(b, t)];
            var[(b, t)] += diff * diff;
        }
    }
    for b in 0..k {
        let mk = seeds.per_block()[b] as f64;
        for t in 0..d {
            var[(b, t)] = (var[(b, t)] / mk).max(VARIANCE_FLOOR);
        }
    }
    Ok(FeatureDensities { mean, var })
}

/// How fitted feature densities enter the matching objective's linear term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FeatureTerm {
    /// Log-density ln f̂_block(x_v) (the default).
    #[default]
    LogDensity,
    /// Raw density f̂_block(x_v); can underflow for far-out vertices.
    RawDensity,
    /// Inner product ⟨x_v, μ̂_block⟩.
    MeanFeature,
}

/// Feature-aware nomination: like the seeded-matching scheme, but the
/// matcher additionally rewards putting vertex v in a slot of block k by
/// `weight`·(the chosen [`FeatureTerm`] of v under block k), and the
/// ranking scores extend the likelihood with the feature log-densities.
///
/// `weight` defaults to u (the nonseed count); negative weights are
/// rejected.
#[allow(clippy::too_many_arguments)]
pub fn nominate_features<R: Rng + ?Sized>(
    graph: &Graph,
    seeds: &SeedSet,
    lambda: &DMatrix<f64>,
    block_sizes: &[usize],
    features: &FeatureSet,
    term: FeatureTerm,
    weight: Option<f64>,
    fw: &FwOptions,
    rng: &mut R,
) -> Result<NominationList> {
    let weight = weight.unwrap_or(seeds.u() as f64);
    if !(weight >= 0.0 && weight.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "feature weight {weight} must be finite and non-negative"
        )));
    }
    if features.n() != seeds.n() {
        return Err(Error::Dimension(format!(
            "{} feature rows for {} vertices",
            features.n(),
            seeds.n()
        )));
    }
    let densities = estimate_feature_densities(features, seeds)?;
    let nonseeds = seeds.nonseeds();
    let log_table = densities.log_density_table(features, &nonseeds);
    let match_table = match term {
        FeatureTerm::LogDensity => log_table.clone(),
        FeatureTerm::RawDensity => log_table.map(f64::exp),
        FeatureTerm::MeanFeature => DMatrix::from_fn(seeds.k(), nonseeds.len(), |k, i| {
            features
                .data
                .row(nonseeds[i])
                .iter()
                .enumerate()
                .map(|(t, &x)| x * densities.mean[(k, t)])
                .sum()
        }),
    };
    nominate_matched(
        graph,
        seeds,
        lambda,
        block_sizes,
        Some(fw),
        Some((&match_table, weight)),
        Some(&log_table),
        rng,
    )
}
