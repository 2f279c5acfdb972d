//! Block-model parameters, graph sampling, seed selection, parameter
//! estimation, and separation diagnostics.
//!
//! Conventions: block labels are `0..K` with block 0 the block of interest;
//! a model fixes the block sizes, so a sampled graph is conditional on the
//! membership function rather than drawing memberships at random.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

/// Default clamp applied to probabilities before a logit so that log-odds
/// stay finite: entries are pushed into `[eps, 1-eps]`.
pub const DEFAULT_CLAMP_EPS: f64 = 1e-9;

/// log(p / (1-p)).
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Inverse of [`logit`].
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// How to treat probability entries of exactly 0 or 1 when a logit is taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClampPolicy {
    /// Push entries into `[eps, 1-eps]` (the default, with [`DEFAULT_CLAMP_EPS`]).
    Clamp(f64),
    /// Refuse entries outside the open interval (0,1).
    Reject,
}

impl Default for ClampPolicy {
    fn default() -> Self {
        ClampPolicy::Clamp(DEFAULT_CLAMP_EPS)
    }
}

impl ClampPolicy {
    /// Apply the policy to one probability.
    pub fn apply(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidInput(format!(
                "probability {p} outside [0,1]"
            )));
        }
        match *self {
            ClampPolicy::Clamp(eps) => Ok(p.clamp(eps, 1.0 - eps)),
            ClampPolicy::Reject => {
                if p <= 0.0 || p >= 1.0 {
                    Err(Error::ProbabilityRange { value: p })
                } else {
                    Ok(p)
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Model and membership types
// ---------------------------------------------------------------------------

/// A K-block model: block sizes and the symmetric K×K edge-probability
/// matrix Λ.
#[derive(Debug, Clone)]
pub struct BlockModel {
    block_sizes: Vec<usize>,
    lambda: DMatrix<f64>,
}

impl BlockModel {
    pub fn new(block_sizes: Vec<usize>, lambda: DMatrix<f64>) -> Result<Self> {
        let k = block_sizes.len();
        if k == 0 {
            return Err(Error::InvalidInput("at least one block required".into()));
        }
        if block_sizes.contains(&0) {
            return Err(Error::InvalidInput("block sizes must be positive".into()));
        }
        check_lambda(&lambda, k)?;
        Ok(BlockModel {
            block_sizes,
            lambda,
        })
    }

    pub fn k(&self) -> usize {
        self.block_sizes.len()
    }

    pub fn n(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }

    pub fn lambda(&self) -> &DMatrix<f64> {
        &self.lambda
    }
}

/// Validate a K×K symmetric probability matrix.
fn check_lambda(lambda: &DMatrix<f64>, k: usize) -> Result<()> {
    if lambda.nrows() != k || lambda.ncols() != k {
        return Err(Error::Dimension(format!(
            "edge-probability matrix is {}x{}, expected {}x{}",
            lambda.nrows(),
            lambda.ncols(),
            k,
            k
        )));
    }
    for i in 0..k {
        for j in 0..k {
            let p = lambda[(i, j)];
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!(
                    "edge probability {p} at ({i},{j}) outside [0,1]"
                )));
            }
            if lambda[(i, j)] != lambda[(j, i)] {
                return Err(Error::InvalidInput(
                    "edge-probability matrix must be symmetric".into(),
                ));
            }
        }
    }
    Ok(())
}

/// A membership function: one block label in `0..K` per vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl BlockAssignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 || labels.is_empty() {
            return Err(Error::InvalidInput(
                "assignment needs at least one block and one vertex".into(),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidInput(format!(
                "block label {bad} out of range for {k} blocks"
            )));
        }
        Ok(BlockAssignment { labels, k })
    }

    /// The canonical sorted assignment: the first `sizes[0]` vertices get
    /// block 0, the next `sizes[1]` block 1, and so on.
    pub fn sorted(sizes: &[usize]) -> Self {
        let labels = sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &s)| std::iter::repeat_n(k, s))
            .collect();
        BlockAssignment {
            labels,
            k: sizes.len(),
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> usize {
        self.labels[v]
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Number of vertices in each block.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0usize; self.k];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// Reorder vertex labels so that `order[pos]` becomes position `pos`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        BlockAssignment {
            labels: order.iter().map(|&v| self.labels[v]).collect(),
            k: self.k,
        }
    }
}

/// A set of seed vertices with known labels, plus per-block bookkeeping.
#[derive(Debug, Clone)]
pub struct SeedSet {
    ids: Vec<usize>,
    labels: Vec<usize>,
    per_block: Vec<usize>,
    n: usize,
}

impl SeedSet {
    /// Build a seed set from vertex ids; labels are read off the assignment.
    pub fn new(assignment: &BlockAssignment, mut ids: Vec<usize>) -> Result<Self> {
        ids.sort_unstable();
        ids.dedup();
        if let Some(&bad) = ids.iter().find(|&&v| v >= assignment.n()) {
            return Err(Error::InvalidInput(format!(
                "seed vertex {bad} out of range for {} vertices",
                assignment.n()
            )));
        }
        let labels: Vec<usize> = ids.iter().map(|&v| assignment.label(v)).collect();
        let mut per_block = vec![0usize; assignment.k()];
        for &l in &labels {
            per_block[l] += 1;
        }
        Ok(SeedSet {
            ids,
            labels,
            per_block,
            n: assignment.n(),
        })
    }

    /// Seed vertex ids, ascending.
    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    /// Block label of each seed, aligned with [`SeedSet::ids`].
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Total seed count m.
    pub fn m(&self) -> usize {
        self.ids.len()
    }

    /// Per-block seed counts m_k.
    pub fn per_block(&self) -> &[usize] {
        &self.per_block
    }

    /// Number of blocks.
    pub fn k(&self) -> usize {
        self.per_block.len()
    }

    /// Total vertex count of the host graph.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Nonseed count u = n - m.
    pub fn u(&self) -> usize {
        self.n - self.m()
    }

    /// Nonseed vertex ids, ascending.
    pub fn nonseeds(&self) -> Vec<usize> {
        let mark = self.seed_mask();
        (0..self.n).filter(|&v| !mark[v]).collect()
    }

    /// Boolean mask over vertices, true at seeds.
    pub fn seed_mask(&self) -> Vec<bool> {
        let mut mark = vec![false; self.n];
        for &v in &self.ids {
            mark[v] = true;
        }
        mark
    }

    /// Per-block nonseed counts u_k = n_k - m_k for the given assignment.
    pub fn nonseed_counts(&self, assignment: &BlockAssignment) -> Vec<usize> {
        assignment
            .counts()
            .iter()
            .zip(&self.per_block)
            .map(|(&nk, &mk)| nk - mk)
            .collect()
    }
}

/// An undirected graph stored as a dense symmetric adjacency matrix with a
/// zero diagonal; entries are {0,1} unless `weighted`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    adj: DMatrix<f64>,
    weighted: bool,
}

impl Graph {
    pub fn new(adj: DMatrix<f64>, weighted: bool) -> Result<Self> {
        if adj.nrows() != adj.ncols() {
            return Err(Error::Dimension(format!(
                "adjacency matrix is {}x{}",
                adj.nrows(),
                adj.ncols()
            )));
        }
        let n = adj.nrows();
        for i in 0..n {
            if adj[(i, i)] != 0.0 {
                return Err(Error::InvalidInput(format!("nonzero diagonal at {i}")));
            }
            for j in (i + 1)..n {
                let w = adj[(i, j)];
                if !w.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "non-finite weight at ({i},{j})"
                    )));
                }
                if w != adj[(j, i)] {
                    return Err(Error::InvalidInput(format!(
                        "adjacency not symmetric at ({i},{j})"
                    )));
                }
                if !weighted && w != 0.0 && w != 1.0 {
                    return Err(Error::InvalidInput(format!(
                        "entry {w} at ({i},{j}) in an unweighted graph"
                    )));
                }
            }
        }
        Ok(Graph { adj, weighted })
    }

    pub fn n(&self) -> usize {
        self.adj.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adj
    }

    pub fn weighted(&self) -> bool {
        self.weighted
    }

    /// The graph with vertices reordered so that old vertex `order[pos]`
    /// becomes new vertex `pos`.
    pub fn permuted(&self, order: &[usize]) -> Graph {
        let n = self.n();
        assert_eq!(order.len(), n, "permutation length must match vertex count");
        let adj = DMatrix::from_fn(n, n, |i, j| self.adj[(order[i], order[j])]);
        Graph {
            adj,
            weighted: self.weighted,
        }
    }
}

/// Seeds-first vertex ordering: seed ids ascending, then nonseed ids
/// ascending. `order[new_position] = old_vertex`.
pub fn seed_first_order(seeds: &SeedSet) -> Vec<usize> {
    let mut order = seeds.ids().to_vec();
    order.extend(seeds.nonseeds());
    order
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Sample a binary graph: each pair {i,j} is an edge independently with
/// probability Λ_{b(i),b(j)}.
pub fn sample_sbm<R: Rng + ?Sized>(
    model: &BlockModel,
    assignment: &BlockAssignment,
    rng: &mut R,
) -> Result<Graph> {
    if assignment.k() != model.k() || assignment.counts() != model.block_sizes() {
        return Err(Error::Dimension(
            "assignment block counts do not match the model's block sizes".into(),
        ));
    }
    let n = model.n();
    let lambda = model.lambda();
    let mut adj = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let p = lambda[(assignment.label(i), assignment.label(j))];
            if rng.random_bool(p) {
                adj[(i, j)] = 1.0;
                adj[(j, i)] = 1.0;
            }
        }
    }
    Ok(Graph {
        adj,
        weighted: false,
    })
}

// ---------------------------------------------------------------------------
// Log-odds pattern matrix
// ---------------------------------------------------------------------------

/// The n×n log-odds matrix B with B_{ij} = logit(Λ_{b(i)b(j)}), partitioned
/// by a seed count m into seed/nonseed blocks.
#[derive(Debug, Clone)]
pub struct LogOddsMatrix {
    b: DMatrix<f64>,
    m: usize,
}

impl LogOddsMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn seed_count(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.b.nrows()
    }

    /// The m×u seed-to-nonseed block.
    pub fn b12(&self) -> DMatrix<f64> {
        let u = self.n() - self.m;
        self.b.view((0, self.m), (self.m, u)).clone_owned()
    }

    /// The u×u nonseed block.
    pub fn b22(&self) -> DMatrix<f64> {
        let u = self.n() - self.m;
        self.b.view((self.m, self.m), (u, u)).clone_owned()
    }
}

/// Build the log-odds matrix for a membership function, clamping entries of
/// 0 or 1 by [`DEFAULT_CLAMP_EPS`].
pub fn log_odds(
    lambda: &DMatrix<f64>,
    assignment: &BlockAssignment,
    seed_count: usize,
) -> Result<LogOddsMatrix> {
    log_odds_with(lambda, assignment, seed_count, ClampPolicy::default())
}

/// [`log_odds`] with an explicit clamp policy.
pub fn log_odds_with(
    lambda: &DMatrix<f64>,
    assignment: &BlockAssignment,
    seed_count: usize,
    policy: ClampPolicy,
) -> Result<LogOddsMatrix> {
    let k = assignment.k();
    check_lambda(lambda, k)?;
    let n = assignment.n();
    if seed_count > n {
        return Err(Error::InvalidInput(format!(
            "seed count {seed_count} exceeds vertex count {n}"
        )));
    }
    // Transform each block pair once, then broadcast to vertex pairs.
    let mut block_logit = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            block_logit[(a, b)] = logit(policy.apply(lambda[(a, b)])?);
        }
    }
    let mut b = DMatrix::from_fn(n, n, |i, j| {
        block_logit[(assignment.label(i), assignment.label(j))]
    });
    // The diagonal carries no pair information (no self-loops); zero it so
    // downstream trace arithmetic can use whole rows safely.
    for i in 0..n {
        b[(i, i)] = 0.0;
    }
    Ok(LogOddsMatrix { b, m: seed_count })
}

// ---------------------------------------------------------------------------
// Seed selection
// ---------------------------------------------------------------------------

/// How seeds are drawn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SeedPolicy {
    /// Every size-m subset of all vertices equally likely.
    UniformAll { m: usize },
    /// Seeds drawn uniformly from a single block only.
    BlockRestricted { m: usize, block: usize },
    /// Fixed per-block seed counts, uniform within each block.
    Stratified { per_block: Vec<usize> },
}

/// Draw a seed set under the given policy.
pub fn select_seeds<R: Rng + ?Sized>(
    assignment: &BlockAssignment,
    policy: &SeedPolicy,
    rng: &mut R,
) -> Result<SeedSet> {
    let n = assignment.n();
    let ids: Vec<usize> = match policy {
        SeedPolicy::UniformAll { m } => {
            if *m > n {
                return Err(Error::InfeasibleSeeds(format!(
                    "requested {m} seeds from {n} vertices"
                )));
            }
            rand::seq::index::sample(rng, n, *m).into_vec()
        }
        SeedPolicy::BlockRestricted { m, block } => {
            if *block >= assignment.k() {
                return Err(Error::InfeasibleSeeds(format!(
                    "block {block} out of range"
                )));
            }
            let pool: Vec<usize> = (0..n).filter(|&v| assignment.label(v) == *block).collect();
            if *m > pool.len() {
                return Err(Error::InfeasibleSeeds(format!(
                    "requested {m} seeds from block {block} of size {}",
                    pool.len()
                )));
            }
            rand::seq::index::sample(rng, pool.len(), *m)
                .into_iter()
                .map(|i| pool[i])
                .collect()
        }
        SeedPolicy::Stratified { per_block } => {
            if per_block.len() != assignment.k() {
                return Err(Error::InfeasibleSeeds(format!(
                    "{} per-block counts for {} blocks",
                    per_block.len(),
                    assignment.k()
                )));
            }
            let counts = assignment.counts();
            let mut ids = Vec::new();
            for (k, &mk) in per_block.iter().enumerate() {
                if mk > counts[k] {
                    return Err(Error::InfeasibleSeeds(format!(
                        "requested {mk} seeds from block {k} of size {}",
                        counts[k]
                    )));
                }
                let pool: Vec<usize> = (0..n).filter(|&v| assignment.label(v) == k).collect();
                ids.extend(
                    rand::seq::index::sample(rng, pool.len(), mk)
                        .into_iter()
                        .map(|i| pool[i]),
                );
            }
            ids
        }
    };
    SeedSet::new(assignment, ids)
}

// ---------------------------------------------------------------------------
// Estimation from seeds
// ---------------------------------------------------------------------------

/// Edge-probability and block-size estimates computed from the seed-induced
/// subgraph.
#[derive(Debug, Clone)]
pub struct EstimatedModel {
    lambda_hat: DMatrix<f64>,
    n_hat: Vec<usize>,
    smoothing: bool,
}

impl EstimatedModel {
    pub fn lambda_hat(&self) -> &DMatrix<f64> {
        &self.lambda_hat
    }

    pub fn n_hat(&self) -> &[usize] {
        &self.n_hat
    }

    pub fn smoothing(&self) -> bool {
        self.smoothing
    }
}

/// Estimate Λ from edge frequencies among seeds and block sizes by scaling
/// seed proportions to n.
///
/// Without smoothing the estimates are raw frequencies (count / trials, with
/// C(m_k,2) trials on the diagonal); with smoothing each becomes
/// (count+1)/(trials+2). Block-size estimates round m_k·n/m by
/// largest-remainder apportionment, ties to the lower block index.
pub fn estimate_model(graph: &Graph, seeds: &SeedSet, smoothing: bool) -> Result<EstimatedModel> {
    if graph.weighted() {
        return Err(Error::InvalidInput(
            "edge-probability estimation requires a binary graph".into(),
        ));
    }
    if graph.n() != seeds.n() {
        return Err(Error::Dimension(
            "seed set does not match graph size".into(),
        ));
    }
    let m = seeds.m();
    if m == 0 {
        return Err(Error::InfeasibleSeeds(
            "estimation requires at least one seed".into(),
        ));
    }
    let k = seeds.k();
    let mk = seeds.per_block();
    if !smoothing {
        if let Some(empty) = mk.iter().position(|&c| c == 0) {
            return Err(Error::InfeasibleSeeds(format!(
                "block {empty} has no seeds and smoothing is disabled"
            )));
        }
    }

    // Group seed ids by block once, then count edges per block pair.
    let mut by_block: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (&v, &l) in seeds.ids().iter().zip(seeds.labels()) {
        by_block[l].push(v);
    }
    let a = graph.adjacency();
    let mut lambda_hat = DMatrix::zeros(k, k);
    for p in 0..k {
        for q in p..k {
            let (count, trials) = if p == q {
                let mut c = 0usize;
                for (i, &v) in by_block[p].iter().enumerate() {
                    for &w in &by_block[p][i + 1..] {
                        c += a[(v, w)] as usize;
                    }
                }
                (c, mk[p] * mk[p].saturating_sub(1) / 2)
            } else {
                let mut c = 0usize;
                for &v in &by_block[p] {
                    for &w in &by_block[q] {
                        c += a[(v, w)] as usize;
                    }
                }
                (c, mk[p] * mk[q])
            };
            let est = if smoothing {
                (count as f64 + 1.0) / (trials as f64 + 2.0)
            } else {
                if trials == 0 {
                    return Err(Error::InfeasibleSeeds(format!(
                        "no seed pairs for block pair ({p},{q}) and smoothing is disabled"
                    )));
                }
                count as f64 / trials as f64
            };
            lambda_hat[(p, q)] = est;
            lambda_hat[(q, p)] = est;
        }
    }

    let n_hat = apportion(mk, graph.n(), m);
    Ok(EstimatedModel {
        lambda_hat,
        n_hat,
        smoothing,
    })
}

/// Largest-remainder apportionment of n into K parts proportional to the
/// per-block counts; remainder ties go to the lower block index.
fn apportion(mk: &[usize], n: usize, m: usize) -> Vec<usize> {
    let mut floors: Vec<usize> = mk.iter().map(|&c| c * n / m).collect();
    let remainders: Vec<usize> = mk.iter().map(|&c| (c * n) % m).collect();
    let assigned: usize = floors.iter().sum();
    let mut order: Vec<usize> = (0..mk.len()).collect();
    order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]).then(a.cmp(&b)));
    for &k in order.iter().take(n - assigned) {
        floors[k] += 1;
    }
    floors
}

// ---------------------------------------------------------------------------
// Separation diagnostics
// ---------------------------------------------------------------------------

/// Separation quantities of an edge-probability matrix and its log-odds
/// transform, used to gauge how identifiable the blocks are:
///
/// - `alpha`: min over ordered block pairs k≠l of |Λ_kk − Λ_kl|,
/// - `beta`: the same minimum over the log-odds matrix,
/// - `c`: the spread (max − min) of the log-odds entries,
/// - `gamma`: the minimum gap between distinct entries of Λ,
/// - `kappa`: the minimum gap between distinct entries of the log-odds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationDiagnostics {
    pub alpha: f64,
    pub beta: f64,
    pub c: f64,
    pub gamma: f64,
    pub kappa: f64,
}

impl SeparationDiagnostics {
    /// The condition ratio c²/(α·β·κ·γ); `None` when any factor vanishes.
    pub fn condition_ratio(&self) -> Option<f64> {
        let denom = self.alpha * self.beta * self.kappa * self.gamma;
        (denom > 0.0).then(|| self.c * self.c / denom)
    }
}

/// Compute the separation diagnostics of a symmetric probability matrix.
///
/// Matrices with repeated entries yield zero gaps (reported, not an error).
pub fn separation_diagnostics(lambda: &DMatrix<f64>) -> Result<SeparationDiagnostics> {
    let k = lambda.nrows();
    check_lambda(lambda, k)?;
    let policy = ClampPolicy::default();
    let mut b = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            b[(i, j)] = logit(policy.apply(lambda[(i, j)])?);
        }
    }

    let mut alpha = f64::INFINITY;
    let mut beta = f64::INFINITY;
    for p in 0..k {
        for q in 0..k {
            if p != q {
                alpha = alpha.min((lambda[(p, p)] - lambda[(p, q)]).abs());
                beta = beta.min((b[(p, p)] - b[(p, q)]).abs());
            }
        }
    }
    if !alpha.is_finite() {
        // Single-block matrix: no off-diagonal pairs to separate.
        alpha = 0.0;
        beta = 0.0;
    }

    let c = b.max() - b.min();
    let gamma = min_distinct_gap(lambda.as_slice());
    let kappa = min_distinct_gap(b.as_slice());
    Ok(SeparationDiagnostics {
        alpha,
        beta,
        c,
        gamma,
        kappa,
    })
}

/// Smallest gap between distinct values; 0 when fewer than two distinct
/// values exist (distinctness is exact f64 equality).
fn min_distinct_gap(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite entries"));
    sorted.dedup();
    if sorted.len() < 2 {
        return 0.0;
    }
    sorted
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}
