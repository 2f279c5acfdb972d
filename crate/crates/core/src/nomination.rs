//! Nomination schemes built on block-model likelihoods.
//!
//! Each scheme ranks the nonseed vertices of a graph by how likely they are
//! to belong to block 0 (the block of interest):
//!
//! - [`nominate_ml`] matches the graph to a block pattern by seeded graph
//!   matching, then orders vertices by likelihood-ratio scores under the
//!   fitted membership.
//! - [`nominate_ml_restricted`] does the same using only seed-to-nonseed
//!   information (one exact assignment solve, no quadratic term).
//! - [`nominate_canonical`] enumerates every membership consistent with the
//!   block sizes and ranks by exact posterior probability; feasible only
//!   when the enumeration is small.
//!
//! Exact score ties are broken uniformly at random so that repeated runs
//! don't systematically favor low vertex ids.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matching::{solve_restricted, solve_sgm_fw, FwOptions, MatchingProblem};
use crate::sbm::{log_odds, seed_first_order, BlockAssignment, ClampPolicy, Graph, SeedSet};

/// Maximum number of memberships [`nominate_canonical`] will enumerate.
pub const MAX_ENUMERATION: u128 = 10_000_000;

/// One ranked vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct NominationEntry {
    /// Vertex id in the caller's graph.
    pub vertex: usize,
    /// Scheme-specific score the rank was derived from (see each scheme).
    pub score: f64,
    /// The scheme's block guess for this vertex, when it produces one.
    pub block: Option<usize>,
}

/// A ranked nomination list over the nonseed vertices: position 0 is the
/// vertex deemed most likely to belong to the block of interest.
#[derive(Debug, Clone)]
pub struct NominationList {
    pub entries: Vec<NominationEntry>,
    /// Set when the scores carried no information (for example every
    /// nonseed slot, or none, belongs to the block of interest) and the
    /// order is essentially random.
    pub degenerate: bool,
}

impl NominationList {
    /// The ranked vertex ids.
    pub fn ranked_vertices(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.vertex).collect()
    }
}

// ---------------------------------------------------------------------------
// Likelihood machinery
// ---------------------------------------------------------------------------

/// Which pairs enter the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LikelihoodScope {
    /// Seed-to-nonseed and nonseed-to-nonseed pairs.
    Full,
    /// Seed-to-nonseed pairs only.
    SeedsOnly,
}

/// Per-block-pair log tables ln Λ and ln(1-Λ), clamped away from ±∞.
fn pair_log_tables(lambda: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k = lambda.nrows();
    if lambda.ncols() != k || k == 0 {
        return Err(Error::Dimension(format!(
            "edge-probability matrix is {}x{}",
            k,
            lambda.ncols()
        )));
    }
    let policy = ClampPolicy::default();
    let mut lnp = DMatrix::zeros(k, k);
    let mut ln1m = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            if lambda[(i, j)] != lambda[(j, i)] {
                return Err(Error::InvalidInput(
                    "edge-probability matrix must be symmetric".into(),
                ));
            }
            let p = policy.apply(lambda[(i, j)])?;
            lnp[(i, j)] = p.ln();
            ln1m[(i, j)] = (1.0 - p).ln();
        }
    }
    Ok((lnp, ln1m))
}

fn check_likelihood_inputs(
    adj: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    labels: &[usize],
    m: usize,
) -> Result<()> {
    let n = adj.nrows();
    if adj.ncols() != n || labels.len() != n {
        return Err(Error::Dimension(
            "adjacency and label vector sizes disagree".into(),
        ));
    }
    if m > n {
        return Err(Error::InvalidInput(format!(
            "seed count {m} exceeds vertex count {n}"
        )));
    }
    let k = lambda.nrows();
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidInput(format!(
            "block label {bad} out of range for {k} blocks"
        )));
    }
    if adj.iter().any(|&a| a != 0.0 && a != 1.0) {
        return Err(Error::InvalidInput(
            "likelihood scores require a binary adjacency matrix".into(),
        ));
    }
    Ok(())
}

/// Log-likelihood of a membership: the sum of Bernoulli log-masses over all
/// vertex pairs except seed-seed pairs (those don't depend on the unknown
/// memberships). Vertices are seeds-first; `labels` covers all n vertices.
pub fn log_likelihood(
    adj: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    labels: &[usize],
    m: usize,
) -> Result<f64> {
    check_likelihood_inputs(adj, lambda, labels, m)?;
    let (lnp, ln1m) = pair_log_tables(lambda)?;
    let n = adj.nrows();
    let mut total = 0.0;
    for i in 0..n {
        // Skip seed-seed pairs: start nonseed-side at m.
        let start = if i < m { m.max(i + 1) } else { i + 1 };
        for j in start..n {
            let (p, q) = (labels[i], labels[j]);
            total += if adj[(i, j)] == 1.0 {
                lnp[(p, q)]
            } else {
                ln1m[(p, q)]
            };
        }
    }
    Ok(total)
}

/// Log-likelihood restricted to seed-to-nonseed pairs.
pub fn restricted_log_likelihood(
    adj: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    labels: &[usize],
    m: usize,
) -> Result<f64> {
    check_likelihood_inputs(adj, lambda, labels, m)?;
    let (lnp, ln1m) = pair_log_tables(lambda)?;
    let n = adj.nrows();
    let mut total = 0.0;
    for s in 0..m {
        for j in m..n {
            let (p, q) = (labels[s], labels[j]);
            total += if adj[(s, j)] == 1.0 {
                lnp[(p, q)]
            } else {
                ln1m[(p, q)]
            };
        }
    }
    Ok(total)
}

/// Change in log-likelihood from swapping the labels of nonseed vertices
/// `i` and `j` (seeds-first positions in `m..n`), computed incrementally in
/// O(n): only pairs touching i or j change, and the {i,j} pair term itself
/// is invariant because Λ is symmetric.
pub fn swap_log_ratio(
    adj: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    labels: &[usize],
    m: usize,
    i: usize,
    j: usize,
) -> Result<f64> {
    check_likelihood_inputs(adj, lambda, labels, m)?;
    let (lnp, ln1m) = pair_log_tables(lambda)?;
    swap_delta(adj, &lnp, &ln1m, labels, m, i, j, LikelihoodScope::Full)
}

/// [`swap_log_ratio`] for the seed-restricted likelihood (O(m)).
pub fn restricted_swap_log_ratio(
    adj: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    labels: &[usize],
    m: usize,
    i: usize,
    j: usize,
) -> Result<f64> {
    check_likelihood_inputs(adj, lambda, labels, m)?;
    let (lnp, ln1m) = pair_log_tables(lambda)?;
    swap_delta(
        adj,
        &lnp,
        &ln1m,
        labels,
        m,
        i,
        j,
        LikelihoodScope::SeedsOnly,
    )
}

#[allow(clippy::too_many_arguments)]
fn swap_delta(
    adj: &DMatrix<f64>,
    lnp: &DMatrix<f64>,
    ln1m: &DMatrix<f64>,
    labels: &[usize],
    m: usize,
    i: usize,
    j: usize,
    scope: LikelihoodScope,
) -> Result<f64> {
    let n = adj.nrows();
    if i < m || i >= n || j < m || j >= n || i == j {
        return Err(Error::InvalidInput(format!(
            "swap positions ({i},{j}) must be distinct nonseeds in {m}..{n}"
        )));
    }
    let (bi, bj) = (labels[i], labels[j]);
    if bi == bj {
        // Swapping within a block never changes the likelihood.
        return Ok(0.0);
    }
    let limit = match scope {
        LikelihoodScope::Full => n,
        LikelihoodScope::SeedsOnly => m,
    };
    let mut delta = 0.0;
    for w in 0..limit {
        if w == i || w == j {
            continue;
        }
        let bw = labels[w];
        // Vertex i takes block bj, vertex j takes block bi.
        let di = if adj[(i, w)] == 1.0 {
            lnp[(bj, bw)] - lnp[(bi, bw)]
        } else {
            ln1m[(bj, bw)] - ln1m[(bi, bw)]
        };
        let dj = if adj[(j, w)] == 1.0 {
            lnp[(bi, bw)] - lnp[(bj, bw)]
        } else {
            ln1m[(bi, bw)] - ln1m[(bj, bw)]
        };
        delta += di + dj;
    }
    Ok(delta)
}

/// Likelihood-ratio scores over nonseeds under a fitted membership.
#[derive(Debug, Clone)]
pub struct SwapScores {
    /// One score per nonseed (seeds-first positions m..n): for vertices
    /// labeled with the interest block, the mean swap ratio against
    /// out-of-block vertices (lower = more confidently interesting); for
    /// the rest, the mean swap ratio against in-block vertices (higher =
    /// stronger candidate to swap in).
    pub scores: Vec<f64>,
    /// Set when one of the groups is empty (every nonseed, or none, carries
    /// the interest label): all scores are zero and carry no information.
    pub degenerate: bool,
}

/// Compute the nomination scores of a fitted membership: each
/// interest-labeled nonseed is scored by the average log-likelihood change
/// of swapping it against an out-of-block nonseed, and vice versa.
///
/// `vertex_block_bonus` optionally adds a per-(block, nonseed) log term to
/// the likelihood (entry (k, v) is the bonus of giving nonseed v block k),
/// which contributes to each swap exactly like the pair terms do.
pub fn eta_xi_scores(
    adj: &DMatrix<f64>,
    lambda: &DMatrix<f64>,
    labels: &[usize],
    m: usize,
    scope: LikelihoodScope,
    vertex_block_bonus: Option<&DMatrix<f64>>,
) -> Result<SwapScores> {
    check_likelihood_inputs(adj, lambda, labels, m)?;
    let (lnp, ln1m) = pair_log_tables(lambda)?;
    let n = adj.nrows();
    let u = n - m;
    if let Some(bonus) = vertex_block_bonus {
        if bonus.nrows() != lambda.nrows() || bonus.ncols() != u {
            return Err(Error::Dimension(format!(
                "bonus table is {}x{}, expected {}x{u}",
                bonus.nrows(),
                bonus.ncols(),
                lambda.nrows()
            )));
        }
    }
    let interest: Vec<usize> = (m..n).filter(|&v| labels[v] == 0).collect();
    let others: Vec<usize> = (m..n).filter(|&v| labels[v] != 0).collect();
    if interest.is_empty() || others.is_empty() {
        return Ok(SwapScores {
            scores: vec![0.0; u],
            degenerate: true,
        });
    }
    let mut scores = vec![0.0; u];
    let bonus_delta = |i: usize, j: usize| -> f64 {
        match vertex_block_bonus {
            Some(b) => {
                let (bi, bj) = (labels[i], labels[j]);
                b[(bj, i - m)] + b[(bi, j - m)] - b[(bi, i - m)] - b[(bj, j - m)]
            }
            None => 0.0,
        }
    };
    for &i in &interest {
        let mut total = 0.0;
        for &j in &others {
            total += swap_delta(adj, &lnp, &ln1m, labels, m, i, j, scope)? + bonus_delta(i, j);
        }
        scores[i - m] = total / others.len() as f64;
    }
    for &j in &others {
        let mut total = 0.0;
        for &i in &interest {
            total += swap_delta(adj, &lnp, &ln1m, labels, m, j, i, scope)? + bonus_delta(j, i);
        }
        scores[j - m] = total / interest.len() as f64;
    }
    Ok(SwapScores {
        scores,
        degenerate: false,
    })
}

// ---------------------------------------------------------------------------
// Pattern construction
// ---------------------------------------------------------------------------

/// The seeds-first label vector of the pattern graph: seed labels as given,
/// followed by the free slots grouped by block in ascending order (block 0's
/// `free_counts[0]` slots first, and so on).
pub fn pattern_labels(seed_labels: &[usize], free_counts: &[usize]) -> Vec<usize> {
    let mut labels = seed_labels.to_vec();
    for (k, &c) in free_counts.iter().enumerate() {
        labels.extend(std::iter::repeat_n(k, c));
    }
    labels
}

/// Per-block free-slot counts u_k = n_k - m_k, validating the seed counts
/// against the claimed block sizes.
pub(crate) fn free_slot_counts(block_sizes: &[usize], seeds: &SeedSet) -> Result<Vec<usize>> {
    if block_sizes.len() != seeds.k() {
        return Err(Error::Dimension(format!(
            "{} block sizes for {} blocks",
            block_sizes.len(),
            seeds.k()
        )));
    }
    if block_sizes.iter().sum::<usize>() != seeds.n() {
        return Err(Error::InvalidInput(
            "block sizes must sum to the vertex count".into(),
        ));
    }
    block_sizes
        .iter()
        .zip(seeds.per_block())
        .enumerate()
        .map(|(k, (&nk, &mk))| {
            if nk < mk {
                Err(Error::InfeasibleSeeds(format!(
                    "block {k} has {mk} seeds but claimed size {nk}"
                )))
            } else {
                Ok(nk - mk)
            }
        })
        .collect()
}

/// Everything the likelihood-based schemes share: the seeds-first reordered
/// graph, the slot pattern, and the mapping back to caller vertex ids.
struct PreparedInstance {
    adj: DMatrix<f64>,
    order: Vec<usize>,
    seed_labels: Vec<usize>,
    free_counts: Vec<usize>,
    m: usize,
    u: usize,
}

fn prepare_instance(
    graph: &Graph,
    seeds: &SeedSet,
    lambda: &DMatrix<f64>,
    block_sizes: &[usize],
) -> Result<PreparedInstance> {
    if graph.weighted() {
        return Err(Error::InvalidInput(
            "likelihood-based nomination requires a binary graph".into(),
        ));
    }
    if graph.n() != seeds.n() {
        return Err(Error::Dimension(
            "seed set does not match graph size".into(),
        ));
    }
    if lambda.nrows() != seeds.k() {
        return Err(Error::Dimension(format!(
            "edge-probability matrix has {} blocks but seeds have {}",
            lambda.nrows(),
            seeds.k()
        )));
    }
    let free_counts = free_slot_counts(block_sizes, seeds)?;
    let order = seed_first_order(seeds);
    let adj = graph.permuted(&order).adjacency().clone();
    Ok(PreparedInstance {
        adj,
        order,
        seed_labels: seeds.labels().to_vec(),
        free_counts,
        m: seeds.m(),
        u: seeds.u(),
    })
}

/// Rank nonseeds from a fitted membership and its swap scores: vertices
/// fitted to the interest block first (most negative score first), then the
/// rest (most positive score first); exact ties are broken uniformly at
/// random.
fn rank_fitted<R: Rng + ?Sized>(
    inst: &PreparedInstance,
    fitted: &[usize],
    scores: &SwapScores,
    rng: &mut R,
) -> NominationList {
    let keys: Vec<u64> = (0..inst.u).map(|_| rng.random()).collect();
    let mut idx: Vec<usize> = (0..inst.u).collect();
    idx.sort_by(|&x, &y| {
        let gx = (fitted[x] != 0) as u8;
        let gy = (fitted[y] != 0) as u8;
        gx.cmp(&gy)
            .then_with(|| {
                let (sx, sy) = (scores.scores[x], scores.scores[y]);
                if gx == 0 {
                    sx.partial_cmp(&sy).expect("finite scores")
                } else {
                    sy.partial_cmp(&sx).expect("finite scores")
                }
            })
            .then_with(|| keys[x].cmp(&keys[y]))
    });
    NominationList {
        entries: idx
            .into_iter()
            .map(|i| NominationEntry {
                vertex: inst.order[inst.m + i],
                score: scores.scores[i],
                block: Some(fitted[i]),
            })
            .collect(),
        degenerate: scores.degenerate,
    }
}

// ---------------------------------------------------------------------------
// Matching-based schemes
// ---------------------------------------------------------------------------

/// Nominate by seeded graph matching: fit a membership by matching the
/// graph against the block pattern (Frank–Wolfe with restarts), then rank
/// nonseeds by likelihood-ratio swap scores under the fitted membership.
///
/// `block_sizes` are the (true or estimated) block sizes; `lambda` the
/// (true or estimated) edge probabilities.
pub fn nominate_ml<R: Rng + ?Sized>(
    graph: &Graph,
    seeds: &SeedSet,
    lambda: &DMatrix<f64>,
    block_sizes: &[usize],
    fw: &FwOptions,
    rng: &mut R,
) -> Result<NominationList> {
    nominate_matched(graph, seeds, lambda, block_sizes, Some(fw), None, None, rng)
}

/// Nominate by the seed-restricted scheme: the membership comes from one
/// exact assignment solve on seed-to-nonseed scores, and the ranking uses
/// the seed-restricted likelihood.
pub fn nominate_ml_restricted<R: Rng + ?Sized>(
    graph: &Graph,
    seeds: &SeedSet,
    lambda: &DMatrix<f64>,
    block_sizes: &[usize],
    rng: &mut R,
) -> Result<NominationList> {
    nominate_matched(graph, seeds, lambda, block_sizes, None, None, None, rng)
}

/// Shared matched-membership pipeline; `fw` selects the full solver versus
/// the restricted one. `linear` optionally adds a per-(block, nonseed)
/// table with a weight to the matching objective, and `score_bonus`
/// optionally adds a per-(block, nonseed) log term to the likelihood the
/// ranking scores are derived from (the feature-aware scheme supplies
/// both).
#[allow(clippy::too_many_arguments)]
pub(crate) fn nominate_matched<R: Rng + ?Sized>(
    graph: &Graph,
    seeds: &SeedSet,
    lambda: &DMatrix<f64>,
    block_sizes: &[usize],
    fw: Option<&FwOptions>,
    linear: Option<(&DMatrix<f64>, f64)>,
    score_bonus: Option<&DMatrix<f64>>,
    rng: &mut R,
) -> Result<NominationList> {
    let inst = prepare_instance(graph, seeds, lambda, block_sizes)?;
    if inst.u == 0 {
        return Ok(NominationList {
            entries: vec![],
            degenerate: true,
        });
    }
    let full_labels = pattern_labels(&inst.seed_labels, &inst.free_counts);
    let pattern = BlockAssignment::new(full_labels.clone(), lambda.nrows())?;
    let b = log_odds(lambda, &pattern, inst.m)?;
    let mut problem = MatchingProblem::new(inst.adj.clone(), b.matrix().clone(), inst.m)?;

    // The table arrives as a K×u per-block bonus; the matcher wants it as
    // a u×u per-slot linear term L[v, slot] = table[slot_block, v].
    if let Some((table, weight)) = linear {
        let slot_blocks = &full_labels[inst.m..];
        let f = DMatrix::from_fn(inst.u, inst.u, |v, slot| table[(slot_blocks[slot], v)]);
        problem = problem.with_linear(f, weight)?;
    }

    let matched = match fw {
        Some(opts) => solve_sgm_fw(&problem, opts, rng)?,
        None => solve_restricted(&problem)?,
    };
    // Fitted membership: nonseed i takes the block of its assigned slot.
    let fitted: Vec<usize> = matched
        .perm
        .iter()
        .map(|&slot| full_labels[inst.m + slot])
        .collect();

    let mut labels = inst.seed_labels.clone();
    labels.extend(&fitted);
    let scope = if fw.is_some() {
        LikelihoodScope::Full
    } else {
        LikelihoodScope::SeedsOnly
    };
    let scores = eta_xi_scores(&inst.adj, lambda, &labels, inst.m, scope, score_bonus)?;
    Ok(rank_fitted(&inst, &fitted, &scores, rng))
}

// ---------------------------------------------------------------------------
// Canonical (exact posterior) scheme
// ---------------------------------------------------------------------------

/// Streaming log-sum-exp accumulator.
#[derive(Debug, Clone, Copy)]
struct LogSumExp {
    max: f64,
    sum: f64,
}

impl LogSumExp {
    fn new() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    fn add(&mut self, x: f64) {
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    fn value(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// Number of distinct memberships with the given per-block counts
/// (multinomial coefficient), saturating at `u128::MAX` on overflow.
fn membership_count(free_counts: &[usize]) -> u128 {
    let mut remaining: usize = free_counts.iter().sum();
    let mut total: u128 = 1;
    for &c in free_counts {
        // Multiply by C(remaining, c) stepwise; each prefix is itself a
        // binomial coefficient, so the division is exact.
        let mut binom: u128 = 1;
        for i in 1..=c {
            let Some(next) = binom.checked_mul((remaining - c + i) as u128) else {
                return u128::MAX;
            };
            binom = next / i as u128;
        }
        let Some(next) = total.checked_mul(binom) else {
            return u128::MAX;
        };
        total = next;
        remaining -= c;
    }
    total
}

/// Nominate by exact posterior probability: enumerate every membership of
/// the nonseeds consistent with the block sizes, weight each by its
/// likelihood, and rank nonseeds by their marginal posterior probability of
/// belonging to the block of interest. Each entry's block guess is the
/// marginal posterior mode.
///
/// Enumerations larger than [`MAX_ENUMERATION`] are refused.
pub fn nominate_canonical<R: Rng + ?Sized>(
    graph: &Graph,
    seeds: &SeedSet,
    lambda: &DMatrix<f64>,
    block_sizes: &[usize],
    rng: &mut R,
) -> Result<NominationList> {
    let inst = prepare_instance(graph, seeds, lambda, block_sizes)?;
    let k = lambda.nrows();
    if inst.u == 0 {
        return Ok(NominationList {
            entries: vec![],
            degenerate: true,
        });
    }
    let size = membership_count(&inst.free_counts);
    if size > MAX_ENUMERATION {
        return Err(Error::EnumerationGuard {
            size,
            limit: MAX_ENUMERATION,
        });
    }
    let (lnp, ln1m) = pair_log_tables(lambda)?;

    // Seed-side contribution of giving nonseed v block b: constant per
    // (v, b) across the enumeration, so precompute it.
    let mut seed_contrib = DMatrix::zeros(inst.u, k);
    for v in 0..inst.u {
        for b in 0..k {
            let mut total = 0.0;
            for s in 0..inst.m {
                let bs = inst.seed_labels[s];
                total += if inst.adj[(s, inst.m + v)] == 1.0 {
                    lnp[(b, bs)]
                } else {
                    ln1m[(b, bs)]
                };
            }
            seed_contrib[(v, b)] = total;
        }
    }

    // Depth-first enumeration over nonseed positions with an incremental
    // partial log-likelihood; per (vertex, block) accumulators stream the
    // log-sum-exp of complete memberships.
    let mut acc = vec![vec![LogSumExp::new(); k]; inst.u];
    let mut total_lse = LogSumExp::new();
    let mut assigned: Vec<usize> = Vec::with_capacity(inst.u);
    let mut remaining = inst.free_counts.clone();
    dfs_enumerate(
        &inst,
        &lnp,
        &ln1m,
        &seed_contrib,
        &mut remaining,
        &mut assigned,
        0.0,
        &mut acc,
        &mut total_lse,
    );
    let total = total_lse.value();

    let u1 = inst.free_counts[0];
    let degenerate = u1 == 0 || u1 == inst.u;
    let posteriors: Vec<f64> = (0..inst.u)
        .map(|v| (acc[v][0].value() - total).exp())
        .collect();
    let blocks: Vec<usize> = (0..inst.u)
        .map(|v| {
            (0..k)
                .max_by(|&a, &b| {
                    acc[v][a]
                        .value()
                        .partial_cmp(&acc[v][b].value())
                        .expect("finite or -inf accumulators")
                        .then(b.cmp(&a)) // prefer the lower block on exact ties
                })
                .expect("k >= 1")
        })
        .collect();

    let keys: Vec<u64> = (0..inst.u).map(|_| rng.random()).collect();
    let mut idx: Vec<usize> = (0..inst.u).collect();
    idx.sort_by(|&x, &y| {
        posteriors[y]
            .partial_cmp(&posteriors[x])
            .expect("posteriors are finite")
            .then_with(|| keys[x].cmp(&keys[y]))
    });
    Ok(NominationList {
        entries: idx
            .into_iter()
            .map(|v| NominationEntry {
                vertex: inst.order[inst.m + v],
                score: posteriors[v],
                block: Some(blocks[v]),
            })
            .collect(),
        degenerate,
    })
}

#[allow(clippy::too_many_arguments)]
fn dfs_enumerate(
    inst: &PreparedInstance,
    lnp: &DMatrix<f64>,
    ln1m: &DMatrix<f64>,
    seed_contrib: &DMatrix<f64>,
    remaining: &mut Vec<usize>,
    assigned: &mut Vec<usize>,
    partial: f64,
    acc: &mut [Vec<LogSumExp>],
    total_lse: &mut LogSumExp,
) {
    let pos = assigned.len();
    if pos == inst.u {
        total_lse.add(partial);
        for (v, &b) in assigned.iter().enumerate() {
            acc[v][b].add(partial);
        }
        return;
    }
    for b in 0..remaining.len() {
        if remaining[b] == 0 {
            continue;
        }
        // Pair terms against previously assigned nonseeds, plus the
        // constant seed-side term.
        let mut step = seed_contrib[(pos, b)];
        for (w, &bw) in assigned.iter().enumerate() {
            step += if inst.adj[(inst.m + pos, inst.m + w)] == 1.0 {
                lnp[(b, bw)]
            } else {
                ln1m[(b, bw)]
            };
        }
        remaining[b] -= 1;
        assigned.push(b);
        dfs_enumerate(
            inst,
            lnp,
            ln1m,
            seed_contrib,
            remaining,
            assigned,
            partial + step,
            acc,
            total_lse,
        );
        assigned.pop();
        remaining[b] += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sbm::{sample_sbm, select_seeds, BlockModel, SeedPolicy};
    use approx::assert_relative_eq;

    fn strong_two_block() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.2, 0.8])
    }

    /// Sampled graph + seeds for a two-block model.
    fn sampled(
        sizes: &[usize],
        lambda: &DMatrix<f64>,
        per_block: &[usize],
        seed: u64,
    ) -> (Graph, SeedSet, BlockAssignment) {
        let model = BlockModel::new(sizes.to_vec(), lambda.clone()).unwrap();
        let assignment = BlockAssignment::sorted(sizes);
        let mut rng = crate::rng::stream(seed, &[70]);
        let graph = sample_sbm(&model, &assignment, &mut rng).unwrap();
        let seeds = select_seeds(
            &assignment,
            &SeedPolicy::Stratified {
                per_block: per_block.to_vec(),
            },
            &mut rng,
        )
        .unwrap();
        (graph, seeds, assignment)
    }

    #[test]
    fn pattern_label_layout() {
        assert_eq!(pattern_labels(&[0, 1, 0], &[2, 1]), vec![0, 1, 0, 0, 0, 1]);
        assert_eq!(pattern_labels(&[], &[1, 2]), vec![0, 1, 1]);
        assert_eq!(pattern_labels(&[1, 1], &[0, 0]), vec![1, 1]);
    }

    #[test]
    fn likelihood_hand_instance() {
        // n = 3, one seed (block 0), nonseeds labeled 0 and 1.
        // Edges: (0,1) present, (0,2) absent, (1,2) present.
        let mut adj = DMatrix::zeros(3, 3);
        for (i, j) in [(0, 1), (1, 2)] {
            adj[(i, j)] = 1.0;
            adj[(j, i)] = 1.0;
        }
        let lambda = DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.2, 0.6]);
        let labels = vec![0usize, 0, 1];
        let ll = log_likelihood(&adj, &lambda, &labels, 1).unwrap();
        let expect = 0.8f64.ln() + 0.8f64.ln() + 0.2f64.ln();
        assert_relative_eq!(ll, expect, epsilon = 1e-12);

        let rll = restricted_log_likelihood(&adj, &lambda, &labels, 1).unwrap();
        assert_relative_eq!(rll, 0.8f64.ln() + 0.8f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn seed_seed_pairs_are_ignored() {
        let (graph, seeds, assignment) = sampled(&[6, 6], &strong_two_block(), &[3, 3], 71);
        let order = seed_first_order(&seeds);
        let adj = graph.permuted(&order).adjacency().clone();
        let labels = assignment.permuted(&order).labels().to_vec();
        let lambda = strong_two_block();
        let base = log_likelihood(&adj, &lambda, &labels, 6).unwrap();
        // Flip a seed-seed edge: likelihood must not move.
        let mut tampered = adj.clone();
        tampered[(0, 1)] = 1.0 - tampered[(0, 1)];
        tampered[(1, 0)] = tampered[(0, 1)];
        let after = log_likelihood(&tampered, &lambda, &labels, 6).unwrap();
        assert_eq!(base.to_bits(), after.to_bits());

        // Flip a nonseed-nonseed edge: the restricted likelihood must not move.
        let rbase = restricted_log_likelihood(&adj, &lambda, &labels, 6).unwrap();
        let mut tampered = adj.clone();
        tampered[(7, 8)] = 1.0 - tampered[(7, 8)];
        tampered[(8, 7)] = tampered[(7, 8)];
        let rafter = restricted_log_likelihood(&tampered, &lambda, &labels, 6).unwrap();
        assert_eq!(rbase.to_bits(), rafter.to_bits());
    }

    #[test]
    fn swap_ratio_matches_full_recompute() {
        let lambda = DMatrix::from_row_slice(2, 2, &[0.7, 0.25, 0.25, 0.55]);
        let (graph, seeds, assignment) = sampled(&[7, 6], &lambda, &[3, 2], 72);
        let order = seed_first_order(&seeds);
        let adj = graph.permuted(&order).adjacency().clone();
        let labels = assignment.permuted(&order).labels().to_vec();
        let m = seeds.m();
        let n = labels.len();
        for i in m..n {
            for j in (i + 1)..n {
                let mut swapped = labels.clone();
                swapped.swap(i, j);
                let delta = swap_log_ratio(&adj, &lambda, &labels, m, i, j).unwrap();
                let full = log_likelihood(&adj, &lambda, &swapped, m).unwrap()
                    - log_likelihood(&adj, &lambda, &labels, m).unwrap();
                assert_relative_eq!(delta, full, epsilon = 1e-9);
                if labels[i] == labels[j] {
                    assert_eq!(delta, 0.0, "same-block swap must be exactly zero");
                }
                let rdelta = restricted_swap_log_ratio(&adj, &lambda, &labels, m, i, j).unwrap();
                let rfull = restricted_log_likelihood(&adj, &lambda, &swapped, m).unwrap()
                    - restricted_log_likelihood(&adj, &lambda, &labels, m).unwrap();
                assert_relative_eq!(rdelta, rfull, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn scores_flag_uninformative_splits() {
        let (graph, seeds, assignment) = sampled(&[6, 4], &strong_two_block(), &[2, 4], 73);
        let order = seed_first_order(&seeds);
        let adj = graph.permuted(&order).adjacency().clone();
        let labels = assignment.permuted(&order).labels().to_vec();
        // Every nonseed is block 0 here (block 1 fully seeded).
        let scores = eta_xi_scores(
            &adj,
            &strong_two_block(),
            &labels,
            seeds.m(),
            LikelihoodScope::Full,
            None,
        )
        .unwrap();
        assert!(scores.degenerate);
        assert!(scores.scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn ml_nomination_ranks_interest_block_first_on_strong_signal() {
        let lambda = strong_two_block();
        let (graph, seeds, _) = sampled(&[20, 20], &lambda, &[5, 5], 74);
        let mut rng = crate::rng::stream(74, &[1]);
        let list = nominate_ml(
            &graph,
            &seeds,
            &lambda,
            &[20, 20],
            &FwOptions::default(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(list.entries.len(), 30);
        assert!(!list.degenerate);
        // With this signal the top 15 should be dominated by true block-0
        // vertices (ids 0..20).
        let top_hits = list.entries[..15].iter().filter(|e| e.vertex < 20).count();
        assert!(
            top_hits >= 13,
            "only {top_hits}/15 block-0 in the top ranks"
        );
        // Every nonseed appears exactly once.
        let mut ids = list.ranked_vertices();
        ids.sort_unstable();
        let mut expect: Vec<usize> = (0..40).filter(|v| !seeds.ids().contains(v)).collect();
        expect.sort_unstable();
        assert_eq!(ids, expect);
    }

    #[test]
    fn restricted_nomination_ignores_nonseed_edges() {
        let lambda = strong_two_block();
        let (graph, seeds, _) = sampled(&[10, 10], &lambda, &[4, 4], 75);
        // Zero out all nonseed-nonseed edges: the restricted scheme must
        // produce the identical ranking under the identical RNG stream.
        let mut adj = graph.adjacency().clone();
        let seed_mask = seeds.seed_mask();
        for i in 0..20 {
            for j in 0..20 {
                if !seed_mask[i] && !seed_mask[j] {
                    adj[(i, j)] = 0.0;
                }
            }
        }
        let stripped = Graph::new(adj, false).unwrap();
        let mut rng1 = crate::rng::stream(75, &[1]);
        let mut rng2 = crate::rng::stream(75, &[1]);
        let full = nominate_ml_restricted(&graph, &seeds, &lambda, &[10, 10], &mut rng1).unwrap();
        let strip =
            nominate_ml_restricted(&stripped, &seeds, &lambda, &[10, 10], &mut rng2).unwrap();
        assert_eq!(full.ranked_vertices(), strip.ranked_vertices());
        for (a, b) in full.entries.iter().zip(&strip.entries) {
            assert_eq!(a.score.to_bits(), b.score.to_bits());
        }
    }

    #[test]
    fn canonical_hand_posterior() {
        // Two seeds (blocks 0 and 1), two nonseeds, one free slot per block:
        // exactly two memberships to average over.
        let mut adj = DMatrix::zeros(4, 4);
        for (i, j) in [(0, 1), (0, 2), (1, 3)] {
            adj[(i, j)] = 1.0;
            adj[(j, i)] = 1.0;
        }
        let lambda = DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.2, 0.6]);
        let assignment = BlockAssignment::new(vec![0, 1, 0, 1], 2).unwrap();
        let graph = Graph::new(adj.clone(), false).unwrap();
        let seeds = SeedSet::new(&assignment, vec![0, 1]).unwrap();
        let mut rng = crate::rng::stream(76, &[0]);
        let list = nominate_canonical(&graph, &seeds, &lambda, &[2, 2], &mut rng).unwrap();

        // Membership A: vertex2→0, vertex3→1; membership B: swapped.
        let la = 0.8f64.ln() // (0,2): edge, blocks (0,0)
            + (1.0f64 - 0.2).ln() // (0,3): no edge, (0,1)
            + (1.0f64 - 0.2).ln() // (1,2): no edge, (1,0)
            + 0.6f64.ln() // (1,3): edge, (1,1)
            + (1.0f64 - 0.2).ln(); // (2,3): no edge, (0,1)
        let lb = 0.2f64.ln() // (0,2): edge, (0,1)
            + (1.0f64 - 0.8).ln() // (0,3): no edge, (0,0)
            + (1.0f64 - 0.6).ln() // (1,2): no edge, (1,1)
            + 0.2f64.ln() // (1,3): edge, (1,0)
            + (1.0f64 - 0.2).ln(); // (2,3): no edge, (1,0)
        let post2 = la.exp() / (la.exp() + lb.exp());

        let e2 = list.entries.iter().find(|e| e.vertex == 2).unwrap();
        let e3 = list.entries.iter().find(|e| e.vertex == 3).unwrap();
        assert_relative_eq!(e2.score, post2, epsilon = 1e-12);
        assert_relative_eq!(e3.score, 1.0 - post2, epsilon = 1e-12);
        assert!(post2 > 0.5);
        assert_eq!(list.entries[0].vertex, 2);
        assert_eq!(e2.block, Some(0));
        assert_eq!(e3.block, Some(1));
        assert!(!list.degenerate);
    }

    #[test]
    fn canonical_enumeration_guard() {
        assert_eq!(membership_count(&[2, 2, 2]), 90);
        assert_eq!(membership_count(&[1, 1]), 2);
        assert_eq!(membership_count(&[0, 3]), 1);
        assert_eq!(membership_count(&[15, 15]), 155_117_520);

        let sizes = [18usize, 18];
        let lambda = strong_two_block();
        let (graph, seeds, _) = sampled(&sizes, &lambda, &[3, 3], 77);
        // u = 30 split (15,15): C(30,15) ≈ 1.55e8 exceeds the guard.
        let mut rng = crate::rng::stream(77, &[1]);
        let err = nominate_canonical(&graph, &seeds, &lambda, &sizes, &mut rng).unwrap_err();
        assert!(matches!(err, Error::EnumerationGuard { .. }));
    }

    #[test]
    fn canonical_posteriors_sum_to_interest_count() {
        // Marginals of a coherent posterior must sum to u₁ exactly.
        let lambda = DMatrix::from_row_slice(2, 2, &[0.7, 0.3, 0.3, 0.6]);
        let (graph, seeds, _) = sampled(&[6, 6], &lambda, &[2, 2], 78);
        let mut rng = crate::rng::stream(78, &[1]);
        let list = nominate_canonical(&graph, &seeds, &lambda, &[6, 6], &mut rng).unwrap();
        let total: f64 = list.entries.iter().map(|e| e.score).sum();
        assert_relative_eq!(total, 4.0, epsilon = 1e-9);
    }

    #[test]
    fn constant_probabilities_tie_all_posteriors() {
        // A flat Λ makes every membership equally likely: each posterior is
        // exactly u₁/u and the ranking is a uniformly random shuffle.
        let lambda = DMatrix::from_element(2, 2, 0.5);
        let sizes = [3usize, 2];
        let model = BlockModel::new(sizes.to_vec(), lambda.clone()).unwrap();
        let assignment = BlockAssignment::sorted(&sizes);
        let mut rng = crate::rng::stream(79, &[0]);
        let graph = sample_sbm(&model, &assignment, &mut rng).unwrap();
        let seeds = SeedSet::new(&assignment, vec![]).unwrap();
        let list = nominate_canonical(&graph, &seeds, &lambda, &sizes, &mut rng).unwrap();
        for e in &list.entries {
            assert_relative_eq!(e.score, 3.0 / 5.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn tied_rankings_are_uniform() {
        // With all posteriors exactly tied, the first-ranked vertex must be
        // uniform over the nonseeds: chi-squared test at the 0.001 level.
        let lambda = DMatrix::from_element(2, 2, 0.5);
        let sizes = [3usize, 2];
        let model = BlockModel::new(sizes.to_vec(), lambda.clone()).unwrap();
        let assignment = BlockAssignment::sorted(&sizes);
        let mut rng = crate::rng::stream(80, &[0]);
        let graph = sample_sbm(&model, &assignment, &mut rng).unwrap();
        let seeds = SeedSet::new(&assignment, vec![]).unwrap();
        let trials = 10_000usize;
        let mut first_counts = [0usize; 5];
        for _ in 0..trials {
            let list = nominate_canonical(&graph, &seeds, &lambda, &sizes, &mut rng).unwrap();
            first_counts[list.entries[0].vertex] += 1;
        }
        let expected = trials as f64 / 5.0;
        let chi2: f64 = first_counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 0.999 quantile of chi-squared with 4 degrees of freedom.
        assert!(chi2 < 18.467, "chi-squared statistic {chi2}");
    }

    #[test]
    fn canonical_favors_ml_on_small_instances() {
        // The exact posterior ranking should be at least as good as the
        // matched-membership ranking on average. Measured by the fraction
        // of true block-0 vertices in the top u₁ ranks.
        let lambda = DMatrix::from_row_slice(2, 2, &[0.75, 0.25, 0.25, 0.65]);
        let sizes = [6usize, 6];
        let model = BlockModel::new(sizes.to_vec(), lambda.clone()).unwrap();
        let assignment = BlockAssignment::sorted(&sizes);
        let mut rng = crate::rng::stream(81, &[0]);
        let trials = 60;
        let (mut prec_can, mut prec_ml) = (0.0, 0.0);
        for _ in 0..trials {
            let graph = sample_sbm(&model, &assignment, &mut rng).unwrap();
            let seeds = select_seeds(
                &assignment,
                &SeedPolicy::Stratified {
                    per_block: vec![2, 2],
                },
                &mut rng,
            )
            .unwrap();
            let can = nominate_canonical(&graph, &seeds, &lambda, &sizes, &mut rng).unwrap();
            let ml = nominate_ml(
                &graph,
                &seeds,
                &lambda,
                &sizes,
                &FwOptions::default(),
                &mut rng,
            )
            .unwrap();
            let u1 = 4;
            let hits = |list: &NominationList| {
                list.entries[..u1].iter().filter(|e| e.vertex < 6).count() as f64 / u1 as f64
            };
            prec_can += hits(&can);
            prec_ml += hits(&ml);
        }
        prec_can /= trials as f64;
        prec_ml /= trials as f64;
        assert!(
            prec_can >= prec_ml - 0.03,
            "posterior precision {prec_can} fell below matched precision {prec_ml} - 0.03"
        );
    }

    #[test]
    fn rejects_weighted_graphs_and_bad_sizes() {
        let lambda = strong_two_block();
        let (graph, seeds, _) = sampled(&[5, 5], &lambda, &[2, 2], 82);
        let mut rng = crate::rng::stream(82, &[1]);
        // Wrong total.
        assert!(nominate_ml(
            &graph,
            &seeds,
            &lambda,
            &[5, 4],
            &FwOptions::default(),
            &mut rng
        )
        .is_err());
        // Block size below its seed count.
        assert!(nominate_ml(
            &graph,
            &seeds,
            &lambda,
            &[1, 9],
            &FwOptions::default(),
            &mut rng
        )
        .is_err());
        // Weighted graph.
        let mut w = DMatrix::zeros(4, 4);
        w[(0, 1)] = 2.0;
        w[(1, 0)] = 2.0;
        let weighted = Graph::new(w, true).unwrap();
        let wa = BlockAssignment::sorted(&[2, 2]);
        let wseeds = SeedSet::new(&wa, vec![0, 2]).unwrap();
        assert!(nominate_ml(
            &weighted,
            &wseeds,
            &lambda,
            &[2, 2],
            &FwOptions::default(),
            &mut rng
        )
        .is_err());
    }
}
