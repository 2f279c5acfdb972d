//! Seeded graph matching between an observed graph and a block pattern.
//!
//! Vertices are ordered seeds-first: rows/columns `0..m` of both matrices
//! are seeds (matched to each other by definition) and the trailing `u`
//! rows/columns are free. A matching is a permutation σ of the free side,
//! encoded as `perm[i] = j` meaning free vertex `i` is assigned slot `j`.
//!
//! The objective being minimized over permutation matrices P is
//!
//! ```text
//! f(P) = -1/2·tr(A22·P·B22ᵀ·Pᵀ) - tr(A12ᵀ·B12·Pᵀ) - λ·tr(F·Pᵀ)
//! ```
//!
//! where A22/B22 are the free-free blocks, A12/B12 the seed-to-free blocks,
//! and F an optional per-(vertex,slot) linear bonus with weight λ. The
//! solver relaxes P to the doubly stochastic polytope and runs Frank–Wolfe
//! with exact line search, projects back to a permutation, and polishes
//! every candidate assignment with a randomized pairwise-swap descent.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::assignment::solve_lap;
use crate::error::{Error, Result};

/// A matching instance: two symmetric hollow n×n matrices with the first
/// `m` indices pinned, plus an optional linear term on the free block.
#[derive(Debug, Clone)]
pub struct MatchingProblem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    m: usize,
    linear: Option<DMatrix<f64>>,
    feature_weight: f64,
}

fn check_symmetric_hollow(name: &str, x: &DMatrix<f64>) -> Result<()> {
    let n = x.nrows();
    if x.ncols() != n {
        return Err(Error::Dimension(format!(
            "{name} is {}x{}, expected square",
            n,
            x.ncols()
        )));
    }
    for i in 0..n {
        if x[(i, i)] != 0.0 {
            return Err(Error::InvalidInput(format!(
                "{name} has nonzero diagonal at {i}"
            )));
        }
        for j in (i + 1)..n {
            if !x[(i, j)].is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{name} has non-finite entry at ({i},{j})"
                )));
            }
            if x[(i, j)] != x[(j, i)] {
                return Err(Error::InvalidInput(format!(
                    "{name} is not symmetric at ({i},{j})"
                )));
            }
        }
    }
    Ok(())
}

impl MatchingProblem {
    /// Build an instance from full seeds-first matrices and the seed count.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, m: usize) -> Result<Self> {
        check_symmetric_hollow("observed matrix", &a)?;
        check_symmetric_hollow("pattern matrix", &b)?;
        if a.nrows() != b.nrows() {
            return Err(Error::Dimension(format!(
                "observed matrix has {} vertices but pattern has {}",
                a.nrows(),
                b.nrows()
            )));
        }
        if m > a.nrows() {
            return Err(Error::InvalidInput(format!(
                "seed count {m} exceeds vertex count {}",
                a.nrows()
            )));
        }
        Ok(MatchingProblem {
            a,
            b,
            m,
            linear: None,
            feature_weight: 0.0,
        })
    }

    /// Attach a u×u linear bonus F with weight λ ≥ 0; entry F[i,j] rewards
    /// assigning free vertex i to slot j.
    pub fn with_linear(mut self, f: DMatrix<f64>, weight: f64) -> Result<Self> {
        let u = self.u();
        if f.nrows() != u || f.ncols() != u {
            return Err(Error::Dimension(format!(
                "linear term is {}x{}, expected {u}x{u}",
                f.nrows(),
                f.ncols()
            )));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "linear term has non-finite entries".into(),
            ));
        }
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "linear-term weight {weight} must be finite and non-negative"
            )));
        }
        self.linear = Some(f);
        self.feature_weight = weight;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Free-vertex count u = n - m.
    pub fn u(&self) -> usize {
        self.n() - self.m
    }

    pub fn a22(&self) -> DMatrix<f64> {
        let u = self.u();
        self.a.view((self.m, self.m), (u, u)).clone_owned()
    }

    pub fn b22(&self) -> DMatrix<f64> {
        let u = self.u();
        self.b.view((self.m, self.m), (u, u)).clone_owned()
    }

    pub fn a12(&self) -> DMatrix<f64> {
        self.a.view((0, self.m), (self.m, self.u())).clone_owned()
    }

    pub fn b12(&self) -> DMatrix<f64> {
        self.b.view((0, self.m), (self.m, self.u())).clone_owned()
    }

    /// The constant matrix R = A12ᵀ·B12 + λF collecting every term linear
    /// in P; the relaxed objective is tr(A22·D·B22·Dᵀ) + 2⟨D,R⟩.
    fn r_matrix(&self) -> DMatrix<f64> {
        let mut r = self.a12().transpose() * self.b12();
        if let Some(f) = &self.linear {
            r += f * self.feature_weight;
        }
        r
    }

    /// Evaluate f at a permutation of the free side.
    ///
    /// Panics if `perm` is not a length-u permutation.
    pub fn sgm_objective(&self, perm: &[usize]) -> f64 {
        let (m, u) = (self.m, self.u());
        assert_eq!(perm.len(), u, "permutation length must equal u");
        let mut quad = 0.0;
        for i in 0..u {
            for j in 0..u {
                quad += self.a[(m + i, m + j)] * self.b[(m + perm[i], m + perm[j])];
            }
        }
        let mut lin = 0.0;
        for s in 0..m {
            for (i, &p) in perm.iter().enumerate() {
                lin += self.a[(s, m + i)] * self.b[(s, m + p)];
            }
        }
        let mut feat = 0.0;
        if let Some(f) = &self.linear {
            for (i, &j) in perm.iter().enumerate() {
                feat += f[(i, j)];
            }
        }
        -0.5 * quad - lin - self.feature_weight * feat
    }

    /// The restricted objective -tr(A12ᵀ·B12·Pᵀ): seed-to-free terms only,
    /// ignoring both the quadratic part and any linear bonus.
    pub fn restricted_objective(&self, perm: &[usize]) -> f64 {
        let (m, u) = (self.m, self.u());
        assert_eq!(perm.len(), u, "permutation length must equal u");
        let mut lin = 0.0;
        for s in 0..m {
            for (i, &p) in perm.iter().enumerate() {
                lin += self.a[(s, m + i)] * self.b[(s, m + p)];
            }
        }
        -lin
    }
}

// ---------------------------------------------------------------------------
// Doubly stochastic matrices
// ---------------------------------------------------------------------------

/// A square matrix with non-negative entries whose rows and columns each
/// sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DoublyStochastic(DMatrix<f64>);

impl DoublyStochastic {
    /// Validate and wrap; row/column sums may deviate from 1 by at most 1e-9.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::Dimension(format!(
                "doubly stochastic matrix is {}x{}",
                n,
                m.ncols()
            )));
        }
        if m.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidInput(
                "doubly stochastic entries must be non-negative and finite".into(),
            ));
        }
        for i in 0..n {
            if (m.row(i).sum() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("row {i} does not sum to 1")));
            }
            if (m.column(i).sum() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("column {i} does not sum to 1")));
            }
        }
        Ok(DoublyStochastic(m))
    }

    /// The flat matrix with every entry 1/u (the polytope barycenter).
    pub fn barycenter(u: usize) -> Self {
        DoublyStochastic(DMatrix::from_element(u, u, 1.0 / u as f64))
    }

    /// The identity permutation matrix.
    pub fn identity(u: usize) -> Self {
        DoublyStochastic(DMatrix::identity(u, u))
    }

    /// A random interior point: a convex combination of 10 uniform random
    /// permutation matrices with uniform-Dirichlet weights.
    pub fn random<R: Rng + ?Sized>(u: usize, rng: &mut R) -> Self {
        let components = 10;
        // Normalized unit-rate exponentials are Dirichlet(1,…,1) weights.
        let raw: Vec<f64> = (0..components)
            .map(|_| -(1.0 - rng.random::<f64>()).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let mut d = DMatrix::zeros(u, u);
        for w in raw {
            let perm = rand::seq::index::sample(rng, u, u).into_vec();
            for (i, &j) in perm.iter().enumerate() {
                d[(i, j)] += w / total;
            }
        }
        DoublyStochastic(d)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }
}

// ---------------------------------------------------------------------------
// Frank–Wolfe solver
// ---------------------------------------------------------------------------

/// Starting point for the relaxation.
#[derive(Debug, Clone, Default)]
pub enum FwInit {
    /// The flat matrix (every entry 1/u).
    #[default]
    Barycenter,
    /// The identity permutation.
    Identity,
    /// A caller-supplied doubly stochastic matrix.
    Custom(DoublyStochastic),
}

/// Frank–Wolfe solver options.
#[derive(Debug, Clone)]
pub struct FwOptions {
    /// Maximum Frank–Wolfe iterations per start.
    pub max_iters: usize,
    /// Relative improvement threshold that counts as convergence.
    pub tol: f64,
    /// Total independent starts; the first uses `init`, later ones start
    /// from uniform random permutation matrices. Must be at least 1.
    pub restarts: usize,
    /// Starting point of the first start.
    pub init: FwInit,
}

impl Default for FwOptions {
    fn default() -> Self {
        FwOptions {
            max_iters: 50,
            tol: 1e-6,
            restarts: 3,
            init: FwInit::Barycenter,
        }
    }
}

/// Outcome of a matching solve.
#[derive(Debug, Clone)]
pub struct MatchingResult {
    /// Assignment of free vertices to slots: free vertex `i` → slot `perm[i]`.
    pub perm: Vec<usize>,
    /// Objective value of `perm` (the solver's own objective; see each
    /// solver's documentation).
    pub objective: f64,
    /// Relaxed objective value after each iteration of the winning start
    /// (non-increasing), starting at the initial point. Empty for
    /// non-iterative solvers.
    pub trace: Vec<f64>,
    /// Number of independent starts performed.
    pub restarts_used: usize,
    /// Whether the winning start met the tolerance before `max_iters`.
    pub converged: bool,
    /// Set when the instance was trivial and no optimization ran.
    pub degenerate: bool,
}

/// Minimize f over permutations by Frank–Wolfe on the doubly stochastic
/// relaxation with exact line search and a final assignment projection.
///
/// Each start contributes up to three candidate assignments — its starting
/// permutation (when the start is a permutation matrix), the best search
/// direction visited, and the final projection — and each candidate is
/// also polished by [`transposition_descent`]; the best exact objective
/// over all of them wins. On rugged instances the descent routinely
/// rescues starts whose relaxed trajectory stalled in a shallow basin.
///
/// The returned objective is f evaluated exactly at the returned
/// permutation, not the relaxed value. Ties across starts keep the
/// earliest candidate.
pub fn solve_sgm_fw<R: Rng + ?Sized>(
    problem: &MatchingProblem,
    opts: &FwOptions,
    rng: &mut R,
) -> Result<MatchingResult> {
    if opts.restarts == 0 {
        return Err(Error::InvalidInput("at least one start required".into()));
    }
    if opts.tol.is_nan() || opts.tol < 0.0 {
        return Err(Error::InvalidInput(format!(
            "tolerance {} must be non-negative",
            opts.tol
        )));
    }
    let u = problem.u();
    if u == 0 {
        return Ok(MatchingResult {
            perm: vec![],
            objective: 0.0,
            trace: vec![],
            restarts_used: 0,
            converged: true,
            degenerate: true,
        });
    }
    if let FwInit::Custom(d) = &opts.init {
        if d.dim() != u {
            return Err(Error::Dimension(format!(
                "custom start is {}x{}, expected {u}x{u}",
                d.dim(),
                d.dim()
            )));
        }
    }
    let a22 = problem.a22();
    let b22 = problem.b22();
    let r = problem.r_matrix();

    let mut best: Option<MatchingResult> = None;
    for start in 0..opts.restarts {
        let (d0, start_perm): (DMatrix<f64>, Option<Vec<usize>>) = if start == 0 {
            match &opts.init {
                FwInit::Barycenter => (DoublyStochastic::barycenter(u).into_matrix(), None),
                FwInit::Identity => (
                    DoublyStochastic::identity(u).into_matrix(),
                    Some((0..u).collect()),
                ),
                FwInit::Custom(d) => (d.clone().into_matrix(), None),
            }
        } else {
            let perm = rand::seq::index::sample(rng, u, u).into_vec();
            let mut d = DMatrix::<f64>::zeros(u, u);
            for (i, &j) in perm.iter().enumerate() {
                d[(i, j)] = 1.0;
            }
            (d, Some(perm))
        };
        let (fw_candidates, trace, converged) = fw_single_start(&a22, &b22, &r, d0, opts)?;
        let mut candidates: Vec<Vec<usize>> = Vec::new();
        candidates.extend(start_perm);
        candidates.extend(fw_candidates);
        for cand in candidates {
            let mut polished = cand.clone();
            transposition_descent(&a22, &b22, &r, &mut polished, rng);
            for perm in [cand, polished] {
                let objective = problem.sgm_objective(&perm);
                if best.as_ref().is_none_or(|b| objective < b.objective) {
                    best = Some(MatchingResult {
                        perm,
                        objective,
                        trace: trace.clone(),
                        restarts_used: opts.restarts,
                        converged,
                        degenerate: false,
                    });
                }
            }
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// One Frank–Wolfe run from a given starting matrix.
///
/// Maximizes g(D) = tr(A·D·B·Dᵀ) + 2⟨D,R⟩ (so f = -g/2). The product
/// M = A·D·B is maintained incrementally: with step D ← D + ξ(Q-D) and
/// N = A·Q·B - M, the update is M ← M + ξN, so each iteration costs one
/// dense u×u multiplication (A·Q is a column permutation of A) plus one
/// assignment solve.
///
/// Returns candidate permutations: the projection of the final iterate,
/// plus the best direction visited — every direction Q is itself a
/// permutation whose exact value g(Q) = ⟨N+M,Q⟩ + 2⟨R,Q⟩ falls out of the
/// line-search sums for free, and on rugged instances it regularly beats
/// the projected iterate.
fn fw_single_start(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
    mut d: DMatrix<f64>,
    opts: &FwOptions,
) -> Result<(Vec<Vec<usize>>, Vec<f64>, bool)> {
    let u = a.nrows();
    let mut m = a * &(&d * b);
    let mut g = m.dot(&d) + 2.0 * r.dot(&d);
    let mut trace = vec![-0.5 * g];
    let mut converged = false;
    let mut best_direction: Option<(f64, Vec<usize>)> = None;

    let mut aq = DMatrix::zeros(u, u);
    for _ in 0..opts.max_iters {
        // Ascent direction: the permutation maximizing ⟨∇g, Q⟩ with
        // ∇g = 2(M + R); the factor 2 does not change the argmax.
        let mut cost = &m + r;
        cost.neg_mut();
        let q = solve_lap(&cost)?.perm;

        // N = A·Q·B - M, with A·Q assembled by copying columns.
        for (j, &qj) in q.iter().enumerate() {
            aq.set_column(qj, &a.column(j));
        }
        let mut n = &aq * b;
        n -= &m;

        // g(D + ξΔ) - g(D) = aξ² + bξ over ξ ∈ [0,1], where Δ = Q - D,
        // a = ⟨N,Δ⟩ and b = 2⟨M,Δ⟩ + 2⟨R,Δ⟩; ⟨X,Q⟩ sums X along q.
        let along_q = |x: &DMatrix<f64>| q.iter().enumerate().map(|(i, &j)| x[(i, j)]).sum::<f64>();
        let n_along = along_q(&n);
        let m_along = along_q(&m);
        let r_along = along_q(r);
        let a_coef = n_along - n.dot(&d);
        let b_coef = 2.0 * (m_along - m.dot(&d)) + 2.0 * (r_along - r.dot(&d));
        let g_at_q = n_along + m_along + 2.0 * r_along;
        if best_direction
            .as_ref()
            .is_none_or(|(best_g, _)| g_at_q > *best_g)
        {
            best_direction = Some((g_at_q, q.clone()));
        }
        let xi = if a_coef < 0.0 {
            (-b_coef / (2.0 * a_coef)).clamp(0.0, 1.0)
        } else if a_coef + b_coef >= 0.0 {
            1.0
        } else {
            0.0
        };
        let gain = (a_coef * xi + b_coef) * xi;

        d *= 1.0 - xi;
        for (i, &j) in q.iter().enumerate() {
            d[(i, j)] += xi;
        }
        m.zip_apply(&n, |mv, nv| *mv += xi * nv);
        // The step maximizes over a set containing ξ=0, so true gains are
        // non-negative; the clamp only absorbs floating-point noise.
        g += gain.max(0.0);
        trace.push(-0.5 * g);

        if gain < opts.tol * g.abs().max(1.0) {
            converged = true;
            break;
        }
    }

    // Project to the closest permutation: maximize ⟨D,P⟩.
    let mut cost = d;
    cost.neg_mut();
    let perm = solve_lap(&cost)?.perm;
    let mut candidates = vec![perm];
    if let Some((_, q)) = best_direction {
        if q != candidates[0] {
            candidates.push(q);
        }
    }
    Ok((candidates, trace, converged))
}

/// Randomized pairwise-swap descent on f over permutations, in place.
///
/// Because A and B are symmetric with zero diagonals, swapping the slots
/// of free vertices i and j changes f by
///
/// ```text
/// Δ = -Σ_{k∉{i,j}} (A[k,i]-A[k,j])·(B[σk,σj]-B[σk,σi])
///     - (R[i,σj] + R[j,σi] - R[i,σi] - R[j,σj])
/// ```
///
/// an O(u) evaluation. Sweeps visit the u(u-1)/2 swaps in a fresh random
/// order each time, applying strictly improving swaps immediately; swaps
/// that leave f unchanged within 1e-9 are taken with probability 1/2 under
/// a move budget, letting the walk cross the plateaus that quantized
/// patterns produce instead of parking on them. Descent stops when a full
/// sweep finds no improvement (sideways moves do not count) or after 40
/// sweeps.
fn transposition_descent<R: Rng + ?Sized>(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
    perm: &mut [usize],
    rng: &mut R,
) {
    let u = perm.len();
    if u < 2 {
        return;
    }
    let mut pairs: Vec<(usize, usize)> = (0..u)
        .flat_map(|i| ((i + 1)..u).map(move |j| (i, j)))
        .collect();
    let mut plateau_budget = 4 * u * u;
    for _ in 0..40 {
        pairs.shuffle(rng);
        let mut improved = false;
        for &(i, j) in &pairs {
            let (p, q) = (perm[i], perm[j]);
            let mut quad = 0.0;
            for k in 0..u {
                if k != i && k != j {
                    quad += (a[(k, i)] - a[(k, j)]) * (b[(perm[k], q)] - b[(perm[k], p)]);
                }
            }
            let delta = -quad - (r[(i, q)] + r[(j, p)] - r[(i, p)] - r[(j, q)]);
            if delta < -1e-9 {
                perm.swap(i, j);
                improved = true;
            } else if delta.abs() <= 1e-9 && plateau_budget > 0 && rng.random::<f64>() < 0.5 {
                perm.swap(i, j);
                plateau_budget -= 1;
            }
        }
        if !improved {
            break;
        }
    }
}

// ---------------------------------------------------------------------------
// Restricted solver
// ---------------------------------------------------------------------------

/// Minimize only the seed-to-free part -tr(A12ᵀ·B12·Pᵀ) exactly via one
/// assignment solve; the quadratic part and any linear bonus are ignored by
/// construction.
///
/// The returned objective is the restricted objective. With no seeds, or
/// when every seed-to-free score is zero, the instance carries no
/// information: the identity assignment is returned with `degenerate` set.
pub fn solve_restricted(problem: &MatchingProblem) -> Result<MatchingResult> {
    let u = problem.u();
    if u == 0 {
        return Ok(MatchingResult {
            perm: vec![],
            objective: 0.0,
            trace: vec![],
            restarts_used: 0,
            converged: true,
            degenerate: true,
        });
    }
    let cost = -(problem.a12().transpose() * problem.b12());
    if problem.m() == 0 || cost.iter().all(|&v| v == 0.0) {
        let perm: Vec<usize> = (0..u).collect();
        return Ok(MatchingResult {
            objective: problem.restricted_objective(&perm),
            perm,
            trace: vec![],
            restarts_used: 0,
            converged: true,
            degenerate: true,
        });
    }
    let assignment = solve_lap(&cost)?;
    Ok(MatchingResult {
        objective: assignment.value,
        perm: assignment.perm,
        trace: vec![],
        restarts_used: 0,
        converged: true,
        degenerate: false,
    })
}

// ---------------------------------------------------------------------------
// Exhaustive cross-check
// ---------------------------------------------------------------------------

/// Global minimum of f by enumerating all u! permutations; u above 8 is
/// refused. Ties keep the first permutation in enumeration order.
pub fn brute_force_sgm(problem: &MatchingProblem) -> Result<MatchingResult> {
    let u = problem.u();
    if u > 8 {
        return Err(Error::TooLarge(format!(
            "exhaustive matching over {u}! permutations refused"
        )));
    }
    if u == 0 {
        return Ok(MatchingResult {
            perm: vec![],
            objective: 0.0,
            trace: vec![],
            restarts_used: 0,
            converged: true,
            degenerate: true,
        });
    }
    let mut best_perm: Vec<usize> = (0..u).collect();
    let mut best_value = problem.sgm_objective(&best_perm);
    let mut perm = best_perm.clone();
    let mut stack = vec![0usize; u];
    let mut i = 1;
    while i < u {
        if stack[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(stack[i], i);
            }
            let value = problem.sgm_objective(&perm);
            if value < best_value {
                best_value = value;
                best_perm = perm.clone();
            }
            stack[i] += 1;
            i = 1;
        } else {
            stack[i] = 0;
            i += 1;
        }
    }
    Ok(MatchingResult {
        perm: best_perm,
        objective: best_value,
        trace: vec![],
        restarts_used: 0,
        converged: true,
        degenerate: false,
    })
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

/// Count how free vertices' true blocks line up with the blocks of their
/// assigned slots: entry (p,q) counts free vertices of true block p sent to
/// a slot of block q.
pub fn block_confusion(
    true_blocks: &[usize],
    slot_blocks: &[usize],
    perm: &[usize],
    k: usize,
) -> Result<DMatrix<usize>> {
    if true_blocks.len() != perm.len() || slot_blocks.len() != perm.len() {
        return Err(Error::Dimension(
            "block label vectors must match the permutation length".into(),
        ));
    }
    let mut counts = DMatrix::zeros(k, k);
    for (i, &j) in perm.iter().enumerate() {
        let (p, q) = (true_blocks[i], slot_blocks[j]);
        if p >= k || q >= k {
            return Err(Error::InvalidInput(format!(
                "block label out of range for {k} blocks"
            )));
        }
        counts[(p, q)] += 1;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sbm::{
        log_odds, sample_sbm, seed_first_order, select_seeds, BlockAssignment, BlockModel,
        SeedPolicy,
    };
    use approx::assert_relative_eq;

    /// A seeds-first instance sampled from a two-block model: the observed
    /// graph together with the log-odds pattern for the true memberships.
    fn sampled_instance(
        sizes: &[usize],
        lambda: &DMatrix<f64>,
        m_per_block: &[usize],
        seed: u64,
    ) -> (MatchingProblem, Vec<usize>, Vec<usize>) {
        let model = BlockModel::new(sizes.to_vec(), lambda.clone()).unwrap();
        let assignment = BlockAssignment::sorted(sizes);
        let mut rng = crate::rng::stream(seed, &[90]);
        let graph = sample_sbm(&model, &assignment, &mut rng).unwrap();
        let seeds = select_seeds(
            &assignment,
            &SeedPolicy::Stratified {
                per_block: m_per_block.to_vec(),
            },
            &mut rng,
        )
        .unwrap();
        let order = seed_first_order(&seeds);
        let g = graph.permuted(&order);
        let reordered = assignment.permuted(&order);
        let b = log_odds(lambda, &reordered, seeds.m()).unwrap();
        let problem =
            MatchingProblem::new(g.adjacency().clone(), b.matrix().clone(), seeds.m()).unwrap();
        let free_blocks = reordered.labels()[seeds.m()..].to_vec();
        // Slots carry the same labels as the free vertices here (pattern
        // built from the true assignment).
        (problem, free_blocks.clone(), free_blocks)
    }

    fn strong_two_block() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.8, 0.2, 0.2, 0.8])
    }

    #[test]
    fn problem_validation() {
        let a = DMatrix::zeros(3, 3);
        let mut asym = DMatrix::zeros(3, 3);
        asym[(0, 1)] = 1.0;
        assert!(MatchingProblem::new(asym, a.clone(), 1).is_err());
        assert!(MatchingProblem::new(a.clone(), DMatrix::zeros(4, 4), 1).is_err());
        assert!(MatchingProblem::new(a.clone(), a.clone(), 4).is_err());
        let p = MatchingProblem::new(a.clone(), a.clone(), 1).unwrap();
        assert!(p.clone().with_linear(DMatrix::zeros(2, 2), -1.0).is_err());
        assert!(p.clone().with_linear(DMatrix::zeros(3, 3), 1.0).is_err());
        assert!(p.with_linear(DMatrix::zeros(2, 2), 2.0).is_ok());
    }

    #[test]
    fn objective_closed_form() {
        // Hand instance: m = 1 seed, u = 2 free vertices.
        //   A: seed connected to free 0; free 0-1 edge present.
        //   B: all pattern entries distinct.
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let b = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 3.0, 2.0, 0.0, 5.0, 3.0, 5.0, 0.0]);
        let problem = MatchingProblem::new(a, b, 1).unwrap();
        // Identity: quad = 2·A23·B23 = 2·5, lin = A12·B12 = 2 → f = -5-2 = -7.
        assert_relative_eq!(problem.sgm_objective(&[0, 1]), -7.0);
        // Swap: quad still hits B23 by symmetry; lin = A12·B13 = 3 → f = -8.
        assert_relative_eq!(problem.sgm_objective(&[1, 0]), -8.0);
        assert_relative_eq!(problem.restricted_objective(&[0, 1]), -2.0);
        assert_relative_eq!(problem.restricted_objective(&[1, 0]), -3.0);
        // Linear bonus shifts f by -λ·F[i,perm(i)].
        let with = MatchingProblem::new(problem.a.clone(), problem.b.clone(), 1)
            .unwrap()
            .with_linear(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 10.0]), 2.0)
            .unwrap();
        assert_relative_eq!(with.sgm_objective(&[0, 1]), -7.0 - 2.0 * 11.0);
    }

    #[test]
    fn doubly_stochastic_constructors() {
        assert!(DoublyStochastic::new(DMatrix::from_element(2, 2, 0.5)).is_ok());
        assert!(DoublyStochastic::new(DMatrix::from_element(2, 2, 0.4)).is_err());
        assert!(
            DoublyStochastic::new(DMatrix::from_row_slice(2, 2, &[1.5, -0.5, -0.5, 1.5])).is_err()
        );
        let mut rng = crate::rng::stream(91, &[0]);
        for u in [1usize, 2, 5, 17] {
            let d = DoublyStochastic::random(u, &mut rng);
            assert!(DoublyStochastic::new(d.matrix().clone()).is_ok());
        }
    }

    #[test]
    fn self_match_from_identity_stays_identity() {
        // Matching a graph against itself: the identity is globally optimal,
        // and starting there the first direction search already sits at a
        // fixed point.
        let model = BlockModel::new(vec![20], DMatrix::from_element(1, 1, 0.5)).unwrap();
        let assignment = BlockAssignment::sorted(&[20]);
        let mut rng = crate::rng::stream(92, &[0]);
        let g = sample_sbm(&model, &assignment, &mut rng).unwrap();
        let a = g.adjacency().clone();
        let problem = MatchingProblem::new(a.clone(), a, 0).unwrap();
        let opts = FwOptions {
            restarts: 1,
            init: FwInit::Identity,
            ..FwOptions::default()
        };
        let res = solve_sgm_fw(&problem, &opts, &mut rng).unwrap();
        assert_eq!(res.perm, (0..20).collect::<Vec<_>>());
        assert!(res.converged);
        let identity_value = problem.sgm_objective(&(0..20).collect::<Vec<_>>());
        assert_relative_eq!(res.objective, identity_value);
    }

    #[test]
    fn self_match_from_barycenter_reaches_identity_value() {
        let model = BlockModel::new(vec![20], DMatrix::from_element(1, 1, 0.5)).unwrap();
        let assignment = BlockAssignment::sorted(&[20]);
        let mut rng = crate::rng::stream(93, &[0]);
        let g = sample_sbm(&model, &assignment, &mut rng).unwrap();
        let a = g.adjacency().clone();
        let problem = MatchingProblem::new(a.clone(), a, 0).unwrap();
        let res = solve_sgm_fw(&problem, &FwOptions::default(), &mut rng).unwrap();
        let identity_value = problem.sgm_objective(&(0..20).collect::<Vec<_>>());
        // The identity is the global minimum when matching a graph to itself.
        assert!(res.objective <= identity_value + 1e-9);
    }

    #[test]
    fn trace_starts_at_initial_objective_and_never_increases() {
        let (problem, _, _) = sampled_instance(&[8, 8], &strong_two_block(), &[3, 3], 94);
        let mut rng = crate::rng::stream(94, &[1]);
        let opts = FwOptions {
            restarts: 1,
            init: FwInit::Identity,
            ..FwOptions::default()
        };
        let res = solve_sgm_fw(&problem, &opts, &mut rng).unwrap();
        let u = problem.u();
        let id: Vec<usize> = (0..u).collect();
        // From a permutation start the relaxed objective equals f there.
        assert_relative_eq!(res.trace[0], problem.sgm_objective(&id), epsilon = 1e-9);
        for w in res.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "trace increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn finds_global_optimum_on_small_instances() {
        let mut rng = crate::rng::stream(95, &[0]);
        let mut hits = 0;
        let total = 30;
        for t in 0..total {
            let (problem, _, _) = sampled_instance(&[5, 5], &strong_two_block(), &[2, 2], 950 + t);
            let exact = brute_force_sgm(&problem).unwrap();
            let opts = FwOptions {
                restarts: 5,
                ..FwOptions::default()
            };
            let fw = solve_sgm_fw(&problem, &opts, &mut rng).unwrap();
            // Never below the global minimum…
            assert!(fw.objective >= exact.objective - 1e-9);
            // …and usually exactly at it.
            if fw.objective <= exact.objective + 1e-9 {
                hits += 1;
            }
        }
        assert!(
            hits * 10 >= total * 7,
            "only {hits}/{total} reached optimum"
        );
    }

    #[test]
    fn degenerate_and_trivial_instances() {
        // u = 0: nothing to assign.
        let a = DMatrix::zeros(2, 2);
        let problem = MatchingProblem::new(a.clone(), a.clone(), 2).unwrap();
        let mut rng = crate::rng::stream(96, &[0]);
        let res = solve_sgm_fw(&problem, &FwOptions::default(), &mut rng).unwrap();
        assert!(res.degenerate && res.perm.is_empty());
        let res = solve_restricted(&problem).unwrap();
        assert!(res.degenerate && res.perm.is_empty());

        // u = 1: the only permutation.
        let problem = MatchingProblem::new(DMatrix::zeros(3, 3), DMatrix::zeros(3, 3), 2).unwrap();
        let res = solve_sgm_fw(&problem, &FwOptions::default(), &mut rng).unwrap();
        assert_eq!(res.perm, vec![0]);
    }

    #[test]
    fn restricted_worked_example() {
        // Arrange A12 = I so the assignment costs are exactly -B12, giving
        // the classic 3x3 example with optimum (0→1, 1→0, 2→2) at value 5.
        let m = 3;
        let u = 3;
        let n = m + u;
        let mut a = DMatrix::zeros(n, n);
        for s in 0..m {
            a[(s, m + s)] = 1.0;
            a[(m + s, s)] = 1.0;
        }
        let c = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0]);
        let mut b = DMatrix::zeros(n, n);
        for s in 0..m {
            for j in 0..u {
                b[(s, m + j)] = -c[(s, j)];
                b[(m + j, s)] = -c[(s, j)];
            }
        }
        let problem = MatchingProblem::new(a, b, m).unwrap();
        let res = solve_restricted(&problem).unwrap();
        assert_eq!(res.perm, vec![1, 0, 2]);
        assert_eq!(res.objective, 5.0);
        assert!(!res.degenerate);
    }

    #[test]
    fn restricted_degenerate_flags() {
        // No seeds: identity, flagged.
        let (problem, _, _) = sampled_instance(&[4, 4], &strong_two_block(), &[0, 0], 97);
        let res = solve_restricted(&problem).unwrap();
        assert!(res.degenerate);
        assert_eq!(res.perm, (0..8).collect::<Vec<_>>());

        // Seeds present but pattern zero: still no information.
        let a = {
            let mut a = DMatrix::zeros(4, 4);
            a[(0, 1)] = 1.0;
            a[(1, 0)] = 1.0;
            a
        };
        let problem = MatchingProblem::new(a, DMatrix::zeros(4, 4), 1).unwrap();
        let res = solve_restricted(&problem).unwrap();
        assert!(res.degenerate);
        assert_eq!(res.perm, vec![0, 1, 2]);
    }

    #[test]
    fn restricted_is_optimal_for_its_objective() {
        let mut rng = crate::rng::stream(98, &[0]);
        for t in 0..40 {
            let (problem, _, _) = sampled_instance(&[5, 4], &strong_two_block(), &[2, 2], 980 + t);
            let res = solve_restricted(&problem).unwrap();
            assert_relative_eq!(
                res.objective,
                problem.restricted_objective(&res.perm),
                epsilon = 1e-12
            );
            // Optimal among all permutations of u = 5 elements.
            let u = problem.u();
            let mut perm: Vec<usize> = (0..u).collect();
            let mut stack = vec![0usize; u];
            let mut best = problem.restricted_objective(&perm);
            let mut i = 1;
            while i < u {
                if stack[i] < i {
                    if i % 2 == 0 {
                        perm.swap(0, i);
                    } else {
                        perm.swap(stack[i], i);
                    }
                    best = best.min(problem.restricted_objective(&perm));
                    stack[i] += 1;
                    i = 1;
                } else {
                    stack[i] = 0;
                    i += 1;
                }
            }
            assert!(res.objective <= best + 1e-12);
            // Any other solver's permutation can only do worse or equal on
            // the restricted objective.
            let fw = solve_sgm_fw(&problem, &FwOptions::default(), &mut rng).unwrap();
            assert!(res.objective <= problem.restricted_objective(&fw.perm) + 1e-12);
        }
    }

    #[test]
    fn restricted_scale_equivariance() {
        for (t, c) in [(0u64, 2.0f64), (1, 0.5), (2, 3.7)] {
            let (problem, _, _) = sampled_instance(&[6, 5], &strong_two_block(), &[3, 2], 990 + t);
            let base = solve_restricted(&problem).unwrap();
            let scaled_b = problem.b.clone() * c;
            let scaled = MatchingProblem::new(problem.a.clone(), scaled_b, problem.m()).unwrap();
            let res = solve_restricted(&scaled).unwrap();
            assert_relative_eq!(res.objective, c * base.objective, max_relative = 1e-12);
        }
    }

    #[test]
    fn within_block_slot_permutation_leaves_objective_unchanged() {
        // The pattern matrix only sees block labels, so permuting slots
        // within a block changes nothing — bit for bit.
        let (problem, _, slot_blocks) = sampled_instance(&[7, 6], &strong_two_block(), &[3, 2], 99);
        let u = problem.u();
        let mut rng = crate::rng::stream(99, &[1]);
        for _ in 0..20 {
            let perm: Vec<usize> = rand::seq::index::sample(&mut rng, u, u).into_vec();
            // Build a within-block slot permutation by shuffling each
            // block's slots among themselves.
            let mut q: Vec<usize> = (0..u).collect();
            for block in 0..2 {
                let slots: Vec<usize> = (0..u).filter(|&j| slot_blocks[j] == block).collect();
                let shuffled = rand::seq::index::sample(&mut rng, slots.len(), slots.len());
                for (pos, new_pos) in shuffled.into_iter().enumerate() {
                    q[slots[pos]] = slots[new_pos];
                }
            }
            let composed: Vec<usize> = perm.iter().map(|&j| q[j]).collect();
            assert_eq!(
                problem.sgm_objective(&perm).to_bits(),
                problem.sgm_objective(&composed).to_bits(),
                "objective must be bit-identical under within-block relabeling"
            );
        }
    }

    #[test]
    fn misassignment_raises_pattern_disagreement() {
        // For graphs drawn from the model, scoring the adjacency against the
        // true pattern beats scoring it against a block-displacing shuffle:
        // the disagreement statistic Σ A_ij (B_ij - B_{π(i)π(j)}) over free
        // pairs is positive for nearly every displacing π.
        let sizes = [100usize, 100];
        let lambda = strong_two_block();
        let model = BlockModel::new(sizes.to_vec(), lambda.clone()).unwrap();
        let assignment = BlockAssignment::sorted(&sizes);
        let mut rng = crate::rng::stream(100, &[0]);
        let trials = 500;
        let mut positive = 0;
        for _ in 0..trials {
            let graph = sample_sbm(&model, &assignment, &mut rng).unwrap();
            let seeds = select_seeds(
                &assignment,
                &SeedPolicy::Stratified {
                    per_block: vec![10, 10],
                },
                &mut rng,
            )
            .unwrap();
            let order = seed_first_order(&seeds);
            let g = graph.permuted(&order);
            let reordered = assignment.permuted(&order);
            let b = log_odds(&lambda, &reordered, seeds.m()).unwrap();
            let (m, u) = (seeds.m(), seeds.u());
            // Random shuffle of the free side, redrawn until it moves at
            // least one block-0 vertex to a block-1 slot.
            let pi: Vec<usize> = loop {
                let p = rand::seq::index::sample(&mut rng, u, u).into_vec();
                let displaces =
                    (0..u).any(|i| reordered.label(m + i) == 0 && reordered.label(m + p[i]) != 0);
                if displaces {
                    break p;
                }
            };
            let mut x = 0.0;
            let (a, bm) = (g.adjacency(), b.matrix());
            for i in 0..u {
                for j in 0..u {
                    if i != j {
                        x += a[(m + i, m + j)] * (bm[(m + i, m + j)] - bm[(m + pi[i], m + pi[j])]);
                    }
                }
            }
            if x > 0.0 {
                positive += 1;
            }
        }
        assert!(
            positive * 100 >= trials * 99,
            "pattern disagreement positive in only {positive}/{trials} trials"
        );
    }

    #[test]
    fn block_confusion_counts() {
        let counts = block_confusion(&[0, 0, 1, 1], &[0, 1, 0, 1], &[0, 1, 2, 3], 2).unwrap();
        assert_eq!(counts[(0, 0)], 1);
        assert_eq!(counts[(0, 1)], 1);
        assert_eq!(counts[(1, 0)], 1);
        assert_eq!(counts[(1, 1)], 1);
        let perfect = block_confusion(&[0, 1], &[1, 0], &[1, 0], 2).unwrap();
        assert_eq!(perfect[(0, 0)], 1);
        assert_eq!(perfect[(1, 1)], 1);
        assert!(block_confusion(&[0, 2], &[0, 1], &[0, 1], 2).is_err());
    }

    #[test]
    fn feature_bonus_steers_the_match() {
        // Flat pattern (no graph signal) + a diagonal-dominant bonus: the
        // solver must follow the bonus.
        let u = 5;
        let a = DMatrix::zeros(u, u);
        let b = DMatrix::zeros(u, u);
        let mut f = DMatrix::from_element(u, u, 0.0);
        for i in 0..u {
            f[(i, (i + 1) % u)] = 10.0;
        }
        let problem = MatchingProblem::new(a, b, 0)
            .unwrap()
            .with_linear(f, 1.0)
            .unwrap();
        let mut rng = crate::rng::stream(101, &[0]);
        let res = solve_sgm_fw(&problem, &FwOptions::default(), &mut rng).unwrap();
        let expect: Vec<usize> = (0..u).map(|i| (i + 1) % u).collect();
        assert_eq!(res.perm, expect);
        assert_relative_eq!(res.objective, -50.0);
    }
}
