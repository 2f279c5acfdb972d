//! Spectral baseline: adjacency embedding, K-means, distance nomination.
//!
//! Vertices are embedded as rows of U_d|S_d|^{1/2} from the truncated
//! eigendecomposition of the adjacency matrix, optionally projected to the
//! unit sphere, clustered with K-means, and nonseeds are ranked by their
//! distance to the cluster holding the plurality of interest-block seeds.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nomination::{NominationEntry, NominationList};
use crate::sbm::{Graph, SeedSet};

/// Rows with norm below this are treated as zero by the sphere projection.
const ZERO_ROW_TOL: f64 = 1e-12;

/// A spectral embedding: one row of coordinates per vertex.
#[derive(Debug, Clone)]
pub struct Embedding {
    coords: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    zero_rows: Vec<usize>,
}

impl Embedding {
    /// Vertex count.
    pub fn n(&self) -> usize {
        self.coords.nrows()
    }

    /// Embedding dimension.
    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }

    /// The n×d coordinate matrix.
    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    /// Retained eigenvalues, ordered by descending magnitude.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Rows the sphere projection left at zero (empty for a raw embedding).
    pub fn zero_rows(&self) -> &[usize] {
        &self.zero_rows
    }
}

/// Embed the graph's vertices as rows of U_d|S_d|^{1/2}, retaining the d
/// largest-magnitude eigenpairs of the adjacency matrix (ties broken by
/// lower eigenvalue index). Each column's sign is fixed by making its
/// largest-magnitude entry positive, so results are deterministic.
pub fn adjacency_spectral_embed(graph: &Graph, d: usize) -> Result<Embedding> {
    let n = graph.n();
    if d == 0 || d > n {
        return Err(Error::Dimension(format!(
            "embedding dimension {d} not in 1..={n}"
        )));
    }
    let eig = graph.adjacency().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .partial_cmp(&eig.eigenvalues[a].abs())
            .expect("eigenvalues are finite")
            .then(a.cmp(&b))
    });
    let mut coords: DMatrix<f64> = DMatrix::zeros(n, d);
    let mut eigenvalues = Vec::with_capacity(d);
    for (j, &idx) in order.iter().take(d).enumerate() {
        let lam = eig.eigenvalues[idx];
        eigenvalues.push(lam);
        let col = eig.eigenvectors.column(idx);
        let mut anchor = 0;
        for i in 1..n {
            if col[i].abs() > col[anchor].abs() {
                anchor = i;
            }
        }
        let sign = if col[anchor] < 0.0 { -1.0 } else { 1.0 };
        let scale = lam.abs().sqrt();
        for i in 0..n {
            coords[(i, j)] = sign * col[i] * scale;
        }
    }
    Ok(Embedding {
        coords,
        eigenvalues,
        zero_rows: Vec::new(),
    })
}

/// Scale every nonzero row to unit Euclidean norm; zero rows stay at zero
/// and are recorded in `zero_rows`. Idempotent.
pub fn project_to_sphere(embedding: &Embedding) -> Embedding {
    let mut coords = embedding.coords.clone();
    let mut zero_rows = Vec::new();
    for i in 0..coords.nrows() {
        let norm = coords.row(i).norm();
        if norm < ZERO_ROW_TOL {
            zero_rows.push(i);
            for j in 0..coords.ncols() {
                coords[(i, j)] = 0.0;
            }
        } else {
            for j in 0..coords.ncols() {
                coords[(i, j)] /= norm;
            }
        }
    }
    Embedding {
        coords,
        eigenvalues: embedding.eigenvalues.clone(),
        zero_rows,
    }
}

/// K-means settings: restart count and Lloyd iteration cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KmeansOptions {
    pub restarts: usize,
    pub max_iters: usize,
}

impl Default for KmeansOptions {
    fn default() -> Self {
        KmeansOptions {
            restarts: 10,
            max_iters: 100,
        }
    }
}

/// A fitted clustering plus the cluster anchored to the interest block.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    centroids: DMatrix<f64>,
    labels: Vec<usize>,
    interest_cluster: usize,
    inertia: f64,
}

impl ClusterModel {
    /// K×d centroid matrix.
    pub fn centroids(&self) -> &DMatrix<f64> {
        &self.centroids
    }

    /// Per-vertex cluster index.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// The cluster holding the plurality of interest-block seeds.
    pub fn interest_cluster(&self) -> usize {
        self.interest_cluster
    }

    /// Sum of squared point-to-centroid distances.
    pub fn inertia(&self) -> f64 {
        self.inertia
    }
}

fn row_dist2(points: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>, c: usize) -> f64 {
    let mut s = 0.0;
    for j in 0..points.ncols() {
        let diff = points[(i, j)] - centroids[(c, j)];
        s += diff * diff;
    }
    s
}

fn kmeans_single<R: Rng + ?Sized>(
    points: &DMatrix<f64>,
    k: usize,
    max_iters: usize,
    rng: &mut R,
) -> (DMatrix<f64>, Vec<usize>, f64) {
    let n = points.nrows();
    let d = points.ncols();
    // k-means++ seeding: later centers drawn proportionally to the squared
    // distance to the nearest already-chosen center.
    let mut centroids: DMatrix<f64> = DMatrix::zeros(k, d);
    let first = rng.random_range(0..n);
    centroids.set_row(0, &points.row(first));
    let mut near2: Vec<f64> = (0..n)
        .map(|i| row_dist2(points, i, &centroids, 0))
        .collect();
    for c in 1..k {
        let total: f64 = near2.iter().sum();
        let chosen = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &w) in near2.iter().enumerate() {
                acc += w;
                if r < acc {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centroids.set_row(c, &points.row(chosen));
        for (i, slot) in near2.iter_mut().enumerate() {
            let d2 = row_dist2(points, i, &centroids, c);
            if d2 < *slot {
                *slot = d2;
            }
        }
    }
    // Lloyd iterations: assign, repair empty clusters, recenter.
    let mut labels = vec![0usize; n];
    let mut first_pass = true;
    for _ in 0..max_iters {
        let mut changed = false;
        for (i, label) in labels.iter_mut().enumerate() {
            let mut best = 0;
            let mut best_d = row_dist2(points, i, &centroids, 0);
            for c in 1..k {
                let d2 = row_dist2(points, i, &centroids, c);
                if d2 < best_d {
                    best_d = d2;
                    best = c;
                }
            }
            if *label != best {
                *label = best;
                changed = true;
            }
        }
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Re-seed the empty cluster at the farthest point whose own
                // cluster can spare it.
                let mut far = usize::MAX;
                let mut far_d = -1.0;
                for i in 0..n {
                    if counts[labels[i]] < 2 {
                        continue;
                    }
                    let d2 = row_dist2(points, i, &centroids, labels[i]);
                    if d2 > far_d {
                        far_d = d2;
                        far = i;
                    }
                }
                if far == usize::MAX {
                    continue;
                }
                counts[labels[far]] -= 1;
                labels[far] = c;
                counts[c] = 1;
                changed = true;
            }
        }
        if !changed && !first_pass {
            break;
        }
        first_pass = false;
        let mut sums: DMatrix<f64> = DMatrix::zeros(k, d);
        for (i, &l) in labels.iter().enumerate() {
            for j in 0..d {
                sums[(l, j)] += points[(i, j)];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for j in 0..d {
                    sums[(c, j)] /= counts[c] as f64;
                }
            }
        }
        centroids = sums;
    }
    let inertia: f64 = (0..n)
        .map(|i| row_dist2(points, i, &centroids, labels[i]))
        .sum();
    (centroids, labels, inertia)
}

/// Lloyd's K-means with k-means++ initialization, keeping the best of
/// `opts.restarts` runs by inertia (earliest run wins ties). Returns
/// (centroids, per-point labels, inertia).
pub fn kmeans<R: Rng + ?Sized>(
    points: &DMatrix<f64>,
    k: usize,
    opts: &KmeansOptions,
    rng: &mut R,
) -> Result<(DMatrix<f64>, Vec<usize>, f64)> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!(
            "cannot fit {k} clusters to {n} points"
        )));
    }
    if opts.restarts == 0 || opts.max_iters == 0 {
        return Err(Error::InvalidInput(
            "k-means needs at least one restart and one iteration".into(),
        ));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("points must be finite".into()));
    }
    let mut best: Option<(DMatrix<f64>, Vec<usize>, f64)> = None;
    for _ in 0..opts.restarts {
        let run = kmeans_single(points, k, opts.max_iters, rng);
        let keep = match &best {
            None => true,
            Some((_, _, inertia)) => run.2 < *inertia,
        };
        if keep {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn cluster_internal<R: Rng + ?Sized>(
    graph: &Graph,
    seeds: &SeedSet,
    k: usize,
    project: bool,
    opts: &KmeansOptions,
    rng: &mut R,
) -> Result<(Embedding, ClusterModel)> {
    if graph.n() != seeds.n() {
        return Err(Error::Dimension(format!(
            "graph has {} vertices but seeds describe {}",
            graph.n(),
            seeds.n()
        )));
    }
    if k < 2 {
        return Err(Error::InvalidInput(
            "spectral nomination needs at least two clusters".into(),
        ));
    }
    if seeds.per_block().first().copied().unwrap_or(0) == 0 {
        return Err(Error::Degenerate(
            "no interest-block seeds to anchor the cluster of interest".into(),
        ));
    }
    let mut embedding = adjacency_spectral_embed(graph, k)?;
    if project {
        embedding = project_to_sphere(&embedding);
    }
    let (centroids, labels, inertia) = kmeans(embedding.coords(), k, opts, rng)?;
    let mut votes = vec![0usize; k];
    for (&v, &b) in seeds.ids().iter().zip(seeds.labels()) {
        if b == 0 {
            votes[labels[v]] += 1;
        }
    }
    let mut sizes = vec![0usize; k];
    for &l in &labels {
        sizes[l] += 1;
    }
    let mut interest = 0;
    for c in 1..k {
        if (votes[c], sizes[c]) > (votes[interest], sizes[interest]) {
            interest = c;
        }
    }
    Ok((
        embedding,
        ClusterModel {
            centroids,
            labels,
            interest_cluster: interest,
            inertia,
        },
    ))
}

/// Embed, optionally project, and cluster the graph, anchoring the interest
/// cluster by the plurality of interest-block seeds (ties go to the larger
/// cluster, then the lower index).
pub fn spectral_cluster<R: Rng + ?Sized>(
    graph: &Graph,
    seeds: &SeedSet,
    k: usize,
    project: bool,
    opts: &KmeansOptions,
    rng: &mut R,
) -> Result<ClusterModel> {
    cluster_internal(graph, seeds, k, project, opts, rng).map(|(_, model)| model)
}

/// Spectral nomination: rank nonseeds by ascending Euclidean distance to
/// the interest cluster's centroid (the score is that distance; exact
/// distance ties are broken uniformly at random). Each entry's block is the
/// vertex's cluster index.
pub fn nominate_spectral<R: Rng + ?Sized>(
    graph: &Graph,
    seeds: &SeedSet,
    k: usize,
    project: bool,
    opts: &KmeansOptions,
    rng: &mut R,
) -> Result<NominationList> {
    let (embedding, model) = cluster_internal(graph, seeds, k, project, opts, rng)?;
    let interest = model.interest_cluster();
    let mut keyed: Vec<(NominationEntry, u64)> = seeds
        .nonseeds()
        .iter()
        .map(|&v| {
            let entry = NominationEntry {
                vertex: v,
                score: row_dist2(embedding.coords(), v, model.centroids(), interest).sqrt(),
                block: Some(model.labels()[v]),
            };
            (entry, rng.random())
        })
        .collect();
    keyed.sort_by(|(ea, ka), (eb, kb)| {
        ea.score
            .partial_cmp(&eb.score)
            .expect("distances are finite")
            .then(ka.cmp(kb))
    });
    Ok(NominationList {
        entries: keyed.into_iter().map(|(e, _)| e).collect(),
        degenerate: false,
    })
}
