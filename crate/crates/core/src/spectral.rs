//! Spectral clustering of fitted subspaces.
//!
//! Similarity between columns `i` and `j` is `1 / ‖P_i − P_j‖²_F`, capped at
//! `1 / eps_sim` so that fused subspaces do not produce infinite weights.
//! Points are embedded with the eigenvectors of the symmetric normalized
//! Laplacian and grouped with seeded k-means++.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;

use crate::data::{BasisSet, Labels};
use crate::error::{FscError, Result};
use crate::geometry::{orthonormal_columns, orthonormal_distance};
use crate::rng::{stream_rng, sub_seed, Stream};
use crate::scalar::Real;

/// Default relative cap: `eps_sim = 1e-9 · median(nonzero distances)`.
pub const EPS_SIM_RELATIVE: f64 = 1e-9;

/// Number of leading Laplacian eigenvalues inspected by the eigengap rule.
pub const EIGENGAP_WINDOW: usize = 20;

/// Symmetric, nonnegative `n × n` similarity with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix<T: Real> {
    matrix: DMatrix<T>,
}

impl<T: Real> SimilarityMatrix<T> {
    /// Validates symmetry, nonnegativity and the zero diagonal.
    pub fn new(matrix: DMatrix<T>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(FscError::ShapeMismatch("similarity must be square".into()));
        }
        let n = matrix.nrows();
        for i in 0..n {
            if matrix[(i, i)] != T::zero() {
                return Err(FscError::InvalidParams(format!(
                    "similarity diagonal entry {} is nonzero",
                    i + 1
                )));
            }
            for j in 0..i {
                let (a, b) = (matrix[(i, j)], matrix[(j, i)]);
                if a != b || a < T::zero() || !a.is_finite() {
                    return Err(FscError::InvalidParams(format!(
                        "similarity entry ({}, {}) is not symmetric, finite and nonnegative",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }
}

/// All pairwise `‖P_i − P_j‖²_F`.
pub fn pairwise_distances<T: Real>(bases: &BasisSet<T>) -> Result<DMatrix<T>> {
    if bases.is_empty() {
        return Err(FscError::ShapeMismatch("empty basis set".into()));
    }
    let q: Vec<DMatrix<T>> = bases
        .bases()
        .par_iter()
        .map(|b| orthonormal_columns(b.matrix()))
        .collect::<Result<_>>()?;
    let n = q.len();
    let rows: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    if j > i {
                        orthonormal_distance(&q[i], &q[j])
                    } else {
                        T::zero()
                    }
                })
                .collect()
        })
        .collect();
    let mut dist = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            dist[(i, j)] = rows[i][j];
            dist[(j, i)] = rows[i][j];
        }
    }
    Ok(dist)
}

/// `1e-9 · median` of the nonzero off-diagonal distances (or `1e-9` if none).
pub fn default_eps_sim<T: Real>(distances: &DMatrix<T>) -> T {
    let n = distances.nrows();
    let mut nonzero: Vec<T> = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| distances[(i, j)])
        .filter(|&v| v > T::zero())
        .collect();
    if nonzero.is_empty() {
        return T::lit(EPS_SIM_RELATIVE);
    }
    nonzero.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
    let m = nonzero.len();
    let median = if m % 2 == 1 {
        nonzero[m / 2]
    } else {
        (nonzero[m / 2 - 1] + nonzero[m / 2]) * T::lit(0.5)
    };
    median * T::lit(EPS_SIM_RELATIVE)
}

/// `S_ij = 1 / max(D_ij, eps)` off the diagonal, zero on it.
pub fn similarity_from_distances<T: Real>(
    distances: &DMatrix<T>,
    eps_sim: T,
) -> SimilarityMatrix<T> {
    let n = distances.nrows();
    let eps = eps_sim.max(T::default_epsilon() * T::default_epsilon());
    let matrix = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            T::zero()
        } else {
            T::one() / distances[(i, j)].max(eps)
        }
    });
    SimilarityMatrix { matrix }
}

/// Inverse projector-distance similarity. `eps_sim = None` uses [`default_eps_sim`].
pub fn similarity<T: Real>(bases: &BasisSet<T>, eps_sim: Option<T>) -> Result<SimilarityMatrix<T>> {
    let dist = pairwise_distances(bases)?;
    let eps = eps_sim.unwrap_or_else(|| default_eps_sim(&dist));
    Ok(similarity_from_distances(&dist, eps))
}

/// Eigen-decomposition of `L = I − D^{-1/2} S D^{-1/2}`, eigenvalues ascending.
pub fn laplacian_spectrum<T: Real>(s: &SimilarityMatrix<T>) -> Result<(DVector<T>, DMatrix<T>)> {
    let n = s.len();
    let m = s.matrix();
    let mut inv_sqrt = Vec::with_capacity(n);
    for i in 0..n {
        let deg = m.row(i).sum();
        if !(deg > T::zero()) {
            return Err(FscError::DegenerateDegree { row: i });
        }
        inv_sqrt.push(T::one() / deg.sqrt());
    }
    let mut lap = DMatrix::from_fn(n, n, |i, j| -(m[(i, j)] * inv_sqrt[i] * inv_sqrt[j]));
    for i in 0..n {
        lap[(i, i)] += T::one();
    }
    let eig = SymmetricEigen::new(lap);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let vectors = DMatrix::from_fn(n, n, |i, c| eig.eigenvectors[(i, order[c])]);
    Ok((values, vectors))
}

/// Rows of the `K` leading Laplacian eigenvectors, each normalized to unit length.
pub fn spectral_embed<T: Real>(s: &SimilarityMatrix<T>, k: usize) -> Result<DMatrix<T>> {
    let n = s.len();
    if k == 0 || k > n {
        return Err(FscError::InvalidParams(format!(
            "number of clusters must lie in 1..={n}, got {k}"
        )));
    }
    let (_, vectors) = laplacian_spectrum(s)?;
    Ok(normalized_rows(vectors.columns(0, k).into_owned()))
}

fn normalized_rows<T: Real>(mut e: DMatrix<T>) -> DMatrix<T> {
    for mut row in e.row_iter_mut() {
        let norm = row.norm();
        if norm > T::zero() {
            row /= norm;
        }
    }
    e
}

/// Index (1-based count) of the largest gap among the first
/// `min(n, EIGENGAP_WINDOW)` ascending eigenvalues; ties resolve to the smaller count.
pub fn eigengap_k<T: Real>(eigenvalues: &DVector<T>) -> usize {
    let m = eigenvalues.len().min(EIGENGAP_WINDOW);
    if m <= 1 {
        return 1;
    }
    let mut best = 1;
    let mut best_gap = T::min_value().unwrap();
    for k in 1..m {
        let gap = eigenvalues[k] - eigenvalues[k - 1];
        if gap > best_gap {
            best_gap = gap;
            best = k;
        }
    }
    best
}

/// k-means settings. Each restart uses its own k-means++ seeding; the run
/// with the lowest within-cluster sum of squares wins (earliest on ties).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iters: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iters: 300,
        }
    }
}

/// k-means on the rows of `points` with default options.
pub fn kmeans<T: Real>(points: &DMatrix<T>, k: usize, seed: u64) -> Result<Labels> {
    kmeans_with(points, k, seed, KMeansOptions::default())
}

pub fn kmeans_with<T: Real>(
    points: &DMatrix<T>,
    k: usize,
    seed: u64,
    opts: KMeansOptions,
) -> Result<Labels> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(FscError::InvalidParams(format!(
            "number of clusters must lie in 1..={n}, got {k}"
        )));
    }
    let mut best: Option<(T, Vec<usize>)> = None;
    for restart in 0..opts.restarts.max(1) {
        let (inertia, assign) = lloyd(points, k, sub_seed(seed, restart as u64), opts.max_iters);
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, assign));
        }
    }
    let (_, assign) = best.expect("at least one restart");
    Ok(Labels::from_ids(&assign))
}

fn sq_dist<T: Real>(points: &DMatrix<T>, i: usize, center: &DVector<T>) -> T {
    let mut s = T::zero();
    for c in 0..points.ncols() {
        let diff = points[(i, c)] - center[c];
        s += diff * diff;
    }
    s
}

fn plus_plus_init<T: Real>(points: &DMatrix<T>, k: usize, seed: u64) -> Vec<DVector<T>> {
    let n = points.nrows();
    let mut rng = stream_rng(seed, Stream::KMeans);
    let row = |i: usize| points.row(i).transpose();
    let mut centers = vec![row(rng.random_range(0..n))];
    let mut d2: Vec<T> = (0..n).map(|i| sq_dist(points, i, &centers[0])).collect();
    while centers.len() < k {
        let total = d2.iter().fold(T::zero(), |a, &b| a + b);
        let pick = if total > T::zero() {
            let target = T::lit(rng.random::<f64>()) * total;
            let mut acc = T::zero();
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > T::zero() {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = row(pick);
        for (i, v) in d2.iter_mut().enumerate() {
            *v = v.min(sq_dist(points, i, &c));
        }
        centers.push(c);
    }
    centers
}

/// One k-means++ seeded Lloyd run. Returns (inertia, 1-based assignment).
fn lloyd<T: Real>(points: &DMatrix<T>, k: usize, seed: u64, max_iters: usize) -> (T, Vec<usize>) {
    let n = points.nrows();
    let dim = points.ncols();
    let mut centers = plus_plus_init(points, k, seed);
    let mut assign = vec![usize::MAX; n];
    let mut dists = vec![T::zero(); n];

    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        for i in 0..n {
            let (mut best, mut best_d) = (0, sq_dist(points, i, &centers[0]));
            for (c, center) in centers.iter().enumerate().skip(1) {
                let dd = sq_dist(points, i, center);
                if dd < best_d {
                    best = c;
                    best_d = dd;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
            dists[i] = best_d;
        }

        // Empty clusters take the point farthest from its own center.
        let mut counts = vec![0usize; k];
        for &a in &assign {
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n).filter(|&i| counts[assign[i]] > 1).fold(
                    None::<usize>,
                    |acc, i| match acc {
                        Some(b) if dists[b] >= dists[i] => Some(b),
                        _ => Some(i),
                    },
                );
                if let Some(i) = far {
                    counts[assign[i]] -= 1;
                    assign[i] = c;
                    counts[c] = 1;
                    dists[i] = T::zero();
                    changed = true;
                }
            }
        }

        let mut sums = vec![DVector::<T>::zeros(dim); k];
        for i in 0..n {
            for c in 0..dim {
                sums[assign[i]][c] += points[(i, c)];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = &sums[c] / T::from_count(counts[c]);
            }
        }
        if !changed {
            break;
        }
    }

    let mut inertia = T::zero();
    for i in 0..n {
        inertia += sq_dist(points, i, &centers[assign[i]]);
    }
    (inertia, assign.into_iter().map(|a| a + 1).collect())
}

/// Similarity, spectral embedding and k-means in one call. Without `k`, the
/// number of clusters is chosen by the eigengap rule.
pub fn cluster<T: Real>(
    bases: &BasisSet<T>,
    k: Option<usize>,
    eps_sim: Option<T>,
    seed: u64,
) -> Result<Labels> {
    let s = similarity(bases, eps_sim)?;
    cluster_similarity(&s, k, seed)
}

pub fn cluster_similarity<T: Real>(
    s: &SimilarityMatrix<T>,
    k: Option<usize>,
    seed: u64,
) -> Result<Labels> {
    let n = s.len();
    if n == 0 {
        return Err(FscError::ShapeMismatch("empty similarity".into()));
    }
    if let Some(k) = k {
        if k == 0 || k > n {
            return Err(FscError::InvalidParams(format!(
                "number of clusters must lie in 1..={n}, got {k}"
            )));
        }
    }
    if n == 1 {
        return Ok(Labels::singletons(1));
    }
    let (values, vectors) = laplacian_spectrum(s)?;
    let k = k.unwrap_or_else(|| eigengap_k(&values));
    cluster_eigenvectors(&vectors, k, seed)
}

/// k-means on the row-normalized first `k` columns of an ascending
/// Laplacian eigenvector matrix. Lets callers try several `k` against one
/// decomposition.
pub fn cluster_eigenvectors<T: Real>(vectors: &DMatrix<T>, k: usize, seed: u64) -> Result<Labels> {
    let n = vectors.nrows();
    if k == 0 || k > vectors.ncols() {
        return Err(FscError::InvalidParams(format!(
            "number of clusters must lie in 1..={}, got {k}",
            vectors.ncols()
        )));
    }
    if k == 1 {
        return Ok(Labels::single_cluster(n));
    }
    let embedding = normalized_rows(vectors.columns(0, k).into_owned());
    kmeans(&embedding, k, seed)
}
