//! λ-path, goodness-of-fit scoring and rank sweep.
//!
//! Every path entry carries two counts. `cluster_count` is the number of
//! fused groups: connected components of the graph joining pairs whose
//! projector distance is at most `fuse_tol`. It runs from `n` at `λ = 0` to 1
//! once every subspace has collapsed onto one. The entry's `labels` come from
//! spectral clustering with the `K ≤ cluster_count` that minimizes
//! [`fit_score`] among admissible labelings (every cluster larger than `r`,
//! since `r` or fewer columns are always fit exactly by an `r`-dimensional
//! subspace).

use nalgebra::DMatrix;

use crate::completion::{cluster_model, ClusterModel};
use crate::data::{BasisSet, Labels, MaskedMatrix};
use crate::error::{FscError, Result};
use crate::optimizer::{fit, fit_from, init_bases, FitTrace, FscConfig};
use crate::scalar::Real;
use crate::spectral::{
    cluster_eigenvectors, default_eps_sim, laplacian_spectrum, pairwise_distances,
    similarity_from_distances, EIGENGAP_WINDOW,
};

/// Squared projector distance at or below which two subspaces count as fused.
pub const FUSE_TOL: f64 = 1e-4;
/// Floor on the residual sum of squares inside the logarithm.
pub const RSS_FLOOR: f64 = 1e-30;
/// RSS below `(RELATIVE_FLOOR · ε)² ‖X^Ω‖²` is rounding and is clamped there.
pub const RELATIVE_FLOOR: f64 = 1e4;
/// Relative residual below which a column counts as explained in a rank sweep.
pub const TOL_PRUNE: f64 = 1e-6;
/// Adaptive λ growth stops at `LAMBDA_CAP_FACTOR · λ₀`.
pub const LAMBDA_CAP_FACTOR: f64 = (1u64 << 20) as f64;

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOptions {
    pub fuse_tol: f64,
    /// Largest number of clusters considered per entry.
    pub k_max: usize,
    /// Similarity cap; `None` uses the data-driven default.
    pub eps_sim: Option<f64>,
    /// Seed for k-means inside spectral clustering.
    pub cluster_seed: u64,
    pub tol_prune: f64,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            fuse_tol: FUSE_TOL,
            k_max: EIGENGAP_WINDOW,
            eps_sim: None,
            cluster_seed: 0,
            tol_prune: TOL_PRUNE,
        }
    }
}

/// `λ₀ · 10^e` for 16 exponents evenly spaced in `[−4, 2]`, preceded by 0,
/// with `λ₀ = 1/(n·d)`.
pub fn default_lambda_grid(d: usize, n: usize) -> Vec<f64> {
    let l0 = crate::optimizer::default_lambda(d, n);
    std::iter::once(0.0)
        .chain((0..16).map(|i| l0 * 10f64.powf(-4.0 + 6.0 * i as f64 / 15.0)))
        .collect()
}

/// AIC-style score `|Ω| ln(RSS/|Ω|) + 2 (K r (d − r) + n r)`; lower is better.
/// The `n r` term counts the per-column coefficients, so it shifts every
/// candidate of one rank equally and only matters across ranks.
pub fn fit_score<T: Real>(x: &MaskedMatrix<T>, model: &ClusterModel<T>) -> Result<T> {
    if model.labels.len() != x.ncols() || model.coefficients.len() != x.ncols() {
        return Err(FscError::ShapeMismatch(format!(
            "model covers {} columns, data has {}",
            model.labels.len(),
            x.ncols()
        )));
    }
    if model
        .cluster_bases
        .iter()
        .any(|b| b.ambient_dim() != x.nrows())
    {
        return Err(FscError::ShapeMismatch(
            "cluster bases do not match the data dimension".into(),
        ));
    }
    Ok(score_at_rss(
        x,
        model.observed_rss(x),
        model.num_clusters(),
        model.rank(),
    ))
}

/// [`fit_score`] for a given RSS, `K` and `r` on the data `x`.
pub fn score_at_rss<T: Real>(x: &MaskedMatrix<T>, rss: T, k: usize, r: usize) -> T {
    let rel = T::lit(RELATIVE_FLOOR) * T::default_epsilon();
    let floor = rel * rel * x.values().norm_squared();
    score_from_rss(rss, floor, x.observed_count(), (x.ncols(), k, r, x.nrows()))
}

fn score_from_rss<T: Real>(
    rss: T,
    floor: T,
    observed: usize,
    (n, k, r, d): (usize, usize, usize, usize),
) -> T {
    let omega = T::from_count(observed);
    let floor = floor.max(T::lit(RSS_FLOOR));
    let rss = rss.max(floor);
    let dof = T::from_count(2 * (k * r * (d - r) + n * r));
    omega * (rss / omega).ln() + dof
}

/// Fused groups: connected components of `{(i, j) : dist[i, j] ≤ tol}`.
pub fn fused_groups<T: Real>(distances: &DMatrix<T>, tol: T) -> Labels {
    let n = distances.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if distances[(i, j)] <= tol {
                let (a, b) = (root(&mut parent, i), root(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| root(&mut parent, i)).collect();
    Labels::from_ids(&roots)
}

/// A clustering of one set of fitted bases with its score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredModel<T: Real> {
    /// Number of fused groups.
    pub cluster_count: usize,
    pub model: ClusterModel<T>,
    pub fit_score: f64,
}

impl<T: Real> ScoredModel<T> {
    pub fn labels(&self) -> &Labels {
        &self.model.labels
    }

    pub fn selected_k(&self) -> usize {
        self.model.num_clusters()
    }
}

/// Counts fused groups, then scores spectral labelings for `K = 1..=min(count, k_max)`
/// and keeps the lowest score (smaller `K` on ties).
pub fn score_bases<T: Real>(
    x: &MaskedMatrix<T>,
    bases: &BasisSet<T>,
    opts: &SelectionOptions,
) -> Result<ScoredModel<T>> {
    let n = x.ncols();
    let r = bases.rank();
    let dist = pairwise_distances(bases)?;
    let cluster_count = fused_groups(&dist, T::lit(opts.fuse_tol)).num_clusters();

    let k_max = cluster_count.min(opts.k_max).min(n).max(1);
    let vectors = if k_max > 1 {
        let eps = opts
            .eps_sim
            .map(T::lit)
            .unwrap_or_else(|| default_eps_sim(&dist));
        let s = similarity_from_distances(&dist, eps);
        Some(laplacian_spectrum(&s)?.1)
    } else {
        None
    };

    let mut best: Option<(T, ClusterModel<T>)> = None;
    let mut last_err = None;
    for k in 1..=k_max {
        let labels = match &vectors {
            Some(v) if k > 1 => cluster_eigenvectors(v, k, opts.cluster_seed)?,
            _ => Labels::single_cluster(n),
        };
        if k > 1 && labels.cluster_sizes().iter().any(|&s| s <= r) {
            continue;
        }
        let model = match cluster_model(x, bases, &labels) {
            Ok(m) => m,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let score = fit_score(x, &model)?;
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, model));
        }
    }
    let (score, model) = best.ok_or_else(|| last_err.unwrap_or(FscError::AllEntriesFailed))?;
    Ok(ScoredModel {
        cluster_count,
        model,
        fit_score: score.as_f64(),
    })
}

/// One successfully fitted λ.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFit<T: Real> {
    pub lambda: f64,
    pub objective: f64,
    pub trace: FitTrace,
    /// Per-column bases at this λ.
    pub bases: BasisSet<T>,
    pub scored: ScoredModel<T>,
}

impl<T: Real> PathFit<T> {
    pub fn cluster_count(&self) -> usize {
        self.scored.cluster_count
    }

    pub fn labels(&self) -> &Labels {
        self.scored.labels()
    }

    pub fn fit_score(&self) -> f64 {
        self.scored.fit_score
    }

    pub fn selected_k(&self) -> usize {
        self.scored.selected_k()
    }

    pub fn model(&self) -> &ClusterModel<T> {
        &self.scored.model
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEntry<T: Real> {
    pub lambda: f64,
    pub outcome: std::result::Result<PathFit<T>, FscError>,
}

/// One entry per λ, in increasing λ order.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaPathReport<T: Real> {
    pub entries: Vec<PathEntry<T>>,
}

impl<T: Real> LambdaPathReport<T> {
    pub fn fits(&self) -> impl Iterator<Item = &PathFit<T>> {
        self.entries.iter().filter_map(|e| e.outcome.as_ref().ok())
    }

    /// Fused-group counts of the successful entries, in λ order.
    pub fn counts(&self) -> Vec<usize> {
        self.fits().map(|f| f.cluster_count()).collect()
    }
}

fn validate_lambdas(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(FscError::InvalidParams("empty λ grid".into()));
    }
    if let Some(l) = lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(FscError::InvalidParams(format!(
            "λ must be finite and nonnegative, got {l}"
        )));
    }
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FscError::InvalidParams(
            "λ grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

struct PathRunner<'a, T: Real> {
    x: &'a MaskedMatrix<T>,
    cfg: &'a FscConfig,
    opts: &'a SelectionOptions,
    warm: BasisSet<T>,
}

impl<T: Real> PathRunner<'_, T> {
    fn step(&mut self, lambda: f64) -> PathEntry<T> {
        let cfg = self.cfg.with_lambda(lambda);
        let outcome = fit_from(self.x, &cfg, self.warm.clone()).and_then(|(bases, trace)| {
            let scored = score_bases(self.x, &bases, self.opts)?;
            self.warm = bases.clone();
            Ok(PathFit {
                lambda,
                objective: trace.final_objective(),
                trace,
                bases,
                scored,
            })
        });
        PathEntry { lambda, outcome }
    }
}

/// Fits each λ in turn, warm-starting from the previous λ's bases; the first
/// λ starts from [`init_bases`]. A failed λ is recorded and the path goes on
/// from the last successful bases.
pub fn lambda_path<T: Real>(
    x: &MaskedMatrix<T>,
    lambdas: &[f64],
    cfg: &FscConfig,
    opts: &SelectionOptions,
) -> Result<LambdaPathReport<T>> {
    validate_lambdas(lambdas)?;
    cfg.validate()?;
    x.require_min_observed(cfg.rank)?;
    let mut runner = PathRunner {
        x,
        cfg,
        opts,
        warm: init_bases(x, cfg)?,
    };
    let entries = lambdas.iter().map(|&l| runner.step(l)).collect();
    Ok(LambdaPathReport { entries })
}

/// [`lambda_path`] on `lambdas`, then keeps doubling the largest λ until the
/// fused-group count reaches 1 or λ exceeds `2²⁰ · λ₀`. Returns the report
/// and the λ where a single group was first reached, if any.
pub fn lambda_path_to_single<T: Real>(
    x: &MaskedMatrix<T>,
    lambdas: &[f64],
    cfg: &FscConfig,
    opts: &SelectionOptions,
) -> Result<(LambdaPathReport<T>, Option<f64>)> {
    validate_lambdas(lambdas)?;
    cfg.validate()?;
    x.require_min_observed(cfg.rank)?;
    let l0 = crate::optimizer::default_lambda(x.nrows(), x.ncols());
    let cap = LAMBDA_CAP_FACTOR * l0;
    let mut runner = PathRunner {
        x,
        cfg,
        opts,
        warm: init_bases(x, cfg)?,
    };
    let mut entries: Vec<PathEntry<T>> = Vec::new();
    let single = |e: &PathEntry<T>| matches!(&e.outcome, Ok(f) if f.cluster_count() == 1);
    for &l in lambdas {
        entries.push(runner.step(l));
    }
    let mut reached = entries.iter().find(|e| single(e)).map(|e| e.lambda);
    let mut lambda = lambdas[lambdas.len() - 1];
    while reached.is_none() {
        lambda = if lambda > 0.0 { 2.0 * lambda } else { l0 };
        if lambda > cap {
            break;
        }
        let entry = runner.step(lambda);
        if single(&entry) {
            reached = Some(lambda);
        }
        entries.push(entry);
    }
    Ok((LambdaPathReport { entries }, reached))
}

/// The successful entry with the lowest fit score. Ties go to fewer
/// clusters, then to the smaller λ.
pub fn select_model<T: Real>(report: &LambdaPathReport<T>) -> Result<&PathFit<T>> {
    report
        .fits()
        .min_by(|a, b| {
            a.fit_score()
                .total_cmp(&b.fit_score())
                .then(a.selected_k().cmp(&b.selected_k()))
                .then(a.lambda.total_cmp(&b.lambda))
        })
        .ok_or(FscError::AllEntriesFailed)
}

/// One level of a rank sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RankLevel {
    pub rank: usize,
    /// Columns (0-based, original indexing) still active at this level.
    pub columns: Vec<usize>,
    /// Columns explained at this level and removed from later levels.
    pub explained: Vec<usize>,
    /// Labels over `columns`; `None` when no column was left.
    pub labels: Option<Labels>,
    pub selected_k: usize,
    pub fit_score: Option<f64>,
    /// Relative residuals `‖x^ω − Û^ω θ̂‖ / ‖x^ω‖` over `columns`, with `Û` the
    /// fused group's basis: mean, median, max.
    pub residual_mean: f64,
    pub residual_median: f64,
    pub residual_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankSweepReport {
    pub levels: Vec<RankLevel>,
    /// Columns not explained at any level.
    pub unexplained: Vec<usize>,
}

fn relative_residuals<T: Real>(x: &MaskedMatrix<T>, model: &ClusterModel<T>) -> Vec<f64> {
    (0..x.ncols())
        .map(|i| {
            let xw = x.observed_column(i);
            let fitted = model.basis_of(i).restrict(x.pattern(i)) * &model.coefficients[i];
            let norm = xw.norm();
            let res = (xw - fitted).norm();
            if norm > T::zero() {
                (res / norm).as_f64()
            } else {
                res.as_f64()
            }
        })
        .collect()
}

/// Fits and clusters at each rank in turn. After each level, columns whose
/// relative residual against their fused group's basis is at most
/// `tol_prune`, in a fused group of more than `r` members, are marked
/// explained and dropped from later levels.
pub fn rank_sweep<T: Real>(
    x: &MaskedMatrix<T>,
    r_values: &[usize],
    cfg: &FscConfig,
    opts: &SelectionOptions,
) -> Result<RankSweepReport> {
    if r_values.is_empty() || r_values[0] == 0 || r_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FscError::InvalidParams(
            "ranks must be positive and strictly increasing".into(),
        ));
    }
    let mut active: Vec<usize> = (0..x.ncols()).collect();
    let mut levels = Vec::with_capacity(r_values.len());
    for &r in r_values {
        if active.is_empty() {
            levels.push(RankLevel {
                rank: r,
                columns: Vec::new(),
                explained: Vec::new(),
                labels: None,
                selected_k: 0,
                fit_score: None,
                residual_mean: 0.0,
                residual_median: 0.0,
                residual_max: 0.0,
            });
            continue;
        }
        let sub = x.select_columns(&active);
        let cfg_r = cfg.with_rank(r);
        let (bases, _) = fit(&sub, &cfg_r)?;
        let scored = score_bases(&sub, &bases, opts)?;
        let groups = fused_groups(&pairwise_distances(&bases)?, T::lit(opts.fuse_tol));
        let fused = cluster_model(&sub, &bases, &groups)?;
        let residuals = relative_residuals(&sub, &fused);
        let sizes = groups.cluster_sizes();
        let explained: Vec<usize> = (0..active.len())
            .filter(|&i| residuals[i] <= opts.tol_prune && sizes[groups.ids()[i] - 1] > r)
            .map(|i| active[i])
            .collect();

        let mut sorted = residuals.clone();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len();
        let median = if m % 2 == 1 {
            sorted[m / 2]
        } else {
            0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
        };
        levels.push(RankLevel {
            rank: r,
            columns: active.clone(),
            explained: explained.clone(),
            selected_k: scored.selected_k(),
            fit_score: Some(scored.fit_score),
            residual_mean: residuals.iter().sum::<f64>() / m as f64,
            residual_median: median,
            residual_max: sorted[m - 1],
            labels: Some(scored.model.labels),
        });
        active.retain(|c| !explained.contains(c));
    }
    Ok(RankSweepReport {
        levels,
        unexplained: active,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn grid_shape() {
        let g = default_lambda_grid(100, 80);
        assert_eq!(g.len(), 17);
        assert_eq!(g[0], 0.0);
        let l0 = 1.0 / 8000.0;
        assert!((g[1] / l0 - 1e-4).abs() < 1e-16);
        assert!((g[16] / l0 - 1e2).abs() < 1e-10);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn score_grows_by_exact_dof_per_cluster() {
        let (d, r, omega) = (100, 5, 8000);
        let a: f64 = score_from_rss(12.5, 0.0, omega, (80, 3, r, d));
        let b: f64 = score_from_rss(12.5, 0.0, omega, (80, 4, r, d));
        assert_eq!(b - a, (2 * r * (d - r)) as f64);
    }

    #[test]
    fn rss_floor() {
        let zero: f64 = score_from_rss(0.0, 0.0, 10, (4, 1, 1, 3));
        let floor: f64 = score_from_rss(1e-30, 0.0, 10, (4, 1, 1, 3));
        assert_eq!(zero, floor);
        assert!(zero.is_finite());
        let a: f64 = score_from_rss(1e-28, 1e-24, 10, (4, 1, 1, 3));
        let b: f64 = score_from_rss(1e-26, 1e-24, 10, (4, 1, 1, 3));
        assert_eq!(a, b);
    }

    #[test]
    fn fused_groups_are_components() {
        let d = dmatrix![
            0.0, 0.001, 5.0, 5.0;
            0.001, 0.0, 0.005, 5.0;
            5.0, 0.005, 0.0, 5.0;
            5.0, 5.0, 5.0, 0.0
        ];
        let g = fused_groups(&d, 0.01);
        assert_eq!(g.ids(), &[1, 1, 1, 2]);
        assert_eq!(fused_groups(&d, 0.0).num_clusters(), 4);
    }

    #[test]
    fn invalid_grids() {
        assert!(validate_lambdas(&[]).is_err());
        assert!(validate_lambdas(&[0.0, 0.0]).is_err());
        assert!(validate_lambdas(&[1.0, 0.5]).is_err());
        assert!(validate_lambdas(&[-1.0]).is_err());
        assert!(validate_lambdas(&[0.0, f64::NAN]).is_err());
        assert!(validate_lambdas(&[0.0, 1e-3]).is_ok());
    }
}
