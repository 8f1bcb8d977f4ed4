//! Per-cluster bases, per-column coefficients and matrix completion.
//!
//! Each cluster's member bases are orthonormalized and concatenated into
//! `W_k`; the top `r` left singular vectors of `W_k` form the cluster basis
//! `Û_k`. A column is then fit on its observed rows,
//! `θ̂ = (Û^ωᵀ Û^ω)⁻¹ Û^ωᵀ x^ω`, and completed as `x̂ = Û θ̂`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{BasisSet, Labels, MaskedMatrix};
use crate::error::{FscError, Result};
use crate::geometry::{orthonormal_columns, Basis, ObservationPattern};
use crate::scalar::Real;

/// Labels, one orthonormal basis per cluster and one coefficient vector per column.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel<T: Real> {
    pub labels: Labels,
    pub cluster_bases: Vec<Basis<T>>,
    pub coefficients: Vec<DVector<T>>,
}

impl<T: Real> ClusterModel<T> {
    pub fn num_clusters(&self) -> usize {
        self.cluster_bases.len()
    }

    pub fn rank(&self) -> usize {
        self.cluster_bases.first().map_or(0, |b| b.rank())
    }

    /// Basis of the cluster that column `i` belongs to.
    pub fn basis_of(&self, i: usize) -> &Basis<T> {
        &self.cluster_bases[self.labels.ids()[i] - 1]
    }

    /// `Û_{k_i} θ̂_i` for every column.
    pub fn reconstruct(&self) -> DMatrix<T> {
        let d = self.cluster_bases[0].ambient_dim();
        let n = self.labels.len();
        let mut out = DMatrix::zeros(d, n);
        for i in 0..n {
            out.set_column(i, &(self.basis_of(i).matrix() * &self.coefficients[i]));
        }
        out
    }

    /// Observed-entry residual sum of squares `Σ_i ‖x_i^ω − Û^ω θ̂_i‖²`.
    pub fn observed_rss(&self, x: &MaskedMatrix<T>) -> T {
        let mut rss = T::zero();
        for i in 0..x.ncols() {
            let pattern = x.pattern(i);
            let uw = self.basis_of(i).restrict(pattern);
            let fitted = uw * &self.coefficients[i];
            rss += (x.observed_column(i) - fitted).norm_squared();
        }
        rss
    }
}

/// Top-`r` left singular vectors of the concatenated, orthonormalized member bases.
pub fn cluster_basis<T: Real>(bases: &BasisSet<T>, labels: &Labels, k: usize) -> Result<Basis<T>> {
    if labels.len() != bases.len() {
        return Err(FscError::LengthMismatch {
            pred: labels.len(),
            truth: bases.len(),
        });
    }
    let members = labels.members(k);
    if members.is_empty() {
        return Err(FscError::EmptyCluster(k));
    }
    let (d, r) = (bases.ambient_dim(), bases.rank());
    if members.len() == 1 {
        return orthonormal_columns(bases.get(members[0]).matrix())
            .map(Basis::from_matrix_unchecked);
    }
    let mut w = DMatrix::<T>::zeros(d, r * members.len());
    for (slot, &i) in members.iter().enumerate() {
        let q = orthonormal_columns(bases.get(i).matrix())?;
        w.columns_mut(slot * r, r).copy_from(&q);
    }
    let u = top_left_singular_vectors(&w, r)?;
    Ok(Basis::from_matrix_unchecked(u))
}

// Eigenvectors of the smaller Gram matrix. nalgebra's bidiagonal SVD can
// lose accuracy on exactly rank-deficient input, which is the common case here.
fn top_left_singular_vectors<T: Real>(w: &DMatrix<T>, r: usize) -> Result<DMatrix<T>> {
    let wide = w.nrows() <= w.ncols();
    let gram = if wide {
        w * w.transpose()
    } else {
        w.transpose() * w
    };
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });
    let left = |k: usize| -> DVector<T> {
        let v = eig.eigenvectors.column(k);
        let col = if wide { v.into_owned() } else { w * v };
        let norm = col.norm();
        if norm > T::zero() {
            col / norm
        } else {
            col
        }
    };
    let value = |slot: usize| eig.eigenvalues[order[slot]];
    let tol = T::lit(1e-10) * value(0).abs().max(T::one());
    let m = order.len().min(r);
    // Slots [lo, hi) share the eigenvalue at the cut; any basis of that
    // eigenspace is a valid answer, so pick one deterministically.
    let (mut lo, mut hi) = (m, m);
    if m > 0 && m < order.len() {
        while lo > 0 && (value(lo - 1) - value(m)).abs() <= tol {
            lo -= 1;
        }
        while hi < order.len() && (value(hi) - value(m)).abs() <= tol {
            hi += 1;
        }
    }
    let mut top = DMatrix::zeros(w.nrows(), r);
    for (c, &k) in order.iter().take(lo).enumerate() {
        top.set_column(c, &signed(left(k)));
    }
    if lo < m {
        let tied: Vec<DVector<T>> = (lo..hi).map(|s| left(order[s])).collect();
        for (c, v) in (lo..m).zip(tie_break(w, &tied, m - lo)) {
            top.set_column(c, &v);
        }
    }
    orthonormal_columns(&top)
}

// Deterministic sign: largest-magnitude entry positive.
fn signed<T: Real>(mut col: DVector<T>) -> DVector<T> {
    let pivot = col.iamax();
    if col[pivot] < T::zero() {
        col.neg_mut();
    }
    col
}

// `count` orthonormal directions in span(tied): projections of the summed
// columns of `w`, then of each column, Gram-Schmidt'ed, then the tied vectors.
fn tie_break<T: Real>(w: &DMatrix<T>, tied: &[DVector<T>], count: usize) -> Vec<DVector<T>> {
    let project = |x: &DVector<T>| -> DVector<T> {
        let mut p = DVector::zeros(x.len());
        for t in tied {
            p += t * t.dot(x);
        }
        p
    };
    let sum: DVector<T> = w.column_sum();
    let candidates = std::iter::once(sum)
        .chain(w.column_iter().map(|c| c.into_owned()))
        .chain(tied.iter().cloned());
    let mut out: Vec<DVector<T>> = Vec::with_capacity(count);
    for cand in candidates {
        if out.len() == count {
            break;
        }
        let mut v = project(&cand);
        let scale = v.norm();
        for u in &out {
            let a = u.dot(&v);
            v -= u * a;
        }
        let norm = v.norm();
        if norm > T::lit(1e-8) * scale.max(T::default_epsilon()) && norm > T::default_epsilon() {
            out.push(signed(v / norm));
        }
    }
    out
}

/// Least-squares coefficients of `x^ω` on the observed rows of `basis`.
pub fn coefficients<T: Real>(
    x_observed: &DVector<T>,
    pattern: &ObservationPattern,
    basis: &Basis<T>,
) -> Result<DVector<T>> {
    let r = basis.rank();
    if pattern.len() != x_observed.len() {
        return Err(FscError::ShapeMismatch(format!(
            "{} observed values for a pattern of {} rows",
            x_observed.len(),
            pattern.len()
        )));
    }
    if pattern.len() < r {
        return Err(FscError::InsufficientObservations {
            column: None,
            observed: pattern.len(),
            required: r,
        });
    }
    if pattern
        .rows()
        .last()
        .is_some_and(|&l| l >= basis.ambient_dim())
    {
        return Err(FscError::ShapeMismatch("observed row outside basis".into()));
    }
    let uw = basis.restrict(pattern);
    // QR solve of the normal equations' least-squares problem.
    let qr = uw.clone().qr();
    let rfac = qr.r();
    let sv = rfac.singular_values();
    let tol = T::lit(crate::geometry::RANK_TOLERANCE) * sv.max();
    if !(sv.min() > tol) {
        return Err(FscError::RankDeficient {
            smallest: sv.min().as_f64(),
            tolerance: tol.as_f64(),
        });
    }
    let qtx = qr.q().tr_mul(x_observed);
    rfac.solve_upper_triangular(&qtx)
        .ok_or(FscError::RankDeficient {
            smallest: 0.0,
            tolerance: tol.as_f64(),
        })
}

/// `x̂ = Û θ̂` over all `d` rows.
pub fn complete_column<T: Real>(
    x_observed: &DVector<T>,
    pattern: &ObservationPattern,
    basis: &Basis<T>,
) -> Result<DVector<T>> {
    let theta = coefficients(x_observed, pattern, basis)?;
    Ok(basis.matrix() * theta)
}

/// Builds the cluster model (averaged bases plus coefficients) for a labeling.
pub fn cluster_model<T: Real>(
    x: &MaskedMatrix<T>,
    bases: &BasisSet<T>,
    labels: &Labels,
) -> Result<ClusterModel<T>> {
    if labels.len() != x.ncols() || bases.len() != x.ncols() {
        return Err(FscError::ShapeMismatch(format!(
            "{} labels and {} bases for {} columns",
            labels.len(),
            bases.len(),
            x.ncols()
        )));
    }
    let cluster_bases: Vec<Basis<T>> = (1..=labels.num_clusters())
        .into_par_iter()
        .map(|k| cluster_basis(bases, labels, k))
        .collect::<Result<_>>()?;

    let results: Vec<Result<DVector<T>>> = (0..x.ncols())
        .into_par_iter()
        .map(|i| {
            let basis = &cluster_bases[labels.ids()[i] - 1];
            coefficients(&x.observed_column(i), x.pattern(i), basis).map_err(|e| e.at_column(i))
        })
        .collect();
    let mut failures = Vec::new();
    let mut coefficients = Vec::with_capacity(x.ncols());
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(c) => coefficients.push(c),
            Err(e) => failures.push((i, e)),
        }
    }
    if !failures.is_empty() {
        return Err(FscError::ColumnFailures(failures));
    }
    Ok(ClusterModel {
        labels: labels.clone(),
        cluster_bases,
        coefficients,
    })
}

/// Completes every column from its cluster basis. The returned matrix is
/// `Û_{k_i} θ̂_i` everywhere, observed entries included; use
/// [`restore_observed`] to put the original observations back.
pub fn complete_matrix<T: Real>(
    x: &MaskedMatrix<T>,
    bases: &BasisSet<T>,
    labels: &Labels,
) -> Result<(DMatrix<T>, ClusterModel<T>)> {
    let model = cluster_model(x, bases, labels)?;
    Ok((model.reconstruct(), model))
}

/// Overwrites observed entries of a completed matrix with the data.
pub fn restore_observed<T: Real>(completed: &mut DMatrix<T>, x: &MaskedMatrix<T>) {
    for j in 0..x.ncols() {
        for &i in x.pattern(j).rows() {
            completed[(i, j)] = x.values()[(i, j)];
        }
    }
}
