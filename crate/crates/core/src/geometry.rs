//! Subspace bases, orthogonal projectors and projector distances.
//!
//! A subspace is carried as a `d × r` basis `U`. Its projector is
//! `P = U (UᵀU + ρI)⁻¹ Uᵀ`, which is the orthogonal projector onto `span(U)`
//! when the ridge `ρ` is zero. Restricting the rows of `U` to an observation
//! pattern `ω` and applying the same formula gives the restricted projector
//! `P^ω`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{FscError, Result};
use crate::scalar::Real;

/// Relative singular-value threshold below which a basis counts as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Condition number of `UᵀU` above which [`auto_ridge`] returns a nonzero ridge.
pub const RIDGE_CONDITION_LIMIT: f64 = 1e12;

/// A `d × r` matrix whose columns span a subspace of `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis<T: Real> {
    matrix: DMatrix<T>,
}

impl<T: Real> Basis<T> {
    /// Wraps a matrix, checking `d ≥ r ≥ 1` and full column rank.
    pub fn new(matrix: DMatrix<T>) -> Result<Self> {
        check_shape(&matrix)?;
        let (_, sv) = qr_with_singular_values(&matrix);
        check_rank(&sv)?;
        Ok(Self { matrix })
    }

    /// Wraps a matrix without the rank check. Shape is still validated.
    pub fn from_matrix_unchecked(matrix: DMatrix<T>) -> Self {
        debug_assert!(matrix.ncols() >= 1 && matrix.nrows() >= matrix.ncols());
        Self { matrix }
    }

    pub fn ambient_dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn rank(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.matrix
    }

    /// Returns an orthonormal basis of the same span. See [`orthonormalize`].
    pub fn orthonormalized(&self) -> Result<Self> {
        orthonormalize(self)
    }

    /// Keeps only the rows listed in `pattern`.
    pub fn restrict(&self, pattern: &ObservationPattern) -> DMatrix<T> {
        pattern.select_rows(&self.matrix)
    }
}

/// A symmetric `m × m` projection matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector<T: Real> {
    matrix: DMatrix<T>,
}

impl<T: Real> Projector<T> {
    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, x: &DVector<T>) -> DVector<T> {
        &self.matrix * x
    }

    pub fn trace(&self) -> T {
        self.matrix.trace()
    }
}

/// Strictly increasing, nonempty list of observed (0-based) row indices of one column.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObservationPattern {
    rows: Vec<usize>,
}

impl ObservationPattern {
    pub fn new(rows: Vec<usize>) -> Result<Self> {
        if rows.is_empty() {
            return Err(FscError::InsufficientObservations {
                column: None,
                observed: 0,
                required: 1,
            });
        }
        if rows.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FscError::InvalidParams(
                "observation pattern must be strictly increasing".into(),
            ));
        }
        Ok(Self { rows })
    }

    /// Every row of a `d`-dimensional column.
    pub fn full(d: usize) -> Self {
        assert!(d > 0, "ambient dimension must be positive");
        Self {
            rows: (0..d).collect(),
        }
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_full(&self, d: usize) -> bool {
        self.rows.len() == d
    }

    pub fn select_rows<T: Real>(&self, m: &DMatrix<T>) -> DMatrix<T> {
        m.select_rows(self.rows.iter())
    }

    pub fn select<T: Real>(&self, x: &DVector<T>) -> DVector<T> {
        DVector::from_iterator(self.rows.len(), self.rows.iter().map(|&i| x[i]))
    }
}

fn check_shape<T: Real>(m: &DMatrix<T>) -> Result<()> {
    if m.ncols() == 0 || m.nrows() < m.ncols() {
        return Err(FscError::ShapeMismatch(format!(
            "basis must satisfy d >= r >= 1, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn rank_tolerance<T: Real>() -> T {
    let eps = T::default_epsilon() * T::lit(10.0);
    T::lit(RANK_TOLERANCE).max(eps)
}

fn check_rank<T: Real>(singular_values: &DVector<T>) -> Result<()> {
    let smax = singular_values.max();
    let smin = singular_values.min();
    let tol = rank_tolerance::<T>() * smax;
    if !(smin > tol) || !smax.is_finite() {
        return Err(FscError::RankDeficient {
            smallest: smin.as_f64(),
            tolerance: tol.as_f64(),
        });
    }
    Ok(())
}

/// Thin QR with a positive `R` diagonal, plus the singular values of the input
/// (computed from the small `r × r` factor).
fn qr_with_singular_values<T: Real>(m: &DMatrix<T>) -> (DMatrix<T>, DVector<T>) {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..r.ncols() {
        if r[(j, j)] < T::zero() {
            q.column_mut(j).neg_mut();
        }
    }
    let sv = r.singular_values();
    (q, sv)
}

/// Gram–Schmidt-equivalent orthonormalization: `Q` with `QᵀQ = I`, `span(Q) = span(B)`
/// and `B = Q R` for an upper-triangular `R` with positive diagonal.
pub fn orthonormalize<T: Real>(basis: &Basis<T>) -> Result<Basis<T>> {
    orthonormal_columns(basis.matrix()).map(Basis::from_matrix_unchecked)
}

pub(crate) fn orthonormal_columns<T: Real>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    check_shape(m)?;
    let (q, sv) = qr_with_singular_values(m);
    check_rank(&sv)?;
    Ok(q)
}

/// Ridge suggested for a basis whose Gram matrix condition number exceeds
/// [`RIDGE_CONDITION_LIMIT`]: `1e-10 · trace(UᵀU) / r`, otherwise zero.
pub fn auto_ridge<T: Real>(basis: &Basis<T>) -> T {
    let sv = basis.matrix().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let cond = if smin > T::zero() {
        (smax / smin) * (smax / smin)
    } else {
        T::max_value().unwrap_or(T::lit(f64::MAX))
    };
    if cond > T::lit(RIDGE_CONDITION_LIMIT) {
        let g = basis.matrix().tr_mul(basis.matrix());
        T::lit(1e-10) * g.trace() / T::from_count(basis.rank())
    } else {
        T::zero()
    }
}

/// Cholesky factor of `UᵀU + ρI`, or `RankDeficient`.
pub(crate) fn gram_cholesky<T: Real>(u: &DMatrix<T>, ridge: T) -> Result<Cholesky<T, Dyn>> {
    let mut g = u.tr_mul(u);
    for k in 0..g.nrows() {
        g[(k, k)] += ridge;
    }
    let scale = g.diagonal().max();
    let fail = || FscError::RankDeficient {
        smallest: 0.0,
        tolerance: (rank_tolerance::<T>() * scale.sqrt()).as_f64(),
    };
    let chol = Cholesky::new(g).ok_or_else(fail)?;
    let l = chol.l_dirty();
    let lmin = (0..l.nrows())
        .map(|k| l[(k, k)])
        .fold(T::max_value().unwrap(), |a, b| a.min(b));
    if !(lmin > rank_tolerance::<T>() * scale.sqrt()) {
        return Err(FscError::RankDeficient {
            smallest: lmin.as_f64(),
            tolerance: (rank_tolerance::<T>() * scale.sqrt()).as_f64(),
        });
    }
    Ok(chol)
}

/// `Z = U L⁻ᵀ` so that `Z Zᵀ = U (UᵀU + ρI)⁻¹ Uᵀ`.
pub(crate) fn projector_factor<T: Real>(u: &DMatrix<T>, chol: &Cholesky<T, Dyn>) -> DMatrix<T> {
    // Zᵀ = L⁻¹ Uᵀ
    let zt = chol
        .l()
        .solve_lower_triangular(&u.transpose())
        .expect("Cholesky factor has a positive diagonal");
    zt.transpose()
}

fn projector_from_matrix<T: Real>(u: &DMatrix<T>, ridge: T) -> Result<Projector<T>> {
    if ridge < T::zero() {
        return Err(FscError::InvalidParams("ridge must be nonnegative".into()));
    }
    if ridge == T::zero() {
        let (_, sv) = qr_with_singular_values(u);
        check_rank(&sv)?;
    }
    let chol = gram_cholesky(u, ridge)?;
    let z = projector_factor(u, &chol);
    let mut p = &z * z.transpose();
    symmetrize(&mut p);
    Ok(Projector { matrix: p })
}

fn symmetrize<T: Real>(p: &mut DMatrix<T>) {
    let half = T::lit(0.5);
    for i in 0..p.nrows() {
        for j in (i + 1)..p.ncols() {
            let v = (p[(i, j)] + p[(j, i)]) * half;
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
}

/// `P = U (UᵀU + ρI)⁻¹ Uᵀ`.
pub fn projector<T: Real>(basis: &Basis<T>, ridge: T) -> Result<Projector<T>> {
    projector_from_matrix(basis.matrix(), ridge)
}

/// Projector built from the rows of the basis selected by `pattern`.
pub fn restricted_projector<T: Real>(
    basis: &Basis<T>,
    pattern: &ObservationPattern,
    ridge: T,
) -> Result<Projector<T>> {
    if pattern.len() < basis.rank() {
        return Err(FscError::InsufficientObservations {
            column: None,
            observed: pattern.len(),
            required: basis.rank(),
        });
    }
    if let Some(&last) = pattern.rows().last() {
        if last >= basis.ambient_dim() {
            return Err(FscError::ShapeMismatch(format!(
                "observed row {} outside ambient dimension {}",
                last + 1,
                basis.ambient_dim()
            )));
        }
    }
    projector_from_matrix(&basis.restrict(pattern), ridge)
}

/// Squared Frobenius distance `‖P_i − P_j‖²_F` between the projectors of two
/// bases, evaluated as `r_i + r_j − 2‖Q_iᵀQ_j‖²_F` on orthonormalized bases.
pub fn projector_distance<T: Real>(a: &Basis<T>, b: &Basis<T>) -> Result<T> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(FscError::DimensionMismatch {
            left: a.ambient_dim(),
            right: b.ambient_dim(),
        });
    }
    let qa = orthonormal_columns(a.matrix())?;
    let qb = orthonormal_columns(b.matrix())?;
    Ok(orthonormal_distance(&qa, &qb))
}

/// Distance between two matrices already known to have orthonormal columns.
pub(crate) fn orthonormal_distance<T: Real>(qa: &DMatrix<T>, qb: &DMatrix<T>) -> T {
    let cross = qa.tr_mul(qb).norm_squared();
    let two = T::lit(2.0);
    let v = T::from_count(qa.ncols()) + T::from_count(qb.ncols()) - two * cross;
    v.max(T::zero())
}
