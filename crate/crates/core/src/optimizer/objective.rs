//! The fused objective and its gradient.
//!
//! ```text
//! f(U_1..U_n) = Σ_i ‖x_i^ω − P_i^ω x_i^ω‖² + (λ/2) Σ_i Σ_j ‖P_i − P_j‖²_F
//! ```
//!
//! With a fully observed matrix every `ω` is the full row set and this is the
//! complete-data objective. The fusion term always uses the full projectors.
//!
//! Gradients use one identity throughout: if `g` depends on `U` only through
//! `P = U H Uᵀ` with `H = (UᵀU + ρI)⁻¹`, and `M = ∂g/∂P` is symmetric, then
//!
//! ```text
//! ∂g/∂U = 2 (I − P) M U H.
//! ```
//!
//! For the residual `‖x − Px‖²` this gives
//! `−2 [e (eᵀU) + (I − P) e (xᵀU)] H` with `e = (I − P)x`, and for the fusion
//! term `M = 2λ (n P_i − Σ_j P_j)`. Both forms are exact for any ridge.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::data::{BasisSet, MaskedMatrix};
use crate::error::{FscError, Result};
use crate::geometry::{gram_cholesky, projector_factor};
use crate::scalar::Real;

/// Evaluator for the fused objective on a fixed data matrix.
#[derive(Debug, Clone, Copy)]
pub struct FusionObjective<'a, T: Real> {
    data: &'a MaskedMatrix<T>,
    lambda: T,
    ridge: T,
}

struct ColumnState<T: Real> {
    /// Full-basis factorization: `P_i = z zᵀ`.
    chol: Cholesky<T, Dyn>,
    z: DMatrix<T>,
    residual: T,
    /// Restricted quantities for the residual gradient.
    restricted: Restricted<T>,
}

struct Restricted<T: Real> {
    chol: Cholesky<T, Dyn>,
    z: DMatrix<T>,
    u: DMatrix<T>,
    x: DVector<T>,
    e: DVector<T>,
}

/// Everything computed at one iterate, reused by the gradient.
pub(crate) struct Evaluation<T: Real> {
    pub(crate) value: T,
    pub(crate) residual: T,
    pub(crate) fusion: T,
    columns: Vec<ColumnState<T>>,
    /// `S = Σ_j P_j`.
    sum_projectors: DMatrix<T>,
}

impl<'a, T: Real> FusionObjective<'a, T> {
    pub fn new(data: &'a MaskedMatrix<T>, lambda: T) -> Self {
        Self {
            data,
            lambda,
            ridge: T::zero(),
        }
    }

    pub fn with_ridge(mut self, ridge: T) -> Self {
        self.ridge = ridge;
        self
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn data(&self) -> &MaskedMatrix<T> {
        self.data
    }

    fn check_shapes(&self, bases: &BasisSet<T>) -> Result<()> {
        if bases.len() != self.data.ncols() || bases.ambient_dim() != self.data.nrows() {
            return Err(FscError::ShapeMismatch(format!(
                "{} bases of dimension {} for a {}x{} data matrix",
                bases.len(),
                bases.ambient_dim(),
                self.data.nrows(),
                self.data.ncols()
            )));
        }
        self.data.require_min_observed(bases.rank())
    }

    /// Objective value.
    pub fn value(&self, bases: &BasisSet<T>) -> Result<T> {
        self.check_shapes(bases)?;
        Ok(self.evaluate(&bases.matrices())?.value)
    }

    /// The residual (data-fit) and fusion terms separately.
    pub fn terms(&self, bases: &BasisSet<T>) -> Result<(T, T)> {
        self.check_shapes(bases)?;
        let ev = self.evaluate(&bases.matrices())?;
        Ok((ev.residual, ev.fusion))
    }

    /// Gradient with respect to basis `i`.
    pub fn gradient(&self, bases: &BasisSet<T>, i: usize) -> Result<DMatrix<T>> {
        self.check_shapes(bases)?;
        if i >= bases.len() {
            return Err(FscError::ShapeMismatch(format!(
                "basis index {} out of range for {} bases",
                i + 1,
                bases.len()
            )));
        }
        let u = bases.matrices();
        let ev = self.evaluate(&u)?;
        let su = &ev.sum_projectors * &u[i];
        Ok(self.column_gradient(&u[i], &ev, i, &su))
    }

    /// Gradients with respect to every basis.
    pub fn gradients(&self, bases: &BasisSet<T>) -> Result<Vec<DMatrix<T>>> {
        self.check_shapes(bases)?;
        let u = bases.matrices();
        let ev = self.evaluate(&u)?;
        Ok(self.all_gradients(&u, &ev))
    }

    pub(crate) fn evaluate(&self, u: &[DMatrix<T>]) -> Result<Evaluation<T>> {
        let columns: Vec<ColumnState<T>> = u
            .par_iter()
            .enumerate()
            .map(|(j, uj)| self.column_state(uj, j))
            .collect::<Result<_>>()?;

        // Sequential reductions keep the value independent of thread count.
        let mut residual = T::zero();
        for c in &columns {
            residual += c.residual;
        }

        let d = self.data.nrows();
        let n = u.len();
        let r = u.first().map_or(0, |m| m.ncols());
        let mut stacked = DMatrix::<T>::zeros(d, n * r);
        for (j, c) in columns.iter().enumerate() {
            stacked.columns_mut(j * r, r).copy_from(&c.z);
        }
        let sum_projectors = &stacked * stacked.transpose();

        let mut self_norms = T::zero();
        for c in &columns {
            self_norms += c.z.tr_mul(&c.z).norm_squared();
        }
        // Σ_iΣ_j ‖P_i − P_j‖² = 2n Σ_i ‖P_i‖² − 2‖S‖²
        let pair_sum = T::from_count(n) * self_norms - sum_projectors.norm_squared();
        let fusion = if self.lambda == T::zero() {
            T::zero()
        } else {
            self.lambda * pair_sum.max(T::zero())
        };

        Ok(Evaluation {
            value: residual + fusion,
            residual,
            fusion,
            columns,
            sum_projectors,
        })
    }

    fn column_state(&self, u: &DMatrix<T>, j: usize) -> Result<ColumnState<T>> {
        let chol = gram_cholesky(u, self.ridge)?;
        let z = projector_factor(u, &chol);

        let pattern = self.data.pattern(j);
        if pattern.len() < u.ncols() {
            return Err(FscError::InsufficientObservations {
                column: Some(j),
                observed: pattern.len(),
                required: u.ncols(),
            });
        }
        let xw = self.data.observed_column(j);
        let (uw, chol_w, zw) = if pattern.is_full(u.nrows()) {
            (u.clone(), chol.clone(), z.clone())
        } else {
            let uw = pattern.select_rows(u);
            let chol_w = gram_cholesky(&uw, self.ridge)?;
            let zw = projector_factor(&uw, &chol_w);
            (uw, chol_w, zw)
        };
        let e = &xw - &zw * zw.tr_mul(&xw);
        let residual = e.norm_squared();

        Ok(ColumnState {
            chol,
            z,
            residual,
            restricted: Restricted {
                chol: chol_w,
                z: zw,
                u: uw,
                x: xw,
                e,
            },
        })
    }

    pub(crate) fn all_gradients(&self, u: &[DMatrix<T>], ev: &Evaluation<T>) -> Vec<DMatrix<T>> {
        let n = u.len();
        let (d, r) = (self.data.nrows(), u.first().map_or(0, |m| m.ncols()));
        // One product S [U_1 .. U_n] instead of n small ones.
        let su = if self.lambda == T::zero() {
            DMatrix::<T>::zeros(d, 0)
        } else {
            let mut stacked = DMatrix::<T>::zeros(d, n * r);
            for (j, uj) in u.iter().enumerate() {
                stacked.columns_mut(j * r, r).copy_from(uj);
            }
            &ev.sum_projectors * stacked
        };
        (0..n)
            .into_par_iter()
            .map(|i| {
                let sui = if su.ncols() == 0 {
                    DMatrix::<T>::zeros(d, 0)
                } else {
                    su.columns(i * r, r).into_owned()
                };
                self.column_gradient(&u[i], ev, i, &sui)
            })
            .collect()
    }

    /// `su` is `S U_i`, unused when `λ = 0`.
    fn column_gradient(
        &self,
        ui: &DMatrix<T>,
        ev: &Evaluation<T>,
        i: usize,
        su: &DMatrix<T>,
    ) -> DMatrix<T> {
        let col = &ev.columns[i];
        let two = T::lit(2.0);

        // Residual part on the observed rows.
        let rs = &col.restricted;
        let et_u = rs.e.tr_mul(&rs.u); // 1×r
        let xt_u = rs.x.tr_mul(&rs.u);
        let perp_e = &rs.e - &rs.z * rs.z.tr_mul(&rs.e);
        let a = &rs.e * et_u + perp_e * xt_u; // |ω|×r
        let restricted_grad = right_solve(&rs.chol, &a) * (-two);

        let mut grad = DMatrix::<T>::zeros(ui.nrows(), ui.ncols());
        for (k, &row) in self.data.pattern(i).rows().iter().enumerate() {
            grad.row_mut(row).copy_from(&restricted_grad.row(k));
        }

        if self.lambda != T::zero() {
            let n = T::from_count(ev.columns.len());
            // A = (n P_i − S) U_i
            let pu = &col.z * col.z.tr_mul(ui);
            let a = pu * n - su;
            // (I − P_i) A
            let perp = &a - &col.z * col.z.tr_mul(&a);
            let fusion_grad = right_solve(&col.chol, &perp) * (T::lit(4.0) * self.lambda);
            grad += fusion_grad;
        }
        grad
    }
}

/// `A H` with `H = G⁻¹` given the Cholesky factor of `G`.
fn right_solve<T: Real>(chol: &Cholesky<T, Dyn>, a: &DMatrix<T>) -> DMatrix<T> {
    chol.solve(&a.transpose()).transpose()
}

fn require_full<T: Real>(x: &MaskedMatrix<T>) -> Result<()> {
    if x.is_fully_observed() {
        Ok(())
    } else {
        Err(FscError::ShapeMismatch(
            "complete-data objective requires a fully observed matrix".into(),
        ))
    }
}

/// Complete-data objective `Σ‖x_i − P_i x_i‖² + (λ/2) ΣΣ ‖P_i − P_j‖²_F`.
pub fn objective_full<T: Real>(x: &MaskedMatrix<T>, bases: &BasisSet<T>, lambda: T) -> Result<T> {
    require_full(x)?;
    FusionObjective::new(x, lambda).value(bases)
}

/// Missing-data objective: residuals on observed rows only, fusion on full projectors.
pub fn objective_masked<T: Real>(x: &MaskedMatrix<T>, bases: &BasisSet<T>, lambda: T) -> Result<T> {
    FusionObjective::new(x, lambda).value(bases)
}

pub fn gradient_full<T: Real>(
    x: &MaskedMatrix<T>,
    bases: &BasisSet<T>,
    lambda: T,
    i: usize,
) -> Result<DMatrix<T>> {
    require_full(x)?;
    FusionObjective::new(x, lambda).gradient(bases, i)
}

pub fn gradient_masked<T: Real>(
    x: &MaskedMatrix<T>,
    bases: &BasisSet<T>,
    lambda: T,
    i: usize,
) -> Result<DMatrix<T>> {
    FusionObjective::new(x, lambda).gradient(bases, i)
}
