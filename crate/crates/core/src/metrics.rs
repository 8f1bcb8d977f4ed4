//! Evaluation metrics.

use nalgebra::DMatrix;

use crate::data::Labels;
use crate::error::{FscError, Result};
use crate::geometry::{projector_distance, Basis};
use crate::scalar::Real;

/// Fraction of misclassified columns under the best matching of predicted to
/// true cluster ids. The matching is an optimal assignment on the confusion
/// matrix; differing cluster counts are handled by padding.
pub fn clustering_error(pred: &Labels, truth: &Labels) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(FscError::LengthMismatch {
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    let n = pred.len();
    if n == 0 {
        return Ok(0.0);
    }
    let m = pred.num_clusters().max(truth.num_clusters());
    let mut confusion = vec![vec![0i64; m]; m];
    for (&p, &t) in pred.ids().iter().zip(truth.ids()) {
        confusion[p - 1][t - 1] += 1;
    }
    let matched = max_weight_assignment(&confusion);
    Ok((n as i64 - matched) as f64 / n as f64)
}

/// Maximum total weight of a perfect matching in a square matrix
/// (Hungarian algorithm with potentials, O(m³)).
pub fn max_weight_assignment(weights: &[Vec<i64>]) -> i64 {
    let m = weights.len();
    if m == 0 {
        return 0;
    }
    let top = weights.iter().flatten().copied().max().unwrap_or(0);
    // minimize cost = top − weight; 1-based arrays with a virtual column 0
    let cost = |i: usize, j: usize| top - weights[i - 1][j - 1];
    let inf = i64::MAX / 4;
    let mut u = vec![0i64; m + 1];
    let mut v = vec![0i64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=m {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    (1..=m).map(|j| weights[p[j] - 1][j - 1]).sum()
}

/// Which entries [`completion_rmse`] averages over.
#[derive(Debug, Clone, Copy)]
pub enum Scope<'a> {
    All,
    /// Entries where the mask is `false`.
    Unobserved(&'a DMatrix<bool>),
}

/// `sqrt(Σ (x̂ − x)²) / sqrt(Σ x²)` over the scope, i.e. RMSE normalized by the
/// RMS of the reference on the same entries.
pub fn completion_rmse<T: Real>(
    xhat: &DMatrix<T>,
    x: &DMatrix<T>,
    scope: Scope<'_>,
) -> Result<f64> {
    if xhat.shape() != x.shape() {
        return Err(FscError::ShapeMismatch(format!(
            "estimate is {}x{}, reference is {}x{}",
            xhat.nrows(),
            xhat.ncols(),
            x.nrows(),
            x.ncols()
        )));
    }
    if let Scope::Unobserved(mask) = scope {
        if mask.shape() != x.shape() {
            return Err(FscError::ShapeMismatch(
                "mask shape differs from data".into(),
            ));
        }
    }
    let mut err = 0.0;
    let mut norm = 0.0;
    let mut count = 0usize;
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            let include = match scope {
                Scope::All => true,
                Scope::Unobserved(mask) => !mask[(i, j)],
            };
            if include {
                let (a, b) = (xhat[(i, j)].as_f64(), x[(i, j)].as_f64());
                err += (a - b) * (a - b);
                norm += b * b;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(FscError::EmptyScope);
    }
    if norm == 0.0 {
        return Ok(if err == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok((err / norm).sqrt())
}

/// `‖P_Û − P_U*‖²_F` between an estimated and a reference basis.
pub fn subspace_affinity<T: Real>(estimate: &Basis<T>, reference: &Basis<T>) -> Result<T> {
    projector_distance(estimate, reference)
}
