use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use super::objective::{Evaluation, FusionObjective};
use super::{FitTrace, FscConfig, InitStrategy};
use crate::data::{BasisSet, MaskedMatrix};
use crate::error::{FscError, Result};
use crate::geometry::orthonormal_columns;
use crate::rng::{stream_rng, Stream};
use crate::scalar::Real;

const MAX_BACKTRACKS: usize = 60;

fn gaussian_block<T: Real, R: rand::Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<T> {
    let mut m = DMatrix::<T>::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            let v: f64 = StandardNormal.sample(rng);
            m[(r, c)] = T::lit(v);
        }
    }
    m
}

/// Initial bases, deterministic given `cfg.seed`.
pub fn init_bases<T: Real>(x: &MaskedMatrix<T>, cfg: &FscConfig) -> Result<BasisSet<T>> {
    cfg.validate()?;
    let (d, n, r) = (x.nrows(), x.ncols(), cfg.rank);
    if r > d {
        return Err(FscError::InvalidParams(format!(
            "rank {r} exceeds ambient dimension {d}"
        )));
    }
    let mut rng = stream_rng(cfg.seed, Stream::BasisInit);
    let mut out = Vec::with_capacity(n);
    if cfg.init == InitStrategy::ColumnSeeded {
        let shared: DMatrix<T> = gaussian_block(&mut rng, d, r);
        for j in 0..n {
            let mut m = shared.clone();
            let col = x.zero_filled_column(j);
            let norm = col.norm();
            if norm > T::zero() {
                m.set_column(0, &(col / norm));
            }
            let q = match orthonormal_columns(&m) {
                Ok(q) => q,
                // The column is (numerically) inside the shared block: fresh draw.
                Err(_) => loop {
                    m.columns_mut(1, r - 1)
                        .copy_from(&gaussian_block::<T, _>(&mut rng, d, r - 1));
                    if let Ok(q) = orthonormal_columns(&m) {
                        break q;
                    }
                },
            };
            out.push(q);
        }
        return Ok(BasisSet::from_matrices_unchecked(out));
    }
    for _ in 0..n {
        let q = loop {
            // Gaussian draws are full rank with probability one; redraw otherwise.
            if let Ok(q) = orthonormal_columns(&gaussian_block::<T, _>(&mut rng, d, r)) {
                break q;
            }
        };
        out.push(q);
    }
    Ok(BasisSet::from_matrices_unchecked(out))
}

/// Runs gradient descent from a random (or column-seeded) start.
pub fn fit<T: Real>(x: &MaskedMatrix<T>, cfg: &FscConfig) -> Result<(BasisSet<T>, FitTrace)> {
    cfg.validate()?;
    x.require_min_observed(cfg.rank)?;
    let start = init_bases(x, cfg)?;
    fit_from(x, cfg, start)
}

/// Runs gradient descent from the given bases (warm start).
///
/// All bases move simultaneously along their own negative gradient with one
/// shared step chosen by Armijo backtracking. The first trial step is
/// `cfg.step0`; after an accepted step `t` the next trial is `t / β`.
pub fn fit_from<T: Real>(
    x: &MaskedMatrix<T>,
    cfg: &FscConfig,
    start: BasisSet<T>,
) -> Result<(BasisSet<T>, FitTrace)> {
    cfg.validate()?;
    x.require_min_observed(cfg.rank)?;
    if start.len() != x.ncols() || start.ambient_dim() != x.nrows() || start.rank() != cfg.rank {
        return Err(FscError::ShapeMismatch(format!(
            "warm start has {} bases of shape {}x{}, expected {} of {}x{}",
            start.len(),
            start.ambient_dim(),
            start.rank(),
            x.ncols(),
            x.nrows(),
            cfg.rank
        )));
    }

    let objective = FusionObjective::new(x, T::lit(cfg.lambda)).with_ridge(T::lit(cfg.ridge));
    let beta = T::lit(cfg.armijo_beta);
    let c = T::lit(cfg.armijo_c);
    let tol = T::lit(cfg.tol_rel);
    let tiny = T::lit(1e-300).max(T::min_value().unwrap_or(T::zero()));

    let mut u = start.matrices();
    let mut ev = objective.evaluate(&u)?;
    if !ev.value.is_finite() {
        return Err(FscError::NonFiniteObjective { iteration: 0 });
    }

    let mut trace = FitTrace {
        objectives: vec![ev.value.as_f64()],
        iterations: 0,
        converged: false,
    };
    let mut step = T::lit(cfg.step0);

    for it in 1..=cfg.max_iters {
        trace.iterations = it;
        if it > 1 && (it - 1) % cfg.reorth_period == 0 {
            u = u
                .iter()
                .map(orthonormal_columns)
                .collect::<Result<Vec<_>>>()?;
            ev = objective.evaluate(&u)?;
            if !ev.value.is_finite() {
                return Err(FscError::NonFiniteObjective { iteration: it });
            }
        }

        let grads = objective.all_gradients(&u, &ev);
        let mut gnorm2 = T::zero();
        for g in &grads {
            gnorm2 += g.norm_squared();
        }
        if !gnorm2.is_finite() {
            return Err(FscError::NonFiniteObjective { iteration: it });
        }
        if gnorm2 == T::zero() {
            trace.converged = true;
            break;
        }

        let Some((t, cand, cand_ev)) =
            line_search(&objective, &u, &grads, &ev, gnorm2, step, beta, c)
        else {
            // No step of any length decreases the objective at working precision.
            trace.converged = true;
            break;
        };

        let decrease = ev.value - cand_ev.value;
        let scale = ev.value.abs().max(tiny);
        u = cand;
        ev = cand_ev;
        trace.objectives.push(ev.value.as_f64());
        step = t / beta;

        if decrease / scale < tol || ev.value == T::zero() {
            trace.converged = true;
            break;
        }
    }

    let bases = u
        .iter()
        .map(orthonormal_columns)
        .collect::<Result<Vec<_>>>()?;
    Ok((BasisSet::from_matrices_unchecked(bases), trace))
}

#[allow(clippy::too_many_arguments)]
fn line_search<T: Real>(
    objective: &FusionObjective<'_, T>,
    u: &[DMatrix<T>],
    grads: &[DMatrix<T>],
    current: &Evaluation<T>,
    gnorm2: T,
    first_step: T,
    beta: T,
    c: T,
) -> Option<(T, Vec<DMatrix<T>>, Evaluation<T>)> {
    let mut t = first_step;
    for _ in 0..MAX_BACKTRACKS {
        let cand: Vec<DMatrix<T>> = u.iter().zip(grads).map(|(ui, gi)| ui - gi * t).collect();
        // A failed factorization means the step collapsed a basis: shrink.
        if let Ok(ev) = objective.evaluate(&cand) {
            if ev.value.is_finite() && ev.value <= current.value - c * t * gnorm2 {
                return Some((t, cand, ev));
            }
        }
        t *= beta;
    }
    None
}
