//! Per-column subspace fitting under the fusion penalty.

mod descent;
mod objective;

pub use descent::{fit, fit_from, init_bases};
pub use objective::{
    gradient_full, gradient_masked, objective_full, objective_masked, FusionObjective,
};

use serde::{Deserialize, Serialize};

use crate::error::{FscError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Independent standard normal entries, then orthonormalized.
    #[default]
    RandomGaussian,
    /// First basis vector is the (zero-filled, normalized) column itself;
    /// the remaining `r − 1` directions come from one random block shared by
    /// every column, so initial subspaces differ only through the data.
    ColumnSeeded,
}

/// Solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FscConfig {
    /// Fusion weight λ ≥ 0.
    pub lambda: f64,
    /// Subspace dimension upper bound r.
    pub rank: usize,
    pub max_iters: usize,
    /// First trial step of the backtracking line search.
    pub step0: f64,
    /// Backtracking shrink factor.
    pub armijo_beta: f64,
    /// Sufficient-decrease constant.
    pub armijo_c: f64,
    /// Stop when the relative objective decrease falls below this.
    pub tol_rel: f64,
    /// Re-orthonormalize every basis this often (iterations).
    pub reorth_period: usize,
    /// Gram ridge ρ in `U (UᵀU + ρI)⁻¹ Uᵀ`.
    pub ridge: f64,
    pub seed: u64,
    pub init: InitStrategy,
}

impl Default for FscConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            rank: 1,
            max_iters: 2000,
            step0: 1e-2,
            armijo_beta: 0.5,
            armijo_c: 1e-4,
            tol_rel: 1e-8,
            reorth_period: 10,
            ridge: 0.0,
            seed: 0,
            init: InitStrategy::RandomGaussian,
        }
    }
}

/// Default fusion weight scale `1 / (n d)`.
///
/// Larger noise calls for a smaller λ (roughly inversely proportional to the
/// noise level); that adjustment is left to the caller.
pub fn default_lambda(d: usize, n: usize) -> f64 {
    1.0 / (n.max(1) * d.max(1)) as f64
}

impl FscConfig {
    pub fn new(rank: usize, lambda: f64) -> Self {
        Self {
            rank,
            lambda,
            ..Self::default()
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    pub fn with_rank(&self, rank: usize) -> Self {
        Self {
            rank,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(FscError::InvalidParams(what.to_string()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and >= 0");
        }
        if self.rank == 0 {
            return bad("rank must be >= 1");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1");
        }
        if !(self.step0 > 0.0 && self.step0.is_finite()) {
            return bad("step0 must be > 0");
        }
        if !(self.armijo_beta > 0.0 && self.armijo_beta < 1.0) {
            return bad("armijo_beta must lie in (0, 1)");
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad("armijo_c must lie in (0, 1)");
        }
        if !(self.tol_rel > 0.0) {
            return bad("tol_rel must be > 0");
        }
        if self.reorth_period == 0 {
            return bad("reorth_period must be >= 1");
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return bad("ridge must be finite and >= 0");
        }
        Ok(())
    }
}

/// Record of one solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitTrace {
    /// Objective at the start and after every accepted step.
    pub objectives: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FitTrace {
    pub fn final_objective(&self) -> f64 {
        self.objectives.last().copied().unwrap_or(f64::NAN)
    }
}
