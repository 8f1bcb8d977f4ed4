//! Data containers: the masked data matrix, per-column basis sets and labels.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{FscError, Result};
use crate::geometry::{Basis, ObservationPattern};
use crate::scalar::Real;

/// A `d × n` data matrix with an observation mask. Columns are data points.
///
/// Unobserved entries are stored as zero regardless of what was supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedMatrix<T: Real> {
    values: DMatrix<T>,
    mask: DMatrix<bool>,
    patterns: Vec<ObservationPattern>,
}

impl<T: Real> MaskedMatrix<T> {
    pub fn new(mut values: DMatrix<T>, mask: DMatrix<bool>) -> Result<Self> {
        if values.shape() != mask.shape() {
            return Err(FscError::ShapeMismatch(format!(
                "values are {}x{} but mask is {}x{}",
                values.nrows(),
                values.ncols(),
                mask.nrows(),
                mask.ncols()
            )));
        }
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(FscError::ShapeMismatch("empty data matrix".into()));
        }
        let mut patterns = Vec::with_capacity(values.ncols());
        for j in 0..values.ncols() {
            let rows: Vec<usize> = (0..values.nrows()).filter(|&i| mask[(i, j)]).collect();
            let pattern = ObservationPattern::new(rows).map_err(|e| e.at_column(j))?;
            for i in 0..values.nrows() {
                if !mask[(i, j)] {
                    values[(i, j)] = T::zero();
                } else if !values[(i, j)].is_finite() {
                    return Err(FscError::InvalidParams(format!(
                        "observed entry ({}, {}) is not finite",
                        i + 1,
                        j + 1
                    )));
                }
            }
            patterns.push(pattern);
        }
        Ok(Self {
            values,
            mask,
            patterns,
        })
    }

    pub fn fully_observed(values: DMatrix<T>) -> Result<Self> {
        let mask = DMatrix::from_element(values.nrows(), values.ncols(), true);
        Self::new(values, mask)
    }

    /// Ambient dimension `d`.
    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    /// Number of data points `n`.
    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Values with unobserved entries zeroed.
    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    pub fn pattern(&self, j: usize) -> &ObservationPattern {
        &self.patterns[j]
    }

    pub fn patterns(&self) -> &[ObservationPattern] {
        &self.patterns
    }

    /// The column restricted to its observed rows, `x^ω`.
    pub fn observed_column(&self, j: usize) -> DVector<T> {
        self.patterns[j].select(&self.values.column(j).into_owned())
    }

    /// The column with unobserved entries set to zero.
    pub fn zero_filled_column(&self, j: usize) -> DVector<T> {
        self.values.column(j).into_owned()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.patterns.iter().all(|p| p.is_full(self.nrows()))
    }

    /// `|Ω|`, the total number of observed entries.
    pub fn observed_count(&self) -> usize {
        self.patterns.iter().map(|p| p.len()).sum()
    }

    /// Rejects any column observed on fewer than `r` rows, naming the first one.
    pub fn require_min_observed(&self, r: usize) -> Result<()> {
        for (j, p) in self.patterns.iter().enumerate() {
            if p.len() < r {
                return Err(FscError::InsufficientObservations {
                    column: Some(j),
                    observed: p.len(),
                    required: r,
                });
            }
        }
        Ok(())
    }

    /// A new matrix holding only the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let values = self.values.select_columns(cols.iter());
        let mask = self.mask.select_columns(cols.iter());
        let patterns = cols.iter().map(|&j| self.patterns[j].clone()).collect();
        Self {
            values,
            mask,
            patterns,
        }
    }
}

/// One basis per data column, all of shape `d × r`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSet<T: Real> {
    bases: Vec<Basis<T>>,
}

impl<T: Real> BasisSet<T> {
    pub fn new(bases: Vec<Basis<T>>) -> Result<Self> {
        let first = bases
            .first()
            .ok_or_else(|| FscError::ShapeMismatch("empty basis set".into()))?;
        let (d, r) = (first.ambient_dim(), first.rank());
        if let Some((i, b)) = bases
            .iter()
            .enumerate()
            .find(|(_, b)| b.ambient_dim() != d || b.rank() != r)
        {
            return Err(FscError::ShapeMismatch(format!(
                "basis {} is {}x{}, expected {}x{}",
                i + 1,
                b.ambient_dim(),
                b.rank(),
                d,
                r
            )));
        }
        Ok(Self { bases })
    }

    pub(crate) fn from_matrices_unchecked(mats: Vec<DMatrix<T>>) -> Self {
        Self {
            bases: mats.into_iter().map(Basis::from_matrix_unchecked).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.bases[0].ambient_dim()
    }

    pub fn rank(&self) -> usize {
        self.bases[0].rank()
    }

    pub fn bases(&self) -> &[Basis<T>] {
        &self.bases
    }

    pub fn get(&self, i: usize) -> &Basis<T> {
        &self.bases[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Basis<T>> {
        self.bases.iter()
    }

    pub fn matrices(&self) -> Vec<DMatrix<T>> {
        self.bases.iter().map(|b| b.matrix().clone()).collect()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            bases: idx.iter().map(|&i| self.bases[i].clone()).collect(),
        }
    }
}

/// Cluster ids `1..=K`, one per column.
///
/// Ids are canonicalized by order of first appearance, so `[7, 7, 3]` becomes
/// `[1, 1, 2]`. Two labelings that agree up to a permutation of ids are
/// therefore equal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Labels {
    ids: Vec<usize>,
    num_clusters: usize,
}

impl Labels {
    /// Canonicalizes arbitrary ids.
    pub fn from_ids<I: Into<usize> + Copy>(raw: &[I]) -> Self {
        let mut map = std::collections::HashMap::new();
        let ids = raw
            .iter()
            .map(|&v| {
                let next = map.len() + 1;
                *map.entry(v.into()).or_insert(next)
            })
            .collect();
        Self {
            ids,
            num_clusters: map.len(),
        }
    }

    /// Every column in its own cluster.
    pub fn singletons(n: usize) -> Self {
        Self {
            ids: (1..=n).collect(),
            num_clusters: n,
        }
    }

    pub fn single_cluster(n: usize) -> Self {
        Self {
            ids: vec![1; n],
            num_clusters: usize::from(n > 0),
        }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    /// Columns (0-based) carrying id `k` (1-based).
    pub fn members(&self, k: usize) -> Vec<usize> {
        self.ids
            .iter()
            .enumerate()
            .filter(|(_, &id)| id == k)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_clusters];
        for &id in &self.ids {
            sizes[id - 1] += 1;
        }
        sizes
    }
}
