//! Synthetic union-of-subspaces data and sampling masks.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::Labels;
use crate::error::{FscError, Result};
use crate::geometry::Basis;
use crate::rng::{stream_rng, Stream};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UosParams {
    pub d: usize,
    pub k: usize,
    pub r: usize,
    pub n_k: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl UosParams {
    /// `d = 100, K = 4, r = 5, n_k = 20, σ = 0`.
    pub fn defaults(seed: u64) -> Self {
        Self {
            d: 100,
            k: 4,
            r: 5,
            n_k: 20,
            sigma: 0.0,
            seed,
        }
    }

    pub fn n(&self) -> usize {
        self.k * self.n_k
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticInstance<T: Real> {
    /// `d × n` data, columns grouped by cluster.
    pub x: DMatrix<T>,
    pub true_labels: Labels,
    /// The generating bases `U*_k` (Gaussian, not orthonormalized).
    pub true_bases: Vec<Basis<T>>,
    pub params: UosParams,
}

fn gaussian<T: Real, R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> DMatrix<T> {
    let mut m = DMatrix::<T>::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            let v: f64 = StandardNormal.sample(rng);
            m[(r, c)] = T::lit(scale * v);
        }
    }
    m
}

/// `X = [U*_1 Θ*_1 … U*_K Θ*_K] + N` with i.i.d. `N(0, 1)` entries in every
/// `U*_k` (`d × r`) and `Θ*_k` (`r × n_k`) and i.i.d. `N(0, σ²)` noise.
pub fn gen_uos<T: Real>(params: UosParams) -> Result<SyntheticInstance<T>> {
    let UosParams {
        d,
        k,
        r,
        n_k,
        sigma,
        seed,
    } = params;
    if r == 0 || d < r || k == 0 || n_k == 0 || !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(FscError::InvalidParams(format!(
            "need d >= r >= 1, K >= 1, n_k >= 1, sigma >= 0 (got d={d}, K={k}, r={r}, n_k={n_k}, sigma={sigma})"
        )));
    }
    let n = k * n_k;
    let mut basis_rng = stream_rng(seed, Stream::TrueBases);
    let mut coef_rng = stream_rng(seed, Stream::Coefficients);
    let mut noise_rng = stream_rng(seed, Stream::Noise);

    let mut x = DMatrix::<T>::zeros(d, n);
    let mut true_bases = Vec::with_capacity(k);
    let mut ids = Vec::with_capacity(n);
    for cluster in 0..k {
        let u: DMatrix<T> = gaussian(&mut basis_rng, d, r, 1.0);
        let theta: DMatrix<T> = gaussian(&mut coef_rng, r, n_k, 1.0);
        x.columns_mut(cluster * n_k, n_k).copy_from(&(&u * theta));
        true_bases.push(Basis::from_matrix_unchecked(u));
        ids.extend(std::iter::repeat_n(cluster + 1, n_k));
    }
    if sigma > 0.0 {
        x += gaussian::<T, _>(&mut noise_rng, d, n, sigma);
    }
    Ok(SyntheticInstance {
        x,
        true_labels: Labels::from_ids(&ids),
        true_bases,
        params,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskSample {
    pub mask: DMatrix<bool>,
    /// Columns redrawn because they fell below the per-column floor.
    pub resampled_columns: Vec<usize>,
}

impl MaskSample {
    pub fn observed_fraction(&self) -> f64 {
        let total = self.mask.len().max(1);
        self.mask.iter().filter(|&&b| b).count() as f64 / total as f64
    }
}

/// Independent Bernoulli(p) entries. A column with no observed entry is
/// redrawn until it has at least one.
pub fn gen_mask(d: usize, n: usize, p: f64, seed: u64) -> Result<MaskSample> {
    gen_mask_with_floor(d, n, p, 1, seed)
}

/// Like [`gen_mask`], but redraws each column until it has at least
/// `min_observed` entries.
pub fn gen_mask_with_floor(
    d: usize,
    n: usize,
    p: f64,
    min_observed: usize,
    seed: u64,
) -> Result<MaskSample> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(FscError::InvalidParams(format!(
            "p must lie in (0, 1], got {p}"
        )));
    }
    if d == 0 || n == 0 || min_observed > d {
        return Err(FscError::InvalidParams(format!(
            "need d, n >= 1 and min_observed <= d (got d={d}, n={n}, min_observed={min_observed})"
        )));
    }
    let mut rng = stream_rng(seed, Stream::Mask);
    let mut mask = DMatrix::from_element(d, n, false);
    let mut resampled = Vec::new();
    for j in 0..n {
        let mut first = true;
        loop {
            let mut count = 0;
            for i in 0..d {
                let hit = rng.random_bool(p);
                mask[(i, j)] = hit;
                count += usize::from(hit);
            }
            if count >= min_observed {
                break;
            }
            if first {
                resampled.push(j);
                first = false;
            }
        }
    }
    Ok(MaskSample {
        mask,
        resampled_columns: resampled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numerical_rank(x: &DMatrix<f64>) -> usize {
        let sv = x.singular_values();
        let tol = sv.max() * 1e-10 * x.nrows().max(x.ncols()) as f64;
        sv.iter().filter(|&&s| s > tol).count()
    }

    #[test]
    fn single_block_rank() {
        let inst = gen_uos::<f64>(UosParams {
            d: 12,
            k: 1,
            r: 3,
            n_k: 8,
            sigma: 0.0,
            seed: 1,
        })
        .unwrap();
        assert_eq!(numerical_rank(&inst.x), 3);
        let small = gen_uos::<f64>(UosParams {
            d: 12,
            k: 1,
            r: 3,
            n_k: 2,
            sigma: 0.0,
            seed: 1,
        })
        .unwrap();
        assert_eq!(numerical_rank(&small.x), 2);
    }

    #[test]
    fn default_instance_rank_is_k_times_r() {
        let inst = gen_uos::<f64>(UosParams::defaults(3)).unwrap();
        assert_eq!(inst.x.shape(), (100, 80));
        assert_eq!(numerical_rank(&inst.x), 20);
    }

    #[test]
    fn twenty_subspaces_fill_the_space() {
        let inst = gen_uos::<f64>(UosParams {
            k: 20,
            ..UosParams::defaults(4)
        })
        .unwrap();
        assert_eq!(numerical_rank(&inst.x), 100);
    }

    #[test]
    fn noiseless_columns_lie_in_their_subspace() {
        let inst = gen_uos::<f64>(UosParams {
            d: 15,
            k: 3,
            r: 2,
            n_k: 5,
            sigma: 0.0,
            seed: 5,
        })
        .unwrap();
        for (j, &k) in inst.true_labels.ids().iter().enumerate() {
            let u = inst.true_bases[k - 1].matrix();
            let p = crate::geometry::projector(&inst.true_bases[k - 1], 0.0).unwrap();
            let x = inst.x.column(j).into_owned();
            let res = (&x - p.matrix() * &x).norm();
            assert!(res <= 1e-10 * x.norm(), "column {j} residual {res}");
            assert_eq!(u.ncols(), 2);
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let p = UosParams {
            sigma: 0.1,
            ..UosParams::defaults(9)
        };
        let a = gen_uos::<f64>(p).unwrap();
        let b = gen_uos::<f64>(p).unwrap();
        assert_eq!(a.x, b.x);
        let m1 = gen_mask(30, 40, 0.3, 2).unwrap();
        let m2 = gen_mask(30, 40, 0.3, 2).unwrap();
        assert_eq!(m1, m2);
    }

    #[test]
    fn invalid_params() {
        assert!(gen_uos::<f64>(UosParams {
            d: 2,
            k: 1,
            r: 3,
            n_k: 1,
            sigma: 0.0,
            seed: 0
        })
        .is_err());
        assert!(gen_mask(3, 3, 0.0, 0).is_err());
        assert!(gen_mask(3, 3, 1.5, 0).is_err());
    }

    #[test]
    fn mask_examples() {
        let full = gen_mask(7, 9, 1.0, 0).unwrap();
        assert!(full.mask.iter().all(|&b| b));
        let half = gen_mask(100, 100, 0.5, 11).unwrap();
        assert!((half.observed_fraction() - 0.5).abs() <= 0.02);
        let other = gen_mask(100, 100, 0.5, 12).unwrap();
        assert_ne!(half.mask, other.mask);
    }

    #[test]
    fn mask_floor_resamples() {
        let m = gen_mask_with_floor(20, 200, 0.1, 5, 3).unwrap();
        for j in 0..200 {
            assert!(m.mask.column(j).iter().filter(|&&b| b).count() >= 5);
        }
        assert!(!m.resampled_columns.is_empty());
        let tiny = gen_mask(5, 300, 0.05, 1).unwrap();
        for j in 0..300 {
            assert!(tiny.mask.column(j).iter().any(|&b| b));
        }
    }
}
