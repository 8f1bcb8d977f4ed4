//! Independent reference implementations used as test oracles. Nothing here
//! calls the library's numerics: projectors come from an SVD of the basis
//! rather than a Cholesky solve, and the objective is summed pair by pair.

#![allow(dead_code)]

use fsc::{Basis, BasisSet, MaskedMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Bernoulli(p) mask with at least `min` observed entries per column.
pub fn mask(rng: &mut ChaCha8Rng, d: usize, n: usize, p: f64, min: usize) -> DMatrix<bool> {
    let mut m = DMatrix::from_element(d, n, false);
    for j in 0..n {
        loop {
            for i in 0..d {
                m[(i, j)] = rng.random::<f64>() < p;
            }
            if (0..d).filter(|&i| m[(i, j)]).count() >= min {
                break;
            }
        }
    }
    m
}

pub fn random_bases(rng: &mut ChaCha8Rng, d: usize, n: usize, r: usize) -> BasisSet<f64> {
    BasisSet::new(
        (0..n)
            .map(|_| Basis::new(gaussian(rng, d, r)).unwrap())
            .collect(),
    )
    .unwrap()
}

/// Orthogonal projector onto the column span of `u` via its SVD.
pub fn svd_projector(u: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = u.clone().svd(true, false);
    let left = svd.u.unwrap();
    let smax = svd.singular_values.max();
    let mut p = DMatrix::zeros(u.nrows(), u.nrows());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > 1e-12 * smax {
            let c = left.column(k);
            p += c * c.transpose();
        }
    }
    p
}

fn observed_rows(x: &MaskedMatrix<f64>, j: usize) -> Vec<usize> {
    (0..x.nrows()).filter(|&i| x.mask()[(i, j)]).collect()
}

/// Residual on observed rows plus (λ/2) Σ_i Σ_j ‖P_i − P_j‖²_F, entry by entry.
pub fn objective(x: &MaskedMatrix<f64>, u: &[DMatrix<f64>], lambda: f64) -> f64 {
    let mut residual = 0.0;
    for (j, uj) in u.iter().enumerate() {
        let rows = observed_rows(x, j);
        let uw = uj.select_rows(rows.iter());
        let xw = DVector::from_iterator(rows.len(), rows.iter().map(|&i| x.values()[(i, j)]));
        let pw = svd_projector(&uw);
        let e = &xw - &pw * &xw;
        for v in e.iter() {
            residual += v * v;
        }
    }
    let projectors: Vec<_> = u.iter().map(svd_projector).collect();
    let mut fusion = 0.0;
    for a in &projectors {
        for b in &projectors {
            for (p, q) in a.iter().zip(b.iter()) {
                fusion += (p - q) * (p - q);
            }
        }
    }
    residual + 0.5 * lambda * fusion
}

/// Central differences of [`objective`] with respect to every entry of `U_i`.
pub fn fd_gradient(
    x: &MaskedMatrix<f64>,
    u: &[DMatrix<f64>],
    lambda: f64,
    i: usize,
    h: f64,
) -> DMatrix<f64> {
    let (d, r) = u[i].shape();
    let mut g = DMatrix::zeros(d, r);
    let mut work = u.to_vec();
    for a in 0..d {
        for b in 0..r {
            let orig = u[i][(a, b)];
            work[i][(a, b)] = orig + h;
            let fp = objective(x, &work, lambda);
            work[i][(a, b)] = orig - h;
            let fm = objective(x, &work, lambda);
            work[i][(a, b)] = orig;
            g[(a, b)] = (fp - fm) / (2.0 * h);
        }
    }
    g
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Every member of a cluster gets the cluster's top-`r` principal directions,
/// from the eigenvectors of `X_k X_kᵀ`.
pub fn pca_bases(x: &DMatrix<f64>, ids: &[usize], r: usize) -> BasisSet<f64> {
    let k = ids.iter().copied().max().unwrap();
    let mut per_cluster = Vec::new();
    for c in 1..=k {
        let cols: Vec<usize> = (0..ids.len()).filter(|&j| ids[j] == c).collect();
        let block = x.select_columns(cols.iter());
        let eig = (&block * block.transpose()).symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let u = eig.eigenvectors;
        let mut top = DMatrix::zeros(x.nrows(), r);
        for (slot, &o) in order.iter().take(r).enumerate() {
            top.set_column(slot, &u.column(o));
        }
        per_cluster.push(top);
    }
    BasisSet::new(
        ids.iter()
            .map(|&c| Basis::new(per_cluster[c - 1].clone()).unwrap())
            .collect(),
    )
    .unwrap()
}

/// Minimum misclassified fraction over all relabelings of `pred`, by enumeration.
pub fn brute_force_error(pred: &[usize], truth: &[usize]) -> f64 {
    let kp = pred.iter().copied().max().unwrap();
    let kt = truth.iter().copied().max().unwrap();
    let k = kp.max(kt);
    let mut perm: Vec<usize> = (1..=k).collect();
    let mut best = usize::MAX;
    permute(&mut perm, 0, &mut |p| {
        let wrong = pred
            .iter()
            .zip(truth)
            .filter(|(a, b)| p[**a - 1] != **b)
            .count();
        best = best.min(wrong);
    });
    best as f64 / pred.len() as f64
}

fn permute(v: &mut Vec<usize>, start: usize, f: &mut impl FnMut(&[usize])) {
    if start == v.len() {
        f(v);
        return;
    }
    for i in start..v.len() {
        v.swap(start, i);
        permute(v, start + 1, f);
        v.swap(start, i);
    }
}
