mod common;

use common::{brute_force_error, gaussian, rng, svd_projector};
use fsc::completion::{cluster_basis, complete_column};
use fsc::metrics::clustering_error;
use fsc::spectral::{cluster, similarity};
use fsc::{
    orthonormalize, projector, projector_distance, restricted_projector, Basis, BasisSet, Labels,
    ObservationPattern,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn basis(seed: u64, d: usize, r: usize) -> Basis<f64> {
    Basis::new(gaussian(&mut rng(seed), d, r)).unwrap()
}

/// Well-conditioned r×r matrix.
fn mixing(seed: u64, r: usize) -> DMatrix<f64> {
    gaussian(&mut rng(seed), r, r) + DMatrix::identity(r, r) * (2.0 * r as f64)
}

fn shape() -> impl Strategy<Value = (usize, usize)> {
    (1usize..5).prop_flat_map(|r| (Just(r), r..(r + 8)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn projector_identities(seed in any::<u64>(), (r, d) in shape()) {
        let u = basis(seed, d, r);
        let p = projector(&u, 0.0).unwrap();
        let m = p.matrix();
        prop_assert!((m - m.transpose()).norm() <= 1e-10 * d as f64);
        prop_assert!((m * m - m).norm() <= 1e-8 * d as f64);
        prop_assert!((p.trace() - r as f64).abs() <= 1e-6);
        prop_assert!((m - svd_projector(u.matrix())).norm() <= 1e-8);

        let q = orthonormalize(&u).unwrap();
        let gram = q.matrix().transpose() * q.matrix();
        prop_assert!((gram - DMatrix::identity(r, r)).norm() <= 1e-12);
        prop_assert!((projector(&q, 0.0).unwrap().trace() - r as f64).abs() <= 1e-8);
    }

    #[test]
    fn projector_ignores_reparameterization(seed in any::<u64>(), (r, d) in shape()) {
        let u = basis(seed, d, r);
        let ua = Basis::new(u.matrix() * mixing(seed ^ 1, r)).unwrap();
        let diff = projector(&u, 0.0).unwrap().matrix() - projector(&ua, 0.0).unwrap().matrix();
        prop_assert!(diff.norm() <= 1e-8);
    }

    #[test]
    fn full_restriction_is_the_projector(seed in any::<u64>(), (r, d) in shape()) {
        let u = basis(seed, d, r);
        let full = restricted_projector(&u, &ObservationPattern::full(d), 0.0).unwrap();
        let p = projector(&u, 0.0).unwrap();
        prop_assert!((full.matrix() - p.matrix()).amax() <= 1e-12);
    }

    #[test]
    fn distance_identities(seed in any::<u64>(), (r, d) in shape()) {
        let a = basis(seed, d, r);
        let b = basis(seed.wrapping_add(1), d, r);
        let dab = projector_distance(&a, &b).unwrap();
        let explicit = (svd_projector(a.matrix()) - svd_projector(b.matrix())).norm_squared();
        let (qa, qb) = (orthonormalize(&a).unwrap(), orthonormalize(&b).unwrap());
        let cross = (qa.matrix().transpose() * qb.matrix()).norm_squared();
        prop_assert!((dab - explicit).abs() <= 1e-10 * (1.0 + explicit));
        prop_assert!((dab - (2.0 * r as f64 - 2.0 * cross)).abs() <= 1e-10 * (1.0 + explicit));
        prop_assert!((dab - projector_distance(&b, &a).unwrap()).abs() <= 1e-12);
        prop_assert!(projector_distance(&a, &a).unwrap().abs() <= 1e-10);
    }

    // At r = d all spans coincide and the square root only magnifies rounding.
    #[test]
    fn distance_root_is_a_metric(seed in any::<u64>(), r in 1usize..5, gap in 1usize..8) {
        let d = r + gap;
        let a = basis(seed, d, r);
        let b = basis(seed.wrapping_add(1), d, r);
        let c = basis(seed.wrapping_add(2), d, r);
        let dab = projector_distance(&a, &b).unwrap().sqrt();
        let dac = projector_distance(&a, &c).unwrap().sqrt();
        let dbc = projector_distance(&b, &c).unwrap().sqrt();
        prop_assert!(dab <= dac + dbc + 1e-8);
    }

    #[test]
    fn clustering_error_matches_enumeration(
        k in 2usize..7,
        pairs in proptest::collection::vec((0usize..6, 0usize..6), 1..40),
    ) {
        let pred: Vec<usize> = pairs.iter().map(|(a, _)| a % k + 1).collect();
        let truth: Vec<usize> = pairs.iter().map(|(_, b)| b % k + 1).collect();
        let ours = clustering_error(&Labels::from_ids(&pred), &Labels::from_ids(&truth)).unwrap();
        prop_assert_eq!(ours, brute_force_error(&pred, &truth));
        let swapped = clustering_error(&Labels::from_ids(&truth), &Labels::from_ids(&pred)).unwrap();
        prop_assert_eq!(ours, swapped);
    }

    #[test]
    fn complete_column_is_exact_in_span(seed in any::<u64>(), (r, d) in shape(), extra in 0usize..4) {
        let u = basis(seed, d + extra, r);
        let x = u.matrix() * gaussian(&mut rng(seed ^ 7), r, 1).column(0);
        let dd = d + extra;
        // Observe a random subset of r + 1 + extra rows, capped at d.
        let mut rows: Vec<usize> = (0..dd).collect();
        rows.shuffle(&mut rng(seed ^ 9));
        rows.truncate((r + 1 + extra).min(dd));
        rows.sort_unstable();
        let pattern = ObservationPattern::new(rows.clone()).unwrap();
        let xw = DVector::from_iterator(rows.len(), rows.iter().map(|&i| x[i]));
        // Skip badly conditioned restrictions.
        let uw = u.restrict(&pattern);
        let sv = uw.singular_values();
        prop_assume!(sv.min() > 1e-6 * sv.max());
        let q = orthonormalize(&u).unwrap();
        let xhat = complete_column(&xw, &pattern, &q).unwrap();
        prop_assert!((&xhat - &x).norm() <= 1e-8 * x.norm());
    }

    #[test]
    fn cluster_basis_ignores_member_order_and_scaling(seed in any::<u64>(), m in 2usize..6) {
        let (d, r) = (9, 2);
        let members: Vec<Basis<f64>> = (0..m).map(|i| basis(seed.wrapping_add(i as u64), d, r)).collect();
        let labels = Labels::from_ids(&vec![1usize; m]);
        let base = cluster_basis(&BasisSet::new(members.clone()).unwrap(), &labels, 1).unwrap();

        let mut shuffled: Vec<Basis<f64>> = members
            .iter()
            .enumerate()
            .map(|(i, b)| Basis::new(b.matrix() * mixing(seed ^ (i as u64 + 50), r)).unwrap())
            .collect();
        shuffled.reverse();
        let other = cluster_basis(&BasisSet::new(shuffled).unwrap(), &labels, 1).unwrap();
        let diff = projector(&base, 0.0).unwrap().matrix() - projector(&other, 0.0).unwrap().matrix();
        prop_assert!(diff.norm() <= 1e-8);
    }
}

fn two_spans(seed: u64, per: usize) -> (BasisSet<f64>, Vec<usize>) {
    // Members of each group are small perturbations of one of two coordinate planes.
    let d = 8;
    let mut g = rng(seed);
    let mut bases = Vec::new();
    let mut ids = Vec::new();
    for i in 0..2 * per {
        let group = i % 2;
        let mut u = DMatrix::zeros(d, 2);
        u[(2 * group, 0)] = 1.0;
        u[(2 * group + 1, 1)] = 1.0;
        u += gaussian(&mut g, d, 2) * 1e-2;
        bases.push(Basis::new(u).unwrap());
        ids.push(group + 1);
    }
    (BasisSet::new(bases).unwrap(), ids)
}

#[test]
fn far_apart_spans_separate() {
    let (bases, ids) = two_spans(1, 6);
    let labels = cluster(&bases, Some(2), None, 0).unwrap();
    assert_eq!(
        clustering_error(&labels, &Labels::from_ids(&ids)).unwrap(),
        0.0
    );
    let same = BasisSet::new(vec![bases.get(0).clone(); 5]).unwrap();
    assert_eq!(cluster(&same, None, None, 0).unwrap().num_clusters(), 1);
}

#[test]
fn labels_follow_permutation_and_reparameterization() {
    let (bases, _) = two_spans(2, 5);
    let labels = cluster(&bases, Some(2), None, 3).unwrap();
    let n = bases.len();
    let perm: Vec<usize> = (0..n).rev().collect();
    let permuted = bases.select(&perm);
    let s = similarity(&bases, None).unwrap();
    let sp = similarity(&permuted, None).unwrap();
    for i in 0..n {
        for j in 0..n {
            assert!(
                (s.matrix()[(perm[i], perm[j])] - sp.matrix()[(i, j)]).abs()
                    <= 1e-9 * s.matrix().amax()
            );
        }
    }
    let back: Vec<usize> = {
        let lp = cluster(&permuted, Some(2), None, 3).unwrap();
        let mut v = vec![0; n];
        for (i, &p) in perm.iter().enumerate() {
            v[p] = lp.ids()[i];
        }
        v
    };
    assert_eq!(
        clustering_error(&labels, &Labels::from_ids(&back)).unwrap(),
        0.0
    );

    let scaled: Vec<Basis<f64>> = bases
        .iter()
        .enumerate()
        .map(|(i, b)| Basis::new(b.matrix() * mixing(i as u64, 2)).unwrap())
        .collect();
    let ls = cluster(&BasisSet::new(scaled).unwrap(), Some(2), None, 3).unwrap();
    assert_eq!(clustering_error(&labels, &ls).unwrap(), 0.0);
}
