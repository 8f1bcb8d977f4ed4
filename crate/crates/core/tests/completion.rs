mod common;

use common::{gaussian, rng};
use fsc::completion::{cluster_model, coefficients, complete_matrix, restore_observed};
use fsc::synth::{gen_mask_with_floor, gen_uos, SyntheticInstance, UosParams};
use fsc::{Basis, BasisSet, FscError, Labels, MaskedMatrix, ObservationPattern};
use nalgebra::{DMatrix, DVector};

fn instance(seed: u64) -> SyntheticInstance<f64> {
    gen_uos(UosParams {
        d: 30,
        k: 3,
        r: 2,
        n_k: 20,
        sigma: 0.0,
        seed,
    })
    .unwrap()
}

/// Each column gets its true basis times its own well-conditioned mixing matrix.
fn oracle_bases(inst: &SyntheticInstance<f64>, seed: u64) -> BasisSet<f64> {
    let mut g = rng(seed);
    let r = inst.params.r;
    let bases = inst
        .true_labels
        .ids()
        .iter()
        .map(|&k| {
            let a = gaussian(&mut g, r, r) + DMatrix::identity(r, r) * (2.0 * r as f64);
            Basis::new(inst.true_bases[k - 1].matrix() * a).unwrap()
        })
        .collect();
    BasisSet::new(bases).unwrap()
}

fn unobserved_relative_error(
    completed: &DMatrix<f64>,
    truth: &DMatrix<f64>,
    mask: &DMatrix<bool>,
) -> f64 {
    let (mut err, mut norm) = (0.0, 0.0);
    for (i, &seen) in mask.iter().enumerate() {
        if !seen {
            err += (completed[i] - truth[i]).powi(2);
            norm += truth[i].powi(2);
        }
    }
    (err / norm).sqrt()
}

#[test]
fn full_noiseless_reconstruction() {
    for seed in 0..5 {
        let inst = instance(seed);
        let x = MaskedMatrix::fully_observed(inst.x.clone()).unwrap();
        let (completed, model) =
            complete_matrix(&x, &oracle_bases(&inst, seed), &inst.true_labels).unwrap();
        let rel = (&completed - &inst.x).norm() / inst.x.norm();
        assert!(rel <= 1e-8, "seed {seed}: {rel:e}");
        for b in &model.cluster_bases {
            let q = b.matrix();
            assert!((q.transpose() * q - DMatrix::identity(2, 2)).norm() <= 1e-10);
        }
    }
}

#[test]
fn half_observed_with_true_spans() {
    let mut exact = 0;
    for seed in 0..10 {
        let inst = instance(seed);
        let mask = gen_mask_with_floor(30, 60, 0.5, 2, seed).unwrap().mask;
        let x = MaskedMatrix::new(inst.x.clone(), mask.clone()).unwrap();
        let (completed, _) =
            complete_matrix(&x, &oracle_bases(&inst, seed), &inst.true_labels).unwrap();
        if unobserved_relative_error(&completed, &inst.x, &mask) <= 1e-6 {
            exact += 1;
        }
    }
    assert!(exact >= 9, "{exact}/10 seeds");
}

#[test]
fn single_cluster_is_rank_r_completion() {
    let mut g = rng(21);
    let u = gaussian(&mut g, 12, 3);
    let values = &u * gaussian(&mut g, 3, 15);
    let mask = gen_mask_with_floor(12, 15, 0.6, 3, 4).unwrap().mask;
    let x = MaskedMatrix::new(values.clone(), mask.clone()).unwrap();
    let bases = BasisSet::new(vec![Basis::new(u).unwrap(); 15]).unwrap();
    let (completed, model) = complete_matrix(&x, &bases, &Labels::single_cluster(15)).unwrap();
    assert_eq!(model.num_clusters(), 1);
    let svd = completed.clone().singular_values();
    assert!(svd[3] <= 1e-9 * svd[0], "rank above 3: {svd}");
    assert!(unobserved_relative_error(&completed, &values, &mask) <= 1e-8);
}

#[test]
fn interpolation_keeps_observations_and_smoothing_does_not() {
    let inst = instance(3);
    let (d, n) = (30, 60);
    // Exactly r observed rows per column: completion interpolates them.
    let mut g = rng(5);
    let mut mask = DMatrix::from_element(d, n, false);
    for j in 0..n {
        let mut rows: Vec<usize> = (0..d).collect();
        rand::seq::SliceRandom::shuffle(rows.as_mut_slice(), &mut g);
        for &i in &rows[..2] {
            mask[(i, j)] = true;
        }
    }
    let x = MaskedMatrix::new(inst.x.clone(), mask.clone()).unwrap();
    let (completed, _) = complete_matrix(&x, &oracle_bases(&inst, 3), &inst.true_labels).unwrap();
    for j in 0..n {
        for &i in x.pattern(j).rows() {
            assert!((completed[(i, j)] - inst.x[(i, j)]).abs() <= 1e-9 * inst.x.column(j).norm());
        }
    }

    // Noisy data with a wrong span: observed entries are smoothed until restored.
    let noisy = MaskedMatrix::fully_observed(&inst.x + gaussian(&mut g, d, n) * 0.1).unwrap();
    let other = BasisSet::new(vec![Basis::new(gaussian(&mut g, d, 2)).unwrap(); n]).unwrap();
    let (mut smooth, _) = complete_matrix(&noisy, &other, &Labels::single_cluster(n)).unwrap();
    assert!((&smooth - noisy.values()).norm() > 1e-3);
    restore_observed(&mut smooth, &noisy);
    assert_eq!(&smooth, noisy.values());
}

#[test]
fn noisy_column_matches_dense_least_squares() {
    let mut g = rng(31);
    for _ in 0..10 {
        let u = Basis::new(gaussian(&mut g, 15, 3)).unwrap();
        let x = u.matrix() * gaussian(&mut g, 3, 1).column(0)
            + gaussian(&mut g, 15, 1).column(0) * 0.01;
        let rows: Vec<usize> = (0..15).filter(|i| i % 3 != 1).collect();
        let pattern = ObservationPattern::new(rows.clone()).unwrap();
        let xw = DVector::from_iterator(rows.len(), rows.iter().map(|&i| x[i]));
        let uw = u.matrix().select_rows(rows.iter());
        let theta = coefficients(&xw, &pattern, &u).unwrap();

        // Pseudo-inverse from the SVD of the (full-rank) restricted basis.
        let svd = uw.clone().svd(true, true);
        let oracle = svd.solve(&xw, 1e-12).unwrap();
        let ours = (&xw - &uw * &theta).norm();
        let best = (&xw - &uw * &oracle).norm();
        assert!((ours - best).abs() <= 1e-10, "{ours:e} vs {best:e}");
        assert!((&theta - &oracle).norm() <= 1e-8 * oracle.norm());
    }
}

#[test]
fn column_failures_are_aggregated() {
    let mut g = rng(41);
    let values = gaussian(&mut g, 6, 5);
    let mut mask = DMatrix::from_element(6, 5, true);
    for (j, keep) in [(1, 1), (3, 1)] {
        for i in keep..6 {
            mask[(i, j)] = false;
        }
    }
    let x = MaskedMatrix::new(values, mask).unwrap();
    let bases = BasisSet::new(vec![Basis::new(gaussian(&mut g, 6, 2)).unwrap(); 5]).unwrap();
    match cluster_model(&x, &bases, &Labels::single_cluster(5)) {
        Err(FscError::ColumnFailures(list)) => {
            let columns: Vec<usize> = list.iter().map(|(c, _)| *c).collect();
            assert_eq!(columns, vec![1, 3]);
            for (_, e) in &list {
                assert!(matches!(
                    e,
                    FscError::InsufficientObservations {
                        observed: 1,
                        required: 2,
                        ..
                    }
                ));
            }
        }
        other => panic!("expected ColumnFailures, got {other:?}"),
    }
}
