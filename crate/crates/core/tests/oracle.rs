//! Cleartext references checked against independent derivations.

use hegwas::oracle::{
    compare, inverse_checked, log_likelihood, modified_statistics, oracle_gwas_modified, oracle_gwas_original,
    oracle_logreg_approx, oracle_logreg_exact, oracle_logreg_exact_damped, oracle_pipeline, projection, sigmoid,
    spearman, synth_dataset, CleartextDataset, WeightInverse,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn fitted(data: &CleartextDataset) -> (DVector<f64>, DVector<f64>) {
    let fit = oracle_logreg_exact(&data.x, &data.y, 30).unwrap();
    assert!(!fit.diverged);
    let p = (&data.x * &fit.beta).map(sigmoid);
    (fit.beta, p)
}

/// Coefficient of `s` after one full Newton step from `(beta, 0)` on the
/// model with `s` appended to the covariates.
fn one_step_effect(data: &CleartextDataset, beta: &DVector<f64>, j: usize) -> f64 {
    let n = data.n();
    let c = data.x.ncols();
    let mut xa = DMatrix::zeros(n, c + 1);
    xa.columns_mut(0, c).copy_from(&data.x);
    xa.column_mut(c).copy_from(&data.s.column(j));
    let mut b = DVector::zeros(c + 1);
    b.rows_mut(0, c).copy_from(beta);
    let p = (&xa * &b).map(sigmoid);
    let g = xa.transpose() * (&data.y - &p);
    let mut xw = xa.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= p[i] * (1.0 - p[i]);
    }
    let h = xa.transpose() * xw;
    (h.lu().solve(&g).unwrap())[c]
}

fn cofactor_inverse_3(a: &DMatrix<f64>) -> DMatrix<f64> {
    let m = |i: usize, j: usize| a[(i, j)];
    let det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
        + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
    let minor = |r: usize, c: usize| {
        let rs: Vec<usize> = (0..3).filter(|&x| x != r).collect();
        let cs: Vec<usize> = (0..3).filter(|&x| x != c).collect();
        m(rs[0], cs[0]) * m(rs[1], cs[1]) - m(rs[0], cs[1]) * m(rs[1], cs[0])
    };
    DMatrix::from_fn(3, 3, |i, j| {
        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        sign * minor(j, i) / det
    })
}

#[test]
fn uniform_weights_reduce_to_unweighted_projection() {
    let data = synth_dataset(60, 3, 12, 1, 0.2).dataset;
    let (beta, _) = fitted(&data);
    let p = DVector::from_element(60, 0.5);
    let orig = oracle_gwas_original(&data, &beta, &p).unwrap();
    let modi = oracle_gwas_modified(&data, &beta, &p, WeightInverse::Exact).unwrap();
    for j in 0..12 {
        assert!((orig.effects[j] - modi.effects[j]).abs() < 1e-10);
        assert!((orig.std_err[j] - modi.std_err[j]).abs() < 1e-10);
    }
}

#[test]
fn covariate_copy_has_no_effect_left() {
    let mut data = synth_dataset(40, 2, 3, 2, 0.0).dataset;
    let cov = data.x.column(1).into_owned();
    data.s.column_mut(1).copy_from(&cov);
    let (beta, p) = fitted(&data);
    let st = oracle_gwas_original(&data, &beta, &p).unwrap();
    assert!(st.numerator[1].abs() < 1e-9);
    assert!(st.denominator[1] < 1e-9);
    assert_eq!(st.flagged(), vec![1]);
    let m = oracle_gwas_modified(&data, &beta, &p, WeightInverse::Exact).unwrap();
    assert_eq!(m.flagged(), vec![1]);
}

#[test]
fn semi_parallel_ranks_match_one_step_refits() {
    let data = synth_dataset(300, 3, 40, 3, 0.2).dataset;
    let (beta, p) = fitted(&data);
    let st = oracle_gwas_original(&data, &beta, &p).unwrap();
    let refit: Vec<f64> = (0..40).map(|j| one_step_effect(&data, &beta, j)).collect();
    assert!(spearman(&st.effects, &refit) > 0.99);
}

#[test]
fn modified_preserves_ordering_of_original() {
    let data = synth_dataset(300, 3, 60, 4, 0.1).dataset;
    let fit = oracle_logreg_approx(&data.x, &data.y, 3).unwrap();
    let orig = oracle_gwas_original(&data, fit.beta(), &fit.p_prev).unwrap();
    let modi = oracle_pipeline(&data, 3, 3, 3.0).unwrap();
    assert!(spearman(&orig.effects, &modi.effects) > 0.9);
}

#[test]
fn identity_projection_is_ordinary_least_squares() {
    let data = synth_dataset(50, 2, 8, 5, 0.0).dataset;
    let z = DVector::from_fn(50, |i, _| (i as f64 * 0.37).sin());
    let st = modified_statistics(&DMatrix::identity(50, 50), &DVector::from_element(50, 1.0), &z, &data.s);
    for j in 0..8 {
        let col = data.s.column(j).into_owned();
        let ols = col.clone().svd(true, true).solve(&z, 1e-14).unwrap()[0];
        assert!((st.effects[j] - ols).abs() < 1e-10);
        assert!((st.denominator[j] - col.norm_squared()).abs() < 1e-10);
    }
}

#[test]
fn projector_is_idempotent_and_annihilates_covariates() {
    let data = synth_dataset(30, 3, 1, 6, 0.0).dataset;
    let m = projection(&data.x).unwrap();
    assert!((&m * &m - &m).amax() < 1e-12);
    assert!((&m * &data.x).amax() < 1e-12);
}

#[test]
fn null_effects_center_at_zero() {
    let mut total = 0.0;
    let mut count = 0.0;
    for seed in 0..20 {
        let data = synth_dataset(200, 2, 30, 1000 + seed, 0.0).dataset;
        for b in oracle_pipeline(&data, 3, 3, 3.0).unwrap().effects {
            if b.is_finite() {
                total += b;
                count += 1.0;
            }
        }
    }
    assert!((total / count).abs() < 0.05, "mean {}", total / count);
}

#[test]
fn balanced_data_is_a_fixed_point() {
    let x = DMatrix::from_row_slice(4, 2, &[1.0, -1.0, 1.0, -1.0, 1.0, 1.0, 1.0, 1.0]);
    let y = DVector::from_vec(vec![0.0, 1.0, 0.0, 1.0]);
    let fit = oracle_logreg_exact(&x, &y, 5).unwrap();
    assert!(fit.beta.amax() < 1e-12);
    assert!(oracle_logreg_approx(&x, &y, 3).unwrap().beta().amax() < 1e-12);
}

#[test]
fn separable_data_diverges() {
    let x = DMatrix::from_row_slice(4, 2, &[1.0, -2.0, 1.0, -1.0, 1.0, 1.0, 1.0, 2.0]);
    let y = DVector::from_vec(vec![0.0, 0.0, 1.0, 1.0]);
    assert!(oracle_logreg_exact(&x, &y, 50).unwrap().diverged);
}

#[test]
fn damped_newton_reaches_same_optimum() {
    let data = synth_dataset(100, 3, 1, 7, 0.0).dataset;
    let full = oracle_logreg_exact(&data.x, &data.y, 25).unwrap();
    let half = oracle_logreg_exact_damped(&data.x, &data.y, 80, 0.5).unwrap();
    assert!((&full.beta - &half.beta).amax() < 1e-6);
}

#[test]
fn approximate_fit_climbs_then_settles() {
    // the polynomial's fixed point is not the exact optimum, so late
    // iterations may give back a little likelihood
    for seed in 0..5 {
        let data = synth_dataset(200, 3, 1, 20 + seed, 0.0).dataset;
        let fit = oracle_logreg_approx(&data.x, &data.y, 6).unwrap();
        let ll = &fit.log_likelihood;
        assert!(ll[1] > ll[0], "{ll:?}");
        assert!(ll.last().unwrap() > &ll[0]);
        for w in ll.windows(2) {
            assert!(w[1] >= w[0] - 0.1, "{ll:?}");
        }
        assert!((log_likelihood(&data.x, &data.y, fit.beta()) - ll.last().unwrap()).abs() < 1e-12);
    }
}

#[test]
fn inverse_agrees_with_cofactor_formula() {
    let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, -0.2, 0.5, -0.2, 2.0]);
    assert!((inverse_checked(&a).unwrap() - cofactor_inverse_3(&a)).amax() < 1e-12);
    assert!(inverse_checked(&DMatrix::from_element(3, 3, 1.0)).is_err());
}

#[test]
fn synthetic_data_is_seeded() {
    let a = synth_dataset(20, 2, 5, 9, 0.2);
    let b = synth_dataset(20, 2, 5, 9, 0.2);
    assert_eq!(a.dataset, b.dataset);
    assert_eq!(a.causal, b.causal);
    assert!(a.dataset.validate().is_ok());
    assert!(a.dosages.iter().all(|&v| v == 0.0 || v == 1.0 || v == 2.0));
    assert_ne!(synth_dataset(20, 2, 5, 10, 0.2).dataset, a.dataset);
}

#[test]
fn accuracy_table_has_reference_layout() {
    let v: Vec<f64> = (0..50).map(|i| i as f64 / 7.0).collect();
    let r = compare(&v, &v, &[0.1, 0.01, 0.005]).unwrap();
    let s = r.summary();
    assert!(s.contains("0.1\t0\t100.00"));
    assert!(s.contains("0.005\t0\t100.00"));
}

proptest! {
    #[test]
    fn diff_counts_shrink_with_threshold(
        pairs in prop::collection::vec((-5.0f64..5.0, -0.5f64..0.5), 2..60),
    ) {
        let r: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let t: Vec<f64> = pairs.iter().map(|p| p.0 + p.1).collect();
        let rep = compare(&r, &t, &[0.001, 0.01, 0.1, 1.0]).unwrap();
        prop_assert!(rep.diff_counts.windows(2).all(|w| w[0] >= w[1]));
        prop_assert_eq!(rep.total, r.len());
    }
}
