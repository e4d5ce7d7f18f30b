use coda::robust::{
    consistency_factor, default_h, fast_mcd, fast_mcd_with, lts_regression, lts_regression_with,
    variation_matrix_robust, LtsOptions, McdOptions,
};
use coda::{variation_matrix_classical, CompositionTable};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn random_table(rng: &mut ChaCha8Rng, n: usize, d: usize) -> CompositionTable {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-3.0f64..3.0).exp()).collect())
        .collect();
    CompositionTable::from_rows(&rows).unwrap()
}

fn sample_variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

#[test]
fn classical_variation_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let t = random_table(&mut rng, 20, 6);
        let v = variation_matrix_classical(&t).unwrap();
        for j in 0..6 {
            for k in 0..6 {
                let lr: Vec<f64> = (0..20).map(|i| (t.data()[(i, j)] / t.data()[(i, k)]).ln()).collect();
                let want = sample_variance(&lr);
                assert!((v.get(j, k) - want).abs() <= 1e-12 * want.max(1.0));
            }
        }
    }
}

#[test]
fn robust_variation_zero_on_proportional_rows() {
    let base = [0.4, 2.0, 1.3, 0.1, 5.0];
    let rows: Vec<Vec<f64>> = (0..15).map(|i| base.iter().map(|b| b * (1.0 + i as f64)).collect()).collect();
    let t = CompositionTable::from_rows(&rows).unwrap();
    let v = variation_matrix_robust(&t).unwrap();
    assert!(v.values().amax() < 1e-20);
}

#[test]
fn robust_variation_resists_contamination() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let normal = Normal::new(0.0f64, 0.3).unwrap();
    let n = 200;
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| normal.sample(&mut rng).exp()).collect()).collect();
    let clean = CompositionTable::from_rows(&rows).unwrap();
    let mut dirty_rows = rows.clone();
    for r in dirty_rows.iter_mut().take(n / 5) {
        r[0] *= (3.0f64).exp();
    }
    let dirty = CompositionTable::from_rows(&dirty_rows).unwrap();
    let (rc, rd) = (variation_matrix_robust(&clean).unwrap(), variation_matrix_robust(&dirty).unwrap());
    let (cc, cd) = (variation_matrix_classical(&clean).unwrap(), variation_matrix_classical(&dirty).unwrap());
    for k in 1..4 {
        let shift = rd.get(0, k) / rc.get(0, k);
        assert!((shift - 1.0).abs() < 0.2, "robust shift {shift}");
        assert!(cd.get(0, k) / cc.get(0, k) > 2.0);
    }
}

fn det_of(data: &DMatrix<f64>, subset: &[usize]) -> f64 {
    let h = subset.len();
    let p = data.ncols();
    let mean: Vec<f64> = (0..p).map(|j| subset.iter().map(|&i| data[(i, j)]).sum::<f64>() / h as f64).collect();
    let cov = DMatrix::from_fn(p, p, |a, b| {
        subset
            .iter()
            .map(|&i| (data[(i, a)] - mean[a]) * (data[(i, b)] - mean[b]))
            .sum::<f64>()
            / (h - 1) as f64
    });
    cov.determinant()
}

fn subsets(n: usize, h: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == h)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect()
}

#[test]
fn fast_mcd_finds_exhaustive_minimum() {
    let opts = McdOptions {
        exhaustive_limit: 0,
        ..McdOptions::default()
    };
    let mut hits = 0;
    for trial in 0..40 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
        let n = rng.random_range(6..=12);
        let data = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
        let h = default_h(n, 2);
        let (est, trace) = fast_mcd_with(&data, h, trial, &opts).unwrap();
        assert!(!trace.exhaustive);
        for chain in &trace.chains {
            for w in chain.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12), "C-step increased the determinant");
            }
        }
        let best = subsets(n, h).iter().map(|s| det_of(&data, s)).fold(f64::INFINITY, f64::min);
        assert!((det_of(&data, &est.subset) - est.determinant).abs() <= 1e-10 * best.max(1e-12));
        if est.determinant <= best * (1.0 + 1e-9) {
            hits += 1;
        }
    }
    assert!(hits >= 39, "{hits}/40");
}

#[test]
fn mcd_is_affine_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let data = DMatrix::from_fn(40, 3, |_, _| rng.random_range(-1.0..1.0));
    let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.0, 1.0, -1.0, 0.3, 0.0, 1.5]);
    let shift = [1.0, -2.0, 0.5];
    let moved = DMatrix::from_fn(40, 3, |i, j| (data.row(i) * a.transpose())[j] + shift[j]);
    let e1 = fast_mcd(&data, 30, 4).unwrap();
    let e2 = fast_mcd(&moved, 30, 4).unwrap();
    assert_eq!(e1.subset, e2.subset);
    let cov = &a * &e1.covariance * a.transpose();
    assert!((cov - &e2.covariance).amax() < 1e-10);
}

#[test]
fn consistency_factor_is_one_for_full_sample() {
    assert_eq!(consistency_factor(50, 50, 3), 1.0);
    assert!(consistency_factor(38, 50, 3) > 1.0);
}

#[test]
fn lts_without_trimming_is_ols() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 25;
    let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-2.0..2.0));
    let y: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * x[(i, 0)] - x[(i, 1)] + rng.random_range(-0.3..0.3)).collect();
    let fit = lts_regression(&x, &y, 0.0, 0).unwrap();
    // independent oracle: least squares through the SVD
    let a = DMatrix::from_fn(n, 3, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let beta = a.svd(true, true).solve(&nalgebra::DVector::from_vec(y), 1e-14).unwrap();
    for (want, got) in beta.iter().zip(&fit.coefficients) {
        assert!((want - got).abs() < 1e-10);
    }
    assert_eq!(fit.retained.len(), n);
}

#[test]
fn lts_is_regression_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 14;
    let x = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-3.0..3.0));
    let mut y: Vec<f64> = (0..n).map(|i| 2.0 * x[(i, 0)] + rng.random_range(-0.2..0.2)).collect();
    y[3] += 20.0;
    y[7] -= 15.0;
    let opts = LtsOptions::default();
    let base = lts_regression_with(&x, &y, 0.25, 1, &opts).unwrap();
    let (b0, b1) = (3.0, -1.5);
    let shifted: Vec<f64> = (0..n).map(|i| y[i] + b0 + b1 * x[(i, 0)]).collect();
    let moved = lts_regression_with(&x, &shifted, 0.25, 1, &opts).unwrap();
    assert_eq!(base.retained, moved.retained);
    assert!((moved.coefficients[0] - base.coefficients[0] - b0).abs() < 1e-10);
    assert!((moved.coefficients[1] - base.coefficients[1] - b1).abs() < 1e-10);
    assert!(!base.retained.contains(&3) && !base.retained.contains(&7));
}
