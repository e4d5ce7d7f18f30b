use coda::impute::{
    impute_by_trend, impute_iterative, impute_table, CellMethod, HistoricalSeries, IterativeOptions,
    PartialTable, TrendOutcome,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Every row a positive multiple of one base composition.
fn rank_one(n: usize, d: usize, seed: u64) -> (PartialTable, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..10.0)).collect();
    let truth: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let s = rng.random_range(0.5..50.0);
            base.iter().map(|b| b * s).collect()
        })
        .collect();
    let values = truth.iter().map(|r| r.iter().map(|v| Some(*v)).collect()).collect();
    (PartialTable::new(labels("e", n), labels("c", d), values).unwrap(), truth)
}

fn mask_random(t: &mut PartialTable, cells: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, d) = (t.nrows(), t.nparts());
    let mut done = 0;
    while done < cells {
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..d));
        if t.get(i, j).is_some() && t.mask().row_counts()[i] + 2 < d {
            t.mask_cell(i, j);
            done += 1;
        }
    }
}

/// Three latent factors plus noise, in log space.
fn factor_table(n: usize, d: usize, noise: f64, seed: u64) -> PartialTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let load: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| normal.sample(&mut rng)).collect()).collect();
    let values = (0..n)
        .map(|_| {
            let f: Vec<f64> = (0..3).map(|_| normal.sample(&mut rng)).collect();
            (0..d)
                .map(|j| {
                    let l: f64 = (0..3).map(|k| f[k] * load[k][j]).sum();
                    Some((l + noise * normal.sample(&mut rng)).exp())
                })
                .collect()
        })
        .collect();
    PartialTable::new(labels("e", n), labels("c", d), values).unwrap()
}

#[test]
fn rank_one_cells_recovered() {
    let (mut t, truth) = rank_one(33, 14, 1);
    mask_random(&mut t, 18, 2);
    let (out, report) = impute_iterative(&t, 5, 7, &IterativeOptions::default()).unwrap();
    for (i, row) in truth.iter().enumerate() {
        for (j, want) in row.iter().enumerate() {
            let got = out.data()[(i, j)];
            match t.get(i, j) {
                Some(v) => assert_eq!(got.to_bits(), v.to_bits()),
                None => assert!(((got - want) / want).abs() < 1e-6, "cell ({i},{j}): {got} vs {want}"),
            }
        }
    }
    assert_eq!(report.filled_iteratively, 18);
    assert!(report.dropped_repetitions.is_empty());
}

#[test]
fn deterministic_for_fixed_seed() {
    let mut t = factor_table(20, 6, 0.1, 3);
    mask_random(&mut t, 8, 4);
    let a = impute_iterative(&t, 6, 99, &IterativeOptions::default()).unwrap();
    let b = impute_iterative(&t, 6, 99, &IterativeOptions::default()).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.1, b.1);
}

#[test]
fn averaging_reduces_spread() {
    // nearly saturated LTS fits, so repetitions disagree
    let mut t = factor_table(33, 14, 0.3, 5);
    mask_random(&mut t, 18, 6);
    let opts = IterativeOptions::default();
    let (_, probe) = impute_iterative(&t, 10, 1, &opts).unwrap();
    let widest = probe
        .cells
        .iter()
        .max_by(|a, b| a.std_dev.unwrap().total_cmp(&b.std_dev.unwrap()))
        .unwrap();
    assert!(probe.cells.iter().all(|c| c.std_dev.is_some_and(f64::is_finite)));
    let cell = (widest.row, widest.col);
    assert!(probe.dropped_repetitions.is_empty());
    let run = |reps: usize, seed: u64| impute_iterative(&t, reps, seed, &opts).unwrap().0.data()[cell].ln();
    let spread = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
    };
    let single: Vec<f64> = (0..10).map(|s| run(1, 1000 * s)).collect();
    let averaged: Vec<f64> = (0..10).map(|s| run(10, 1000 * s)).collect();
    assert!(spread(&averaged) < spread(&single), "{} vs {}", spread(&averaged), spread(&single));
}

#[test]
fn trend_runs_first() {
    let (mut t, truth) = rank_one(12, 5, 8);
    t.mask_cell(0, 1);
    t.mask_cell(3, 2);
    let mut history = HistoricalSeries::new();
    for (k, year) in (2015..2020).enumerate() {
        history.insert("e0", "c1", year, 1.0 + k as f64);
    }
    history.validate().unwrap();
    let (out, report) = impute_table(&t, &history, 2020, 3, 1, &IterativeOptions::default()).unwrap();
    assert_eq!(report.filled_by_trend, 1);
    assert_eq!(report.filled_iteratively, 1);
    assert_eq!(report.methods[0][1], CellMethod::TrendRegression);
    assert_eq!(report.methods[3][2], CellMethod::IterativeKnnLts);
    assert!((out.data()[(0, 1)] - 6.0).abs() < 1e-12);
    assert!(((out.data()[(3, 2)] - truth[3][2]) / truth[3][2]).abs() < 1e-6);
}

#[test]
fn trend_matches_least_squares_oracle() {
    let series = [(2010, 3.0), (2012, 4.5), (2013, 4.0), (2016, 7.5)];
    // slope and intercept from the closed-form normal equations
    let n = series.len() as f64;
    let sx: f64 = series.iter().map(|s| s.0 as f64).sum();
    let sy: f64 = series.iter().map(|s| s.1).sum();
    let sxx: f64 = series.iter().map(|s| (s.0 as f64).powi(2)).sum();
    let sxy: f64 = series.iter().map(|s| s.0 as f64 * s.1).sum();
    let b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let a = (sy - b * sx) / n;
    match impute_by_trend(&series, 2018) {
        TrendOutcome::Filled(v) => assert!((v - (a + b * 2018.0)).abs() < 1e-9),
        other => panic!("{other:?}"),
    }
}

#[test]
fn history_rejects_duplicates() {
    let mut h = HistoricalSeries::new();
    h.insert("a", "x", 2020, 1.0);
    h.insert("a", "x", 2020, 2.0);
    assert!(h.validate().is_err());
}

#[test]
fn solved_limit_matches_long_sweep() {
    let mut t = factor_table(33, 8, 0.3, 5);
    mask_random(&mut t, 18, 6);
    let (short, report) = impute_iterative(&t, 1, 3, &IterativeOptions::default()).unwrap();
    assert_eq!(report.solved_repetitions, vec![0]);
    // same fits, swept until it really settles
    let long = IterativeOptions {
        max_iterations: 5000,
        tolerance: 1e-13,
        ..IterativeOptions::default()
    };
    let (swept, report) = impute_iterative(&t, 1, 3, &long).unwrap();
    assert!(report.solved_repetitions.is_empty());
    for c in &report.cells {
        let (a, b) = (short.data()[(c.row, c.col)], swept.data()[(c.row, c.col)]);
        assert!(((a - b) / b).abs() < 1e-9, "({}, {}): {a} vs {b}", c.row, c.col);
    }
}
