//! Least trimmed squares regression with random elemental starts and
//! concentration steps.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::RobustError;
use crate::linalg::{binomial, checked_cholesky, smallest_indices, Combinations};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtsOptions {
    pub starts: usize,
    pub initial_steps: usize,
    pub keep_best: usize,
    pub tolerance: f64,
    pub max_steps: usize,
    pub exhaustive_limit: u64,
    /// Extra candidate subset (row indices) refined alongside the best
    /// random starts. Iterative callers pass the previous retained set; with
    /// `starts = 0` only this subset is refined.
    #[serde(skip)]
    pub warm_start: Option<Vec<usize>>,
}

impl Default for LtsOptions {
    fn default() -> Self {
        Self {
            starts: 500,
            initial_steps: 2,
            keep_best: 10,
            tolerance: 1e-12,
            max_steps: 100,
            exhaustive_limit: 50_000,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtsFit {
    /// Intercept first, then one slope per predictor.
    pub coefficients: Vec<f64>,
    /// Sorted indices of the retained rows.
    pub retained: Vec<usize>,
    pub trim_fraction: f64,
    pub h: usize,
    /// Sum of the `h` smallest squared residuals.
    pub objective: f64,
}

impl LtsFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.coefficients[0]
            + self.coefficients[1..]
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>()
    }
}

/// Design matrix with a leading column of ones.
fn design(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, q) = x.shape();
    DMatrix::from_fn(n, q + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] })
}

/// Ordinary least squares on the listed rows; `None` if rank deficient.
fn ols(a: &DMatrix<f64>, y: &DVector<f64>, rows: &[usize]) -> Option<DVector<f64>> {
    let m = a.ncols();
    let mut ata = DMatrix::zeros(m, m);
    let mut aty = DVector::zeros(m);
    for &i in rows {
        let r = a.row(i);
        for j in 0..m {
            aty[j] += r[j] * y[i];
            for k in 0..=j {
                ata[(j, k)] += r[j] * r[k];
            }
        }
    }
    for j in 0..m {
        for k in 0..j {
            ata[(k, j)] = ata[(j, k)];
        }
    }
    let chol = checked_cholesky(&ata)?;
    Some(chol.solve(&aty))
}

fn squared_residuals(a: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> Vec<f64> {
    let fitted = a * beta;
    (0..y.len()).map(|i| (y[i] - fitted[i]).powi(2)).collect()
}

fn trimmed_objective(res: &[f64], h: usize) -> f64 {
    let mut sorted = res.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[..h].iter().sum()
}

#[derive(Debug, Clone)]
struct Candidate {
    objective: f64,
    beta: DVector<f64>,
    retained: Vec<usize>,
}

/// Fit on `rows`, then keep the `h` smallest residuals.
fn c_step(a: &DMatrix<f64>, y: &DVector<f64>, rows: &[usize], h: usize) -> Option<Candidate> {
    let beta = ols(a, y, rows)?;
    let res = squared_residuals(a, y, &beta);
    let retained = smallest_indices(&res, h);
    let objective = retained.iter().map(|&i| res[i]).sum();
    Some(Candidate {
        objective,
        beta,
        retained,
    })
}

fn concentrate(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    rows: &[usize],
    h: usize,
    steps: usize,
    tol: f64,
) -> Option<Candidate> {
    let mut cand = c_step(a, y, rows, h)?;
    for _ in 1..steps.max(1) {
        let next = c_step(a, y, &cand.retained, h)?;
        let done = next.retained == cand.retained
            || cand.objective - next.objective <= tol * cand.objective;
        cand = next;
        if done {
            break;
        }
    }
    Some(cand)
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    a.objective < b.objective
}

pub fn lts_regression(
    x: &DMatrix<f64>,
    y: &[f64],
    trim_fraction: f64,
    seed: u64,
) -> Result<LtsFit, RobustError> {
    lts_regression_with(x, y, trim_fraction, seed, &LtsOptions::default())
}

/// Number of rows retained for a given trim fraction.
pub fn retained_count(n: usize, trim_fraction: f64) -> usize {
    ((n as f64) * (1.0 - trim_fraction)).floor() as usize
}

pub fn lts_regression_with(
    x: &DMatrix<f64>,
    y: &[f64],
    trim_fraction: f64,
    seed: u64,
    opts: &LtsOptions,
) -> Result<LtsFit, RobustError> {
    let (n, q) = x.shape();
    if y.len() != n {
        return Err(RobustError::LengthMismatch { x: n, y: y.len() });
    }
    if !(0.0..=0.5).contains(&trim_fraction) {
        return Err(RobustError::TrimFraction(trim_fraction));
    }
    if n < q + 2 {
        return Err(RobustError::Dimension { n, p: q + 1 });
    }
    let h = retained_count(n, trim_fraction);
    let m = q + 1;
    if h < m {
        return Err(RobustError::SubsetSize { h, min: m, max: n });
    }
    let a = design(x);
    let yv = DVector::from_column_slice(y);

    let finish = |c: Candidate| {
        // refit on the final retained rows so coefficients are exactly their OLS
        let beta = ols(&a, &yv, &c.retained).unwrap_or(c.beta);
        let res = squared_residuals(&a, &yv, &beta);
        LtsFit {
            coefficients: beta.iter().cloned().collect(),
            objective: trimmed_objective(&res, h),
            retained: c.retained,
            trim_fraction,
            h,
        }
    };

    if h == n {
        let all: Vec<usize> = (0..n).collect();
        let beta = ols(&a, &yv, &all).ok_or(RobustError::DegenerateDesign)?;
        return Ok(finish(Candidate {
            objective: 0.0,
            beta,
            retained: all,
        }));
    }

    if binomial(n, h) <= opts.exhaustive_limit {
        let mut best: Option<Candidate> = None;
        for rows in Combinations::new(n, h) {
            let Some(beta) = ols(&a, &yv, &rows) else {
                continue;
            };
            let res = squared_residuals(&a, &yv, &beta);
            let retained = smallest_indices(&res, h);
            let cand = Candidate {
                objective: retained.iter().map(|&i| res[i]).sum(),
                beta,
                retained,
            };
            if best.as_ref().is_none_or(|b| better(&cand, b)) {
                best = Some(cand);
            }
        }
        return best.map(finish).ok_or(RobustError::DegenerateDesign);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ranked: Vec<Candidate> = Vec::with_capacity(opts.starts + 1);
    for _ in 0..opts.starts {
        let rows = sample(&mut rng, n, m).into_vec();
        if let Some(c) = concentrate(&a, &yv, &rows, h, opts.initial_steps, 0.0) {
            ranked.push(c);
        }
    }
    // stable: earlier starts win ties
    ranked.sort_by(|p, r| p.objective.total_cmp(&r.objective));
    let mut kept: Vec<Candidate> = Vec::new();
    // a warm start is always refined and listed first, so it wins ties
    if let Some(warm) = &opts.warm_start {
        if warm.len() >= m && warm.iter().all(|&i| i < n) {
            if let Some(c) = concentrate(&a, &yv, warm, h, opts.initial_steps, 0.0) {
                kept.push(c);
            }
        }
    }
    for c in ranked {
        if kept.len() >= opts.keep_best {
            break;
        }
        if !kept.iter().any(|k| k.retained == c.retained) {
            kept.push(c);
        }
    }
    if kept.is_empty() {
        return Err(RobustError::DegenerateDesign);
    }
    let mut best: Option<Candidate> = None;
    for c in kept {
        let refined = concentrate(&a, &yv, &c.retained, h, opts.max_steps, opts.tolerance)
            .unwrap_or(c);
        if best.as_ref().is_none_or(|b| better(&refined, b)) {
            best = Some(refined);
        }
    }
    Ok(finish(best.expect("at least one candidate")))
}
