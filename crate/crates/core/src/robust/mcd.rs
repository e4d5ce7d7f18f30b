//! Minimum covariance determinant estimation (FAST-MCD).
//!
//! The search draws elemental starts of size `p + 1`, concentrates each with
//! two C-steps, then iterates the best few to convergence. A C-step computes
//! the mean and covariance of the current subset and keeps the `h` rows with
//! the smallest Mahalanobis distances; the subset covariance determinant
//! never increases along the way. When `C(n, h)` is small enough every
//! subset is enumerated instead, so the global minimum is returned.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::RobustError;
use crate::linalg::{
    binomial, chol_det, checked_cholesky, mahalanobis_sq, smallest_indices, subset_moments,
    Combinations,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McdOptions {
    /// Number of random elemental starts.
    pub starts: usize,
    /// C-steps applied to every start before ranking.
    pub initial_steps: usize,
    /// Candidates carried into the full refinement.
    pub keep_best: usize,
    /// Relative determinant change that ends a refinement.
    pub tolerance: f64,
    pub max_steps: usize,
    /// Enumerate all subsets when `C(n, h)` does not exceed this.
    pub exhaustive_limit: u64,
}

impl Default for McdOptions {
    fn default() -> Self {
        Self {
            starts: 500,
            initial_steps: 2,
            keep_best: 10,
            tolerance: 1e-12,
            max_steps: 100,
            exhaustive_limit: 50_000,
        }
    }
}

/// MCD location and scatter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustEstimate {
    pub location: Vec<f64>,
    /// Subset covariance multiplied by `consistency_factor`.
    #[serde(with = "crate::serde_matrix")]
    pub covariance: DMatrix<f64>,
    /// Sorted row indices of the optimal subset.
    pub subset: Vec<usize>,
    pub h: usize,
    pub consistency_factor: f64,
    /// Determinant of the raw (uncorrected) subset covariance.
    pub determinant: f64,
}

/// Determinant sequences visited by the search, for auditing.
#[derive(Debug, Clone, Default)]
pub struct McdTrace {
    pub exhaustive: bool,
    /// One determinant sequence per concentrated candidate (initial steps
    /// followed by the refinement steps when the candidate was refined).
    pub chains: Vec<Vec<f64>>,
}

/// Smallest admissible subset size `floor((n + p + 1) / 2)`.
pub fn min_h(n: usize, p: usize) -> usize {
    (n + p + 1) / 2
}

/// `ceil(0.75 n)` raised to the admissible minimum if needed.
pub fn default_h(n: usize, p: usize) -> usize {
    let h = (0.75 * n as f64).ceil() as usize;
    h.max(min_h(n, p)).min(n)
}

/// Normal-consistency factor `alpha / F_{chi2(p+2)}(q_alpha)`, `alpha = h/n`.
pub fn consistency_factor(h: usize, n: usize, p: usize) -> f64 {
    let alpha = h as f64 / n as f64;
    if alpha >= 1.0 {
        return 1.0;
    }
    let q = ChiSquared::new(p as f64).unwrap().inverse_cdf(alpha);
    alpha / ChiSquared::new((p + 2) as f64).unwrap().cdf(q)
}

fn check_h(n: usize, p: usize, h: usize) -> Result<(), RobustError> {
    if n <= p {
        return Err(RobustError::Dimension { n, p });
    }
    let min = min_h(n, p);
    if h < min || h > n {
        return Err(RobustError::SubsetSize { h, min, max: n });
    }
    Ok(())
}

pub fn fast_mcd(data: &DMatrix<f64>, h: usize, seed: u64) -> Result<RobustEstimate, RobustError> {
    fast_mcd_with(data, h, seed, &McdOptions::default()).map(|(est, _)| est)
}

/// Evaluated subset: raw determinant plus the subset itself.
#[derive(Debug, Clone)]
struct Candidate {
    det: f64,
    subset: Vec<usize>,
}

/// One concentration step. `None` when the current subset is singular.
fn c_step(data: &DMatrix<f64>, subset: &[usize], h: usize) -> Option<(f64, Vec<usize>)> {
    let (mean, cov) = subset_moments(data, subset);
    let chol = checked_cholesky(&cov)?;
    let det = chol_det(&chol);
    let d2 = mahalanobis_sq(data, &mean, &chol);
    Some((det, smallest_indices(&d2, h)))
}

fn subset_det(data: &DMatrix<f64>, subset: &[usize]) -> Option<f64> {
    let (_, cov) = subset_moments(data, subset);
    checked_cholesky(&cov).map(|c| chol_det(&c))
}

/// Applies up to `steps` C-steps, stopping early once the subset is stable.
/// Returns the final candidate and the determinant of every subset visited.
fn concentrate(
    data: &DMatrix<f64>,
    start: Vec<usize>,
    h: usize,
    steps: usize,
    tol: f64,
) -> Option<(Candidate, Vec<f64>)> {
    let mut subset = start;
    let mut chain: Vec<f64> = Vec::new();
    for _ in 0..steps {
        let (det, next) = c_step(data, &subset, h)?;
        let stalled = chain.last().is_some_and(|&prev| prev - det <= tol * prev);
        chain.push(det);
        if next == subset || stalled {
            return Some((Candidate { det, subset }, chain));
        }
        subset = next;
    }
    let det = subset_det(data, &subset)?;
    chain.push(det);
    Some((Candidate { det, subset }, chain))
}

/// Elemental start: `p + 1` random rows, grown until the covariance is
/// nonsingular, then expanded to the `h` closest rows.
fn elemental_start(
    data: &DMatrix<f64>,
    h: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<usize>> {
    let (n, p) = data.shape();
    let pool: Vec<usize> = sample(rng, n, n).into_vec();
    let mut take = p + 1;
    loop {
        let subset: Vec<usize> = pool[..take].to_vec();
        let (mean, cov) = subset_moments(data, &subset);
        if let Some(chol) = checked_cholesky(&cov) {
            let d2 = mahalanobis_sq(data, &mean, &chol);
            return Some(smallest_indices(&d2, h));
        }
        take += 1;
        if take > h {
            return None;
        }
    }
}

fn finish(data: &DMatrix<f64>, best: Candidate, h: usize) -> RobustEstimate {
    let (n, p) = data.shape();
    let (mean, cov) = subset_moments(data, &best.subset);
    let c = consistency_factor(h, n, p);
    RobustEstimate {
        location: mean.iter().cloned().collect(),
        covariance: cov * c,
        subset: best.subset,
        h,
        consistency_factor: c,
        determinant: best.det,
    }
}

fn pick_best(cands: impl IntoIterator<Item = Candidate>) -> Option<Candidate> {
    cands.into_iter().fold(None, |acc: Option<Candidate>, c| match acc {
        Some(a) if a.det <= c.det => Some(a),
        _ => Some(c),
    })
}

pub fn fast_mcd_with(
    data: &DMatrix<f64>,
    h: usize,
    seed: u64,
    opts: &McdOptions,
) -> Result<(RobustEstimate, McdTrace), RobustError> {
    let (n, p) = data.shape();
    check_h(n, p, h)?;
    let mut trace = McdTrace::default();

    if p == 1 {
        let series: Vec<f64> = data.column(0).iter().cloned().collect();
        trace.exhaustive = true;
        return Ok((mcd_univariate_checked(&series, h), trace));
    }

    if h == n {
        let all: Vec<usize> = (0..n).collect();
        let det = subset_det(data, &all).ok_or(RobustError::SingularSubset)?;
        trace.exhaustive = true;
        trace.chains.push(vec![det]);
        return Ok((finish(data, Candidate { det, subset: all }, h), trace));
    }

    if binomial(n, h) <= opts.exhaustive_limit {
        trace.exhaustive = true;
        let best = pick_best(
            Combinations::new(n, h)
                .filter_map(|s| subset_det(data, &s).map(|det| Candidate { det, subset: s })),
        )
        .ok_or(RobustError::SingularSubset)?;
        return Ok((finish(data, best, h), trace));
    }

    // Draw every start up front so the result does not depend on scheduling.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<Option<Vec<usize>>> = (0..opts.starts)
        .map(|_| elemental_start(data, h, &mut rng))
        .collect();

    let initial: Vec<Option<(Candidate, Vec<f64>)>> = starts
        .into_par_iter()
        .map(|s| s.and_then(|s| concentrate(data, s, h, opts.initial_steps, 0.0)))
        .collect();

    let mut ranked: Vec<(usize, Candidate, Vec<f64>)> = initial
        .into_iter()
        .enumerate()
        .filter_map(|(i, c)| c.map(|(cand, chain)| (i, cand, chain)))
        .collect();
    if ranked.is_empty() {
        return Err(RobustError::SingularSubset);
    }
    ranked.sort_by(|a, b| a.1.det.total_cmp(&b.1.det).then(a.0.cmp(&b.0)));
    // drop duplicate subsets so the refinement budget is not wasted
    let mut seen: Vec<Vec<usize>> = Vec::new();
    let mut keep = Vec::new();
    let mut others = Vec::new();
    for (i, cand, chain) in ranked {
        if keep.len() < opts.keep_best && !seen.contains(&cand.subset) {
            seen.push(cand.subset.clone());
            keep.push((cand, chain));
        } else {
            others.push((i, chain));
        }
    }
    for (_, chain) in others {
        trace.chains.push(chain);
    }

    let refined: Vec<Option<(Candidate, Vec<f64>)>> = keep
        .into_par_iter()
        .map(|(cand, mut chain)| {
            let (done, more) =
                concentrate(data, cand.subset, h, opts.max_steps, opts.tolerance)?;
            // the first refinement step re-evaluates the starting subset
            chain.extend(more.into_iter().skip(1));
            Some((done, chain))
        })
        .collect();

    let mut finals = Vec::new();
    for (cand, chain) in refined.into_iter().flatten() {
        trace.chains.push(chain);
        finals.push(cand);
    }
    let best = pick_best(finals).ok_or(RobustError::SingularSubset)?;
    Ok((finish(data, best, h), trace))
}

/// Exact univariate MCD: the optimal h-subset is a contiguous window of the
/// sorted sample, so every window is scanned.
pub fn mcd_univariate(series: &[f64], h: usize) -> Result<RobustEstimate, RobustError> {
    check_h(series.len(), 1, h)?;
    Ok(mcd_univariate_checked(series, h))
}

fn mcd_univariate_checked(series: &[f64], h: usize) -> RobustEstimate {
    let n = series.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| series[a].total_cmp(&series[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| series[i]).collect();

    let window_stats = |start: usize| {
        let w = &sorted[start..start + h];
        let mean = w.iter().sum::<f64>() / h as f64;
        let var = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (h - 1).max(1) as f64;
        (mean, var)
    };
    let mut best = (0, window_stats(0));
    for start in 1..=n - h {
        let s = window_stats(start);
        if s.1 < best.1 .1 {
            best = (start, s);
        }
    }
    let (start, (mean, var)) = best;
    let mut subset: Vec<usize> = order[start..start + h].to_vec();
    subset.sort_unstable();
    let c = consistency_factor(h, n, 1);
    RobustEstimate {
        location: vec![mean],
        covariance: DMatrix::from_element(1, 1, var * c),
        subset,
        h,
        consistency_factor: c,
        determinant: var,
    }
}

/// Robust squared distances of every row under an estimate.
pub fn robust_distances(data: &DMatrix<f64>, est: &RobustEstimate) -> Option<Vec<f64>> {
    let chol = checked_cholesky(&est.covariance)?;
    let center = DVector::from_column_slice(&est.location);
    Some(mahalanobis_sq(data, &center, &chol))
}
