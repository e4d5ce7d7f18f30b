use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kmeans::{nearest_center, seed_centers};
use super::{relabel_by_first_appearance, ClusterAssignment, ClusterMethod};
use crate::error::ClusterError;
use crate::linalg::checked_cholesky;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceModel {
    Full,
    Diagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Requested model; full switches to diagonal when n < 2 * dim * K.
    pub covariance: CovarianceModel,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 500,
            covariance: CovarianceModel::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    /// Hard labels by maximum responsibility; components that win no point
    /// are left out, so `assignment.k()` can be below the requested K.
    pub assignment: ClusterAssignment,
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
    pub covariance: CovarianceModel,
    /// True when the requested full model was replaced by the diagonal one.
    pub diagonal_fallback: bool,
    pub log_likelihood: f64,
    /// Log-likelihood at each E-step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub bic: f64,
    /// M-steps in which some covariance eigenvalue was raised to the floor.
    pub floored_steps: usize,
}

struct Component {
    weight: f64,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

fn total_trace(points: &DMatrix<f64>) -> f64 {
    let n = points.nrows() as f64;
    (0..points.ncols())
        .map(|j| {
            let c = points.column(j);
            let m = c.mean();
            c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
        })
        .sum()
}

/// Per-row log densities of each component.
fn log_densities(points: &DMatrix<f64>, comps: &[Component]) -> Option<DMatrix<f64>> {
    let (n, p) = points.shape();
    let mut out = DMatrix::zeros(n, comps.len());
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    for (c, comp) in comps.iter().enumerate() {
        let chol = checked_cholesky(&comp.cov)?;
        let l = chol.l();
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        for i in 0..n {
            let diff = points.row(i).transpose() - &comp.mean;
            let y = l.solve_lower_triangular(&diff)?;
            out[(i, c)] = comp.weight.ln() - 0.5 * (p as f64 * ln2pi + log_det + y.norm_squared());
        }
    }
    Some(out)
}

fn log_sum_exp(row: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = row.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + row.map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn m_step(
    points: &DMatrix<f64>,
    resp: &DMatrix<f64>,
    model: CovarianceModel,
    floor: f64,
) -> (Vec<Component>, bool) {
    let (n, p) = points.shape();
    let mut floored = false;
    let comps = (0..resp.ncols())
        .map(|c| {
            let nk: f64 = resp.column(c).sum();
            let nk_safe = nk.max(f64::MIN_POSITIVE);
            let mut mean = DVector::zeros(p);
            for i in 0..n {
                mean += points.row(i).transpose() * resp[(i, c)];
            }
            mean /= nk_safe;
            let mut cov = DMatrix::zeros(p, p);
            for i in 0..n {
                let diff = points.row(i).transpose() - &mean;
                cov += &diff * diff.transpose() * resp[(i, c)];
            }
            cov /= nk_safe;
            // the M-step maximises over covariances whose eigenvalues are at
            // least `floor`, so clipping is exact and EM stays monotone
            match model {
                CovarianceModel::Diagonal => {
                    floored |= (0..p).any(|j| cov[(j, j)] < floor);
                    cov = DMatrix::from_fn(p, p, |a, b| if a == b { cov[(a, a)].max(floor) } else { 0.0 });
                }
                CovarianceModel::Full => {
                    let eig = SymmetricEigen::new(cov.clone());
                    if eig.eigenvalues.iter().any(|&e| e < floor) {
                        let clipped = eig.eigenvalues.map(|e| e.max(floor));
                        cov = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
                        cov = (&cov + cov.transpose()) * 0.5;
                        floored = true;
                    }
                }
            }
            Component {
                weight: (nk / n as f64).max(f64::MIN_POSITIVE),
                mean,
                cov,
            }
        })
        .collect();
    (comps, floored)
}

pub fn gmm_em(points: &DMatrix<f64>, k: usize, seed: u64) -> Result<GmmFit, ClusterError> {
    gmm_em_with(points, k, seed, &GmmOptions::default())
}

/// EM for a K-component Gaussian mixture. Responsibilities start as hard
/// assignments to k-means++ seeds. Covariances are maximum likelihood
/// subject to every eigenvalue being at least `1e-6 * trace / dim`, with the
/// trace of the pooled sample covariance, which keeps a component from
/// collapsing onto a few points.
pub fn gmm_em_with(points: &DMatrix<f64>, k: usize, seed: u64, opts: &GmmOptions) -> Result<GmmFit, ClusterError> {
    let (n, p) = points.shape();
    if n == 0 || p == 0 {
        return Err(ClusterError::Empty);
    }
    if k == 0 || n <= k {
        return Err(ClusterError::TooFewForMixture { n, k, dim: p });
    }
    let diagonal_fallback = opts.covariance == CovarianceModel::Full && n < 2 * p * k;
    let model = if diagonal_fallback {
        CovarianceModel::Diagonal
    } else {
        opts.covariance
    };
    let trace_all = total_trace(points);
    let floor = if trace_all > 0.0 {
        1e-6 * trace_all / p as f64
    } else {
        1e-6
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = seed_centers(points, k, &mut rng);
    let mut resp = DMatrix::zeros(n, k);
    for i in 0..n {
        resp[(i, nearest_center(points, i, &centers))] = 1.0;
    }

    let mut floored_steps = 0;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut comps;
    loop {
        let (next, floored) = m_step(points, &resp, model, floor);
        comps = next;
        floored_steps += usize::from(floored);
        let Some(logd) = log_densities(points, &comps) else {
            // not positive definite even after the floor: stop here
            break;
        };
        let mut ll = 0.0;
        for i in 0..n {
            let lse = log_sum_exp(logd.row(i).iter().copied());
            ll += lse;
            for c in 0..k {
                resp[(i, c)] = (logd[(i, c)] - lse).exp();
            }
        }
        let done = trace
            .last()
            .is_some_and(|&prev: &f64| (ll - prev).abs() < opts.tolerance);
        trace.push(ll);
        if done {
            converged = true;
            break;
        }
        if trace.len() >= opts.max_iterations {
            break;
        }
    }

    let hard: Vec<usize> = (0..n)
        .map(|i| {
            let mut best = 0;
            for c in 1..k {
                if resp[(i, c)] > resp[(i, best)] {
                    best = c;
                }
            }
            best
        })
        .collect();
    let log_likelihood = trace.last().copied().unwrap_or(f64::NEG_INFINITY);
    let cov_params = match model {
        CovarianceModel::Full => p * (p + 1) / 2,
        CovarianceModel::Diagonal => p,
    };
    let params = (k - 1) + k * p + k * cov_params;
    Ok(GmmFit {
        assignment: ClusterAssignment::new(
            relabel_by_first_appearance(&hard),
            ClusterMethod::Gmm,
            log_likelihood,
        )?,
        weights: comps.iter().map(|c| c.weight).collect(),
        means: comps.iter().map(|c| c.mean.iter().copied().collect()).collect(),
        covariances: comps
            .iter()
            .map(|c| c.cov.row_iter().map(|r| r.iter().copied().collect()).collect())
            .collect(),
        covariance: model,
        diagonal_fallback,
        log_likelihood,
        iterations: trace.len(),
        trace,
        converged,
        bic: -2.0 * log_likelihood + params as f64 * (n as f64).ln(),
        floored_steps,
    })
}
