//! Exact t-SNE for small data sets.
//!
//! Input similarities are Gaussian conditionals calibrated to a target
//! perplexity and symmetrised; the map uses a Student-t (one degree of
//! freedom) kernel. The gradient is computed exactly in O(n^2).

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::TsneError;

/// Floor applied to q_ij inside the divergence.
pub const Q_FLOOR: f64 = 1e-12;
const ENTROPY_TOLERANCE: f64 = 1e-5;
const MAX_BISECTION_STEPS: usize = 50;
const LOG_BETA_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityMatrix {
    #[serde(with = "crate::serde_matrix")]
    p: DMatrix<f64>,
    perplexity: f64,
    /// Per-point Gaussian bandwidths.
    sigmas: Vec<f64>,
}

impl AffinityMatrix {
    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn perplexity(&self) -> f64 {
        self.perplexity
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn n(&self) -> usize {
        self.p.nrows()
    }

    /// Wraps a joint probability matrix; checks symmetry, zero diagonal,
    /// non-negativity and unit sum.
    pub fn from_joint(p: DMatrix<f64>) -> Result<Self, TsneError> {
        let n = p.nrows();
        if p.ncols() != n || n < 2 {
            return Err(TsneError::InvalidDistance);
        }
        let sum = p.sum();
        let ok = (0..n).all(|i| {
            p[(i, i)] == 0.0 && (0..n).all(|j| p[(i, j)] >= 0.0 && (p[(i, j)] - p[(j, i)]).abs() <= 1e-15)
        });
        if !ok || (sum - 1.0).abs() > 1e-10 {
            return Err(TsneError::InvalidDistance);
        }
        Ok(Self {
            p,
            perplexity: f64::NAN,
            sigmas: Vec::new(),
        })
    }

    /// Rows and columns reordered so that new index `i` is old `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n();
        Self {
            p: DMatrix::from_fn(n, n, |i, j| self.p[(perm[i], perm[j])]),
            perplexity: self.perplexity,
            sigmas: perm.iter().filter_map(|&i| self.sigmas.get(i).copied()).collect(),
        }
    }
}

/// Conditional distribution of row `i` at precision `beta` and its entropy
/// in bits. Squared distances are shifted by their minimum for stability.
fn conditional(d2: &[f64], i: usize, beta: f64) -> (Vec<f64>, f64) {
    let min = d2
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min);
    let mut p: Vec<f64> = d2
        .iter()
        .enumerate()
        .map(|(j, v)| if j == i { 0.0 } else { (-beta * (v - min)).exp() })
        .collect();
    let sum: f64 = p.iter().sum();
    let mut h = 0.0;
    for v in p.iter_mut() {
        *v /= sum;
        if *v > 0.0 {
            h -= *v * v.log2();
        }
    }
    (p, h)
}

/// Joint input probabilities from a distance matrix. Each point's precision
/// is found by expanding and then bisecting on `ln beta`, starting from the
/// reciprocal mean squared distance, so rescaling all distances leaves `P`
/// unchanged.
pub fn affinities(dist: &DMatrix<f64>, perplexity: f64) -> Result<AffinityMatrix, TsneError> {
    let n = dist.nrows();
    if dist.ncols() != n {
        return Err(TsneError::InvalidDistance);
    }
    for i in 0..n {
        for j in 0..n {
            let v = dist[(i, j)];
            if !v.is_finite() || v < 0.0 || (i == j && v != 0.0) || (v - dist[(j, i)]).abs() > 1e-12 * v.max(1.0) {
                return Err(TsneError::InvalidDistance);
            }
        }
    }
    if !(perplexity > 1.0 && perplexity < n as f64) {
        return Err(TsneError::Perplexity { perplexity, n });
    }
    let target = perplexity.log2();
    let mut cond = DMatrix::zeros(n, n);
    let mut sigmas = Vec::with_capacity(n);
    for i in 0..n {
        let d2: Vec<f64> = (0..n).map(|j| dist[(i, j)].powi(2)).collect();
        let mean = d2.iter().sum::<f64>() / (n - 1) as f64;
        if mean == 0.0 {
            return Err(TsneError::PerplexityUnreachable(i));
        }
        let mut log_beta = -mean.ln();
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut step = 1.0;
        let mut bisections = 0;
        let (mut p, mut h) = conditional(&d2, i, log_beta.exp());
        while (h - target).abs() > ENTROPY_TOLERANCE {
            // entropy falls as the precision grows
            if h > target {
                lo = log_beta;
            } else {
                hi = log_beta;
            }
            if lo.is_finite() && hi.is_finite() {
                if bisections == MAX_BISECTION_STEPS {
                    return Err(TsneError::PerplexityUnreachable(i));
                }
                log_beta = 0.5 * (lo + hi);
                bisections += 1;
            } else {
                log_beta += if h > target { step } else { -step };
                step *= 2.0;
                if log_beta.abs() > LOG_BETA_LIMIT {
                    return Err(TsneError::PerplexityUnreachable(i));
                }
            }
            (p, h) = conditional(&d2, i, log_beta.exp());
        }
        sigmas.push((0.5 / log_beta.exp()).sqrt());
        for j in 0..n {
            cond[(i, j)] = p[j];
        }
    }
    let p = DMatrix::from_fn(n, n, |i, j| (cond[(i, j)] + cond[(j, i)]) / (2 * n) as f64);
    Ok(AffinityMatrix {
        p,
        perplexity,
        sigmas,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneParams {
    pub perplexity: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    /// Standard deviation of the Gaussian initialisation.
    pub init_sd: f64,
    /// Per-coordinate adaptive gains (+0.2 on sign change, x0.8 otherwise).
    pub gains: bool,
    pub min_gain: f64,
    /// KL is recorded every this many iterations (and at the last one).
    pub log_every: usize,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self {
            perplexity: 10.0,
            learning_rate: 200.0,
            iterations: 1000,
            exaggeration: 12.0,
            exaggeration_iterations: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            init_sd: 1e-4,
            gains: true,
            min_gain: 0.01,
            log_every: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    /// n x 2.
    #[serde(with = "crate::serde_matrix")]
    pub y: DMatrix<f64>,
    pub kl_divergence: f64,
    /// (iteration, KL) pairs, KL measured against the unexaggerated P.
    pub trace: Vec<(usize, f64)>,
    pub params: TsneParams,
    pub seed: u64,
}

/// Sum that depends only on the multiset of terms, so relabelling the points
/// cannot change any rounding.
fn ordered_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// Student-t kernel values `1 / (1 + |y_i - y_j|^2)` (zero diagonal) and their sum.
fn kernel(y: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let n = y.nrows();
    let mut num = DMatrix::zeros(n, n);
    let mut terms = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d2 = (y[(i, 0)] - y[(j, 0)]).powi(2) + (y[(i, 1)] - y[(j, 1)]).powi(2);
            let v = 1.0 / (1.0 + d2);
            num[(i, j)] = v;
            num[(j, i)] = v;
            terms.push(v);
        }
    }
    (num, 2.0 * ordered_sum(terms))
}

/// Map similarities q_ij.
pub fn q_matrix(y: &DMatrix<f64>) -> DMatrix<f64> {
    let (num, sum) = kernel(y);
    num / sum
}

/// `sum P_ij ln(P_ij / q_ij)` over `P_ij > 0`, with q floored at [`Q_FLOOR`].
pub fn kl_divergence(p: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let q = q_matrix(y);
    ordered_sum(
        p.iter()
            .zip(q.iter())
            .filter(|(pv, _)| **pv > 0.0)
            .map(|(pv, qv)| pv * (pv / qv.max(Q_FLOOR)).ln())
            .collect(),
    )
}

/// `dC/dy_i = 4 sum_j (p_ij - q_ij)(y_i - y_j) / (1 + |y_i - y_j|^2)`.
pub fn gradient(p: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let n = y.nrows();
    let (num, sum) = kernel(y);
    DMatrix::from_fn(n, 2, |i, c| {
        ordered_sum(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| 4.0 * (p[(i, j)] - num[(i, j)] / sum) * num[(i, j)] * (y[(i, c)] - y[(j, c)]))
                .collect(),
        )
    })
}

/// Per-iteration state, exposed for auditing the optimisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub iteration: usize,
    /// Sum of the q_ij used for this step's gradient.
    pub q_sum: f64,
    pub gradient_norm: f64,
    pub exaggerated: bool,
}

/// Gradient descent with momentum, early exaggeration and gains.
#[derive(Debug, Clone)]
pub struct TsneStepper {
    p: DMatrix<f64>,
    params: TsneParams,
    y: DMatrix<f64>,
    update: DMatrix<f64>,
    gains: DMatrix<f64>,
    iteration: usize,
}

impl TsneStepper {
    pub fn new(affinity: &AffinityMatrix, params: TsneParams, seed: u64) -> Self {
        let n = affinity.n();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, params.init_sd).expect("positive sd");
        // row-major draws: row i takes draws 2i and 2i + 1
        let mut y = DMatrix::zeros(n, 2);
        for i in 0..n {
            for c in 0..2 {
                y[(i, c)] = normal.sample(&mut rng);
            }
        }
        Self::with_init(affinity, params, y).expect("shape matches")
    }

    pub fn with_init(affinity: &AffinityMatrix, params: TsneParams, init: DMatrix<f64>) -> Result<Self, TsneError> {
        let n = affinity.n();
        if init.shape() != (n, 2) {
            return Err(TsneError::InitShape { n });
        }
        Ok(Self {
            p: affinity.p().clone(),
            params,
            y: init,
            update: DMatrix::zeros(n, 2),
            gains: DMatrix::from_element(n, 2, 1.0),
            iteration: 0,
        })
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn kl(&self) -> f64 {
        kl_divergence(&self.p, &self.y)
    }

    pub fn step(&mut self) -> Result<StepStats, TsneError> {
        let prm = &self.params;
        let exaggerated = self.iteration < prm.exaggeration_iterations;
        let p = if exaggerated {
            &self.p * prm.exaggeration
        } else {
            self.p.clone()
        };
        let q_sum = q_matrix(&self.y).sum();
        let grad = gradient(&p, &self.y);
        let momentum = if self.iteration < prm.momentum_switch {
            prm.initial_momentum
        } else {
            prm.final_momentum
        };
        // The learning rate is on the scale of the common reference
        // implementation, whose gradient omits the constant factor 4.
        let step = prm.learning_rate / 4.0;
        for k in 0..grad.len() {
            if prm.gains {
                let same = (grad[k] > 0.0) == (self.update[k] > 0.0);
                self.gains[k] = if same { self.gains[k] * 0.8 } else { self.gains[k] + 0.2 };
                self.gains[k] = self.gains[k].max(prm.min_gain);
            }
            self.update[k] = momentum * self.update[k] - step * self.gains[k] * grad[k];
            self.y[k] += self.update[k];
        }
        for c in 0..2 {
            let mean = ordered_sum(self.y.column(c).iter().copied().collect()) / self.y.nrows() as f64;
            self.y.column_mut(c).add_scalar_mut(-mean);
        }
        self.iteration += 1;
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(TsneError::NumericalOverflow(self.iteration));
        }
        Ok(StepStats {
            iteration: self.iteration,
            q_sum,
            gradient_norm: grad.norm(),
            exaggerated,
        })
    }
}

fn run(mut stepper: TsneStepper, seed: u64) -> Result<Embedding, TsneError> {
    let params = stepper.params.clone();
    let every = params.log_every.max(1);
    let mut trace = Vec::new();
    for _ in 0..params.iterations {
        stepper.step()?;
        let it = stepper.iteration();
        if it % every == 0 || it == params.iterations {
            trace.push((it, stepper.kl()));
        }
    }
    let kl = stepper.kl();
    if !kl.is_finite() {
        return Err(TsneError::NumericalOverflow(stepper.iteration()));
    }
    Ok(Embedding {
        y: stepper.y,
        kl_divergence: kl,
        trace,
        params,
        seed,
    })
}

pub fn embed(affinity: &AffinityMatrix, params: &TsneParams, seed: u64) -> Result<Embedding, TsneError> {
    run(TsneStepper::new(affinity, params.clone(), seed), seed)
}

/// As [`embed`] from a given n x 2 starting layout (e.g. PCA scores).
pub fn embed_from(affinity: &AffinityMatrix, params: &TsneParams, init: DMatrix<f64>) -> Result<Embedding, TsneError> {
    run(TsneStepper::with_init(affinity, params.clone(), init)?, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilateral_is_uniform() {
        let d = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        let a = affinities(&d, 1.5).unwrap_err();
        // with three points each row has two neighbours at equal distance, so
        // every precision gives perplexity 2
        assert_eq!(a, TsneError::PerplexityUnreachable(0));
        let a = affinities(&d, 2.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.0 } else { 1.0 / 6.0 };
                assert!((a.p()[(i, j)] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn perplexity_range() {
        let d = DMatrix::from_fn(4, 4, |i, j| (i as f64 - j as f64).abs());
        assert!(matches!(affinities(&d, 4.0), Err(TsneError::Perplexity { .. })));
        assert!(matches!(affinities(&d, 1.0), Err(TsneError::Perplexity { .. })));
    }

    #[test]
    fn kl_zero_when_q_equals_p() {
        let y = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 2.0, 3.0, 1.0]);
        let p = q_matrix(&y);
        assert!(kl_divergence(&p, &y).abs() < 1e-15);
        assert!(gradient(&p, &y).norm() < 1e-15);
    }
}
