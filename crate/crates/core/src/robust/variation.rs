//! Robust variation matrix from per-pair univariate MCD scales.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::mcd::{default_h, mcd_univariate};
use crate::composition::{CompositionTable, VariationMatrix, VariationMethod};
use crate::error::{CodaError, RobustError};

/// Quantile of the chi-square(1) distribution used as the rejection cutoff.
const REWEIGHT_QUANTILE: f64 = 0.975;
const MAX_REWEIGHT_STEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustVariationOptions {
    /// MCD subset size; `None` means `ceil(0.75 n)`.
    pub h: Option<usize>,
    /// Iterate hard-rejection reweighting from the MCD start until the
    /// retained set is stable. With `false` the raw MCD variance is used.
    pub reweight: bool,
}

impl Default for RobustVariationOptions {
    fn default() -> Self {
        Self {
            h: None,
            reweight: true,
        }
    }
}

/// Robust location and variance of a univariate series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnivariateScale {
    pub location: f64,
    pub variance: f64,
    /// Observations carrying weight in the final estimate.
    pub retained: usize,
}

/// Raw MCD variance (consistency corrected), optionally followed by
/// reweighting to a fixed point: keep the points whose squared standardized
/// distance is below the 97.5% chi-square(1) quantile, recompute mean and
/// variance on them with the matching consistency factor, and repeat.
pub fn robust_scale(series: &[f64], h: usize, reweight: bool) -> Result<UnivariateScale, RobustError> {
    let raw = mcd_univariate(series, h)?;
    let mut location = raw.location[0];
    let mut variance = raw.covariance[(0, 0)];
    let mut retained = h;
    if !reweight || variance <= 0.0 {
        return Ok(UnivariateScale {
            location,
            variance: variance.max(0.0),
            retained,
        });
    }
    let cutoff = ChiSquared::new(1.0).unwrap().inverse_cdf(REWEIGHT_QUANTILE);
    let factor = REWEIGHT_QUANTILE / ChiSquared::new(3.0).unwrap().cdf(cutoff);
    let mut weights: Vec<bool> = Vec::new();
    for _ in 0..MAX_REWEIGHT_STEPS {
        let next: Vec<bool> = series
            .iter()
            .map(|x| (x - location).powi(2) / variance <= cutoff)
            .collect();
        if next == weights {
            break;
        }
        let kept: Vec<f64> = series
            .iter()
            .zip(&next)
            .filter(|(_, &w)| w)
            .map(|(x, _)| *x)
            .collect();
        if kept.len() < 2 {
            break;
        }
        let m = kept.iter().sum::<f64>() / kept.len() as f64;
        let v = kept.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (kept.len() - 1) as f64 * factor;
        if v <= 0.0 {
            break;
        }
        location = m;
        variance = v;
        retained = kept.len();
        weights = next;
    }
    Ok(UnivariateScale {
        location,
        variance,
        retained,
    })
}

pub fn variation_matrix_robust(table: &CompositionTable) -> Result<VariationMatrix, RobustError> {
    variation_matrix_robust_with(table, &RobustVariationOptions::default())
}

/// Each entry `t_jk` is the robust variance of `ln(x_ij / x_ik)`.
pub fn variation_matrix_robust_with(
    table: &CompositionTable,
    opts: &RobustVariationOptions,
) -> Result<VariationMatrix, RobustError> {
    let n = table.nrows();
    if n <= 2 {
        return Err(CodaError::InsufficientRows {
            rows: n,
            required: 3,
        }
        .into());
    }
    let h = opts.h.unwrap_or_else(|| default_h(n, 1));
    let data = table.data();
    let d = table.nparts();
    let mut values = DMatrix::zeros(d, d);
    for j in 0..d {
        for k in j + 1..d {
            let series: Vec<f64> = (0..n).map(|i| (data[(i, j)] / data[(i, k)]).ln()).collect();
            let t = robust_scale(&series, h, opts.reweight)?.variance;
            values[(j, k)] = t;
            values[(k, j)] = t;
        }
    }
    Ok(VariationMatrix::new(values, VariationMethod::Robust, table.labels().to_vec())?)
}
