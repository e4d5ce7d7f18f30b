//! Log-ratio primitives on plain slices of strictly positive parts.
//!
//! These functions assume their input has already been validated (every part
//! finite and `> 0`); the typed wrappers in [`crate::composition`] enforce
//! that. They are exposed so that the iterative stages (imputation, distance
//! matrices) can run without re-validating on every call.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::CodaError;

/// Rescales a positive vector to unit sum.
pub fn close(parts: &[f64]) -> Vec<f64> {
    let total: f64 = parts.iter().sum();
    parts.iter().map(|p| p / total).collect()
}

/// Centered log-ratio coefficients `ln(x_i / g(x))`.
pub fn clr(parts: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = parts.iter().map(|p| p.ln()).collect();
    let mean = logs.iter().sum::<f64>() / logs.len() as f64;
    logs.into_iter().map(|l| l - mean).collect()
}

/// Inverse of [`clr`]: exponentiate and close.
pub fn clr_inverse(coefs: &[f64]) -> Vec<f64> {
    // shift by the max so exp never overflows; closure removes the factor
    let max = coefs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = coefs.iter().map(|c| (c - max).exp()).collect();
    close(&raw)
}

/// Additive log-ratio coordinates `ln(x_j / x_ref)` for every `j != reference`.
pub fn alr(parts: &[f64], reference: usize) -> Vec<f64> {
    let denom = parts[reference].ln();
    parts
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != reference)
        .map(|(_, p)| p.ln() - denom)
        .collect()
}

/// Euclidean norm of the clr difference.
pub fn aitchison_distance(a: &[f64], b: &[f64]) -> f64 {
    let ca = clr(a);
    let cb = clr(b);
    ca.iter()
        .zip(&cb)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Aitchison distance restricted to the components listed in `subset`.
///
/// This is the distance between the two subcompositions, used when rows have
/// missing cells and only the jointly observed parts are comparable.
pub fn aitchison_distance_on(a: &[f64], b: &[f64], subset: &[usize]) -> f64 {
    let sa: Vec<f64> = subset.iter().map(|&j| a[j]).collect();
    let sb: Vec<f64> = subset.iter().map(|&j| b[j]).collect();
    aitchison_distance(&sa, &sb)
}

/// Ordered pivot sequence defining an orthonormal (pivot balance) ilr basis.
///
/// Coordinate `j` (0-based) contrasts part `order[j]` against the geometric
/// mean of the parts `order[j+1..]`:
///
/// `z_j = sqrt((D-j-1)/(D-j)) * ln( x[order[j]] / gm(x[order[j+1]], ..., x[order[D-1]]) )`
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PivotBasis {
    order: Vec<usize>,
}

impl PivotBasis {
    /// Pivots taken in column order `0, 1, ..., D-1`.
    pub fn sequential(parts: usize) -> Self {
        Self {
            order: (0..parts).collect(),
        }
    }

    /// Column `first` becomes the first pivot; the rest follow in column order.
    ///
    /// The first coordinate then carries all the relative information about
    /// `first` and the remaining coordinates do not depend on it at all.
    pub fn with_first(parts: usize, first: usize) -> Self {
        let mut order = Vec::with_capacity(parts);
        order.push(first);
        order.extend((0..parts).filter(|&j| j != first));
        Self { order }
    }

    pub fn from_order(order: Vec<usize>) -> Result<Self, CodaError> {
        let d = order.len();
        if d < 2 {
            return Err(CodaError::TooFewParts { parts: d });
        }
        let mut seen = vec![false; d];
        for &o in &order {
            if o >= d || seen[o] {
                return Err(CodaError::InvalidBasis(format!(
                    "pivot order {order:?} is not a permutation of 0..{d}"
                )));
            }
            seen[o] = true;
        }
        Ok(Self { order })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Number of parts `D`.
    pub fn parts(&self) -> usize {
        self.order.len()
    }

    /// Number of coordinates `D - 1`.
    pub fn dim(&self) -> usize {
        self.order.len() - 1
    }

    fn weight(&self, j: usize) -> f64 {
        let rest = (self.parts() - j - 1) as f64;
        (rest / (rest + 1.0)).sqrt()
    }

    /// ilr coordinates of one composition (length `D - 1`).
    pub fn coords(&self, parts: &[f64]) -> Vec<f64> {
        let d = self.parts();
        debug_assert_eq!(parts.len(), d);
        let logs: Vec<f64> = self.order.iter().map(|&o| parts[o].ln()).collect();
        // suffix sums of the pivoted logs
        let mut suffix = vec![0.0; d + 1];
        for j in (0..d).rev() {
            suffix[j] = suffix[j + 1] + logs[j];
        }
        (0..d - 1)
            .map(|j| {
                let tail_mean = suffix[j + 1] / (d - j - 1) as f64;
                self.weight(j) * (logs[j] - tail_mean)
            })
            .collect()
    }

    /// D x (D-1) contrast matrix `V` with `clr = V z` and `z = V^T clr`.
    pub fn contrast(&self) -> DMatrix<f64> {
        let d = self.parts();
        let mut v = DMatrix::zeros(d, d - 1);
        for j in 0..d - 1 {
            let rest = (d - j - 1) as f64;
            let w = self.weight(j);
            v[(self.order[j], j)] = w;
            for &o in &self.order[j + 1..] {
                v[(o, j)] = -w / rest;
            }
        }
        v
    }

    /// clr coefficients corresponding to ilr coordinates `z`.
    pub fn clr_from_coords(&self, z: &[f64]) -> Vec<f64> {
        let d = self.parts();
        let mut out = vec![0.0; d];
        for (j, &zj) in z.iter().enumerate() {
            let rest = (d - j - 1) as f64;
            let w = self.weight(j);
            out[self.order[j]] += w * zj;
            for &o in &self.order[j + 1..] {
                out[o] -= w * zj / rest;
            }
        }
        out
    }

    /// Closed composition with the given ilr coordinates.
    pub fn inverse(&self, z: &[f64]) -> Result<Vec<f64>, CodaError> {
        if z.len() != self.dim() {
            return Err(CodaError::BasisMismatch {
                expected: self.dim(),
                found: z.len(),
            });
        }
        Ok(clr_inverse(&self.clr_from_coords(z)))
    }
}

/// Column-wise geometric means of a strictly positive n x D matrix, closed.
pub fn closed_geometric_center(data: &DMatrix<f64>) -> Vec<f64> {
    let n = data.nrows() as f64;
    let gm: Vec<f64> = data
        .column_iter()
        .map(|col| (col.iter().map(|x| x.ln()).sum::<f64>() / n).exp())
        .collect();
    close(&gm)
}

/// Sample variance (denominator `n - 1`) of the series `ln(x_ij / x_ik)`.
pub fn logratio_variance(data: &DMatrix<f64>, j: usize, k: usize) -> f64 {
    let n = data.nrows();
    let z: Vec<f64> = (0..n).map(|i| (data[(i, j)] / data[(i, k)]).ln()).collect();
    let mean = z.iter().sum::<f64>() / n as f64;
    z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
}
