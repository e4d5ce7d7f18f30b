//! Small dense helpers shared by the estimators.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Relative pivot threshold below which a Cholesky factor is treated as singular.
const PIVOT_RTOL: f64 = 1e-12;

/// Mean and sample covariance (denominator `m - 1`) of the listed rows.
pub fn subset_moments(data: &DMatrix<f64>, rows: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let p = data.ncols();
    let m = rows.len() as f64;
    let mut mean = DVector::zeros(p);
    for &i in rows {
        for j in 0..p {
            mean[j] += data[(i, j)];
        }
    }
    mean /= m;
    let mut cov = DMatrix::zeros(p, p);
    let mut centered = DVector::zeros(p);
    for &i in rows {
        for j in 0..p {
            centered[j] = data[(i, j)] - mean[j];
        }
        cov.ger(1.0, &centered, &centered, 1.0);
    }
    if rows.len() > 1 {
        cov /= m - 1.0;
    }
    (mean, cov)
}

/// Cholesky factor of a symmetric matrix, or `None` when it is numerically
/// singular relative to its own diagonal.
pub fn checked_cholesky(a: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(a.clone())?;
    let l = chol.l_dirty();
    for i in 0..a.nrows() {
        let piv = l[(i, i)] * l[(i, i)];
        if !(piv > PIVOT_RTOL * a[(i, i)].abs()) || !piv.is_finite() {
            return None;
        }
    }
    Some(chol)
}

/// Determinant from a Cholesky factor.
pub fn chol_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).product()
}

/// Squared Mahalanobis distances of every row to `center` under the
/// covariance whose Cholesky factor is `chol`.
pub fn mahalanobis_sq(
    data: &DMatrix<f64>,
    center: &DVector<f64>,
    chol: &Cholesky<f64, Dyn>,
) -> Vec<f64> {
    let p = data.ncols();
    let mut buf = DVector::zeros(p);
    (0..data.nrows())
        .map(|i| {
            for j in 0..p {
                buf[j] = data[(i, j)] - center[j];
            }
            let solved = chol
                .l_dirty()
                .solve_lower_triangular(&buf)
                .expect("nonsingular factor");
            solved.norm_squared()
        })
        .collect()
}

/// Indices of the `h` smallest values; ties go to the lower index.
/// Returned sorted ascending by index.
pub fn smallest_indices(values: &[f64], h: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut out = idx[..h].to_vec();
    out.sort_unstable();
    out
}

/// `C(n, k)` saturating at `u64::MAX`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Lexicographic k-combinations of `0..n`.
pub struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        let current = (k <= n).then(|| (0..k).collect());
        Self { n, current }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let k = out.len();
        let mut next = out.clone();
        let mut i = k;
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}
