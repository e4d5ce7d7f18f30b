use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{euclidean_distances, mean_silhouette, relabel_by_first_appearance};
use super::{ClusterAssignment, ClusterMethod};
use crate::error::ClusterError;
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iterations: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self {
            restarts: 50,
            max_iterations: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansFit {
    pub assignment: ClusterAssignment,
    /// Row k-1 is the center of cluster k.
    #[serde(with = "crate::serde_matrix")]
    pub centers: DMatrix<f64>,
    pub wss: f64,
    /// WSS after each Lloyd iteration of the winning run.
    pub wss_trace: Vec<f64>,
    /// Index of the winning restart; `restarts` means the supplied warm start.
    pub best_restart: usize,
    /// Times an empty cluster was re-seeded, over all restarts.
    pub empty_repairs: usize,
}

struct Run {
    labels: Vec<usize>,
    centers: DMatrix<f64>,
    wss: f64,
    trace: Vec<f64>,
    repairs: usize,
}

fn sq_dist(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>, c: usize) -> f64 {
    (0..points.ncols())
        .map(|j| (points[(i, j)] - centers[(c, j)]).powi(2))
        .sum()
}

fn nearest(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.nrows() {
        let d = sq_dist(points, i, centers, c);
        // strict: the lowest index wins exact ties
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = points.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n)
        .map(|i| sq_dist(points, i, points, chosen[0]))
        .collect();
    while chosen.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            // every point coincides with a center already
            Err(_) => rng.random_range(0..n),
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points, i, points, next));
        }
    }
    DMatrix::from_fn(k, points.ncols(), |c, j| points[(chosen[c], j)])
}

pub(super) fn seed_centers(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    plus_plus(points, k, rng)
}

pub(super) fn nearest_center(points: &DMatrix<f64>, i: usize, centers: &DMatrix<f64>) -> usize {
    nearest(points, i, centers).0
}

fn update_centers(points: &DMatrix<f64>, labels: &[usize], centers: &mut DMatrix<f64>) {
    let k = centers.nrows();
    let mut sums = DMatrix::<f64>::zeros(k, points.ncols());
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for j in 0..points.ncols() {
            sums[(l, j)] += points[(i, j)];
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for j in 0..points.ncols() {
                centers[(c, j)] = sums[(c, j)] / counts[c] as f64;
            }
        }
    }
}

/// Moves the point farthest from its center (taken from a cluster with at
/// least two members) into each empty cluster.
fn repair_empty(points: &DMatrix<f64>, labels: &mut [usize], centers: &mut DMatrix<f64>) -> usize {
    let k = centers.nrows();
    let mut repairs = 0;
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return repairs;
        };
        let mut far = (usize::MAX, -1.0);
        for i in 0..labels.len() {
            if counts[labels[i]] < 2 {
                continue;
            }
            let d = sq_dist(points, i, centers, labels[i]);
            if d > far.1 {
                far = (i, d);
            }
        }
        labels[far.0] = empty;
        for j in 0..points.ncols() {
            centers[(empty, j)] = points[(far.0, j)];
        }
        repairs += 1;
    }
}

fn wss(points: &DMatrix<f64>, labels: &[usize], centers: &DMatrix<f64>) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(points, i, centers, l))
        .sum()
}

fn lloyd(points: &DMatrix<f64>, mut centers: DMatrix<f64>, max_iterations: usize) -> Run {
    let n = points.nrows();
    let mut labels: Vec<usize> = (0..n).map(|i| nearest(points, i, &centers).0).collect();
    let mut repairs = repair_empty(points, &mut labels, &mut centers);
    update_centers(points, &labels, &mut centers);
    let mut trace = vec![wss(points, &labels, &centers)];
    for _ in 0..max_iterations {
        let mut next: Vec<usize> = (0..n).map(|i| nearest(points, i, &centers).0).collect();
        repairs += repair_empty(points, &mut next, &mut centers);
        if next == labels {
            break;
        }
        labels = next;
        update_centers(points, &labels, &mut centers);
        trace.push(wss(points, &labels, &centers));
    }
    Run {
        wss: *trace.last().unwrap(),
        labels,
        centers,
        trace,
        repairs,
    }
}

fn check_k(n: usize, k: usize) -> Result<(), ClusterError> {
    if n == 0 {
        return Err(ClusterError::Empty);
    }
    if k == 0 || k > n {
        return Err(ClusterError::InvalidK { k, n });
    }
    Ok(())
}

/// Best of `restarts` k-means++ / Lloyd runs by WSS.
pub fn kmeans(points: &DMatrix<f64>, k: usize, restarts: usize, seed: u64) -> Result<KMeansFit, ClusterError> {
    kmeans_with(
        points,
        k,
        seed,
        &KMeansOptions {
            restarts,
            ..KMeansOptions::default()
        },
        None,
    )
}

/// As [`kmeans`], optionally adding one run started from `warm` centers
/// (k x p). Restart r draws its seeding from `derive_seed(seed, r, k)`.
pub fn kmeans_with(
    points: &DMatrix<f64>,
    k: usize,
    seed: u64,
    opts: &KMeansOptions,
    warm: Option<&DMatrix<f64>>,
) -> Result<KMeansFit, ClusterError> {
    check_k(points.nrows(), k)?;
    let restarts = opts.restarts.max(1);
    let mut runs: Vec<Run> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r as u64, k as u64));
            lloyd(points, plus_plus(points, k, &mut rng), opts.max_iterations)
        })
        .collect();
    if let Some(w) = warm {
        if w.shape() == (k, points.ncols()) {
            runs.push(lloyd(points, w.clone(), opts.max_iterations));
        }
    }
    let empty_repairs = runs.iter().map(|r| r.repairs).sum();
    let (best_restart, _) = runs
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (r, run)| if run.wss < acc.1 { (r, run.wss) } else { acc });
    let best = runs.swap_remove(best_restart);

    // renumber by first appearance and permute the centers to match
    let labels = relabel_by_first_appearance(&best.labels);
    let mut centers = best.centers.clone();
    for (old, new) in best.labels.iter().zip(&labels) {
        centers.set_row(new - 1, &best.centers.row(*old));
    }
    Ok(KMeansFit {
        assignment: ClusterAssignment::new(labels, ClusterMethod::KMeans, best.wss)?,
        centers,
        wss: best.wss,
        wss_trace: best.trace,
        best_restart,
        empty_repairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticPoint {
    pub k: usize,
    pub wss: f64,
    pub silhouette: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsCurve {
    pub points: Vec<DiagnosticPoint>,
}

impl DiagnosticsCurve {
    /// K with the largest mean silhouette; the smallest K wins ties.
    pub fn best_silhouette_k(&self) -> Option<usize> {
        self.points
            .iter()
            .fold(None::<&DiagnosticPoint>, |best, p| match best {
                Some(b) if b.silhouette >= p.silhouette => Some(b),
                _ => Some(p),
            })
            .map(|p| p.k)
    }
}

/// WSS and mean silhouette (Euclidean in the given coordinates) for each K in
/// `k_min..=k_max`. Each K also runs a warm start from the previous K's
/// centers plus the point farthest from them, which keeps the WSS curve
/// non-increasing.
pub fn diagnostics(
    points: &DMatrix<f64>,
    k_min: usize,
    k_max: usize,
    restarts: usize,
    seed: u64,
) -> Result<DiagnosticsCurve, ClusterError> {
    let n = points.nrows();
    if k_min < 2 || k_max < k_min || k_max >= n {
        return Err(ClusterError::InvalidK { k: k_max, n });
    }
    let dist = euclidean_distances(points);
    let opts = KMeansOptions {
        restarts,
        ..KMeansOptions::default()
    };
    let mut out = Vec::new();
    let mut prev: Option<KMeansFit> = None;
    for k in k_min..=k_max {
        let warm = prev.as_ref().map(|f| {
            let far = (0..n)
                .map(|i| (i, nearest(points, i, &f.centers).1))
                .fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a })
                .0;
            let mut c = f.centers.clone().insert_row(k - 1, 0.0);
            c.set_row(k - 1, &points.row(far));
            c
        });
        let fit = kmeans_with(points, k, seed, &opts, warm.as_ref())?;
        out.push(DiagnosticPoint {
            k,
            wss: fit.wss,
            silhouette: mean_silhouette(&dist, &fit.assignment.zero_based())?,
        });
        prev = Some(fit);
    }
    Ok(DiagnosticsCurve { points: out })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> DMatrix<f64> {
        let offsets = [(0.0, 0.0), (100.0, 0.0), (0.0, 100.0)];
        let jitter = [(0.1, 0.2), (-0.3, 0.1), (0.2, -0.2), (0.0, 0.3)];
        let mut rows = Vec::new();
        for &(ox, oy) in &offsets {
            for &(jx, jy) in &jitter {
                rows.push([ox + jx, oy + jy]);
            }
        }
        DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j])
    }

    #[test]
    fn separates_blobs_and_labels_by_first_appearance() {
        let fit = kmeans(&blobs(), 3, 10, 1).unwrap();
        let expected: Vec<usize> = (0..12).map(|i| i / 4 + 1).collect();
        assert_eq!(fit.assignment.labels(), expected.as_slice());
        assert!((fit.centers[(1, 0)] - 100.0).abs() < 1.0);
    }

    #[test]
    fn k_equals_n_has_zero_wss() {
        let p = blobs();
        let fit = kmeans(&p, 12, 3, 2).unwrap();
        assert!(fit.wss.abs() < 1e-20);
    }

    #[test]
    fn duplicate_points_with_k_equals_n() {
        let p = DMatrix::from_row_slice(4, 1, &[1.0, 1.0, 1.0, 2.0]);
        let fit = kmeans(&p, 4, 2, 0).unwrap();
        assert_eq!(fit.assignment.k(), 4);
        assert_eq!(fit.wss, 0.0);
    }

    #[test]
    fn rejects_bad_k() {
        assert!(kmeans(&blobs(), 13, 1, 0).is_err());
        assert!(kmeans(&blobs(), 0, 1, 0).is_err());
    }

    #[test]
    fn diagnostics_pick_three() {
        let curve = diagnostics(&blobs(), 2, 6, 10, 3).unwrap();
        assert_eq!(curve.best_silhouette_k(), Some(3));
        for w in curve.points.windows(2) {
            assert!(w[1].wss <= w[0].wss);
        }
    }
}
