use std::collections::BTreeSet;

use coda::cluster::{
    adjusted_rand_index, diagnostics, divisive_hierarchical, euclidean_distances, gmm_em, kmeans, mean_silhouette,
    silhouette, ward_linkage, ClusterAssignment, ClusterMethod,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("p{i}")).collect()
}

/// Gaussian blobs of `per` points around each center with spread `sd`.
fn blobs(centers: &[Vec<f64>], per: usize, sd: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sd).unwrap();
    let p = centers[0].len();
    let rows: Vec<f64> = centers
        .iter()
        .flat_map(|c| (0..per).flat_map(|_| c.clone()).collect::<Vec<_>>())
        .map(|v| v + normal.sample(&mut rng))
        .collect();
    DMatrix::from_row_slice(centers.len() * per, p, &rows)
}

fn wss(points: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let groups: BTreeSet<usize> = labels.iter().copied().collect();
    groups
        .iter()
        .map(|&g| {
            let rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == g).collect();
            (0..points.ncols())
                .map(|j| {
                    let m = rows.iter().map(|&i| points[(i, j)]).sum::<f64>() / rows.len() as f64;
                    rows.iter().map(|&i| (points[(i, j)] - m).powi(2)).sum::<f64>()
                })
                .sum::<f64>()
        })
        .sum()
}

#[test]
fn separated_clouds_split_perfectly() {
    let pts = blobs(&[vec![0.0, 0.0], vec![100.0, 0.0]], 20, 1.0, 1);
    let fit = kmeans(&pts, 2, 10, 3).unwrap();
    let labels = fit.assignment.labels();
    assert!(labels[..20].iter().all(|&l| l == labels[0]));
    assert!(labels[20..].iter().all(|&l| l == labels[20]));
    assert_ne!(labels[0], labels[20]);
    let s = mean_silhouette(&euclidean_distances(&pts), &fit.assignment.zero_based()).unwrap();
    assert!(s > 0.9, "{s}");
    assert!((fit.wss - wss(&pts, labels)).abs() < 1e-9 * fit.wss);
}

#[test]
fn one_cluster_per_point_has_zero_wss() {
    let pts = blobs(&[vec![0.0, 0.0, 0.0]], 9, 1.0, 2);
    let fit = kmeans(&pts, 9, 5, 0).unwrap();
    assert_eq!(fit.wss, 0.0);
    assert_eq!(fit.assignment.k(), 9);
}

#[test]
fn kmeans_is_deterministic() {
    let pts = blobs(&[vec![0.0, 0.0], vec![3.0, 1.0], vec![1.0, 4.0]], 15, 1.0, 4);
    assert_eq!(kmeans(&pts, 3, 20, 8).unwrap(), kmeans(&pts, 3, 20, 8).unwrap());
}

#[test]
fn wss_and_loglik_are_monotone() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(2..=4);
        let centers: Vec<Vec<f64>> = (0..k).map(|_| (0..3).map(|_| rng.random_range(-4.0..4.0)).collect()).collect();
        let pts = blobs(&centers, 20, 1.0, seed + 1000);
        let fit = kmeans(&pts, k, 5, seed).unwrap();
        for w in fit.wss_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "seed {seed}: WSS rose {w:?}");
        }
        let gmm = gmm_em(&pts, k, seed).unwrap();
        for w in gmm.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "seed {seed}: log-likelihood fell {w:?}");
        }
    }
}

#[test]
fn relabeling_preserves_scores() {
    let pts = blobs(&[vec![0.0, 0.0], vec![5.0, 0.0], vec![0.0, 5.0]], 10, 1.0, 5);
    let fit = kmeans(&pts, 3, 10, 1).unwrap();
    let labels = fit.assignment.zero_based();
    let permuted: Vec<usize> = labels.iter().map(|&l| [2, 0, 1][l]).collect();
    let dist = euclidean_distances(&pts);
    let truth: Vec<usize> = (0..30).map(|i| i / 10).collect();
    assert!((wss(&pts, &labels) - wss(&pts, &permuted)).abs() < 1e-12);
    assert_eq!(silhouette(&dist, &labels).unwrap(), silhouette(&dist, &permuted).unwrap());
    assert_eq!(
        adjusted_rand_index(&labels, &truth).unwrap(),
        adjusted_rand_index(&permuted, &truth).unwrap()
    );
}

proptest! {
    #[test]
    fn silhouette_is_bounded(raw in prop::collection::vec(-5.0f64..5.0, 24), labels in prop::collection::vec(0usize..3, 12)) {
        let pts = DMatrix::from_row_slice(12, 2, &raw);
        let dist = euclidean_distances(&pts);
        if let Ok(s) = silhouette(&dist, &labels) {
            prop_assert!(s.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn ari_is_label_symmetric(a in prop::collection::vec(0usize..4, 15), b in prop::collection::vec(0usize..4, 15)) {
        let renamed: Vec<usize> = a.iter().map(|&l| (l + 1) % 4).collect();
        let x = adjusted_rand_index(&a, &b).unwrap();
        let y = adjusted_rand_index(&renamed, &b).unwrap();
        prop_assert!((x - y).abs() < 1e-12);
        prop_assert!((adjusted_rand_index(&b, &a).unwrap() - x).abs() < 1e-12);
    }
}

#[test]
fn equidistant_point_scores_zero() {
    // point 2 sits midway between the two clusters
    let pts = DMatrix::from_row_slice(5, 1, &[0.0, 0.0, 1.0, 2.0, 2.0]);
    let s = silhouette(&euclidean_distances(&pts), &[0, 0, 0, 1, 1]).unwrap();
    assert!(s[2].abs() < 1e-15);
}

#[test]
fn assignment_needs_every_id() {
    assert!(ClusterAssignment::new(vec![1, 3, 3], ClusterMethod::KMeans, 0.0).is_err());
    assert!(ClusterAssignment::new(vec![2, 1, 2], ClusterMethod::KMeans, 0.0).is_ok());
}

#[test]
fn gmm_single_component_matches_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = 200;
    let pts = DMatrix::from_fn(n, 3, |_, j| normal.sample(&mut rng) * (j + 1) as f64 + j as f64);
    let fit = gmm_em(&pts, 1, 0).unwrap();
    assert!(!fit.diagonal_fallback);
    for a in 0..3 {
        let ma = pts.column(a).mean();
        assert!((fit.means[0][a] - ma).abs() < 1e-8);
        for b in 0..3 {
            let mb = pts.column(b).mean();
            let cov = (0..n).map(|i| (pts[(i, a)] - ma) * (pts[(i, b)] - mb)).sum::<f64>() / n as f64;
            assert!((fit.covariances[0][a][b] - cov).abs() < 1e-8);
        }
    }
}

#[test]
fn gmm_recovers_two_means() {
    let truth = [vec![0.0, 0.0], vec![8.0, 3.0]];
    let per = 150;
    let pts = blobs(&truth, per, 1.0, 7);
    let fit = gmm_em(&pts, 2, 2).unwrap();
    let se = 1.0 / (per as f64).sqrt();
    for t in &truth {
        let nearest = fit
            .means
            .iter()
            .map(|m| m.iter().zip(t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min);
        assert!(nearest < 3.0 * se, "{nearest}");
    }
}

#[test]
fn silhouette_peaks_at_three_blobs() {
    let pts = blobs(&[vec![0.0, 0.0], vec![10.0, 0.0], vec![5.0, 9.0]], 12, 1.0, 8);
    let curve = diagnostics(&pts, 2, 6, 20, 1).unwrap();
    assert_eq!(curve.best_silhouette_k(), Some(3));
    for w in curve.points.windows(2) {
        assert!(w[1].wss <= w[0].wss);
    }
}

#[test]
fn single_blob_has_low_silhouette() {
    let pts = blobs(&[vec![0.0, 0.0, 0.0]], 60, 1.0, 9);
    let curve = diagnostics(&pts, 2, 6, 20, 1).unwrap();
    for p in &curve.points {
        assert!(p.silhouette < 0.35, "K={} silhouette {}", p.k, p.silhouette);
    }
}

/// Ultrametric from a tree: distance is the height of the lowest common
/// internal node.
fn ultrametric(n: usize, nodes: &[(Vec<usize>, f64)]) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            return 0.0;
        }
        nodes
            .iter()
            .filter(|(members, _)| members.contains(&i) && members.contains(&j))
            .map(|(_, h)| *h)
            .fold(f64::INFINITY, f64::min)
    })
}

fn topology(nodes: &[(Vec<usize>, f64)]) -> BTreeSet<BTreeSet<usize>> {
    nodes.iter().map(|(m, _)| m.iter().copied().collect()).collect()
}

#[test]
fn divisive_recovers_ultrametric_tree() {
    let nodes = vec![
        (vec![0, 1], 1.0),
        (vec![3, 4], 1.5),
        (vec![2, 3, 4], 3.0),
        (vec![0, 1, 2, 3, 4], 6.0),
        (vec![0, 1, 2, 3, 4, 5], 9.0),
    ];
    let d = ultrametric(6, &nodes);
    let tree = divisive_hierarchical(&d, names(6)).unwrap();
    assert_eq!(tree.clusters(), topology(&nodes));
    // heights are the diameters of the split clusters
    let heights: Vec<f64> = tree.merges().iter().map(|m| m.height).collect();
    assert_eq!(heights, vec![1.0, 1.5, 3.0, 6.0, 9.0]);
}

#[test]
fn divisive_and_ward_agree_on_four_point_ultrametrics() {
    let shapes = [
        vec![(vec![0, 1], 1.0), (vec![2, 3], 2.0), (vec![0, 1, 2, 3], 5.0)],
        vec![(vec![1, 3], 1.0), (vec![0, 1, 3], 2.0), (vec![0, 1, 2, 3], 4.0)],
        vec![(vec![0, 2], 0.5), (vec![1, 3], 0.7), (vec![0, 1, 2, 3], 3.0)],
    ];
    for nodes in &shapes {
        let d = ultrametric(4, nodes);
        let d2 = d.map(|v| v * v);
        let a = divisive_hierarchical(&d, names(4)).unwrap();
        let b = ward_linkage(&d2, names(4)).unwrap();
        assert_eq!(a.clusters(), topology(nodes));
        assert_eq!(b.clusters(), topology(nodes));
    }
}

#[test]
fn ward_heights_never_decrease() {
    for seed in 0..20 {
        let pts = blobs(&[vec![0.0, 0.0, 0.0]], 25, 1.0, seed);
        let d2 = euclidean_distances(&pts).map(|v| v * v);
        let tree = ward_linkage(&d2, names(25)).unwrap();
        for w in tree.merges().windows(2) {
            assert!(w[1].height >= w[0].height);
        }
        assert_eq!(tree.merges().last().unwrap().size, 25);
    }
}

#[test]
fn ward_joins_proportional_pairs_first() {
    // parts 0,1 and 2,3 are proportional pairs
    let t = [[0.0, 0.0, 2.0, 2.0], [0.0, 0.0, 2.0, 2.0], [2.0, 2.0, 0.0, 0.0], [2.0, 2.0, 0.0, 0.0]];
    let d2 = DMatrix::from_fn(4, 4, |i, j| t[i][j]);
    let tree = ward_linkage(&d2, names(4)).unwrap();
    let first: Vec<(usize, usize, f64)> = tree.merges()[..2].iter().map(|m| (m.left, m.right, m.height)).collect();
    assert_eq!(first, vec![(0, 1, 0.0), (2, 3, 0.0)]);
    assert_eq!(tree.cut(2).unwrap(), vec![1, 1, 2, 2]);
    assert_eq!(tree.cut(4).unwrap(), vec![1, 2, 3, 4]);
}

#[test]
fn ward_height_matches_variance_increase() {
    // For Euclidean points, the Lance-Williams Ward height equals twice the
    // increase in within-cluster sum of squares on merging.
    let pts = blobs(&[vec![0.0, 0.0]], 8, 2.0, 12);
    let d2 = euclidean_distances(&pts).map(|v| v * v);
    let tree = ward_linkage(&d2, names(8)).unwrap();
    let mut members: Vec<Vec<usize>> = (0..8).map(|i| vec![i]).collect();
    let ss = |rows: &[usize]| wss(&pts.select_rows(rows), &vec![0; rows.len()]);
    for m in tree.merges() {
        let (a, b) = (members[m.left].clone(), members[m.right].clone());
        let joined: Vec<usize> = a.iter().chain(&b).copied().collect();
        let increase = ss(&joined) - ss(&a) - ss(&b);
        assert!((m.height - 2.0 * increase).abs() < 1e-9 * m.height.max(1.0), "{} vs {}", m.height, 2.0 * increase);
        members.push(joined);
    }
}
