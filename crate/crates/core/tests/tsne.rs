use coda::cluster::{euclidean_distances, mean_silhouette};
use coda::tsne::{affinities, embed, embed_from, gradient, kl_divergence, q_matrix, AffinityMatrix, TsneParams, TsneStepper};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn random_points(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, p, |_, _| rng.random_range(-2.0..2.0))
}

fn two_clusters(per: usize, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    // within-cluster distances around 1.4, between-cluster around 14
    let pts = DMatrix::from_fn(2 * per, 3, |i, j| normal.sample(&mut rng) + if i >= per && j == 0 { 14.0 } else { 0.0 });
    (pts, (0..2 * per).map(|i| i / per).collect())
}

#[test]
fn gradient_matches_finite_differences() {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let x = random_points(7, 3, seed);
        let p = affinities(&euclidean_distances(&x), 3.0).unwrap();
        let y = random_points(7, 2, seed + 100);
        let g = gradient(p.p(), &y);
        let h = 1e-6;
        for k in 0..y.len() {
            let (mut up, mut down) = (y.clone(), y.clone());
            up[k] += h;
            down[k] -= h;
            let fd = (kl_divergence(p.p(), &up) - kl_divergence(p.p(), &down)) / (2.0 * h);
            worst = worst.max((fd - g[k]).abs() / g.amax());
        }
    }
    assert!(worst < 1e-5, "{worst}");
}

#[test]
fn q_sums_to_one_every_iteration() {
    let x = random_points(20, 4, 1);
    let p = affinities(&euclidean_distances(&x), 5.0).unwrap();
    let params = TsneParams {
        iterations: 400,
        ..TsneParams::default()
    };
    let mut stepper = TsneStepper::new(&p, params, 3);
    for it in 1..=400 {
        let stats = stepper.step().unwrap();
        assert_eq!(stats.iteration, it);
        assert_eq!(stats.exaggerated, it <= 250);
        assert!((stats.q_sum - 1.0).abs() < 1e-10);
        assert!(q_matrix(stepper.y()).iter().enumerate().all(|(k, v)| k % 21 == 0 || *v > 0.0));
    }
}

#[test]
fn rows_hit_target_entropy() {
    let x = random_points(30, 5, 2);
    let d = euclidean_distances(&x);
    for perplexity in [2.0, 5.0, 10.0, 25.0] {
        let a = affinities(&d, perplexity).unwrap();
        // rebuild each conditional from the reported bandwidth
        for i in 0..30 {
            let s = a.sigmas()[i];
            let w: Vec<f64> = (0..30)
                .map(|j| if j == i { 0.0 } else { (-d[(i, j)].powi(2) / (2.0 * s * s)).exp() })
                .collect();
            let z: f64 = w.iter().sum();
            let h: f64 = w.iter().filter(|v| **v > 0.0).map(|v| -(v / z) * (v / z).log2()).sum();
            assert!((h - perplexity.log2()).abs() < 1e-5, "row {i}: {h}");
        }
        let p = a.p();
        assert!((p.sum() - 1.0).abs() < 1e-10);
        assert!((p - p.transpose()).amax() == 0.0);
        assert!((0..30).all(|i| p[(i, i)] == 0.0));
    }
}

#[test]
fn affinities_ignore_distance_scale() {
    let x = random_points(15, 3, 4);
    let d = euclidean_distances(&x);
    let base = affinities(&d, 4.0).unwrap();
    for lambda in [0.1, 10.0] {
        let scaled = affinities(&(&d * lambda), 4.0).unwrap();
        assert!((scaled.p() - base.p()).amax() < 1e-12);
    }
}

#[test]
fn separated_clusters_stay_separated() {
    let (pts, labels) = two_clusters(15, 5);
    let p = affinities(&euclidean_distances(&pts), 8.0).unwrap();
    let e = embed(&p, &TsneParams::default(), 20221).unwrap();
    assert!(e.y.iter().all(|v| v.is_finite()));
    let s = mean_silhouette(&euclidean_distances(&e.y), &labels).unwrap();
    assert!(s > 0.8, "{s}");
}

#[test]
fn kl_trace_behaves() {
    let x = random_points(25, 4, 6);
    let p = affinities(&euclidean_distances(&x), 6.0).unwrap();
    let params = TsneParams {
        log_every: 1,
        ..TsneParams::default()
    };
    let e = embed(&p, &params, 7).unwrap();
    assert!(e.trace.iter().all(|(_, kl)| kl.is_finite() && *kl >= 0.0));
    let kl_at = |it: usize| e.trace[it - 1].1;
    // the first iteration sees an almost collapsed layout with uniform q
    assert!(kl_at(1000) < kl_at(1));
    // after exaggeration, each 100-iteration window ends no higher than it began
    for start in 251..=900 {
        assert!(kl_at(start + 100) <= kl_at(start) + 1e-9, "window at {start}");
    }
    assert_eq!(e.kl_divergence, kl_at(1000));
}

#[test]
fn kl_ignores_rotation() {
    let x = random_points(10, 3, 8);
    let p = affinities(&euclidean_distances(&x), 4.0).unwrap();
    let y = random_points(10, 2, 9);
    let (c, s) = (0.7f64.cos(), 0.7f64.sin());
    let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    let turned = &y * rot;
    assert!((kl_divergence(p.p(), &y) - kl_divergence(p.p(), &turned)).abs() < 1e-12);
}

#[test]
fn permuting_points_permutes_embedding() {
    let x = random_points(12, 3, 10);
    let p = affinities(&euclidean_distances(&x), 4.0).unwrap();
    let init = random_points(12, 2, 11) * 1e-4;
    let perm = [3, 7, 0, 11, 5, 1, 9, 2, 10, 4, 8, 6];
    let params = TsneParams::default();
    let a = embed_from(&p, &params, init.clone()).unwrap();
    let moved_init = DMatrix::from_fn(12, 2, |i, c| init[(perm[i], c)]);
    let b = embed_from(&p.permuted(&perm), &params, moved_init).unwrap();
    // every reduction is order independent, so the match is exact
    assert_eq!(b.y, DMatrix::from_fn(12, 2, |i, c| a.y[(perm[i], c)]));
    assert_eq!(a.kl_divergence, b.kl_divergence);
}

#[test]
fn joint_matrix_validation() {
    let good = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
    assert!(AffinityMatrix::from_joint(good).is_ok());
    let lopsided = DMatrix::from_row_slice(2, 2, &[0.0, 0.6, 0.4, 0.0]);
    assert!(AffinityMatrix::from_joint(lopsided).is_err());
}

#[test]
fn same_seed_same_embedding() {
    let x = random_points(10, 3, 12);
    let p = affinities(&euclidean_distances(&x), 3.0).unwrap();
    let params = TsneParams {
        iterations: 200,
        ..TsneParams::default()
    };
    assert_eq!(embed(&p, &params, 1).unwrap(), embed(&p, &params, 1).unwrap());
}
