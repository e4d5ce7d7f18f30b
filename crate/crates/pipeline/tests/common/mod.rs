#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const PER_BLOB: usize = 10;
pub const PARTS: usize = 8;

/// Three well separated groups of entities. Parts 1-4 follow one latent
/// factor and parts 5-8 another, so the components form two tight groups
/// as well. Returns the CSV text and the true group of each entity.
pub fn blob_csv(seed: u64, missing: &[(usize, usize)]) -> (String, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factor = Normal::new(0.0, 0.15).unwrap();
    let noise = Normal::new(0.0, 0.03).unwrap();
    let means = [(0.0, 0.0), (3.0, 0.0), (0.0, 3.0)];
    let weights: [f64; PARTS] = [1.0, 1.1, 0.9, 1.2, 1.0, 0.8, 1.15, 0.95];
    let mut text = String::from("entity_id");
    for j in 0..PARTS {
        text.push_str(&format!(",p{}", j + 1));
    }
    text.push('\n');
    let mut truth = Vec::new();
    for (b, (m1, m2)) in means.iter().enumerate() {
        for e in 0..PER_BLOB {
            let i = b * PER_BLOB + e;
            let f1 = m1 + factor.sample(&mut rng);
            let f2 = m2 + factor.sample(&mut rng);
            text.push_str(&format!("E{:02}", i + 1));
            for (j, w) in weights.iter().enumerate() {
                let latent = if j < 4 { f1 } else { f2 };
                let v = (w * latent + noise.sample(&mut rng) + 2.0).exp();
                if missing.contains(&(i, j)) {
                    text.push(',');
                } else {
                    text.push_str(&format!(",{v:.6}"));
                }
            }
            text.push('\n');
            truth.push(b + 1);
        }
    }
    (text, truth)
}

pub const MISSING: [(usize, usize); 3] = [(2, 1), (13, 5), (25, 6)];

pub fn default_config(table: &str, extra: &str) -> String {
    format!(
        r#"[input]
table = "{table}"

[impute]
repetitions = 5

[rmode]
k = 3
restarts = 10
k_max = 5

[qmode]
k = 2

[tsne]
perplexity = 5.0
iterations = 300
{extra}
"#
    )
}

/// Writes the blob table and a config into `dir`; returns the config path.
pub fn blob_fixture(dir: &Path, extra: &str) -> (PathBuf, Vec<usize>) {
    let (csv, truth) = blob_csv(7, &MISSING);
    fs::write(dir.join("table.csv"), csv).unwrap();
    let config = dir.join("config.toml");
    fs::write(&config, default_config("table.csv", extra)).unwrap();
    (config, truth)
}
