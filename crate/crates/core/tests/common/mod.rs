#![allow(dead_code)]

pub mod oracles;
pub mod suites;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` isotropic Gaussian points around `center` with standard deviation `sd`.
pub fn blob(center: &[f64], sd: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f32>> {
    let normal = Normal::new(0.0, sd).unwrap();
    (0..n).map(|_| center.iter().map(|c| (c + normal.sample(rng)) as f32).collect()).collect()
}

pub fn fixtures_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}
