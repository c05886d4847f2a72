//! RBF kernel over a subset of training rows, with a row cache.

use std::collections::HashMap;

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    // Four accumulators keep the reduction order fixed and vectorisable.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = k * 4;
        acc[0] += a[i] as f64 * b[i] as f64;
        acc[1] += a[i + 1] as f64 * b[i + 1] as f64;
        acc[2] += a[i + 2] as f64 * b[i + 2] as f64;
        acc[3] += a[i + 3] as f64 * b[i + 3] as f64;
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        tail += a[i] as f64 * b[i] as f64;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn squared_norm(a: &[f32]) -> f64 {
    dot(a, a)
}

/// `exp(-gamma * |a - b|^2)` from precomputed squared norms.
pub fn rbf(gamma: f64, a: &[f32], a_norm: f64, b: &[f32], b_norm: f64) -> f64 {
    let d2 = (a_norm + b_norm - 2.0 * dot(a, b)).max(0.0);
    (-gamma * d2).exp()
}

/// Kernel matrix restricted to `rows` of a feature table.
pub struct KernelMatrix<'a> {
    features: &'a [Vec<f32>],
    norms: &'a [f64],
    rows: Vec<usize>,
    gamma: f64,
    cache: HashMap<usize, Vec<f64>>,
    max_cached_rows: usize,
}

impl<'a> KernelMatrix<'a> {
    pub fn new(features: &'a [Vec<f32>], norms: &'a [f64], rows: Vec<usize>, gamma: f64) -> Self {
        // Roughly 256 MiB of cached rows.
        let max_cached_rows = ((256usize << 20) / (8 * rows.len().max(1))).max(2);
        Self { features, norms, rows, gamma, cache: HashMap::new(), max_cached_rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Row `i` of the kernel matrix (local indices).
    pub fn row(&mut self, i: usize) -> &[f64] {
        if !self.cache.contains_key(&i) {
            if self.cache.len() >= self.max_cached_rows {
                self.cache.clear();
            }
            let gi = self.rows[i];
            let xi = &self.features[gi];
            let ni = self.norms[gi];
            let row = self
                .rows
                .iter()
                .map(|&gj| rbf(self.gamma, xi, ni, &self.features[gj], self.norms[gj]))
                .collect();
            self.cache.insert(i, row);
        }
        &self.cache[&i]
    }
}
