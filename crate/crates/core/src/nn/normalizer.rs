use serde::{Deserialize, Serialize};

use super::Tensor;

pub const MIN_STD: f64 = 1e-6;

/// Streaming per-feature mean and variance.
///
/// Partial statistics combine with the pairwise rule of Chan et al., so
/// workers can accumulate independently and be merged in any grouping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNormalizer {
    pub count: f64,
    pub mean: Vec<f64>,
    /// Sum of squared deviations from the mean.
    pub m2: Vec<f64>,
}

impl RunningNormalizer {
    pub fn new(dim: usize) -> Self {
        RunningNormalizer { count: 0.0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0.0 {
            return vec![1.0; self.dim()];
        }
        self.m2.iter().map(|m| (m / self.count).max(0.0)).collect()
    }

    pub fn std(&self) -> Vec<f64> {
        self.variance().into_iter().map(|v| v.sqrt().max(MIN_STD)).collect()
    }

    /// Statistics of a batch of rows, each of length `dim`.
    pub fn from_rows<'a>(dim: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut n = RunningNormalizer::new(dim);
        for row in rows {
            n.count += 1.0;
            for (k, &x) in row.iter().enumerate() {
                let delta = x - n.mean[k];
                n.mean[k] += delta / n.count;
                n.m2[k] += delta * (x - n.mean[k]);
            }
        }
        n
    }

    pub fn merge(&mut self, other: &RunningNormalizer) {
        if other.count == 0.0 {
            return;
        }
        if self.count == 0.0 {
            *self = other.clone();
            return;
        }
        let total = self.count + other.count;
        for k in 0..self.dim() {
            let delta = other.mean[k] - self.mean[k];
            self.mean[k] += delta * other.count / total;
            self.m2[k] += other.m2[k] + delta * delta * self.count * other.count / total;
        }
        self.count = total;
    }

    pub fn update<'a>(&mut self, rows: impl IntoIterator<Item = &'a [f64]>) {
        let batch = RunningNormalizer::from_rows(self.dim(), rows);
        self.merge(&batch);
    }

    /// `(x - mean) / std` per feature; `x` may hold several consecutive vectors.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        let std = self.std();
        let d = self.dim();
        x.iter().enumerate().map(|(i, v)| (v - self.mean[i % d]) / std[i % d]).collect()
    }

    /// Normalizes every row of `x` in place.
    pub fn normalize_rows(&self, x: &mut Tensor) {
        let std = self.std();
        for mut row in x.rows_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[k]) / std[k];
            }
        }
    }
}
