use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use rand::Rng as _;

/// One level of the residual quantizer, learned by exponential moving averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    /// 1-based level.
    pub level: usize,
    pub dim: usize,
    /// `size x dim` entries, row-major.
    pub entries: Vec<f64>,
    /// EMA cluster sizes.
    pub usage: Vec<f64>,
    /// EMA sums of assigned vectors, `size x dim`.
    pub accum: Vec<f64>,
}

impl Codebook {
    pub fn new(level: usize, size: usize, dim: usize) -> Self {
        Self {
            level,
            dim,
            entries: vec![0.0; size * dim],
            usage: vec![0.0; size],
            accum: vec![0.0; size * dim],
        }
    }

    pub fn from_entries(level: usize, dim: usize, entries: Vec<Vec<f64>>) -> Result<Self> {
        if entries.len() < 2 || entries.iter().any(|e| e.len() != dim) {
            return Err(Error::ShapeMismatch(format!("codebook needs >= 2 entries of dimension {dim}")));
        }
        let size = entries.len();
        let flat: Vec<f64> = entries.into_iter().flatten().collect();
        Ok(Self {
            level,
            dim,
            accum: flat.clone(),
            entries: flat,
            usage: vec![1.0; size],
        })
    }

    pub fn size(&self) -> usize {
        self.usage.len()
    }

    pub fn entry(&self, k: usize) -> &[f64] {
        &self.entries[k * self.dim..(k + 1) * self.dim]
    }

    /// Seeds the entries with vectors drawn (with replacement) from `samples`.
    pub fn init_from(&mut self, samples: &[Vec<f64>], rng: &mut Rng) {
        if samples.is_empty() {
            return;
        }
        for k in 0..self.size() {
            let s = &samples[rng.random_range(0..samples.len())];
            self.entries[k * self.dim..(k + 1) * self.dim].copy_from_slice(s);
            self.accum[k * self.dim..(k + 1) * self.dim].copy_from_slice(s);
            self.usage[k] = 1.0;
        }
    }

    /// EMA update from the vectors assigned in one batch, followed by
    /// reinitialization of entries whose usage fell below `dead_floor`.
    pub fn ema_update(&mut self, vectors: &[Vec<f64>], assigned: &[usize], decay: f64, dead_floor: f64, rng: &mut Rng) {
        let (c, d) = (self.size(), self.dim);
        let mut counts = vec![0.0; c];
        let mut sums = vec![0.0; c * d];
        for (v, &k) in vectors.iter().zip(assigned) {
            counts[k] += 1.0;
            for (s, x) in sums[k * d..(k + 1) * d].iter_mut().zip(v) {
                *s += x;
            }
        }
        for k in 0..c {
            self.usage[k] = decay * self.usage[k] + (1.0 - decay) * counts[k];
        }
        for (a, s) in self.accum.iter_mut().zip(&sums) {
            *a = decay * *a + (1.0 - decay) * s;
        }
        // Laplace-smoothed cluster sizes keep the division well defined.
        let eps = 1e-5;
        let total: f64 = self.usage.iter().sum();
        for k in 0..c {
            let n = (self.usage[k] + eps) / (total + c as f64 * eps) * total;
            for i in 0..d {
                self.entries[k * d + i] = self.accum[k * d + i] / n;
            }
        }
        if vectors.is_empty() {
            return;
        }
        for k in 0..c {
            if self.usage[k] < dead_floor {
                let v = &vectors[rng.random_range(0..vectors.len())];
                self.entries[k * d..(k + 1) * d].copy_from_slice(v);
                self.accum[k * d..(k + 1) * d].copy_from_slice(v);
                self.usage[k] = 1.0;
            }
        }
    }
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the entry closest to `v` in squared Euclidean distance; ties
/// go to the lowest index.
pub fn nearest_code(v: &[f64], cb: &Codebook) -> usize {
    debug_assert_eq!(v.len(), cb.dim);
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for k in 0..cb.size() {
        let d = squared_distance(v, cb.entry(k));
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}
