//! First-order optimizers over groups of flat parameter slices.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(group_sizes: &[usize]) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (gi, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[gi], &mut self.v[gi]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + self.eps);
            }
        }
    }
}

/// SGD with classical momentum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Momentum {
    pub mu: f64,
    vel: Vec<Vec<f64>>,
}

impl Momentum {
    pub fn new(group_sizes: &[usize], mu: f64) -> Self {
        Self {
            mu,
            vel: group_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], lr: f64) {
        for (gi, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let vel = &mut self.vel[gi];
            for i in 0..p.len() {
                vel[i] = self.mu * vel[i] + g[i];
                p[i] -= lr * vel[i];
            }
        }
    }
}

/// Cosine decay from `lr` at step 0 to `lr * floor` at the last step.
pub fn cosine_lr(lr: f64, floor: f64, step: usize, total: usize) -> f64 {
    if total <= 1 {
        return lr;
    }
    let p = step as f64 / (total - 1) as f64;
    lr * (floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * p).cos()))
}
