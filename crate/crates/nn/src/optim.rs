//! Adam optimizer over a network's parameter visit order.

use crate::layers::Param;
use crate::network::Network;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub step: u64,
    /// First and second moments, one pair per parameter array.
    pub moments: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            step: 0,
            moments: Vec::new(),
        }
    }

    fn update(&mut self, idx: usize, p: &mut Param) {
        if self.moments.len() <= idx {
            self.moments.push((vec![0.0; p.value.len()], vec![0.0; p.value.len()]));
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let (m, v) = &mut self.moments[idx];
        for i in 0..p.value.len() {
            let g = p.grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            p.value[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
        }
    }

    /// One update from the gradients currently accumulated in `net`.
    pub fn step(&mut self, net: &mut dyn Network) {
        self.step += 1;
        let mut idx = 0;
        net.visit_params(&mut |p| {
            self.update(idx, p);
            idx += 1;
        });
    }
}
