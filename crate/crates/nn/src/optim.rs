use serde::{Deserialize, Serialize};

use crate::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(5.0),
        }
    }
}

/// Adam with bias correction. Moment buffers are created lazily on the
/// first step and follow parameter order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update from the accumulated gradients and clears them.
    pub fn step(&mut self, store: &mut ParamStore) {
        if self.m.len() != store.len() {
            self.m = store.iter().map(|(_, p)| vec![0.0; p.value.len()]).collect();
            self.v = self.m.clone();
        }
        let c = self.config;
        let scale = match c.clip_norm {
            Some(max) => {
                let norm = store
                    .iter()
                    .filter(|(_, p)| p.trainable)
                    .flat_map(|(_, p)| p.grad.iter())
                    .map(|g| g * g)
                    .sum::<f64>()
                    .sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        self.t += 1;
        let b1t = 1.0 - c.beta1.powi(self.t as i32);
        let b2t = 1.0 - c.beta2.powi(self.t as i32);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if p.trainable {
                let values = p.value.values_mut();
                for k in 0..values.len() {
                    let g = p.grad[k] * scale;
                    m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
                    v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
                    values[k] -= c.lr * (m[k] / b1t) / ((v[k] / b2t).sqrt() + c.eps);
                }
            }
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Graph, Tensor};

    #[test]
    fn minimizes_a_quadratic() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(3.0)).unwrap();
        let mut opt = Adam::new(AdamConfig {
            lr: 0.1,
            ..AdamConfig::default()
        });
        for _ in 0..500 {
            let mut g = Graph::new();
            let x = g.param(&store, w);
            let sq = g.mul(x, x).unwrap();
            g.backward(sq, &mut store).unwrap();
            opt.step(&mut store);
        }
        assert!(store.get(w).value.item().abs() < 1e-2);
    }
}
