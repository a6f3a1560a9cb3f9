use serde::{Deserialize, Serialize};

use crate::tcm::TcmWeights;

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Option<TcmWeights>,
    v: Option<TcmWeights>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamW {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        let h = AdamHyper::default();
        Self {
            learning_rate,
            weight_decay,
            beta1: h.beta1,
            beta2: h.beta2,
            eps: h.eps,
            step: 0,
            m: None,
            v: None,
        }
    }

    pub fn step(&mut self, weights: &mut TcmWeights, grads: &TcmWeights) {
        self.step += 1;
        let m = self.m.get_or_insert_with(|| TcmWeights::zeros_like(grads));
        let v = self.v.get_or_insert_with(|| TcmWeights::zeros_like(grads));
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let (lr, wd, b1, b2, eps) = (self.learning_rate, self.weight_decay, self.beta1, self.beta2, self.eps);
        for ((((_, w), (_, g)), (_, m)), (_, v)) in weights
            .blocks_mut()
            .into_iter()
            .zip(grads.blocks())
            .zip(m.blocks_mut())
            .zip(v.blocks_mut())
        {
            ndarray::Zip::from(w)
                .and(g)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let update = (*m / bc1) / ((*v / bc2).sqrt() + eps);
                    *w -= lr * (update + wd * *w);
                });
        }
    }
}
