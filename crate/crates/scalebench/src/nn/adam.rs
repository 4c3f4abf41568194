//! Adam with bias correction; first/second moments are checkpointed with the
//! parameters so resumed runs continue the same trajectory.

use serde::{Deserialize, Serialize};

use super::tape::{Grads, ParamStore};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &ParamStore) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.blocks().iter().map(|b| vec![0.0; b.len()]).collect(),
            v: params.blocks().iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (bi, block) in params.blocks_mut().iter_mut().enumerate() {
            let g = grads.block(super::tape::BlockId(bi));
            let m = &mut self.m[bi];
            let v = &mut self.v[bi];
            for i in 0..block.data.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                block.data[i] -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}
