use serde::{Deserialize, Serialize};

use super::{MlpModel, NeuralError, ParamGrads};
use crate::linalg::shape_err;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
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
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(model: &MlpModel, config: AdamConfig) -> Self {
        let n = model.n_params();
        Self {
            config,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update with an explicit learning rate.
    pub fn step_with_lr(&mut self, model: &mut MlpModel, grads: &ParamGrads, lr: f64) -> Result<(), NeuralError> {
        if self.m.len() != model.n_params() {
            return Err(shape_err("adam_step", self.m.len(), model.n_params()).into());
        }
        for (l, (gw, gb)) in grads.weights.iter().zip(&grads.biases).enumerate() {
            let (w, b) = (&model.weights()[l], &model.biases()[l]);
            if gw.rows() != w.rows() || gw.cols() != w.cols() || gb.len() != b.len() {
                return Err(shape_err("adam_step", format!("layer {l} {}x{}", w.rows(), w.cols()), format!("{}x{}", gw.rows(), gw.cols())).into());
            }
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let mut pos = 0;
        let (m, v) = (&mut self.m, &mut self.v);
        let mut update = |params: &mut [f64], g: &[f64]| {
            for (p, &g) in params.iter_mut().zip(g) {
                let mk = &mut m[pos];
                let vk = &mut v[pos];
                *mk = beta1 * *mk + (1.0 - beta1) * g;
                *vk = beta2 * *vk + (1.0 - beta2) * g * g;
                *p -= lr * (*mk / c1) / ((*vk / c2).sqrt() + eps);
                pos += 1;
            }
        };
        for ((w, b), (gw, gb)) in model.params_mut().zip(grads.weights.iter().zip(&grads.biases)) {
            update(w, gw.data());
            update(b, gb);
        }
        Ok(())
    }
}

pub fn adam_step(state: &mut AdamState, model: &mut MlpModel, grads: &ParamGrads) -> Result<(), NeuralError> {
    let lr = state.config.lr;
    state.step_with_lr(model, grads, lr)
}
