use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::{Gradients, ParamGroup, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adaptive moment estimation with a learning rate per [`ParamGroup`].
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Matrix> = store.iter().map(|(_, p)| Matrix::zeros(p.value.rows(), p.value.cols())).collect();
        Self { config, step: 0, first: zeros.clone(), second: zeros }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. Parameters without a gradient are treated as having a zero gradient.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, lr: impl Fn(ParamGroup) -> f64) {
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bias1 = 1.0 - beta1.powi(self.step as i32);
        let bias2 = 1.0 - beta2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let rate = lr(store.param(id).group);
            let m = &mut self.first[id.0];
            let v = &mut self.second[id.0];
            let grad = grads.get(id);
            let value = store.get_mut(id);
            for i in 0..value.len() {
                let g = grad.map_or(0.0, |g| g.data()[i]);
                let mi = beta1 * m.data()[i] + (1.0 - beta1) * g;
                let vi = beta2 * v.data()[i] + (1.0 - beta2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                value.data_mut()[i] -= rate * (mi / bias1) / ((vi / bias2).sqrt() + eps);
            }
        }
    }
}

/// Rescales `grads` so their global norm does not exceed `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::ParamId;

    #[test]
    fn first_adam_step_moves_by_learning_rate_against_gradient_sign() {
        let mut store = ParamStore::new();
        let id = store.add("w", ParamGroup::Encoder, Matrix::row_vector(vec![1.0, -1.0]));
        let d = store.add("d", ParamGroup::Decoder, Matrix::scalar(0.0));
        let mut grads = Gradients::new(2);
        grads.accumulate(id, &Matrix::row_vector(vec![0.5, -3.0]), 1.0);
        grads.accumulate(d, &Matrix::scalar(2.0), 1.0);
        let mut adam = Adam::new(AdamConfig::default(), &store);
        adam.step(&mut store, &grads, |g| if g == ParamGroup::Encoder { 0.1 } else { 0.01 });
        let w = store.get(id);
        assert!((w.get(0, 0) - 0.9).abs() < 1e-6);
        assert!((w.get(0, 1) + 0.9).abs() < 1e-6);
        assert!((store.get(ParamId(1)).get(0, 0) + 0.01).abs() < 1e-6);
    }

    #[test]
    fn clipping_bounds_the_global_norm() {
        let mut grads = Gradients::new(1);
        grads.accumulate(ParamId(0), &Matrix::row_vector(vec![3.0, 4.0]), 1.0);
        let before = clip_global_norm(&mut grads, 1.0);
        assert_eq!(before, 5.0);
        assert!((grads.global_norm() - 1.0).abs() < 1e-12);
    }
}
