use super::graph::{Gradients, ParamStore};
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    /// Reranker defaults, including the unusual `beta1 = 0.1`.
    fn default() -> Self {
        AdamConfig { learning_rate: 0.001, beta1: 0.1, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates for every parameter of a store.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect();
        AdamState { config, step: 0, m: zeros.clone(), v: zeros }
    }

    /// One bias-corrected Adam update of every trainable parameter.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) {
        self.step += 1;
        let AdamConfig { learning_rate, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            if !params.param(id).trainable {
                continue;
            }
            let g = grads.get(id).data();
            let m = self.m[id.index()].data_mut();
            let v = self.v[id.index()].data_mut();
            let theta = params.get_mut(id).data_mut();
            for i in 0..theta.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                theta[i] -= learning_rate * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Graph, Mode};

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [0.5, -3.0, 1e-3, 42.0] {
            let mut store = ParamStore::new();
            let id = store.add("p", Tensor::vector(vec![1.0]));
            let mut grads = Gradients::zeros_like(&store);
            grads.get_mut(id).data_mut()[0] = g;
            let mut adam = AdamState::new(AdamConfig::default(), &store);
            adam.step(&mut store, &grads);
            let delta = store.get(id).data()[0] - 1.0;
            assert!(delta.abs() >= 0.000999 && delta.abs() <= 0.001, "{delta}");
            assert_eq!(delta.signum(), -g.signum());
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut store = ParamStore::new();
        let id = store.add("p", Tensor::vector(vec![1.5, -2.0]));
        let grads = Gradients::zeros_like(&store);
        let mut adam = AdamState::new(AdamConfig::default(), &store);
        for _ in 0..100 {
            adam.step(&mut store, &grads);
        }
        assert_eq!(store.get(id).data(), &[1.5, -2.0]);
        assert_eq!(adam.step, 100);
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let mut store = ParamStore::new();
        let id = store.add("p", Tensor::vector(vec![1.0]));
        store.set_trainable(id, false);
        let mut grads = Gradients::zeros_like(&store);
        grads.get_mut(id).data_mut()[0] = 1.0;
        let mut adam = AdamState::new(AdamConfig::default(), &store);
        adam.step(&mut store, &grads);
        assert_eq!(store.get(id).data(), &[1.0]);
    }

    #[test]
    fn converges_on_scalar_quadratic() {
        let mut store = ParamStore::new();
        let id = store.add("theta", Tensor::vector(vec![0.0]));
        let config = AdamConfig { learning_rate: 0.01, ..AdamConfig::default() };
        let mut adam = AdamState::new(config, &store);
        for _ in 0..5000 {
            let grads = {
                let mut g = Graph::new(&store, Mode::Train, 0);
                let theta = g.param(id);
                let three = g.input(Tensor::vector(vec![3.0]));
                let diff = g.sub(theta, three).unwrap();
                let loss = g.sum_sq(diff);
                g.backward(loss).unwrap()
            };
            adam.step(&mut store, &grads);
        }
        let theta = store.get(id).data()[0];
        assert!((theta - 3.0).abs() < 1e-3, "{theta}");
    }
}
