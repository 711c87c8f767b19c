use crate::nn::ParamStore;
use crate::tensor::{Gradients, Real, Tensor, Var};

use super::TrainError;

/// Cosine annealing from `lr0` at step 0 to `lr_min` at `total_steps`.
/// Steps past the end stay at `lr_min`.
pub fn cosine_lr(step: usize, total_steps: usize, lr0: f64, lr_min: f64) -> f64 {
    if total_steps == 0 || step >= total_steps {
        return if step == 0 && total_steps == 0 { lr0 } else { lr_min };
    }
    let phase = std::f64::consts::PI * step as f64 / total_steps as f64;
    lr_min + 0.5 * (lr0 - lr_min) * (1.0 + phase.cos())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with first and second moments per parameter.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros = || params.ids().map(|id| Tensor::zeros(params.shape(id))).collect::<Vec<_>>();
        Self {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// One update. `vars[i]` is the graph leaf of parameter `i`; parameters
    /// without a gradient are treated as having a zero gradient.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>, vars: &[Var], lr: f64) -> Result<(), TrainError> {
        let ids: Vec<_> = params.ids().collect();
        for (&id, &var) in ids.iter().zip(vars) {
            if let Some(g) = grads.get(var) {
                if let Some(pos) = g.data().iter().position(|v| !v.is_finite()) {
                    return Err(TrainError::NonFinite(format!(
                        "gradient of parameter '{}' is {:?} at flat index {pos}",
                        params.name(id),
                        g.data()[pos]
                    )));
                }
            }
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let (b1, b2, eps) = (T::lit(beta1), T::lit(beta2), T::lit(eps));
        let (one_b1, one_b2) = (T::lit(1.0 - beta1), T::lit(1.0 - beta2));
        let (inv_c1, inv_c2, lr) = (T::lit(1.0 / c1), T::lit(1.0 / c2), T::lit(lr));
        for (i, (&id, &var)) in ids.iter().zip(vars).enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = params.get_mut(id).data_mut();
            match grads.get(var) {
                Some(g) => {
                    for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.data()) {
                        *m = b1 * *m + one_b1 * g;
                        *v = b2 * *v + one_b2 * g * g;
                        *p -= lr * (*m * inv_c1) / ((*v * inv_c2).sqrt() + eps);
                    }
                }
                None => {
                    for ((p, m), v) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m = b1 * *m;
                        *v = b2 * *v;
                        *p -= lr * (*m * inv_c1) / ((*v * inv_c2).sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Init;
    use crate::tensor::{Graph, Shape};

    #[test]
    fn schedule_endpoints_and_midpoint() {
        assert_eq!(cosine_lr(0, 2000, 1e-4, 1e-7), 1e-4);
        assert_eq!(cosine_lr(2000, 2000, 1e-4, 1e-7), 1e-7);
        assert!((cosine_lr(1000, 2000, 1e-4, 1e-7) - 5.005e-5).abs() < 1e-18);
        assert_eq!(cosine_lr(2500, 2000, 1e-4, 1e-7), 1e-7);
        let mut prev = f64::INFINITY;
        for s in 0..=2000 {
            let lr = cosine_lr(s, 2000, 1e-4, 1e-7);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    fn setup(grad: f64) -> (ParamStore<f64>, Graph<f64>, Vec<Var>, Gradients<f64>) {
        let mut store = ParamStore::<f64>::new(1);
        let id = store.add("w", Shape::new(1, 1, 1, 3), Init::FanInUniform { fan_in: 1 });
        let mut g = Graph::new();
        let bound = store.bind(&mut g, true);
        let w = bound.var(id);
        let scaled = g.scale(w, grad);
        let loss = g.sum(scaled);
        let grads = g.backward(loss).unwrap();
        (store, g, bound.vars().to_vec(), grads)
    }

    #[test]
    fn first_step_moves_by_lr_against_the_gradient() {
        let (mut store, _g, vars, grads) = setup(0.37);
        let before = store.get(store.ids().next().unwrap()).clone();
        let mut adam = Adam::new(&store, AdamConfig::default());
        adam.step(&mut store, &grads, &vars, 1e-3).unwrap();
        let after = store.get(store.ids().next().unwrap());
        for (a, b) in after.data().iter().zip(before.data()) {
            assert!(((b - a) - 1e-3).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let (mut store, _g, vars, grads) = setup(0.0);
        let before = store.get(store.ids().next().unwrap()).clone();
        let mut adam = Adam::new(&store, AdamConfig::default());
        adam.m[0] = Tensor::full(before.shape(), 0.5);
        adam.step(&mut store, &grads, &vars, 1e-3).unwrap();
        assert_eq!(adam.m[0].data()[0], 0.45);
        let (mut store, _g, vars, grads) = setup(0.0);
        let mut adam = Adam::new(&store, AdamConfig::default());
        adam.step(&mut store, &grads, &vars, 1e-3).unwrap();
        assert_eq!(store.get(store.ids().next().unwrap()), &before);
    }

    #[test]
    fn nan_gradient_names_the_parameter() {
        let (mut store, _g, vars, grads) = setup(f64::NAN);
        let mut adam = Adam::new(&store, AdamConfig::default());
        let err = adam.step(&mut store, &grads, &vars, 1e-3).unwrap_err();
        assert!(err.to_string().contains("'w'"), "{err}");
    }
}
