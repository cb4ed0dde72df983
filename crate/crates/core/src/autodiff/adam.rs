use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|(_, _, v)| Matrix::zeros(v.rows(), v.cols())).collect();
        Self { config, first: zeros(), second: zeros(), step: 0 }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update with the configured learning rate.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Matrix]) -> Result<()> {
        let lr = self.config.learning_rate;
        self.step_with_lr(store, grads, lr)
    }

    /// Applies one update. All gradients are checked before anything is
    /// modified, so a rejected step leaves parameters and moments intact.
    pub fn step_with_lr(&mut self, store: &mut ParamStore, grads: &[Matrix], lr: f64) -> Result<()> {
        if grads.len() != store.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} gradients for {} parameters",
                grads.len(),
                store.len()
            )));
        }
        for ((id, name, value), g) in store.iter().zip(grads) {
            if g.shape() != value.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "gradient for {name} is {:?}, parameter is {:?}",
                    g.shape(),
                    value.shape()
                )));
            }
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of parameter {name} ({})", id.index())));
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, epsilon, .. } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for (k, id) in ids.into_iter().enumerate() {
            let p = store.get_mut(id).as_mut_slice();
            let m = self.first[k].as_mut_slice();
            let v = self.second[k].as_mut_slice();
            for (((p, m), v), &g) in p.iter_mut().zip(m).zip(v).zip(grads[k].as_slice()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
