use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Scalar;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam without weight decay.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamStore<T>) -> Self {
        let zeros = || params.tensors().iter().map(|t| vec![T::zero(); t.len()]).collect();
        Self {
            config,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, i: usize) -> &[T] {
        &self.first[i]
    }

    pub fn second_moment(&self, i: usize) -> &[T] {
        &self.second[i]
    }

    /// Applies one update. `grads[i]` aligns with parameter `i`; `None` is
    /// treated as a zero gradient. Non-finite gradients abort before any
    /// parameter is touched.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Option<Vec<T>>]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(Error::LengthMismatch(grads.len(), params.len()));
        }
        for (g, p) in grads.iter().zip(params.tensors()) {
            if let Some(g) = g {
                if g.len() != p.len() {
                    return Err(Error::LengthMismatch(g.len(), p.len()));
                }
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Diverged);
                }
            }
        }
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let bc1 = T::lit(1.0 - c.beta1.powi(self.step as i32));
        let bc2 = T::lit(1.0 - c.beta2.powi(self.step as i32));
        let lr = T::lit(c.learning_rate);
        let eps = T::lit(c.eps);
        let one = T::one();
        for (i, p) in params.tensors_mut().iter_mut().enumerate() {
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            let g = grads[i].as_deref();
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                let gj = g.map_or(T::zero(), |g| g[j]);
                m[j] = b1 * m[j] + (one - b1) * gj;
                v[j] = b2 * v[j] + (one - b2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Tensor;

    fn single(x: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::from_vec(vec![x]));
        s
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = single(0.5);
        let mut adam = Adam::new(AdamConfig::with_lr(0.1), &p);
        adam.step(&mut p, &[Some(vec![1.0])]).unwrap();
        let delta = p.tensors()[0].data()[0] - 0.5;
        assert!((delta + 0.1 / (1.0 + 1e-8)).abs() < 1e-12);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn zero_gradient_keeps_params_and_decays_moments() {
        let mut p = single(0.5);
        let mut adam = Adam::new(AdamConfig::with_lr(0.1), &p);
        adam.step(&mut p, &[Some(vec![1.0])]).unwrap();
        let after_first = p.tensors()[0].data()[0];
        let m1 = adam.first_moment(0)[0];
        // a zero gradient still applies momentum; moments must shrink
        let mut q = single(0.5);
        let mut fresh = Adam::new(AdamConfig::with_lr(0.1), &q);
        fresh.step(&mut q, &[None]).unwrap();
        assert_eq!(q.tensors()[0].data()[0], 0.5);
        adam.step(&mut p, &[Some(vec![0.0])]).unwrap();
        assert!(adam.first_moment(0)[0].abs() < m1.abs());
        assert!(p.tensors()[0].data()[0] < after_first);
    }

    #[test]
    fn non_finite_gradient_diverges_without_update() {
        let mut p = single(0.5);
        let mut adam = Adam::new(AdamConfig::default(), &p);
        let err = adam.step(&mut p, &[Some(vec![f64::NAN])]).unwrap_err();
        assert!(matches!(err, Error::Diverged));
        assert_eq!(p.tensors()[0].data()[0], 0.5);
        assert_eq!(adam.step_count(), 0);
    }
}
