use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::{Param, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates keyed by parameter name.
#[derive(Clone, Debug)]
pub struct AdamState<T = f32> {
    pub config: AdamConfig,
    pub t: u64,
    moments: BTreeMap<String, (Tensor<T>, Tensor<T>)>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            t: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn moments(&self, name: &str) -> Option<(&Tensor<T>, &Tensor<T>)> {
        self.moments.get(name).map(|(m, v)| (m, v))
    }
}

/// One Adam update over `params` using their accumulated gradients.
///
/// Gradients are checked before anything is modified, so a non-finite
/// gradient leaves both parameters and state untouched.
pub fn adam_step<T: Scalar>(params: &mut [&mut Param<T>], state: &mut AdamState<T>) -> Result<()> {
    for p in params.iter() {
        if !p.grad.all_finite() {
            return Err(Error::NonFiniteGradient { param: p.name.clone() });
        }
        if p.grad.shape() != p.value.shape() {
            return Err(Error::shape("adam_step", format!("gradient shape differs for `{}`", p.name)));
        }
        if let Some((m, _)) = state.moments.get(&p.name) {
            if m.shape() != p.value.shape() {
                return Err(Error::shape("adam_step", format!("moment shape differs for `{}`", p.name)));
            }
        }
    }
    state.t += 1;
    let c = state.config;
    let bc1 = 1.0 - c.beta1.powi(state.t as i32);
    let bc2 = 1.0 - c.beta2.powi(state.t as i32);
    for p in params.iter_mut() {
        let (m, v) = state
            .moments
            .entry(p.name.clone())
            .or_insert_with(|| (Tensor::zeros(p.value.shape()), Tensor::zeros(p.value.shape())));
        let (value, grad) = (p.value.data_mut(), p.grad.data());
        for i in 0..value.len() {
            let g = grad[i].as_f64();
            let mi = c.beta1 * m.data()[i].as_f64() + (1.0 - c.beta1) * g;
            let vi = c.beta2 * v.data()[i].as_f64() + (1.0 - c.beta2) * g * g;
            m.data_mut()[i] = T::of(mi);
            v.data_mut()[i] = T::of(vi);
            let m_hat = mi / bc1;
            let v_hat = vi / bc2;
            let step = c.lr * m_hat / (v_hat.sqrt() + c.epsilon);
            value[i] = T::of(value[i].as_f64() - step);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64, g: f64) -> Param<f64> {
        let mut p = Param::new("theta", Tensor::scalar(v));
        p.grad = Tensor::scalar(g);
        p
    }

    #[test]
    fn zero_gradient_first_step_is_noop() {
        let mut p = scalar_param(0.7, 0.0);
        let mut s = AdamState::new(AdamConfig::default());
        adam_step(&mut [&mut p], &mut s).unwrap();
        assert_eq!(p.value.data()[0], 0.7);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn single_unit_gradient_step() {
        // m = 0.1, v = 0.001; bias-corrected both are 1, so the step is lr / (1 + eps).
        let mut p = scalar_param(0.0, 1.0);
        let mut s = AdamState::new(AdamConfig::default());
        adam_step(&mut [&mut p], &mut s).unwrap();
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p.value.data()[0] - expected).abs() < 1e-15);
        assert!((p.value.data()[0] + 9.99999e-4).abs() < 1e-9);
    }

    #[test]
    fn constant_gradient_decreases_monotonically() {
        let mut p = scalar_param(0.0, 1.0);
        let mut s = AdamState::new(AdamConfig::default());
        let mut prev = p.value.data()[0];
        for step in 1..=10 {
            adam_step(&mut [&mut p], &mut s).unwrap();
            let now = p.value.data()[0];
            assert!(now < prev, "step {step}: {now} !< {prev}");
            prev = now;
        }
        assert_eq!(s.t, 10);
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let mut p = scalar_param(0.3, -2.0);
        let mut s = AdamState::new(AdamConfig { lr: 0.0, ..AdamConfig::default() });
        for _ in 0..5 {
            adam_step(&mut [&mut p], &mut s).unwrap();
        }
        assert_eq!(p.value.data()[0], 0.3);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut p = scalar_param(0.0, f64::NAN);
        let mut s = AdamState::new(AdamConfig::default());
        let err = adam_step(&mut [&mut p], &mut s).unwrap_err();
        assert!(err.to_string().contains("theta"));
        assert_eq!(s.t, 0);
    }
}
