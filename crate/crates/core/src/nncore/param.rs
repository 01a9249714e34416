use super::rng::Rng;
use super::tensor::{Scalar, Tensor};

/// A learnable tensor and its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T = f32> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Param {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    pub fn cast<U: Scalar>(&self) -> Param<U> {
        Param {
            name: self.name.clone(),
            value: self.value.cast(),
            grad: self.grad.cast(),
        }
    }
}

/// Half-width of the Glorot-uniform interval.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub fn glorot_uniform<T: Scalar>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut Rng,
) -> Tensor<T> {
    let limit = glorot_limit(fan_in, fan_out);
    let mut t = Tensor::zeros(shape);
    for x in t.data_mut() {
        *x = T::of(rng.uniform(-limit, limit));
    }
    t
}
