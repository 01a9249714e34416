use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub fn relu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

/// Logistic function, branching on sign so `exp` never overflows. The result
/// is clamped to the open interval `(0, 1)` of the element type.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    let s = if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    };
    let top = T::one() - T::epsilon() / T::of(2.0);
    s.max(T::min_positive_value()).min(top)
}

/// Derivative of the sigmoid expressed through its output `s = sigmoid(x)`.
pub fn sigmoid_grad_from_output<T: Scalar>(s: T) -> T {
    s * (T::one() - s)
}

pub fn relu_tensor<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(relu)
}

pub fn sigmoid_tensor<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid)
}

/// Gradient through ReLU given the forward input.
pub fn relu_backward<T: Scalar>(grad_out: &Tensor<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != input.shape() {
        return Err(Error::shape("relu backward", "gradient and input shapes differ"));
    }
    let mut g = grad_out.clone();
    for (gv, &x) in g.data_mut().iter_mut().zip(input.data()) {
        if x <= T::zero() {
            *gv = T::zero();
        }
    }
    Ok(g)
}

pub fn sigmoid_backward<T: Scalar>(grad_out: &Tensor<T>, output: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != output.shape() {
        return Err(Error::shape("sigmoid backward", "gradient and output shapes differ"));
    }
    let mut g = grad_out.clone();
    for (gv, &s) in g.data_mut().iter_mut().zip(output.data()) {
        *gv *= sigmoid_grad_from_output(s);
    }
    Ok(g)
}

/// ReLU with a cached input for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct Relu<T = f32> {
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Relu<T> {
    pub fn new() -> Self {
        Relu { cache: None }
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        self.cache = Some(x.clone());
        relu_tensor(x)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache.take().ok_or_else(|| Error::MissingCache {
            layer: "relu".into(),
        })?;
        relu_backward(grad_out, &x)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
