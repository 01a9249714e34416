use super::param::{glorot_uniform, Param};
use super::rng::Rng;
use super::tensor::{expect_shape, Scalar, Tensor};
use crate::error::{Error, Result};

fn check<T: Scalar>(x: &[T], weights: &Tensor<T>, bias: &Tensor<T>) -> Result<(usize, usize)> {
    expect_shape("dense weights", weights, 2)?;
    let (d_out, d_in) = (weights.shape()[0], weights.shape()[1]);
    if x.len() != d_in || bias.shape() != [d_out] {
        return Err(Error::shape(
            "dense",
            format!(
                "input len {}, weights {:?}, bias {:?}",
                x.len(),
                weights.shape(),
                bias.shape()
            ),
        ));
    }
    Ok((d_out, d_in))
}

/// `W x + b` for one input vector. Each output row is an independent dot product,
/// so rows shared between two weight matrices produce bit-identical values.
pub fn dense_forward<T: Scalar>(x: &[T], weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Vec<T>> {
    let (d_out, d_in) = check(x, weights, bias)?;
    let w = weights.data();
    Ok((0..d_out)
        .map(|o| {
            let row = &w[o * d_in..(o + 1) * d_in];
            row.iter().zip(x).fold(bias.data()[o], |acc, (&a, &b)| acc + a * b)
        })
        .collect())
}

/// Adds the weight and bias gradients for one sample into `grad_w`/`grad_b`
/// and returns the input gradient.
pub fn dense_backward<T: Scalar>(
    grad_out: &[T],
    x: &[T],
    weights: &Tensor<T>,
    grad_w: &mut Tensor<T>,
    grad_b: &mut Tensor<T>,
) -> Result<Vec<T>> {
    let (d_out, d_in) = (weights.shape()[0], weights.shape()[1]);
    if grad_out.len() != d_out || x.len() != d_in {
        return Err(Error::shape(
            "dense backward",
            format!("grad_out {}, input {}, weights {:?}", grad_out.len(), x.len(), weights.shape()),
        ));
    }
    let w = weights.data();
    let mut gx = vec![T::zero(); d_in];
    for o in 0..d_out {
        let g = grad_out[o];
        grad_b.data_mut()[o] += g;
        let row = &w[o * d_in..(o + 1) * d_in];
        let grow = &mut grad_w.data_mut()[o * d_in..(o + 1) * d_in];
        for i in 0..d_in {
            grow[i] += g * x[i];
            gx[i] += g * row[i];
        }
    }
    Ok(gx)
}

/// Fully connected layer on `[B, D_in]`.
#[derive(Clone, Debug)]
pub struct Dense<T = f32> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(name: &str, d_in: usize, d_out: usize, rng: &mut Rng) -> Self {
        Dense {
            weight: Param::new(
                format!("{name}.weight"),
                glorot_uniform(&[d_out, d_in], d_in, d_out, rng),
            ),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[d_out])),
            cache: None,
        }
    }

    pub fn from_params(weight: Param<T>, bias: Param<T>) -> Self {
        Dense {
            weight,
            bias,
            cache: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        expect_shape("dense layer", x, 2)?;
        let b = x.shape()[0];
        let mut out = Vec::with_capacity(b * self.out_dim());
        for n in 0..b {
            out.extend(dense_forward(x.outer(n), &self.weight.value, &self.bias.value)?);
        }
        Tensor::from_vec(&[b, self.out_dim()], out)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self.cache.take().ok_or_else(|| Error::MissingCache {
            layer: self.weight.name.clone(),
        })?;
        let b = x.shape()[0];
        if grad_out.shape() != [b, self.out_dim()] {
            return Err(Error::shape(
                "dense layer backward",
                format!("grad_out {:?}, expected [{b}, {}]", grad_out.shape(), self.out_dim()),
            ));
        }
        let mut gin = Vec::with_capacity(x.len());
        for n in 0..b {
            gin.extend(dense_backward(
                grad_out.outer(n),
                x.outer(n),
                &self.weight.value,
                &mut self.weight.grad,
                &mut self.bias.grad,
            )?);
        }
        Tensor::from_vec(x.shape(), gin)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_input_through() {
        let mut w = Tensor::<f32>::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let x = [0.5f32, -1.0, 2.0];
        assert_eq!(dense_forward(&x, &w, &Tensor::zeros(&[3])).unwrap(), x.to_vec());
    }

    #[test]
    fn zero_input_gives_bias() {
        let mut rng = Rng::new(0);
        let w: Tensor<f32> = glorot_uniform(&[2, 4], 4, 2, &mut rng);
        let b = Tensor::from_vec(&[2], vec![0.25f32, -0.75]).unwrap();
        assert_eq!(dense_forward(&[0.0; 4], &w, &b).unwrap(), vec![0.25, -0.75]);
    }

    #[test]
    fn matches_naive_matvec() {
        let mut rng = Rng::new(5);
        let w: Tensor<f64> = glorot_uniform(&[4, 6], 6, 4, &mut rng);
        let b = Tensor::from_vec(&[4], (0..4).map(|_| rng.normal()).collect()).unwrap();
        let x: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let y = dense_forward(&x, &w, &b).unwrap();
        for o in 0..4 {
            let mut s = b.data()[o];
            for i in 0..6 {
                s += w.data()[o * 6 + i] * x[i];
            }
            assert!((y[o] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let w = Tensor::<f32>::zeros(&[2, 3]);
        assert!(dense_forward(&[1.0; 4], &w, &Tensor::zeros(&[2])).is_err());
    }
}
