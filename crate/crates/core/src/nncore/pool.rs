use super::tensor::{expect_shape, Scalar, Tensor};
use crate::error::{Error, Result};

/// Non-overlapping max pooling on `[C, H, W]`.
///
/// Returns the pooled tensor and, for every output cell, the flat input index
/// of its maximum. Ties resolve to the first element in row-major window order.
pub fn maxpool2d_forward<T: Scalar>(
    input: &Tensor<T>,
    pool: (usize, usize),
) -> Result<(Tensor<T>, Vec<usize>)> {
    expect_shape("maxpool2d", input, 3)?;
    let (c, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (ph, pw) = pool;
    if ph == 0 || pw == 0 || h % ph != 0 || w % pw != 0 {
        return Err(Error::shape(
            "maxpool2d",
            format!("input {h}x{w} is not divisible by pool {ph}x{pw}"),
        ));
    }
    let (oh, ow) = (h / ph, w / pw);
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = ch * h * w + oy * ph * w + ox * pw;
                for dy in 0..ph {
                    for dx in 0..pw {
                        let idx = ch * h * w + (oy * ph + dy) * w + ox * pw + dx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::from_vec(&[c, oh, ow], out)?, argmax))
}

pub fn maxpool2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    if grad_out.len() != argmax.len() {
        return Err(Error::shape(
            "maxpool2d backward",
            format!("{} gradients for {} argmax entries", grad_out.len(), argmax.len()),
        ));
    }
    let mut gin = Tensor::zeros(input_shape);
    let n = gin.len();
    let g = gin.data_mut();
    for (&idx, &gv) in argmax.iter().zip(grad_out.data()) {
        if idx >= n {
            return Err(Error::shape("maxpool2d backward", "argmax index out of range"));
        }
        g[idx] += gv;
    }
    Ok(gin)
}

/// Batched max pooling over `[B, C, H, W]`.
#[derive(Clone, Debug)]
pub struct MaxPool2d {
    pub pool: (usize, usize),
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new(pool: (usize, usize)) -> Self {
        MaxPool2d { pool, cache: None }
    }

    fn run<T: Scalar>(&self, input: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
        expect_shape("maxpool2d layer", input, 4)?;
        let s = input.shape();
        let mut out = Vec::new();
        let mut arg = Vec::new();
        let mut os = Vec::new();
        for b in 0..s[0] {
            let xb = Tensor::from_vec(&s[1..], input.outer(b).to_vec())?;
            let (yb, ab) = maxpool2d_forward(&xb, self.pool)?;
            os = yb.shape().to_vec();
            out.extend_from_slice(yb.data());
            arg.extend(ab);
        }
        Ok((Tensor::from_vec(&[s[0], os[0], os[1], os[2]], out)?, arg))
    }

    pub fn infer<T: Scalar>(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.run(input)?.0)
    }

    pub fn forward<T: Scalar>(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, arg) = self.run(input)?;
        self.cache = Some((arg, input.shape().to_vec()));
        Ok(y)
    }

    pub fn backward<T: Scalar>(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let (arg, shape) = self.cache.take().ok_or_else(|| Error::MissingCache {
            layer: "maxpool2d".into(),
        })?;
        let per_in: usize = shape[1..].iter().product();
        let per_out = arg.len() / shape[0];
        let mut gin = Vec::with_capacity(shape.iter().product());
        for b in 0..shape[0] {
            let gb = Tensor::from_vec(&[per_out], grad_out.outer(b).to_vec())?;
            let gi = maxpool2d_backward(&gb, &arg[b * per_out..(b + 1) * per_out], &[per_in])?;
            gin.extend_from_slice(gi.data());
        }
        Tensor::from_vec(&shape, gin)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
