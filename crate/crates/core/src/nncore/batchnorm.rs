//! Per-channel batch normalization over `[B, C, H, W]`.
//!
//! Train mode normalizes with biased batch statistics and folds them into the
//! running estimates as `running = momentum * running + (1 - momentum) * batch`.
//! Infer mode normalizes with the running estimates.

use super::param::Param;
use super::tensor::{expect_shape, Scalar, Tensor};
use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;

#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

fn check<T: Scalar>(x: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<(usize, usize, usize)> {
    expect_shape("batchnorm2d", x, 4)?;
    let s = x.shape();
    if gamma.shape() != [s[1]] || beta.shape() != [s[1]] {
        return Err(Error::shape(
            "batchnorm2d",
            format!("{} channels but gamma {:?}, beta {:?}", s[1], gamma.shape(), beta.shape()),
        ));
    }
    Ok((s[0], s[1], s[2] * s[3]))
}

pub fn batchnorm2d_train<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: f64,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let (b, c, hw) = check(x, gamma, beta)?;
    let m = T::of((b * hw) as f64);
    let data = x.data();
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for ch in 0..c {
        let mut s = T::zero();
        for n in 0..b {
            let base = (n * c + ch) * hw;
            s += data[base..base + hw].iter().copied().sum::<T>();
        }
        let mu = s / m;
        let mut v = T::zero();
        for n in 0..b {
            let base = (n * c + ch) * hw;
            v += data[base..base + hw].iter().map(|&z| (z - mu) * (z - mu)).sum::<T>();
        }
        mean[ch] = mu;
        var[ch] = v / m;
    }
    let inv_std: Vec<T> = var.iter().map(|&v| (v + T::of(eps)).sqrt().recip()).collect();
    let mut xhat = Tensor::zeros(x.shape());
    let mut y = Tensor::zeros(x.shape());
    for n in 0..b {
        for ch in 0..c {
            let base = (n * c + ch) * hw;
            let (g, bt) = (gamma.data()[ch], beta.data()[ch]);
            for i in base..base + hw {
                let h = (data[i] - mean[ch]) * inv_std[ch];
                xhat.data_mut()[i] = h;
                y.data_mut()[i] = g * h + bt;
            }
        }
    }
    Ok((y, BatchNormCache { xhat, inv_std, mean, var }))
}

pub fn batchnorm2d_infer<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    let (b, c, hw) = check(x, gamma, beta)?;
    let mut y = Tensor::zeros(x.shape());
    for ch in 0..c {
        let inv = (running_var.data()[ch] + T::of(eps)).sqrt().recip();
        let scale = gamma.data()[ch] * inv;
        let shift = beta.data()[ch] - running_mean.data()[ch] * scale;
        for n in 0..b {
            let base = (n * c + ch) * hw;
            for i in base..base + hw {
                y.data_mut()[i] = x.data()[i] * scale + shift;
            }
        }
    }
    Ok(y)
}

/// Returns `(grad_input, grad_gamma, grad_beta)`.
pub fn batchnorm2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cache: &BatchNormCache<T>,
    gamma: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    if grad_out.shape() != cache.xhat.shape() {
        return Err(Error::shape(
            "batchnorm2d backward",
            format!("{:?} vs cached {:?}", grad_out.shape(), cache.xhat.shape()),
        ));
    }
    let s = grad_out.shape();
    let (b, c, hw) = (s[0], s[1], s[2] * s[3]);
    let m = T::of((b * hw) as f64);
    let g = grad_out.data();
    let xh = cache.xhat.data();
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for n in 0..b {
        for ch in 0..c {
            let base = (n * c + ch) * hw;
            for i in base..base + hw {
                dbeta[ch] += g[i];
                dgamma[ch] += g[i] * xh[i];
            }
        }
    }
    let mut dx = Tensor::zeros(s);
    for n in 0..b {
        for ch in 0..c {
            let base = (n * c + ch) * hw;
            let k = gamma.data()[ch] * cache.inv_std[ch] / m;
            for i in base..base + hw {
                dx.data_mut()[i] = k * (m * g[i] - dbeta[ch] - xh[i] * dgamma[ch]);
            }
        }
    }
    Ok((dx, Tensor::from_vec(&[c], dgamma)?, Tensor::from_vec(&[c], dbeta)?))
}

#[derive(Clone, Debug)]
pub struct BatchNorm2d<T = f32> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub eps: f64,
    /// A frozen layer always normalizes with its running statistics and never updates them.
    pub frozen: bool,
    cache: Option<Cached<T>>,
}

#[derive(Clone, Debug)]
enum Cached<T> {
    Batch(BatchNormCache<T>),
    /// Frozen forward: the layer acted as a fixed per-channel affine map.
    Affine,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        BatchNorm2d {
            gamma: Param::new(format!("{name}.gamma"), Tensor::full(&[channels], T::one())),
            beta: Param::new(format!("{name}.beta"), Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], T::one()),
            momentum: BN_MOMENTUM,
            eps: BN_EPSILON,
            frozen: false,
            cache: None,
        }
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        batchnorm2d_infer(
            x,
            &self.gamma.value,
            &self.beta.value,
            &self.running_mean,
            &self.running_var,
            self.eps,
        )
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if self.frozen {
            self.cache = Some(Cached::Affine);
            return self.infer(x);
        }
        let (y, cache) = batchnorm2d_train(x, &self.gamma.value, &self.beta.value, self.eps)?;
        let mom = T::of(self.momentum);
        let rest = T::one() - mom;
        for (r, &bm) in self.running_mean.data_mut().iter_mut().zip(&cache.mean) {
            *r = mom * *r + rest * bm;
        }
        for (r, &bv) in self.running_var.data_mut().iter_mut().zip(&cache.var) {
            *r = mom * *r + rest * bv;
        }
        self.cache = Some(Cached::Batch(cache));
        Ok(y)
    }

    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self.cache.take().ok_or_else(|| Error::MissingCache {
            layer: self.gamma.name.clone(),
        })?;
        match cache {
            Cached::Batch(cache) => {
                let (dx, dg, db) = batchnorm2d_backward(grad_out, &cache, &self.gamma.value)?;
                self.gamma.grad.add_assign(&dg)?;
                self.beta.grad.add_assign(&db)?;
                Ok(dx)
            }
            Cached::Affine => {
                expect_shape("batchnorm2d backward", grad_out, 4)?;
                let s = grad_out.shape();
                let (c, hw) = (s[1], s[2] * s[3]);
                let mut dx = grad_out.clone();
                for (i, v) in dx.data_mut().iter_mut().enumerate() {
                    let ch = (i / hw) % c;
                    let inv = (self.running_var.data()[ch] + T::of(self.eps)).sqrt().recip();
                    *v *= self.gamma.value.data()[ch] * inv;
                }
                Ok(dx)
            }
        }
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
