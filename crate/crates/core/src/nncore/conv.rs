//! Stride-1 2-D cross-correlation.

use serde::{Deserialize, Serialize};

use super::param::{glorot_uniform, Param};
use super::rng::Rng;
use super::tensor::{expect_shape, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Padding {
    /// Zero padding of `k / 2` on each side; output size equals input size.
    Same,
    /// No padding; output shrinks by `k - 1`.
    Valid,
}

/// Output spatial size and per-side padding for one axis.
fn geometry(padding: Padding, size: usize, k: usize) -> Result<(usize, usize)> {
    match padding {
        Padding::Same => {
            if k % 2 == 0 {
                return Err(Error::shape(
                    "conv2d",
                    format!("same padding needs an odd kernel, got {k}"),
                ));
            }
            Ok((size, k / 2))
        }
        Padding::Valid => {
            if k > size {
                return Err(Error::shape(
                    "conv2d",
                    format!("kernel {k} does not fit input {size} without padding"),
                ));
            }
            Ok((size - k + 1, 0))
        }
    }
}

/// Output positions `o` with `o + offset - pad` inside `[0, size)`. Empty when
/// the kernel tap never overlaps the input.
#[inline]
fn valid_range(out: usize, size: usize, offset: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(offset).min(out);
    let hi = (size + pad).saturating_sub(offset).min(out);
    (lo, hi.max(lo))
}

struct Dims {
    c_in: usize,
    h: usize,
    w: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    ph: usize,
    pw: usize,
}

fn dims<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, padding: Padding) -> Result<Dims> {
    expect_shape("conv2d input", input, 3)?;
    expect_shape("conv2d weights", weights, 4)?;
    let (c_in, h, w) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let ws = weights.shape();
    if ws[1] != c_in {
        return Err(Error::shape(
            "conv2d",
            format!("input has {c_in} channels but weights expect {} (weights {ws:?})", ws[1]),
        ));
    }
    let (oh, ph) = geometry(padding, h, ws[2])?;
    let (ow, pw) = geometry(padding, w, ws[3])?;
    Ok(Dims {
        c_in,
        h,
        w,
        c_out: ws[0],
        kh: ws[2],
        kw: ws[3],
        oh,
        ow,
        ph,
        pw,
    })
}

/// `input [C_in,H,W]`, `weights [C_out,C_in,kH,kW]`, `bias [C_out]`.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    padding: Padding,
) -> Result<Tensor<T>> {
    let d = dims(input, weights, padding)?;
    if bias.shape() != [d.c_out] {
        return Err(Error::shape(
            "conv2d",
            format!("bias shape {:?}, expected [{}]", bias.shape(), d.c_out),
        ));
    }
    let x = input.data();
    let wt = weights.data();
    let mut out = vec![T::zero(); d.c_out * d.oh * d.ow];
    for co in 0..d.c_out {
        let plane = &mut out[co * d.oh * d.ow..(co + 1) * d.oh * d.ow];
        plane.fill(bias.data()[co]);
        for ci in 0..d.c_in {
            let xin = &x[ci * d.h * d.w..(ci + 1) * d.h * d.w];
            for ky in 0..d.kh {
                let (y0, y1) = valid_range(d.oh, d.h, ky, d.ph);
                for kx in 0..d.kw {
                    let wv = wt[((co * d.c_in + ci) * d.kh + ky) * d.kw + kx];
                    let (x0, x1) = valid_range(d.ow, d.w, kx, d.pw);
                    if x0 == x1 {
                        continue;
                    }
                    for oy in y0..y1 {
                        let iy = oy + ky - d.ph;
                        let src = &xin[iy * d.w + x0 + kx - d.pw..iy * d.w + x1 + kx - d.pw];
                        let dst = &mut plane[oy * d.ow + x0..oy * d.ow + x1];
                        for (o, &s) in dst.iter_mut().zip(src) {
                            *o += wv * s;
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[d.c_out, d.oh, d.ow], out)
}

#[derive(Clone, Debug)]
pub struct Conv2dGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weights: &Tensor<T>,
    padding: Padding,
) -> Result<Conv2dGrads<T>> {
    let d = dims(input, weights, padding)?;
    if grad_out.shape() != [d.c_out, d.oh, d.ow] {
        return Err(Error::shape(
            "conv2d backward",
            format!(
                "grad_out {:?}, expected {:?}",
                grad_out.shape(),
                [d.c_out, d.oh, d.ow]
            ),
        ));
    }
    let x = input.data();
    let wt = weights.data();
    let g = grad_out.data();
    let mut gx = vec![T::zero(); x.len()];
    let mut gw = vec![T::zero(); wt.len()];
    let mut gb = vec![T::zero(); d.c_out];
    for co in 0..d.c_out {
        let gplane = &g[co * d.oh * d.ow..(co + 1) * d.oh * d.ow];
        gb[co] = gplane.iter().copied().sum();
        for ci in 0..d.c_in {
            let base = ci * d.h * d.w;
            for ky in 0..d.kh {
                let (y0, y1) = valid_range(d.oh, d.h, ky, d.ph);
                for kx in 0..d.kw {
                    let widx = ((co * d.c_in + ci) * d.kh + ky) * d.kw + kx;
                    let wv = wt[widx];
                    let (x0, x1) = valid_range(d.ow, d.w, kx, d.pw);
                    if x0 == x1 {
                        continue;
                    }
                    let mut acc = T::zero();
                    for oy in y0..y1 {
                        let iy = oy + ky - d.ph;
                        let lo = base + iy * d.w + x0 + kx - d.pw;
                        let hi = base + iy * d.w + x1 + kx - d.pw;
                        let grow = &gplane[oy * d.ow + x0..oy * d.ow + x1];
                        for ((gxv, &xv), &gv) in gx[lo..hi].iter_mut().zip(&x[lo..hi]).zip(grow) {
                            acc += gv * xv;
                            *gxv += wv * gv;
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    Ok(Conv2dGrads {
        input: Tensor::from_vec(input.shape(), gx)?,
        weights: Tensor::from_vec(weights.shape(), gw)?,
        bias: Tensor::from_vec(&[d.c_out], gb)?,
    })
}

/// Batched convolution layer over `[B, C, H, W]`.
#[derive(Clone, Debug)]
pub struct Conv2d<T = f32> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub padding: Padding,
    cache: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    /// Glorot-uniform weights, zero bias.
    pub fn new(
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        padding: Padding,
        rng: &mut Rng,
    ) -> Self {
        let rf = kernel * kernel;
        let w = glorot_uniform(&[c_out, c_in, kernel, kernel], c_in * rf, c_out * rf, rng);
        Conv2d {
            weight: Param::new(format!("{name}.weight"), w),
            bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[c_out])),
            padding,
            cache: None,
        }
    }

    pub fn from_params(weight: Param<T>, bias: Param<T>, padding: Padding) -> Self {
        Conv2d {
            weight,
            bias,
            padding,
            cache: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    /// Forward pass without caching.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        expect_shape("conv2d layer", input, 4)?;
        let s = input.shape();
        let per = Tensor::from_vec(&s[1..], input.outer(0).to_vec())?;
        let first = conv2d_forward(&per, &self.weight.value, &self.bias.value, self.padding)?;
        let os = first.shape().to_vec();
        let mut out = Vec::with_capacity(s[0] * first.len());
        out.extend_from_slice(first.data());
        for b in 1..s[0] {
            let xb = Tensor::from_vec(&s[1..], input.outer(b).to_vec())?;
            let yb = conv2d_forward(&xb, &self.weight.value, &self.bias.value, self.padding)?;
            out.extend_from_slice(yb.data());
        }
        Tensor::from_vec(&[s[0], os[0], os[1], os[2]], out)
    }

    pub fn forward(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.infer(input)?;
        self.cache = Some(input.clone());
        Ok(out)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self.cache.take().ok_or_else(|| Error::MissingCache {
            layer: self.weight.name.clone(),
        })?;
        expect_shape("conv2d layer backward", grad_out, 4)?;
        let s = input.shape().to_vec();
        if grad_out.shape()[0] != s[0] {
            return Err(Error::shape("conv2d layer backward", "batch size differs from forward"));
        }
        let gs = grad_out.shape()[1..].to_vec();
        let mut gin = Vec::with_capacity(input.len());
        for b in 0..s[0] {
            let xb = Tensor::from_vec(&s[1..], input.outer(b).to_vec())?;
            let gb = Tensor::from_vec(&gs, grad_out.outer(b).to_vec())?;
            let grads = conv2d_backward(&gb, &xb, &self.weight.value, self.padding)?;
            self.weight.grad.add_assign(&grads.weights)?;
            self.bias.grad.add_assign(&grads.bias)?;
            gin.extend_from_slice(grads.input.data());
        }
        Tensor::from_vec(&s, gin)
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}
