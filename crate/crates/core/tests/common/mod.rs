//! Independent reference implementations used by the integration tests.
//!
//! Nothing here calls the optimized code paths being checked.

#![allow(dead_code)]

pub mod gradcheck;
pub mod sweeps;

use sedinc::datagen::EventClass;
use sedinc::models::{SedCnn, SedCnnConfig};
use sedinc::nncore::{Padding, Param, Rng, Scalar, Tensor};

pub fn random_tensor<T: Scalar>(shape: &[usize], rng: &mut Rng, scale: f64) -> Tensor<T> {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| T::of(rng.uniform(-scale, scale))).collect()).unwrap()
}

/// Direct six-loop cross-correlation over `[C, H, W]` with zero padding.
pub fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, padding: Padding) -> Tensor<f64> {
    let (c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let (ph, pw) = match padding {
        Padding::Same => (kh / 2, kw / 2),
        Padding::Valid => (0, 0),
    };
    let (oh, ow) = (h + 2 * ph - kh + 1, wd + 2 * pw - kw + 1);
    let mut out = vec![0.0; co * oh * ow];
    for o in 0..co {
        for i in 0..oh {
            for j in 0..ow {
                let mut s = b.data()[o];
                for ci in 0..c {
                    for u in 0..kh {
                        for v in 0..kw {
                            let (r, q) = (i + u, j + v);
                            if r < ph || q < pw || r - ph >= h || q - pw >= wd {
                                continue;
                            }
                            s += w.data()[((o * c + ci) * kh + u) * kw + v] * x.data()[(ci * h + r - ph) * wd + q - pw];
                        }
                    }
                }
                out[(o * oh + i) * ow + j] = s;
            }
        }
    }
    Tensor::from_vec(&[co, oh, ow], out).unwrap()
}

/// Window maximum by direct scan; the earliest position wins ties.
pub fn naive_pool(x: &Tensor<f32>, ph: usize, pw: usize) -> Tensor<f32> {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (h / ph, w / pw);
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let mut best = f32::NEG_INFINITY;
                for u in 0..ph {
                    for v in 0..pw {
                        let val = x.data()[(ch * h + i * ph + u) * w + j * pw + v];
                        if val > best {
                            best = val;
                        }
                    }
                }
                out.push(best);
            }
        }
    }
    Tensor::from_vec(&[c, oh, ow], out).unwrap()
}

/// `(tp, fp, fn)` per class by visiting every (segment, class) cell.
pub fn brute_force_counts(pred: &[f32], refs: &[f32], k: usize, threshold: f64) -> Vec<(u64, u64, u64)> {
    let mut out = vec![(0, 0, 0); k];
    for (i, (&p, &r)) in pred.iter().zip(refs).enumerate() {
        let c = i % k;
        let active = (p as f64) > threshold;
        let truth = r > 0.5;
        if active && truth {
            out[c].0 += 1;
        } else if active {
            out[c].1 += 1;
        } else if truth {
            out[c].2 += 1;
        }
    }
    out
}

pub fn f1_from_counts(tp: u64, fp: u64, fn_: u64) -> f64 {
    if 2 * tp + fp + fn_ == 0 {
        0.0
    } else {
        (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Central difference of `f` with respect to every element of the parameter
/// selected by `select`.
pub fn numeric_grad<M, F, S>(model: &mut M, select: S, h: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&mut M) -> f64,
    S: Fn(&mut M) -> &mut Param<f64>,
{
    let n = select(model).value.len();
    let mut g = Vec::with_capacity(n);
    for i in 0..n {
        let orig = select(model).value.data()[i];
        select(model).value.data_mut()[i] = orig + h;
        let up = f(model);
        select(model).value.data_mut()[i] = orig - h;
        let down = f(model);
        select(model).value.data_mut()[i] = orig;
        g.push((up - down) / (2.0 * h));
    }
    g
}

/// Central difference with respect to every element of a plain tensor input.
pub fn numeric_input_grad<F: FnMut(&Tensor<f64>) -> f64>(x: &Tensor<f64>, h: f64, mut f: F) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.len())
        .map(|i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + h;
            let up = f(&probe);
            probe.data_mut()[i] = orig - h;
            let down = f(&probe);
            probe.data_mut()[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / max(||a|| + ||b||, 1e-3)`. The floor turns the measure into an
/// absolute one for gradients that are zero analytically, such as a conv bias
/// feeding a train-mode batch norm.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / (na + nb).max(1e-3)
}

/// `sum(probe * y)`: a scalar whose gradient with respect to `y` is `probe`.
pub fn probe_loss(y: &Tensor<f64>, probe: &Tensor<f64>) -> f64 {
    y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
}

pub fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("class{i}")).collect()
}

pub fn tiny_config(classes: usize) -> SedCnnConfig {
    SedCnnConfig {
        input_mels: 8,
        input_frames: 8,
        conv_filters: 3,
        num_classes: classes,
        ..SedCnnConfig::default()
    }
}

pub fn tiny_model<T: Scalar>(classes: usize, seed: u64) -> SedCnn<T> {
    SedCnn::new(tiny_config(classes), names(classes), &mut Rng::new(seed)).unwrap()
}

pub fn random_input<T: Scalar>(batch: usize, config: &SedCnnConfig, rng: &mut Rng) -> Tensor<T> {
    random_tensor(&[batch, 1, config.input_mels, config.input_frames], rng, 3.0)
}

pub fn random_targets<T: Scalar>(batch: usize, classes: usize, rng: &mut Rng) -> Tensor<T> {
    let data = (0..batch * classes).map(|_| T::of(rng.below(2) as f64)).collect();
    Tensor::from_vec(&[batch, classes], data).unwrap()
}

pub fn event_classes(n: usize) -> Vec<EventClass> {
    EventClass::list(&names(n))
}
