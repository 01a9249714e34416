use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::datagen::{FeatureNorm, FEATURE_CLAMP};
use crate::error::{Error, Result};
use crate::nncore::{
    glorot_uniform, sigmoid, BatchNorm2d, Conv2d, Dense, MaxPool2d, Padding, Param, Relu, Rng,
    Scalar, Tensor,
};

pub const NUM_CONV_BLOCKS: usize = 3;
pub const KERNEL: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SedCnnConfig {
    pub input_mels: usize,
    pub input_frames: usize,
    pub conv_filters: usize,
    pub num_conv_blocks: usize,
    pub kernel: usize,
    pub pool: (usize, usize),
    pub num_classes: usize,
}

impl Default for SedCnnConfig {
    fn default() -> Self {
        SedCnnConfig {
            input_mels: 128,
            input_frames: 128,
            conv_filters: 64,
            num_conv_blocks: NUM_CONV_BLOCKS,
            kernel: KERNEL,
            pool: (2, 2),
            num_classes: 1,
        }
    }
}

impl SedCnnConfig {
    pub fn with_classes(mut self, n: usize) -> Self {
        self.num_classes = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_conv_blocks != NUM_CONV_BLOCKS {
            return Err(Error::Config(format!(
                "the detector has {NUM_CONV_BLOCKS} conv blocks, config asks for {}",
                self.num_conv_blocks
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be at least 1".into()));
        }
        if self.conv_filters == 0 || self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::Config(format!(
                "need positive filters and an odd kernel, got {} filters, kernel {}",
                self.conv_filters, self.kernel
            )));
        }
        let (ph, pw) = self.pool;
        let fh = ph.pow(self.num_conv_blocks as u32);
        let fw = pw.pow(self.num_conv_blocks as u32);
        if ph == 0 || pw == 0 || self.input_mels % fh != 0 || self.input_frames % fw != 0 {
            return Err(Error::Config(format!(
                "input {}x{} is not divisible by the total pooling {fh}x{fw}",
                self.input_mels, self.input_frames
            )));
        }
        Ok(())
    }

    /// Spatial size after the last block.
    pub fn final_hw(&self) -> (usize, usize) {
        let n = self.num_conv_blocks as u32;
        (self.input_mels / self.pool.0.pow(n), self.input_frames / self.pool.1.pow(n))
    }

    pub fn flat_features(&self) -> usize {
        let (h, w) = self.final_hw();
        self.conv_filters * h * w
    }

    /// Learnable scalars: conv weights and biases, BN gamma and beta, head.
    pub fn param_count(&self) -> usize {
        let k2 = self.kernel * self.kernel;
        let f = self.conv_filters;
        let mut n = 0;
        let mut c_in = 1;
        for _ in 0..self.num_conv_blocks {
            n += f * c_in * k2 + f + 2 * f;
            c_in = f;
        }
        n + self.flat_features() * self.num_classes + self.num_classes
    }
}

#[derive(Clone, Debug)]
pub struct ConvBlock<T = f32> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
    relu: Relu<T>,
    pool: MaxPool2d,
}

impl<T: Scalar> ConvBlock<T> {
    fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.conv.infer(x)?;
        let y = self.bn.infer(&y)?;
        let y = y.map(crate::nncore::relu);
        self.pool.infer(&y)
    }

    fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.conv.forward(x)?;
        let y = self.bn.forward(&y)?;
        let y = self.relu.forward(&y);
        self.pool.forward(&y)
    }

    fn backward(&mut self, g: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.pool.backward(g)?;
        let g = self.relu.backward(&g)?;
        let g = self.bn.backward(&g)?;
        self.conv.backward(&g)
    }
}

/// Three conv blocks (3x3 conv, batch norm, ReLU, 2x2 max pool) and a dense
/// sigmoid head with one output per class.
#[derive(Clone, Debug)]
pub struct SedCnn<T = f32> {
    pub config: SedCnnConfig,
    pub class_names: Vec<String>,
    pub norm: FeatureNorm,
    pub blocks: Vec<ConvBlock<T>>,
    pub head: Dense<T>,
    prefix: String,
}

impl<T: Scalar> SedCnn<T> {
    pub fn new(config: SedCnnConfig, class_names: Vec<String>, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        if class_names.len() != config.num_classes {
            return Err(Error::Config(format!(
                "{} class names for {} outputs",
                class_names.len(),
                config.num_classes
            )));
        }
        let unique: BTreeSet<&String> = class_names.iter().collect();
        if unique.len() != class_names.len() {
            return Err(Error::Config("duplicate class names".into()));
        }
        let mut blocks = Vec::with_capacity(config.num_conv_blocks);
        let mut c_in = 1;
        for i in 0..config.num_conv_blocks {
            blocks.push(ConvBlock {
                conv: Conv2d::new(
                    &format!("block{i}.conv"),
                    c_in,
                    config.conv_filters,
                    config.kernel,
                    Padding::Same,
                    rng,
                ),
                bn: BatchNorm2d::new(&format!("block{i}.bn"), config.conv_filters),
                relu: Relu::new(),
                pool: MaxPool2d::new(config.pool),
            });
            c_in = config.conv_filters;
        }
        let head = Dense::new("head", config.flat_features(), config.num_classes, rng);
        Ok(SedCnn {
            config,
            class_names,
            norm: FeatureNorm::default(),
            blocks,
            head,
            prefix: String::new(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    /// Renames every parameter to `prefix + local name`.
    pub fn set_prefix(&mut self, prefix: &str) {
        let old = std::mem::replace(&mut self.prefix, prefix.to_string());
        for p in self.params_mut() {
            let local = p.name.strip_prefix(old.as_str()).unwrap_or(&p.name).to_string();
            p.name = format!("{prefix}{local}");
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut v = Vec::new();
        for b in &self.blocks {
            v.extend([&b.conv.weight, &b.conv.bias, &b.bn.gamma, &b.bn.beta]);
        }
        v.extend([&self.head.weight, &self.head.bias]);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = Vec::new();
        for b in &mut self.blocks {
            v.push(&mut b.conv.weight);
            v.push(&mut b.conv.bias);
            v.push(&mut b.bn.gamma);
            v.push(&mut b.bn.beta);
        }
        v.push(&mut self.head.weight);
        v.push(&mut self.head.bias);
        v
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let s = x.shape();
        if s.len() != 4 || s[1] != 1 || s[2] != self.config.input_mels || s[3] != self.config.input_frames {
            return Err(Error::shape(
                "SedCnn input",
                format!(
                    "got {s:?}, expected [B, 1, {}, {}]",
                    self.config.input_mels, self.config.input_frames
                ),
            ));
        }
        Ok(())
    }

    fn normalize(&self, x: &Tensor<T>) -> Tensor<T> {
        let (lo, hi) = (T::of(-FEATURE_CLAMP as f64), T::of(FEATURE_CLAMP as f64));
        let mean = T::of(self.norm.mean as f64);
        let std = T::of(self.norm.std as f64);
        x.map(|v| (v.max(lo).min(hi) - mean) / std)
    }

    fn flatten(y: Tensor<T>) -> Result<Tensor<T>> {
        let b = y.shape()[0];
        let n = y.len() / b;
        y.reshape(&[b, n])
    }

    /// Inference-mode pre-sigmoid outputs `[B, K]`.
    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut y = self.normalize(x);
        for b in &self.blocks {
            y = b.infer(&y)?;
        }
        self.head.infer(&Self::flatten(y)?)
    }

    pub fn predict_probs(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.logits(x)?.map(sigmoid))
    }

    /// Train-mode forward pass (batch statistics) caching for [`backward`](Self::backward).
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut y = self.normalize(x);
        for b in &mut self.blocks {
            y = b.forward(&y)?;
        }
        let y = Self::flatten(y)?;
        self.head.forward(&y)
    }

    pub fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<()> {
        let g = self.head.backward(grad_logits)?;
        let b = g.shape()[0];
        let (h, w) = self.config.final_hw();
        let mut g = g.reshape(&[b, self.config.conv_filters, h, w])?;
        for blk in self.blocks.iter_mut().rev() {
            g = blk.backward(&g)?;
        }
        Ok(())
    }

    /// Batch-norm layers whose gamma and beta are both named in `names` switch
    /// to running statistics. Names this model does not own are an error.
    pub fn set_frozen(&mut self, names: &BTreeSet<String>) -> Result<()> {
        let own: BTreeSet<&String> = self.params().into_iter().map(|p| &p.name).collect();
        if let Some(bad) = names.iter().find(|n| !own.contains(n)) {
            return Err(Error::Config(format!("cannot freeze unknown parameter `{bad}`")));
        }
        for b in &mut self.blocks {
            b.bn.frozen = names.contains(&b.bn.gamma.name) && names.contains(&b.bn.beta.name);
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> SedCnn<U> {
        SedCnn {
            config: self.config.clone(),
            class_names: self.class_names.clone(),
            norm: self.norm,
            blocks: self
                .blocks
                .iter()
                .map(|b| {
                    let mut bn = BatchNorm2d::new("", b.bn.gamma.value.len());
                    bn.gamma = b.bn.gamma.cast();
                    bn.beta = b.bn.beta.cast();
                    bn.running_mean = b.bn.running_mean.cast();
                    bn.running_var = b.bn.running_var.cast();
                    bn.momentum = b.bn.momentum;
                    bn.eps = b.bn.eps;
                    bn.frozen = b.bn.frozen;
                    ConvBlock {
                        conv: Conv2d::from_params(b.conv.weight.cast(), b.conv.bias.cast(), b.conv.padding),
                        bn,
                        relu: Relu::new(),
                        pool: MaxPool2d::new(b.pool.pool),
                    }
                })
                .collect(),
            head: Dense::from_params(self.head.weight.cast(), self.head.bias.cast()),
            prefix: self.prefix.clone(),
        }
    }

    /// Expanded copy with one extra output for `new_class`.
    ///
    /// Convolution, normalization and input statistics are copied exactly, the
    /// existing head rows are copied exactly, and the new row gets fresh
    /// Glorot-uniform weights with a zero bias.
    pub fn migrate(&self, new_class: &str, rng: &mut Rng) -> Result<SedCnn<T>> {
        if self.class_names.iter().any(|c| c == new_class) {
            return Err(Error::Config(format!(
                "class `{new_class}` is already learned by the source model"
            )));
        }
        if self.head.out_dim() != self.config.num_classes || self.class_names.len() != self.config.num_classes {
            return Err(Error::Config("source head does not match its class count".into()));
        }
        let n = self.config.num_classes;
        let d = self.config.flat_features();
        let mut target = self.clone();
        target.config.num_classes = n + 1;
        target.class_names.push(new_class.to_string());

        let fresh: Tensor<T> = glorot_uniform(&[1, d], d, n + 1, rng);
        let mut w = self.head.weight.value.data().to_vec();
        w.extend_from_slice(fresh.data());
        let mut b = self.head.bias.value.data().to_vec();
        b.push(T::zero());
        target.head = Dense::from_params(
            Param::new(self.head.weight.name.clone(), Tensor::from_vec(&[n + 1, d], w)?),
            Param::new(self.head.bias.name.clone(), Tensor::from_vec(&[n + 1], b)?),
        );
        for blk in &mut target.blocks {
            blk.conv.clear_cache();
            blk.bn.clear_cache();
            blk.relu.clear_cache();
            blk.pool.clear_cache();
        }
        target.zero_grad();
        Ok(target)
    }
}
