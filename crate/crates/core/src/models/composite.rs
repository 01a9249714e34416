use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::nncore::{sigmoid, Param, Scalar, Tensor};
use crate::training::Trainable;

use super::adapter::{AdapterInput, NeuralAdapter};
use super::sedcnn::SedCnn;

pub const SOURCE_PREFIX: &str = "source.";
pub const TARGET_PREFIX: &str = "target.";

/// Logits of the three outputs for one batch.
#[derive(Clone, Debug)]
pub struct CompositeLogits<T = f32> {
    /// Adapter branch.
    pub a: Tensor<T>,
    /// Target branch.
    pub b: Tensor<T>,
    /// Element-wise sum of the two.
    pub c: Tensor<T>,
}

impl<T: Scalar> CompositeLogits<T> {
    pub fn probabilities(&self) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
        (self.a.map(sigmoid), self.b.map(sigmoid), self.c.map(sigmoid))
    }
}

/// Frozen source model feeding an adapter, summed with an expanded target model.
#[derive(Clone, Debug)]
pub struct AdapterComposite<T = f32> {
    pub source: SedCnn<T>,
    pub adapter: NeuralAdapter<T>,
    pub target: SedCnn<T>,
}

impl<T: Scalar> AdapterComposite<T> {
    pub fn compose(mut source: SedCnn<T>, adapter: NeuralAdapter<T>, mut target: SedCnn<T>) -> Result<Self> {
        let n = source.num_classes();
        if adapter.input_dim() != n {
            return Err(Error::shape(
                "compose",
                format!("adapter takes {} inputs but the source has {n} outputs", adapter.input_dim()),
            ));
        }
        if adapter.output_dim() != target.num_classes() {
            return Err(Error::shape(
                "compose",
                format!(
                    "adapter emits {} outputs but the target has {}",
                    adapter.output_dim(),
                    target.num_classes()
                ),
            ));
        }
        if target.num_classes() != n + 1 {
            return Err(Error::shape(
                "compose",
                format!("target must have {} outputs, has {}", n + 1, target.num_classes()),
            ));
        }
        if target.class_names[..n] != source.class_names[..] {
            return Err(Error::Config("target classes do not extend the source classes in order".into()));
        }
        if (source.config.input_mels, source.config.input_frames)
            != (target.config.input_mels, target.config.input_frames)
        {
            return Err(Error::shape("compose", "source and target disagree on input geometry"));
        }
        source.set_prefix(SOURCE_PREFIX);
        target.set_prefix(TARGET_PREFIX);
        Ok(AdapterComposite { source, adapter, target })
    }

    pub fn num_classes(&self) -> usize {
        self.target.num_classes()
    }

    pub fn class_names(&self) -> &[String] {
        &self.target.class_names
    }

    /// Names of every source parameter, the freeze list for adapter training.
    pub fn source_param_names(&self) -> BTreeSet<String> {
        self.source.params().into_iter().map(|p| p.name.clone()).collect()
    }

    fn adapter_input(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let s = self.source.logits(x)?;
        Ok(match self.adapter.input {
            AdapterInput::Logits => s,
            AdapterInput::Probabilities => s.map(sigmoid),
        })
    }

    pub fn logits(&self, x: &Tensor<T>) -> Result<CompositeLogits<T>> {
        let a = self.adapter.infer(&self.adapter_input(x)?)?;
        let b = self.target.logits(x)?;
        let mut c = a.clone();
        c.add_assign(&b)?;
        Ok(CompositeLogits { a, b, c })
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let input = self.adapter_input(x)?;
        let mut c = self.adapter.forward(&input)?;
        let b = self.target.forward_train(x)?;
        c.add_assign(&b)?;
        Ok(c)
    }

    /// The summed output passes its gradient unchanged to both branches.
    pub fn backward(&mut self, grad_c: &Tensor<T>) -> Result<()> {
        self.adapter.backward(grad_c)?;
        self.target.backward(grad_c)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.source.params();
        v.extend(self.adapter.params());
        v.extend(self.target.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.source.params_mut();
        v.extend(self.adapter.params_mut());
        v.extend(self.target.params_mut());
        v
    }

    pub fn set_frozen(&mut self, names: &BTreeSet<String>) -> Result<()> {
        let own: BTreeSet<String> = self.params().into_iter().map(|p| p.name.clone()).collect();
        if let Some(bad) = names.iter().find(|n| !own.contains(*n)) {
            return Err(Error::Config(format!("cannot freeze unknown parameter `{bad}`")));
        }
        let target: BTreeSet<String> = names.iter().filter(|n| n.starts_with(TARGET_PREFIX)).cloned().collect();
        self.target.set_frozen(&target)
    }

    pub fn cast<U: Scalar>(&self) -> AdapterComposite<U> {
        AdapterComposite {
            source: self.source.cast(),
            adapter: self.adapter.cast(),
            target: self.target.cast(),
        }
    }
}

impl Trainable for SedCnn<f32> {
    fn num_outputs(&self) -> usize {
        self.num_classes()
    }

    fn params(&self) -> Vec<&Param<f32>> {
        SedCnn::params(self)
    }

    fn params_mut(&mut self) -> Vec<&mut Param<f32>> {
        SedCnn::params_mut(self)
    }

    fn set_frozen(&mut self, names: &BTreeSet<String>) -> Result<()> {
        SedCnn::set_frozen(self, names)
    }

    fn forward_train(&mut self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        SedCnn::forward_train(self, x)
    }

    fn backward(&mut self, grad_logits: &Tensor<f32>) -> Result<()> {
        SedCnn::backward(self, grad_logits)
    }

    fn predict(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.predict_probs(x)
    }
}

/// Training and validation use the summed output C.
impl Trainable for AdapterComposite<f32> {
    fn num_outputs(&self) -> usize {
        self.num_classes()
    }

    fn params(&self) -> Vec<&Param<f32>> {
        AdapterComposite::params(self)
    }

    fn params_mut(&mut self) -> Vec<&mut Param<f32>> {
        AdapterComposite::params_mut(self)
    }

    fn set_frozen(&mut self, names: &BTreeSet<String>) -> Result<()> {
        AdapterComposite::set_frozen(self, names)
    }

    fn forward_train(&mut self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        AdapterComposite::forward_train(self, x)
    }

    fn backward(&mut self, grad_logits: &Tensor<f32>) -> Result<()> {
        AdapterComposite::backward(self, grad_logits)
    }

    fn predict(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        Ok(self.logits(x)?.c.map(sigmoid))
    }
}
