use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::{relu, Dense, Param, Relu, Rng, Scalar, Tensor};

pub const ADAPTER_HIDDEN: usize = 32;

/// What the adapter reads from the frozen source model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterInput {
    /// Pre-sigmoid source outputs.
    #[default]
    Logits,
    /// Source outputs after the sigmoid.
    Probabilities,
}

impl AdapterInput {
    pub fn code(self) -> u32 {
        match self {
            AdapterInput::Logits => 0,
            AdapterInput::Probabilities => 1,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(AdapterInput::Logits),
            1 => Ok(AdapterInput::Probabilities),
            _ => Err(Error::Format(format!("unknown adapter input code {code}"))),
        }
    }
}

impl FromStr for AdapterInput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logits" => Ok(AdapterInput::Logits),
            "probabilities" | "probs" => Ok(AdapterInput::Probabilities),
            _ => Err(Error::Config(format!("unknown adapter input `{s}`"))),
        }
    }
}

/// Two dense layers mapping the source's N outputs onto N+1 logits.
#[derive(Clone, Debug)]
pub struct NeuralAdapter<T = f32> {
    pub hidden: Dense<T>,
    pub output: Dense<T>,
    pub input: AdapterInput,
    relu: Relu<T>,
}

impl<T: Scalar> NeuralAdapter<T> {
    pub fn new(n_source: usize, hidden: usize, n_out: usize, input: AdapterInput, rng: &mut Rng) -> Result<Self> {
        if n_source == 0 || hidden == 0 || n_out == 0 {
            return Err(Error::Config(format!(
                "adapter dimensions must be positive, got {n_source} -> {hidden} -> {n_out}"
            )));
        }
        Ok(NeuralAdapter {
            hidden: Dense::new("adapter.hidden", n_source, hidden, rng),
            output: Dense::new("adapter.output", hidden, n_out, rng),
            input,
            relu: Relu::new(),
        })
    }

    pub fn from_layers(hidden: Dense<T>, output: Dense<T>, input: AdapterInput) -> Result<Self> {
        if hidden.out_dim() != output.in_dim() {
            return Err(Error::shape(
                "adapter",
                format!("hidden width {} vs output input {}", hidden.out_dim(), output.in_dim()),
            ));
        }
        Ok(NeuralAdapter {
            hidden,
            output,
            input,
            relu: Relu::new(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.hidden.in_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden.out_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.output.out_dim()
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        vec![&self.hidden.weight, &self.hidden.bias, &self.output.weight, &self.output.bias]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![
            &mut self.hidden.weight,
            &mut self.hidden.bias,
            &mut self.output.weight,
            &mut self.output.bias,
        ]
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let h = self.hidden.infer(x)?.map(relu);
        self.output.infer(&h)
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let h = self.hidden.forward(x)?;
        let h = self.relu.forward(&h);
        self.output.forward(&h)
    }

    /// Returns the gradient with respect to the adapter input.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.output.backward(grad_out)?;
        let g = self.relu.backward(&g)?;
        self.hidden.backward(&g)
    }

    pub fn cast<U: Scalar>(&self) -> NeuralAdapter<U> {
        NeuralAdapter {
            hidden: Dense::from_params(self.hidden.weight.cast(), self.hidden.bias.cast()),
            output: Dense::from_params(self.output.weight.cast(), self.output.bias.cast()),
            input: self.input,
            relu: Relu::new(),
        }
    }
}
