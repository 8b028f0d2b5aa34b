use serde::{Deserialize, Serialize};

use super::arch::{Activation, BlockSpec, LayerDims};
use crate::numerics::{Rng, Tensor};

pub const PRELU_INIT_SLOPE: f64 = 0.25;

/// Parameters of one candidate block (one linear layer plus optional PReLU
/// slopes). The same struct carries gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    pub weight: Tensor,
    pub bias: Tensor,
    #[serde(default)]
    pub slope: Option<Tensor>,
}

impl BlockParams {
    /// He fan-in normal weights, zero biases, PReLU slope 0.25.
    pub fn init(spec: &BlockSpec, dims: &LayerDims, rng: &mut Rng) -> Self {
        let std = (2.0 / dims.fan_in() as f64).sqrt();
        let weight = Tensor::from_fn(&dims.weight_shape(), |_| rng.normal(0.0, std));
        BlockParams {
            weight,
            bias: Tensor::zeros(&[dims.out]),
            slope: match spec.activation {
                Activation::Prelu => Some(Tensor::filled(&[dims.out], PRELU_INIT_SLOPE)),
                Activation::Identity => None,
            },
        }
    }

    pub fn zeros_like(&self) -> Self {
        BlockParams {
            weight: Tensor::zeros(self.weight.shape()),
            bias: Tensor::zeros(self.bias.shape()),
            slope: self.slope.as_ref().map(|s| Tensor::zeros(s.shape())),
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        [&self.weight, &self.bias].into_iter().chain(self.slope.as_ref())
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        [&mut self.weight, &mut self.bias].into_iter().chain(self.slope.as_mut())
    }

    pub fn num_params(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &BlockParams) {
        for (a, b) in self.tensors_mut().zip(other.tensors()) {
            a.axpy(scale, b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.tensors_mut().for_each(|t| t.scale(s));
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(Tensor::is_finite)
    }

    /// Read the `i`-th scalar across weight, bias, slope in that order.
    pub fn get_flat(&self, mut i: usize) -> f64 {
        for t in self.tensors() {
            if i < t.len() {
                return t.data()[i];
            }
            i -= t.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn set_flat(&mut self, mut i: usize, v: f64) {
        for t in self.tensors_mut() {
            if i < t.len() {
                t.data_mut()[i] = v;
                return;
            }
            i -= t.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn matches_dims(&self, spec: &BlockSpec, dims: &LayerDims) -> bool {
        self.weight.shape() == dims.weight_shape().as_slice()
            && self.bias.shape() == [dims.out]
            && match (spec.activation, &self.slope) {
                (Activation::Prelu, Some(s)) => s.shape() == [dims.out],
                (Activation::Identity, None) => true,
                _ => false,
            }
    }
}
