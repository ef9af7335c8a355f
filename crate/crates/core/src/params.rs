//! Learnable weight blocks shared by the attention modules and the head.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Deterministic generator used for every seeded draw in the crate.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Weight `[out, in]` and bias `[out]` of a 1x1 convolution or a fully
/// connected layer; the two only differ in which tape op consumes them.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Tape handles for an [`Affine`] block.
#[derive(Clone, Copy, Debug)]
pub struct AffineVars {
    pub weight: Var,
    pub bias: Var,
}

impl Affine {
    /// Uniform weights in `[-1/sqrt(fan_in), 1/sqrt(fan_in))`, zero bias.
    pub fn init(out_dim: usize, in_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / libm::sqrt(in_dim as f64);
        let weight = Tensor::from_fn(&[out_dim, in_dim], |_| rng.gen_range(-bound..bound));
        Affine {
            weight,
            bias: Tensor::zeros(&[out_dim]),
        }
    }

    pub fn from_parts(weight: Tensor, bias: Tensor) -> Self {
        Affine { weight, bias }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn register(&self, tape: &mut Tape) -> AffineVars {
        AffineVars {
            weight: tape.leaf(self.weight.clone()),
            bias: tape.leaf(self.bias.clone()),
        }
    }

    pub fn tensors(&self) -> [&Tensor; 2] {
        [&self.weight, &self.bias]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

impl AffineVars {
    pub fn vars(&self) -> [Var; 2] {
        [self.weight, self.bias]
    }
}
