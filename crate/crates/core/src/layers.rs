//! Small parameterised layers shared by the blocks and the model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Param, Parameterized, Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

/// Seeded source of initial weights: `uniform(−1/√fan_in, 1/√fan_in)`.
pub struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    pub fn new(seed: u64) -> Self {
        Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform(&mut self, dims: impl Into<Vec<usize>>, fan_in: usize) -> Tensor {
        let dims = dims.into();
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n = dims.iter().product();
        let data = (0..n).map(|_| self.rng.gen_range(-bound..=bound)).collect();
        Tensor::from_vec(dims, data).expect("extents are nonzero")
    }
}

fn zeros(dims: impl Into<Vec<usize>>) -> Tensor {
    Tensor::zeros(dims).expect("extents are nonzero")
}

/// Token-wise affine map `[T×in] → [T×out]` (a 1×1 convolution with the
/// feature axis as channels). Weight is stored `out×in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new(name: &str, input: usize, output: usize, init: &mut Init) -> Self {
        Linear {
            weight: Param::new(format!("{name}.weight"), init.uniform([output, input], input)),
            bias: Param::new(format!("{name}.bias"), zeros([output])),
        }
    }

    pub fn from_tensors(name: &str, weight: Tensor, bias: Tensor) -> Self {
        Linear {
            weight: Param::new(format!("{name}.weight"), weight),
            bias: Param::new(format!("{name}.bias"), bias),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.dims()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.dims()[0]
    }

    pub fn record(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(&self.weight);
        let b = tape.param(&self.bias);
        tape.linear(x, w, Some(b))
    }
}

impl Parameterized for Linear {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Single-channel 3×3 depthwise convolution with bias, applied to a 2D
/// `H×W` map.
#[derive(Clone, Debug, PartialEq)]
pub struct Depthwise {
    pub kernel: Param,
    pub bias: Param,
}

pub const DEPTHWISE_KERNEL: usize = 3;

impl Depthwise {
    pub fn new(name: &str, init: &mut Init) -> Self {
        let k = DEPTHWISE_KERNEL;
        Depthwise {
            kernel: Param::new(format!("{name}.kernel"), init.uniform([1, k, k], k * k)),
            bias: Param::new(format!("{name}.bias"), zeros([1])),
        }
    }

    /// Delta kernel, zero bias.
    pub fn identity(name: &str) -> Self {
        let k = DEPTHWISE_KERNEL;
        let mut kernel = zeros([1, k, k]);
        kernel.data_mut()[(k * k) / 2] = 1.0;
        Depthwise {
            kernel: Param::new(format!("{name}.kernel"), kernel),
            bias: Param::new(format!("{name}.bias"), zeros([1])),
        }
    }

    /// Applies to a `1×H×W` map.
    pub fn record_map(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let k = tape.param(&self.kernel);
        let b = tape.param(&self.bias);
        let y = tape.depthwise_conv2d(x, k)?;
        tape.add_channel_bias(y, b)
    }

    /// Applies to a 2D `H×W` tensor by viewing it as one channel.
    pub fn record(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let dims = tape.value(x).dims().to_vec();
        let m = tape.reshape(x, [1, dims[0], dims[1]])?;
        let y = self.record_map(tape, m)?;
        tape.reshape(y, dims)
    }
}

impl Parameterized for Depthwise {
    fn params(&self) -> Vec<&Param> {
        vec![&self.kernel, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.kernel, &mut self.bias]
    }
}

/// 1×1 convolution with bias on a `C×H×W` map, weights `C'×C`.
#[derive(Clone, Debug, PartialEq)]
pub struct Pointwise {
    pub weight: Param,
    pub bias: Param,
}

impl Pointwise {
    pub fn new(name: &str, input: usize, output: usize, init: &mut Init) -> Self {
        Pointwise {
            weight: Param::new(format!("{name}.weight"), init.uniform([output, input], input)),
            bias: Param::new(format!("{name}.bias"), zeros([output])),
        }
    }

    pub fn identity(name: &str, channels: usize) -> Self {
        Pointwise {
            weight: Param::new(
                format!("{name}.weight"),
                Tensor::eye(channels).expect("channels >= 1"),
            ),
            bias: Param::new(format!("{name}.bias"), zeros([channels])),
        }
    }

    pub fn record_map(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(&self.weight);
        let b = tape.param(&self.bias);
        let y = tape.pointwise_conv2d(x, w)?;
        tape.add_channel_bias(y, b)
    }
}

impl Parameterized for Pointwise {
    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Layer norm over the feature axis with learnable scale (init 1) and shift
/// (init 0).
#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm {
    pub scale: Param,
    pub shift: Param,
}

impl LayerNorm {
    pub fn new(name: &str, features: usize) -> Self {
        LayerNorm {
            scale: Param::new(
                format!("{name}.scale"),
                Tensor::full([features], 1.0).expect("features >= 1"),
            ),
            shift: Param::new(format!("{name}.shift"), zeros([features])),
        }
    }

    pub fn record(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let s = tape.param(&self.scale);
        let b = tape.param(&self.shift);
        tape.layer_norm(x, s, b)
    }
}

impl Parameterized for LayerNorm {
    fn params(&self) -> Vec<&Param> {
        vec![&self.scale, &self.shift]
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.scale, &mut self.shift]
    }
}

/// Sets every parameter of `module` to zero.
pub fn zero_out<M: Parameterized + ?Sized>(module: &mut M) {
    for p in module.params_mut() {
        p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
}
