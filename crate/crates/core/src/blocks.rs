//! Token mixer and feed-forward blocks operating on `m×k` feature maps.
//!
//! * WCP: Haar analysis of the map, one depthwise-separable convolution per
//!   subband (branches DC1..DC4 for LL, LH, HL, HH), Haar synthesis.
//! * MSP: mean of stride-1 average pools with 3×3, 5×5 and 7×7 windows.
//! * MWPA: WCP followed by MSP, each switchable for ablations.
//! * GDFN: `P' = W⁰ₚ·(φ(W¹d W¹ₚ P) ⊙ W²d W²ₚ P) + P` with exact GELU `φ`.
//!
//! The wavelet transform and the depthwise convolutions treat the `m×k`
//! map as a single-channel 2D grid.

use crate::autodiff::{Param, Parameterized, Tape, Var};
use crate::error::Result;
use crate::layers::{Depthwise, Init, Linear, Pointwise};
use crate::tensor::Tensor;

/// Depthwise 3×3 followed by pointwise 1×1, both with bias, on one channel.
#[derive(Clone, Debug, PartialEq)]
pub struct SeparableConv {
    pub depthwise: Depthwise,
    pub pointwise: Pointwise,
}

impl SeparableConv {
    pub fn new(name: &str, init: &mut Init) -> Self {
        SeparableConv {
            depthwise: Depthwise::new(&format!("{name}.dw"), init),
            pointwise: Pointwise::new(&format!("{name}.pw"), 1, 1, init),
        }
    }

    pub fn identity(name: &str) -> Self {
        SeparableConv {
            depthwise: Depthwise::identity(&format!("{name}.dw")),
            pointwise: Pointwise::identity(&format!("{name}.pw"), 1),
        }
    }

    /// `x` is a `1×H×W` map.
    pub fn record(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let y = self.depthwise.record_map(tape, x)?;
        self.pointwise.record_map(tape, y)
    }
}

impl Parameterized for SeparableConv {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.depthwise.params();
        p.extend(self.pointwise.params());
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.depthwise.params_mut();
        p.extend(self.pointwise.params_mut());
        p
    }
}

/// Parameters of the wavelet coefficient processing block: one separable
/// convolution per subband, in LL, LH, HL, HH order.
#[derive(Clone, Debug, PartialEq)]
pub struct WcpWeights {
    pub branches: [SeparableConv; 4],
}

impl WcpWeights {
    pub fn new(name: &str, init: &mut Init) -> Self {
        WcpWeights {
            branches: std::array::from_fn(|i| {
                SeparableConv::new(&format!("{name}.dc{}", i + 1), init)
            }),
        }
    }

    /// Branches that pass every coefficient through unchanged.
    pub fn identity(name: &str) -> Self {
        WcpWeights {
            branches: std::array::from_fn(|i| SeparableConv::identity(&format!("{name}.dc{}", i + 1))),
        }
    }

    /// `x` is an `m×k` map; output has the same shape.
    pub fn record(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let dims = tape.value(x).dims().to_vec();
        let (m, k) = (dims[0], dims[1]);
        let map = tape.reshape(x, [1, m, k])?;
        let bands = tape.dwt2(map)?;
        let mut enhanced = [bands[0]; 4];
        for (i, (branch, band)) in self.branches.iter().zip(bands).enumerate() {
            enhanced[i] = branch.record(tape, band)?;
        }
        let y = tape.idwt2(enhanced, m, k)?;
        tape.reshape(y, dims)
    }
}

impl Parameterized for WcpWeights {
    fn params(&self) -> Vec<&Param> {
        self.branches.iter().flat_map(|b| b.params()).collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.branches.iter_mut().flat_map(|b| b.params_mut()).collect()
    }
}

/// Multiscale pooling: stride 1, valid-count borders, arithmetic mean of
/// the pooled maps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MspConfig {
    pub kernels: Vec<usize>,
}

impl Default for MspConfig {
    fn default() -> Self {
        MspConfig {
            kernels: vec![3, 5, 7],
        }
    }
}

impl MspConfig {
    pub fn record(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let dims = tape.value(x).dims().to_vec();
        let map = tape.reshape(x, [1, dims[0], dims[1]])?;
        let mut acc: Option<Var> = None;
        for &k in &self.kernels {
            let pooled = tape.avg_pool2d(map, k)?;
            acc = Some(match acc {
                Some(a) => tape.add(a, pooled)?,
                None => pooled,
            });
        }
        let total = acc.expect("at least one pooling kernel");
        let mean = tape.scale(total, 1.0 / self.kernels.len() as f64);
        tape.reshape(mean, dims)
    }
}

/// Window of the single pooling layer used when multiscale pooling is
/// switched off.
pub const PLAIN_POOL_KERNEL: usize = 3;

/// Which halves of the token mixer are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MixerToggles {
    pub wcp: bool,
    pub msp: bool,
}

impl MixerToggles {
    pub const ALL: MixerToggles = MixerToggles {
        wcp: true,
        msp: true,
    };
}

/// MWPA mixer: `pool(wcp(F))`, where `pool` is MSP or a single 3×3 average
/// pool and `wcp` is skipped when toggled off (`wcp` may be `None` then).
pub fn record_mwpa(
    tape: &mut Tape,
    x: Var,
    wcp: Option<&WcpWeights>,
    toggles: MixerToggles,
) -> Result<Var> {
    let enhanced = match (toggles.wcp, wcp) {
        (true, Some(w)) => w.record(tape, x)?,
        (true, None) => {
            return Err(crate::Error::config("WCP enabled but no WCP weights given"))
        }
        (false, _) => x,
    };
    if toggles.msp {
        MspConfig::default().record(tape, enhanced)
    } else {
        let dims = tape.value(enhanced).dims().to_vec();
        let map = tape.reshape(enhanced, [1, dims[0], dims[1]])?;
        let pooled = tape.avg_pool2d(map, PLAIN_POOL_KERNEL)?;
        tape.reshape(pooled, dims)
    }
}

/// Gated depthwise feed-forward parameters with expansion ratio `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct GdfnWeights {
    /// W¹ₚ: `k → r·k`, feeds the GELU branch.
    pub expand_gate: Linear,
    /// W²ₚ: `k → r·k`, feeds the linear branch.
    pub expand_value: Linear,
    /// W¹d
    pub dw_gate: Depthwise,
    /// W²d
    pub dw_value: Depthwise,
    /// W⁰ₚ: `r·k → k`.
    pub project: Linear,
}

impl GdfnWeights {
    pub fn new(name: &str, features: usize, ratio: usize, init: &mut Init) -> Self {
        let hidden = features * ratio;
        GdfnWeights {
            expand_gate: Linear::new(&format!("{name}.pw1"), features, hidden, init),
            expand_value: Linear::new(&format!("{name}.pw2"), features, hidden, init),
            dw_gate: Depthwise::new(&format!("{name}.dw1"), init),
            dw_value: Depthwise::new(&format!("{name}.dw2"), init),
            project: Linear::new(&format!("{name}.pw0"), hidden, features, init),
        }
    }

    /// `W⁰ₚ·Gating(P)`, without the residual.
    pub fn record_projection(&self, tape: &mut Tape, p: Var) -> Result<Var> {
        let a = self.expand_gate.record(tape, p)?;
        let a = self.dw_gate.record(tape, a)?;
        let a = tape.gelu(a);
        let b = self.expand_value.record(tape, p)?;
        let b = self.dw_value.record(tape, b)?;
        let gate = tape.mul(a, b)?;
        self.project.record(tape, gate)
    }

    /// Full block including the residual.
    pub fn record(&self, tape: &mut Tape, p: Var) -> Result<Var> {
        let y = self.record_projection(tape, p)?;
        tape.add(y, p)
    }
}

impl Parameterized for GdfnWeights {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.expand_gate.params();
        p.extend(self.expand_value.params());
        p.extend(self.dw_gate.params());
        p.extend(self.dw_value.params());
        p.extend(self.project.params());
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.expand_gate.params_mut();
        p.extend(self.expand_value.params_mut());
        p.extend(self.dw_gate.params_mut());
        p.extend(self.dw_value.params_mut());
        p.extend(self.project.params_mut());
        p
    }
}

/// Ungated feed-forward used when GDFN is switched off:
/// `k → r·k`, GELU, `r·k → k`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlainFfn {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl PlainFfn {
    pub fn new(name: &str, features: usize, ratio: usize, init: &mut Init) -> Self {
        let hidden = features * ratio;
        PlainFfn {
            fc1: Linear::new(&format!("{name}.fc1"), features, hidden, init),
            fc2: Linear::new(&format!("{name}.fc2"), hidden, features, init),
        }
    }

    pub fn record(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let h = self.fc1.record(tape, x)?;
        let h = tape.gelu(h);
        self.fc2.record(tape, h)
    }
}

impl Parameterized for PlainFfn {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.fc1.params();
        p.extend(self.fc2.params());
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.fc1.params_mut();
        p.extend(self.fc2.params_mut());
        p
    }
}

fn run(x: &Tensor, f: impl FnOnce(&mut Tape, Var) -> Result<Var>) -> Result<Tensor> {
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone());
    let out = f(&mut tape, v)?;
    Ok(tape.value(out).clone())
}

/// Wavelet coefficient processing of an `m×k` map.
pub fn wcp_forward(f: &Tensor, w: &WcpWeights) -> Result<Tensor> {
    run(f, |t, x| w.record(t, x))
}

/// Multiscale pooling of an `m×k` map.
pub fn msp_forward(x: &Tensor) -> Result<Tensor> {
    run(x, |t, v| MspConfig::default().record(t, v))
}

pub fn mwpa_forward(f: &Tensor, w: Option<&WcpWeights>, toggles: MixerToggles) -> Result<Tensor> {
    run(f, |t, x| record_mwpa(t, x, w, toggles))
}

pub fn gdfn_forward(p: &Tensor, w: &GdfnWeights) -> Result<Tensor> {
    run(p, |t, x| w.record(t, x))
}
