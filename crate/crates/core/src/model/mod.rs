//! The full classifier: spatial embedding, sinusoidal positions, a stack of
//! pre-norm MWPT stages, mean pooling over the sequence and a linear head.
//!
//! One stage computes
//!
//! ```text
//! y   = x + MWPA(LN₁(x))
//! out = y + W⁰ₚ·Gating(LN₂(y))        (GDFN on)
//! out = y + FFN(LN₂(y))               (GDFN off)
//! ```

mod checkpoint;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use crate::autodiff::{Param, Parameterized, Tape, Var};
use crate::blocks::{record_mwpa, GdfnWeights, MixerToggles, PlainFfn, WcpWeights};
use crate::error::{Error, Result};
use crate::layers::{Depthwise, Init, LayerNorm, Linear};
use crate::tensor::Tensor;

/// Component switches mirroring the incremental ablation baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Ablation {
    /// Multiscale 3/5/7 pooling instead of a single 3×3 pool.
    pub msp: bool,
    /// Wavelet coefficient processing ahead of the pooling.
    pub wcp: bool,
    /// Gated depthwise feed-forward instead of a plain two-layer FFN.
    pub gdfn: bool,
    /// Depthwise convolution after the input projection.
    pub embedding: bool,
}

impl Ablation {
    pub const FULL: Ablation = Ablation {
        msp: true,
        wcp: true,
        gdfn: true,
        embedding: true,
    };

    pub const POOLFORMER: Ablation = Ablation {
        msp: false,
        wcp: false,
        gdfn: false,
        embedding: false,
    };

    /// Baselines BL1..=BL8: BL1 plain pooling, BL2 +MSP, BL3 +embedding,
    /// BL4 +WCP, BL5 +GDFN, BL6 +embedding+WCP, BL7 +MSP+embedding+WCP,
    /// BL8 everything.
    pub fn baseline(index: usize) -> Option<Ablation> {
        let off = Ablation::POOLFORMER;
        Some(match index {
            1 => off,
            2 => Ablation { msp: true, ..off },
            3 => Ablation {
                embedding: true,
                ..off
            },
            4 => Ablation { wcp: true, ..off },
            5 => Ablation { gdfn: true, ..off },
            6 => Ablation {
                embedding: true,
                wcp: true,
                ..off
            },
            7 => Ablation {
                msp: true,
                embedding: true,
                wcp: true,
                ..off
            },
            8 => Ablation::FULL,
            _ => return None,
        })
    }

    pub fn mixer(&self) -> MixerToggles {
        MixerToggles {
            wcp: self.wcp,
            msp: self.msp,
        }
    }

    pub(crate) fn bits(&self) -> u8 {
        (self.msp as u8) | (self.wcp as u8) << 1 | (self.gdfn as u8) << 2 | (self.embedding as u8) << 3
    }

    pub(crate) fn from_bits(bits: u8) -> Option<Ablation> {
        if bits & !0b1111 != 0 {
            return None;
        }
        Some(Ablation {
            msp: bits & 1 != 0,
            wcp: bits & 2 != 0,
            gdfn: bits & 4 != 0,
            embedding: bits & 8 != 0,
        })
    }
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation::FULL
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    /// Sequence length `m`.
    pub frames: usize,
    /// Width of each input feature vector.
    pub input_dim: usize,
    /// Embedding width `k`.
    pub embed_dim: usize,
    pub stages: usize,
    pub classes: usize,
    /// Feed-forward expansion ratio.
    pub expansion: usize,
    pub ablation: Ablation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            frames: 40,
            input_dim: 512,
            embed_dim: 64,
            stages: 6,
            classes: 25,
            expansion: 2,
            ablation: Ablation::FULL,
        }
    }
}

impl ModelConfig {
    /// Small configuration used by gradient checks: m=4, k=8, 2 stages,
    /// 3 classes.
    pub fn toy() -> Self {
        ModelConfig {
            frames: 4,
            input_dim: 6,
            embed_dim: 8,
            stages: 2,
            classes: 3,
            expansion: 2,
            ablation: Ablation::FULL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages < 1 {
            return Err(Error::config("stages must be at least 1"));
        }
        for (name, v) in [
            ("frames", self.frames),
            ("embed_dim", self.embed_dim),
            ("classes", self.classes),
        ] {
            if v < 2 {
                return Err(Error::config(format!("{name} must be at least 2, got {v}")));
            }
        }
        if self.input_dim < 1 || self.expansion < 1 {
            return Err(Error::config("input_dim and expansion must be at least 1"));
        }
        Ok(())
    }
}

/// Fixed sinusoidal table: `PE[t, 2i] = sin(t / 10000^{2i/k})`,
/// `PE[t, 2i+1] = cos(t / 10000^{2i/k})`.
pub fn positional_encoding(frames: usize, width: usize) -> Result<Tensor> {
    let mut data = vec![0.0; frames * width];
    for t in 0..frames {
        for j in 0..width {
            let i = j / 2;
            let angle = t as f64 / 10000f64.powf(2.0 * i as f64 / width as f64);
            data[t * width + j] = if j % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::from_vec([frames, width], data)
}

/// Input projection plus optional depthwise 3×3 over the `m×k` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialEmbedding {
    pub proj: Linear,
    pub dw: Option<Depthwise>,
}

impl SpatialEmbedding {
    pub fn record(&self, tape: &mut Tape, features: Var) -> Result<Var> {
        let x = self.proj.record(tape, features)?;
        match &self.dw {
            Some(dw) => dw.record(tape, x),
            None => Ok(x),
        }
    }
}

impl Parameterized for SpatialEmbedding {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.proj.params();
        if let Some(dw) = &self.dw {
            p.extend(dw.params());
        }
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.proj.params_mut();
        if let Some(dw) = &mut self.dw {
            p.extend(dw.params_mut());
        }
        p
    }
}

pub fn spatial_embed(features: &Tensor, emb: &SpatialEmbedding) -> Result<Tensor> {
    let mut tape = Tape::new();
    let x = tape.leaf(features.clone());
    let y = emb.record(&mut tape, x)?;
    Ok(tape.value(y).clone())
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeedForward {
    Gated(GdfnWeights),
    Plain(PlainFfn),
}

impl FeedForward {
    /// Output without the residual.
    pub fn record(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            FeedForward::Gated(g) => g.record_projection(tape, x),
            FeedForward::Plain(f) => f.record(tape, x),
        }
    }
}

/// Parameters of one MWPT stage.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockWeights {
    pub norm1: LayerNorm,
    pub wcp: Option<WcpWeights>,
    pub norm2: LayerNorm,
    pub ffn: FeedForward,
}

impl BlockWeights {
    pub fn new(name: &str, cfg: &ModelConfig, init: &mut Init) -> Self {
        let k = cfg.embed_dim;
        BlockWeights {
            norm1: LayerNorm::new(&format!("{name}.norm1"), k),
            wcp: cfg
                .ablation
                .wcp
                .then(|| WcpWeights::new(&format!("{name}.wcp"), init)),
            norm2: LayerNorm::new(&format!("{name}.norm2"), k),
            ffn: if cfg.ablation.gdfn {
                FeedForward::Gated(GdfnWeights::new(&format!("{name}.gdfn"), k, cfg.expansion, init))
            } else {
                FeedForward::Plain(PlainFfn::new(&format!("{name}.ffn"), k, cfg.expansion, init))
            },
        }
    }

    pub fn record(&self, tape: &mut Tape, x: Var, ablation: Ablation) -> Result<Var> {
        let n1 = self.norm1.record(tape, x)?;
        let mixed = record_mwpa(tape, n1, self.wcp.as_ref(), ablation.mixer())?;
        let y = tape.add(x, mixed)?;
        let n2 = self.norm2.record(tape, y)?;
        let ff = self.ffn.record(tape, n2)?;
        tape.add(y, ff)
    }
}

impl Parameterized for BlockWeights {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.norm1.params();
        if let Some(w) = &self.wcp {
            p.extend(w.params());
        }
        p.extend(self.norm2.params());
        match &self.ffn {
            FeedForward::Gated(g) => p.extend(g.params()),
            FeedForward::Plain(f) => p.extend(f.params()),
        }
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.norm1.params_mut();
        if let Some(w) = &mut self.wcp {
            p.extend(w.params_mut());
        }
        p.extend(self.norm2.params_mut());
        match &mut self.ffn {
            FeedForward::Gated(g) => p.extend(g.params_mut()),
            FeedForward::Plain(f) => p.extend(f.params_mut()),
        }
        p
    }
}

/// One stage applied to an `m×k` map.
pub fn mwpt_stage(x: &Tensor, w: &BlockWeights, ablation: Ablation) -> Result<Tensor> {
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone());
    let y = w.record(&mut tape, v, ablation)?;
    Ok(tape.value(y).clone())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GestFormerModel {
    pub config: ModelConfig,
    pub embedding: SpatialEmbedding,
    pub positions: Tensor,
    pub stages: Vec<BlockWeights>,
    pub classifier: Linear,
}

/// Deterministic initialisation from `seed`.
pub fn init_weights(config: &ModelConfig, seed: u64) -> Result<GestFormerModel> {
    GestFormerModel::new(config.clone(), seed)
}

impl GestFormerModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = Init::new(seed);
        let k = config.embed_dim;
        let embedding = SpatialEmbedding {
            proj: Linear::new("embed.proj", config.input_dim, k, &mut init),
            dw: config
                .ablation
                .embedding
                .then(|| Depthwise::new("embed.dw", &mut init)),
        };
        let stages = (0..config.stages)
            .map(|i| BlockWeights::new(&format!("stage{i}"), &config, &mut init))
            .collect();
        let mut classifier = Linear::new("head.fc", k, config.classes, &mut init);
        classifier.bias.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        Ok(GestFormerModel {
            positions: positional_encoding(config.frames, k)?,
            config,
            embedding,
            stages,
            classifier,
        })
    }

    fn check_input(&self, features: &Tensor) -> Result<()> {
        let want = [self.config.frames, self.config.input_dim];
        if features.dims() != want {
            return Err(Error::input(format!(
                "features have shape {}, model expects [{}×{}]",
                features.shape(),
                want[0],
                want[1]
            )));
        }
        Ok(())
    }

    /// Embedding plus positions, before the first stage.
    pub fn record_embedded(&self, tape: &mut Tape, features: Var) -> Result<Var> {
        self.check_input(tape.value(features))?;
        let x = self.embedding.record(tape, features)?;
        let pos = tape.leaf(self.positions.clone());
        tape.add(x, pos)
    }

    /// Stages `range` applied to an `m×k` map.
    pub fn record_stages(
        &self,
        tape: &mut Tape,
        mut x: Var,
        range: std::ops::Range<usize>,
    ) -> Result<Var> {
        for stage in &self.stages[range] {
            x = stage.record(tape, x, self.config.ablation)?;
        }
        Ok(x)
    }

    /// Mean over the sequence followed by the linear head; returns `[n]`.
    pub fn record_head(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let pooled = tape.mean_axis(x, 0)?;
        let k = self.config.embed_dim;
        let row = tape.reshape(pooled, [1, k])?;
        let logits = self.classifier.record(tape, row)?;
        tape.reshape(logits, [self.config.classes])
    }

    /// Class logits `[n]` for one `m×d_in` feature sequence.
    pub fn record_logits(&self, tape: &mut Tape, features: Var) -> Result<Var> {
        let x = self.record_embedded(tape, features)?;
        let x = self.record_stages(tape, x, 0..self.stages.len())?;
        self.record_head(tape, x)
    }

    pub fn record_posterior(&self, tape: &mut Tape, features: Var) -> Result<Var> {
        let logits = self.record_logits(tape, features)?;
        Ok(tape.softmax(logits))
    }

    /// Class posterior for one feature sequence.
    pub fn forward(&self, features: &Tensor) -> Result<Tensor> {
        self.check_input(features)?;
        let mut tape = Tape::new();
        let x = tape.leaf(features.clone());
        let p = self.record_posterior(&mut tape, x)?;
        Ok(tape.value(p).clone())
    }

    pub fn predict(&self, features: &Tensor) -> Result<usize> {
        Ok(argmax(self.forward(features)?.data()))
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn model_forward(features: &Tensor, model: &GestFormerModel) -> Result<Tensor> {
    model.forward(features)
}

impl Parameterized for GestFormerModel {
    fn params(&self) -> Vec<&Param> {
        let mut p = self.embedding.params();
        for s in &self.stages {
            p.extend(s.params());
        }
        p.extend(self.classifier.params());
        p
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.embedding.params_mut();
        for s in &mut self.stages {
            p.extend(s.params_mut());
        }
        p.extend(self.classifier.params_mut());
        p
    }
}
