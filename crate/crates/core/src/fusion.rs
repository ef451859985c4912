//! Late fusion of per-modality posteriors and parameter / MAC accounting.
//!
//! MAC conventions: a convolution costs output elements × kernel area ×
//! input channels per group, a matrix product `M×K · K×N` costs `M·N·K`, and
//! pooling, normalisation, activations, softmax, the wavelet transforms and
//! elementwise products cost nothing.

use std::fmt;

use crate::autodiff::Parameterized;
use crate::error::{Error, Result};
use crate::layers::DEPTHWISE_KERNEL;
use crate::model::{argmax, ModelConfig};
use crate::tensor::Tensor;
use crate::wavelet::subband_extents;

/// Class posterior produced by one modality for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalityPosterior {
    pub modality: String,
    pub probs: Tensor,
}

impl ModalityPosterior {
    /// Validates that `probs` is a 1-D probability vector (sum 1 ± 1e-9).
    pub fn new(modality: impl Into<String>, probs: Tensor) -> Result<Self> {
        let modality = modality.into();
        if probs.dims().len() != 1 || probs.numel() == 0 {
            return Err(Error::input(format!(
                "{modality}: posterior must be a non-empty vector, got {}",
                probs.shape()
            )));
        }
        let total: f64 = probs.data().iter().sum();
        if probs.data().iter().any(|p| !(0.0..=1.0).contains(p)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::input(format!(
                "{modality}: not a probability vector (sum {total})"
            )));
        }
        Ok(ModalityPosterior { modality, probs })
    }

    pub fn classes(&self) -> usize {
        self.probs.numel()
    }
}

/// Class with the largest summed posterior across modalities. Ties go to the
/// lowest class index.
pub fn late_fuse(posteriors: &[ModalityPosterior]) -> Result<usize> {
    Ok(argmax(&fused_scores(posteriors)?))
}

/// Per-class sum of the modality posteriors, accumulated in list order.
pub fn fused_scores(posteriors: &[ModalityPosterior]) -> Result<Vec<f64>> {
    let first = posteriors
        .first()
        .ok_or_else(|| Error::input("late fusion needs at least one modality"))?;
    let n = first.classes();
    let mut sum = vec![0.0; n];
    for p in posteriors {
        if p.classes() != n {
            return Err(Error::input(format!(
                "modality {} has {} classes, {} has {n}",
                p.modality,
                p.classes(),
                first.modality
            )));
        }
        for (s, v) in sum.iter_mut().zip(p.probs.data()) {
            *s += v;
        }
    }
    Ok(sum)
}

/// One `module.layer = count` line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostEntry {
    pub module: String,
    pub layer: String,
    pub count: u64,
}

/// Ordered per-layer counts of either parameters or MACs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CostReport {
    pub entries: Vec<CostEntry>,
}

impl CostReport {
    fn push(&mut self, module: &str, layer: &str, count: u64) {
        self.entries.push(CostEntry {
            module: module.to_string(),
            layer: layer.to_string(),
            count,
        });
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.count).sum()
    }

    /// Count of one `module.layer` key, if present.
    pub fn get(&self, key: &str) -> Option<u64> {
        self.entries
            .iter()
            .find(|e| format!("{}.{}", e.module, e.layer) == key)
            .map(|e| e.count)
    }

    /// Totals per module, in first-appearance order.
    pub fn by_module(&self) -> Vec<(String, u64)> {
        let mut out: Vec<(String, u64)> = Vec::new();
        for e in &self.entries {
            match out.iter_mut().find(|(m, _)| *m == e.module) {
                Some((_, c)) => *c += e.count,
                None => out.push((e.module.clone(), e.count)),
            }
        }
        out
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "{}.{} = {}", e.module, e.layer, e.count)?;
        }
        write!(f, "total = {}", self.total())
    }
}

/// Learnable scalars per layer. A layer is a parameter name with its final
/// `.weight`/`.bias`/`.kernel`/`.scale`/`.shift` component removed; the
/// module is the first name component.
pub fn count_params<M: Parameterized + ?Sized>(model: &M) -> CostReport {
    let mut report = CostReport::default();
    for p in model.params() {
        let layer_key = p.name.rsplit_once('.').map_or(p.name.as_str(), |(l, _)| l);
        let (module, layer) = layer_key.split_once('.').unwrap_or((layer_key, ""));
        match report.entries.last_mut() {
            Some(e) if e.module == module && e.layer == layer => e.count += p.value.numel() as u64,
            _ => report.push(module, layer, p.value.numel() as u64),
        }
    }
    report
}

/// Multiply-accumulates of one forward pass for `config`.
pub fn count_macs(config: &ModelConfig) -> CostReport {
    let m = config.frames as u64;
    let d = config.input_dim as u64;
    let k = config.embed_dim as u64;
    let hidden = k * config.expansion as u64;
    let area = (DEPTHWISE_KERNEL * DEPTHWISE_KERNEL) as u64;
    let ab = config.ablation;

    let mut r = CostReport::default();
    r.push("embed", "proj", m * d * k);
    if ab.embedding {
        r.push("embed", "dw", m * k * area);
    }
    let (h2, w2) = subband_extents(config.frames, config.embed_dim);
    let band = (h2 * w2) as u64;
    for i in 0..config.stages {
        let stage = format!("stage{i}");
        if ab.wcp {
            for b in 1..=4 {
                r.push(&stage, &format!("wcp.dc{b}.dw"), band * area);
                r.push(&stage, &format!("wcp.dc{b}.pw"), band);
            }
        }
        if ab.gdfn {
            r.push(&stage, "gdfn.pw1", m * k * hidden);
            r.push(&stage, "gdfn.pw2", m * k * hidden);
            r.push(&stage, "gdfn.dw1", m * hidden * area);
            r.push(&stage, "gdfn.dw2", m * hidden * area);
            r.push(&stage, "gdfn.pw0", m * hidden * k);
        } else {
            r.push(&stage, "ffn.fc1", m * k * hidden);
            r.push(&stage, "ffn.fc2", m * hidden * k);
        }
    }
    r.push("head", "fc", k * config.classes as u64);
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::WcpWeights;
    use crate::layers::{Init, Linear};
    use crate::model::{Ablation, GestFormerModel};

    fn post(name: &str, p: &[f64]) -> ModalityPosterior {
        ModalityPosterior::new(name, Tensor::from_vec([p.len()], p.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn fusion_examples() {
        assert_eq!(late_fuse(&[post("rgb", &[0.2, 0.5, 0.3])]).unwrap(), 1);
        let two = [post("rgb", &[0.6, 0.4]), post("depth", &[0.3, 0.7])];
        let s = fused_scores(&two).unwrap();
        assert!((s[0] - 0.9).abs() < 1e-15 && (s[1] - 1.1).abs() < 1e-15);
        assert_eq!(late_fuse(&two).unwrap(), 1);
    }

    #[test]
    fn ties_go_low() {
        let a = [post("a", &[0.25, 0.5, 0.25]), post("b", &[0.5, 0.25, 0.25])];
        assert_eq!(late_fuse(&a).unwrap(), 0);
    }

    #[test]
    fn fusion_errors() {
        assert!(matches!(late_fuse(&[]), Err(Error::Input(_))));
        let bad = [post("a", &[0.5, 0.5]), post("b", &[0.2, 0.3, 0.5])];
        assert!(matches!(late_fuse(&bad), Err(Error::Input(_))));
        let t = Tensor::from_vec([2], vec![0.5, 0.6]).unwrap();
        assert!(ModalityPosterior::new("x", t).is_err());
    }

    #[test]
    fn param_count_examples() {
        let mut init = Init::new(0);
        let head = Linear::new("head", 8, 3, &mut init);
        assert_eq!(count_params(&head).total(), 27);
        let wcp = WcpWeights::new("wcp", &mut init);
        assert_eq!(count_params(&wcp).total(), 48);
        let r = count_params(&wcp);
        assert_eq!(r.entries.len(), 4 * 2);
        assert_eq!(r.get("wcp.dc1.dw"), Some(10));
        assert_eq!(r.get("wcp.dc1.pw"), Some(2));
    }

    #[test]
    fn param_report_groups_layers() {
        let model = GestFormerModel::new(ModelConfig::toy(), 3).unwrap();
        let r = count_params(&model);
        assert_eq!(r.total(), model.num_scalars() as u64);
        assert_eq!(r.get("embed.proj"), Some(6 * 8 + 8));
        assert_eq!(r.get("head.fc"), Some(8 * 3 + 3));
        let modules: Vec<_> = r.by_module().into_iter().map(|(m, _)| m).collect();
        assert_eq!(modules, ["embed", "stage0", "stage1", "head"]);
        let total: u64 = r.by_module().iter().map(|(_, c)| c).sum();
        assert_eq!(total, r.total());
    }

    #[test]
    fn pointwise_mac_example() {
        // pointwise 1→1 over a 40×64 map
        let cfg = ModelConfig {
            frames: 80,
            embed_dim: 128,
            ablation: Ablation::FULL,
            ..ModelConfig::toy()
        };
        assert_eq!(count_macs(&cfg).get("stage0.wcp.dc1.pw"), Some(40 * 64));
    }

    #[test]
    fn report_format() {
        let r = count_macs(&ModelConfig::toy());
        let text = r.to_string();
        assert!(text.starts_with("embed.proj = 192\n"));
        assert!(text.ends_with(&format!("total = {}", r.total())));
    }
}
