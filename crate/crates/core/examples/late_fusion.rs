//! Sum-of-posteriors fusion over modalities, with a tie.

use mwpt::fusion::{fused_scores, late_fuse, ModalityPosterior};
use mwpt::Tensor;

fn posterior(name: &str, p: &[f64]) -> mwpt::Result<ModalityPosterior> {
    ModalityPosterior::new(name, Tensor::from_vec([p.len()], p.to_vec())?)
}

fn main() -> mwpt::Result<()> {
    let sets = [
        posterior("color", &[0.5, 0.3, 0.2])?,
        posterior("depth", &[0.1, 0.6, 0.3])?,
        posterior("ir", &[0.3, 0.2, 0.5])?,
    ];
    for p in &sets {
        println!("{:<6} {:?} argmax {}", p.modality, p.probs.data(), mwpt::model::argmax(p.probs.data()));
    }
    println!("fused scores {:?} -> class {}", fused_scores(&sets)?, late_fuse(&sets)?);

    let tied = [posterior("a", &[0.25, 0.75])?, posterior("b", &[0.75, 0.25])?];
    println!("tied scores {:?} -> class {} (lowest index wins)", fused_scores(&tied)?, late_fuse(&tied)?);
    Ok(())
}
