//! Writes a checkpoint and a feature file, reads both back and compares.

use mwpt::data::{load_features, save_features, FeatureSequenceFile};
use mwpt::model::{load_checkpoint, save_checkpoint, GestFormerModel, ModelConfig};
use mwpt::Tensor;

fn main() -> mwpt::Result<()> {
    let dir = std::env::temp_dir().join(format!("mwpt-checkpoint-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;

    let model = GestFormerModel::new(ModelConfig::toy(), 42)?;
    let ckpt = dir.join("toy.mwpt");
    save_checkpoint(&ckpt, &model)?;
    let restored = load_checkpoint(&ckpt)?;
    println!("{} bytes, restored model identical: {}", std::fs::metadata(&ckpt)?.len(), restored == model);

    let x = Tensor::from_vec([4, 6], (0..24).map(|i| i as f64 / 8.0).collect())?;
    println!("posterior before {:?}", model.forward(&x)?.data());
    println!("posterior after  {:?}", restored.forward(&x)?.data());

    let file = FeatureSequenceFile {
        modality: "depth".into(),
        label: Some(2),
        features: x,
    };
    let path = dir.join("sample.mwfs");
    save_features(&path, &file)?;
    let back = load_features(&path)?;
    println!("feature file {}x{}, label {:?}, identical: {}", back.frames(), back.dim(), back.label, back == file);

    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
