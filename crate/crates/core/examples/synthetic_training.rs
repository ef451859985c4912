//! Trains the toy classifier on a generated single-modality dataset and
//! prints the metrics log.
//!
//! ```text
//! cargo run --release --example synthetic_training -- [epochs] [baseline 1..=8]
//! ```

use mwpt::data::{gen_synthetic, SyntheticSpec};
use mwpt::model::{Ablation, GestFormerModel, ModelConfig};
use mwpt::train::{train, TrainConfig, METRICS_HEADER};

fn main() -> mwpt::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs = args.next().and_then(|a| a.parse().ok()).unwrap_or(20);
    let baseline = args.next().and_then(|a| a.parse().ok()).unwrap_or(8);

    let spec = SyntheticSpec::default();
    let ds = gen_synthetic(&spec)?;
    let (train_set, test_set) = (ds.view(&ds.train, 0), ds.view(&ds.test, 0));

    let config = ModelConfig {
        frames: spec.frames,
        input_dim: spec.input_dim,
        embed_dim: 32,
        stages: 2,
        classes: spec.classes,
        expansion: 2,
        ablation: Ablation::baseline(baseline).expect("baseline in 1..=8"),
    };
    let mut model = GestFormerModel::new(config, 0)?;
    let cfg = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let start = std::time::Instant::now();
    println!("{METRICS_HEADER}");
    train(&mut model, &train_set, &test_set, &cfg, |m| {
        println!("{m}  ({:.1}s)", start.elapsed().as_secs_f64());
        Ok(())
    })?;
    Ok(())
}
