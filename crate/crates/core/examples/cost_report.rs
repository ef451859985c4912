//! Parameter and multiply-accumulate counts per layer for every baseline.
//!
//! ```text
//! cargo run --example cost_report -- [frames]
//! ```

use mwpt::fusion::{count_macs, count_params};
use mwpt::model::{Ablation, GestFormerModel, ModelConfig};

fn main() -> mwpt::Result<()> {
    let frames = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(40);
    let base = ModelConfig {
        frames,
        input_dim: 16,
        embed_dim: 32,
        stages: 2,
        classes: 3,
        expansion: 2,
        ablation: Ablation::FULL,
    };
    let model = GestFormerModel::new(base.clone(), 0)?;
    println!("# parameters\n{}", count_params(&model));
    println!("# macs\n{}", count_macs(&base));

    println!("\nbaseline  params     macs");
    for bl in 1..=8 {
        let cfg = ModelConfig {
            ablation: Ablation::baseline(bl).expect("baseline index"),
            ..base.clone()
        };
        let params = count_params(&GestFormerModel::new(cfg.clone(), 0)?).total();
        println!("BL{bl}       {params:<10} {}", count_macs(&cfg).total());
    }
    Ok(())
}
