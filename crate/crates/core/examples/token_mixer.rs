//! The wavelet pooling token mixer and its pieces on one `m×k` map.
//!
//! ```text
//! cargo run --example token_mixer -- [frames] [features]
//! ```

use mwpt::blocks::{msp_forward, mwpa_forward, wcp_forward, MixerToggles, WcpWeights};
use mwpt::layers::Init;
use mwpt::Tensor;

fn main() -> mwpt::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse().expect("integer argument"));
    let m = args.next().unwrap_or(8);
    let k = args.next().unwrap_or(6);
    let x = Tensor::from_vec([m, k], (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect())?;

    let weights = WcpWeights::new("wcp", &mut Init::new(1));
    let identity = WcpWeights::identity("wcp");
    let wcp = wcp_forward(&x, &weights)?;
    println!("input {:?}, wcp output {:?}", x.dims(), wcp.dims());
    println!("wcp with identity branches: max change {:.2e}", wcp_forward(&x, &identity)?.max_abs_diff(&x));
    println!("msp smooths: input range {:.3}, pooled range {:.3}", range(&x), range(&msp_forward(&x)?));

    let variants = [
        ("wcp + msp", MixerToggles::ALL),
        ("msp only", MixerToggles { wcp: false, msp: true }),
        ("wcp + 3x3 pool", MixerToggles { wcp: true, msp: false }),
        ("3x3 pool only", MixerToggles { wcp: false, msp: false }),
    ];
    let full = mwpa_forward(&x, Some(&weights), MixerToggles::ALL)?;
    for (name, toggles) in variants {
        let y = mwpa_forward(&x, Some(&weights), toggles)?;
        println!("{name:<15} distance from full mixer {:.4}", y.max_abs_diff(&full));
    }
    Ok(())
}

fn range(t: &Tensor) -> f64 {
    let lo = t.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = t.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    hi - lo
}
