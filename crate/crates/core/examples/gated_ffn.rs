//! Gated depthwise feed-forward block next to the plain two-layer FFN.

use mwpt::autodiff::{Parameterized, Tape};
use mwpt::blocks::{gdfn_forward, GdfnWeights, PlainFfn};
use mwpt::fusion::count_params;
use mwpt::layers::{zero_out, Init};
use mwpt::Tensor;

fn main() -> mwpt::Result<()> {
    let (m, k, ratio) = (6, 8, 2);
    let x = Tensor::from_vec([m, k], (0..m * k).map(|i| (i as f64 * 0.21).cos()).collect())?;
    let mut init = Init::new(3);

    let gdfn = GdfnWeights::new("gdfn", k, ratio, &mut init);
    let y = gdfn_forward(&x, &gdfn)?;
    println!("gdfn output {:?}, residual change {:.4}", y.dims(), y.max_abs_diff(&x));
    println!("gdfn parameters: {}", count_params(&gdfn).total());

    let ffn = PlainFfn::new("ffn", k, ratio, &mut init);
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone());
    let out = ffn.record(&mut tape, v)?;
    println!("plain ffn output {:?}, parameters: {}", tape.value(out).dims(), count_params(&ffn).total());
    println!("parameter tensors: gdfn {}, ffn {}", gdfn.params().len(), ffn.params().len());

    let mut gated_off = gdfn.clone();
    zero_out(&mut gated_off.project);
    println!("zero output projection leaves the input unchanged: {}", gdfn_forward(&x, &gated_off)? == x);
    Ok(())
}
