//! Haar analysis and synthesis of a small map, including an odd extent.

use mwpt::wavelet::{dwt2, idwt2, Band};
use mwpt::Tensor;

fn main() -> mwpt::Result<()> {
    let (h, w) = (5, 6);
    let data: Vec<f64> = (0..h * w).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
    let x = Tensor::from_vec([1, h, w], data)?;
    let bands = dwt2(&x)?;
    for band in Band::ALL {
        let t = bands.band(band);
        println!("{band:?} {:?}: {:?}", t.dims(), t.data());
    }
    let back = idwt2(&bands)?;
    println!("input energy   {:.3}", x.sum_of_squares());
    println!("subband energy {:.3} (odd height pads one row)", bands.energy());
    println!("round-trip max abs error {:.2e}", back.max_abs_diff(&x));
    Ok(())
}
