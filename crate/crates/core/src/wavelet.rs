//! Single-level orthonormal 2D Haar transform.
//!
//! For each non-overlapping 2×2 block `[[a, b], [c, d]]` of a `C×H×W` map:
//!
//! ```text
//! LL = (a + b + c + d) / 2      LH = (a - b + c - d) / 2
//! HL = (a + b - c - d) / 2      HH = (a - b - c + d) / 2
//! ```
//!
//! Odd extents are extended by repeating the last row/column before
//! analysis. [`SubbandSet`] remembers the original extents and
//! [`idwt2`] crops back to them.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Index of a subband inside a [`SubbandSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Band {
    LL,
    LH,
    HL,
    HH,
}

impl Band {
    pub const ALL: [Band; 4] = [Band::LL, Band::LH, Band::HL, Band::HH];
}

/// The four coefficient planes of a map plus the map's original extents.
#[derive(Clone, Debug, PartialEq)]
pub struct SubbandSet {
    pub ll: Tensor,
    pub lh: Tensor,
    pub hl: Tensor,
    pub hh: Tensor,
    /// Extents `(H, W)` of the analysed map before any padding.
    pub height: usize,
    pub width: usize,
}

impl SubbandSet {
    pub fn band(&self, band: Band) -> &Tensor {
        match band {
            Band::LL => &self.ll,
            Band::LH => &self.lh,
            Band::HL => &self.hl,
            Band::HH => &self.hh,
        }
    }

    pub fn energy(&self) -> f64 {
        Band::ALL.iter().map(|&b| self.band(b).sum_of_squares()).sum()
    }
}

/// Extents of each subband for an `h×w` map.
pub fn subband_extents(h: usize, w: usize) -> (usize, usize) {
    (h.div_ceil(2), w.div_ceil(2))
}

fn map_dims(x: &Tensor) -> Result<(usize, usize, usize)> {
    if x.dims().len() != 3 {
        return Err(Error::dim(format!(
            "wavelet transform expects a C×H×W map, got {}",
            x.shape()
        )));
    }
    Ok((x.dims()[0], x.dims()[1], x.dims()[2]))
}

/// Analysis of a `C×H×W` map, returning the four planes in band order.
/// Rows/columns past the edge read the last row/column (symmetric
/// extension by one sample).
pub(crate) fn analysis(x: &[f64], c: usize, h: usize, w: usize) -> [Vec<f64>; 4] {
    let (h2, w2) = subband_extents(h, w);
    let n = c * h2 * w2;
    let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for ch in 0..c {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        for i in 0..h2 {
            let r0 = 2 * i;
            let r1 = (2 * i + 1).min(h - 1);
            for j in 0..w2 {
                let c0 = 2 * j;
                let c1 = (2 * j + 1).min(w - 1);
                let a = plane[r0 * w + c0];
                let b = plane[r0 * w + c1];
                let cc = plane[r1 * w + c0];
                let d = plane[r1 * w + c1];
                let o = ch * h2 * w2 + i * w2 + j;
                out[0][o] = (a + b + cc + d) * 0.5;
                out[1][o] = (a - b + cc - d) * 0.5;
                out[2][o] = (a + b - cc - d) * 0.5;
                out[3][o] = (a - b - cc + d) * 0.5;
            }
        }
    }
    out
}

/// Synthesis onto a `C×H×W` map. Samples that fall past `H`/`W` (the
/// padded row/column of an odd extent) are dropped.
pub(crate) fn synthesis(bands: [&[f64]; 4], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (h2, w2) = subband_extents(h, w);
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for i in 0..h2 {
            for j in 0..w2 {
                let o = ch * h2 * w2 + i * w2 + j;
                let (ll, lh, hl, hh) = (bands[0][o], bands[1][o], bands[2][o], bands[3][o]);
                let block = [
                    (ll + lh + hl + hh) * 0.5,
                    (ll - lh + hl - hh) * 0.5,
                    (ll + lh - hl - hh) * 0.5,
                    (ll - lh - hl + hh) * 0.5,
                ];
                for (k, v) in block.into_iter().enumerate() {
                    let r = 2 * i + k / 2;
                    let col = 2 * j + k % 2;
                    if r < h && col < w {
                        out[ch * h * w + r * w + col] = v;
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of the padded analysis for one band: scatters coefficient
/// gradients back onto the `C×H×W` input, folding the padded sample onto
/// the edge row/column it was copied from.
pub(crate) fn analysis_adjoint(
    band: Band,
    grad: &[f64],
    c: usize,
    h: usize,
    w: usize,
) -> Vec<f64> {
    let (h2, w2) = subband_extents(h, w);
    let signs: [f64; 4] = match band {
        Band::LL => [1.0, 1.0, 1.0, 1.0],
        Band::LH => [1.0, -1.0, 1.0, -1.0],
        Band::HL => [1.0, 1.0, -1.0, -1.0],
        Band::HH => [1.0, -1.0, -1.0, 1.0],
    };
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for i in 0..h2 {
            let rows = [2 * i, (2 * i + 1).min(h - 1)];
            for j in 0..w2 {
                let cols = [2 * j, (2 * j + 1).min(w - 1)];
                let g = grad[ch * h2 * w2 + i * w2 + j] * 0.5;
                for (k, s) in signs.iter().enumerate() {
                    let r = rows[k / 2];
                    let col = cols[k % 2];
                    out[ch * h * w + r * w + col] += s * g;
                }
            }
        }
    }
    out
}

/// Adjoint of [`synthesis`]: zero-extends the gradient to even extents and
/// applies the (orthonormal) analysis without symmetric extension.
pub(crate) fn synthesis_adjoint(grad: &[f64], c: usize, h: usize, w: usize) -> [Vec<f64>; 4] {
    let (h2, w2) = subband_extents(h, w);
    let (he, we) = (2 * h2, 2 * w2);
    if he == h && we == w {
        return analysis(grad, c, h, w);
    }
    let mut padded = vec![0.0; c * he * we];
    for ch in 0..c {
        for r in 0..h {
            let src = &grad[ch * h * w + r * w..ch * h * w + (r + 1) * w];
            padded[ch * he * we + r * we..ch * he * we + r * we + w].copy_from_slice(src);
        }
    }
    analysis(&padded, c, he, we)
}

/// Forward transform of a `C×H×W` map.
pub fn dwt2(x: &Tensor) -> Result<SubbandSet> {
    let (c, h, w) = map_dims(x)?;
    let (h2, w2) = subband_extents(h, w);
    let [ll, lh, hl, hh] = analysis(x.data(), c, h, w);
    let mk = |d: Vec<f64>| Tensor::from_vec([c, h2, w2], d);
    Ok(SubbandSet {
        ll: mk(ll)?,
        lh: mk(lh)?,
        hl: mk(hl)?,
        hh: mk(hh)?,
        height: h,
        width: w,
    })
}

/// Inverse transform, cropping to the extents recorded in `s`.
pub fn idwt2(s: &SubbandSet) -> Result<Tensor> {
    check_bands(
        [&s.ll, &s.lh, &s.hl, &s.hh],
        s.height,
        s.width,
    )?;
    let c = s.ll.dims()[0];
    let data = synthesis(
        [s.ll.data(), s.lh.data(), s.hl.data(), s.hh.data()],
        c,
        s.height,
        s.width,
    );
    Tensor::from_vec([c, s.height, s.width], data)
}

/// Validates that four planes share one `C×⌈H/2⌉×⌈W/2⌉` shape.
pub(crate) fn check_bands(bands: [&Tensor; 4], h: usize, w: usize) -> Result<()> {
    let first = bands[0].shape();
    if first.rank() != 3 {
        return Err(Error::dim(format!(
            "subbands must be C×H×W, got {first}"
        )));
    }
    for (b, t) in Band::ALL.iter().zip(bands) {
        if t.shape() != first {
            return Err(Error::dim(format!(
                "subband {b:?} has shape {}, expected {first}",
                t.shape()
            )));
        }
    }
    let (h2, w2) = subband_extents(h, w);
    if first.dims()[1] != h2 || first.dims()[2] != w2 {
        return Err(Error::dim(format!(
            "subbands {first} cannot reconstruct a {h}×{w} map"
        )));
    }
    Ok(())
}
