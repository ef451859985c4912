//! Dense row-major `f64` tensors and the forward kernels every block is
//! built from.
//!
//! Layout conventions: image-like maps are channel-first `C×H×W`; token
//! sequences are `T×D` with the feature axis last. All kernels allocate a
//! fresh output and never mutate their inputs.

use std::fmt;

use crate::error::{Error, Result};

/// Epsilon added to the variance in [`layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Axis extents of a tensor. Every extent is at least 1.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.contains(&0) {
            return Err(Error::dim(format!("zero extent in shape {dims:?}")));
        }
        Ok(Shape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "[{}]", parts.join("×"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
    /// Gradient slot, same length as `data` when present.
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn from_vec(dims: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != data.len() {
            return Err(Error::dim(format!(
                "shape {shape} needs {} elements, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(dims: impl Into<Vec<usize>>) -> Result<Self> {
        Self::full(dims, 0.0)
    }

    pub fn full(dims: impl Into<Vec<usize>>, value: f64) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let data = vec![value; shape.numel()];
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Shape(vec![1]),
            data: vec![value],
            grad: None,
        }
    }

    pub fn eye(n: usize) -> Result<Self> {
        let mut t = Self::zeros([n, n])?;
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        Ok(t)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Same data viewed under a new shape with equal element count.
    pub fn reshape(&self, dims: impl Into<Vec<usize>>) -> Result<Tensor> {
        Tensor::from_vec(dims, self.data.clone())
    }

    /// Copy of the values with the gradient slot dropped.
    pub fn detached(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.clone(),
            grad: None,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Add `g` into the gradient slot, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(Error::dim(format!(
                "gradient of length {} for tensor {}",
                g.len(),
                self.shape
            )));
        }
        let slot = self.grad.get_or_insert_with(|| vec![0.0; g.len()]);
        for (s, v) in slot.iter_mut().zip(g) {
            *s += v;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub(crate) fn with_data(&self, data: Vec<f64>) -> Tensor {
        debug_assert_eq!(data.len(), self.data.len());
        Tensor {
            shape: self.shape.clone(),
            data,
            grad: None,
        }
    }
}

fn expect_rank(t: &Tensor, rank: usize, what: &str) -> Result<()> {
    if t.shape.rank() != rank {
        return Err(Error::dim(format!(
            "{what} expects rank {rank}, got shape {}",
            t.shape
        )));
    }
    Ok(())
}

fn expect_same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::dim(format!(
            "{what}: shapes {} and {} differ",
            a.shape, b.shape
        )));
    }
    Ok(())
}

/// `[M×K] · [K×N] → [M×N]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    expect_rank(a, 2, "matmul lhs")?;
    expect_rank(b, 2, "matmul rhs")?;
    let (m, k) = (a.dims()[0], a.dims()[1]);
    let (k2, n) = (b.dims()[0], b.dims()[1]);
    if k != k2 {
        return Err(Error::dim(format!(
            "matmul inner extents differ: {} · {}",
            a.shape, b.shape
        )));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a.data[i * k + p];
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::from_vec([m, n], out)
}

/// Token-wise affine map: `x[T×A]`, `weight[B×A]`, `bias[B]` → `[T×B]`.
///
/// This is a 1×1 convolution with the feature axis as channels.
pub fn linear(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    expect_rank(x, 2, "linear input")?;
    expect_rank(weight, 2, "linear weight")?;
    let (t, a) = (x.dims()[0], x.dims()[1]);
    let (b, a2) = (weight.dims()[0], weight.dims()[1]);
    if a != a2 {
        return Err(Error::dim(format!(
            "linear: input {} does not match weight {}",
            x.shape, weight.shape
        )));
    }
    if let Some(bias) = bias {
        if bias.dims() != [b] {
            return Err(Error::dim(format!(
                "linear: bias {} for {b} outputs",
                bias.shape
            )));
        }
    }
    let mut out = vec![0.0; t * b];
    for i in 0..t {
        let xr = &x.data[i * a..(i + 1) * a];
        for j in 0..b {
            let wr = &weight.data[j * a..(j + 1) * a];
            let mut acc = bias.map_or(0.0, |bb| bb.data[j]);
            for (xv, wv) in xr.iter().zip(wr) {
                acc += xv * wv;
            }
            out[i * b + j] = acc;
        }
    }
    Tensor::from_vec([t, b], out)
}

fn conv_dims(x: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    expect_rank(x, 3, what)?;
    let d = x.dims();
    Ok((d[0], d[1], d[2]))
}

/// Per-channel 2D cross-correlation with zero "same" padding.
///
/// `x[C×H×W]`, `kernels[C×k×k]` with odd `k`.
pub fn depthwise_conv2d(x: &Tensor, kernels: &Tensor) -> Result<Tensor> {
    let (c, h, w) = conv_dims(x, "depthwise_conv2d input")?;
    expect_rank(kernels, 3, "depthwise_conv2d kernels")?;
    let (kc, kh, kw) = (kernels.dims()[0], kernels.dims()[1], kernels.dims()[2]);
    if kh != kw || kh % 2 == 0 {
        return Err(Error::config(format!(
            "depthwise kernels must be square with odd size, got {}",
            kernels.shape
        )));
    }
    if kc != c {
        return Err(Error::dim(format!(
            "depthwise_conv2d: {} kernels for input {}",
            kernels.shape, x.shape
        )));
    }
    let k = kh;
    let p = (k / 2) as isize;
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        let xp = &x.data[ch * h * w..(ch + 1) * h * w];
        let kp = &kernels.data[ch * k * k..(ch + 1) * k * k];
        let op = &mut out[ch * h * w..(ch + 1) * h * w];
        for i in 0..h as isize {
            for j in 0..w as isize {
                let mut acc = 0.0;
                for u in 0..k as isize {
                    let ii = i + u - p;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for v in 0..k as isize {
                        let jj = j + v - p;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        acc += kp[(u as usize) * k + v as usize]
                            * xp[(ii as usize) * w + jj as usize];
                    }
                }
                op[(i as usize) * w + j as usize] = acc;
            }
        }
    }
    Tensor::from_vec([c, h, w], out)
}

/// 1×1 convolution: `x[C×H×W]`, `weights[C'×C]` → `[C'×H×W]`.
pub fn pointwise_conv2d(x: &Tensor, weights: &Tensor) -> Result<Tensor> {
    let (c, h, w) = conv_dims(x, "pointwise_conv2d input")?;
    expect_rank(weights, 2, "pointwise_conv2d weights")?;
    let (co, ci) = (weights.dims()[0], weights.dims()[1]);
    if ci != c {
        return Err(Error::dim(format!(
            "pointwise_conv2d: weights {} for input {}",
            weights.shape, x.shape
        )));
    }
    let hw = h * w;
    let mut out = vec![0.0; co * hw];
    for o in 0..co {
        let dst = &mut out[o * hw..(o + 1) * hw];
        for i in 0..c {
            let wv = weights.data[o * c + i];
            let src = &x.data[i * hw..(i + 1) * hw];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += wv * s;
            }
        }
    }
    Tensor::from_vec([co, h, w], out)
}

/// Adds `bias[c]` to every element of channel `c` of `x[C×H×W]`.
pub fn add_channel_bias(x: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (c, h, w) = conv_dims(x, "add_channel_bias input")?;
    if bias.dims() != [c] {
        return Err(Error::dim(format!(
            "channel bias {} for input {}",
            bias.shape, x.shape
        )));
    }
    let hw = h * w;
    let mut out = x.data.clone();
    for ch in 0..c {
        for v in &mut out[ch * hw..(ch + 1) * hw] {
            *v += bias.data[ch];
        }
    }
    Ok(x.with_data(out))
}

/// Window bounds `[lo, hi)` of a centred window of half-width `r` clipped
/// to `0..n`.
#[inline]
pub(crate) fn window(i: usize, r: usize, n: usize) -> (usize, usize) {
    (i.saturating_sub(r), (i + r + 1).min(n))
}

/// Stride-1 average pooling with a `kernel×kernel` window; each output is
/// the mean over the in-bounds cells of its window only.
pub fn avg_pool2d(x: &Tensor, kernel: usize) -> Result<Tensor> {
    let (c, h, w) = conv_dims(x, "avg_pool2d input")?;
    if kernel.is_multiple_of(2) {
        return Err(Error::config(format!(
            "pooling kernel must be odd, got {kernel}"
        )));
    }
    let r = kernel / 2;
    let hw = h * w;
    let mut out = vec![0.0; c * hw];
    for ch in 0..c {
        let xp = &x.data[ch * hw..(ch + 1) * hw];
        for i in 0..h {
            let (i0, i1) = window(i, r, h);
            for j in 0..w {
                let (j0, j1) = window(j, r, w);
                let mut acc = 0.0;
                for ii in i0..i1 {
                    for jj in j0..j1 {
                        acc += xp[ii * w + jj];
                    }
                }
                out[ch * hw + i * w + j] = acc / ((i1 - i0) * (j1 - j0)) as f64;
            }
        }
    }
    Tensor::from_vec([c, h, w], out)
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Exact GELU, `x·Φ(x)`.
pub fn gelu(x: &Tensor) -> Tensor {
    x.map(|v| v * normal_cdf(v))
}

/// Derivative of exact GELU.
#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    normal_cdf(x) + x * normal_pdf(x)
}

fn last_axis(x: &Tensor) -> (usize, usize) {
    let d = *x.dims().last().expect("tensor has rank >= 1");
    (x.numel() / d, d)
}

/// Layer normalisation over the last axis followed by a per-feature affine
/// map.
pub fn layer_norm(x: &Tensor, scale: &Tensor, shift: &Tensor) -> Result<Tensor> {
    let (rows, d) = last_axis(x);
    if scale.dims() != [d] || shift.dims() != [d] {
        return Err(Error::dim(format!(
            "layer_norm: scale {} / shift {} for input {}",
            scale.shape, shift.shape, x.shape
        )));
    }
    let mut out = vec![0.0; x.numel()];
    for r in 0..rows {
        let row = &x.data[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for j in 0..d {
            out[r * d + j] = (row[j] - mean) * inv * scale.data[j] + shift.data[j];
        }
    }
    Ok(x.with_data(out))
}

/// Softmax over the last axis, stabilised by max subtraction.
pub fn softmax(x: &Tensor) -> Tensor {
    let (rows, d) = last_axis(x);
    let mut out = vec![0.0; x.numel()];
    for r in 0..rows {
        let row = &x.data[r * d..(r + 1) * d];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let dst = &mut out[r * d..(r + 1) * d];
        let mut total = 0.0;
        for (o, v) in dst.iter_mut().zip(row) {
            *o = (v - max).exp();
            total += *o;
        }
        for o in dst.iter_mut() {
            *o /= total;
        }
    }
    x.with_data(out)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    expect_same_shape(a, b, "add")?;
    Ok(a.with_data(a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect()))
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    expect_same_shape(a, b, "sub")?;
    Ok(a.with_data(a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect()))
}

/// Elementwise (Hadamard) product.
pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    expect_same_shape(a, b, "mul")?;
    Ok(a.with_data(a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect()))
}

pub fn scale(a: &Tensor, factor: f64) -> Tensor {
    a.map(|v| v * factor)
}

pub fn sum(a: &Tensor) -> Tensor {
    Tensor::scalar(a.data.iter().sum())
}

/// Splits `dims` around `axis` into (outer, axis extent, inner).
pub(crate) fn split_axis(dims: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = dims[..axis].iter().product();
    let inner = dims[axis + 1..].iter().product();
    (outer, dims[axis], inner)
}

/// Mean along `axis`; the axis is removed from the shape (a rank-1 input
/// reduces to shape `[1]`).
pub fn mean_axis(a: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= a.shape.rank() {
        return Err(Error::dim(format!(
            "mean_axis: axis {axis} out of range for {}",
            a.shape
        )));
    }
    let (outer, n, inner) = split_axis(a.dims(), axis);
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for i in 0..n {
            let src = &a.data[(o * n + i) * inner..(o * n + i + 1) * inner];
            for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    for v in &mut out {
        *v /= n as f64;
    }
    let mut dims: Vec<usize> = a.dims().to_vec();
    dims.remove(axis);
    if dims.is_empty() {
        dims.push(1);
    }
    Tensor::from_vec(dims, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor {
        let n = dims.iter().product();
        Tensor::from_vec(dims, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn shape_rejects_zero_extent() {
        assert!(Shape::new(vec![2, 0]).is_err());
        assert!(Tensor::from_vec([2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn matmul_identity_and_hand_product() {
        let a = Tensor::from_vec([2, 2], vec![1., 2., 3., 4.]).unwrap();
        assert_eq!(matmul(&Tensor::eye(2).unwrap(), &a).unwrap(), a);
        let r = Tensor::from_vec([1, 2], vec![1., 2.]).unwrap();
        let c = Tensor::from_vec([2, 1], vec![3., 4.]).unwrap();
        assert_eq!(matmul(&r, &c).unwrap().data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = Tensor::zeros([2, 3]).unwrap();
        let b = Tensor::zeros([2, 3]).unwrap();
        let msg = matmul(&a, &b).unwrap_err().to_string();
        assert!(msg.contains("[2×3] · [2×3]"), "{msg}");
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&mut rng, &[3, 4]);
        let b = random(&mut rng, &[4, 5]);
        let got = matmul(&a, &b).unwrap();
        for i in 0..3 {
            for j in 0..5 {
                let mut s = 0.0;
                for p in 0..4 {
                    s += a.data()[i * 4 + p] * b.data()[p * 5 + j];
                }
                assert!((got.data()[i * 5 + j] - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn depthwise_delta_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&mut rng, &[2, 5, 4]);
        let mut k = Tensor::zeros([2, 3, 3]).unwrap();
        k.data_mut()[4] = 1.0;
        k.data_mut()[13] = 1.0;
        assert_eq!(depthwise_conv2d(&x, &k).unwrap(), x);
    }

    #[test]
    fn depthwise_ones_on_ones() {
        let x = Tensor::full([1, 3, 3], 1.0).unwrap();
        let k = Tensor::full([1, 3, 3], 1.0).unwrap();
        let y = depthwise_conv2d(&x, &k).unwrap();
        assert_eq!(y.data()[4], 9.0);
        for corner in [0, 2, 6, 8] {
            assert_eq!(y.data()[corner], 4.0);
        }
        assert_eq!(y.data()[1], 6.0);
    }

    #[test]
    fn depthwise_even_kernel_is_config_error() {
        let x = Tensor::zeros([1, 4, 4]).unwrap();
        let k = Tensor::zeros([1, 2, 2]).unwrap();
        assert!(matches!(depthwise_conv2d(&x, &k), Err(Error::Config(_))));
    }

    #[test]
    fn pointwise_identity_and_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&mut rng, &[3, 2, 2]);
        assert_eq!(pointwise_conv2d(&x, &Tensor::eye(3).unwrap()).unwrap(), x);

        let mut planes = vec![2.5; 4];
        planes.extend(vec![-1.0; 4]);
        let x = Tensor::from_vec([2, 2, 2], planes).unwrap();
        let w = Tensor::from_vec([1, 2], vec![1.0, 1.0]).unwrap();
        let y = pointwise_conv2d(&x, &w).unwrap();
        assert_eq!(y.dims(), &[1, 2, 2]);
        assert!(y.data().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn pointwise_channel_mismatch() {
        let x = Tensor::zeros([2, 2, 2]).unwrap();
        let w = Tensor::zeros([1, 3]).unwrap();
        assert!(matches!(pointwise_conv2d(&x, &w), Err(Error::Dimension(_))));
    }

    #[test]
    fn avg_pool_border_counts() {
        let x = Tensor::from_vec([1, 1, 3], vec![0.0, 3.0, 6.0]).unwrap();
        let y = avg_pool2d(&x, 3).unwrap();
        assert_eq!(y.data(), &[1.5, 3.0, 4.5]);
    }

    #[test]
    fn avg_pool_preserves_constants() {
        for k in [3, 5, 7] {
            let x = Tensor::full([2, 6, 9], -0.75).unwrap();
            let y = avg_pool2d(&x, k).unwrap();
            assert!(y.data().iter().all(|&v| (v + 0.75).abs() < 1e-15));
        }
    }

    #[test]
    fn gelu_softmax_layer_norm_basics() {
        assert_eq!(gelu(&Tensor::scalar(0.0)).item(), 0.0);
        let s = softmax(&Tensor::from_vec([2], vec![0.0, 0.0]).unwrap());
        assert_eq!(s.data(), &[0.5, 0.5]);

        let x = Tensor::from_vec([1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let ones = Tensor::full([3], 1.0).unwrap();
        let zeros = Tensor::zeros([3]).unwrap();
        let y = layer_norm(&x, &ones, &zeros).unwrap();
        let mean = y.data().iter().sum::<f64>() / 3.0;
        let var = y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-9);
        // the 1e-5 epsilon shrinks the variance by var/(var+eps)
        assert!((var - 1.0).abs() < 1e-4);
        let expected = (2.0 / 3.0) / (2.0 / 3.0 + LAYER_NORM_EPS);
        assert!((var - expected).abs() < 1e-9);
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let s = softmax(&Tensor::from_vec([2], vec![1000.0, 0.0]).unwrap());
        assert!(s.is_finite());
        assert!((s.data()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_axis_reduces() {
        let x = Tensor::from_vec([2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(mean_axis(&x, 0).unwrap().data(), &[2.5, 3.5, 4.5]);
        assert_eq!(mean_axis(&x, 1).unwrap().data(), &[2.0, 5.0]);
        assert!(mean_axis(&x, 2).is_err());
    }

    #[test]
    fn accumulate_grad_adds() {
        let mut t = Tensor::zeros([2]).unwrap();
        t.accumulate_grad(&[1.0, 2.0]).unwrap();
        t.accumulate_grad(&[1.0, 2.0]).unwrap();
        assert_eq!(t.grad.as_deref(), Some(&[2.0, 4.0][..]));
        assert!(t.accumulate_grad(&[1.0]).is_err());
    }
}
