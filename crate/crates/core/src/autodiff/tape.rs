//! Tape-based reverse-mode differentiation.
//!
//! Every operation evaluates eagerly through the kernels in
//! [`crate::tensor`] / [`crate::wavelet`] and appends a node holding its
//! output value plus whatever the backward rule needs. Nodes only ever
//! reference earlier nodes, so the tape is a topologically ordered DAG and
//! [`Tape::backward`] is a single reverse sweep.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};
use crate::wavelet::{self, Band};

use super::{cross_entropy_with_probs, Param};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    Linear {
        x: Var,
        weight: Var,
        bias: Option<Var>,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddChannelBias(Var, Var),
    Sum(Var),
    MeanAxis(Var, usize),
    Reshape(Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        scale: Var,
        shift: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Softmax(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    DepthwiseConv(Var, Var),
    PointwiseConv(Var, Var),
    AvgPool(Var, usize),
    DwtBand(Var, Band),
    Idwt2([Var; 4]),
    StackRows(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Recording of one forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
}

/// Gradients of a scalar with respect to every node of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value.detached(), Op::Leaf)
    }

    /// Binds a learnable parameter. Binding the same name twice returns the
    /// same node, so a parameter shared across a batch gets one gradient.
    pub fn param(&mut self, p: &Param) -> Var {
        if let Some(&v) = self.params.get(&p.name) {
            return v;
        }
        let v = self.push(p.value.detached(), Op::Param);
        self.params.insert(p.name.clone(), v);
        v
    }

    pub fn param_var(&self, name: &str) -> Option<Var> {
        self.params.get(name).copied()
    }

    /// Adds this tape's parameter gradients into the `grad` slots of
    /// `params`. Parameters not bound on the tape are left untouched.
    pub fn accumulate_into<'a>(
        &self,
        grads: &Gradients,
        params: impl IntoIterator<Item = &'a mut Param>,
    ) -> Result<()> {
        for p in params {
            if let Some(v) = self.param_var(&p.name) {
                match grads.get(v) {
                    Some(g) => p.value.accumulate_grad(g.data())?,
                    None => {
                        let zeros = vec![0.0; p.value.numel()];
                        p.value.accumulate_grad(&zeros)?
                    }
                }
            }
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// `x[T×A] · weight[B×A]ᵀ + bias[B]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let out = tensor::linear(
            self.value(x),
            self.value(weight),
            bias.map(|b| self.value(b)),
        )?;
        Ok(self.push(out, Op::Linear { x, weight, bias }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::add(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::sub(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::mul(self.value(a), self.value(b))?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = tensor::scale(self.value(a), factor);
        self.push(out, Op::Scale(a, factor))
    }

    pub fn add_channel_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let out = tensor::add_channel_bias(self.value(x), self.value(bias))?;
        Ok(self.push(out, Op::AddChannelBias(x, bias)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = tensor::sum(self.value(a));
        self.push(out, Op::Sum(a))
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let out = tensor::mean_axis(self.value(a), axis)?;
        Ok(self.push(out, Op::MeanAxis(a, axis)))
    }

    pub fn reshape(&mut self, a: Var, dims: impl Into<Vec<usize>>) -> Result<Var> {
        let out = self.value(a).reshape(dims)?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = tensor::gelu(self.value(a));
        self.push(out, Op::Gelu(a))
    }

    pub fn layer_norm(&mut self, x: Var, scale: Var, shift: Var) -> Result<Var> {
        let out = tensor::layer_norm(self.value(x), self.value(scale), self.value(shift))?;
        let xv = self.value(x);
        let d = *xv.dims().last().expect("rank >= 1");
        let rows = xv.numel() / d;
        let mut normalized = vec![0.0; xv.numel()];
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = &xv.data()[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + tensor::LAYER_NORM_EPS).sqrt();
            inv_std[r] = inv;
            for j in 0..d {
                normalized[r * d + j] = (row[j] - mean) * inv;
            }
        }
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                scale,
                shift,
                normalized,
                inv_std,
            },
        ))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let out = tensor::softmax(self.value(a));
        self.push(out, Op::Softmax(a))
    }

    /// Mean categorical cross entropy of `logits[B×n]` against `labels`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (loss, probs) = cross_entropy_with_probs(self.value(logits), labels)?;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    pub fn depthwise_conv2d(&mut self, x: Var, kernels: Var) -> Result<Var> {
        let out = tensor::depthwise_conv2d(self.value(x), self.value(kernels))?;
        Ok(self.push(out, Op::DepthwiseConv(x, kernels)))
    }

    pub fn pointwise_conv2d(&mut self, x: Var, weights: Var) -> Result<Var> {
        let out = tensor::pointwise_conv2d(self.value(x), self.value(weights))?;
        Ok(self.push(out, Op::PointwiseConv(x, weights)))
    }

    pub fn avg_pool2d(&mut self, x: Var, kernel: usize) -> Result<Var> {
        let out = tensor::avg_pool2d(self.value(x), kernel)?;
        Ok(self.push(out, Op::AvgPool(x, kernel)))
    }

    /// Forward wavelet transform, one node per subband.
    pub fn dwt2(&mut self, x: Var) -> Result<[Var; 4]> {
        let s = wavelet::dwt2(self.value(x))?;
        let ll = self.push(s.ll, Op::DwtBand(x, Band::LL));
        let lh = self.push(s.lh, Op::DwtBand(x, Band::LH));
        let hl = self.push(s.hl, Op::DwtBand(x, Band::HL));
        let hh = self.push(s.hh, Op::DwtBand(x, Band::HH));
        Ok([ll, lh, hl, hh])
    }

    /// Inverse wavelet transform onto an `height×width` map.
    pub fn idwt2(&mut self, bands: [Var; 4], height: usize, width: usize) -> Result<Var> {
        let s = wavelet::SubbandSet {
            ll: self.value(bands[0]).detached(),
            lh: self.value(bands[1]).detached(),
            hl: self.value(bands[2]).detached(),
            hh: self.value(bands[3]).detached(),
            height,
            width,
        };
        let out = wavelet::idwt2(&s)?;
        Ok(self.push(out, Op::Idwt2(bands)))
    }

    /// Stacks equally sized vectors into the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let first = rows
            .first()
            .ok_or_else(|| Error::input("stack_rows needs at least one row"))?;
        let n = self.value(*first).numel();
        let mut data = Vec::with_capacity(n * rows.len());
        for &r in rows {
            let v = self.value(r);
            if v.numel() != n {
                return Err(Error::dim(format!(
                    "stack_rows: row {} has {} elements, expected {n}",
                    r.0,
                    v.numel()
                )));
            }
            data.extend_from_slice(v.data());
        }
        let out = Tensor::from_vec([rows.len(), n], data)?;
        Ok(self.push(out, Op::StackRows(rows.to_vec())))
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.map(|g| self.nodes[i].value.with_data(g)))
            .collect();
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let mut acc = |v: Var, delta: Vec<f64>| accumulate(grads, v, delta);
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.dims()[0], av.dims()[1]);
                let n = bv.dims()[1];
                let mut ga = vec![0.0; m * k];
                let mut gb = vec![0.0; k * n];
                for i in 0..m {
                    for p in 0..k {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += g[i * n + j] * bv.data()[p * n + j];
                            gb[p * n + j] += av.data()[i * k + p] * g[i * n + j];
                        }
                        ga[i * k + p] = s;
                    }
                }
                acc(*a, ga);
                acc(*b, gb);
            }
            Op::Linear { x, weight, bias } => {
                let (xv, wv) = (self.value(*x), self.value(*weight));
                let (t, a) = (xv.dims()[0], xv.dims()[1]);
                let b = wv.dims()[0];
                let mut gx = vec![0.0; t * a];
                let mut gw = vec![0.0; b * a];
                for i in 0..t {
                    let xr = &xv.data()[i * a..(i + 1) * a];
                    let gxr = &mut gx[i * a..(i + 1) * a];
                    for j in 0..b {
                        let gij = g[i * b + j];
                        let wr = &wv.data()[j * a..(j + 1) * a];
                        let gwr = &mut gw[j * a..(j + 1) * a];
                        for q in 0..a {
                            gxr[q] += gij * wr[q];
                            gwr[q] += gij * xr[q];
                        }
                    }
                }
                acc(*x, gx);
                acc(*weight, gw);
                if let Some(bias) = bias {
                    let mut gb = vec![0.0; b];
                    for i in 0..t {
                        for j in 0..b {
                            gb[j] += g[i * b + j];
                        }
                    }
                    acc(*bias, gb);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, g.iter().zip(bv).map(|(g, b)| g * b).collect());
                acc(*b, g.iter().zip(av).map(|(g, a)| g * a).collect());
            }
            Op::Scale(a, f) => acc(*a, g.iter().map(|v| v * f).collect()),
            Op::AddChannelBias(x, b) => {
                let c = self.value(*b).numel();
                let plane = g.len() / c;
                let gb = (0..c)
                    .map(|ch| g[ch * plane..(ch + 1) * plane].iter().sum())
                    .collect();
                acc(*x, g.to_vec());
                acc(*b, gb);
            }
            Op::Sum(a) => acc(*a, vec![g[0]; self.value(*a).numel()]),
            Op::MeanAxis(a, axis) => {
                let (outer, n, inner) = tensor::split_axis(self.value(*a).dims(), *axis);
                let mut ga = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    for i in 0..n {
                        for q in 0..inner {
                            ga[(o * n + i) * inner + q] = g[o * inner + q] / n as f64;
                        }
                    }
                }
                acc(*a, ga);
            }
            Op::Reshape(a) => acc(*a, g.to_vec()),
            Op::Gelu(a) => {
                let av = self.value(*a).data();
                acc(*a, g.iter().zip(av).map(|(g, x)| g * tensor::gelu_grad(*x)).collect());
            }
            Op::LayerNorm {
                x,
                scale,
                shift,
                normalized,
                inv_std,
            } => {
                let sv = self.value(*scale).data();
                let d = sv.len();
                let rows = inv_std.len();
                let mut gx = vec![0.0; rows * d];
                let mut gscale = vec![0.0; d];
                let mut gshift = vec![0.0; d];
                for r in 0..rows {
                    let gr = &g[r * d..(r + 1) * d];
                    let nr = &normalized[r * d..(r + 1) * d];
                    let mut sum_gn = 0.0;
                    let mut sum_gn_n = 0.0;
                    for j in 0..d {
                        gshift[j] += gr[j];
                        gscale[j] += gr[j] * nr[j];
                        let gn = gr[j] * sv[j];
                        sum_gn += gn;
                        sum_gn_n += gn * nr[j];
                    }
                    let k = inv_std[r] / d as f64;
                    for j in 0..d {
                        let gn = gr[j] * sv[j];
                        gx[r * d + j] = k * (d as f64 * gn - sum_gn - nr[j] * sum_gn_n);
                    }
                }
                acc(*x, gx);
                acc(*scale, gscale);
                acc(*shift, gshift);
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let d = *node.value.dims().last().expect("rank >= 1");
                let mut ga = vec![0.0; y.len()];
                for r in 0..y.len() / d {
                    let yr = &y[r * d..(r + 1) * d];
                    let gr = &g[r * d..(r + 1) * d];
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for j in 0..d {
                        ga[r * d + j] = yr[j] * (gr[j] - dot);
                    }
                }
                acc(*a, ga);
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let b = labels.len();
                let n = probs.len() / b;
                let mut gl: Vec<f64> = probs.iter().map(|p| p * g[0] / b as f64).collect();
                for (i, &l) in labels.iter().enumerate() {
                    gl[i * n + l] -= g[0] / b as f64;
                }
                acc(*logits, gl);
            }
            Op::DepthwiseConv(x, kern) => {
                let (gx, gk) = depthwise_backward(self.value(*x), self.value(*kern), g);
                acc(*x, gx);
                acc(*kern, gk);
            }
            Op::PointwiseConv(x, w) => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let c = xv.dims()[0];
                let hw = xv.dims()[1] * xv.dims()[2];
                let co = wv.dims()[0];
                let mut gx = vec![0.0; c * hw];
                let mut gw = vec![0.0; co * c];
                for o in 0..co {
                    let go = &g[o * hw..(o + 1) * hw];
                    for i in 0..c {
                        let wv = wv.data()[o * c + i];
                        let xi = &xv.data()[i * hw..(i + 1) * hw];
                        let gxi = &mut gx[i * hw..(i + 1) * hw];
                        let mut s = 0.0;
                        for q in 0..hw {
                            gxi[q] += wv * go[q];
                            s += go[q] * xi[q];
                        }
                        gw[o * c + i] = s;
                    }
                }
                acc(*x, gx);
                acc(*w, gw);
            }
            Op::AvgPool(x, kernel) => {
                let dims = self.value(*x).dims();
                let (c, h, w) = (dims[0], dims[1], dims[2]);
                let r = kernel / 2;
                let hw = h * w;
                let mut gx = vec![0.0; c * hw];
                for ch in 0..c {
                    for i in 0..h {
                        let (i0, i1) = tensor::window(i, r, h);
                        for j in 0..w {
                            let (j0, j1) = tensor::window(j, r, w);
                            let share =
                                g[ch * hw + i * w + j] / ((i1 - i0) * (j1 - j0)) as f64;
                            for ii in i0..i1 {
                                for jj in j0..j1 {
                                    gx[ch * hw + ii * w + jj] += share;
                                }
                            }
                        }
                    }
                }
                acc(*x, gx);
            }
            Op::DwtBand(x, band) => {
                let dims = self.value(*x).dims();
                acc(
                    *x,
                    wavelet::analysis_adjoint(*band, g, dims[0], dims[1], dims[2]),
                );
            }
            Op::Idwt2(bands) => {
                let dims = node.value.dims();
                let gb = wavelet::synthesis_adjoint(g, dims[0], dims[1], dims[2]);
                for (v, gv) in bands.iter().zip(gb) {
                    acc(*v, gv);
                }
            }
            Op::StackRows(rows) => {
                let n = node.value.dims()[1];
                for (i, r) in rows.iter().enumerate() {
                    acc(*r, g[i * n..(i + 1) * n].to_vec());
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, delta: Vec<f64>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (e, d) in existing.iter_mut().zip(delta) {
                *e += d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

fn depthwise_backward(x: &Tensor, kernels: &Tensor, g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (c, h, w) = (x.dims()[0], x.dims()[1], x.dims()[2]);
    let k = kernels.dims()[1];
    let p = (k / 2) as isize;
    let hw = h * w;
    let mut gx = vec![0.0; c * hw];
    let mut gk = vec![0.0; c * k * k];
    for ch in 0..c {
        let xp = &x.data()[ch * hw..(ch + 1) * hw];
        let kp = &kernels.data()[ch * k * k..(ch + 1) * k * k];
        for i in 0..h as isize {
            for j in 0..w as isize {
                let go = g[ch * hw + (i as usize) * w + j as usize];
                if go == 0.0 {
                    continue;
                }
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
                        let xi = (ii as usize) * w + jj as usize;
                        let ki = (u as usize) * k + v as usize;
                        gx[ch * hw + xi] += go * kp[ki];
                        gk[ch * k * k + ki] += go * xp[xi];
                    }
                }
            }
        }
    }
    (gx, gk)
}
