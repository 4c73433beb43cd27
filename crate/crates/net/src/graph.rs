//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every op eagerly; [`Graph::backward`] walks the tape
//! in reverse from caller-supplied output gradients. Losses are evaluated
//! outside the graph and enter only through those seeds.

use std::collections::HashMap;

use crate::kernels::{conv_forward, gather_columns, gemm, im2col, scatter_columns, Geom, PadMode};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Normalization statistics are floored at this standard deviation.
pub const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Variable,
    Param(ParamId),
    Conv {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        geom: Geom,
    },
    ConvT {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        geom: Geom,
    },
    Upsample2(NodeId),
    AvgPool2(NodeId),
    /// Normalization over contiguous groups of `group` values.
    Norm {
        x: NodeId,
        group: usize,
        inv_std: Vec<f32>,
        floored: Vec<bool>,
    },
    ChannelAffine {
        x: NodeId,
        scale: NodeId,
        shift: NodeId,
        per_sample: bool,
    },
    Relu(NodeId),
    LeakyRelu(NodeId, f32),
    Tanh(NodeId),
    Softplus(NodeId),
    Affine(NodeId, f32),
    Add(NodeId, NodeId),
    Linear {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    Gap(NodeId),
    Narrow {
        x: NodeId,
        start: usize,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by one backward pass.
#[derive(Debug, Default)]
pub struct Gradients {
    params: Vec<(ParamId, Tensor)>,
    variables: HashMap<NodeId, Tensor>,
}

impl Gradients {
    pub fn params(&self) -> &[(ParamId, Tensor)] {
        &self.params
    }

    pub fn into_params(self) -> Vec<(ParamId, Tensor)> {
        self.params
    }

    pub fn variable(&self, id: NodeId) -> Option<&Tensor> {
        self.variables.get(&id)
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, NodeId>,
}

fn softplus(x: f32) -> f32 {
    if x > 20.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Constant, false)
    }

    /// Input whose gradient is reported by [`Gradients::variable`].
    pub fn variable(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Variable, true)
    }

    /// Leaf for a trainable parameter; repeated requests share one node so
    /// gradients from every use accumulate.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        if let Some(&n) = self.param_nodes.get(&id) {
            return n;
        }
        let n = self.push(store.get(id).clone(), Op::Param(id), true);
        self.param_nodes.insert(id, n);
        n
    }

    /// Parameter value as a constant: gradients flow through to the inputs
    /// but not into the parameter.
    pub fn frozen_param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        self.constant(store.get(id).clone())
    }

    pub fn conv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        stride: usize,
        pad: usize,
        mode: PadMode,
    ) -> Result<NodeId> {
        let (n, c, h, wd) = self.value(x).dims4();
        let (o, ci, k, k2) = self.value(w).dims4();
        if ci != c || k != k2 {
            return Err(Error::shape(format!(
                "conv weight {:?} does not fit input {:?}",
                self.value(w).shape(),
                self.value(x).shape()
            )));
        }
        let geom = Geom::new(n, c, h, wd, k, stride, pad, mode).ok_or_else(|| {
            Error::shape(format!(
                "{h}x{wd} input too small for a {k}x{k} kernel with padding {pad}"
            ))
        })?;
        let p = geom.positions();
        let mut out = vec![0.0f32; n * o * p];
        conv_forward(self.value(x).data(), self.value(w).data(), o, &geom, &mut out);
        if let Some(b) = b {
            add_channel_bias(&mut out, self.value(b).data(), n, o, p);
        }
        let t = Tensor::new(&[n, o, geom.oh, geom.ow], out)?;
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        Ok(self.push(t, Op::Conv { x, w, b, geom }, ng))
    }

    /// Transposed convolution with weight `[in, out, k, k]`; output size
    /// `(h - 1) * stride - 2 * pad + k + out_pad`. Zero padding.
    pub fn conv_transpose2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        stride: usize,
        pad: usize,
        out_pad: usize,
    ) -> Result<NodeId> {
        let (n, ci, h, wd) = self.value(x).dims4();
        let (wi, co, k, _) = self.value(w).dims4();
        if wi != ci {
            return Err(Error::shape(format!(
                "transposed conv weight {:?} does not fit input {:?}",
                self.value(w).shape(),
                self.value(x).shape()
            )));
        }
        let grow = |s: usize| ((s - 1) * stride + k + out_pad).checked_sub(2 * pad);
        let (Some(ho), Some(wo)) = (grow(h), grow(wd)) else {
            return Err(Error::shape("transposed conv output would be empty"));
        };
        let geom = Geom::new(n, co, ho, wo, k, stride, pad, PadMode::Zero)
            .filter(|g| g.oh == h && g.ow == wd)
            .ok_or_else(|| Error::shape("inconsistent transposed conv geometry"))?;
        let rows = geom.rows();
        let pin = h * wd;
        let mut out = vec![0.0f32; n * co * ho * wo];
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            for (j0, j1) in geom.chunks() {
                let len = j1 - j0;
                let xc = gather_columns(xv, ci, pin, j0, j1);
                let mut cols = vec![0.0f32; rows * len];
                gemm(rows, ci, len, wv, true, &xc, false, &mut cols, false);
                geom.layout(j0, j1).with_data(cols).scatter_into(&geom, &mut out);
            }
        }
        if let Some(b) = b {
            add_channel_bias(&mut out, self.value(b).data(), n, co, ho * wo);
        }
        let t = Tensor::new(&[n, co, ho, wo], out)?;
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        Ok(self.push(t, Op::ConvT { x, w, b, geom }, ng))
    }

    /// Nearest-neighbour upsampling by 2.
    pub fn upsample2(&mut self, x: NodeId) -> NodeId {
        let (n, c, h, w) = self.value(x).dims4();
        let src = self.value(x).data();
        let mut out = vec![0.0f32; n * c * 4 * h * w];
        for nc in 0..n * c {
            for y in 0..2 * h {
                for xx in 0..2 * w {
                    out[nc * 4 * h * w + y * 2 * w + xx] = src[nc * h * w + (y / 2) * w + xx / 2];
                }
            }
        }
        let t = Tensor::new(&[n, c, 2 * h, 2 * w], out).expect("upsample shape");
        let ng = self.ng(x);
        self.push(t, Op::Upsample2(x), ng)
    }

    /// 2x2 mean pooling with stride 2; an odd trailing row/column is dropped.
    pub fn avg_pool2(&mut self, x: NodeId) -> Result<NodeId> {
        let (n, c, h, w) = self.value(x).dims4();
        if h < 2 || w < 2 {
            return Err(Error::shape(format!("cannot pool a {h}x{w} map")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let src = self.value(x).data();
        let mut out = vec![0.0f32; n * c * oh * ow];
        for nc in 0..n * c {
            for y in 0..oh {
                for xx in 0..ow {
                    let b = nc * h * w + 2 * y * w + 2 * xx;
                    out[nc * oh * ow + y * ow + xx] = 0.25 * (src[b] + src[b + 1] + src[b + w] + src[b + w + 1]);
                }
            }
        }
        let t = Tensor::new(&[n, c, oh, ow], out)?;
        let ng = self.ng(x);
        Ok(self.push(t, Op::AvgPool2(x), ng))
    }

    fn normalize(&mut self, x: NodeId, group: usize) -> NodeId {
        let src = self.value(x).data();
        let groups = src.len() / group;
        let mut out = vec![0.0f32; src.len()];
        let mut inv_std = Vec::with_capacity(groups);
        let mut floored = Vec::with_capacity(groups);
        for gi in 0..groups {
            let s = &src[gi * group..(gi + 1) * group];
            let mean = s.iter().map(|&v| v as f64).sum::<f64>() / group as f64;
            let var = s.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / group as f64;
            let sd = var.sqrt();
            let (sd, fl) = if sd < NORM_EPS { (NORM_EPS, true) } else { (sd, false) };
            for (o, &v) in out[gi * group..(gi + 1) * group].iter_mut().zip(s) {
                *o = ((v as f64 - mean) / sd) as f32;
            }
            inv_std.push((1.0 / sd) as f32);
            floored.push(fl);
        }
        let t = Tensor::new(self.value(x).shape(), out).expect("norm shape");
        let ng = self.ng(x);
        self.push(
            t,
            Op::Norm {
                x,
                group,
                inv_std,
                floored,
            },
            ng,
        )
    }

    /// Per-sample, per-channel standardization (no affine part).
    pub fn instance_norm(&mut self, x: NodeId) -> NodeId {
        let (_, _, h, w) = self.value(x).dims4();
        self.normalize(x, h * w)
    }

    /// Per-sample standardization over all channels and positions.
    pub fn layer_norm(&mut self, x: NodeId) -> NodeId {
        let (_, c, h, w) = self.value(x).dims4();
        self.normalize(x, c * h * w)
    }

    /// `x * scale + shift` per channel; `scale`/`shift` are `[c]` (shared by
    /// the batch) or `[n, c]` (one row per sample).
    pub fn channel_affine(&mut self, x: NodeId, scale: NodeId, shift: NodeId) -> Result<NodeId> {
        let (n, c, h, w) = self.value(x).dims4();
        let ss = self.value(scale).shape().to_vec();
        let per_sample = match ss[..] {
            [cc] if cc == c => false,
            [nn, cc] if nn == n && cc == c => true,
            _ => {
                return Err(Error::shape(format!(
                    "affine params {ss:?} do not fit {:?}",
                    self.value(x).shape()
                )))
            }
        };
        if self.value(shift).shape() != ss.as_slice() {
            return Err(Error::shape("affine scale and shift shapes differ"));
        }
        let (src, sc, sh) = (self.value(x).data(), self.value(scale).data(), self.value(shift).data());
        let hw = h * w;
        let mut out = vec![0.0f32; src.len()];
        for i in 0..n {
            for ch in 0..c {
                let k = if per_sample { i * c + ch } else { ch };
                let base = (i * c + ch) * hw;
                for (o, &v) in out[base..base + hw].iter_mut().zip(&src[base..base + hw]) {
                    *o = v * sc[k] + sh[k];
                }
            }
        }
        let t = Tensor::new(&[n, c, h, w], out)?;
        let ng = self.ng(x) || self.ng(scale) || self.ng(shift);
        Ok(self.push(
            t,
            Op::ChannelAffine {
                x,
                scale,
                shift,
                per_sample,
            },
            ng,
        ))
    }

    fn map(&mut self, x: NodeId, f: impl Fn(f32) -> f32, op: Op) -> NodeId {
        let v = self.value(x);
        let t = Tensor::new(v.shape(), v.data().iter().map(|&a| f(a)).collect()).expect("same shape");
        let ng = self.ng(x);
        self.push(t, op, ng)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.map(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f32) -> NodeId {
        self.map(x, |v| if v > 0.0 { v } else { slope * v }, Op::LeakyRelu(x, slope))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.map(x, f32::tanh, Op::Tanh(x))
    }

    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        self.map(x, softplus, Op::Softplus(x))
    }

    /// `a * x + c`.
    pub fn affine(&mut self, x: NodeId, a: f32, c: f32) -> NodeId {
        self.map(x, |v| a * v + c, Op::Affine(x, a))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape(format!(
                "cannot add {:?} and {:?}",
                va.shape(),
                vb.shape()
            )));
        }
        let t = Tensor::new(
            va.shape(),
            va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect(),
        )?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Add(a, b), ng))
    }

    /// `x [n, f]`, `w [o, f]`, `b [o]` gives `x w^T + b`.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let (n, f) = self.value(x).dims2();
        let (o, f2) = self.value(w).dims2();
        if f != f2 {
            return Err(Error::shape(format!(
                "linear weight [{o}, {f2}] does not fit {f} features"
            )));
        }
        let mut out = vec![0.0f32; n * o];
        gemm(
            n,
            f,
            o,
            self.value(x).data(),
            false,
            self.value(w).data(),
            true,
            &mut out,
            false,
        );
        if let Some(b) = b {
            let bv = self.value(b).data();
            for row in out.chunks_mut(o) {
                row.iter_mut().zip(bv).for_each(|(v, b)| *v += b);
            }
        }
        let t = Tensor::new(&[n, o], out)?;
        let ng = self.ng(x) || self.ng(w) || b.is_some_and(|b| self.ng(b));
        Ok(self.push(t, Op::Linear { x, w, b }, ng))
    }

    /// Global average pooling `[n, c, h, w] -> [n, c]`.
    pub fn gap(&mut self, x: NodeId) -> NodeId {
        let (n, c, h, w) = self.value(x).dims4();
        let hw = h * w;
        let src = self.value(x).data();
        let out = (0..n * c)
            .map(|i| (src[i * hw..(i + 1) * hw].iter().map(|&v| v as f64).sum::<f64>() / hw as f64) as f32)
            .collect();
        let t = Tensor::new(&[n, c], out).expect("gap shape");
        let ng = self.ng(x);
        self.push(t, Op::Gap(x), ng)
    }

    /// Columns `start..start + len` of a `[n, f]` tensor.
    pub fn narrow(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (n, f) = self.value(x).dims2();
        if start + len > f {
            return Err(Error::shape(format!("columns {start}..{} out of {f}", start + len)));
        }
        let src = self.value(x).data();
        let out = (0..n)
            .flat_map(|i| src[i * f + start..i * f + start + len].iter().copied())
            .collect();
        let t = Tensor::new(&[n, len], out)?;
        let ng = self.ng(x);
        Ok(self.push(t, Op::Narrow { x, start }, ng))
    }

    /// Reverse pass. Each seed is `(node, d loss / d node)`; seeds for the
    /// same node add up.
    pub fn backward(&self, seeds: Vec<(NodeId, Tensor)>) -> Result<Gradients> {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut last = 0;
        for (id, g) in seeds {
            if g.shape() != self.value(id).shape() {
                return Err(Error::shape(format!(
                    "seed {:?} does not match node {:?}",
                    g.shape(),
                    self.value(id).shape()
                )));
            }
            last = last.max(id.0 + 1);
            accumulate(&mut grads, id, g);
        }
        let mut out = Gradients::default();
        for i in (0..last).rev() {
            let Some(gy) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.backprop_node(i, gy, &mut grads, &mut out);
        }
        out.params.sort_by_key(|(p, _)| *p);
        Ok(out)
    }

    fn backprop_node(&self, i: usize, gy: Tensor, grads: &mut [Option<Tensor>], out: &mut Gradients) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Constant => {}
            Op::Variable => {
                out.variables.insert(NodeId(i), gy);
            }
            Op::Param(p) => out.params.push((*p, gy)),
            Op::Conv { x, w, b, geom } => self.conv_backward(*x, *w, *b, geom, &gy, grads),
            Op::ConvT { x, w, b, geom } => self.conv_t_backward(*x, *w, *b, geom, &gy, grads),
            Op::Upsample2(x) => {
                if !self.ng(*x) {
                    return;
                }
                let (n, c, h, w) = self.value(*x).dims4();
                let g = gy.data();
                let mut dx = vec![0.0f32; n * c * h * w];
                for nc in 0..n * c {
                    for y in 0..2 * h {
                        for xx in 0..2 * w {
                            dx[nc * h * w + (y / 2) * w + xx / 2] += g[nc * 4 * h * w + y * 2 * w + xx];
                        }
                    }
                }
                self.send(grads, *x, dx);
            }
            Op::AvgPool2(x) => {
                if !self.ng(*x) {
                    return;
                }
                let (n, c, h, w) = self.value(*x).dims4();
                let (oh, ow) = (h / 2, w / 2);
                let g = gy.data();
                let mut dx = vec![0.0f32; n * c * h * w];
                for nc in 0..n * c {
                    for y in 0..oh {
                        for xx in 0..ow {
                            let v = 0.25 * g[nc * oh * ow + y * ow + xx];
                            let b = nc * h * w + 2 * y * w + 2 * xx;
                            dx[b] += v;
                            dx[b + 1] += v;
                            dx[b + w] += v;
                            dx[b + w + 1] += v;
                        }
                    }
                }
                self.send(grads, *x, dx);
            }
            Op::Norm {
                x,
                group,
                inv_std,
                floored,
            } => {
                if !self.ng(*x) {
                    return;
                }
                let y = node.value.data();
                let g = gy.data();
                let mut dx = vec![0.0f32; y.len()];
                let nf = *group as f64;
                for (gi, (&is, &fl)) in inv_std.iter().zip(floored).enumerate() {
                    let r = gi * group..(gi + 1) * group;
                    let (ys, gs) = (&y[r.clone()], &g[r.clone()]);
                    let mean_g = gs.iter().map(|&v| v as f64).sum::<f64>() / nf;
                    let mean_gy = if fl {
                        0.0
                    } else {
                        gs.iter().zip(ys).map(|(&a, &b)| a as f64 * b as f64).sum::<f64>() / nf
                    };
                    for ((d, &gv), &yv) in dx[r].iter_mut().zip(gs).zip(ys) {
                        *d = (is as f64 * (gv as f64 - mean_g - yv as f64 * mean_gy)) as f32;
                    }
                }
                self.send(grads, *x, dx);
            }
            Op::ChannelAffine {
                x,
                scale,
                shift,
                per_sample,
            } => {
                let (n, c, h, w) = self.value(*x).dims4();
                let hw = h * w;
                let (xv, sc) = (self.value(*x).data(), self.value(*scale).data());
                let g = gy.data();
                let plen = if *per_sample { n * c } else { c };
                let mut dscale = vec![0.0f32; plen];
                let mut dshift = vec![0.0f32; plen];
                let mut dx = vec![0.0f32; xv.len()];
                for i in 0..n {
                    for ch in 0..c {
                        let k = if *per_sample { i * c + ch } else { ch };
                        let base = (i * c + ch) * hw;
                        let (mut ds, mut dh) = (0.0f64, 0.0f64);
                        for j in base..base + hw {
                            ds += g[j] as f64 * xv[j] as f64;
                            dh += g[j] as f64;
                            dx[j] = g[j] * sc[k];
                        }
                        dscale[k] += ds as f32;
                        dshift[k] += dh as f32;
                    }
                }
                if self.ng(*x) {
                    self.send(grads, *x, dx);
                }
                if self.ng(*scale) {
                    self.send(grads, *scale, dscale);
                }
                if self.ng(*shift) {
                    self.send(grads, *shift, dshift);
                }
            }
            Op::Relu(x) => self.pointwise(grads, *x, &gy, |xi, _| if xi > 0.0 { 1.0 } else { 0.0 }, node),
            Op::LeakyRelu(x, s) => {
                let s = *s;
                self.pointwise(grads, *x, &gy, |xi, _| if xi > 0.0 { 1.0 } else { s }, node)
            }
            Op::Tanh(x) => self.pointwise(grads, *x, &gy, |_, yi| 1.0 - yi * yi, node),
            Op::Softplus(x) => self.pointwise(grads, *x, &gy, |xi, _| sigmoid(xi), node),
            Op::Affine(x, a) => {
                let a = *a;
                self.pointwise(grads, *x, &gy, |_, _| a, node)
            }
            Op::Add(a, b) => {
                if self.ng(*a) {
                    accumulate(grads, *a, gy.clone());
                }
                if self.ng(*b) {
                    accumulate(grads, *b, gy);
                }
            }
            Op::Linear { x, w, b } => {
                let (n, f) = self.value(*x).dims2();
                let (o, _) = self.value(*w).dims2();
                if self.ng(*x) {
                    let mut dx = vec![0.0f32; n * f];
                    gemm(n, o, f, gy.data(), false, self.value(*w).data(), false, &mut dx, false);
                    self.send(grads, *x, dx);
                }
                if self.ng(*w) {
                    let mut dw = vec![0.0f32; o * f];
                    gemm(o, n, f, gy.data(), true, self.value(*x).data(), false, &mut dw, false);
                    self.send(grads, *w, dw);
                }
                if let Some(b) = b.filter(|b| self.ng(*b)) {
                    let mut db = vec![0.0f32; o];
                    for row in gy.data().chunks(o) {
                        db.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                    }
                    self.send(grads, b, db);
                }
            }
            Op::Gap(x) => {
                if !self.ng(*x) {
                    return;
                }
                let (n, c, h, w) = self.value(*x).dims4();
                let hw = h * w;
                let g = gy.data();
                let dx = (0..n * c * hw).map(|j| g[j / hw] / hw as f32).collect();
                self.send(grads, *x, dx);
            }
            Op::Narrow { x, start } => {
                if !self.ng(*x) {
                    return;
                }
                let (n, f) = self.value(*x).dims2();
                let (_, len) = gy.dims2();
                let mut dx = vec![0.0f32; n * f];
                for i in 0..n {
                    dx[i * f + start..i * f + start + len].copy_from_slice(&gy.data()[i * len..(i + 1) * len]);
                }
                self.send(grads, *x, dx);
            }
        }
    }

    fn pointwise(
        &self,
        grads: &mut [Option<Tensor>],
        x: NodeId,
        gy: &Tensor,
        d: impl Fn(f32, f32) -> f32,
        node: &Node,
    ) {
        if !self.ng(x) {
            return;
        }
        let dx = self
            .value(x)
            .data()
            .iter()
            .zip(node.value.data())
            .zip(gy.data())
            .map(|((&xi, &yi), &g)| g * d(xi, yi))
            .collect();
        self.send(grads, x, dx);
    }

    fn send(&self, grads: &mut [Option<Tensor>], to: NodeId, data: Vec<f32>) {
        let t = Tensor::new(self.value(to).shape(), data).expect("gradient matches its node");
        accumulate(grads, to, t);
    }

    fn conv_backward(
        &self,
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        geom: &Geom,
        gy: &Tensor,
        grads: &mut [Option<Tensor>],
    ) {
        let (o, rows, p) = (self.value(w).shape()[0], geom.rows(), geom.positions());
        let (want_x, want_w) = (self.ng(x), self.ng(w));
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut dx = if want_x { vec![0.0f32; xv.len()] } else { Vec::new() };
        let mut dw = if want_w { vec![0.0f32; wv.len()] } else { Vec::new() };
        if want_x || want_w {
            for (j0, j1) in geom.chunks() {
                let len = j1 - j0;
                let gyc = gather_columns(gy.data(), o, p, j0, j1);
                if want_w {
                    let cols = im2col(xv, geom, j0, j1);
                    gemm(o, len, rows, &gyc, false, &cols.data, true, &mut dw, true);
                }
                if want_x {
                    let mut dcols = vec![0.0f32; rows * len];
                    gemm(rows, o, len, wv, true, &gyc, false, &mut dcols, false);
                    geom.layout(j0, j1).with_data(dcols).scatter_into(geom, &mut dx);
                }
            }
        }
        if want_x {
            self.send(grads, x, dx);
        }
        if want_w {
            self.send(grads, w, dw);
        }
        if let Some(b) = b.filter(|b| self.ng(*b)) {
            self.send(grads, b, channel_sums(gy.data(), geom.n, o, p));
        }
    }

    fn conv_t_backward(
        &self,
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        geom: &Geom,
        gy: &Tensor,
        grads: &mut [Option<Tensor>],
    ) {
        let (n, ci, h, wd) = self.value(x).dims4();
        let rows = geom.rows();
        let pin = h * wd;
        let (want_x, want_w) = (self.ng(x), self.ng(w));
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut dx = if want_x { vec![0.0f32; xv.len()] } else { Vec::new() };
        let mut dw = if want_w { vec![0.0f32; wv.len()] } else { Vec::new() };
        if want_x || want_w {
            for (j0, j1) in geom.chunks() {
                let len = j1 - j0;
                let dcols = im2col(gy.data(), geom, j0, j1);
                if want_x {
                    let mut dxc = vec![0.0f32; ci * len];
                    gemm(ci, rows, len, wv, false, &dcols.data, false, &mut dxc, false);
                    scatter_columns(&dxc, ci, pin, j0, j1, &mut dx);
                }
                if want_w {
                    let xc = gather_columns(xv, ci, pin, j0, j1);
                    gemm(ci, len, rows, &xc, false, &dcols.data, true, &mut dw, true);
                }
            }
        }
        if want_x {
            self.send(grads, x, dx);
        }
        if want_w {
            self.send(grads, w, dw);
        }
        if let Some(b) = b.filter(|b| self.ng(*b)) {
            self.send(grads, b, channel_sums(gy.data(), n, geom.c, geom.h * geom.w));
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id.0] {
        Some(t) => t.add_assign(&g),
        slot => *slot = Some(g),
    }
}

fn add_channel_bias(out: &mut [f32], bias: &[f32], n: usize, c: usize, p: usize) {
    for i in 0..n {
        for (ch, &b) in bias.iter().enumerate().take(c) {
            out[(i * c + ch) * p..(i * c + ch + 1) * p]
                .iter_mut()
                .for_each(|v| *v += b);
        }
    }
}

fn channel_sums(g: &[f32], n: usize, c: usize, p: usize) -> Vec<f32> {
    let mut out = vec![0.0f64; c];
    for i in 0..n {
        for (ch, o) in out.iter_mut().enumerate() {
            *o += g[(i * c + ch) * p..(i * c + ch + 1) * p]
                .iter()
                .map(|&v| v as f64)
                .sum::<f64>();
        }
    }
    out.into_iter().map(|v| v as f32).collect()
}
