//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every operation applied during a forward pass. Leaves
//! are inserted by value; parameters are copied in at the start of a pass
//! and their gradients read back out after [`Graph::backward`].

use crate::error::{Error, Result};
use crate::tensor::{col2im, gemm, im2col, resize_planes, resize_planes_backward, ConvGeom, Tensor};

const NORM_EPS: f32 = 1e-5;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
        cols: Vec<f32>,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    ReflectPad {
        x: Var,
        pad: usize,
    },
    InstanceNorm {
        x: Var,
        inv_std: Vec<f32>,
    },
    Relu {
        x: Var,
    },
    LeakyRelu {
        x: Var,
        slope: f32,
    },
    Tanh {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    ConcatChannels {
        a: Var,
        b: Var,
    },
    Resize {
        x: Var,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Crop {
        x: Var,
        top: usize,
        left: usize,
    },
    MeanAbsDiff {
        a: Var,
        b: Var,
    },
    MeanSquaredOffset {
        x: Var,
        target: f32,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f32>,
    },
    WeightedSum {
        terms: Vec<(Var, f32)>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Constant input (no gradient).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    fn check_rank4(&self, v: Var, what: &str) -> Result<(usize, usize, usize, usize)> {
        let s = self.value(v).shape();
        if s.len() != 4 {
            return Err(Error::Shape(format!("{what}: expected NCHW input, got {s:?}")));
        }
        Ok((s[0], s[1], s[2], s[3]))
    }

    /// 2-D convolution, square kernel, symmetric zero padding `pad` on the
    /// leading edges and `pad_hi` on the trailing edges.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        pad_hi: usize,
    ) -> Result<Var> {
        let (n, c, h, wd) = self.check_rank4(x, "conv2d")?;
        let ws = self.value(w).shape().to_vec();
        if ws.len() != 4 || ws[1] != c || ws[2] != ws[3] {
            return Err(Error::Shape(format!(
                "conv2d weight {ws:?} incompatible with input channels {c}"
            )));
        }
        let (o, k) = (ws[0], ws[2]);
        if h + pad + pad_hi < k || wd + pad + pad_hi < k {
            return Err(Error::Shape(format!(
                "conv2d kernel {k} larger than padded input {h}x{wd}"
            )));
        }
        let geom = ConvGeom {
            channels: c,
            in_h: h,
            in_w: wd,
            kernel: k,
            stride,
            pad,
            out_h: (h + pad + pad_hi - k) / stride + 1,
            out_w: (wd + pad + pad_hi - k) / stride + 1,
        };
        let (rows, p) = (geom.col_rows(), geom.col_cols());
        let requires_grad = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        let keep_cols = requires_grad && self.rg(w);
        let mut cols = vec![0.0; if keep_cols { n * rows * p } else { rows * p }];
        let mut out = vec![0.0; n * o * p];
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            for i in 0..n {
                let col = if keep_cols {
                    &mut cols[i * rows * p..(i + 1) * rows * p]
                } else {
                    &mut cols[..]
                };
                im2col(&xv[i * c * h * wd..(i + 1) * c * h * wd], &geom, col);
                gemm(
                    o,
                    rows,
                    p,
                    1.0,
                    wv,
                    rows,
                    1,
                    col,
                    p,
                    1,
                    0.0,
                    &mut out[i * o * p..(i + 1) * o * p],
                    p,
                    1,
                );
            }
            if let Some(b) = b {
                let bv = self.value(b).data();
                for i in 0..n {
                    for (oc, &bias) in bv.iter().enumerate() {
                        for v in &mut out[(i * o + oc) * p..(i * o + oc + 1) * p] {
                            *v += bias;
                        }
                    }
                }
            }
        }
        if !keep_cols {
            cols = Vec::new();
        }
        let value = Tensor::new(vec![n, o, geom.out_h, geom.out_w], out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                x,
                w,
                b,
                geom,
                cols,
            },
            requires_grad,
        ))
    }

    /// Transposed convolution with weight layout `[in, out, k, k]`.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        output_pad: usize,
    ) -> Result<Var> {
        let (n, cin, h, wd) = self.check_rank4(x, "conv_transpose2d")?;
        let ws = self.value(w).shape().to_vec();
        if ws.len() != 4 || ws[0] != cin || ws[2] != ws[3] {
            return Err(Error::Shape(format!(
                "conv_transpose2d weight {ws:?} incompatible with input channels {cin}"
            )));
        }
        let (cout, k) = (ws[1], ws[2]);
        let oh = (h - 1) * stride + k + output_pad - 2 * pad;
        let ow = (wd - 1) * stride + k + output_pad - 2 * pad;
        let geom = ConvGeom {
            channels: cout,
            in_h: oh,
            in_w: ow,
            kernel: k,
            stride,
            pad,
            out_h: h,
            out_w: wd,
        };
        let (rows, p) = (geom.col_rows(), geom.col_cols());
        let mut out = vec![0.0; n * cout * oh * ow];
        {
            let xv = self.value(x).data();
            let wv = self.value(w).data();
            let mut cols = vec![0.0; rows * p];
            for i in 0..n {
                gemm(
                    rows,
                    cin,
                    p,
                    1.0,
                    wv,
                    1,
                    rows,
                    &xv[i * cin * p..(i + 1) * cin * p],
                    p,
                    1,
                    0.0,
                    &mut cols,
                    p,
                    1,
                );
                col2im(&cols, &geom, &mut out[i * cout * oh * ow..(i + 1) * cout * oh * ow]);
            }
            if let Some(b) = b {
                let bv = self.value(b).data();
                for i in 0..n {
                    for (oc, &bias) in bv.iter().enumerate() {
                        let s = (i * cout + oc) * oh * ow;
                        for v in &mut out[s..s + oh * ow] {
                            *v += bias;
                        }
                    }
                }
            }
        }
        let requires_grad = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        let value = Tensor::new(vec![n, cout, oh, ow], out)?;
        Ok(self.push(value, Op::ConvTranspose2d { x, w, b, geom }, requires_grad))
    }

    pub fn reflect_pad(&mut self, x: Var, pad: usize) -> Result<Var> {
        let (n, c, h, w) = self.check_rank4(x, "reflect_pad")?;
        if pad >= h || pad >= w {
            return Err(Error::Shape(format!(
                "reflection pad {pad} needs planes larger than {h}x{w}"
            )));
        }
        let (oh, ow) = (h + 2 * pad, w + 2 * pad);
        let src = self.value(x).data();
        let mut out = vec![0.0; n * c * oh * ow];
        for pl in 0..n * c {
            let s = &src[pl * h * w..(pl + 1) * h * w];
            let d = &mut out[pl * oh * ow..(pl + 1) * oh * ow];
            for y in 0..oh {
                let sy = reflect(y as isize - pad as isize, h);
                for xx in 0..ow {
                    let sx = reflect(xx as isize - pad as isize, w);
                    d[y * ow + xx] = s[sy * w + sx];
                }
            }
        }
        let rg = self.rg(x);
        let value = Tensor::new(vec![n, c, oh, ow], out)?;
        Ok(self.push(value, Op::ReflectPad { x, pad }, rg))
    }

    /// Per-sample, per-channel normalization without affine parameters.
    pub fn instance_norm(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = self.check_rank4(x, "instance_norm")?;
        let m = h * w;
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        let mut inv_std = Vec::with_capacity(n * c);
        for pl in 0..n * c {
            let s = &src[pl * m..(pl + 1) * m];
            let mean = s.iter().map(|&v| v as f64).sum::<f64>() / m as f64;
            let var = s.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / m as f64;
            let inv = 1.0 / (var + NORM_EPS as f64).sqrt();
            for (d, &v) in out[pl * m..(pl + 1) * m].iter_mut().zip(s) {
                *d = ((v as f64 - mean) * inv) as f32;
            }
            inv_std.push(inv as f32);
        }
        let rg = self.rg(x);
        let value = Tensor::new(vec![n, c, h, w], out)?;
        Ok(self.push(value, Op::InstanceNorm { x, inv_std }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        let rg = self.rg(x);
        self.push(value, Op::Relu { x }, rg)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f32) -> Var {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { v * slope });
        let rg = self.rg(x);
        self.push(value, Op::LeakyRelu { x, slope }, rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f32::tanh);
        let rg = self.rg(x);
        self.push(value, Op::Tanh { x }, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Shape(format!(
                "add {:?} + {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add { a, b }, rg))
    }

    /// Channel-axis concatenation of two NCHW tensors.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, ca, h, w) = self.check_rank4(a, "concat")?;
        let (nb, cb, hb, wb) = self.check_rank4(b, "concat")?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(Error::Shape(format!(
                "channel concat of {:?} and {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let m = h * w;
        let mut out = Vec::with_capacity(n * (ca + cb) * m);
        for i in 0..n {
            out.extend_from_slice(&av[i * ca * m..(i + 1) * ca * m]);
            out.extend_from_slice(&bv[i * cb * m..(i + 1) * cb * m]);
        }
        let rg = self.rg(a) || self.rg(b);
        let value = Tensor::new(vec![n, ca + cb, h, w], out)?;
        Ok(self.push(value, Op::ConcatChannels { a, b }, rg))
    }

    /// Corner-aligned bilinear resize of every plane.
    pub fn resize(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let (n, c, h, w) = self.check_rank4(x, "resize")?;
        if (h, w) == (out_h, out_w) {
            return Ok(x);
        }
        let out = resize_planes(self.value(x).data(), n * c, h, w, out_h, out_w);
        let rg = self.rg(x);
        let value = Tensor::new(vec![n, c, out_h, out_w], out)?;
        Ok(self.push(value, Op::Resize { x }, rg))
    }

    /// `x · wᵀ + b` where `x` is flattened to `[N, D]` and `w` is `[O, D]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.value(x).shape();
        let n = xs[0];
        let d: usize = xs[1..].iter().product();
        let ws = self.value(w).shape().to_vec();
        if ws.len() != 2 || ws[1] != d {
            return Err(Error::Shape(format!(
                "linear weight {ws:?} incompatible with {d} features"
            )));
        }
        let o = ws[0];
        let mut out = vec![0.0; n * o];
        for i in 0..n {
            out[i * o..(i + 1) * o].copy_from_slice(self.value(b).data());
        }
        gemm(
            n,
            d,
            o,
            1.0,
            self.value(x).data(),
            d,
            1,
            self.value(w).data(),
            1,
            d,
            1.0,
            &mut out,
            o,
            1,
        );
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        let value = Tensor::new(vec![n, o], out)?;
        Ok(self.push(value, Op::Linear { x, w, b }, rg))
    }

    /// Spatial crop `[top, top+h) × [left, left+w)` of every plane.
    pub fn crop(&mut self, x: Var, top: usize, left: usize, h: usize, w: usize) -> Result<Var> {
        let (n, c, ih, iw) = self.check_rank4(x, "crop")?;
        if h == 0 || w == 0 || top + h > ih || left + w > iw {
            return Err(Error::Bounds(format!(
                "crop ({top},{left},{h},{w}) outside {ih}x{iw}"
            )));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(n * c * h * w);
        for pl in 0..n * c {
            for y in top..top + h {
                let row = pl * ih * iw + y * iw;
                out.extend_from_slice(&src[row + left..row + left + w]);
            }
        }
        let rg = self.rg(x);
        let value = Tensor::new(vec![n, c, h, w], out)?;
        Ok(self.push(value, Op::Crop { x, top, left }, rg))
    }

    /// `mean |a − b|` over all elements.
    pub fn mean_abs_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::Shape(format!(
                "L1 between {:?} and {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let sum: f64 = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| (x - y).abs() as f64)
            .sum();
        let value = Tensor::scalar((sum / av.numel() as f64) as f32);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MeanAbsDiff { a, b }, rg))
    }

    /// `mean (x − target)²` over all elements.
    pub fn mean_squared_offset(&mut self, x: Var, target: f32) -> Var {
        let xv = self.value(x);
        let sum: f64 = xv
            .data()
            .iter()
            .map(|&v| ((v - target) as f64).powi(2))
            .sum();
        let value = Tensor::scalar((sum / xv.numel() as f64) as f32);
        let rg = self.rg(x);
        self.push(value, Op::MeanSquaredOffset { x, target }, rg)
    }

    /// Mean softmax cross-entropy of `[N, K]` logits against class indices.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.value(logits).shape();
        if s.len() != 2 || s[0] != labels.len() {
            return Err(Error::Shape(format!(
                "cross entropy logits {s:?} vs {} labels",
                labels.len()
            )));
        }
        let (n, k) = (s[0], s[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Argument(format!("label {bad} outside {k} classes")));
        }
        let lv = self.value(logits).data();
        let mut probs = vec![0.0; n * k];
        let mut total = 0.0f64;
        for i in 0..n {
            let row = &lv[i * k..(i + 1) * k];
            let mx = row.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
            let lse = mx + row.iter().map(|&v| (v as f64 - mx).exp()).sum::<f64>().ln();
            for j in 0..k {
                probs[i * k + j] = (row[j] as f64 - lse).exp() as f32;
            }
            total += lse - row[labels[i]] as f64;
        }
        let value = Tensor::scalar((total / n as f64) as f32);
        let rg = self.rg(logits);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// `Σ wᵢ · termᵢ` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f32)]) -> Result<Var> {
        let mut acc = 0.0f64;
        for &(t, w) in terms {
            let v = self.value(t);
            if v.numel() != 1 {
                return Err(Error::Shape(format!("weighted sum term of shape {:?}", v.shape())));
            }
            acc += w as f64 * v.item() as f64;
        }
        let rg = terms.iter().any(|&(t, _)| self.rg(t));
        Ok(self.push(
            Tensor::scalar(acc as f32),
            Op::WeightedSum {
                terms: terms.to_vec(),
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.rg(loss) {
            return Gradients { grads };
        }
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(gy) = grads[idx].take() else { continue };
            // Leaves keep their gradient.
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(gy);
                continue;
            }
            self.backprop_node(node, &gy, &mut grads);
        }
        Gradients { grads }
    }

    fn backprop_node(&self, node: &Node, gy: &Tensor, grads: &mut [Option<Tensor>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d {
                x,
                w,
                b,
                geom,
                cols,
            } => {
                let (n, c, h, wd) = self.value(*x).dims4();
                let o = self.value(*w).shape()[0];
                let (rows, p) = (geom.col_rows(), geom.col_cols());
                let g = gy.data();
                if self.rg(*w) {
                    let mut dw = vec![0.0; o * rows];
                    for i in 0..n {
                        gemm(
                            o,
                            p,
                            rows,
                            1.0,
                            &g[i * o * p..(i + 1) * o * p],
                            p,
                            1,
                            &cols[i * rows * p..(i + 1) * rows * p],
                            1,
                            p,
                            1.0,
                            &mut dw,
                            rows,
                            1,
                        );
                    }
                    let shape = self.value(*w).shape().to_vec();
                    accumulate(&mut grads[w.0], Tensor::new(shape, dw).expect("shape"));
                }
                if let Some(b) = b.filter(|b| self.rg(*b)) {
                    grads_bias(g, n, o, p, &mut grads[b.0]);
                }
                if self.rg(*x) {
                    let wv = self.value(*w).data();
                    let mut dx = vec![0.0; n * c * h * wd];
                    let mut dcols = vec![0.0; rows * p];
                    for i in 0..n {
                        gemm(
                            rows,
                            o,
                            p,
                            1.0,
                            wv,
                            1,
                            rows,
                            &g[i * o * p..(i + 1) * o * p],
                            p,
                            1,
                            0.0,
                            &mut dcols,
                            p,
                            1,
                        );
                        col2im(&dcols, geom, &mut dx[i * c * h * wd..(i + 1) * c * h * wd]);
                    }
                    accumulate(
                        &mut grads[x.0],
                        Tensor::new(vec![n, c, h, wd], dx).expect("shape"),
                    );
                }
            }
            Op::ConvTranspose2d { x, w, b, geom } => {
                let (n, cin, h, wd) = self.value(*x).dims4();
                let (rows, p) = (geom.col_rows(), geom.col_cols());
                let plane = geom.channels * geom.in_h * geom.in_w;
                let g = gy.data();
                if let Some(b) = b.filter(|b| self.rg(*b)) {
                    grads_bias(g, n, geom.channels, geom.in_h * geom.in_w, &mut grads[b.0]);
                }
                let need_x = self.rg(*x);
                let need_w = self.rg(*w);
                if need_x || need_w {
                    let wv = self.value(*w).data();
                    let xv = self.value(*x).data();
                    let mut dcols = vec![0.0; rows * p];
                    let mut dx = vec![0.0; if need_x { n * cin * p } else { 0 }];
                    let mut dw = vec![0.0; if need_w { cin * rows } else { 0 }];
                    for i in 0..n {
                        im2col(&g[i * plane..(i + 1) * plane], geom, &mut dcols);
                        if need_x {
                            gemm(
                                cin,
                                rows,
                                p,
                                1.0,
                                wv,
                                rows,
                                1,
                                &dcols,
                                p,
                                1,
                                0.0,
                                &mut dx[i * cin * p..(i + 1) * cin * p],
                                p,
                                1,
                            );
                        }
                        if need_w {
                            gemm(
                                cin,
                                p,
                                rows,
                                1.0,
                                &xv[i * cin * p..(i + 1) * cin * p],
                                p,
                                1,
                                &dcols,
                                1,
                                p,
                                1.0,
                                &mut dw,
                                rows,
                                1,
                            );
                        }
                    }
                    if need_x {
                        accumulate(
                            &mut grads[x.0],
                            Tensor::new(vec![n, cin, h, wd], dx).expect("shape"),
                        );
                    }
                    if need_w {
                        let shape = self.value(*w).shape().to_vec();
                        accumulate(&mut grads[w.0], Tensor::new(shape, dw).expect("shape"));
                    }
                }
            }
            Op::ReflectPad { x, pad } => {
                let (n, c, h, w) = self.value(*x).dims4();
                let (oh, ow) = (h + 2 * pad, w + 2 * pad);
                let g = gy.data();
                let mut dx = vec![0.0; n * c * h * w];
                for pl in 0..n * c {
                    let gp = &g[pl * oh * ow..(pl + 1) * oh * ow];
                    let d = &mut dx[pl * h * w..(pl + 1) * h * w];
                    for yy in 0..oh {
                        let sy = reflect(yy as isize - *pad as isize, h);
                        for xx in 0..ow {
                            let sx = reflect(xx as isize - *pad as isize, w);
                            d[sy * w + sx] += gp[yy * ow + xx];
                        }
                    }
                }
                accumulate(&mut grads[x.0], Tensor::new(vec![n, c, h, w], dx).expect("shape"));
            }
            Op::InstanceNorm { x, inv_std } => {
                let (n, c, h, w) = self.value(*x).dims4();
                let m = h * w;
                let (g, yv) = (gy.data(), y.data());
                let mut dx = vec![0.0; n * c * m];
                for pl in 0..n * c {
                    let gp = &g[pl * m..(pl + 1) * m];
                    let yp = &yv[pl * m..(pl + 1) * m];
                    let mg = gp.iter().map(|&v| v as f64).sum::<f64>() / m as f64;
                    let mgy = gp
                        .iter()
                        .zip(yp)
                        .map(|(&a, &b)| a as f64 * b as f64)
                        .sum::<f64>()
                        / m as f64;
                    let inv = inv_std[pl] as f64;
                    for ((d, &gv), &yy) in dx[pl * m..(pl + 1) * m].iter_mut().zip(gp).zip(yp) {
                        *d = (inv * (gv as f64 - mg - yy as f64 * mgy)) as f32;
                    }
                }
                accumulate(&mut grads[x.0], Tensor::new(vec![n, c, h, w], dx).expect("shape"));
            }
            Op::Relu { x } => {
                let xv = self.value(*x).data();
                let d = gy
                    .data()
                    .iter()
                    .zip(xv)
                    .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
                    .collect();
                accumulate(&mut grads[x.0], Tensor::new(gy.shape().to_vec(), d).expect("shape"));
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x).data();
                let d = gy
                    .data()
                    .iter()
                    .zip(xv)
                    .map(|(&g, &v)| if v > 0.0 { g } else { g * slope })
                    .collect();
                accumulate(&mut grads[x.0], Tensor::new(gy.shape().to_vec(), d).expect("shape"));
            }
            Op::Tanh { x } => {
                let d = gy
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(&g, &t)| g * (1.0 - t * t))
                    .collect();
                accumulate(&mut grads[x.0], Tensor::new(gy.shape().to_vec(), d).expect("shape"));
            }
            Op::Add { a, b } => {
                if self.rg(*a) {
                    accumulate(&mut grads[a.0], gy.clone());
                }
                if self.rg(*b) {
                    accumulate(&mut grads[b.0], gy.clone());
                }
            }
            Op::ConcatChannels { a, b } => {
                let (n, ca, h, w) = self.value(*a).dims4();
                let cb = self.value(*b).shape()[1];
                let m = h * w;
                let g = gy.data();
                let mut da = Vec::with_capacity(n * ca * m);
                let mut db = Vec::with_capacity(n * cb * m);
                for i in 0..n {
                    let base = i * (ca + cb) * m;
                    da.extend_from_slice(&g[base..base + ca * m]);
                    db.extend_from_slice(&g[base + ca * m..base + (ca + cb) * m]);
                }
                if self.rg(*a) {
                    accumulate(&mut grads[a.0], Tensor::new(vec![n, ca, h, w], da).expect("shape"));
                }
                if self.rg(*b) {
                    accumulate(&mut grads[b.0], Tensor::new(vec![n, cb, h, w], db).expect("shape"));
                }
            }
            Op::Resize { x } => {
                let (n, c, h, w) = self.value(*x).dims4();
                let (_, _, oh, ow) = gy.dims4();
                let d = resize_planes_backward(gy.data(), n * c, h, w, oh, ow);
                accumulate(&mut grads[x.0], Tensor::new(vec![n, c, h, w], d).expect("shape"));
            }
            Op::Linear { x, w, b } => {
                let xs = self.value(*x).shape().to_vec();
                let n = xs[0];
                let d: usize = xs[1..].iter().product();
                let o = self.value(*w).shape()[0];
                let g = gy.data();
                if self.rg(*x) {
                    let mut dx = vec![0.0; n * d];
                    gemm(n, o, d, 1.0, g, o, 1, self.value(*w).data(), d, 1, 0.0, &mut dx, d, 1);
                    accumulate(&mut grads[x.0], Tensor::new(xs, dx).expect("shape"));
                }
                if self.rg(*w) {
                    let mut dw = vec![0.0; o * d];
                    gemm(o, n, d, 1.0, g, 1, o, self.value(*x).data(), d, 1, 0.0, &mut dw, d, 1);
                    accumulate(&mut grads[w.0], Tensor::new(vec![o, d], dw).expect("shape"));
                }
                if self.rg(*b) {
                    let mut db = vec![0.0; o];
                    for i in 0..n {
                        for j in 0..o {
                            db[j] += g[i * o + j];
                        }
                    }
                    accumulate(&mut grads[b.0], Tensor::new(vec![o], db).expect("shape"));
                }
            }
            Op::Crop { x, top, left } => {
                let (n, c, ih, iw) = self.value(*x).dims4();
                let (_, _, h, w) = gy.dims4();
                let g = gy.data();
                let mut dx = vec![0.0; n * c * ih * iw];
                for pl in 0..n * c {
                    for yy in 0..h {
                        let dst = pl * ih * iw + (top + yy) * iw + left;
                        let src = (pl * h + yy) * w;
                        dx[dst..dst + w].copy_from_slice(&g[src..src + w]);
                    }
                }
                accumulate(&mut grads[x.0], Tensor::new(vec![n, c, ih, iw], dx).expect("shape"));
            }
            Op::MeanAbsDiff { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let scale = gy.item() / av.numel() as f32;
                let da: Vec<f32> = av
                    .data()
                    .iter()
                    .zip(bv.data())
                    .map(|(&p, &q)| {
                        let d = p - q;
                        if d > 0.0 {
                            scale
                        } else if d < 0.0 {
                            -scale
                        } else {
                            0.0
                        }
                    })
                    .collect();
                if self.rg(*b) {
                    let db = da.iter().map(|v| -v).collect();
                    accumulate(
                        &mut grads[b.0],
                        Tensor::new(bv.shape().to_vec(), db).expect("shape"),
                    );
                }
                if self.rg(*a) {
                    accumulate(&mut grads[a.0], Tensor::new(av.shape().to_vec(), da).expect("shape"));
                }
            }
            Op::MeanSquaredOffset { x, target } => {
                let xv = self.value(*x);
                let scale = 2.0 * gy.item() / xv.numel() as f32;
                let d = xv.data().iter().map(|&v| scale * (v - target)).collect();
                accumulate(&mut grads[x.0], Tensor::new(xv.shape().to_vec(), d).expect("shape"));
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let s = self.value(*logits).shape().to_vec();
                let (n, k) = (s[0], s[1]);
                let scale = gy.item() / n as f32;
                let mut d = probs.clone();
                for (i, &l) in labels.iter().enumerate() {
                    d[i * k + l] -= 1.0;
                }
                for v in &mut d {
                    *v *= scale;
                }
                accumulate(&mut grads[logits.0], Tensor::new(s, d).expect("shape"));
            }
            Op::WeightedSum { terms } => {
                let g = gy.item();
                for &(t, w) in terms {
                    if self.rg(t) {
                        accumulate(&mut grads[t.0], Tensor::scalar(g * w));
                    }
                }
            }
        }
    }
}

fn grads_bias(g: &[f32], n: usize, channels: usize, plane: usize, slot: &mut Option<Tensor>) {
    let mut db = vec![0.0f32; channels];
    for i in 0..n {
        for (c, acc) in db.iter_mut().enumerate() {
            let s = (i * channels + c) * plane;
            *acc += g[s..s + plane].iter().sum::<f32>();
        }
    }
    accumulate(slot, Tensor::new(vec![channels], db).expect("shape"));
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Central-difference check of d(loss)/d(input) for a graph builder that
    /// maps one input leaf to a scalar. Loss values are summed in f64 inside
    /// the graph, so ε = 1e-3 leaves ample precision.
    fn check_input_grad(input: Tensor, build: impl Fn(&mut Graph, Var) -> Var) {
        let mut g = Graph::new();
        let x = g.leaf(input.clone(), true);
        let loss = build(&mut g, x);
        let grads = g.backward(loss);
        let analytic = grads.get(x).unwrap().clone();
        let eps = 1e-3;
        let mut checked = 0;
        for i in (0..input.numel()).step_by((input.numel() / 12).max(1)) {
            let eval = |delta: f32| {
                let mut t = input.clone();
                t.data_mut()[i] += delta;
                let mut g = Graph::new();
                let x = g.leaf(t, false);
                let l = build(&mut g, x);
                g.value(l).item() as f64
            };
            let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps as f64);
            let a = analytic.data()[i] as f64;
            let denom = a.abs().max(numeric.abs()).max(1e-3);
            assert!(
                (a - numeric).abs() / denom < 1e-2,
                "element {i}: analytic {a} numeric {numeric}"
            );
            checked += 1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = rand_tensor(&mut rng, &[3, 2, 3, 3]);
        let target = rand_tensor(&mut rng, &[1, 3, 4, 4]);
        check_input_grad(rand_tensor(&mut rng, &[1, 2, 7, 7]), |g, x| {
            let w = g.constant(w.clone());
            let t = g.constant(target.clone());
            let y = g.conv2d(x, w, None, 2, 1, 1).unwrap();
            let y = g.tanh(y);
            let d = g.mean_abs_diff(y, t).unwrap();
            let sq = g.mean_squared_offset(y, 0.3);
            g.weighted_sum(&[(d, 0.5), (sq, 1.0)]).unwrap()
        });
    }

    #[test]
    fn conv_weight_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = rand_tensor(&mut rng, &[2, 2, 6, 6]);
        check_input_grad(rand_tensor(&mut rng, &[3, 2, 4, 4]), |g, w| {
            let x = g.constant(x.clone());
            let y = g.conv2d(x, w, None, 2, 1, 1).unwrap();
            g.mean_squared_offset(y, 0.2)
        });
    }

    #[test]
    fn transposed_conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = rand_tensor(&mut rng, &[2, 3, 3, 3]);
        let x = rand_tensor(&mut rng, &[1, 2, 4, 4]);
        check_input_grad(x.clone(), |g, x| {
            let w = g.constant(w.clone());
            let y = g.conv_transpose2d(x, w, None, 2, 1, 1).unwrap();
            assert_eq!(g.value(y).shape(), &[1, 3, 8, 8]);
            g.mean_squared_offset(y, 0.2)
        });
        check_input_grad(w, |g, w| {
            let x = g.constant(x.clone());
            let y = g.conv_transpose2d(x, w, None, 2, 1, 1).unwrap();
            g.mean_squared_offset(y, -0.1)
        });
    }

    #[test]
    fn norm_pad_resize_concat_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let other = rand_tensor(&mut rng, &[1, 1, 5, 5]);
        check_input_grad(rand_tensor(&mut rng, &[1, 2, 5, 5]), |g, x| {
            let p = g.reflect_pad(x, 2).unwrap();
            let n = g.instance_norm(p).unwrap();
            let r = g.resize(n, 3, 4).unwrap();
            let o = g.constant(other.clone());
            let o = g.resize(o, 3, 4).unwrap();
            let c = g.concat_channels(r, o).unwrap();
            let c = g.leaky_relu(c, 0.2);
            let cr = g.crop(c, 1, 1, 2, 2).unwrap();
            g.mean_squared_offset(cr, 0.5)
        });
    }

    #[test]
    fn linear_and_cross_entropy_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = rand_tensor(&mut rng, &[2, 8]);
        let b = rand_tensor(&mut rng, &[2]);
        check_input_grad(rand_tensor(&mut rng, &[3, 2, 2, 2]), |g, x| {
            let w = g.constant(w.clone());
            let b = g.constant(b.clone());
            let y = g.linear(x, w, b).unwrap();
            g.cross_entropy(y, &[0, 1, 1]).unwrap()
        });
    }

    #[test]
    fn transposed_conv_is_adjoint_of_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = rand_tensor(&mut rng, &[3, 2, 3, 3]);
        let x = rand_tensor(&mut rng, &[1, 2, 8, 8]);
        let y = rand_tensor(&mut rng, &[1, 3, 4, 4]);
        let mut g = Graph::new();
        let (xv, wv) = (g.constant(x.clone()), g.constant(w.clone()));
        let cx = g.conv2d(xv, wv, None, 2, 1, 1).unwrap();
        // conv: 8 -> 4 with pad (1, 1) and k=3 s=2 gives (8+2-3)/2+1 = 4
        let lhs: f32 = g.value(cx).data().iter().zip(y.data()).map(|(a, b)| a * b).sum();
        let yv = g.constant(y);
        // transposed weight layout is [in, out, k, k] with in = conv's out
        let ty = g.conv_transpose2d(yv, wv, None, 2, 1, 1).unwrap();
        let rhs: f32 = g.value(ty).data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-3, "{lhs} vs {rhs}");
    }
}
