//! Reverse-mode tape. Ops append nodes; `backward` walks the tape in reverse
//! creation order and accumulates gradients into a parallel buffer.

use crate::error::{NnError, Result};
use crate::linalg::{gemm_nn, gemm_nt, gemm_tn};
use crate::tensor::{Scalar, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

const NORM_CLAMP: f64 = 1e-6;
const PROB_CLAMP: f64 = 1e-12;

enum Op<T: Scalar> {
    Leaf,
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        factor: T,
    },
    SumVars {
        xs: Vec<Var>,
    },
    Relu {
        x: Var,
    },
    FullyConnected {
        x: Var,
        w: Var,
        b: Var,
        relu: bool,
        rows: usize,
        d_in: usize,
        d_out: usize,
    },
    Conv2d {
        x: Var,
        k: Var,
        stride: usize,
        pad: usize,
        cols: Vec<T>,
        in_shape: (usize, usize, usize),
        out_shape: (usize, usize, usize),
        kernel: (usize, usize),
    },
    MaxPool2 {
        x: Var,
        argmax: Vec<u32>,
    },
    L2Normalize {
        x: Var,
        axis: usize,
        norms: Vec<T>,
        clamped: Vec<bool>,
    },
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    BilinearGather {
        x: Var,
        points: Vec<(f64, f64)>,
    },
    Concat {
        xs: Vec<Var>,
        widths: Vec<usize>,
        rows: usize,
    },
    GlobalAvgPool {
        x: Var,
    },
    NormalRegressionLoss {
        pred: Var,
        gt: Vec<T>,
        valid: Vec<bool>,
        n_valid: usize,
    },
    SoftmaxLoss {
        logits: Var,
        target: usize,
        probs: Vec<T>,
    },
    ContrastiveLoss {
        a: Var,
        b: Var,
        positive: bool,
        margin: T,
        dist: T,
    },
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grads: Vec::new() }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of the last `backward` target w.r.t. `v`.
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        let g = self.grads[v.0].as_ref()?;
        Some(Tensor::new(self.value(v).shape().to_vec(), g.clone()).expect("grad shape"))
    }

    /// Constant leaf; no gradient is tracked through it.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Trainable leaf; `grad` is populated by `backward`.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(NnError::Shape(format!(
                "add: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let vals: Vec<T> = self
            .value(a)
            .values()
            .iter()
            .zip(self.value(b).values())
            .map(|(&x, &y)| x + y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), vals)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Add { a, b }, ng))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let vals: Vec<T> = self.value(x).values().iter().map(|&v| v * factor).collect();
        let t = Tensor::new(self.value(x).shape().to_vec(), vals).expect("scale shape");
        let ng = self.needs(x);
        self.push(t, Op::Scale { x, factor }, ng)
    }

    /// Elementwise sum of same-shape vars (used to combine per-sample losses).
    pub fn sum_vars(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or(NnError::EmptyBatch)?;
        let shape = self.value(first).shape().to_vec();
        let mut vals = vec![T::zero(); self.value(first).len()];
        for &x in xs {
            if self.value(x).shape() != shape.as_slice() {
                return Err(NnError::Shape("sum_vars: mismatched shapes".into()));
            }
            for (acc, &v) in vals.iter_mut().zip(self.value(x).values()) {
                *acc += v;
            }
        }
        let t = Tensor::new(shape, vals)?;
        let ng = xs.iter().any(|&x| self.needs(x));
        Ok(self.push(t, Op::SumVars { xs: xs.to_vec() }, ng))
    }

    pub fn mean_vars(&mut self, xs: &[Var]) -> Result<Var> {
        let s = self.sum_vars(xs)?;
        Ok(self.scale(s, T::from_f64(1.0 / xs.len() as f64)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let vals: Vec<T> =
            self.value(x).values().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
        let t = Tensor::new(self.value(x).shape().to_vec(), vals).expect("relu shape");
        let ng = self.needs(x);
        self.push(t, Op::Relu { x }, ng)
    }

    /// y = x * W^T + b, optionally ReLU'd. `x` is [d_in] or [rows, d_in],
    /// `w` is [d_out, d_in], `b` is [d_out].
    pub fn fully_connected(&mut self, x: Var, w: Var, b: Var, relu: bool) -> Result<Var> {
        let (rows, d_in) = match self.value(x).shape() {
            [d] => (1, *d),
            [r, d] => (*r, *d),
            s => return Err(NnError::Shape(format!("fully_connected: x rank {} unsupported", s.len()))),
        };
        let (d_out, w_in) = match self.value(w).shape() {
            [o, i] => (*o, *i),
            s => return Err(NnError::Shape(format!("fully_connected: weight shape {s:?}"))),
        };
        if w_in != d_in {
            return Err(NnError::Shape(format!(
                "fully_connected: input dim {d_in} vs weight inner dim {w_in}"
            )));
        }
        if self.value(b).shape() != [d_out] {
            return Err(NnError::Shape(format!(
                "fully_connected: bias shape {:?}, want [{d_out}]",
                self.value(b).shape()
            )));
        }
        let mut out = vec![T::zero(); rows * d_out];
        for r in 0..rows {
            out[r * d_out..(r + 1) * d_out].copy_from_slice(self.value(b).values());
        }
        gemm_nt(rows, d_in, d_out, self.value(x).values(), self.value(w).values(), &mut out);
        if relu {
            for v in &mut out {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
        let shape = if self.value(x).rank() == 1 { vec![d_out] } else { vec![rows, d_out] };
        let t = Tensor::new(shape, out)?;
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(t, Op::FullyConnected { x, w, b, relu, rows, d_in, d_out }, ng))
    }

    /// Cross-correlation of `x` [C,H,W] with `k` [K,C,kh,kw].
    pub fn conv2d(&mut self, x: Var, k: Var, stride: usize, pad: usize) -> Result<Var> {
        if stride < 1 {
            return Err(NnError::Parameter("conv2d: stride must be >= 1".into()));
        }
        let (c, h, w) = match self.value(x).shape() {
            [c, h, w] => (*c, *h, *w),
            s => return Err(NnError::Shape(format!("conv2d: input shape {s:?}, want [C,H,W]"))),
        };
        let (kn, kc, kh, kw) = match self.value(k).shape() {
            [n, c2, a, b] => (*n, *c2, *a, *b),
            s => return Err(NnError::Shape(format!("conv2d: kernel shape {s:?}, want [K,C,kh,kw]"))),
        };
        if kc != c {
            return Err(NnError::Shape(format!("conv2d: input channels {c} vs kernel channels {kc}")));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(NnError::Parameter(format!("conv2d: kernel dims must be odd, got {kh}x{kw}")));
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(NnError::Shape(format!(
                "conv2d: padded input {}x{} smaller than kernel {kh}x{kw}",
                h + 2 * pad,
                w + 2 * pad
            )));
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;

        let ckk = c * kh * kw;
        let mut cols = vec![T::zero(); ckk * oh * ow];
        im2col(self.value(x).values(), c, h, w, kh, kw, stride, pad, oh, ow, &mut cols);

        let mut out = vec![T::zero(); kn * oh * ow];
        gemm_nn(kn, ckk, oh * ow, self.value(k).values(), &cols, &mut out);

        let t = Tensor::new(vec![kn, oh, ow], out)?;
        let ng = self.needs(x) || self.needs(k);
        Ok(self.push(
            t,
            Op::Conv2d {
                x,
                k,
                stride,
                pad,
                cols,
                in_shape: (c, h, w),
                out_shape: (kn, oh, ow),
                kernel: (kh, kw),
            },
            ng,
        ))
    }

    /// 2x2 max pool, stride 2. Ties go to the first element in row-major order.
    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = match self.value(x).shape() {
            [c, h, w] => (*c, *h, *w),
            s => return Err(NnError::Shape(format!("maxpool2: input shape {s:?}, want [C,H,W]"))),
        };
        if h % 2 != 0 || w % 2 != 0 {
            return Err(NnError::Shape(format!("maxpool2: spatial dims must be even, got {h}x{w}")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let vals = self.value(x).values();
        let mut out = vec![T::zero(); c * oh * ow];
        let mut argmax = vec![0u32; c * oh * ow];
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best_idx = 0usize;
                    let mut best = T::neg_infinity();
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let idx = ch * h * w + (2 * oy + dy) * w + (2 * ox + dx);
                            if vals[idx] > best {
                                best = vals[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = ch * oh * ow + oy * ow + ox;
                    out[o] = best;
                    argmax[o] = best_idx as u32;
                }
            }
        }
        let t = Tensor::new(vec![c, oh, ow], out)?;
        let ng = self.needs(x);
        Ok(self.push(t, Op::MaxPool2 { x, argmax }, ng))
    }

    /// Divide each slice along `axis` by max(||slice||, 1e-6).
    pub fn l2_normalize(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.value(x).shape().to_vec();
        if axis >= shape.len() {
            return Err(NnError::Shape(format!("l2_normalize: axis {axis} for shape {shape:?}")));
        }
        let outer: usize = shape[..axis].iter().product();
        let alen = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let vals = self.value(x).values();
        let mut out = vec![T::zero(); vals.len()];
        let mut norms = vec![T::zero(); outer * inner];
        let mut clamped = vec![false; outer * inner];
        let clamp = T::from_f64(NORM_CLAMP);
        for o in 0..outer {
            for i in 0..inner {
                let mut sq = T::zero();
                for a in 0..alen {
                    let v = vals[o * alen * inner + a * inner + i];
                    sq += v * v;
                }
                let norm = sq.sqrt();
                let is_clamped = norm < clamp;
                let r = if is_clamped { clamp } else { norm };
                for a in 0..alen {
                    let idx = o * alen * inner + a * inner + i;
                    out[idx] = vals[idx] / r;
                }
                norms[o * inner + i] = r;
                clamped[o * inner + i] = is_clamped;
            }
        }
        let t = Tensor::new(shape, out)?;
        let ng = self.needs(x);
        Ok(self.push(t, Op::L2Normalize { x, axis, norms, clamped }, ng))
    }

    /// Inverted dropout: zero units with probability `p`, scale survivors by
    /// 1/(1-p). Identity when not training or p == 0.
    pub fn dropout(&mut self, x: Var, p: f64, training: bool, rng: &mut ChaCha8Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(NnError::Parameter(format!("dropout: p must be in [0,1), got {p}")));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = T::from_f64(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.value(x).len())
            .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
            .collect();
        let vals: Vec<T> =
            self.value(x).values().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let t = Tensor::new(self.value(x).shape().to_vec(), vals)?;
        let ng = self.needs(x);
        Ok(self.push(t, Op::Dropout { x, mask }, ng))
    }

    /// Sample a [C,H,W] map at continuous grid points, bilinearly; output [P,C].
    /// Points are (x, y) in the map's own pixel grid, clamped to its bounds.
    pub fn bilinear_gather(&mut self, x: Var, points: &[(f64, f64)]) -> Result<Var> {
        let (c, h, w) = match self.value(x).shape() {
            [c, h, w] => (*c, *h, *w),
            s => return Err(NnError::Shape(format!("bilinear_gather: map shape {s:?}"))),
        };
        if points.is_empty() {
            return Err(NnError::EmptyBatch);
        }
        let vals = self.value(x).values();
        let mut out = vec![T::zero(); points.len() * c];
        for (p, &(px, py)) in points.iter().enumerate() {
            let (x0, x1, fx) = bilinear_axis(px, w);
            let (y0, y1, fy) = bilinear_axis(py, h);
            let (wx, wy) = (T::from_f64(fx), T::from_f64(fy));
            let one = T::one();
            for ch in 0..c {
                let base = ch * h * w;
                let v00 = vals[base + y0 * w + x0];
                let v01 = vals[base + y0 * w + x1];
                let v10 = vals[base + y1 * w + x0];
                let v11 = vals[base + y1 * w + x1];
                let top = (one - wx) * v00 + wx * v01;
                let bot = (one - wx) * v10 + wx * v11;
                out[p * c + ch] = (one - wy) * top + wy * bot;
            }
        }
        let t = Tensor::new(vec![points.len(), c], out)?;
        let ng = self.needs(x);
        Ok(self.push(t, Op::BilinearGather { x, points: points.to_vec() }, ng))
    }

    /// Concatenate along the last axis. Inputs must share all leading dims.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(NnError::EmptyBatch);
        }
        let rank = self.value(xs[0]).rank();
        let rows = if rank == 1 { 1 } else { self.value(xs[0]).shape()[0] };
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.value(x).shape();
            match (rank, s) {
                (1, [wd]) => widths.push(*wd),
                (2, [r, wd]) if *r == rows => widths.push(*wd),
                _ => return Err(NnError::Shape(format!("concat: incompatible shape {s:?}"))),
            }
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![T::zero(); rows * total];
        for r in 0..rows {
            let mut off = 0;
            for (&x, &wd) in xs.iter().zip(&widths) {
                let src = &self.value(x).values()[r * wd..(r + 1) * wd];
                out[r * total + off..r * total + off + wd].copy_from_slice(src);
                off += wd;
            }
        }
        let shape = if rank == 1 { vec![total] } else { vec![rows, total] };
        let t = Tensor::new(shape, out)?;
        let ng = xs.iter().any(|&x| self.needs(x));
        Ok(self.push(t, Op::Concat { xs: xs.to_vec(), widths, rows }, ng))
    }

    /// [C,H,W] -> [C], spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let (c, h, w) = match self.value(x).shape() {
            [c, h, w] => (*c, *h, *w),
            s => return Err(NnError::Shape(format!("global_avg_pool: input shape {s:?}"))),
        };
        let inv = T::from_f64(1.0 / (h * w) as f64);
        let vals = self.value(x).values();
        let out: Vec<T> = (0..c)
            .map(|ch| vals[ch * h * w..(ch + 1) * h * w].iter().copied().sum::<T>() * inv)
            .collect();
        let t = Tensor::new(vec![c], out)?;
        let ng = self.needs(x);
        Ok(self.push(t, Op::GlobalAvgPool { x }, ng))
    }

    /// Mean over valid rows of ||pred_p - gt_p||^2. `pred` is [P,3] and must be
    /// unit rows for the 2 - 2 cos identity to hold; `gt` supplies targets.
    pub fn normal_regression_loss(
        &mut self,
        pred: Var,
        gt: &Tensor<T>,
        valid: &[bool],
    ) -> Result<Var> {
        let p = match self.value(pred).shape() {
            [p, 3] => *p,
            s => return Err(NnError::Shape(format!("normal_regression_loss: pred shape {s:?}"))),
        };
        if gt.shape() != [p, 3] {
            return Err(NnError::Shape(format!(
                "normal_regression_loss: gt shape {:?}, want [{p}, 3]",
                gt.shape()
            )));
        }
        if valid.len() != p {
            return Err(NnError::Shape("normal_regression_loss: mask length".into()));
        }
        let n_valid = valid.iter().filter(|&&v| v).count();
        if n_valid == 0 {
            return Err(NnError::EmptyBatch);
        }
        let pv = self.value(pred).values();
        let gv = gt.values();
        let mut acc = T::zero();
        for i in 0..p {
            if !valid[i] {
                continue;
            }
            for k in 0..3 {
                let d = pv[i * 3 + k] - gv[i * 3 + k];
                acc += d * d;
            }
        }
        let loss = acc * T::from_f64(1.0 / n_valid as f64);
        let t = Tensor::scalar(loss);
        let ng = self.needs(pred);
        Ok(self.push(
            t,
            Op::NormalRegressionLoss {
                pred,
                gt: gv.to_vec(),
                valid: valid.to_vec(),
                n_valid,
            },
            ng,
        ))
    }

    /// -log softmax(logits)[target], probabilities clamped below at 1e-12.
    pub fn softmax_loss(&mut self, logits: Var, target: usize) -> Result<Var> {
        let n = match self.value(logits).shape() {
            [n] => *n,
            s => return Err(NnError::Shape(format!("softmax_loss: logits shape {s:?}"))),
        };
        if target >= n {
            return Err(NnError::IndexOutOfRange { index: target, len: n });
        }
        let probs = softmax(self.value(logits).values());
        let p = probs[target].max(T::from_f64(PROB_CLAMP));
        let t = Tensor::scalar(-p.ln());
        let ng = self.needs(logits);
        Ok(self.push(t, Op::SoftmaxLoss { logits, target, probs }, ng))
    }

    /// Positive pair: ||a-b||. Negative pair: max(margin - ||a-b||, 0).
    pub fn contrastive_loss(&mut self, a: Var, b: Var, positive: bool, margin: f64) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(NnError::Shape(format!(
                "contrastive_loss: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut sq = T::zero();
        for (&x, &y) in self.value(a).values().iter().zip(self.value(b).values()) {
            let d = x - y;
            sq += d * d;
        }
        let dist = sq.sqrt();
        let m = T::from_f64(margin);
        let loss = if positive { dist } else { (m - dist).max(T::zero()) };
        let t = Tensor::scalar(loss);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::ContrastiveLoss { a, b, positive, margin: m, dist }, ng))
    }

    /// Accumulate d(loss)/d(node) for every node that needs it.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(NnError::NonScalarOutput(self.value(loss).shape().to_vec()));
        }
        for g in &mut self.grads {
            *g = None;
        }
        self.grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(gout) = self.grads[i].take() else { continue };
            self.propagate(i, &gout);
            self.grads[i] = Some(gout);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, gout: &[T]) {
        // Ops only reference earlier nodes, so node values can be read while
        // input gradient slots are written; the two live in separate buffers.
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let acc = |grads: &mut Vec<Option<Vec<T>>>, v: Var, f: &mut dyn FnMut(&mut [T])| {
            if !nodes[v.0].needs_grad {
                return;
            }
            let len = nodes[v.0].value.len();
            let slot = grads[v.0].get_or_insert_with(|| vec![T::zero(); len]);
            f(slot);
        };
        match &nodes[i].op {
            Op::Leaf => {}
            Op::Add { a, b } => {
                for &v in [a, b] {
                    acc(grads, v, &mut |g| {
                        for (gv, &o) in g.iter_mut().zip(gout) {
                            *gv += o;
                        }
                    });
                }
            }
            Op::Scale { x, factor } => {
                let f = *factor;
                acc(grads, *x, &mut |g| {
                    for (gv, &o) in g.iter_mut().zip(gout) {
                        *gv += o * f;
                    }
                });
            }
            Op::SumVars { xs } => {
                for &x in xs {
                    acc(grads, x, &mut |g| {
                        for (gv, &o) in g.iter_mut().zip(gout) {
                            *gv += o;
                        }
                    });
                }
            }
            Op::Relu { x } => {
                let yv = nodes[i].value.values();
                acc(grads, *x, &mut |g| {
                    for ((gv, &o), &y) in g.iter_mut().zip(gout).zip(yv) {
                        if y > T::zero() {
                            *gv += o;
                        }
                    }
                });
            }
            Op::FullyConnected { x, w, b, relu, rows, d_in, d_out } => {
                let (rows, d_in, d_out) = (*rows, *d_in, *d_out);
                // ReLU mask from the output values: y > 0 iff pre-activation > 0.
                let mut gy = gout.to_vec();
                if *relu {
                    for (gv, &y) in gy.iter_mut().zip(nodes[i].value.values()) {
                        if y <= T::zero() {
                            *gv = T::zero();
                        }
                    }
                }
                let wv = nodes[w.0].value.values();
                let xv = nodes[x.0].value.values();
                acc(grads, *x, &mut |g| gemm_nn(rows, d_out, d_in, &gy, wv, g));
                acc(grads, *w, &mut |g| gemm_tn(d_out, rows, d_in, &gy, xv, g));
                acc(grads, *b, &mut |g| {
                    for r in 0..rows {
                        for (gv, &o) in g.iter_mut().zip(&gy[r * d_out..(r + 1) * d_out]) {
                            *gv += o;
                        }
                    }
                });
            }
            Op::Conv2d { x, k, stride, pad, cols, in_shape, out_shape, kernel } => {
                let (stride, pad) = (*stride, *pad);
                let (c, h, w) = *in_shape;
                let (kn, oh, ow) = *out_shape;
                let (kh, kw) = *kernel;
                let ckk = c * kh * kw;
                acc(grads, *k, &mut |g| gemm_nt(kn, oh * ow, ckk, gout, cols, g));
                if nodes[x.0].needs_grad {
                    let kv = nodes[k.0].value.values();
                    let mut dcols = vec![T::zero(); ckk * oh * ow];
                    gemm_tn(ckk, kn, oh * ow, kv, gout, &mut dcols);
                    acc(grads, *x, &mut |g| {
                        col2im(&dcols, c, h, w, kh, kw, stride, pad, oh, ow, g);
                    });
                }
            }
            Op::MaxPool2 { x, argmax } => {
                acc(grads, *x, &mut |g| {
                    for (&idx, &o) in argmax.iter().zip(gout) {
                        g[idx as usize] += o;
                    }
                });
            }
            Op::L2Normalize { x, axis, norms, clamped } => {
                let shape = nodes[i].value.shape();
                let outer: usize = shape[..*axis].iter().product();
                let alen = shape[*axis];
                let inner: usize = shape[*axis + 1..].iter().product();
                let yv = nodes[i].value.values();
                acc(grads, *x, &mut |g| {
                    for o in 0..outer {
                        for ii in 0..inner {
                            let r = norms[o * inner + ii];
                            if clamped[o * inner + ii] {
                                // Norm pinned at the clamp: dy/dv = 1/clamp.
                                for a in 0..alen {
                                    let idx = o * alen * inner + a * inner + ii;
                                    g[idx] += gout[idx] / r;
                                }
                            } else {
                                let mut dot = T::zero();
                                for a in 0..alen {
                                    let idx = o * alen * inner + a * inner + ii;
                                    dot += yv[idx] * gout[idx];
                                }
                                for a in 0..alen {
                                    let idx = o * alen * inner + a * inner + ii;
                                    g[idx] += (gout[idx] - yv[idx] * dot) / r;
                                }
                            }
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => {
                acc(grads, *x, &mut |g| {
                    for ((gv, &o), &m) in g.iter_mut().zip(gout).zip(mask) {
                        *gv += o * m;
                    }
                });
            }
            Op::BilinearGather { x, points } => {
                let (c, h, w) = match nodes[x.0].value.shape() {
                    [c, h, w] => (*c, *h, *w),
                    _ => unreachable!(),
                };
                acc(grads, *x, &mut |g| {
                    let one = T::one();
                    for (p, &(px, py)) in points.iter().enumerate() {
                        let (x0, x1, fx) = bilinear_axis(px, w);
                        let (y0, y1, fy) = bilinear_axis(py, h);
                        let (wx, wy) = (T::from_f64(fx), T::from_f64(fy));
                        for ch in 0..c {
                            let o = gout[p * c + ch];
                            let base = ch * h * w;
                            g[base + y0 * w + x0] += o * (one - wy) * (one - wx);
                            g[base + y0 * w + x1] += o * (one - wy) * wx;
                            g[base + y1 * w + x0] += o * wy * (one - wx);
                            g[base + y1 * w + x1] += o * wy * wx;
                        }
                    }
                });
            }
            Op::Concat { xs, widths, rows } => {
                let rows = *rows;
                let total: usize = widths.iter().sum();
                let mut off = 0;
                for (&x, &wd) in xs.iter().zip(widths) {
                    let start = off;
                    acc(grads, x, &mut |g| {
                        for r in 0..rows {
                            for j in 0..wd {
                                g[r * wd + j] += gout[r * total + start + j];
                            }
                        }
                    });
                    off += wd;
                }
            }
            Op::GlobalAvgPool { x } => {
                let (c, h, w) = match nodes[x.0].value.shape() {
                    [c, h, w] => (*c, *h, *w),
                    _ => unreachable!(),
                };
                let inv = T::from_f64(1.0 / (h * w) as f64);
                acc(grads, *x, &mut |g| {
                    for ch in 0..c {
                        let o = gout[ch] * inv;
                        for gv in &mut g[ch * h * w..(ch + 1) * h * w] {
                            *gv += o;
                        }
                    }
                });
            }
            Op::NormalRegressionLoss { pred, gt, valid, n_valid } => {
                let scale = T::from_f64(2.0 / *n_valid as f64) * gout[0];
                let pv = nodes[pred.0].value.values();
                acc(grads, *pred, &mut |g| {
                    for (j, &ok) in valid.iter().enumerate() {
                        if !ok {
                            continue;
                        }
                        for k in 0..3 {
                            g[j * 3 + k] += scale * (pv[j * 3 + k] - gt[j * 3 + k]);
                        }
                    }
                });
            }
            Op::SoftmaxLoss { logits, target, probs } => {
                let target = *target;
                let o = gout[0];
                acc(grads, *logits, &mut |g| {
                    for (j, gv) in g.iter_mut().enumerate() {
                        let ind = if j == target { T::one() } else { T::zero() };
                        *gv += o * (probs[j] - ind);
                    }
                });
            }
            Op::ContrastiveLoss { a, b, positive, margin, dist } => {
                let (positive, margin, dist) = (*positive, *margin, *dist);
                // Subgradient 0 at coincident points and on the inactive side
                // of the hinge.
                let active =
                    if positive { dist > T::zero() } else { dist > T::zero() && dist < margin };
                if active {
                    let sign = if positive { T::one() } else { -T::one() };
                    let scale = gout[0] * sign / dist;
                    let av = nodes[a.0].value.values();
                    let bv = nodes[b.0].value.values();
                    acc(grads, *a, &mut |g| {
                        for (j, gv) in g.iter_mut().enumerate() {
                            *gv += scale * (av[j] - bv[j]);
                        }
                    });
                    acc(grads, *b, &mut |g| {
                        for (j, gv) in g.iter_mut().enumerate() {
                            *gv += scale * (bv[j] - av[j]);
                        }
                    });
                }
            }
        }
    }
}

/// Clamped bilinear sampling bounds along one axis.
fn bilinear_axis(coord: f64, len: usize) -> (usize, usize, f64) {
    let c = coord.clamp(0.0, (len - 1) as f64);
    let i0 = c.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, c - i0 as f64)
}

#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    cols: &mut [T],
) {
    let hw = oh * ow;
    for ch in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ch * kh * kw + ki * kw + kj) * hw;
                for oy in 0..oh {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = ch * h * w + iy as usize * w;
                    let dst = row + oy * ow;
                    for ox in 0..ow {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            cols[dst + ox] = x[src + ix as usize];
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im<T: Scalar>(
    dcols: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
    dx: &mut [T],
) {
    let hw = oh * ow;
    for ch in 0..c {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (ch * kh * kw + ki * kw + kj) * hw;
                for oy in 0..oh {
                    let iy = (oy * stride + ki) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = ch * h * w + iy as usize * w;
                    let src = row + oy * ow;
                    for ox in 0..ow {
                        let ix = (ox * stride + kj) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dx[dst + ix as usize] += dcols[src + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
