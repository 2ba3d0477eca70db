//! Tape-style computation graph with reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value. Nodes are only
//! ever appended, so the node order is already a topological order and
//! [`Graph::backward`] walks it in reverse.

use crate::error::{Error, Result};

use super::conv::{self, ConvGeometry, ConvSpec};
use super::tensor::{Scalar, Tensor};

/// Handle to a node of one [`Graph`].
///
/// Handles are plain indices; using a handle with a graph other than the
/// one that produced it is a logic error and may panic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Direction of a spatial forward difference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Along the width (`x[i, j + 1] - x[i, j]`).
    Horizontal,
    /// Along the height (`x[i + 1, j] - x[i, j]`).
    Vertical,
}

/// Pointwise operations, for callers that pick the operation at runtime.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Abs,
    Exp,
    Relu,
    Sigmoid,
    Scale(f64),
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Conv {
        input: Var,
        weight: Var,
        bias: Var,
        geom: ConvGeometry,
    },
    Resize {
        input: Var,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Abs(Var),
    Exp(Var),
    Relu(Var),
    Sigmoid(Var),
    Scale(Var, T),
    Concat(Vec<Var>),
    Channels {
        input: Var,
        start: usize,
    },
    ChannelMean(Var),
    Gradient {
        input: Var,
        axis: Axis,
    },
    MeanAbs(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
}

/// How two operand shapes combine in a binary pointwise op.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// The operand on this side is a 1-channel map tiled over `channels`.
    LeftMap { channels: usize },
    RightMap { channels: usize },
}

/// A single forward/backward computation.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds an input tensor. Gradients are tracked only if `requires_grad`.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    /// Copies the current value of `v` into a new constant node, cutting
    /// gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.nodes[v.0].grad.take()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, spec: ConvSpec) -> Result<Var> {
        spec.validate()?;
        let [b, c, h, w] = self.value(input).dims4("conv2d")?;
        if c != spec.in_channels {
            return Err(Error::shape(
                "conv2d",
                format!("input channels {c} != spec in_channels {}", spec.in_channels),
            ));
        }
        let expect_w = spec.weight_shape();
        if self.value(weight).shape() != expect_w {
            return Err(Error::shape(
                "conv2d",
                format!("weight shape {:?} != {expect_w:?}", self.value(weight).shape()),
            ));
        }
        if self.value(bias).shape() != [spec.out_channels] {
            return Err(Error::shape(
                "conv2d",
                format!("bias shape {:?} != [{}]", self.value(bias).shape(), spec.out_channels),
            ));
        }
        let geom = ConvGeometry::new(spec, b, h, w);
        let mut out = Tensor::zeros(&[b, spec.out_channels, geom.out_h, geom.out_w]);
        conv::forward(
            &geom,
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
            out.data_mut(),
        );
        let rg = self.any_grad(&[input, weight, bias]);
        Ok(self.push(
            out,
            Op::Conv {
                input,
                weight,
                bias,
                geom,
            },
            rg,
        ))
    }

    /// Nearest-neighbour resize; source index is `floor(out * in / target)`.
    pub fn resize_nearest(&mut self, input: Var, target_h: usize, target_w: usize) -> Result<Var> {
        if target_h == 0 || target_w == 0 {
            return Err(Error::invalid("resize_nearest", "target extents must be at least 1"));
        }
        let [b, c, h, w] = self.value(input).dims4("resize_nearest")?;
        let rows = nearest_index(h, target_h);
        let cols = nearest_index(w, target_w);
        let src = self.value(input).data();
        let mut out = Vec::with_capacity(b * c * target_h * target_w);
        for plane in src.chunks_exact(h * w) {
            for &r in &rows {
                let row = &plane[r * w..(r + 1) * w];
                out.extend(cols.iter().map(|&cx| row[cx]));
            }
        }
        let out = Tensor::new(vec![b, c, target_h, target_w], out)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(out, Op::Resize { input }, rg))
    }

    fn broadcast(&self, op: &'static str, a: Var, b: Var) -> Result<Broadcast> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa == sb {
            return Ok(Broadcast::Same);
        }
        if let (&[ba, ca, ha, wa], &[bb, cb, hb, wb]) = (sa, sb) {
            if (ba, ha, wa) == (bb, hb, wb) {
                if ca == 1 {
                    return Ok(Broadcast::LeftMap { channels: cb });
                }
                if cb == 1 {
                    return Ok(Broadcast::RightMap { channels: ca });
                }
            }
        }
        Err(Error::shape(op, format!("incompatible shapes {sa:?} and {sb:?}")))
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<(Tensor<T>, Broadcast)> {
        let mode = self.broadcast(op, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let out = match mode {
            Broadcast::Same => {
                let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
                Tensor::new(ta.shape().to_vec(), data)?
            }
            Broadcast::LeftMap { channels } => {
                let [bn, _, h, w] = tb.dims4(op)?;
                let plane = h * w;
                Tensor::from_fn(&[bn, channels, h, w], |i| {
                    let (bi, rem) = (i / (channels * plane), i % plane);
                    f(ta.data()[bi * plane + rem], tb.data()[i])
                })
            }
            Broadcast::RightMap { channels } => {
                let [bn, _, h, w] = ta.dims4(op)?;
                let plane = h * w;
                Tensor::from_fn(&[bn, channels, h, w], |i| {
                    let (bi, rem) = (i / (channels * plane), i % plane);
                    f(ta.data()[i], tb.data()[bi * plane + rem])
                })
            }
        };
        Ok((out, mode))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, _) = self.binary("add", a, b, |x, y| x + y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, _) = self.binary("sub", a, b, |x, y| x - y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product; a 1-channel map broadcasts over the channels of
    /// the other operand.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, _) = self.binary("mul", a, b, |x, y| x * y)?;
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let out = self.value(a).map(f);
        let rg = self.any_grad(&[a]);
        self.push(out, op, rg)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, T::abs, Op::Abs(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, T::exp, Op::Exp(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(T::zero()), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let k = T::from_f64_lossy(factor);
        self.unary(a, move |x| x * k, Op::Scale(a, k))
    }

    /// Dispatches a pointwise op by tag. Unary ops take one operand, binary
    /// ops two.
    pub fn elementwise(&mut self, op: Elementwise, args: &[Var]) -> Result<Var> {
        let arity = match op {
            Elementwise::Add | Elementwise::Sub | Elementwise::Mul => 2,
            _ => 1,
        };
        if args.len() != arity {
            return Err(Error::invalid(
                "elementwise",
                format!("{op:?} takes {arity} operands, got {}", args.len()),
            ));
        }
        Ok(match op {
            Elementwise::Add => self.add(args[0], args[1])?,
            Elementwise::Sub => self.sub(args[0], args[1])?,
            Elementwise::Mul => self.mul(args[0], args[1])?,
            Elementwise::Abs => self.abs(args[0]),
            Elementwise::Exp => self.exp(args[0]),
            Elementwise::Relu => self.relu(args[0]),
            Elementwise::Sigmoid => self.sigmoid(args[0]),
            Elementwise::Scale(k) => self.scale(args[0], k),
        })
    }

    /// Concatenates 4-D tensors along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::invalid("concat_channels", "no operands"))?;
        let [b, _, h, w] = self.value(first).dims4("concat_channels")?;
        let mut total_c = 0;
        for &p in parts {
            let [pb, pc, ph, pw] = self.value(p).dims4("concat_channels")?;
            if (pb, ph, pw) != (b, h, w) {
                return Err(Error::shape(
                    "concat_channels",
                    format!("operand {:?} does not match [{b}, _, {h}, {w}]", self.value(p).shape()),
                ));
            }
            total_c += pc;
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(b * total_c * plane);
        for bi in 0..b {
            for &p in parts {
                let t = self.value(p);
                let c = t.shape()[1];
                data.extend_from_slice(&t.data()[bi * c * plane..(bi + 1) * c * plane]);
            }
        }
        let out = Tensor::new(vec![b, total_c, h, w], data)?;
        let rg = self.any_grad(parts);
        Ok(self.push(out, Op::Concat(parts.to_vec()), rg))
    }

    /// Channel range `[start, start + len)` of a 4-D tensor.
    pub fn channels(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let out = self.value(input).channels(start, len)?;
        let rg = self.any_grad(&[input]);
        Ok(self.push(out, Op::Channels { input, start }, rg))
    }

    /// Mean over the channel axis, giving a 1-channel map.
    pub fn channel_mean(&mut self, input: Var) -> Result<Var> {
        let [b, c, h, w] = self.value(input).dims4("channel_mean")?;
        let plane = h * w;
        let inv = T::one() / T::from_usize(c).unwrap();
        let src = self.value(input).data();
        let out = Tensor::from_fn(&[b, 1, h, w], |i| {
            let (bi, p) = (i / plane, i % plane);
            let mut acc = T::zero();
            for ci in 0..c {
                acc = acc + src[(bi * c + ci) * plane + p];
            }
            acc * inv
        });
        let rg = self.any_grad(&[input]);
        Ok(self.push(out, Op::ChannelMean(input), rg))
    }

    /// Forward difference along `axis`; the last column (horizontal) or row
    /// (vertical) is zero.
    pub fn spatial_gradient(&mut self, input: Var, axis: Axis) -> Result<Var> {
        let [_, _, h, w] = self.value(input).dims4("spatial_gradient")?;
        if h < 2 || w < 2 {
            return Err(Error::invalid(
                "spatial_gradient",
                format!("spatial extent {h}x{w} is degenerate, need at least 2x2"),
            ));
        }
        let src = self.value(input);
        let mut out = Tensor::zeros(src.shape());
        for (o, x) in out.data_mut().chunks_exact_mut(h * w).zip(src.data().chunks_exact(h * w)) {
            match axis {
                Axis::Horizontal => {
                    for r in 0..h {
                        for cx in 0..w - 1 {
                            o[r * w + cx] = x[r * w + cx + 1] - x[r * w + cx];
                        }
                    }
                }
                Axis::Vertical => {
                    for r in 0..h - 1 {
                        for cx in 0..w {
                            o[r * w + cx] = x[(r + 1) * w + cx] - x[r * w + cx];
                        }
                    }
                }
            }
        }
        let rg = self.any_grad(&[input]);
        Ok(self.push(out, Op::Gradient { input, axis }, rg))
    }

    /// Scalar `mean(|x|)`.
    pub fn reduce_mean_abs(&mut self, input: Var) -> Result<Var> {
        let t = self.value(input);
        if t.is_empty() {
            return Err(Error::invalid("reduce_mean_abs", "empty tensor"));
        }
        let n = T::from_usize(t.len()).unwrap();
        let total = t.data().iter().fold(T::zero(), |acc, &v| acc + v.abs());
        let rg = self.any_grad(&[input]);
        Ok(self.push(Tensor::scalar(total / n), Op::MeanAbs(input), rg))
    }

    /// Scalar `mean(x)`.
    pub fn reduce_mean(&mut self, input: Var) -> Result<Var> {
        let t = self.value(input);
        if t.is_empty() {
            return Err(Error::invalid("reduce_mean", "empty tensor"));
        }
        let out = Tensor::scalar(t.mean());
        let rg = self.any_grad(&[input]);
        Ok(self.push(out, Op::Mean(input), rg))
    }

    /// Reverse-mode sweep from a scalar. Gradients accumulate into every
    /// tracked node; call [`Graph::zero_grad`] between independent sweeps.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.value(loss).shape()),
            ));
        }
        let mut pending: Vec<Option<Tensor<T>>> = Vec::new();
        pending.resize_with(loss.0 + 1, || None);
        pending[loss.0] = Some(Tensor::full(self.value(loss).shape(), T::one()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = pending[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut pending)?;
            let node = &mut self.nodes[idx];
            match &mut node.grad {
                Some(acc) => acc.accumulate(&g),
                slot @ None => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &Tensor<T>, pending: &mut [Option<Tensor<T>>]) -> Result<()> {
        let node = &self.nodes[idx];
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Conv {
                input,
                weight,
                bias,
                geom,
            } => {
                if self.requires_grad(*input) {
                    let mut gi = Tensor::zeros(self.value(*input).shape());
                    conv::backward_input(geom, gd, self.value(*weight).data(), gi.data_mut());
                    self.send(pending, *input, gi);
                }
                let want_w = self.requires_grad(*weight);
                let want_b = self.requires_grad(*bias);
                if want_w || want_b {
                    let mut gw = Tensor::zeros(self.value(*weight).shape());
                    let mut gb = Tensor::zeros(self.value(*bias).shape());
                    conv::backward_params(
                        geom,
                        gd,
                        self.value(*input).data(),
                        want_w.then(|| gw.data_mut()),
                        want_b.then(|| gb.data_mut()),
                    );
                    if want_w {
                        self.send(pending, *weight, gw);
                    }
                    if want_b {
                        self.send(pending, *bias, gb);
                    }
                }
            }
            Op::Resize { input } => {
                let [_, _, h, w] = self.value(*input).dims4("resize_nearest")?;
                let [_, _, th, tw] = node.value.dims4("resize_nearest")?;
                let rows = nearest_index(h, th);
                let cols = nearest_index(w, tw);
                let mut gi = Tensor::zeros(self.value(*input).shape());
                for (gi_p, g_p) in gi.data_mut().chunks_exact_mut(h * w).zip(gd.chunks_exact(th * tw)) {
                    for (oy, &r) in rows.iter().enumerate() {
                        for (ox, &cx) in cols.iter().enumerate() {
                            gi_p[r * w + cx] = gi_p[r * w + cx] + g_p[oy * tw + ox];
                        }
                    }
                }
                self.send(pending, *input, gi);
            }
            Op::Add(a, b) => {
                let mode = self.broadcast("add", *a, *b)?;
                self.send_binary(pending, *a, *b, mode, g, |gv, _, _| gv, |gv, _, _| gv);
            }
            Op::Sub(a, b) => {
                let mode = self.broadcast("sub", *a, *b)?;
                self.send_binary(pending, *a, *b, mode, g, |gv, _, _| gv, |gv, _, _| -gv);
            }
            Op::Mul(a, b) => {
                let mode = self.broadcast("mul", *a, *b)?;
                self.send_binary(pending, *a, *b, mode, g, |gv, _, y| gv * y, |gv, x, _| gv * x);
            }
            Op::Abs(a) => {
                let x = self.value(*a).data();
                let gi = zip_map(x, gd, |xv, gv| if xv > T::zero() { gv } else if xv < T::zero() { -gv } else { T::zero() });
                self.send(pending, *a, Tensor::new(g.shape().to_vec(), gi)?);
            }
            Op::Exp(a) | Op::Sigmoid(a) | Op::Relu(a) => {
                let y = node.value.data();
                let gi = match &node.op {
                    Op::Exp(_) => zip_map(y, gd, |yv, gv| gv * yv),
                    Op::Sigmoid(_) => zip_map(y, gd, |yv, gv| gv * yv * (T::one() - yv)),
                    _ => zip_map(y, gd, |yv, gv| if yv > T::zero() { gv } else { T::zero() }),
                };
                self.send(pending, *a, Tensor::new(g.shape().to_vec(), gi)?);
            }
            Op::Scale(a, k) => {
                self.send(pending, *a, g.map(|gv| gv * *k));
            }
            Op::Concat(parts) => {
                let [b, total_c, h, w] = node.value.dims4("concat_channels")?;
                let plane = h * w;
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).shape()[1];
                    if self.requires_grad(p) {
                        let mut data = Vec::with_capacity(b * c * plane);
                        for bi in 0..b {
                            let base = (bi * total_c + offset) * plane;
                            data.extend_from_slice(&gd[base..base + c * plane]);
                        }
                        self.send(pending, p, Tensor::new(vec![b, c, h, w], data)?);
                    }
                    offset += c;
                }
            }
            Op::Channels { input, start } => {
                let [b, c, h, w] = self.value(*input).dims4("channels")?;
                let len = node.value.shape()[1];
                let plane = h * w;
                let mut gi = Tensor::zeros(&[b, c, h, w]);
                for bi in 0..b {
                    let dst = (bi * c + start) * plane;
                    gi.data_mut()[dst..dst + len * plane]
                        .copy_from_slice(&gd[bi * len * plane..(bi + 1) * len * plane]);
                }
                self.send(pending, *input, gi);
            }
            Op::ChannelMean(input) => {
                let [b, c, h, w] = self.value(*input).dims4("channel_mean")?;
                let plane = h * w;
                let inv = T::one() / T::from_usize(c).unwrap();
                let gi = Tensor::from_fn(&[b, c, h, w], |i| {
                    let bi = i / (c * plane);
                    gd[bi * plane + i % plane] * inv
                });
                self.send(pending, *input, gi);
            }
            Op::Gradient { input, axis } => {
                let [_, _, h, w] = self.value(*input).dims4("spatial_gradient")?;
                let mut gi = Tensor::zeros(self.value(*input).shape());
                for (gi_p, g_p) in gi.data_mut().chunks_exact_mut(h * w).zip(gd.chunks_exact(h * w)) {
                    let (rows, cols, step) = match axis {
                        Axis::Horizontal => (h, w - 1, 1),
                        Axis::Vertical => (h - 1, w, w),
                    };
                    for r in 0..rows {
                        for cx in 0..cols {
                            let i = r * w + cx;
                            gi_p[i + step] = gi_p[i + step] + g_p[i];
                            gi_p[i] = gi_p[i] - g_p[i];
                        }
                    }
                }
                self.send(pending, *input, gi);
            }
            Op::MeanAbs(a) => {
                let x = self.value(*a);
                let scale = gd[0] / T::from_usize(x.len()).unwrap();
                let gi = x.map(|v| {
                    if v > T::zero() {
                        scale
                    } else if v < T::zero() {
                        -scale
                    } else {
                        T::zero()
                    }
                });
                self.send(pending, *a, gi);
            }
            Op::Mean(a) => {
                let x = self.value(*a);
                let scale = gd[0] / T::from_usize(x.len()).unwrap();
                self.send(pending, *a, Tensor::full(x.shape(), scale));
            }
        }
        Ok(())
    }

    fn send(&self, pending: &mut [Option<Tensor<T>>], target: Var, g: Tensor<T>) {
        if !self.requires_grad(target) {
            return;
        }
        match &mut pending[target.0] {
            Some(acc) => acc.accumulate(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Routes a binary op's output gradient to both operands. `da`/`db`
    /// receive `(g, a_value, b_value)` at matched positions; the broadcast
    /// side sums over channels.
    #[allow(clippy::too_many_arguments)]
    fn send_binary(
        &self,
        pending: &mut [Option<Tensor<T>>],
        a: Var,
        b: Var,
        mode: Broadcast,
        g: &Tensor<T>,
        da: impl Fn(T, T, T) -> T,
        db: impl Fn(T, T, T) -> T,
    ) {
        let (ta, tb) = (self.value(a), self.value(b));
        let gd = g.data();
        let (xa, xb) = (ta.data(), tb.data());
        let (plane, channels) = match mode {
            Broadcast::Same => (0, 0),
            Broadcast::LeftMap { channels } | Broadcast::RightMap { channels } => {
                let s = g.shape();
                (s[2] * s[3], channels)
            }
        };
        // index of the operand element feeding output element i
        let map_idx = |i: usize| (i / (channels * plane)) * plane + i % plane;
        let (ia, ib): (Box<dyn Fn(usize) -> usize>, Box<dyn Fn(usize) -> usize>) = match mode {
            Broadcast::Same => (Box::new(|i| i), Box::new(|i| i)),
            Broadcast::LeftMap { .. } => (Box::new(map_idx), Box::new(|i| i)),
            Broadcast::RightMap { .. } => (Box::new(|i| i), Box::new(map_idx)),
        };
        if self.requires_grad(a) {
            let mut out = Tensor::zeros(ta.shape());
            let od = out.data_mut();
            for i in 0..gd.len() {
                let (j, k) = (ia(i), ib(i));
                od[j] = od[j] + da(gd[i], xa[j], xb[k]);
            }
            self.send(pending, a, out);
        }
        if self.requires_grad(b) {
            let mut out = Tensor::zeros(tb.shape());
            let od = out.data_mut();
            for i in 0..gd.len() {
                let (j, k) = (ia(i), ib(i));
                od[k] = od[k] + db(gd[i], xa[j], xb[k]);
            }
            self.send(pending, b, out);
        }
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn zip_map<T: Scalar>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

/// Source indices for nearest-neighbour resampling of `src` cells onto
/// `dst` cells: `floor(i * src / dst)`.
pub(crate) fn nearest_index(src: usize, dst: usize) -> Vec<usize> {
    (0..dst).map(|i| i * src / dst).collect()
}
