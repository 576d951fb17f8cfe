use serde::{Deserialize, Serialize};

use super::kernels::{self, ConvGeom};
use super::Tensor;
use crate::error::{Error, Result};
use crate::ssm::scan;

/// Handle to a node of one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// (k−1)·dilation/2 zeros on each side; output length equals input length.
    SameSymmetric,
    /// (k−1)·dilation zeros on the left.
    Causal,
    None,
}

impl Padding {
    fn pads(self, taps: usize, dilation: usize) -> Result<(usize, usize)> {
        let span = (taps - 1) * dilation;
        match self {
            Padding::SameSymmetric => {
                if taps.is_multiple_of(2) {
                    return Err(Error::Config(format!(
                        "same-symmetric padding needs an odd kernel size, got {taps}"
                    )));
                }
                Ok((span / 2, span / 2))
            }
            Padding::Causal => Ok((span, 0)),
            Padding::None => Ok((0, 0)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnaryFn {
    Silu,
    Sigmoid,
    Softplus,
    Exp,
    Scale(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryFn {
    Add,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// rhs is one row repeated over every row of lhs.
    Row,
    Scalar,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Conv1d {
        signal: Var,
        kernel: Var,
        bias: Var,
        geom: ConvGeom,
    },
    Depthwise {
        signal: Var,
        kernel: Var,
        bias: Var,
        geom: ConvGeom,
    },
    Unary(Var, UnaryFn),
    Binary(Var, Var, BinaryFn, Broadcast),
    Concat(Vec<Var>),
    SliceCols(Var, usize, usize),
    Sum(Var),
    Mean(Var),
    Bce {
        probs: Var,
        labels: Vec<f64>,
        eps: f64,
    },
    Scan {
        u: Var,
        delta: Var,
        a: Var,
        b: Var,
        c: Var,
        d: Var,
        states: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradient buffers produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

/// Computation tape for one forward pass.
///
/// Nodes are appended in execution order, so the node list is already
/// topologically sorted and backward is a single reverse sweep.
#[derive(Debug)]
pub struct Graph {
    nodes: Vec<Node>,
    tracking: bool,
    backward_done: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            tracking: true,
            backward_done: false,
        }
    }

    /// A graph that records values only; no op keeps backward state.
    pub fn inference() -> Self {
        Graph {
            nodes: Vec::new(),
            tracking: false,
            backward_done: false,
        }
    }

    pub fn is_tracking(&self) -> bool {
        self.tracking
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drop every node so the graph can record a new pass.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.backward_done = false;
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        value.ensure_finite("leaf")?;
        let requires_grad = requires_grad && self.tracking;
        Ok(self.push_raw(value, Op::Leaf, requires_grad))
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push_raw(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(
        &mut self,
        op_name: &'static str,
        value: Tensor,
        op: Op,
        inputs: &[Var],
    ) -> Result<Var> {
        value.ensure_finite(op_name)?;
        let requires_grad = self.tracking && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_raw(value, op, requires_grad))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2("matmul")?;
        let (k2, n) = self.value(b).dims2("matmul")?;
        if k != k2 {
            return Err(Error::dim(
                "matmul",
                format!("inner dimensions differ: {m}×{k} · {k2}×{n}"),
            ));
        }
        let out = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        self.push(
            "matmul",
            Tensor::new(vec![m, n], out)?,
            Op::MatMul(a, b),
            &[a, b],
        )
    }

    /// Cross-correlation along time. signal L×C_in, kernel C_out×C_in×k, bias C_out.
    pub fn conv1d(
        &mut self,
        signal: Var,
        kernel: Var,
        bias: Var,
        dilation: usize,
        padding: Padding,
    ) -> Result<Var> {
        let (len, ci) = self.value(signal).dims2("conv1d")?;
        let (co, kci, taps) = match self.value(kernel).shape() {
            &[co, kci, taps] => (co, kci, taps),
            other => {
                return Err(Error::dim(
                    "conv1d",
                    format!("kernel must be rank-3, got {other:?}"),
                ))
            }
        };
        if kci != ci {
            return Err(Error::dim(
                "conv1d",
                format!("kernel expects {kci} input channels, signal has {ci}"),
            ));
        }
        if self.value(bias).shape() != [co] {
            return Err(Error::dim(
                "conv1d",
                format!("bias shape {:?} != [{co}]", self.value(bias).shape()),
            ));
        }
        let geom = conv_geom(len, taps, dilation, padding, "conv1d")?;
        let out = kernels::conv1d_forward(
            geom,
            ci,
            co,
            self.value(signal).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
        );
        let value = Tensor::new(vec![geom.len_out, co], out)?;
        self.push(
            "conv1d",
            value,
            Op::Conv1d {
                signal,
                kernel,
                bias,
                geom,
            },
            &[signal, kernel, bias],
        )
    }

    /// Per-channel conv. signal L×C, kernel C×k, bias C.
    pub fn depthwise_conv1d(
        &mut self,
        signal: Var,
        kernel: Var,
        bias: Var,
        dilation: usize,
        padding: Padding,
    ) -> Result<Var> {
        let (len, c) = self.value(signal).dims2("depthwise_conv1d")?;
        let (kc, taps) = self.value(kernel).dims2("depthwise_conv1d")?;
        if kc != c || self.value(bias).shape() != [c] {
            return Err(Error::dim(
                "depthwise_conv1d",
                format!(
                    "signal has {c} channels, kernel {:?}, bias {:?}",
                    self.value(kernel).shape(),
                    self.value(bias).shape()
                ),
            ));
        }
        let geom = conv_geom(len, taps, dilation, padding, "depthwise_conv1d")?;
        let out = kernels::depthwise_forward(
            geom,
            c,
            self.value(signal).data(),
            self.value(kernel).data(),
            self.value(bias).data(),
        );
        let value = Tensor::new(vec![geom.len_out, c], out)?;
        self.push(
            "depthwise_conv1d",
            value,
            Op::Depthwise {
                signal,
                kernel,
                bias,
                geom,
            },
            &[signal, kernel, bias],
        )
    }

    pub fn unary(&mut self, x: Var, f: UnaryFn) -> Result<Var> {
        let src = self.value(x);
        let data: Vec<f64> = match f {
            UnaryFn::Silu => src
                .data()
                .iter()
                .map(|&v| v * kernels::sigmoid(v))
                .collect(),
            UnaryFn::Sigmoid => src.data().iter().map(|&v| kernels::sigmoid(v)).collect(),
            UnaryFn::Softplus => src.data().iter().map(|&v| kernels::softplus(v)).collect(),
            UnaryFn::Exp => src.data().iter().map(|v| v.exp()).collect(),
            UnaryFn::Scale(s) => src.data().iter().map(|v| v * s).collect(),
        };
        let value = Tensor::new(src.shape().to_vec(), data)?;
        let name = match f {
            UnaryFn::Silu => "silu",
            UnaryFn::Sigmoid => "sigmoid",
            UnaryFn::Softplus => "softplus",
            UnaryFn::Exp => "exp",
            UnaryFn::Scale(_) => "scale",
        };
        self.push(name, value, Op::Unary(x, f), &[x])
    }

    pub fn silu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryFn::Silu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryFn::Sigmoid)
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryFn::Softplus)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryFn::Exp)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        self.unary(x, UnaryFn::Scale(s))
    }

    /// Elementwise binary op. `b` may match `a`, be one row of `a`'s last
    /// dimension, or be a single element.
    pub fn binary(&mut self, a: Var, b: Var, f: BinaryFn) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let last = av.shape().last().copied().unwrap_or(1);
        let bc = if av.shape() == bv.shape() {
            Broadcast::Same
        } else if bv.numel() == 1 {
            Broadcast::Scalar
        } else if bv.numel() == last && bv.shape().last() == Some(&last) {
            Broadcast::Row
        } else {
            return Err(Error::dim(
                "binary",
                format!("cannot broadcast {:?} onto {:?}", bv.shape(), av.shape()),
            ));
        };
        let apply = |x: f64, y: f64| match f {
            BinaryFn::Add => x + y,
            BinaryFn::Mul => x * y,
        };
        let bd = bv.data();
        let data: Vec<f64> = match bc {
            Broadcast::Same => av
                .data()
                .iter()
                .zip(bd)
                .map(|(&x, &y)| apply(x, y))
                .collect(),
            Broadcast::Scalar => av.data().iter().map(|&x| apply(x, bd[0])).collect(),
            Broadcast::Row => av
                .data()
                .iter()
                .enumerate()
                .map(|(i, &x)| apply(x, bd[i % last]))
                .collect(),
        };
        let value = Tensor::new(av.shape().to_vec(), data)?;
        let name = match f {
            BinaryFn::Add => "add",
            BinaryFn::Mul => "mul",
        };
        self.push(name, value, Op::Binary(a, b, f, bc), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryFn::Add)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryFn::Mul)
    }

    /// Concatenate L×C_i tensors along the channel axis, in order.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::dim("concat_channels", "no parts given"));
        };
        let (len, _) = self.value(first).dims2("concat_channels")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (l, c) = self.value(p).dims2("concat_channels")?;
            if l != len {
                return Err(Error::dim(
                    "concat_channels",
                    format!("part lengths differ: {l} vs {len}"),
                ));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(len * total);
        for t in 0..len {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[t * w..(t + 1) * w]);
            }
        }
        let value = Tensor::new(vec![len, total], data)?;
        self.push("concat_channels", value, Op::Concat(parts.to_vec()), parts)
    }

    /// Columns `start..end` of a rank-2 tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (len, w) = self.value(x).dims2("slice_cols")?;
        if start >= end || end > w {
            return Err(Error::dim(
                "slice_cols",
                format!("range {start}..{end} outside width {w}"),
            ));
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(len * (end - start));
        for t in 0..len {
            data.extend_from_slice(&src[t * w + start..t * w + end]);
        }
        let value = Tensor::new(vec![len, end - start], data)?;
        self.push("slice_cols", value, Op::SliceCols(x, start, end), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let m = v.sum() / v.numel() as f64;
        self.push("mean", Tensor::scalar(m), Op::Mean(x), &[x])
    }

    /// Mean binary cross-entropy of probabilities against 0/1 labels.
    /// Probabilities are clamped to `[eps, 1 − eps]` before the log.
    pub fn bce(&mut self, probs: Var, labels: &[f64], eps: f64) -> Result<Var> {
        let p = self.value(probs);
        if p.numel() != labels.len() {
            return Err(Error::dim(
                "bce",
                format!("{} probabilities vs {} labels", p.numel(), labels.len()),
            ));
        }
        if labels.is_empty() {
            return Err(Error::dim("bce", "empty input"));
        }
        let total: f64 = p
            .data()
            .iter()
            .zip(labels)
            .map(|(&pi, &y)| {
                let q = pi.clamp(eps, 1.0 - eps);
                -(y * q.ln() + (1.0 - y) * (1.0 - q).ln())
            })
            .sum();
        let loss = total / labels.len() as f64;
        self.push(
            "bce",
            Tensor::scalar(loss),
            Op::Bce {
                probs,
                labels: labels.to_vec(),
                eps,
            },
            &[probs],
        )
    }

    /// Selective scan over L steps for `d_inner` channels with state size N.
    ///
    /// u, delta: L×d_inner; a: d_inner×N; b, c: L×N; d: d_inner.
    pub fn selective_scan(
        &mut self,
        u: Var,
        delta: Var,
        a: Var,
        b: Var,
        c: Var,
        d: Var,
    ) -> Result<Var> {
        let dims = scan::ScanDims::check(
            self.value(u),
            self.value(delta),
            self.value(a),
            self.value(b),
            self.value(c),
            self.value(d),
        )?;
        let args = scan::ScanArgs {
            dims,
            u: self.value(u).data(),
            delta: self.value(delta).data(),
            a: self.value(a).data(),
            b: self.value(b).data(),
            c: self.value(c).data(),
            d: self.value(d).data(),
        };
        let inputs = [u, delta, a, b, c, d];
        let needs_grad = self.tracking && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let (y, states) = if needs_grad {
            scan::forward_with_states(&args)
        } else {
            (
                scan::forward_chunked(&args, scan::DEFAULT_CHUNK),
                Vec::new(),
            )
        };
        let value = Tensor::new(vec![dims.len, dims.channels], y)?;
        self.push(
            "selective_scan",
            value,
            Op::Scan {
                u,
                delta,
                a,
                b,
                c,
                d,
                states,
            },
            &inputs,
        )
    }

    /// Reverse sweep from a scalar loss. May be called once per recorded pass.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.backward_done {
            return Err(Error::Backward(
                "backward already ran on this graph; reset before recording again".into(),
            ));
        }
        let node = &self.nodes[loss.0];
        if node.value.numel() != 1 {
            return Err(Error::Backward(format!(
                "loss must be scalar, got shape {:?}",
                node.value.shape()
            )));
        }
        if !node.requires_grad {
            return Err(Error::Backward(
                "loss is detached: no input requires a gradient".into(),
            ));
        }
        self.backward_done = true;

        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(g_out) = grads[id].take() else {
                continue;
            };
            if !self.nodes[id].requires_grad {
                continue;
            }
            self.backprop_node(id, &g_out, &mut grads)?;
            grads[id] = Some(g_out);
        }

        let mut out = Vec::with_capacity(self.nodes.len());
        for (node, g) in self.nodes.iter().zip(grads) {
            out.push(match g {
                Some(g) if node.requires_grad => {
                    let t = Tensor::new(node.value.shape().to_vec(), g)?;
                    t.ensure_finite("backward")?;
                    Some(t)
                }
                _ => None,
            });
        }
        Ok(Gradients { grads: out })
    }

    fn backprop_node(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[id];
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let numel = |v: Var| self.nodes[v.0].value.numel();
        // Accumulation buffer for `v`, allocated on first use.
        fn slot(grads: &mut [Option<Vec<f64>>], v: Var, n: usize) -> &mut Vec<f64> {
            grads[v.0].get_or_insert_with(|| vec![0.0; n])
        }

        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = self.value(a).dims2("matmul")?;
                let n = self.value(b).shape()[1];
                if wants(a) {
                    let ga = slot(grads, a, m * k);
                    // gA (m×k) += G (m×n) · Bᵀ (n×k)
                    kernels::gemm(
                        m,
                        n,
                        k,
                        g,
                        0,
                        (n, 1),
                        self.value(b).data(),
                        0,
                        (1, n),
                        1.0,
                        ga,
                        0,
                        (k, 1),
                    );
                }
                if wants(b) {
                    let gb = slot(grads, b, k * n);
                    // gB (k×n) += Aᵀ (k×m) · G (m×n)
                    kernels::gemm(
                        k,
                        m,
                        n,
                        self.value(a).data(),
                        0,
                        (1, k),
                        g,
                        0,
                        (n, 1),
                        1.0,
                        gb,
                        0,
                        (n, 1),
                    );
                }
            }
            &Op::Conv1d {
                signal,
                kernel,
                bias,
                geom,
            } => {
                let ci = self.value(signal).shape()[1];
                let co = self.value(kernel).shape()[0];
                let mut gs = wants(signal).then(|| {
                    grads[signal.0]
                        .take()
                        .unwrap_or_else(|| vec![0.0; numel(signal)])
                });
                let mut gk = wants(kernel).then(|| {
                    grads[kernel.0]
                        .take()
                        .unwrap_or_else(|| vec![0.0; numel(kernel)])
                });
                let mut gb = wants(bias).then(|| {
                    grads[bias.0]
                        .take()
                        .unwrap_or_else(|| vec![0.0; numel(bias)])
                });
                kernels::conv1d_backward(
                    geom,
                    ci,
                    co,
                    self.value(signal).data(),
                    self.value(kernel).data(),
                    g,
                    gs.as_deref_mut(),
                    gk.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                restore(grads, signal, gs);
                restore(grads, kernel, gk);
                restore(grads, bias, gb);
            }
            &Op::Depthwise {
                signal,
                kernel,
                bias,
                geom,
            } => {
                let c = self.value(signal).shape()[1];
                let mut gs = wants(signal).then(|| {
                    grads[signal.0]
                        .take()
                        .unwrap_or_else(|| vec![0.0; numel(signal)])
                });
                let mut gk = wants(kernel).then(|| {
                    grads[kernel.0]
                        .take()
                        .unwrap_or_else(|| vec![0.0; numel(kernel)])
                });
                let mut gb = wants(bias).then(|| {
                    grads[bias.0]
                        .take()
                        .unwrap_or_else(|| vec![0.0; numel(bias)])
                });
                kernels::depthwise_backward(
                    geom,
                    c,
                    self.value(signal).data(),
                    self.value(kernel).data(),
                    g,
                    gs.as_deref_mut(),
                    gk.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                restore(grads, signal, gs);
                restore(grads, kernel, gk);
                restore(grads, bias, gb);
            }
            &Op::Unary(x, f) => {
                if wants(x) {
                    let xs = self.value(x).data();
                    let ys = node.value.data();
                    let gx = slot(grads, x, xs.len());
                    for i in 0..xs.len() {
                        let d = match f {
                            UnaryFn::Silu => {
                                let s = kernels::sigmoid(xs[i]);
                                s * (1.0 + xs[i] * (1.0 - s))
                            }
                            UnaryFn::Sigmoid => ys[i] * (1.0 - ys[i]),
                            UnaryFn::Softplus => kernels::sigmoid(xs[i]),
                            UnaryFn::Exp => ys[i],
                            UnaryFn::Scale(s) => s,
                        };
                        gx[i] += g[i] * d;
                    }
                }
            }
            &Op::Binary(a, b, f, bc) => {
                let av = self.value(a).data();
                let bv = self.value(b).data();
                let last = self.value(a).shape().last().copied().unwrap_or(1);
                let bidx = |i: usize| match bc {
                    Broadcast::Same => i,
                    Broadcast::Scalar => 0,
                    Broadcast::Row => i % last,
                };
                if wants(a) {
                    let ga = slot(grads, a, av.len());
                    for i in 0..av.len() {
                        ga[i] += match f {
                            BinaryFn::Add => g[i],
                            BinaryFn::Mul => g[i] * bv[bidx(i)],
                        };
                    }
                }
                if wants(b) {
                    let gb = slot(grads, b, bv.len());
                    for i in 0..av.len() {
                        gb[bidx(i)] += match f {
                            BinaryFn::Add => g[i],
                            BinaryFn::Mul => g[i] * av[i],
                        };
                    }
                }
            }
            Op::Concat(parts) => {
                let len = node.value.shape()[0];
                let total = node.value.shape()[1];
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).shape()[1];
                    if wants(p) {
                        let gp = slot(grads, p, len * w);
                        for t in 0..len {
                            for j in 0..w {
                                gp[t * w + j] += g[t * total + offset + j];
                            }
                        }
                    }
                    offset += w;
                }
            }
            &Op::SliceCols(x, start, end) => {
                if wants(x) {
                    let (len, w) = self.value(x).dims2("slice_cols")?;
                    let sw = end - start;
                    let gx = slot(grads, x, len * w);
                    for t in 0..len {
                        for j in 0..sw {
                            gx[t * w + start + j] += g[t * sw + j];
                        }
                    }
                }
            }
            &Op::Sum(x) => {
                if wants(x) {
                    let gx = slot(grads, x, numel(x));
                    gx.iter_mut().for_each(|v| *v += g[0]);
                }
            }
            &Op::Mean(x) => {
                if wants(x) {
                    let n = numel(x);
                    let gx = slot(grads, x, n);
                    let share = g[0] / n as f64;
                    gx.iter_mut().for_each(|v| *v += share);
                }
            }
            Op::Bce { probs, labels, eps } => {
                let probs = *probs;
                if wants(probs) {
                    let p = self.value(probs).data();
                    let n = labels.len() as f64;
                    let gp = slot(grads, probs, p.len());
                    for i in 0..p.len() {
                        if p[i] < *eps || p[i] > 1.0 - eps {
                            continue;
                        }
                        let y = labels[i];
                        gp[i] += g[0] * (-(y / p[i]) + (1.0 - y) / (1.0 - p[i])) / n;
                    }
                }
            }
            Op::Scan {
                u,
                delta,
                a,
                b,
                c,
                d,
                states,
            } => {
                let (u, delta, a, b, c, d) = (*u, *delta, *a, *b, *c, *d);
                let dims = scan::ScanDims {
                    len: self.value(u).shape()[0],
                    channels: self.value(u).shape()[1],
                    state: self.value(a).shape()[1],
                };
                let args = scan::ScanArgs {
                    dims,
                    u: self.value(u).data(),
                    delta: self.value(delta).data(),
                    a: self.value(a).data(),
                    b: self.value(b).data(),
                    c: self.value(c).data(),
                    d: self.value(d).data(),
                };
                let sg = scan::backward(&args, states, g);
                for (v, gv) in [
                    (u, sg.u),
                    (delta, sg.delta),
                    (a, sg.a),
                    (b, sg.b),
                    (c, sg.c),
                    (d, sg.d),
                ] {
                    if wants(v) {
                        let acc = slot(grads, v, gv.len());
                        for (x, y) in acc.iter_mut().zip(&gv) {
                            *x += y;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn restore(grads: &mut [Option<Vec<f64>>], v: Var, g: Option<Vec<f64>>) {
    if let Some(g) = g {
        grads[v.0] = Some(g);
    }
}

fn conv_geom(
    len: usize,
    taps: usize,
    dilation: usize,
    padding: Padding,
    op: &'static str,
) -> Result<ConvGeom> {
    if taps == 0 {
        return Err(Error::Config(format!("{op}: kernel size must be positive")));
    }
    if dilation == 0 {
        return Err(Error::Config(format!("{op}: dilation must be at least 1")));
    }
    let (pad_left, pad_right) = padding.pads(taps, dilation)?;
    let padded = len + pad_left + pad_right;
    let span = (taps - 1) * dilation + 1;
    if padded < span {
        return Err(Error::dim(
            op,
            format!("input of length {len} shorter than kernel span {span}"),
        ));
    }
    Ok(ConvGeom {
        len_in: len,
        len_out: padded - span + 1,
        taps,
        dilation,
        pad_left,
    })
}
