//! Define-by-run computation tape with reverse-mode differentiation.
//!
//! Every operation evaluates eagerly and records how it was computed. The
//! backward pass builds gradient *nodes* out of the same primitive ops, so a
//! scalar derived from gradients (e.g. a gradient-penalty term) can itself be
//! differentiated by calling [`Tape::backward`] again.
//!
//! Image tensors use NHWC layout throughout.

use crate::tensor::{strides_of, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    BroadcastTo(Var),
    SumAxes { x: Var, axes: Vec<usize>, keep: bool },
    Im2col { x: Var, k: usize, stride: usize, pad: usize },
    Col2im { cols: Var, k: usize, stride: usize, pad: usize },
    Upsample2(Var),
    SumPool2(Var),
    LeakyRelu { x: Var, alpha: f64 },
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Abs(Var),
    Slice { x: Var, axis: usize, start: usize },
    PadZeros { x: Var, axis: usize, before: usize },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | MatMul(a, b) => vec![*a, *b],
            Scale(a, _) | Shift(a) | Transpose(a) | Reshape(a) | BroadcastTo(a) | Tanh(a)
            | Exp(a) | Log(a) | Sqrt(a) | Abs(a) | Upsample2(a) | SumPool2(a) => vec![*a],
            SumAxes { x, .. }
            | Im2col { x, .. }
            | LeakyRelu { x, .. }
            | Slice { x, .. }
            | PadZeros { x, .. } => vec![*x],
            Col2im { cols, .. } => vec![*cols],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Append-only graph of tensors; inputs of a node always precede it.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
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

    /// A differentiable input (parameter or data we may differentiate w.r.t.).
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// A non-differentiable input. Identical to [`Tape::leaf`]; gradients are
    /// only produced for vars passed to `backward`, so the distinction is
    /// purely documentary.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    // ---- elementwise ----

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.shape(), tb.shape(), "elementwise shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(ta.shape(), data);
        self.push(t, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.nodes[a.0].value.map(|x| x * c);
        self.push(t, Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn shift(&mut self, a: Var, c: f64) -> Var {
        let t = self.nodes[a.0].value.map(|x| x + c);
        self.push(t, Op::Shift(a))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.nodes[a.0].value.map(f);
        self.push(t, op)
    }

    pub fn leaky_relu(&mut self, x: Var, alpha: f64) -> Var {
        self.unary(x, |v| if v > 0.0 { v } else { alpha * v }, Op::LeakyRelu { x, alpha })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.leaky_relu(x, 0.0)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln, Op::Log(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, f64::sqrt, Op::Sqrt(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, f64::abs, Op::Abs(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.mul(x, x)
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(ta.shape().len(), 2, "matmul lhs must be rank 2");
        assert_eq!(tb.shape().len(), 2, "matmul rhs must be rank 2");
        let (m, k) = (ta.shape()[0], ta.shape()[1]);
        let (k2, n) = (tb.shape()[0], tb.shape()[1]);
        assert_eq!(k, k2, "matmul inner dims: {:?} x {:?}", ta.shape(), tb.shape());
        let mut out = vec![0.0; m * n];
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                ta.data().as_ptr(),
                k as isize,
                1,
                tb.data().as_ptr(),
                n as isize,
                1,
                0.0,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        self.push(Tensor::new(&[m, n], out), Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let ta = &self.nodes[a.0].value;
        assert_eq!(ta.shape().len(), 2, "transpose needs rank 2");
        let (m, n) = (ta.shape()[0], ta.shape()[1]);
        let src = ta.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = src[i * n + j];
            }
        }
        self.push(Tensor::new(&[n, m], out), Op::Transpose(a))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let t = self.nodes[a.0].value.clone().reshaped(shape);
        self.push(t, Op::Reshape(a))
    }

    // ---- broadcasting and reductions ----

    /// Expand `a` to `shape`. `a`'s shape is right-aligned against `shape`;
    /// every dimension must match or be 1.
    pub fn broadcast_to(&mut self, a: Var, shape: &[usize]) -> Var {
        let t = broadcast_kernel(&self.nodes[a.0].value, shape);
        self.push(t, Op::BroadcastTo(a))
    }

    /// Sum over the given axes. With `keep` the reduced axes stay as size 1.
    pub fn sum_axes(&mut self, x: Var, axes: &[usize], keep: bool) -> Var {
        let t = sum_axes_kernel(&self.nodes[x.0].value, axes, keep);
        self.push(t, Op::SumAxes { x, axes: axes.to_vec(), keep })
    }

    /// Sum of all elements as a `[1]` tensor.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let rank = self.nodes[x.0].value.shape().len();
        let axes: Vec<usize> = (0..rank).collect();
        let s = self.sum_axes(x, &axes, false);
        let n = self.nodes[s.0].value.numel();
        debug_assert_eq!(n, 1);
        self.reshape(s, &[1])
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.nodes[x.0].value.numel();
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n as f64)
    }

    // ---- convolution building blocks ----

    /// Unfold NHWC image `x` into a `(N*OH*OW, k*k*C)` matrix of patches.
    pub fn im2col(&mut self, x: Var, k: usize, stride: usize, pad: usize) -> Var {
        let t = im2col_kernel(&self.nodes[x.0].value, k, stride, pad);
        self.push(t, Op::Im2col { x, k, stride, pad })
    }

    /// Adjoint of [`Tape::im2col`]: scatter-add patches back into an image of
    /// shape `img_shape` (NHWC).
    pub fn col2im(
        &mut self,
        cols: Var,
        k: usize,
        stride: usize,
        pad: usize,
        img_shape: &[usize; 4],
    ) -> Var {
        let t = col2im_kernel(&self.nodes[cols.0].value, k, stride, pad, img_shape);
        self.push(t, Op::Col2im { cols, k, stride, pad })
    }

    /// Nearest-neighbour 2x upsampling of an NHWC tensor.
    pub fn upsample2(&mut self, x: Var) -> Var {
        let t = upsample2_kernel(&self.nodes[x.0].value);
        self.push(t, Op::Upsample2(x))
    }

    /// 2x2 sum pooling; adjoint of [`Tape::upsample2`].
    pub fn sumpool2(&mut self, x: Var) -> Var {
        let t = sumpool2_kernel(&self.nodes[x.0].value);
        self.push(t, Op::SumPool2(x))
    }

    // ---- slicing ----

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Var {
        let t = slice_kernel(&self.nodes[x.0].value, axis, start, len);
        self.push(t, Op::Slice { x, axis, start })
    }

    pub fn pad_zeros(&mut self, x: Var, axis: usize, before: usize, after: usize) -> Var {
        let t = pad_kernel(&self.nodes[x.0].value, axis, before, after);
        self.push(t, Op::PadZeros { x, axis, before })
    }

    /// Concatenate two tensors along `axis` (composed from pads and an add, so
    /// it differentiates like any other op).
    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Var {
        let la = self.nodes[a.0].value.shape()[axis];
        let lb = self.nodes[b.0].value.shape()[axis];
        let pa = self.pad_zeros(a, axis, 0, lb);
        let pb = self.pad_zeros(b, axis, la, 0);
        self.add(pa, pb)
    }

    // ---- differentiation ----

    /// Reverse-mode gradients of scalar `y` w.r.t. each var in `wrt`.
    ///
    /// Gradient nodes are appended to the tape and may be differentiated
    /// again. Returns `None` for vars that `y` does not depend on.
    pub fn backward(&mut self, y: Var, wrt: &[Var]) -> Vec<Option<Var>> {
        assert_eq!(self.nodes[y.0].value.numel(), 1, "backward target must be scalar");
        let n = y.0 + 1;

        // Nodes influenced by `wrt` (forward reachability).
        let mut infl = vec![false; n];
        for w in wrt {
            assert!(w.0 < n, "wrt var created after target");
            infl[w.0] = true;
        }
        for i in 0..n {
            if !infl[i] {
                infl[i] = self.nodes[i].op.inputs().iter().any(|v| infl[v.0]);
            }
        }
        // Nodes that can reach `y` (reverse reachability).
        let mut reach = vec![false; n];
        reach[y.0] = true;
        for i in (0..n).rev() {
            if reach[i] {
                for v in self.nodes[i].op.inputs() {
                    reach[v.0] = true;
                }
            }
        }

        let mut grads: Vec<Option<Var>> = vec![None; n];
        let seed_shape = self.nodes[y.0].value.shape().to_vec();
        grads[y.0] = Some(self.constant(Tensor::full(&seed_shape, 1.0)));

        for i in (0..n).rev() {
            if !(reach[i] && infl[i]) {
                continue;
            }
            let Some(g) = grads[i] else { continue };
            let op = self.nodes[i].op.clone();
            let out = Var(i);
            let accum = |tape: &mut Tape, grads: &mut Vec<Option<Var>>, v: Var, gin: Var| {
                if !infl[v.0] {
                    return;
                }
                grads[v.0] = Some(match grads[v.0] {
                    None => gin,
                    Some(g0) => tape.add(g0, gin),
                });
            };
            match op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    accum(self, &mut grads, a, g);
                    accum(self, &mut grads, b, g);
                }
                Op::Sub(a, b) => {
                    accum(self, &mut grads, a, g);
                    let gb = self.neg(g);
                    accum(self, &mut grads, b, gb);
                }
                Op::Mul(a, b) => {
                    if infl[a.0] {
                        let ga = self.mul(g, b);
                        accum(self, &mut grads, a, ga);
                    }
                    if infl[b.0] {
                        let gb = self.mul(g, a);
                        accum(self, &mut grads, b, gb);
                    }
                }
                Op::Div(a, b) => {
                    if infl[a.0] {
                        let ga = self.div(g, b);
                        accum(self, &mut grads, a, ga);
                    }
                    if infl[b.0] {
                        let t = self.mul(g, out);
                        let t = self.div(t, b);
                        let gb = self.neg(t);
                        accum(self, &mut grads, b, gb);
                    }
                }
                Op::Scale(a, c) => {
                    let ga = self.scale(g, c);
                    accum(self, &mut grads, a, ga);
                }
                Op::Shift(a) => accum(self, &mut grads, a, g),
                Op::MatMul(a, b) => {
                    if infl[a.0] {
                        let bt = self.transpose(b);
                        let ga = self.matmul(g, bt);
                        accum(self, &mut grads, a, ga);
                    }
                    if infl[b.0] {
                        let at = self.transpose(a);
                        let gb = self.matmul(at, g);
                        accum(self, &mut grads, b, gb);
                    }
                }
                Op::Transpose(a) => {
                    let ga = self.transpose(g);
                    accum(self, &mut grads, a, ga);
                }
                Op::Reshape(a) => {
                    let shape = self.nodes[a.0].value.shape().to_vec();
                    let ga = self.reshape(g, &shape);
                    accum(self, &mut grads, a, ga);
                }
                Op::BroadcastTo(a) => {
                    let in_shape = self.nodes[a.0].value.shape().to_vec();
                    let out_shape = self.nodes[i].value.shape().to_vec();
                    // Right-align the input shape, sum over expanded axes.
                    let off = out_shape.len() - in_shape.len();
                    let mut axes = Vec::new();
                    for (d, &od) in out_shape.iter().enumerate() {
                        let id = if d < off { 1 } else { in_shape[d - off] };
                        if id == 1 && od > 1 {
                            axes.push(d);
                        }
                    }
                    let mut ga = if axes.is_empty() { g } else { self.sum_axes(g, &axes, true) };
                    ga = self.reshape(ga, &in_shape);
                    accum(self, &mut grads, a, ga);
                }
                Op::SumAxes { x, axes, keep } => {
                    let in_shape = self.nodes[x.0].value.shape().to_vec();
                    let mut gk = g;
                    if !keep {
                        // Reinsert reduced axes as size 1 before broadcasting.
                        let mut kshape = in_shape.clone();
                        for &ax in &axes {
                            kshape[ax] = 1;
                        }
                        gk = self.reshape(g, &kshape);
                    }
                    let ga = self.broadcast_to(gk, &in_shape);
                    accum(self, &mut grads, x, ga);
                }
                Op::Im2col { x, k, stride, pad } => {
                    let shape = self.nodes[x.0].value.shape().to_vec();
                    let img: [usize; 4] = [shape[0], shape[1], shape[2], shape[3]];
                    let ga = self.col2im(g, k, stride, pad, &img);
                    accum(self, &mut grads, x, ga);
                }
                Op::Col2im { cols, k, stride, pad } => {
                    let ga = self.im2col(g, k, stride, pad);
                    accum(self, &mut grads, cols, ga);
                }
                Op::Upsample2(a) => {
                    let ga = self.sumpool2(g);
                    accum(self, &mut grads, a, ga);
                }
                Op::SumPool2(a) => {
                    let ga = self.upsample2(g);
                    accum(self, &mut grads, a, ga);
                }
                Op::LeakyRelu { x, alpha } => {
                    // The mask is constant a.e.; treating it as such keeps
                    // higher-order gradients correct away from the kink.
                    let mask =
                        self.nodes[x.0].value.map(|v| if v > 0.0 { 1.0 } else { alpha });
                    let m = self.constant(mask);
                    let ga = self.mul(g, m);
                    accum(self, &mut grads, x, ga);
                }
                Op::Tanh(a) => {
                    let y2 = self.mul(out, out);
                    let ny2 = self.neg(y2);
                    let d = self.shift(ny2, 1.0);
                    let ga = self.mul(g, d);
                    accum(self, &mut grads, a, ga);
                }
                Op::Exp(a) => {
                    let ga = self.mul(g, out);
                    accum(self, &mut grads, a, ga);
                }
                Op::Log(a) => {
                    let ga = self.div(g, a);
                    accum(self, &mut grads, a, ga);
                }
                Op::Sqrt(a) => {
                    let two_y = self.scale(out, 2.0);
                    let ga = self.div(g, two_y);
                    accum(self, &mut grads, a, ga);
                }
                Op::Abs(a) => {
                    let sign = self.nodes[a.0].value.map(|v| {
                        if v > 0.0 {
                            1.0
                        } else if v < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    });
                    let s = self.constant(sign);
                    let ga = self.mul(g, s);
                    accum(self, &mut grads, a, ga);
                }
                Op::Slice { x, axis, start } => {
                    let in_len = self.nodes[x.0].value.shape()[axis];
                    let out_len = self.nodes[i].value.shape()[axis];
                    let ga = self.pad_zeros(g, axis, start, in_len - start - out_len);
                    accum(self, &mut grads, x, ga);
                }
                Op::PadZeros { x, axis, before } => {
                    let len = self.nodes[x.0].value.shape()[axis];
                    let ga = self.slice(g, axis, before, len);
                    accum(self, &mut grads, x, ga);
                }
            }
        }
        wrt.iter().map(|w| grads[w.0]).collect()
    }

    /// Gradient tensors (zeros where `y` does not depend on the var).
    pub fn grad_tensors(&mut self, y: Var, wrt: &[Var]) -> Vec<Tensor> {
        let gs = self.backward(y, wrt);
        wrt.iter()
            .zip(gs)
            .map(|(w, g)| match g {
                Some(v) => self.value(v).clone(),
                None => Tensor::zeros(self.value(*w).shape()),
            })
            .collect()
    }
}

// ---- kernels ----

fn broadcast_kernel(a: &Tensor, shape: &[usize]) -> Tensor {
    let in_shape = a.shape();
    assert!(in_shape.len() <= shape.len(), "broadcast to lower rank");
    let off = shape.len() - in_shape.len();
    let mut padded = vec![1usize; shape.len()];
    padded[off..].copy_from_slice(in_shape);
    for (d, (&i, &o)) in padded.iter().zip(shape).enumerate() {
        assert!(i == o || i == 1, "cannot broadcast dim {} ({} -> {})", d, i, o);
    }
    let out_strides = strides_of(shape);
    let in_strides = strides_of(&padded);
    let numel: usize = shape.iter().product();
    let mut out = vec![0.0; numel];
    let src = a.data();
    let rank = shape.len();
    let mut idx = vec![0usize; rank];
    for slot in out.iter_mut() {
        let mut src_off = 0;
        for d in 0..rank {
            if padded[d] != 1 {
                src_off += idx[d] * in_strides[d];
            }
        }
        *slot = src[src_off];
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    let _ = out_strides;
    Tensor::new(shape, out)
}

fn sum_axes_kernel(x: &Tensor, axes: &[usize], keep: bool) -> Tensor {
    let shape = x.shape();
    let rank = shape.len();
    let mut reduced = vec![false; rank];
    for &a in axes {
        assert!(a < rank, "axis {} out of range for rank {}", a, rank);
        reduced[a] = true;
    }
    let keep_shape: Vec<usize> =
        shape.iter().enumerate().map(|(d, &s)| if reduced[d] { 1 } else { s }).collect();
    let out_shape: Vec<usize> = if keep {
        keep_shape.clone()
    } else {
        let s: Vec<usize> = shape
            .iter()
            .enumerate()
            .filter(|(d, _)| !reduced[*d])
            .map(|(_, &s)| s)
            .collect();
        if s.is_empty() {
            vec![1]
        } else {
            s
        }
    };
    let out_strides = strides_of(&keep_shape);
    let numel_out: usize = keep_shape.iter().product();
    let mut out = vec![0.0; numel_out];
    let src = x.data();
    let mut idx = vec![0usize; rank];
    for &v in src {
        let mut off = 0;
        for d in 0..rank {
            if !reduced[d] {
                off += idx[d] * out_strides[d];
            }
        }
        out[off] += v;
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Tensor::new(&out_shape, out)
}

fn conv_out_dim(in_dim: usize, k: usize, stride: usize, pad: usize) -> usize {
    assert!(in_dim + 2 * pad >= k, "kernel larger than padded input");
    (in_dim + 2 * pad - k) / stride + 1
}

fn im2col_kernel(x: &Tensor, k: usize, stride: usize, pad: usize) -> Tensor {
    let s = x.shape();
    assert_eq!(s.len(), 4, "im2col expects NHWC");
    let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
    let oh = conv_out_dim(h, k, stride, pad);
    let ow = conv_out_dim(w, k, stride, pad);
    let row_len = k * k * c;
    let mut out = vec![0.0; n * oh * ow * row_len];
    let src = x.data();
    for ni in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = ((ni * oh + oy) * ow + ox) * row_len;
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let src_off = ((ni * h + iy as usize) * w + ix as usize) * c;
                        let dst_off = row + (ky * k + kx) * c;
                        out[dst_off..dst_off + c]
                            .copy_from_slice(&src[src_off..src_off + c]);
                    }
                }
            }
        }
    }
    Tensor::new(&[n * oh * ow, row_len], out)
}

fn col2im_kernel(
    cols: &Tensor,
    k: usize,
    stride: usize,
    pad: usize,
    img_shape: &[usize; 4],
) -> Tensor {
    let (n, h, w, c) = (img_shape[0], img_shape[1], img_shape[2], img_shape[3]);
    let oh = conv_out_dim(h, k, stride, pad);
    let ow = conv_out_dim(w, k, stride, pad);
    let row_len = k * k * c;
    assert_eq!(cols.shape(), &[n * oh * ow, row_len], "col2im shape mismatch");
    let src = cols.data();
    let mut out = vec![0.0; n * h * w * c];
    for ni in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = ((ni * oh + oy) * ow + ox) * row_len;
                for ky in 0..k {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let dst_off = ((ni * h + iy as usize) * w + ix as usize) * c;
                        let src_off = row + (ky * k + kx) * c;
                        for ci in 0..c {
                            out[dst_off + ci] += src[src_off + ci];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[n, h, w, c], out)
}

fn upsample2_kernel(x: &Tensor) -> Tensor {
    let s = x.shape();
    assert_eq!(s.len(), 4, "upsample2 expects NHWC");
    let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
    let mut out = vec![0.0; n * 2 * h * 2 * w * c];
    let src = x.data();
    let (oh, ow) = (2 * h, 2 * w);
    for ni in 0..n {
        for y in 0..oh {
            for xo in 0..ow {
                let src_off = ((ni * h + y / 2) * w + xo / 2) * c;
                let dst_off = ((ni * oh + y) * ow + xo) * c;
                out[dst_off..dst_off + c].copy_from_slice(&src[src_off..src_off + c]);
            }
        }
    }
    Tensor::new(&[n, oh, ow, c], out)
}

fn sumpool2_kernel(x: &Tensor) -> Tensor {
    let s = x.shape();
    assert_eq!(s.len(), 4, "sumpool2 expects NHWC");
    let (n, h, w, c) = (s[0], s[1], s[2], s[3]);
    assert!(h % 2 == 0 && w % 2 == 0, "sumpool2 needs even H and W");
    let (oh, ow) = (h / 2, w / 2);
    let mut out = vec![0.0; n * oh * ow * c];
    let src = x.data();
    for ni in 0..n {
        for y in 0..h {
            for xo in 0..w {
                let src_off = ((ni * h + y) * w + xo) * c;
                let dst_off = ((ni * oh + y / 2) * ow + xo / 2) * c;
                for ci in 0..c {
                    out[dst_off + ci] += src[src_off + ci];
                }
            }
        }
    }
    Tensor::new(&[n, oh, ow, c], out)
}

fn slice_kernel(x: &Tensor, axis: usize, start: usize, len: usize) -> Tensor {
    let shape = x.shape();
    assert!(axis < shape.len());
    assert!(start + len <= shape[axis], "slice out of range");
    let mut out_shape = shape.to_vec();
    out_shape[axis] = len;
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; outer * len * inner];
    let src = x.data();
    for o in 0..outer {
        let src_base = (o * shape[axis] + start) * inner;
        let dst_base = o * len * inner;
        out[dst_base..dst_base + len * inner]
            .copy_from_slice(&src[src_base..src_base + len * inner]);
    }
    Tensor::new(&out_shape, out)
}

fn pad_kernel(x: &Tensor, axis: usize, before: usize, after: usize) -> Tensor {
    let shape = x.shape();
    assert!(axis < shape.len());
    let mut out_shape = shape.to_vec();
    out_shape[axis] = shape[axis] + before + after;
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; outer * out_shape[axis] * inner];
    let src = x.data();
    for o in 0..outer {
        let dst_base = (o * out_shape[axis] + before) * inner;
        let src_base = o * shape[axis] * inner;
        out[dst_base..dst_base + shape[axis] * inner]
            .copy_from_slice(&src[src_base..src_base + shape[axis] * inner]);
    }
    Tensor::new(&out_shape, out)
}
