use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{col2im_add, gemm, im2col, sigmoid, ConvGeom};
use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Value<'a> {
    Owned(Tensor),
    Borrowed(&'a Tensor),
}

impl Value<'_> {
    fn get(&self) -> &Tensor {
        match self {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }
}

enum Op {
    Leaf,
    Conv2d { input: Var, kernel: Var, bias: Var, geom: ConvGeom },
    MaxPool2 { input: Var, argmax: Vec<usize> },
    MatMul { a: Var, b: Var },
    Linear { x: Var, w: Var, b: Var },
    AddRow { x: Var, row: Var },
    MulRow { x: Var, row: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Tanh { x: Var },
    Sigmoid { x: Var },
    PRelu { x: Var, slope: Var },
    Concat { inputs: Vec<Var>, axis: usize },
    Reshape { x: Var },
    Sum { x: Var },
    L1 { pred: Var, target: Var },
}

struct Node<'a> {
    value: Value<'a>,
    op: Op,
    requires_grad: bool,
}

/// Tape of eagerly evaluated operations supporting one reverse pass.
///
/// Nodes are appended in evaluation order, so the tape is topologically
/// sorted by construction. Leaves may borrow their tensors (`'a`), which lets
/// a parameter set be bound to many graphs without copying.
#[derive(Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

/// Leaf gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of a leaf that requires grad, if it was reached by the loss.
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Gradient of a leaf, or zeros if the loss does not depend on it.
    pub fn get_or_zeros(&self, var: Var, len: usize) -> Vec<f64> {
        match self.get(var) {
            Some(g) => g.to_vec(),
            None => vec![0.0; len],
        }
    }
}

fn broadcast_row_check(x: &Tensor, row: &Tensor, what: &str) -> Result<(usize, usize)> {
    let cols = *x.dims().last().unwrap();
    if row.len() != cols {
        return Err(shape_err!("{what}: row vector of length {} does not match last dim of {:?}", row.len(), x.dims()));
    }
    Ok((x.len() / cols, cols))
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value: Value::Owned(value), op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Binds a borrowed tensor as a leaf.
    pub fn leaf(&mut self, t: &'a Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node { value: Value::Borrowed(t), op: Op::Leaf, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// An owned leaf that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// An owned leaf that receives a gradient.
    pub fn variable(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.nodes[v.0].value.get()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// 2-D convolution with zero padding: `[N,C,H,W] * [K,C,kh,kw] + [K]`.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, stride: usize, pad: usize) -> Result<Var> {
        let (x, k, b) = (self.value(input), self.value(kernel), self.value(bias));
        if x.rank() != 4 || k.rank() != 4 {
            return Err(shape_err!("conv2d expects rank-4 input and kernel, got {:?} and {:?}", x.dims(), k.dims()));
        }
        let (n, c, h, w) = (x.dims()[0], x.dims()[1], x.dims()[2], x.dims()[3]);
        let (kout, kc, kh, kw) = (k.dims()[0], k.dims()[1], k.dims()[2], k.dims()[3]);
        if kc != c {
            return Err(shape_err!("conv2d: input has {c} channels, kernel expects {kc}"));
        }
        if b.len() != kout {
            return Err(shape_err!("conv2d: bias length {} != {kout} output channels", b.len()));
        }
        if stride == 0 {
            return Err(Error::Usage("conv2d: stride must be at least 1".into()));
        }
        if kh > h + 2 * pad || kw > w + 2 * pad {
            return Err(shape_err!(
                "conv2d: kernel {kh}x{kw} larger than padded input {}x{}",
                h + 2 * pad,
                w + 2 * pad
            ));
        }
        let geom = ConvGeom {
            channels: c,
            height: h,
            width: w,
            kh,
            kw,
            stride,
            pad,
            out_h: (h + 2 * pad - kh) / stride + 1,
            out_w: (w + 2 * pad - kw) / stride + 1,
        };
        let plane = geom.col_cols();
        let rows = geom.col_rows();
        let mut out = vec![0.0; n * kout * plane];
        let mut cols = if geom.is_pointwise() { Vec::new() } else { vec![0.0; rows * plane] };
        let in_stride = c * h * w;
        for i in 0..n {
            let img = &x.data()[i * in_stride..(i + 1) * in_stride];
            let dst = &mut out[i * kout * plane..(i + 1) * kout * plane];
            for (ch, chunk) in dst.chunks_mut(plane).enumerate() {
                chunk.fill(b.data()[ch]);
            }
            let src = if geom.is_pointwise() {
                img
            } else {
                im2col(&geom, img, &mut cols);
                &cols
            };
            gemm(kout, rows, plane, k.data(), false, src, false, dst, true);
        }
        let rg = self.rg(input) || self.rg(kernel) || self.rg(bias);
        let t = Tensor::new(&[n, kout, geom.out_h, geom.out_w], out)?;
        Ok(self.push(t, Op::Conv2d { input, kernel, bias, geom }, rg))
    }

    /// 2×2 max pooling with stride 2; ties resolve to the first element in
    /// row-major window order.
    pub fn maxpool2x2(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        if x.rank() != 4 {
            return Err(shape_err!("maxpool2x2 expects rank 4, got {:?}", x.dims()));
        }
        let (n, c, h, w) = (x.dims()[0], x.dims()[1], x.dims()[2], x.dims()[3]);
        if h % 2 != 0 || w % 2 != 0 {
            return Err(shape_err!("maxpool2x2 needs even spatial dims, got {h}x{w}"));
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Vec::with_capacity(n * c * oh * ow);
        let mut argmax = Vec::with_capacity(n * c * oh * ow);
        let data = x.data();
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let top = base + 2 * oy * w + 2 * ox;
                    let mut best = top;
                    for idx in [top + 1, top + w, top + w + 1] {
                        if data[idx] > data[best] {
                            best = idx;
                        }
                    }
                    out.push(data[best]);
                    argmax.push(best);
                }
            }
        }
        let rg = self.rg(input);
        let t = Tensor::new(&[n, c, oh, ow], out)?;
        Ok(self.push(t, Op::MaxPool2 { input, argmax }, rg))
    }

    /// `[N,D] · [D,M]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.dims()[1] != bv.dims()[0] {
            return Err(shape_err!("matmul: {:?} x {:?}", av.dims(), bv.dims()));
        }
        let (n, d, m) = (av.dims()[0], av.dims()[1], bv.dims()[1]);
        let mut out = vec![0.0; n * m];
        gemm(n, d, m, av.data(), false, bv.data(), false, &mut out, false);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(&[n, m], out)?, Op::MatMul { a, b }, rg))
    }

    /// Fully connected layer: `input[N,D] · weight[D,M] + bias[M]`.
    pub fn fully_connected(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.rank() != 2 || wv.rank() != 2 || xv.dims()[1] != wv.dims()[0] || bv.len() != wv.dims()[1] {
            return Err(shape_err!(
                "fully_connected: input {:?}, weight {:?}, bias {:?}",
                xv.dims(),
                wv.dims(),
                bv.dims()
            ));
        }
        let (n, d, m) = (xv.dims()[0], xv.dims()[1], wv.dims()[1]);
        let mut out = Vec::with_capacity(n * m);
        for _ in 0..n {
            out.extend_from_slice(bv.data());
        }
        gemm(n, d, m, xv.data(), false, wv.data(), false, &mut out, true);
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(Tensor::new(&[n, m], out)?, Op::Linear { x, w, b }, rg))
    }

    /// Adds a row vector to every row (last axis) of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xv, rv) = (self.value(x), self.value(row));
        let (_, cols) = broadcast_row_check(xv, rv, "add_row")?;
        let out: Vec<f64> = xv.data().iter().enumerate().map(|(i, v)| v + rv.data()[i % cols]).collect();
        let rg = self.rg(x) || self.rg(row);
        let t = Tensor::new(xv.dims(), out)?;
        Ok(self.push(t, Op::AddRow { x, row }, rg))
    }

    /// Multiplies every row (last axis) of `x` elementwise by a row vector.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xv, rv) = (self.value(x), self.value(row));
        let (_, cols) = broadcast_row_check(xv, rv, "mul_row")?;
        let out: Vec<f64> = xv.data().iter().enumerate().map(|(i, v)| v * rv.data()[i % cols]).collect();
        let rg = self.rg(x) || self.rg(row);
        let t = Tensor::new(xv.dims(), out)?;
        Ok(self.push(t, Op::MulRow { x, row }, rg))
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<(Tensor, bool)> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.dims() != bv.dims() {
            return Err(shape_err!("{name}: {:?} vs {:?}", av.dims(), bv.dims()));
        }
        let out = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        Ok((Tensor::new(av.dims(), out)?, self.rg(a) || self.rg(b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, rg) = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(t, Op::Add { a, b }, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, rg) = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(t, Op::Mul { a, b }, rg))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64) -> (Tensor, bool) {
        let xv = self.value(x);
        let out = xv.data().iter().map(|v| f(*v)).collect();
        (Tensor::new(xv.dims(), out).expect("same dims"), self.rg(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let (t, rg) = self.unary(x, libm::tanh);
        self.push(t, Op::Tanh { x }, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let (t, rg) = self.unary(x, sigmoid);
        self.push(t, Op::Sigmoid { x }, rg)
    }

    /// Parametric ReLU with one slope per channel (axis 1; axis 0 for rank 1).
    pub fn prelu(&mut self, x: Var, slope: Var) -> Result<Var> {
        let (xv, sv) = (self.value(x), self.value(slope));
        let (channels, inner) = prelu_layout(xv);
        if sv.len() != channels {
            return Err(shape_err!("prelu: {} slopes for {channels} channels of {:?}", sv.len(), xv.dims()));
        }
        let out = xv
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| if v >= 0.0 { v } else { sv.data()[(i / inner) % channels] * v })
            .collect();
        let rg = self.rg(x) || self.rg(slope);
        let t = Tensor::new(xv.dims(), out)?;
        Ok(self.push(t, Op::PRelu { x, slope }, rg))
    }

    /// Concatenates tensors along `axis`; all other dims must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs.first().ok_or_else(|| Error::Usage("concat of zero tensors".into()))?;
        let dims0 = self.value(*first).dims().to_vec();
        if axis >= dims0.len() {
            return Err(shape_err!("concat axis {axis} out of range for {dims0:?}"));
        }
        let mut axis_total = 0;
        for v in inputs {
            let d = self.value(*v).dims();
            let same_rest =
                d.len() == dims0.len() && d.iter().zip(&dims0).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !same_rest {
                return Err(shape_err!("concat on axis {axis}: {d:?} incompatible with {dims0:?}"));
            }
            axis_total += d[axis];
        }
        let outer: usize = dims0[..axis].iter().product();
        let mut out = Vec::with_capacity(outer * axis_total * dims0[axis + 1..].iter().product::<usize>());
        for o in 0..outer {
            for v in inputs {
                let t = self.value(*v);
                let chunk: usize = t.dims()[axis..].iter().product();
                out.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut dims = dims0;
        dims[axis] = axis_total;
        let rg = inputs.iter().any(|v| self.rg(*v));
        Ok(self.push(Tensor::new(&dims, out)?, Op::Concat { inputs: inputs.to_vec(), axis }, rg))
    }

    pub fn reshape(&mut self, x: Var, dims: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(dims)?;
        let rg = self.rg(x);
        Ok(self.push(t, Op::Reshape { x }, rg))
    }

    /// Collapses all but the leading axis: `[N, ...] -> [N, prod(...)]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let d = self.value(x).dims();
        let n = d[0];
        let rest = self.value(x).len() / n;
        self.reshape(x, &[n, rest])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum { x }, rg)
    }

    /// Mean absolute error over all elements.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.dims() != t.dims() {
            return Err(shape_err!("l1_loss: {:?} vs {:?}", p.dims(), t.dims()));
        }
        let total: f64 = p.data().iter().zip(t.data()).map(|(a, b)| (a - b).abs()).sum();
        let loss = total / p.len() as f64;
        let rg = self.rg(pred) || self.rg(target);
        Ok(self.push(Tensor::scalar(loss), Op::L1 { pred, target }, rg))
    }

    /// Hash of the branch taken at every non-differentiable point on the
    /// tape: PReLU input signs, max-pool winners and L1 residual signs. Two
    /// evaluations with equal signatures lie on the same smooth piece.
    pub fn kink_signature(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        let mut mix = |v: u64| h = (h ^ v).wrapping_mul(0x0000_0100_0000_01b3);
        for (i, node) in self.nodes.iter().enumerate() {
            match &node.op {
                Op::PRelu { x, .. } => {
                    mix(i as u64);
                    self.value(*x).data().iter().for_each(|&v| mix((v >= 0.0) as u64));
                }
                Op::MaxPool2 { argmax, .. } => {
                    mix(i as u64);
                    argmax.iter().for_each(|&a| mix(a as u64));
                }
                Op::L1 { pred, target } => {
                    mix(i as u64);
                    let (p, t) = (self.value(*pred).data(), self.value(*target).data());
                    p.iter().zip(t).for_each(|(a, b)| mix(a.partial_cmp(b).map_or(3, |o| o as i8 as u64 & 3)));
                }
                _ => {}
            }
        }
        h
    }

    /// Reverse pass from a scalar `loss`. Gradients accumulate over fan-out;
    /// only leaf gradients are retained.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Usage(alloc::format!(
                "backward needs a scalar loss, got dims {:?}",
                self.value(loss).dims()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.rg(loss) {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if let Op::Leaf = node.op {
                grads[id] = Some(g);
                continue;
            }
            self.backprop_node(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node<'_>, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = node.value.get();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { input, kernel, bias, geom } => {
                let x = self.value(*input);
                let k = self.value(*kernel);
                let n = x.dims()[0];
                let kout = k.dims()[0];
                let plane = geom.col_cols();
                let rows = geom.col_rows();
                let in_stride = geom.channels * geom.height * geom.width;
                let mut cols = vec![0.0; rows * plane];
                for i in 0..n {
                    let gout = &g[i * kout * plane..(i + 1) * kout * plane];
                    let img = &x.data()[i * in_stride..(i + 1) * in_stride];
                    if let Some(gb) = self.slot(grads, *bias) {
                        for (ch, chunk) in gout.chunks(plane).enumerate() {
                            gb[ch] += chunk.iter().sum::<f64>();
                        }
                    }
                    if self.rg(*kernel) {
                        let src: &[f64] = if geom.is_pointwise() {
                            img
                        } else {
                            im2col(geom, img, &mut cols);
                            &cols
                        };
                        let gk = self.slot(grads, *kernel).unwrap();
                        gemm(kout, plane, rows, gout, false, src, true, gk, true);
                    }
                    if let Some(gx) = self.slot(grads, *input) {
                        let gimg = &mut gx[i * in_stride..(i + 1) * in_stride];
                        if geom.is_pointwise() {
                            gemm(rows, kout, plane, k.data(), true, gout, false, gimg, true);
                        } else {
                            gemm(rows, kout, plane, k.data(), true, gout, false, &mut cols, false);
                            col2im_add(geom, &cols, gimg);
                        }
                    }
                }
            }
            Op::MaxPool2 { input, argmax } => {
                if let Some(gx) = self.slot(grads, *input) {
                    for (gi, &src) in g.iter().zip(argmax) {
                        gx[src] += gi;
                    }
                }
            }
            Op::MatMul { a, b } => self.backprop_matmul(*a, *b, g, grads),
            Op::Linear { x, w, b } => {
                self.backprop_matmul(*x, *w, g, grads);
                if let Some(gb) = self.slot(grads, *b) {
                    let m = gb.len();
                    for row in g.chunks(m) {
                        for (acc, v) in gb.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                }
            }
            Op::AddRow { x, row } => {
                if let Some(gx) = self.slot(grads, *x) {
                    add_into(gx, g);
                }
                if let Some(gr) = self.slot(grads, *row) {
                    let m = gr.len();
                    for chunk in g.chunks(m) {
                        add_into(gr, chunk);
                    }
                }
            }
            Op::MulRow { x, row } => {
                let xv = self.value(*x).data();
                let rv = self.value(*row).data();
                let m = rv.len();
                if let Some(gx) = self.slot(grads, *x) {
                    for (i, (acc, gi)) in gx.iter_mut().zip(g).enumerate() {
                        *acc += gi * rv[i % m];
                    }
                }
                if let Some(gr) = self.slot(grads, *row) {
                    for (i, (gi, xi)) in g.iter().zip(xv).enumerate() {
                        gr[i % m] += gi * xi;
                    }
                }
            }
            Op::Add { a, b } => {
                if let Some(ga) = self.slot(grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gb) = self.slot(grads, *b) {
                    add_into(gb, g);
                }
            }
            Op::Mul { a, b } => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                if let Some(ga) = self.slot(grads, *a) {
                    for ((acc, gi), bi) in ga.iter_mut().zip(g).zip(bv) {
                        *acc += gi * bi;
                    }
                }
                if let Some(gb) = self.slot(grads, *b) {
                    for ((acc, gi), ai) in gb.iter_mut().zip(g).zip(av) {
                        *acc += gi * ai;
                    }
                }
            }
            Op::Tanh { x } => {
                if let Some(gx) = self.slot(grads, *x) {
                    for ((acc, gi), y) in gx.iter_mut().zip(g).zip(out.data()) {
                        *acc += gi * (1.0 - y * y);
                    }
                }
            }
            Op::Sigmoid { x } => {
                if let Some(gx) = self.slot(grads, *x) {
                    for ((acc, gi), y) in gx.iter_mut().zip(g).zip(out.data()) {
                        *acc += gi * y * (1.0 - y);
                    }
                }
            }
            Op::PRelu { x, slope } => {
                let xt = self.value(*x);
                let (channels, inner) = prelu_layout(xt);
                let xv = xt.data();
                let sv = self.value(*slope).data();
                if let Some(gx) = self.slot(grads, *x) {
                    for (i, (acc, gi)) in gx.iter_mut().zip(g).enumerate() {
                        *acc += if xv[i] >= 0.0 { *gi } else { gi * sv[(i / inner) % channels] };
                    }
                }
                if let Some(gs) = self.slot(grads, *slope) {
                    for (i, gi) in g.iter().enumerate() {
                        if xv[i] < 0.0 {
                            gs[(i / inner) % channels] += gi * xv[i];
                        }
                    }
                }
            }
            Op::Concat { inputs, axis } => {
                let outer: usize = out.dims()[..*axis].iter().product();
                let out_chunk: usize = out.dims()[*axis..].iter().product();
                let mut offset = 0;
                for v in inputs {
                    let chunk: usize = self.value(*v).dims()[*axis..].iter().product();
                    if let Some(gv) = self.slot(grads, *v) {
                        for o in 0..outer {
                            let src = &g[o * out_chunk + offset..o * out_chunk + offset + chunk];
                            add_into(&mut gv[o * chunk..(o + 1) * chunk], src);
                        }
                    }
                    offset += chunk;
                }
            }
            Op::Reshape { x } => {
                if let Some(gx) = self.slot(grads, *x) {
                    add_into(gx, g);
                }
            }
            Op::Sum { x } => {
                if let Some(gx) = self.slot(grads, *x) {
                    for acc in gx.iter_mut() {
                        *acc += g[0];
                    }
                }
            }
            Op::L1 { pred, target } => {
                let p = self.value(*pred).data();
                let t = self.value(*target).data();
                let scale = g[0] / p.len() as f64;
                let sign = |d: f64| {
                    if d > 0.0 {
                        scale
                    } else if d < 0.0 {
                        -scale
                    } else {
                        0.0
                    }
                };
                if let Some(gp) = self.slot(grads, *pred) {
                    for ((acc, a), b) in gp.iter_mut().zip(p).zip(t) {
                        *acc += sign(a - b);
                    }
                }
                if let Some(gt) = self.slot(grads, *target) {
                    for ((acc, a), b) in gt.iter_mut().zip(p).zip(t) {
                        *acc -= sign(a - b);
                    }
                }
            }
        }
    }

    fn backprop_matmul(&self, a: Var, b: Var, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let av = self.value(a);
        let bv = self.value(b);
        let (n, d, m) = (av.dims()[0], av.dims()[1], bv.dims()[1]);
        if let Some(ga) = self.slot(grads, a) {
            gemm(n, m, d, g, false, bv.data(), true, ga, true);
        }
        if let Some(gb) = self.slot(grads, b) {
            gemm(d, n, m, av.data(), true, g, false, gb, true);
        }
    }

    /// Gradient accumulator for `v`, allocated on first use; `None` when `v`
    /// does not require grad.
    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut [f64]> {
        if !self.rg(v) {
            return None;
        }
        let len = self.value(v).len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]).as_mut_slice())
    }
}

fn prelu_layout(x: &Tensor) -> (usize, usize) {
    match x.rank() {
        1 => (x.dims()[0], 1),
        _ => (x.dims()[1], x.dims()[2..].iter().product()),
    }
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (a, v) in acc.iter_mut().zip(g) {
        *a += v;
    }
}
