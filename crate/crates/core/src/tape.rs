//! Define-by-run reverse-mode differentiation.
//!
//! Every operation appends a node to the [`Tape`]; [`Tape::backward`] walks
//! the nodes in reverse order of execution and accumulates vector-Jacobian
//! products into each node's gradient buffer.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{numel, Tensor};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    BatchMatMul {
        a: Var,
        b: Var,
        shared_rhs: bool,
    },
    Conv1x1 {
        x: Var,
        weight: Var,
        bias: Var,
    },
    ScaledSoftmax {
        x: Var,
        inv_scale: f64,
    },
    MeanAxis {
        x: Var,
        axis: usize,
    },
    Linear {
        x: Var,
        weight: Var,
        bias: Var,
    },
    Reshape(Var),
    Transpose(Var),
    Add(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    Stack(Vec<Var>),
    Select {
        x: Var,
        index: usize,
    },
    Sum(Var),
    WeightedSum {
        x: Var,
        weights: Vec<f64>,
    },
    PairwiseHinge {
        scores: Var,
        pairs: Vec<(usize, usize)>,
        margin: f64,
    },
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Ordered record of executed operations.
///
/// A tape and the tensors on it belong to one thread; independent tapes share
/// nothing and may run concurrently.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    backward_fault: Option<f64>,
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

/// `out[m,p] += sum_k a[m,k] * b[k,p]`
fn gemm_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, p: usize) {
    for i in 0..m {
        let row = &mut out[i * p..(i + 1) * p];
        for l in 0..k {
            let av = a[i * k + l];
            if av == 0.0 {
                continue;
            }
            let brow = &b[l * p..(l + 1) * p];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `da[m,k] += sum_p dc[m,p] * b[k,p]`
fn gemm_grad_lhs(dc: &[f64], b: &[f64], da: &mut [f64], m: usize, k: usize, p: usize) {
    for i in 0..m {
        let drow = &dc[i * p..(i + 1) * p];
        for l in 0..k {
            let brow = &b[l * p..(l + 1) * p];
            da[i * k + l] += drow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// `db[k,p] += sum_m a[m,k] * dc[m,p]`
fn gemm_grad_rhs(a: &[f64], dc: &[f64], db: &mut [f64], m: usize, k: usize, p: usize) {
    for i in 0..m {
        let drow = &dc[i * p..(i + 1) * p];
        for l in 0..k {
            let av = a[i * k + l];
            if av == 0.0 {
                continue;
            }
            for (o, d) in db[l * p..(l + 1) * p].iter_mut().zip(drow) {
                *o += av * d;
            }
        }
    }
}

fn transpose_last2(data: &[f64], shape: &[usize]) -> Vec<f64> {
    let r = shape.len();
    let (rows, cols) = (shape[r - 2], shape[r - 1]);
    let batch = data.len() / (rows * cols);
    let mut out = vec![0.0; data.len()];
    for b in 0..batch {
        let base = b * rows * cols;
        for i in 0..rows {
            for j in 0..cols {
                out[base + j * rows + i] = data[base + i * cols + j];
            }
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape whose backward pass scales every vector-Jacobian product by
    /// `1 + factor`. Used as a negative control for gradient checking.
    pub fn with_backward_fault(factor: f64) -> Self {
        Tape {
            nodes: Vec::new(),
            backward_fault: Some(factor),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input tensor.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        let mut value = value;
        value.clear_grad();
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient from the most recent backward pass, if `v` was reachable.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    /// Plain matrix product of `[M,K]` and `[K,P]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k, p) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * p];
        gemm_acc(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            p,
        );
        let t = Tensor::new(&[m, p], out)?;
        Ok(self.push(t, Op::MatMul(a, b)))
    }

    /// Batched product of `[B,M,K]` with `[B,K,P]`, or with a shared `[K,P]`
    /// right-hand side.
    pub fn bmm(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let shared_rhs = sb.len() == 2;
        let ok = sa.len() == 3
            && match sb.len() {
                2 => sa[2] == sb[0],
                3 => sa[0] == sb[0] && sa[2] == sb[1],
                _ => false,
            };
        if !ok {
            return Err(shape_err("bmm", sa, sb));
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let p = *sb.last().unwrap();
        let mut out = vec![0.0; batch * m * p];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        for i in 0..batch {
            let bs = if shared_rhs { 0 } else { i * k * p };
            gemm_acc(
                &ad[i * m * k..(i + 1) * m * k],
                &bd[bs..bs + k * p],
                &mut out[i * m * p..(i + 1) * m * p],
                m,
                k,
                p,
            );
        }
        let t = Tensor::new(&[batch, m, p], out)?;
        Ok(self.push(t, Op::BatchMatMul { a, b, shared_rhs }))
    }

    /// 1x1 convolution: `out[n,:,h,w] = weight * x[n,:,h,w] + bias`.
    pub fn conv1x1(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(weight), self.shape(bias));
        if sx.len() != 4 || sw.len() != 2 || sw[1] != sx[1] {
            return Err(shape_err("conv1x1", sx, sw));
        }
        if sb != [sw[0]] {
            return Err(shape_err("conv1x1 bias", sw, sb));
        }
        let (n, c, hw) = (sx[0], sx[1], sx[2] * sx[3]);
        let co = sw[0];
        let (xd, wd, bd) = (
            self.value(x).data(),
            self.value(weight).data(),
            self.value(bias).data(),
        );
        let mut out = vec![0.0; n * co * hw];
        for i in 0..n {
            let dst = &mut out[i * co * hw..(i + 1) * co * hw];
            for (o, &b) in bd.iter().enumerate() {
                dst[o * hw..(o + 1) * hw].fill(b);
            }
            gemm_acc(wd, &xd[i * c * hw..(i + 1) * c * hw], dst, co, c, hw);
        }
        let t = Tensor::new(&[n, co, sx[2], sx[3]], out)?;
        Ok(self.push(t, Op::Conv1x1 { x, weight, bias }))
    }

    /// Softmax over the last axis of `x / sqrt(scale_dim)`, max-stabilised.
    pub fn scaled_softmax(&mut self, x: Var, scale_dim: usize) -> Result<Var> {
        if scale_dim == 0 {
            return Err(Error::Config("scale_dim must be positive".into()));
        }
        let sx = self.shape(x).to_vec();
        let l = *sx
            .last()
            .ok_or_else(|| shape_err("scaled_softmax", &sx, &[]))?;
        let inv_scale = 1.0 / libm::sqrt(scale_dim as f64);
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(l) {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = libm::exp((*v - max) * inv_scale);
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let t = Tensor::new(&sx, out)?;
        Ok(self.push(t, Op::ScaledSoftmax { x, inv_scale }))
    }

    /// Arithmetic mean along `axis`; the axis is removed from the shape.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if axis >= sx.len() {
            return Err(Error::Axis {
                axis,
                rank: sx.len(),
            });
        }
        let outer = numel(&sx[..axis]);
        let len = sx[axis];
        let inner = numel(&sx[axis + 1..]);
        let xd = self.value(x).data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let src = &xd[(o * len + l) * inner..(o * len + l + 1) * inner];
                for (d, s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let denom = len as f64;
        out.iter_mut().for_each(|v| *v /= denom);
        let mut shape = sx.clone();
        shape.remove(axis);
        let t = Tensor::new(&shape, out)?;
        Ok(self.push(t, Op::MeanAxis { x, axis }))
    }

    /// Affine map over the last axis: `out[..,o] = sum_d weight[o,d] x[..,d] + bias[o]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(weight), self.shape(bias));
        let d = sx.last().copied().unwrap_or(1);
        let d = if sx.is_empty() { 1 } else { d };
        if sw.len() != 2 || sw[1] != d {
            return Err(shape_err("linear", sx, sw));
        }
        if sb != [sw[0]] {
            return Err(shape_err("linear bias", sw, sb));
        }
        let dout = sw[0];
        let rows = self.value(x).len() / d;
        let wt = transpose_last2(self.value(weight).data(), sw);
        let bd = self.value(bias).data();
        let mut out = Vec::with_capacity(rows * dout);
        for _ in 0..rows {
            out.extend_from_slice(bd);
        }
        gemm_acc(self.value(x).data(), &wt, &mut out, rows, d, dout);
        let mut shape = sx.to_vec();
        match shape.last_mut() {
            Some(last) => *last = dout,
            None => shape.push(dout),
        }
        let t = Tensor::new(&shape, out)?;
        Ok(self.push(t, Op::Linear { x, weight, bias }))
    }

    /// Same data under a new shape.
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).reshaped(shape)?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let r = sx.len();
        if r < 2 {
            return Err(shape_err("transpose", &sx, &[]));
        }
        let out = transpose_last2(self.value(x).data(), &sx);
        let mut shape = sx;
        shape.swap(r - 2, r - 1);
        let t = Tensor::new(&shape, out)?;
        Ok(self.push(t, Op::Transpose(x)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("add", sa, sb));
        }
        let out = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let t = Tensor::new(sa, out)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let out = self.value(x).data().iter().map(|v| v * factor).collect();
        let t = Tensor::new(&sx, out)?;
        Ok(self.push(t, Op::Scale(x, factor)))
    }

    /// Concatenates the flattened inputs into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(shape_err("concat", &[], &[]));
        }
        let mut out = Vec::new();
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        let n = out.len();
        let t = Tensor::new(&[n], out)?;
        Ok(self.push(t, Op::Concat(parts.to_vec())))
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        let first = match parts.first() {
            Some(&p) => self.shape(p).to_vec(),
            None => return Err(shape_err("stack", &[], &[])),
        };
        let mut out = Vec::with_capacity(parts.len() * numel(&first));
        for &p in parts {
            if self.shape(p) != first.as_slice() {
                return Err(shape_err("stack", &first, self.shape(p)));
            }
            out.extend_from_slice(self.value(p).data());
        }
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(&first);
        let t = Tensor::new(&shape, out)?;
        Ok(self.push(t, Op::Stack(parts.to_vec())))
    }

    /// Slice `x[index]` along the leading axis.
    pub fn select(&mut self, x: Var, index: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.is_empty() || index >= sx[0] {
            return Err(Error::Axis {
                axis: index,
                rank: sx.first().copied().unwrap_or(0),
            });
        }
        let inner = numel(&sx[1..]);
        let out = self.value(x).data()[index * inner..(index + 1) * inner].to_vec();
        let t = Tensor::new(&sx[1..], out)?;
        Ok(self.push(t, Op::Select { x, index }))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        Ok(self.push(Tensor::scalar(s), Op::Sum(x)))
    }

    /// `sum_i weights[i] * x[i]` with constant weights.
    pub fn weighted_sum(&mut self, x: Var, weights: &[f64]) -> Result<Var> {
        if weights.len() != self.value(x).len() {
            return Err(shape_err("weighted_sum", self.shape(x), &[weights.len()]));
        }
        let s = self
            .value(x)
            .data()
            .iter()
            .zip(weights)
            .map(|(a, b)| a * b)
            .sum();
        Ok(self.push(
            Tensor::scalar(s),
            Op::WeightedSum {
                x,
                weights: weights.to_vec(),
            },
        ))
    }

    /// Mean over `pairs` of `max(0, margin - (scores[i] - scores[j]))`.
    pub fn pairwise_hinge(
        &mut self,
        scores: Var,
        pairs: &[(usize, usize)],
        margin: f64,
    ) -> Result<Var> {
        let n = self.value(scores).len();
        if pairs.is_empty() {
            return Err(Error::TooFewObjects { n });
        }
        if pairs.iter().any(|&(i, j)| i >= n || j >= n) {
            return Err(shape_err("pairwise_hinge", self.shape(scores), &[n]));
        }
        let s = self.value(scores).data();
        let total: f64 = pairs
            .iter()
            .map(|&(i, j)| (margin - (s[i] - s[j])).max(0.0))
            .sum();
        let loss = total / pairs.len() as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::PairwiseHinge {
                scores,
                pairs: pairs.to_vec(),
                margin,
            },
        ))
    }

    /// Reverse pass from a scalar output. Every node that `output` depends on
    /// receives a fresh gradient buffer; buffers from earlier calls are
    /// replaced, never accumulated.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        let len = self.value(output).len();
        if len != 1 {
            return Err(Error::NotScalar { len });
        }
        let fault = self.backward_fault.map_or(1.0, |f| 1.0 + f);
        let count = output.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; count];
        grads[output.0] = Some(vec![1.0]);

        for idx in (0..count).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            {
                let mut acc = |v: Var, contrib: Vec<f64>| {
                    let slot = grads[v.0].get_or_insert_with(|| vec![0.0; contrib.len()]);
                    for (s, c) in slot.iter_mut().zip(contrib) {
                        *s += c * fault;
                    }
                };
                self.vjp(node, &g, &mut acc);
            }
            grads[idx] = Some(g);
        }

        for node in &mut self.nodes {
            node.value.clear_grad();
        }
        for (idx, g) in grads.into_iter().enumerate() {
            if let Some(g) = g {
                self.nodes[idx].value.set_grad(g);
            }
        }
        Ok(())
    }

    fn vjp(&self, node: &Node, g: &[f64], acc: &mut impl FnMut(Var, Vec<f64>)) {
        let val = |v: Var| self.nodes[v.0].value.data();
        let shp = |v: Var| self.nodes[v.0].value.shape();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = (shp(*a)[0], shp(*a)[1]);
                let p = shp(*b)[1];
                let mut da = vec![0.0; m * k];
                let mut db = vec![0.0; k * p];
                gemm_grad_lhs(g, val(*b), &mut da, m, k, p);
                gemm_grad_rhs(val(*a), g, &mut db, m, k, p);
                acc(*a, da);
                acc(*b, db);
            }
            Op::BatchMatMul { a, b, shared_rhs } => {
                let sa = shp(*a);
                let (batch, m, k) = (sa[0], sa[1], sa[2]);
                let p = *shp(*b).last().unwrap();
                let (ad, bd) = (val(*a), val(*b));
                let mut da = vec![0.0; batch * m * k];
                let mut db = vec![0.0; bd.len()];
                for i in 0..batch {
                    let bs = if *shared_rhs { 0 } else { i * k * p };
                    let gi = &g[i * m * p..(i + 1) * m * p];
                    gemm_grad_lhs(
                        gi,
                        &bd[bs..bs + k * p],
                        &mut da[i * m * k..(i + 1) * m * k],
                        m,
                        k,
                        p,
                    );
                    gemm_grad_rhs(
                        &ad[i * m * k..(i + 1) * m * k],
                        gi,
                        &mut db[bs..bs + k * p],
                        m,
                        k,
                        p,
                    );
                }
                acc(*a, da);
                acc(*b, db);
            }
            Op::Conv1x1 { x, weight, bias } => {
                let sx = shp(*x);
                let (n, c, hw) = (sx[0], sx[1], sx[2] * sx[3]);
                let co = shp(*weight)[0];
                let (xd, wd) = (val(*x), val(*weight));
                let mut dx = vec![0.0; xd.len()];
                let mut dw = vec![0.0; wd.len()];
                let mut db = vec![0.0; co];
                for i in 0..n {
                    let gi = &g[i * co * hw..(i + 1) * co * hw];
                    let xi = &xd[i * c * hw..(i + 1) * c * hw];
                    // dx = W^T g ; dW = g x^T
                    gemm_grad_rhs(wd, gi, &mut dx[i * c * hw..(i + 1) * c * hw], co, c, hw);
                    gemm_grad_lhs(gi, xi, &mut dw, co, c, hw);
                    for (o, d) in db.iter_mut().enumerate() {
                        *d += gi[o * hw..(o + 1) * hw].iter().sum::<f64>();
                    }
                }
                acc(*x, dx);
                acc(*weight, dw);
                acc(*bias, db);
            }
            Op::ScaledSoftmax { x, inv_scale } => {
                let y = node.value.data();
                let l = *node.value.shape().last().unwrap();
                let mut dx = vec![0.0; y.len()];
                for ((yr, gr), dr) in y.chunks(l).zip(g.chunks(l)).zip(dx.chunks_mut(l)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((d, yv), gv) in dr.iter_mut().zip(yr).zip(gr) {
                        *d = inv_scale * yv * (gv - dot);
                    }
                }
                acc(*x, dx);
            }
            Op::MeanAxis { x, axis } => {
                let sx = shp(*x);
                let outer = numel(&sx[..*axis]);
                let len = sx[*axis];
                let inner = numel(&sx[axis + 1..]);
                let mut dx = vec![0.0; numel(sx)];
                let denom = len as f64;
                for o in 0..outer {
                    let go = &g[o * inner..(o + 1) * inner];
                    for l in 0..len {
                        let dst = &mut dx[(o * len + l) * inner..(o * len + l + 1) * inner];
                        for (d, gv) in dst.iter_mut().zip(go) {
                            *d = gv / denom;
                        }
                    }
                }
                acc(*x, dx);
            }
            Op::Linear { x, weight, bias } => {
                let sw = shp(*weight);
                let (dout, d) = (sw[0], sw[1]);
                let xd = val(*x);
                let rows = xd.len() / d;
                let wt = transpose_last2(val(*weight), sw);
                let mut dx = vec![0.0; xd.len()];
                let mut dwt = vec![0.0; d * dout];
                let mut db = vec![0.0; dout];
                gemm_grad_lhs(g, &wt, &mut dx, rows, d, dout);
                gemm_grad_rhs(xd, g, &mut dwt, rows, d, dout);
                for row in g.chunks(dout) {
                    for (b, gv) in db.iter_mut().zip(row) {
                        *b += gv;
                    }
                }
                acc(*x, dx);
                acc(*weight, transpose_last2(&dwt, &[d, dout]));
                acc(*bias, db);
            }
            Op::Reshape(x) => acc(*x, g.to_vec()),
            Op::Transpose(x) => {
                acc(*x, transpose_last2(g, node.value.shape()));
            }
            Op::Add(a, b) => {
                acc(*a, g.to_vec());
                acc(*b, g.to_vec());
            }
            Op::Scale(x, f) => acc(*x, g.iter().map(|v| v * f).collect()),
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = val(p).len();
                    acc(p, g[offset..offset + n].to_vec());
                    offset += n;
                }
            }
            Op::Stack(parts) => {
                let inner = g.len() / parts.len();
                for (i, &p) in parts.iter().enumerate() {
                    acc(p, g[i * inner..(i + 1) * inner].to_vec());
                }
            }
            Op::Select { x, index } => {
                let inner = g.len();
                let mut dx = vec![0.0; val(*x).len()];
                dx[index * inner..(index + 1) * inner].copy_from_slice(g);
                acc(*x, dx);
            }
            Op::Sum(x) => acc(*x, vec![g[0]; val(*x).len()]),
            Op::WeightedSum { x, weights } => {
                acc(*x, weights.iter().map(|w| w * g[0]).collect());
            }
            Op::PairwiseHinge {
                scores,
                pairs,
                margin,
            } => {
                let s = val(*scores);
                let mut ds = vec![0.0; s.len()];
                let w = g[0] / pairs.len() as f64;
                for &(i, j) in pairs {
                    if margin - (s[i] - s[j]) > 0.0 {
                        ds[i] -= w;
                        ds[j] += w;
                    }
                }
                acc(*scores, ds);
            }
        }
    }
}
