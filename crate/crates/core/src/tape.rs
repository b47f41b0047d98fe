//! Define-by-run reverse-mode tape.
//!
//! Every operation appends a node holding its forward value and the handles
//! of its inputs. Nodes are pushed in evaluation order, so the node list is a
//! topological order of the computation DAG and [`Tape::backward`] simply
//! walks it in reverse, visiting each node once and accumulating into the
//! gradients of its inputs.
//!
//! Broadcasting is limited to bias addition ([`Tape::add_bias`]) and scalar
//! scaling ([`Tape::scale`]); everything else requires equal shapes.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::{Gradients, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, numel, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Deliberate backward-rule corruption, used as a negative control for the
/// gradient checker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Sigmoid backward drops the `(1 - s)` factor.
    SigmoidBackward,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddBias(Var, Var),
    MatMul(Var, Var),
    BatchMatMul(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var, f64),
    Softmax(Var),
    Concat(Vec<Var>),
    Slice(Var, usize, usize),
    Transpose(Var),
    Sum(Var),
    Mean(Var),
    SumAxis(Var, usize),
    Reshape(Var),
    GatherRows(Var, Vec<usize>),
}

struct Node<F> {
    value: Tensor<F>,
    op: Op,
    needs_grad: bool,
}

pub struct Tape<'p, F: Scalar> {
    params: &'p ParamStore<F>,
    nodes: Vec<Node<F>>,
    registry: BTreeMap<String, Var>,
    fault: Option<Fault>,
    clamped: usize,
}

fn shape_err(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

impl<'p, F: Scalar> Tape<'p, F> {
    pub fn new(params: &'p ParamStore<F>) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            registry: BTreeMap::new(),
            fault: None,
            clamped: 0,
        }
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.fault = Some(fault);
        self
    }

    pub fn params(&self) -> &'p ParamStore<F> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of `log` inputs clamped at their floor so far.
    pub fn clamped_logs(&self) -> usize {
        self.clamped
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<F>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn grad_of(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<F>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// The registered parameter `name`. Repeated lookups return the same
    /// node so gradients from every use accumulate in one place.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.registry.get(name) {
            return Ok(v);
        }
        let t = self.params.get(name)?.clone();
        let v = self.push(t, Op::Leaf, true);
        self.registry.insert(String::from(name), v);
        Ok(v)
    }

    fn binary_same(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err(op, sa, sb));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(F, F) -> F) -> Tensor<F> {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape(), data).unwrap()
    }

    fn map(&self, a: Var, f: impl Fn(F) -> F) -> Tensor<F> {
        let t = self.value(a);
        Tensor::new(t.shape(), t.data().iter().map(|&x| f(x)).collect()).unwrap()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same("add", a, b)?;
        let out = self.zip_map(a, b, |x, y| x + y);
        let g = self.grad_of(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), g))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same("sub", a, b)?;
        let out = self.zip_map(a, b, |x, y| x - y);
        let g = self.grad_of(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), g))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_same("mul", a, b)?;
        let out = self.zip_map(a, b, |x, y| x * y);
        let g = self.grad_of(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), g))
    }

    /// Scalar times tensor.
    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let sf = F::of(s);
        let out = self.map(a, |x| x * sf);
        let g = self.grad_of(&[a]);
        self.push(out, Op::Scale(a, s), g)
    }

    /// `x[..., k] + b[k]`, broadcasting the bias over all leading axes.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(b));
        let k = *sx.last().unwrap();
        if sb.len() != 1 || sb[0] != k {
            return Err(shape_err("add_bias", sx, sb));
        }
        let bias = self.value(b).data().to_vec();
        let tx = self.value(x);
        let data = tx
            .data()
            .chunks(k)
            .flat_map(|row| row.iter().zip(&bias).map(|(&a, &c)| a + c))
            .collect();
        let out = Tensor::new(tx.shape(), data).unwrap();
        let g = self.grad_of(&[x, b]);
        Ok(self.push(out, Op::AddBias(x, b), g))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![F::zero(); m * n];
        gemm_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let g = self.grad_of(&[a, b]);
        Ok(self.push(Tensor::new(&[m, n], out).unwrap(), Op::MatMul(a, b), g))
    }

    /// `[b, m, k] × [b, k, n] → [b, m, n]`
    pub fn batch_matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(shape_err("batch_matmul", sa, sb));
        }
        let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![F::zero(); bs * m * n];
        let (da, db) = (self.value(a).data(), self.value(b).data());
        for i in 0..bs {
            gemm_acc(
                &da[i * m * k..(i + 1) * m * k],
                &db[i * k * n..(i + 1) * k * n],
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let g = self.grad_of(&[a, b]);
        Ok(self.push(
            Tensor::new(&[bs, m, n], out).unwrap(),
            Op::BatchMatMul(a, b),
            g,
        ))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| x.tanh());
        let g = self.grad_of(&[a]);
        self.push(out, Op::Tanh(a), g)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.map(a, sigmoid);
        let g = self.grad_of(&[a]);
        self.push(out, Op::Sigmoid(a), g)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.map(a, |x| x.exp());
        let g = self.grad_of(&[a]);
        self.push(out, Op::Exp(a), g)
    }

    /// Natural log of `max(x, floor)`. Clamped entries are counted and get a
    /// zero gradient.
    pub fn log_clamped(&mut self, a: Var, floor: f64) -> Var {
        let fl = F::of(floor);
        let clamped = self.value(a).data().iter().filter(|&&x| !(x > fl)).count();
        self.clamped += clamped;
        let out = self.map(a, |x| if x > fl { x.ln() } else { fl.ln() });
        let g = self.grad_of(&[a]);
        self.push(out, Op::Log(a, floor), g)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.log_clamped(a, 0.0)
    }

    /// Softmax over the trailing axis. Masked entries (`false`) are exactly
    /// zero; every row must keep at least one unmasked entry.
    pub fn softmax_rows(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let tx = self.value(x);
        let k = tx.last_dim();
        if let Some(m) = mask {
            if m.len() != tx.len() {
                return Err(shape_err("softmax_rows mask", tx.shape(), &[m.len()]));
            }
        }
        let out = softmax_kernel(tx, mask)?;
        debug_assert_eq!(out.last_dim(), k);
        let g = self.grad_of(&[x]);
        Ok(self.push(out, Op::Softmax(x), g))
    }

    /// Concatenation along the trailing axis; leading axes must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.shape(parts[0]).to_vec();
        let lead = &first[..first.len() - 1];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != first.len() || &s[..s.len() - 1] != lead {
                return Err(shape_err("concat", &first, s));
            }
            widths.push(*s.last().unwrap());
        }
        let rows: usize = lead.iter().product();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let g = self.grad_of(parts);
        Ok(self.push(
            Tensor::new(&shape, data).unwrap(),
            Op::Concat(parts.to_vec()),
            g,
        ))
    }

    /// Columns `start..end` of the trailing axis.
    pub fn slice(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let k = *s.last().unwrap();
        if start >= end || end > k {
            return Err(shape_err("slice", &s, &[start, end]));
        }
        let w = end - start;
        let data = self
            .value(x)
            .data()
            .chunks(k)
            .flat_map(|row| row[start..end].iter().copied())
            .collect();
        let mut shape = s.clone();
        *shape.last_mut().unwrap() = w;
        let g = self.grad_of(&[x]);
        Ok(self.push(Tensor::new(&shape, data).unwrap(), Op::Slice(x, start, end), g))
    }

    /// Swaps the trailing two axes.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() < 2 {
            return Err(shape_err("transpose", &s, &[]));
        }
        let (m, n) = (s[s.len() - 2], s[s.len() - 1]);
        let out = transpose_kernel(self.value(x).data(), m, n);
        let mut shape = s.clone();
        let r = shape.len();
        shape.swap(r - 2, r - 1);
        let g = self.grad_of(&[x]);
        Ok(self.push(Tensor::new(&shape, out).unwrap(), Op::Transpose(x), g))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().fold(F::zero(), |a, &b| a + b);
        let g = self.grad_of(&[x]);
        self.push(Tensor::scalar(s), Op::Sum(x), g)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().fold(F::zero(), |a, &b| a + b) / F::of(t.len() as f64);
        let g = self.grad_of(&[x]);
        self.push(Tensor::scalar(s), Op::Mean(x), g)
    }

    /// Sum over `axis`, which is removed from the shape (a rank-1 input
    /// yields shape `[1]`).
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            return Err(shape_err("sum_axis", &s, &[axis]));
        }
        let outer: usize = s[..axis].iter().product();
        let n = s[axis];
        let inner: usize = s[axis + 1..].iter().product();
        let src = self.value(x).data();
        let mut out = vec![F::zero(); outer * inner];
        for o in 0..outer {
            for j in 0..n {
                let base = (o * n + j) * inner;
                for i in 0..inner {
                    out[o * inner + i] = out[o * inner + i] + src[base + i];
                }
            }
        }
        let mut shape: Vec<usize> = s[..axis].iter().chain(&s[axis + 1..]).copied().collect();
        if shape.is_empty() {
            shape.push(1);
        }
        let g = self.grad_of(&[x]);
        Ok(self.push(Tensor::new(&shape, out).unwrap(), Op::SumAxis(x, axis), g))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let n = numel(shape)?;
        if n != self.value(x).len() {
            return Err(shape_err("reshape", self.shape(x), shape));
        }
        let t = self.value(x).clone().reshaped(shape)?;
        let g = self.grad_of(&[x]);
        Ok(self.push(t, Op::Reshape(x), g))
    }

    /// Rows of a rank-2 tensor selected (with repetition) by `idx`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || idx.iter().any(|&i| i >= s[0]) || idx.is_empty() {
            return Err(shape_err("gather_rows", &s, &[idx.len()]));
        }
        let d = s[1];
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        let g = self.grad_of(&[x]);
        Ok(self.push(
            Tensor::new(&[idx.len(), d], data).unwrap(),
            Op::GatherRows(x, idx.to_vec()),
            g,
        ))
    }

    /// Elementwise product with a constant tensor of the same shape.
    pub fn mul_const(&mut self, x: Var, c: Tensor<F>) -> Result<Var> {
        let cv = self.constant(c);
        self.mul(x, cv)
    }

    /// Gradients of the scalar `loss` for every parameter in the store;
    /// parameters the loss does not reach get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients<F>> {
        let ls = self.shape(loss);
        if ls != [1] {
            return Err(Error::NonScalarLoss(ls.to_vec()));
        }
        let mut grads: Vec<Option<Vec<F>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![F::one()]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.backprop_node(node, &g, &mut grads);
            // keep leaf gradients for extraction
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        let mut out = Gradients::new();
        for (name, t) in self.params.iter() {
            let g = match self.registry.get(name) {
                Some(v) if v.0 <= loss.0 => match grads[v.0].take() {
                    Some(g) => Tensor::new(t.shape(), g).unwrap(),
                    None => Tensor::zeros(t.shape()),
                },
                _ => Tensor::zeros(t.shape()),
            };
            out.insert(name.clone(), g);
        }
        Ok(out)
    }

    fn acc<'a>(&self, grads: &'a mut [Option<Vec<F>>], v: Var) -> Option<&'a mut Vec<F>> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        let n = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![F::zero(); n]))
    }

    fn backprop_node(&self, node: &Node<F>, g: &[F], grads: &mut [Option<Vec<F>>]) {
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(d) = self.acc(grads, v) {
                        add_into(d, g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(d) = self.acc(grads, *a) {
                    add_into(d, g);
                }
                if let Some(d) = self.acc(grads, *b) {
                    for (x, &y) in d.iter_mut().zip(g) {
                        *x = *x - y;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if let Some(d) = self.acc(grads, *a) {
                    for ((x, &gy), &o) in d.iter_mut().zip(g).zip(vb) {
                        *x = *x + gy * o;
                    }
                }
                if let Some(d) = self.acc(grads, *b) {
                    for ((x, &gy), &o) in d.iter_mut().zip(g).zip(va) {
                        *x = *x + gy * o;
                    }
                }
            }
            Op::Scale(a, s) => {
                let sf = F::of(*s);
                if let Some(d) = self.acc(grads, *a) {
                    for (x, &gy) in d.iter_mut().zip(g) {
                        *x = *x + gy * sf;
                    }
                }
            }
            Op::AddBias(x, b) => {
                if let Some(d) = self.acc(grads, *x) {
                    add_into(d, g);
                }
                let k = self.value(*b).len();
                if let Some(d) = self.acc(grads, *b) {
                    for row in g.chunks(k) {
                        add_into(d, row);
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if let Some(d) = self.acc(grads, *a) {
                    gemm_nt_acc(g, vb, d, m, k, n);
                }
                if let Some(d) = self.acc(grads, *b) {
                    gemm_tn_acc(va, g, d, m, k, n);
                }
            }
            Op::BatchMatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (bs, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if let Some(d) = self.acc(grads, *a) {
                    for i in 0..bs {
                        gemm_nt_acc(
                            &g[i * m * n..(i + 1) * m * n],
                            &vb[i * k * n..(i + 1) * k * n],
                            &mut d[i * m * k..(i + 1) * m * k],
                            m,
                            k,
                            n,
                        );
                    }
                }
                if let Some(d) = self.acc(grads, *b) {
                    for i in 0..bs {
                        gemm_tn_acc(
                            &va[i * m * k..(i + 1) * m * k],
                            &g[i * m * n..(i + 1) * m * n],
                            &mut d[i * k * n..(i + 1) * k * n],
                            m,
                            k,
                            n,
                        );
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(d) = self.acc(grads, *a) {
                    for ((x, &gy), &y) in d.iter_mut().zip(g).zip(out) {
                        *x = *x + gy * (F::one() - y * y);
                    }
                }
            }
            Op::Sigmoid(a) => {
                let faulty = self.fault == Some(Fault::SigmoidBackward);
                if let Some(d) = self.acc(grads, *a) {
                    for ((x, &gy), &y) in d.iter_mut().zip(g).zip(out) {
                        let dy = if faulty { y } else { y * (F::one() - y) };
                        *x = *x + gy * dy;
                    }
                }
            }
            Op::Exp(a) => {
                if let Some(d) = self.acc(grads, *a) {
                    for ((x, &gy), &y) in d.iter_mut().zip(g).zip(out) {
                        *x = *x + gy * y;
                    }
                }
            }
            Op::Log(a, floor) => {
                let fl = F::of(*floor);
                let va = self.value(*a).data();
                if let Some(d) = self.acc(grads, *a) {
                    for ((x, &gy), &xin) in d.iter_mut().zip(g).zip(va) {
                        if xin > fl {
                            *x = *x + gy / xin;
                        }
                    }
                }
            }
            Op::Softmax(a) => {
                let k = node.value.last_dim();
                if let Some(d) = self.acc(grads, *a) {
                    for ((drow, grow), yrow) in d.chunks_mut(k).zip(g.chunks(k)).zip(out.chunks(k)) {
                        let dot = grow
                            .iter()
                            .zip(yrow)
                            .fold(F::zero(), |s, (&gy, &y)| s + gy * y);
                        for ((x, &gy), &y) in drow.iter_mut().zip(grow).zip(yrow) {
                            *x = *x + y * (gy - dot);
                        }
                    }
                }
            }
            Op::Concat(parts) => {
                let total = node.value.last_dim();
                let rows = node.value.len() / total;
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).last_dim();
                    if let Some(d) = self.acc(grads, p) {
                        for r in 0..rows {
                            add_into(
                                &mut d[r * w..(r + 1) * w],
                                &g[r * total + offset..r * total + offset + w],
                            );
                        }
                    }
                    offset += w;
                }
            }
            Op::Slice(a, start, end) => {
                let k = self.value(*a).last_dim();
                let w = end - start;
                if let Some(d) = self.acc(grads, *a) {
                    for (drow, grow) in d.chunks_mut(k).zip(g.chunks(w)) {
                        add_into(&mut drow[*start..*end], grow);
                    }
                }
            }
            Op::Transpose(a) => {
                let s = node.value.shape();
                let (m, n) = (s[s.len() - 2], s[s.len() - 1]);
                let back = transpose_kernel(g, m, n);
                if let Some(d) = self.acc(grads, *a) {
                    add_into(d, &back);
                }
            }
            Op::Sum(a) => {
                let gy = g[0];
                if let Some(d) = self.acc(grads, *a) {
                    for x in d.iter_mut() {
                        *x = *x + gy;
                    }
                }
            }
            Op::Mean(a) => {
                let n = self.value(*a).len();
                let gy = g[0] / F::of(n as f64);
                if let Some(d) = self.acc(grads, *a) {
                    for x in d.iter_mut() {
                        *x = *x + gy;
                    }
                }
            }
            Op::SumAxis(a, axis) => {
                let s = self.shape(*a);
                let outer: usize = s[..*axis].iter().product();
                let n = s[*axis];
                let inner: usize = s[axis + 1..].iter().product();
                if let Some(d) = self.acc(grads, *a) {
                    for o in 0..outer {
                        for j in 0..n {
                            let base = (o * n + j) * inner;
                            add_into(&mut d[base..base + inner], &g[o * inner..(o + 1) * inner]);
                        }
                    }
                }
            }
            Op::Reshape(a) => {
                if let Some(d) = self.acc(grads, *a) {
                    add_into(d, g);
                }
            }
            Op::GatherRows(a, idx) => {
                let dcols = self.value(*a).last_dim();
                if let Some(d) = self.acc(grads, *a) {
                    for (r, &i) in idx.iter().enumerate() {
                        add_into(&mut d[i * dcols..(i + 1) * dcols], &g[r * dcols..(r + 1) * dcols]);
                    }
                }
            }
        }
    }
}

#[inline]
fn add_into<F: Scalar>(dst: &mut [F], src: &[F]) {
    for (a, &b) in dst.iter_mut().zip(src) {
        *a = *a + b;
    }
}

#[inline]
pub(crate) fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

fn transpose_kernel<F: Scalar>(src: &[F], m: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); src.len()];
    for (sblk, oblk) in src.chunks(m * n).zip(out.chunks_mut(m * n)) {
        for i in 0..m {
            for j in 0..n {
                oblk[j * m + i] = sblk[i * n + j];
            }
        }
    }
    out
}

/// Row softmax on a plain tensor, shared by the tape op and value-level code.
pub fn softmax_kernel<F: Scalar>(x: &Tensor<F>, mask: Option<&[bool]>) -> Result<Tensor<F>> {
    let k = x.last_dim();
    let mut out = vec![F::zero(); x.len()];
    for (r, (orow, xrow)) in out.chunks_mut(k).zip(x.data().chunks(k)).enumerate() {
        let keep = |j: usize| mask.is_none_or(|m| m[r * k + j]);
        let mut max = F::neg_infinity();
        for (j, &v) in xrow.iter().enumerate() {
            if keep(j) && v > max {
                max = v;
            }
        }
        if max == F::neg_infinity() {
            return Err(Error::DegenerateRow { row: r });
        }
        let mut total = F::zero();
        for (j, (o, &v)) in orow.iter_mut().zip(xrow).enumerate() {
            if keep(j) {
                *o = (v - max).exp();
                total = total + *o;
            }
        }
        for o in orow.iter_mut() {
            *o = *o / total;
        }
    }
    Ok(Tensor::new(x.shape(), out).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(entries: &[(&str, &[usize], &[f64])]) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        for (n, sh, d) in entries {
            s.insert(*n, Tensor::from_f64(sh, d).unwrap());
        }
        s
    }

    #[test]
    fn softmax_examples() {
        let s = ParamStore::<f64>::new();
        let mut t = Tape::new(&s);
        let x = t.constant(Tensor::from_f64(&[1, 2], &[0.0, 0.0]).unwrap());
        let y = t.softmax_rows(x, None).unwrap();
        assert_eq!(t.value(y).data(), &[0.5, 0.5]);

        let x = t.constant(Tensor::from_f64(&[1, 2], &[core::f64::consts::LN_2, 0.0]).unwrap());
        let y = t.softmax_rows(x, None).unwrap();
        let d = t.value(y).data();
        assert!((d[0] - 2.0 / 3.0).abs() < 1e-12 && (d[1] - 1.0 / 3.0).abs() < 1e-12);

        let x = t.constant(Tensor::from_f64(&[1, 3], &[5.0, 5.0, 5.0]).unwrap());
        let y = t.softmax_rows(x, Some(&[true, true, false])).unwrap();
        assert_eq!(t.value(y).data(), &[0.5, 0.5, 0.0]);

        let err = t.softmax_rows(x, Some(&[false, false, false]));
        assert_eq!(err, Err(Error::DegenerateRow { row: 0 }));
    }

    #[test]
    fn sum_gradient_is_ones() {
        let s = store(&[("p", &[3], &[0.3, -1.0, 2.0])]);
        let mut t = Tape::new(&s);
        let p = t.param("p").unwrap();
        let l = t.sum(p);
        let g = t.backward(l).unwrap();
        assert_eq!(g["p"].data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn square_gradient_is_two_p() {
        let s = store(&[("p", &[2], &[1.0, 2.0])]);
        let mut t = Tape::new(&s);
        let p = t.param("p").unwrap();
        let sq = t.mul(p, p).unwrap();
        let l = t.sum(sq);
        assert_eq!(t.backward(l).unwrap()["p"].data(), &[2.0, 4.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        let s = store(&[("x", &[1], &[0.7])]);
        let mut t = Tape::new(&s);
        let x = t.param("x").unwrap();
        let y = t.add(x, x).unwrap();
        let l = t.sum(y);
        assert_eq!(t.backward(l).unwrap()["x"].data(), &[2.0]);
    }

    #[test]
    fn unreached_params_get_zero_gradients() {
        let s = store(&[("a", &[2], &[1.0, 1.0]), ("b", &[2, 2], &[1.0; 4])]);
        let mut t = Tape::new(&s);
        let a = t.param("a").unwrap();
        let l = t.sum(a);
        let g = t.backward(l).unwrap();
        assert_eq!(g["b"], Tensor::zeros(&[2, 2]));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let s = store(&[("a", &[2], &[1.0, 1.0])]);
        let mut t = Tape::new(&s);
        let a = t.param("a").unwrap();
        assert_eq!(t.backward(a), Err(Error::NonScalarLoss(vec![2])));
    }

    #[test]
    fn log_clamp_counts_and_stays_finite() {
        let s = store(&[("a", &[3], &[0.0, 1e-12, 0.5])]);
        let mut t = Tape::new(&s);
        let a = t.param("a").unwrap();
        let l = t.log_clamped(a, 1e-10);
        assert_eq!(t.clamped_logs(), 2);
        assert!(t.value(l).is_finite());
        let total = t.sum(l);
        let g = t.backward(total).unwrap();
        assert_eq!(g["a"].data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn shape_errors() {
        let s = store(&[("a", &[2, 3], &[0.0; 6]), ("b", &[2, 2], &[0.0; 4])]);
        let mut t = Tape::new(&s);
        let a = t.param("a").unwrap();
        let b = t.param("b").unwrap();
        assert!(matches!(t.add(a, b), Err(Error::Shape { .. })));
        assert!(matches!(t.matmul(a, b), Err(Error::Shape { .. })));
        assert!(matches!(t.add_bias(a, b), Err(Error::Shape { .. })));
        assert!(t.matmul(b, a).is_ok());
    }
}
