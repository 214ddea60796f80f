//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Each op appends a node holding its output value and whatever it needs for
//! the backward pass. [`Tape::backward`] walks the tape in reverse and returns
//! gradients for every node that depends on a leaf created with
//! [`Tape::leaf`].

use super::loss;
use super::tensor::{matmul_into, softmax_row_in_place, Scalar, Tensor};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul { a: Var, b: Var },
    BatchMatMul { a: Var, b: Var, trans_b: bool },
    Add { a: Var, b: Var },
    AddBias { x: Var, bias: Var },
    AddPositions { x: Var, table: Var },
    Scale { x: Var, factor: T },
    Gelu { x: Var },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, rstd: Vec<T> },
    Softmax { x: Var },
    MaskedSoftmax { x: Var },
    SplitHeads { x: Var, heads: usize },
    MergeHeads { x: Var, heads: usize },
    Gather { table: Var, ids: Vec<usize> },
    MeanPool { x: Var, mask: Vec<T>, counts: Vec<T> },
    ClsPool { x: Var },
    Mse { a: Var, b: Var },
    KlDiv { teacher: Var, student: Var, temperature: T, pt: Vec<T>, ps: Vec<T> },
    CrossEntropy { logits: Var, targets: Vec<usize>, weights: Vec<T>, probs: Vec<T> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Grads<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Grads<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

pub fn gelu<T: Scalar>(x: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::lit(3.0) * a * x * x)
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable input (parameter or gradient-checked point).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.item()
    }

    /// `a[.., k] · b[k, n]`; leading axes of `a` are treated as rows.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if bv.shape().len() != 2 || av.last_dim() != bv.shape()[0] || av.shape().is_empty() {
            return Err(Error::ShapeMismatch(av.shape().to_vec(), bv.shape().to_vec()));
        }
        let k = av.last_dim();
        let n = bv.shape()[1];
        let m = av.len() / k.max(1);
        let mut out_shape = av.shape().to_vec();
        *out_shape.last_mut().unwrap() = n;
        let mut out = Tensor::zeros(&out_shape);
        matmul_into(av.data(), bv.data(), out.data_mut(), m, k, n, false, false, false);
        Ok(self.push(out, Op::MatMul { a, b }, &[a, b]))
    }

    /// Batched `[g, m, k] · [g, k, n]`, or `[g, m, k] · [g, n, k]ᵀ` when
    /// `trans_b` is set.
    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let bad = || Error::ShapeMismatch(av.shape().to_vec(), bv.shape().to_vec());
        if av.shape().len() != 3 || bv.shape().len() != 3 || av.shape()[0] != bv.shape()[0] {
            return Err(bad());
        }
        let (g, m, k) = (av.shape()[0], av.shape()[1], av.shape()[2]);
        let (bk, n) = if trans_b {
            (bv.shape()[2], bv.shape()[1])
        } else {
            (bv.shape()[1], bv.shape()[2])
        };
        if bk != k {
            return Err(bad());
        }
        let mut out = Tensor::zeros(&[g, m, n]);
        for i in 0..g {
            matmul_into(
                &av.data()[i * m * k..(i + 1) * m * k],
                &bv.data()[i * k * n..(i + 1) * k * n],
                &mut out.data_mut()[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
                false,
                trans_b,
                false,
            );
        }
        Ok(self.push(out, Op::BatchMatMul { a, b, trans_b }, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        av.ensure_same_shape(bv)?;
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Add { a, b }, &[a, b]))
    }

    /// Adds a `[n]` bias to every row of `x[.., n]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.shape().len() != 1 || bv.len() != xv.last_dim() {
            return Err(Error::ShapeMismatch(xv.shape().to_vec(), bv.shape().to_vec()));
        }
        let mut out = xv.clone();
        let n = bv.len();
        for row in out.data_mut().chunks_mut(n) {
            for (o, &b) in row.iter_mut().zip(bv.data()) {
                *o = *o + b;
            }
        }
        Ok(self.push(out, Op::AddBias { x, bias }, &[x, bias]))
    }

    /// Adds rows `0..s` of a `[p, h]` table to each sequence of `x[b, s, h]`.
    pub fn add_positions(&mut self, x: Var, table: Var) -> Result<Var> {
        let (xv, tv) = (self.value(x), self.value(table));
        if xv.shape().len() != 3 || tv.shape().len() != 2 || xv.shape()[2] != tv.shape()[1] {
            return Err(Error::ShapeMismatch(xv.shape().to_vec(), tv.shape().to_vec()));
        }
        let (s, h) = (xv.shape()[1], xv.shape()[2]);
        if s > tv.shape()[0] {
            return Err(Error::SequenceTooLong {
                len: s,
                max: tv.shape()[0],
            });
        }
        let mut out = xv.clone();
        for seq in out.data_mut().chunks_mut(s * h) {
            for (o, &p) in seq.iter_mut().zip(&tv.data()[..s * h]) {
                *o = *o + p;
            }
        }
        Ok(self.push(out, Op::AddPositions { x, table }, &[x, table]))
    }

    pub fn scale(&mut self, x: Var, factor: T) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| v * factor).collect();
        let out = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        self.push(out, Op::Scale { x, factor }, &[x])
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| gelu(v)).collect();
        let out = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        self.push(out, Op::Gelu { x }, &[x])
    }

    /// Layer normalization over the last axis followed by `gamma`/`beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let xv = self.value(x);
        let n = xv.last_dim();
        let (gv, bv) = (self.value(gamma), self.value(beta));
        if gv.len() != n || bv.len() != n {
            return Err(Error::ShapeMismatch(xv.shape().to_vec(), gv.shape().to_vec()));
        }
        let rows = xv.len() / n;
        let nf = T::from_usize(n).unwrap();
        let mut xhat = vec![T::zero(); xv.len()];
        let mut rstd = Vec::with_capacity(rows);
        let mut out = Tensor::zeros(xv.shape());
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let rs = T::one() / (var + eps).sqrt();
            rstd.push(rs);
            let xh = &mut xhat[r * n..(r + 1) * n];
            let o = &mut out.data_mut()[r * n..(r + 1) * n];
            for j in 0..n {
                xh[j] = (row[j] - mean) * rs;
                o[j] = xh[j] * gv.data()[j] + bv.data()[j];
            }
        }
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            &[x, gamma, beta],
        ))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if !xv.all_finite() {
            return Err(Error::NonFinite);
        }
        let n = xv.last_dim();
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(n) {
            softmax_row_in_place(row);
        }
        Ok(self.push(out, Op::Softmax { x }, &[x]))
    }

    /// Attention softmax over scores `[batch·heads, q, k]`; keys whose
    /// `key_mask[batch, k]` is false receive an additive −∞.
    pub fn masked_softmax(&mut self, x: Var, heads: usize, key_mask: Vec<bool>) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape().len() != 3 || heads == 0 || xv.shape()[0] % heads != 0 {
            return Err(Error::ShapeMismatch(xv.shape().to_vec(), vec![heads]));
        }
        let (g, q, k) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        if key_mask.len() != (g / heads) * k {
            return Err(Error::LengthMismatch(key_mask.len(), (g / heads) * k));
        }
        let mut out = xv.clone();
        for (gi, block) in out.data_mut().chunks_mut(q * k).enumerate() {
            let mask = &key_mask[(gi / heads) * k..(gi / heads + 1) * k];
            if !mask.iter().any(|&m| m) {
                return Err(Error::EmptySequence);
            }
            for row in block.chunks_mut(k) {
                for (v, &keep) in row.iter_mut().zip(mask) {
                    if !keep {
                        *v = T::neg_infinity();
                    }
                }
                softmax_row_in_place(row);
            }
        }
        Ok(self.push(out, Op::MaskedSoftmax { x }, &[x]))
    }

    /// `[b, s, heads·d] → [b·heads, s, d]`.
    pub fn split_heads(&mut self, x: Var, heads: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape().len() != 3 || heads == 0 || xv.shape()[2] % heads != 0 {
            return Err(Error::ShapeMismatch(xv.shape().to_vec(), vec![heads]));
        }
        let (b, s, h) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let d = h / heads;
        let mut out = Tensor::zeros(&[b * heads, s, d]);
        permute_heads(xv.data(), out.data_mut(), b, s, heads, d, true);
        Ok(self.push(out, Op::SplitHeads { x, heads }, &[x]))
    }

    /// `[b·heads, s, d] → [b, s, heads·d]`.
    pub fn merge_heads(&mut self, x: Var, heads: usize) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape().len() != 3 || heads == 0 || xv.shape()[0] % heads != 0 {
            return Err(Error::ShapeMismatch(xv.shape().to_vec(), vec![heads]));
        }
        let (g, s, d) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let b = g / heads;
        let mut out = Tensor::zeros(&[b, s, heads * d]);
        permute_heads(xv.data(), out.data_mut(), b, s, heads, d, false);
        Ok(self.push(out, Op::MergeHeads { x, heads }, &[x]))
    }

    /// Row lookup into a `[v, h]` table; output shape is `out_shape + [h]`.
    pub fn gather(&mut self, table: Var, ids: &[usize], out_shape: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        if tv.shape().len() != 2 {
            return Err(Error::ShapeMismatch(tv.shape().to_vec(), vec![2]));
        }
        let (v, h) = (tv.shape()[0], tv.shape()[1]);
        if out_shape.iter().product::<usize>() != ids.len() {
            return Err(Error::LengthMismatch(ids.len(), out_shape.iter().product()));
        }
        let mut data = Vec::with_capacity(ids.len() * h);
        for &id in ids {
            if id >= v {
                return Err(Error::IndexOutOfRange { index: id, len: v });
            }
            data.extend_from_slice(tv.row(id));
        }
        let mut shape = out_shape.to_vec();
        shape.push(h);
        let out = Tensor::new(shape, data)?;
        Ok(self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        ))
    }

    /// Mask-weighted mean over the sequence axis of `x[b, s, h]`.
    pub fn mean_pool(&mut self, x: Var, mask: &[u8]) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape().len() != 3 {
            return Err(Error::ShapeMismatch(xv.shape().to_vec(), vec![3]));
        }
        let (b, s, h) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        if mask.len() != b * s {
            return Err(Error::LengthMismatch(mask.len(), b * s));
        }
        let mask: Vec<T> = mask.iter().map(|&m| if m != 0 { T::one() } else { T::zero() }).collect();
        let mut counts = Vec::with_capacity(b);
        let mut out = Tensor::zeros(&[b, h]);
        for bi in 0..b {
            let m = &mask[bi * s..(bi + 1) * s];
            let count: T = m.iter().copied().sum();
            if count == T::zero() {
                return Err(Error::EmptySequence);
            }
            counts.push(count);
            let o = &mut out.data_mut()[bi * h..(bi + 1) * h];
            for (si, &w) in m.iter().enumerate() {
                if w != T::zero() {
                    let row = &xv.data()[(bi * s + si) * h..(bi * s + si + 1) * h];
                    for (acc, &v) in o.iter_mut().zip(row) {
                        *acc = *acc + w * v;
                    }
                }
            }
            for acc in o.iter_mut() {
                *acc = *acc / count;
            }
        }
        Ok(self.push(out, Op::MeanPool { x, mask, counts }, &[x]))
    }

    /// Position-0 vector of each sequence in `x[b, s, h]`.
    pub fn cls_pool(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        if xv.shape().len() != 3 || xv.shape()[1] == 0 {
            return Err(Error::ShapeMismatch(xv.shape().to_vec(), vec![3]));
        }
        let (b, s, h) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let mut data = Vec::with_capacity(b * h);
        for bi in 0..b {
            data.extend_from_slice(&xv.data()[bi * s * h..bi * s * h + h]);
        }
        let out = Tensor::new(vec![b, h], data)?;
        Ok(self.push(out, Op::ClsPool { x }, &[x]))
    }

    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        let l = loss::mse(self.value(a), self.value(b))?;
        Ok(self.push(Tensor::scalar(l), Op::Mse { a, b }, &[a, b]))
    }

    pub fn kl_div(&mut self, teacher: Var, student: Var, temperature: T) -> Result<Var> {
        let (l, pt, ps) = loss::kl_forward(self.value(teacher), self.value(student), temperature)?;
        Ok(self.push(
            Tensor::scalar(l),
            Op::KlDiv {
                teacher,
                student,
                temperature,
                pt,
                ps,
            },
            &[teacher, student],
        ))
    }

    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], weights: &[T]) -> Result<Var> {
        let (l, probs) = loss::ce_forward(self.value(logits), targets, weights)?;
        Ok(self.push(
            Tensor::scalar(l),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                weights: weights.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    /// Reverse sweep from a scalar output.
    pub fn backward(&self, output: Var) -> Grads<T> {
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let out_len = self.nodes[output.0].value.len();
        grads[output.0] = Some(vec![T::one(); out_len]);

        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Grads { grads }
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut [T]> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        let len = node.value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); len]).as_mut_slice())
    }

    fn backward_node(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let k = av.last_dim();
                let n = bv.shape()[1];
                let m = av.len() / k.max(1);
                if let Some(ga) = self.acc(grads, *a) {
                    matmul_into(g, bv.data(), ga, m, n, k, false, true, true);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    matmul_into(av.data(), g, gb, k, m, n, true, false, true);
                }
            }
            Op::BatchMatMul { a, b, trans_b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (gn, m, k) = (av.shape()[0], av.shape()[1], av.shape()[2]);
                let n = node.value.shape()[2];
                if let Some(ga) = self.acc(grads, *a) {
                    for i in 0..gn {
                        // dA = dC · Bᵀ, or dC · B when B is stored transposed
                        matmul_into(
                            &g[i * m * n..(i + 1) * m * n],
                            &bv.data()[i * k * n..(i + 1) * k * n],
                            &mut ga[i * m * k..(i + 1) * m * k],
                            m,
                            n,
                            k,
                            false,
                            !*trans_b,
                            true,
                        );
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for i in 0..gn {
                        let a_blk = &av.data()[i * m * k..(i + 1) * m * k];
                        let g_blk = &g[i * m * n..(i + 1) * m * n];
                        let gb_blk = &mut gb[i * k * n..(i + 1) * k * n];
                        if *trans_b {
                            // stored [n, k]: dB = dCᵀ · A
                            matmul_into(g_blk, a_blk, gb_blk, n, m, k, true, false, true);
                        } else {
                            matmul_into(a_blk, g_blk, gb_blk, k, m, n, true, false, true);
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if let Some(gv) = self.acc(grads, v) {
                        add_assign(gv, g);
                    }
                }
            }
            Op::AddBias { x, bias } => {
                if let Some(gx) = self.acc(grads, *x) {
                    add_assign(gx, g);
                }
                if let Some(gb) = self.acc(grads, *bias) {
                    let n = gb.len();
                    for row in g.chunks(n) {
                        add_assign(gb, row);
                    }
                }
            }
            Op::AddPositions { x, table } => {
                if let Some(gx) = self.acc(grads, *x) {
                    add_assign(gx, g);
                }
                let shape = node.value.shape();
                let sh = shape[1] * shape[2];
                if let Some(gt) = self.acc(grads, *table) {
                    for seq in g.chunks(sh) {
                        add_assign(&mut gt[..sh], seq);
                    }
                }
            }
            Op::Scale { x, factor } => {
                if let Some(gx) = self.acc(grads, *x) {
                    for (o, &d) in gx.iter_mut().zip(g) {
                        *o = *o + d * *factor;
                    }
                }
            }
            Op::Gelu { x } => {
                let xv = self.value(*x).data();
                if let Some(gx) = self.acc(grads, *x) {
                    for ((o, &d), &v) in gx.iter_mut().zip(g).zip(xv) {
                        *o = *o + d * gelu_grad(v);
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let gv = self.value(*gamma).data().to_vec();
                let n = gv.len();
                let nf = T::from_usize(n).unwrap();
                if let Some(gg) = self.acc(grads, *gamma) {
                    for (grow, xrow) in g.chunks(n).zip(xhat.chunks(n)) {
                        for j in 0..n {
                            gg[j] = gg[j] + grow[j] * xrow[j];
                        }
                    }
                }
                if let Some(gb) = self.acc(grads, *beta) {
                    for grow in g.chunks(n) {
                        add_assign(gb, grow);
                    }
                }
                if let Some(gx) = self.acc(grads, *x) {
                    let mut dxhat = vec![T::zero(); n];
                    for (r, (grow, xrow)) in g.chunks(n).zip(xhat.chunks(n)).enumerate() {
                        let mut s1 = T::zero();
                        let mut s2 = T::zero();
                        for j in 0..n {
                            dxhat[j] = grow[j] * gv[j];
                            s1 = s1 + dxhat[j];
                            s2 = s2 + dxhat[j] * xrow[j];
                        }
                        let scale = rstd[r] / nf;
                        let out = &mut gx[r * n..(r + 1) * n];
                        for j in 0..n {
                            out[j] = out[j] + scale * (nf * dxhat[j] - s1 - xrow[j] * s2);
                        }
                    }
                }
            }
            Op::Softmax { x } | Op::MaskedSoftmax { x } => {
                let y = node.value.data();
                let n = node.value.last_dim();
                if let Some(gx) = self.acc(grads, *x) {
                    for ((yrow, grow), out) in y.chunks(n).zip(g.chunks(n)).zip(gx.chunks_mut(n)) {
                        let dot: T = yrow.iter().zip(grow).map(|(&a, &b)| a * b).sum();
                        for j in 0..n {
                            out[j] = out[j] + yrow[j] * (grow[j] - dot);
                        }
                    }
                }
            }
            Op::SplitHeads { x, heads } => {
                let shape = self.value(*x).shape();
                let (b, s, h) = (shape[0], shape[1], shape[2]);
                if let Some(gx) = self.acc(grads, *x) {
                    let mut tmp = vec![T::zero(); gx.len()];
                    permute_heads(g, &mut tmp, b, s, *heads, h / heads, false);
                    add_assign(gx, &tmp);
                }
            }
            Op::MergeHeads { x, heads } => {
                let shape = node.value.shape();
                let (b, s, h) = (shape[0], shape[1], shape[2]);
                if let Some(gx) = self.acc(grads, *x) {
                    let mut tmp = vec![T::zero(); gx.len()];
                    permute_heads(g, &mut tmp, b, s, *heads, h / heads, true);
                    add_assign(gx, &tmp);
                }
            }
            Op::Gather { table, ids } => {
                let h = node.value.last_dim();
                if let Some(gt) = self.acc(grads, *table) {
                    for (&id, grow) in ids.iter().zip(g.chunks(h)) {
                        add_assign(&mut gt[id * h..(id + 1) * h], grow);
                    }
                }
            }
            Op::MeanPool { x, mask, counts } => {
                let shape = self.value(*x).shape();
                let (b, s, h) = (shape[0], shape[1], shape[2]);
                if let Some(gx) = self.acc(grads, *x) {
                    for bi in 0..b {
                        let grow = &g[bi * h..(bi + 1) * h];
                        for si in 0..s {
                            let w = mask[bi * s + si];
                            if w == T::zero() {
                                continue;
                            }
                            let w = w / counts[bi];
                            let out = &mut gx[(bi * s + si) * h..(bi * s + si + 1) * h];
                            for (o, &d) in out.iter_mut().zip(grow) {
                                *o = *o + w * d;
                            }
                        }
                    }
                }
            }
            Op::ClsPool { x } => {
                let shape = self.value(*x).shape();
                let (b, s, h) = (shape[0], shape[1], shape[2]);
                if let Some(gx) = self.acc(grads, *x) {
                    for bi in 0..b {
                        add_assign(&mut gx[bi * s * h..bi * s * h + h], &g[bi * h..(bi + 1) * h]);
                    }
                }
            }
            Op::Mse { a, b } => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let scale = g[0] * T::lit(2.0) / T::from_usize(av.len().max(1)).unwrap();
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, &x), &y) in ga.iter_mut().zip(av.data()).zip(bv.data()) {
                        *o = *o + scale * (x - y);
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for ((o, &x), &y) in gb.iter_mut().zip(av.data()).zip(bv.data()) {
                        *o = *o + scale * (y - x);
                    }
                }
            }
            Op::KlDiv {
                teacher,
                student,
                temperature,
                pt,
                ps,
            } => {
                let cols = self.value(*student).last_dim();
                let rows = pt.len() / cols.max(1);
                let t = *temperature;
                // d/dz_s = T/rows · (p_s − p_t)
                let base = g[0] * t / T::from_usize(rows.max(1)).unwrap();
                if let Some(gs) = self.acc(grads, *student) {
                    for ((o, &p), &q) in gs.iter_mut().zip(ps).zip(pt) {
                        *o = *o + base * (p - q);
                    }
                }
                if let Some(gt) = self.acc(grads, *teacher) {
                    for r in 0..rows {
                        let (prow, qrow) = (&pt[r * cols..(r + 1) * cols], &ps[r * cols..(r + 1) * cols]);
                        let logs: Vec<T> = prow
                            .iter()
                            .zip(qrow)
                            .map(|(&p, &q)| if p > T::zero() { p.ln() - q.ln() } else { T::zero() })
                            .collect();
                        let kl: T = prow.iter().zip(&logs).map(|(&p, &l)| p * l).sum();
                        for j in 0..cols {
                            let o = &mut gt[r * cols + j];
                            *o = *o + base * prow[j] * (logs[j] - kl);
                        }
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                weights,
                probs,
            } => {
                let cols = self.value(*logits).last_dim();
                let wsum: T = weights.iter().copied().sum();
                if let Some(gl) = self.acc(grads, *logits) {
                    for (r, (&y, &w)) in targets.iter().zip(weights).enumerate() {
                        let s = g[0] * w / wsum;
                        for j in 0..cols {
                            let ind = if j == y { T::one() } else { T::zero() };
                            let o = &mut gl[r * cols + j];
                            *o = *o + s * (probs[r * cols + j] - ind);
                        }
                    }
                }
            }
        }
    }
}

fn add_assign<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + s;
    }
}

/// Moves between `[b, s, heads·d]` and `[b·heads, s, d]` layouts.
fn permute_heads<T: Scalar>(
    src: &[T],
    dst: &mut [T],
    b: usize,
    s: usize,
    heads: usize,
    d: usize,
    split: bool,
) {
    for bi in 0..b {
        for si in 0..s {
            for hi in 0..heads {
                let merged = (bi * s + si) * heads * d + hi * d;
                let split_idx = ((bi * heads + hi) * s + si) * d;
                let (from, to) = if split { (merged, split_idx) } else { (split_idx, merged) };
                dst[to..to + d].copy_from_slice(&src[from..from + d]);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_f64(&[1, 1], &[3.0]).unwrap());
        let zero = tape.constant(Tensor::zeros(&[1, 1]));
        // mse(x, 0) over one element is x²
        let y = tape.mse(x, zero).unwrap();
        assert_eq!(tape.scalar(y), 9.0);
        let g = tape.backward(y);
        assert_eq!(g.get(x).unwrap(), &[6.0]);
        assert!(g.get(zero).is_none());
    }

    #[test]
    fn split_merge_roundtrip() {
        let mut tape = Tape::<f32>::new();
        let data: Vec<f64> = (0..24).map(|i| i as f64).collect();
        let x = tape.leaf(Tensor::from_f64(&[2, 3, 4], &data).unwrap());
        let s = tape.split_heads(x, 2).unwrap();
        assert_eq!(tape.value(s).shape(), &[4, 3, 2]);
        // head 1 of batch 0, position 1 holds x[0,1,2..4]
        assert_eq!(tape.value(s).row(4), &[6.0, 7.0]);
        let m = tape.merge_heads(s, 2).unwrap();
        assert_eq!(tape.value(m), tape.value(x));
    }

    #[test]
    fn masked_softmax_zeroes_masked_keys() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::from_f64(&[1, 1, 3], &[1.0, 2.0, 3.0]).unwrap());
        let y = tape.masked_softmax(x, 1, vec![true, true, false]).unwrap();
        let v = tape.value(y).data();
        assert_eq!(v[2], 0.0);
        assert!((v[0] + v[1] - 1.0).abs() < 1e-15);
        assert!(tape.masked_softmax(x, 1, vec![false; 3]).is_err());
    }

    #[test]
    fn mean_pool_rejects_empty_row() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros(&[1, 2, 2]));
        assert!(matches!(tape.mean_pool(x, &[0, 0]), Err(Error::EmptySequence)));
    }

    #[test]
    fn gather_out_of_range() {
        let mut tape = Tape::<f32>::new();
        let t = tape.leaf(Tensor::zeros(&[3, 2]));
        assert!(tape.gather(t, &[0, 3], &[1, 2]).is_err());
    }
}
