//! Reverse-mode differentiation tape.
//!
//! Every operation appends a node holding its value and the inputs needed to
//! propagate gradients. [`Tape::backward`] walks the nodes in reverse.

use std::sync::Arc;

use crate::diff::sparse::SparseRows;
use crate::diff::tensor::{matmul_into, Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, T),
    AddRow(Var, Var),
    MatMul(Var, Var),
    Concat(Vec<Var>),
    Sparse(Var, Arc<SparseRows<T>>),
    Abs(Var),
    Maximum(Var, Var),
    LeakyRelu(Var, T),
    Tanh(Var),
    GroupNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        group: usize,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Sum(Var),
    Mean(Var),
    RowNorm(Var),
    RowSqNorm(Var),
    RowDot(Var, Var),
    Cross(Var, Var),
    NormalizeRows(Var),
    Reshape(Var),
    EdgeStencil(Var, Arc<Vec<[usize; 4]>>),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Gradients produced by one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Grads<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Grads<T> {
    /// Gradient for `v`, or `None` when `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

/// A single-threaded computation record.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

fn slot<'a, T: Real>(nodes: &[Node<T>], grads: &'a mut [Option<Vec<T>>], v: Var) -> Option<&'a mut Vec<T>> {
    let n = &nodes[v.0];
    if !n.needs_grad {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n.value.len()]))
}

fn sign<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A differentiable input.
    pub fn var(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A constant input; no gradient flows to it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn binary_same(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch(op, va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary_same("add", a, b, |x, y| x + y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary_same("sub", a, b, |x, y| x - y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Sub(a, b), ng))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary_same("mul", a, b, |x, y| x * y)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Mul(a, b), ng))
    }

    /// Elementwise maximum; ties send the gradient to `a`.
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary_same("maximum", a, b, |x, y| if x >= y { x } else { y })?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Maximum(a, b), ng))
    }

    /// `scale * x + shift`.
    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Var {
        let t = self.value(x).map(|v| scale * v + shift);
        let ng = self.ng(x);
        self.push(t, Op::Affine(x, scale), ng)
    }

    pub fn scale(&mut self, x: Var, s: T) -> Var {
        self.affine(x, s, T::zero())
    }

    /// Adds a length-`c` vector to every row of an `[n, c]` matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (vx, vb) = (self.value(x), self.value(bias));
        let c = vx.cols();
        if vb.len() != c {
            return Err(mismatch("add_row", vx.shape(), vb.shape()));
        }
        let mut data = vx.data().to_vec();
        for row in data.chunks_exact_mut(c.max(1)) {
            for (o, &b) in row.iter_mut().zip(vb.data()) {
                *o = *o + b;
            }
        }
        let t = Tensor::new(vx.shape().to_vec(), data)?;
        let ng = self.ng(x) || self.ng(bias);
        Ok(self.push(t, Op::AddRow(x, bias), ng))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape().len() != 2 || vb.shape().len() != 2 || va.shape()[1] != vb.shape()[0] {
            return Err(mismatch("matmul", va.shape(), vb.shape()));
        }
        let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
        let mut out = vec![T::zero(); m * n];
        matmul_into(va.data(), (m, k), false, vb.data(), (k, n), false, T::zero(), &mut out);
        let t = Tensor::new(vec![m, n], out)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::MatMul(a, b), ng))
    }

    /// Concatenates `[n, c_i]` matrices along columns.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let n = self.value(parts[0]).rows();
        for &p in parts {
            if self.value(p).rows() != n {
                return Err(mismatch(
                    "concat_cols",
                    self.value(parts[0]).shape(),
                    self.value(p).shape(),
                ));
            }
        }
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut data = vec![T::zero(); n * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for r in 0..n {
                data[r * total + off..r * total + off + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            off += w;
        }
        let ng = parts.iter().any(|&p| self.ng(p));
        let t = Tensor::new(vec![n, total], data)?;
        Ok(self.push(t, Op::Concat(parts.to_vec()), ng))
    }

    /// Applies a sparse row map to an `[cols, c]` matrix.
    pub fn sparse(&mut self, x: Var, map: Arc<SparseRows<T>>) -> Result<Var> {
        let vx = self.value(x);
        if vx.rows() != map.cols() {
            return Err(mismatch("sparse", &[map.rows(), map.cols()], vx.shape()));
        }
        let w = vx.cols();
        let data = map.apply(vx.data(), w);
        let mut shape = vx.shape().to_vec();
        shape[0] = map.rows();
        let t = Tensor::new(shape, data)?;
        let ng = self.ng(x);
        Ok(self.push(t, Op::Sparse(x, map), ng))
    }

    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let map = SparseRows::gather(index, self.value(x).rows())?;
        self.sparse(x, Arc::new(map))
    }

    pub fn scatter_mean_rows(&mut self, x: Var, target: &[usize], rows: usize) -> Result<Var> {
        if target.len() != self.value(x).rows() {
            return Err(mismatch("scatter_mean_rows", &[target.len()], self.value(x).shape()));
        }
        let map = SparseRows::scatter_mean(target, rows)?;
        self.sparse(x, Arc::new(map))
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let t = self.value(x).map(f);
        let ng = self.ng(x);
        self.push(t, op, ng)
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.abs(), Op::Abs(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Var {
        self.unary(
            x,
            move |v| if v > T::zero() { v } else { slope * v },
            Op::LeakyRelu(x, slope),
        )
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.tanh(), Op::Tanh(x))
    }

    /// Group normalization over an `[n, c]` matrix: channels are split into
    /// consecutive groups of `group` channels, each normalized over all rows,
    /// then scaled and shifted per channel.
    pub fn group_norm(&mut self, x: Var, gamma: Var, beta: Var, group: usize) -> Result<Var> {
        let vx = self.value(x);
        let (n, c) = (vx.rows(), vx.cols());
        if group == 0 || c % group != 0 {
            return Err(mismatch("group_norm", vx.shape(), &[group]));
        }
        if self.value(gamma).len() != c || self.value(beta).len() != c {
            return Err(mismatch("group_norm", vx.shape(), self.value(gamma).shape()));
        }
        let groups = c / group;
        let eps = T::of(1e-5);
        let count = T::of((n * group) as f64);
        let xd = vx.data();
        let mut xhat = vec![T::zero(); n * c];
        let mut inv_std = vec![T::zero(); groups];
        for g in 0..groups {
            let cols = g * group..(g + 1) * group;
            let mut mean = T::zero();
            for r in 0..n {
                for j in cols.clone() {
                    mean = mean + xd[r * c + j];
                }
            }
            mean = mean / count;
            let mut var = T::zero();
            for r in 0..n {
                for j in cols.clone() {
                    let d = xd[r * c + j] - mean;
                    var = var + d * d;
                }
            }
            var = var / count;
            let inv = T::one() / (var + eps).sqrt();
            inv_std[g] = inv;
            for r in 0..n {
                for j in cols.clone() {
                    xhat[r * c + j] = (xd[r * c + j] - mean) * inv;
                }
            }
        }
        let (gd, bd) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = vec![T::zero(); n * c];
        for r in 0..n {
            for j in 0..c {
                out[r * c + j] = gd[j] * xhat[r * c + j] + bd[j];
            }
        }
        let t = Tensor::new(vx.shape().to_vec(), out)?;
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        Ok(self.push(
            t,
            Op::GroupNorm {
                x,
                gamma,
                beta,
                group,
                xhat,
                inv_std,
            },
            ng,
        ))
    }

    /// Sum of all entries, shape `[1]`.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().fold(T::zero(), |a, &b| a + b);
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    /// Mean of all entries, shape `[1]`.
    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.data().iter().fold(T::zero(), |a, &b| a + b) / T::of(v.len().max(1) as f64);
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Mean(x), ng)
    }

    fn row_reduce(&mut self, x: Var, f: impl Fn(&[T]) -> T, op: Op<T>) -> Var {
        let v = self.value(x);
        let (n, c) = (v.rows(), v.cols());
        let data = (0..n).map(|r| f(&v.data()[r * c..(r + 1) * c])).collect();
        let ng = self.ng(x);
        self.push(Tensor::new(vec![n, 1], data).expect("row reduce shape"), op, ng)
    }

    /// Euclidean norm of each row, `[n, c] -> [n, 1]`.
    pub fn row_norm(&mut self, x: Var) -> Var {
        self.row_reduce(
            x,
            |r| r.iter().fold(T::zero(), |a, &b| a + b * b).sqrt(),
            Op::RowNorm(x),
        )
    }

    /// Squared Euclidean norm of each row.
    pub fn row_sq_norm(&mut self, x: Var) -> Var {
        self.row_reduce(x, |r| r.iter().fold(T::zero(), |a, &b| a + b * b), Op::RowSqNorm(x))
    }

    /// Row-wise dot product of two `[n, c]` matrices.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch("row_dot", va.shape(), vb.shape()));
        }
        let (n, c) = (va.rows(), va.cols());
        let data = (0..n)
            .map(|r| {
                let s = r * c..(r + 1) * c;
                va.data()[s.clone()]
                    .iter()
                    .zip(&vb.data()[s])
                    .fold(T::zero(), |acc, (&x, &y)| acc + x * y)
            })
            .collect();
        let t = Tensor::new(vec![n, 1], data)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::RowDot(a, b), ng))
    }

    /// Row-wise cross product of two `[n, 3]` matrices.
    pub fn cross_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() || va.cols() != 3 {
            return Err(mismatch("cross_rows", va.shape(), vb.shape()));
        }
        let mut data = Vec::with_capacity(va.len());
        for (p, q) in va.data().chunks_exact(3).zip(vb.data().chunks_exact(3)) {
            data.push(p[1] * q[2] - p[2] * q[1]);
            data.push(p[2] * q[0] - p[0] * q[2]);
            data.push(p[0] * q[1] - p[1] * q[0]);
        }
        let t = Tensor::new(va.shape().to_vec(), data)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Cross(a, b), ng))
    }

    /// Scales each row to unit length. Zero rows stay zero.
    pub fn normalize_rows(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let c = v.cols();
        let mut data = v.data().to_vec();
        for row in data.chunks_exact_mut(c.max(1)) {
            let n = row.iter().fold(T::zero(), |a, &b| a + b * b).sqrt();
            if n > T::zero() {
                for x in row.iter_mut() {
                    *x = *x / n;
                }
            }
        }
        let ng = self.ng(x);
        let t = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        self.push(t, Op::NormalizeRows(x), ng)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let v = self.value(x);
        if shape.iter().product::<usize>() != v.len() {
            return Err(mismatch("reshape", v.shape(), &shape));
        }
        let t = v.clone().with_shape(shape);
        let ng = self.ng(x);
        Ok(self.push(t, Op::Reshape(x), ng))
    }

    /// Symmetric edge stencil: for each edge `e` with neighbors `(a, b, c, d)`,
    /// emits `[x_e, |x_a - x_c|, x_a + x_c, |x_b - x_d|, x_b + x_d]`.
    pub fn edge_stencil(&mut self, x: Var, neighbors: Arc<Vec<[usize; 4]>>) -> Result<Var> {
        let v = self.value(x);
        let (n, c) = (v.rows(), v.cols());
        if neighbors.len() != n {
            return Err(mismatch("edge_stencil", v.shape(), &[neighbors.len(), 4]));
        }
        let xd = v.data();
        let w = 5 * c;
        let mut out = vec![T::zero(); n * w];
        for (e, nb) in neighbors.iter().enumerate() {
            let o = &mut out[e * w..(e + 1) * w];
            let row = |i: usize| &xd[i * c..(i + 1) * c];
            let (xe, xa, xb, xc, xd_) = (row(e), row(nb[0]), row(nb[1]), row(nb[2]), row(nb[3]));
            for j in 0..c {
                o[j] = xe[j];
                o[c + j] = (xa[j] - xc[j]).abs();
                o[2 * c + j] = xa[j] + xc[j];
                o[3 * c + j] = (xb[j] - xd_[j]).abs();
                o[4 * c + j] = xb[j] + xd_[j];
            }
        }
        let t = Tensor::new(vec![n, w], out)?;
        let ng = self.ng(x);
        Ok(self.push(t, Op::EdgeStencil(x, neighbors), ng))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Grads<T>> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }

        Ok(Grads {
            grads: grads
                .into_iter()
                .zip(&self.nodes)
                .map(|(g, n)| g.map(|d| Tensor::new(n.value.shape().to_vec(), d).expect("grad shape")))
                .collect(),
        })
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for (v, s) in [(*a, T::one()), (*b, T::one())] {
                    if let Some(ga) = slot(&self.nodes, grads, v) {
                        for (o, &x) in ga.iter_mut().zip(g) {
                            *o = *o + s * x;
                        }
                    }
                }
            }
            Op::Sub(a, b) => {
                for (v, s) in [(*a, T::one()), (*b, -T::one())] {
                    if let Some(ga) = slot(&self.nodes, grads, v) {
                        for (o, &x) in ga.iter_mut().zip(g) {
                            *o = *o + s * x;
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    for ((o, &x), &y) in ga.iter_mut().zip(g).zip(vb) {
                        *o = *o + x * y;
                    }
                }
                if let Some(gb) = slot(&self.nodes, grads, *b) {
                    for ((o, &x), &y) in gb.iter_mut().zip(g).zip(va) {
                        *o = *o + x * y;
                    }
                }
            }
            Op::Maximum(a, b) => {
                let (va, vb) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    for (k, o) in ga.iter_mut().enumerate() {
                        if va[k] >= vb[k] {
                            *o = *o + g[k];
                        }
                    }
                }
                if let Some(gb) = slot(&self.nodes, grads, *b) {
                    for (k, o) in gb.iter_mut().enumerate() {
                        if va[k] < vb[k] {
                            *o = *o + g[k];
                        }
                    }
                }
            }
            Op::Affine(x, s) => {
                if let Some(gx) = slot(&self.nodes, grads, *x) {
                    for (o, &v) in gx.iter_mut().zip(g) {
                        *o = *o + *s * v;
                    }
                }
            }
            Op::AddRow(x, b) => {
                let c = self.nodes[b.0].value.len();
                if let Some(gx) = slot(&self.nodes, grads, *x) {
                    for (o, &v) in gx.iter_mut().zip(g) {
                        *o = *o + v;
                    }
                }
                if let Some(gb) = slot(&self.nodes, grads, *b) {
                    for row in g.chunks_exact(c.max(1)) {
                        for (o, &v) in gb.iter_mut().zip(row) {
                            *o = *o + v;
                        }
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    matmul_into(g, (m, n), false, vb.data(), (k, n), true, T::one(), ga);
                }
                if let Some(gb) = slot(&self.nodes, grads, *b) {
                    matmul_into(va.data(), (m, k), true, g, (m, n), false, T::one(), gb);
                }
            }
            Op::Concat(parts) => {
                let n = node.value.rows();
                let total = node.value.cols();
                let mut off = 0;
                for &p in parts {
                    let w = self.nodes[p.0].value.cols();
                    if let Some(gp) = slot(&self.nodes, grads, p) {
                        for r in 0..n {
                            for j in 0..w {
                                gp[r * w + j] = gp[r * w + j] + g[r * total + off + j];
                            }
                        }
                    }
                    off += w;
                }
            }
            Op::Sparse(x, map) => {
                let w = self.nodes[x.0].value.cols();
                if let Some(gx) = slot(&self.nodes, grads, *x) {
                    map.apply_transpose_acc(g, w, gx);
                }
            }
            Op::Abs(x) => {
                let vx = self.nodes[x.0].value.data();
                if let Some(gx) = slot(&self.nodes, grads, *x) {
                    for ((o, &d), &v) in gx.iter_mut().zip(g).zip(vx) {
                        *o = *o + d * sign(v);
                    }
                }
            }
            Op::LeakyRelu(x, slope) => {
                let vx = self.nodes[x.0].value.data();
                if let Some(gx) = slot(&self.nodes, grads, *x) {
                    for ((o, &d), &v) in gx.iter_mut().zip(g).zip(vx) {
                        *o = *o + if v > T::zero() { d } else { *slope * d };
                    }
                }
            }
            Op::Tanh(x) => {
                let y = node.value.data();
                if let Some(gx) = slot(&self.nodes, grads, *x) {
                    for ((o, &d), &t) in gx.iter_mut().zip(g).zip(y) {
                        *o = *o + d * (T::one() - t * t);
                    }
                }
            }
            Op::GroupNorm {
                x,
                gamma,
                beta,
                group,
                xhat,
                inv_std,
            } => {
                let (n, c) = (node.value.rows(), node.value.cols());
                let gd = self.nodes[gamma.0].value.data();
                if let Some(gb) = slot(&self.nodes, grads, *beta) {
                    for r in 0..n {
                        for j in 0..c {
                            gb[j] = gb[j] + g[r * c + j];
                        }
                    }
                }
                if let Some(gg) = slot(&self.nodes, grads, *gamma) {
                    for r in 0..n {
                        for j in 0..c {
                            gg[j] = gg[j] + g[r * c + j] * xhat[r * c + j];
                        }
                    }
                }
                if let Some(gx) = slot(&self.nodes, grads, *x) {
                    let count = T::of((n * group) as f64);
                    for (gi, &inv) in inv_std.iter().enumerate() {
                        let cols = gi * group..(gi + 1) * group;
                        let mut s1 = T::zero();
                        let mut s2 = T::zero();
                        for r in 0..n {
                            for j in cols.clone() {
                                let dxh = g[r * c + j] * gd[j];
                                s1 = s1 + dxh;
                                s2 = s2 + dxh * xhat[r * c + j];
                            }
                        }
                        for r in 0..n {
                            for j in cols.clone() {
                                let k = r * c + j;
                                let dxh = g[k] * gd[j];
                                gx[k] = gx[k] + inv / count * (count * dxh - s1 - xhat[k] * s2);
                            }
                        }
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = slot(&self.nodes, grads, *x) {
                    for o in gx.iter_mut() {
                        *o = *o + g[0];
                    }
                }
            }
            Op::Mean(x) => {
                let n = T::of(self.nodes[x.0].value.len().max(1) as f64);
                if let Some(gx) = slot(&self.nodes, grads, *x) {
                    let d = g[0] / n;
                    for o in gx.iter_mut() {
                        *o = *o + d;
                    }
                }
            }
            Op::RowNorm(x) => {
                let vx = self.nodes[x.0].value.data();
                let c = self.nodes[x.0].value.cols();
                let y = node.value.data();
                if let Some(gx) = slot(&self.nodes, grads, *x) {
                    for (r, (&d, &nrm)) in g.iter().zip(y).enumerate() {
                        if nrm > T::zero() {
                            for j in 0..c {
                                gx[r * c + j] = gx[r * c + j] + d * vx[r * c + j] / nrm;
                            }
                        }
                    }
                }
            }
            Op::RowSqNorm(x) => {
                let vx = self.nodes[x.0].value.data();
                let c = self.nodes[x.0].value.cols();
                if let Some(gx) = slot(&self.nodes, grads, *x) {
                    let two = T::of(2.0);
                    for (r, &d) in g.iter().enumerate() {
                        for j in 0..c {
                            gx[r * c + j] = gx[r * c + j] + two * d * vx[r * c + j];
                        }
                    }
                }
            }
            Op::RowDot(a, b) => {
                let (va, vb) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
                let c = self.nodes[a.0].value.cols();
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    for (r, &d) in g.iter().enumerate() {
                        for j in 0..c {
                            ga[r * c + j] = ga[r * c + j] + d * vb[r * c + j];
                        }
                    }
                }
                if let Some(gb) = slot(&self.nodes, grads, *b) {
                    for (r, &d) in g.iter().enumerate() {
                        for j in 0..c {
                            gb[r * c + j] = gb[r * c + j] + d * va[r * c + j];
                        }
                    }
                }
            }
            Op::Cross(a, b) => {
                // d(p x q) = dp x q + p x dq; adjoints are q x g and g x p.
                let (va, vb) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
                let cross = |p: &[T], q: &[T]| {
                    [
                        p[1] * q[2] - p[2] * q[1],
                        p[2] * q[0] - p[0] * q[2],
                        p[0] * q[1] - p[1] * q[0],
                    ]
                };
                if let Some(ga) = slot(&self.nodes, grads, *a) {
                    for (r, gr) in g.chunks_exact(3).enumerate() {
                        let d = cross(&vb[r * 3..r * 3 + 3], gr);
                        for j in 0..3 {
                            ga[r * 3 + j] = ga[r * 3 + j] + d[j];
                        }
                    }
                }
                if let Some(gb) = slot(&self.nodes, grads, *b) {
                    for (r, gr) in g.chunks_exact(3).enumerate() {
                        let d = cross(gr, &va[r * 3..r * 3 + 3]);
                        for j in 0..3 {
                            gb[r * 3 + j] = gb[r * 3 + j] + d[j];
                        }
                    }
                }
            }
            Op::NormalizeRows(x) => {
                let vx = self.nodes[x.0].value.data();
                let c = self.nodes[x.0].value.cols();
                let y = node.value.data();
                if let Some(gx) = slot(&self.nodes, grads, *x) {
                    for r in 0..node.value.rows() {
                        let s = r * c..(r + 1) * c;
                        let n = vx[s.clone()].iter().fold(T::zero(), |a, &b| a + b * b).sqrt();
                        if n == T::zero() {
                            continue;
                        }
                        let dot = g[s.clone()]
                            .iter()
                            .zip(&y[s.clone()])
                            .fold(T::zero(), |a, (&p, &q)| a + p * q);
                        for k in s {
                            gx[k] = gx[k] + (g[k] - y[k] * dot) / n;
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(gx) = slot(&self.nodes, grads, *x) {
                    for (o, &v) in gx.iter_mut().zip(g) {
                        *o = *o + v;
                    }
                }
            }
            Op::EdgeStencil(x, neighbors) => {
                let vx = self.nodes[x.0].value.data();
                let c = self.nodes[x.0].value.cols();
                let w = 5 * c;
                if let Some(gx) = slot(&self.nodes, grads, *x) {
                    for (e, nb) in neighbors.iter().enumerate() {
                        let go = &g[e * w..(e + 1) * w];
                        for j in 0..c {
                            gx[e * c + j] = gx[e * c + j] + go[j];
                            for (pair, base) in [((nb[0], nb[2]), c), ((nb[1], nb[3]), 3 * c)] {
                                let (p, q) = pair;
                                let s = sign(vx[p * c + j] - vx[q * c + j]) * go[base + j];
                                let sum = go[base + c + j];
                                gx[p * c + j] = gx[p * c + j] + s + sum;
                                gx[q * c + j] = gx[q * c + j] - s + sum;
                            }
                        }
                    }
                }
            }
        }
    }
}
