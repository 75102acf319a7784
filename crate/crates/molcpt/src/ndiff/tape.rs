//! The recording tape and reverse-mode backward pass.

use super::{DiffError, Tensor};

/// Handle to a value on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul(Var, Var),
    /// Elementwise with `rhs` broadcast into `lhs`'s shape.
    Add(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    ScalarMul(Var, f64),
    Relu(Var),
    /// Softmax over the last axis.
    Softmax(Var),
    /// Row gather from a rank-2 table.
    Gather(Var, Vec<usize>),
    SumAxis(Var, usize),
    SumAll(Var),
    Concat(Vec<Var>, usize),
    Transpose(Var),
    Reshape(Var),
    Log(Var),
    Exp(Var),
    Sqrt(Var),
    /// Σ x² over all entries.
    FrobSq(Var),
    StopGradient,
}

struct Node {
    value: Tensor,
    op: Op,
    requires: bool,
}

/// Gradients of one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for a variable; `None` when the variable did not require one.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient of a trainable leaf (zero tensor if unreachable from the loss).
    pub fn wrt(&self, v: Var) -> &Tensor {
        self.grads[v.0]
            .as_ref()
            .expect("variable was not marked as requiring gradients")
    }
}

/// Records primitive applications for reverse-mode differentiation.
///
/// Checked mode (the default) verifies every op output is finite and reports
/// [`DiffError::NonFinite`] otherwise; `Tape::unchecked` skips the scan.
pub struct Tape {
    nodes: Vec<Node>,
    checked: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

/// How to reduce a gradient that was broadcast from `from` up to `to`.
/// Returns None when shapes are incompatible.
fn broadcast_ok(to: &[usize], from: &[usize]) -> Option<()> {
    if from.len() > to.len() {
        return None;
    }
    let offset = to.len() - from.len();
    for (i, &f) in from.iter().enumerate() {
        if f != to[offset + i] && f != 1 {
            return None;
        }
    }
    Some(())
}

/// Sums `grad` (shaped like `to`) down to shape `from` (broadcast inverse).
fn reduce_to(grad: &Tensor, from: &[usize]) -> Tensor {
    let to = &grad.shape;
    let offset = to.len() - from.len();
    let mut out = Tensor::zeros(from);
    let strides_to = strides(to);
    let from_full: Vec<usize> = std::iter::repeat(1)
        .take(offset)
        .chain(from.iter().copied())
        .collect();
    let strides_from = strides(&from_full);
    for flat in 0..grad.numel() {
        let mut rem = flat;
        let mut from_flat = 0;
        for (d, &s) in strides_to.iter().enumerate() {
            let idx = rem / s;
            rem %= s;
            let fidx = if from_full[d] == 1 { 0 } else { idx };
            from_flat += fidx * strides_from[d];
        }
        out.data[from_flat] += grad.data[flat];
    }
    out
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Reads an element of `t` as if broadcast to `shape`.
fn broadcast_get(t: &Tensor, out_shape: &[usize], out_flat: usize) -> f64 {
    let offset = out_shape.len() - t.rank();
    let out_strides = strides(out_shape);
    let t_strides = strides(&t.shape);
    let mut rem = out_flat;
    let mut loc = 0;
    for (d, &s) in out_strides.iter().enumerate() {
        let idx = rem / s;
        rem %= s;
        if d >= offset {
            let td = d - offset;
            let tidx = if t.shape[td] == 1 { 0 } else { idx };
            loc += tidx * t_strides[td];
        }
    }
    t.data[loc]
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            nodes: Vec::new(),
            checked: true,
        }
    }

    pub fn unchecked() -> Tape {
        Tape {
            nodes: Vec::new(),
            checked: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers an input tensor; its `requires_grad` flag decides whether
    /// backward will produce a gradient for it.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        let requires = value.requires_grad;
        self.push(value, Op::Leaf, requires)
    }

    /// Registers a constant (never differentiated).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires,
        });
        Var(self.nodes.len() - 1)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires
    }

    fn finish(&mut self, value: Tensor, op: Op, requires: bool, name: &'static str) -> Result<Var, DiffError> {
        if self.checked && !value.all_finite() {
            return Err(DiffError::NonFinite { op: name });
        }
        Ok(self.push(value, op, requires))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[0] {
            return Err(DiffError::ShapeMismatch {
                op: "matmul",
                lhs: ta.shape.clone(),
                rhs: tb.shape.clone(),
            });
        }
        let (m, k) = (ta.shape[0], ta.shape[1]);
        let n = tb.shape[1];
        let mut out = Tensor::zeros(&[m, n]);
        for i in 0..m {
            for p in 0..k {
                let av = ta.data[i * k + p];
                if av == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += av * tb.data[p * n + j];
                }
            }
        }
        let req = self.requires(a) || self.requires(b);
        self.finish(out, Op::Matmul(a, b), req, "matmul")
    }

    /// Elementwise binary op with `b` broadcast into `a`'s shape.
    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, DiffError> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if broadcast_ok(&ta.shape, &tb.shape).is_none() {
            return Err(DiffError::ShapeMismatch {
                op: name,
                lhs: ta.shape.clone(),
                rhs: tb.shape.clone(),
            });
        }
        let mut out = Tensor::zeros(&ta.shape);
        for flat in 0..ta.numel() {
            out.data[flat] = f(ta.data[flat], broadcast_get(tb, &ta.shape, flat));
        }
        let req = self.requires(a) || self.requires(b);
        self.finish(out, op, req, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    /// Elementwise subtraction, recorded as `a + (−1)·b`.
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let nb = self.scalar_mul(b, -1.0)?;
        self.add(a, nb)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary(a, b, "div", |x, y| x / y, Op::Div(a, b))
    }

    pub fn scalar_mul(&mut self, a: Var, s: f64) -> Result<Var, DiffError> {
        let ta = &self.nodes[a.0].value;
        let out = Tensor::new(ta.shape.clone(), ta.data.iter().map(|v| v * s).collect());
        let req = self.requires(a);
        self.finish(out, Op::ScalarMul(a, s), req, "scalar_mul")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, DiffError> {
        let ta = &self.nodes[a.0].value;
        let out = Tensor::new(
            ta.shape.clone(),
            ta.data.iter().map(|&v| v.max(0.0)).collect(),
        );
        let req = self.requires(a);
        self.finish(out, Op::Relu(a), req, "relu")
    }

    /// Softmax over the last axis, computed with the max-shift for stability.
    pub fn softmax(&mut self, a: Var) -> Result<Var, DiffError> {
        let ta = &self.nodes[a.0].value;
        if ta.rank() == 0 {
            return Err(DiffError::BadAxis {
                op: "softmax",
                axis: 0,
                rank: 0,
            });
        }
        let cols = *ta.shape.last().unwrap();
        let rows = ta.numel() / cols;
        let mut out = Tensor::zeros(&ta.shape);
        for r in 0..rows {
            let s = &ta.data[r * cols..(r + 1) * cols];
            let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for (j, &v) in s.iter().enumerate() {
                let e = (v - max).exp();
                out.data[r * cols + j] = e;
                denom += e;
            }
            for j in 0..cols {
                out.data[r * cols + j] /= denom;
            }
        }
        let req = self.requires(a);
        self.finish(out, Op::Softmax(a), req, "softmax")
    }

    /// Gathers rows of a rank-2 table; duplicate indices are allowed and
    /// accumulate gradient.
    pub fn gather(&mut self, table: Var, indices: &[usize]) -> Result<Var, DiffError> {
        let tt = &self.nodes[table.0].value;
        if tt.rank() != 2 {
            return Err(DiffError::ShapeMismatch {
                op: "gather",
                lhs: tt.shape.clone(),
                rhs: vec![indices.len()],
            });
        }
        let (rows, cols) = tt.dims2();
        let mut out = Tensor::zeros(&[indices.len(), cols]);
        for (i, &idx) in indices.iter().enumerate() {
            if idx >= rows {
                return Err(DiffError::IndexOutOfRange {
                    op: "gather",
                    index: idx,
                    len: rows,
                });
            }
            out.data[i * cols..(i + 1) * cols].copy_from_slice(tt.row(idx));
        }
        let req = self.requires(table);
        self.finish(out, Op::Gather(table, indices.to_vec()), req, "gather")
    }

    /// Sums out one axis; the axis disappears from the shape.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var, DiffError> {
        let ta = &self.nodes[a.0].value;
        if axis >= ta.rank() {
            return Err(DiffError::BadAxis {
                op: "sum_axis",
                axis,
                rank: ta.rank(),
            });
        }
        let mut out_shape = ta.shape.clone();
        let n = out_shape.remove(axis);
        let inner: usize = ta.shape[axis + 1..].iter().product();
        let outer: usize = ta.shape[..axis].iter().product();
        let mut out = Tensor::zeros(&out_shape);
        for o in 0..outer {
            for k in 0..n {
                for i in 0..inner {
                    out.data[o * inner + i] += ta.data[(o * n + k) * inner + i];
                }
            }
        }
        let req = self.requires(a);
        self.finish(out, Op::SumAxis(a, axis), req, "sum_axis")
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var, DiffError> {
        let n = {
            let ta = &self.nodes[a.0].value;
            if axis >= ta.rank() {
                return Err(DiffError::BadAxis {
                    op: "mean_axis",
                    axis,
                    rank: ta.rank(),
                });
            }
            ta.shape[axis]
        };
        let s = self.sum_axis(a, axis)?;
        self.scalar_mul(s, 1.0 / n as f64)
    }

    /// Sum of all entries → scalar.
    pub fn sum_all(&mut self, a: Var) -> Result<Var, DiffError> {
        let ta = &self.nodes[a.0].value;
        let out = Tensor::scalar(ta.data.iter().sum());
        let req = self.requires(a);
        self.finish(out, Op::SumAll(a), req, "sum_all")
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var, DiffError> {
        let n = self.nodes[a.0].value.numel().max(1);
        let s = self.sum_all(a)?;
        self.scalar_mul(s, 1.0 / n as f64)
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, DiffError> {
        assert!(!parts.is_empty(), "concat of nothing");
        let first = self.nodes[parts[0].0].value.shape.clone();
        if axis >= first.len() {
            return Err(DiffError::BadAxis {
                op: "concat",
                axis,
                rank: first.len(),
            });
        }
        let mut total = 0;
        for p in parts {
            let s = &self.nodes[p.0].value.shape;
            if s.len() != first.len()
                || s.iter()
                    .zip(&first)
                    .enumerate()
                    .any(|(d, (x, y))| d != axis && x != y)
            {
                return Err(DiffError::ShapeMismatch {
                    op: "concat",
                    lhs: first.clone(),
                    rhs: s.clone(),
                });
            }
            total += s[axis];
        }
        let mut out_shape = first.clone();
        out_shape[axis] = total;
        let inner: usize = first[axis + 1..].iter().product();
        let outer: usize = first[..axis].iter().product();
        let mut out = Tensor::zeros(&out_shape);
        let mut offset = 0;
        for p in parts {
            let t = &self.nodes[p.0].value;
            let na = t.shape[axis];
            for o in 0..outer {
                let src = &t.data[o * na * inner..(o + 1) * na * inner];
                let dst_start = (o * total + offset) * inner;
                out.data[dst_start..dst_start + na * inner].copy_from_slice(src);
            }
            offset += na;
        }
        let req = parts.iter().any(|&p| self.requires(p));
        self.finish(out, Op::Concat(parts.to_vec(), axis), req, "concat")
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&mut self, a: Var) -> Result<Var, DiffError> {
        let ta = &self.nodes[a.0].value;
        if ta.rank() != 2 {
            return Err(DiffError::ShapeMismatch {
                op: "transpose",
                lhs: ta.shape.clone(),
                rhs: vec![],
            });
        }
        let (m, n) = ta.dims2();
        let mut out = Tensor::zeros(&[n, m]);
        for i in 0..m {
            for j in 0..n {
                out.data[j * m + i] = ta.data[i * n + j];
            }
        }
        let req = self.requires(a);
        self.finish(out, Op::Transpose(a), req, "transpose")
    }

    /// Same data, new shape; element count must match.
    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, DiffError> {
        let ta = &self.nodes[a.0].value;
        if ta.numel() != shape.iter().product::<usize>() {
            return Err(DiffError::ShapeMismatch {
                op: "reshape",
                lhs: ta.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        let out = Tensor::new(shape.to_vec(), ta.data.clone());
        let req = self.requires(a);
        self.finish(out, Op::Reshape(a), req, "reshape")
    }

    fn unary(
        &mut self,
        a: Var,
        name: &'static str,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> Result<Var, DiffError> {
        let ta = &self.nodes[a.0].value;
        let out = Tensor::new(ta.shape.clone(), ta.data.iter().map(|&v| f(v)).collect());
        let req = self.requires(a);
        self.finish(out, op, req, name)
    }

    pub fn log(&mut self, a: Var) -> Result<Var, DiffError> {
        self.unary(a, "log", f64::ln, Op::Log(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, DiffError> {
        self.unary(a, "exp", f64::exp, Op::Exp(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var, DiffError> {
        self.unary(a, "sqrt", f64::sqrt, Op::Sqrt(a))
    }

    /// Squared Frobenius norm: Σ x² → scalar.
    pub fn frob_sq(&mut self, a: Var) -> Result<Var, DiffError> {
        let ta = &self.nodes[a.0].value;
        let out = Tensor::scalar(ta.data.iter().map(|v| v * v).sum());
        let req = self.requires(a);
        self.finish(out, Op::FrobSq(a), req, "frob_sq")
    }

    /// Identity forward; gradients never flow through.
    pub fn stop_gradient(&mut self, a: Var) -> Result<Var, DiffError> {
        let out = self.nodes[a.0].value.clone();
        self.finish(out, Op::StopGradient, false, "stop_gradient")
    }

    /// Reverse-mode sweep from a scalar loss. Every trainable leaf receives a
    /// gradient; leaves unreachable from the loss get zeros.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, DiffError> {
        if !self.nodes[loss.0].value.is_scalar() {
            return Err(DiffError::NotScalar {
                shape: self.nodes[loss.0].value.shape.clone(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::new(
            self.nodes[loss.0].value.shape.clone(),
            vec![1.0],
        ));
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires {
                continue;
            }
            let grad = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(id, &grad, &mut grads);
            grads[id] = Some(grad);
        }
        // leaves that require a gradient but never received one get zeros
        for (id, node) in self.nodes.iter().enumerate() {
            if node.requires && matches!(node.op, Op::Leaf) && grads[id].is_none() {
                grads[id] = Some(Tensor::zeros(&node.value.shape));
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        match &mut grads[v.0] {
            Some(g) => {
                for (a, b) in g.data.iter_mut().zip(&delta.data) {
                    *a += b;
                }
            }
            slot => *slot = Some(delta),
        }
    }

    fn propagate(&self, id: usize, grad: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf | Op::StopGradient => {}
            Op::Matmul(a, b) => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                let (m, k) = ta.dims2();
                let n = tb.shape[1];
                if self.requires(*a) {
                    // dA = dC · Bᵀ
                    let mut da = Tensor::zeros(&[m, k]);
                    for i in 0..m {
                        for j in 0..n {
                            let g = grad.data[i * n + j];
                            if g == 0.0 {
                                continue;
                            }
                            for p in 0..k {
                                da.data[i * k + p] += g * tb.data[p * n + j];
                            }
                        }
                    }
                    Self::accumulate(grads, *a, da);
                }
                if self.requires(*b) {
                    // dB = Aᵀ · dC
                    let mut db = Tensor::zeros(&[k, n]);
                    for i in 0..m {
                        for p in 0..k {
                            let av = ta.data[i * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                db.data[p * n + j] += av * grad.data[i * n + j];
                            }
                        }
                    }
                    Self::accumulate(grads, *b, db);
                }
            }
            Op::Add(a, b) => {
                if self.requires(*a) {
                    Self::accumulate(grads, *a, grad.clone());
                }
                if self.requires(*b) {
                    let tb = &self.nodes[b.0].value;
                    Self::accumulate(grads, *b, reduce_to(grad, &tb.shape));
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                if self.requires(*a) {
                    let mut da = Tensor::zeros(&ta.shape);
                    for flat in 0..ta.numel() {
                        da.data[flat] = grad.data[flat] * broadcast_get(tb, &ta.shape, flat);
                    }
                    Self::accumulate(grads, *a, da);
                }
                if self.requires(*b) {
                    let mut full = Tensor::zeros(&ta.shape);
                    for flat in 0..ta.numel() {
                        full.data[flat] = grad.data[flat] * ta.data[flat];
                    }
                    Self::accumulate(grads, *b, reduce_to(&full, &tb.shape));
                }
            }
            Op::Div(a, b) => {
                let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                if self.requires(*a) {
                    let mut da = Tensor::zeros(&ta.shape);
                    for flat in 0..ta.numel() {
                        da.data[flat] = grad.data[flat] / broadcast_get(tb, &ta.shape, flat);
                    }
                    Self::accumulate(grads, *a, da);
                }
                if self.requires(*b) {
                    let mut full = Tensor::zeros(&ta.shape);
                    for flat in 0..ta.numel() {
                        let bv = broadcast_get(tb, &ta.shape, flat);
                        full.data[flat] = -grad.data[flat] * ta.data[flat] / (bv * bv);
                    }
                    Self::accumulate(grads, *b, reduce_to(&full, &tb.shape));
                }
            }
            Op::ScalarMul(a, s) => {
                if self.requires(*a) {
                    let da = Tensor::new(
                        grad.shape.clone(),
                        grad.data.iter().map(|g| g * s).collect(),
                    );
                    Self::accumulate(grads, *a, da);
                }
            }
            Op::Relu(a) => {
                if self.requires(*a) {
                    let ta = &self.nodes[a.0].value;
                    let da = Tensor::new(
                        ta.shape.clone(),
                        ta.data
                            .iter()
                            .zip(&grad.data)
                            .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                            .collect(),
                    );
                    Self::accumulate(grads, *a, da);
                }
            }
            Op::Softmax(a) => {
                if self.requires(*a) {
                    let y = &node.value;
                    let cols = *y.shape.last().unwrap();
                    let rows = y.numel() / cols;
                    let mut da = Tensor::zeros(&y.shape);
                    for r in 0..rows {
                        let ys = &y.data[r * cols..(r + 1) * cols];
                        let gs = &grad.data[r * cols..(r + 1) * cols];
                        let dot: f64 = ys.iter().zip(gs).map(|(y, g)| y * g).sum();
                        for j in 0..cols {
                            da.data[r * cols + j] = ys[j] * (gs[j] - dot);
                        }
                    }
                    Self::accumulate(grads, *a, da);
                }
            }
            Op::Gather(table, indices) => {
                if self.requires(*table) {
                    let tt = &self.nodes[table.0].value;
                    let (_, cols) = tt.dims2();
                    let mut dt = Tensor::zeros(&tt.shape);
                    for (i, &idx) in indices.iter().enumerate() {
                        for c in 0..cols {
                            dt.data[idx * cols + c] += grad.data[i * cols + c];
                        }
                    }
                    Self::accumulate(grads, *table, dt);
                }
            }
            Op::SumAxis(a, axis) => {
                if self.requires(*a) {
                    let ta = &self.nodes[a.0].value;
                    let n = ta.shape[*axis];
                    let inner: usize = ta.shape[axis + 1..].iter().product();
                    let outer: usize = ta.shape[..*axis].iter().product();
                    let mut da = Tensor::zeros(&ta.shape);
                    for o in 0..outer {
                        for k in 0..n {
                            for i in 0..inner {
                                da.data[(o * n + k) * inner + i] = grad.data[o * inner + i];
                            }
                        }
                    }
                    Self::accumulate(grads, *a, da);
                }
            }
            Op::SumAll(a) => {
                if self.requires(*a) {
                    let ta = &self.nodes[a.0].value;
                    let g = grad.item();
                    Self::accumulate(
                        grads,
                        *a,
                        Tensor::new(ta.shape.clone(), vec![g; ta.numel()]),
                    );
                }
            }
            Op::Concat(parts, axis) => {
                let total = node.value.shape[*axis];
                let inner: usize = node.value.shape[axis + 1..].iter().product();
                let outer: usize = node.value.shape[..*axis].iter().product();
                let mut offset = 0;
                for p in parts {
                    let t = &self.nodes[p.0].value;
                    let na = t.shape[*axis];
                    if self.requires(*p) {
                        let mut dp = Tensor::zeros(&t.shape);
                        for o in 0..outer {
                            let src_start = (o * total + offset) * inner;
                            dp.data[o * na * inner..(o + 1) * na * inner]
                                .copy_from_slice(&grad.data[src_start..src_start + na * inner]);
                        }
                        Self::accumulate(grads, *p, dp);
                    }
                    offset += na;
                }
            }
            Op::Transpose(a) => {
                if self.requires(*a) {
                    let (n, m) = node.value.dims2();
                    let mut da = Tensor::zeros(&[m, n]);
                    for i in 0..n {
                        for j in 0..m {
                            da.data[j * n + i] = grad.data[i * m + j];
                        }
                    }
                    Self::accumulate(grads, *a, da);
                }
            }
            Op::Reshape(a) => {
                if self.requires(*a) {
                    let ta = &self.nodes[a.0].value;
                    let da = Tensor::new(ta.shape.clone(), grad.data.clone());
                    Self::accumulate(grads, *a, da);
                }
            }
            Op::Log(a) => {
                if self.requires(*a) {
                    let ta = &self.nodes[a.0].value;
                    let da = Tensor::new(
                        ta.shape.clone(),
                        ta.data
                            .iter()
                            .zip(&grad.data)
                            .map(|(&x, &g)| g / x)
                            .collect(),
                    );
                    Self::accumulate(grads, *a, da);
                }
            }
            Op::Exp(a) => {
                if self.requires(*a) {
                    let da = Tensor::new(
                        node.value.shape.clone(),
                        node.value
                            .data
                            .iter()
                            .zip(&grad.data)
                            .map(|(&y, &g)| g * y)
                            .collect(),
                    );
                    Self::accumulate(grads, *a, da);
                }
            }
            Op::Sqrt(a) => {
                if self.requires(*a) {
                    let da = Tensor::new(
                        node.value.shape.clone(),
                        node.value
                            .data
                            .iter()
                            .zip(&grad.data)
                            .map(|(&y, &g)| g * 0.5 / y)
                            .collect(),
                    );
                    Self::accumulate(grads, *a, da);
                }
            }
            Op::FrobSq(a) => {
                if self.requires(*a) {
                    let ta = &self.nodes[a.0].value;
                    let g = grad.item();
                    let da = Tensor::new(
                        ta.shape.clone(),
                        ta.data.iter().map(|&x| 2.0 * x * g).collect(),
                    );
                    Self::accumulate(grads, *a, da);
                }
            }
        }
    }
}

/// Max relative error between analytic gradients and central differences:
/// max over coordinates of `|analytic − numeric| / max(1e-8, |analytic| + |numeric|)`.
///
/// `f` rebuilds the computation from scratch on the given tape, so it is
/// called once for the analytic pass and twice per coordinate for the
/// differences.
pub fn grad_check(
    f: &mut dyn FnMut(&mut Tape, Var) -> Result<Var, DiffError>,
    x: &Tensor,
    h: f64,
) -> Result<f64, DiffError> {
    // analytic gradient
    let mut tape = Tape::new();
    let leaf = tape.leaf(x.clone().requiring_grad());
    let loss = f(&mut tape, leaf)?;
    let grads = tape.backward(loss)?;
    let analytic = grads.wrt(leaf).clone();

    let mut evaluate = |probe: &Tensor| -> Result<f64, DiffError> {
        let mut tape = Tape::new();
        let leaf = tape.leaf(probe.clone());
        let loss = f(&mut tape, leaf)?;
        Ok(tape.value(loss).item())
    };

    let mut worst = 0.0f64;
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data[i] += h;
        let mut minus = x.clone();
        minus.data[i] -= h;
        let numeric = (evaluate(&plus)? - evaluate(&minus)?) / (2.0 * h);
        let a = analytic.data[i];
        let err = (a - numeric).abs() / f64::max(1e-8, a.abs() + numeric.abs());
        worst = worst.max(err);
    }
    Ok(worst)
}
