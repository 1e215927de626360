use std::sync::Arc;

use super::kernels::{gelu, gelu_grad, matmul_acc, matmul_at_acc, matmul_bt_acc};
use super::tensor::Tensor;
use crate::error::{LmptError, Result};
use crate::scalar::Scalar;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<S> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, S),
    Relu(Var),
    Gelu(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<S>, inv_std: Vec<S> },
    Softmax(Var),
    GroupedSoftmax { x: Var, segments: Arc<[usize]>, groups: usize },
    GatherRows { x: Var, index: Arc<[usize]> },
    SegmentSum { x: Var, segments: Arc<[usize]> },
    SegmentMean { x: Var, segments: Arc<[usize]>, counts: Vec<usize> },
    SegmentMax { x: Var, argmax: Vec<usize> },
    Concat(Var, Var),
    AddBias(Var, Var),
    CrossEntropy { logits: Var, targets: Vec<Option<usize>>, probs: Vec<S>, labeled: usize },
    Transpose(Var),
    SliceCols { x: Var, start: usize },
    Sum(Var),
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    needs_grad: bool,
}

/// Eager reverse-mode graph. Every op appends one node; node order is a
/// topological order, so backward walks the node list in reverse.
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<S> {
    grads: Vec<Option<Vec<S>>>,
    shapes: Vec<Vec<usize>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient of `v`; zero when `v` is not on a path to the loss.
    pub fn get(&self, v: Var) -> Tensor<S> {
        let shape = self.shapes[v.0].clone();
        match &self.grads[v.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient matches value shape"),
            None => Tensor::zeros(shape),
        }
    }

    /// Raw gradient buffer, `None` when no gradient reached `v`.
    pub fn raw(&self, v: Var) -> Option<&[S]> {
        self.grads[v.0].as_deref()
    }
}

fn rows_cols<S: Scalar>(t: &Tensor<S>, what: &str) -> Result<(usize, usize)> {
    t.dims2().map_err(|e| LmptError::Shape(format!("{what}: {e}")))
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn leaf(&mut self, value: Tensor<S>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: Tensor<S>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = rows_cols(self.value(a), "matmul lhs")?;
        let (k2, m) = rows_cols(self.value(b), "matmul rhs")?;
        if k != k2 {
            return Err(LmptError::Shape(format!("matmul inner dims {k} vs {k2}")));
        }
        let mut out = vec![S::zero(); n * m];
        matmul_acc(self.value(a).data(), self.value(b).data(), &mut out, n, k, m);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(vec![n, m], out)?, Op::MatMul(a, b), ng))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(LmptError::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, what: &str, f: impl Fn(S, S) -> S, op: Op<S>) -> Result<Var> {
        self.same_shape(a, b, what)?;
        let va = self.value(a);
        let data = va.data().iter().zip(self.value(b).data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(va.shape().to_vec(), data)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(t, op, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, a: Var, f: impl Fn(S) -> S, op: Op<S>) -> Var {
        let va = self.value(a);
        let t = Tensor::new(va.shape().to_vec(), va.data().iter().map(|&x| f(x)).collect()).expect("same shape");
        let ng = self.needs(a);
        self.push(t, op, ng)
    }

    pub fn scale(&mut self, a: Var, s: S) -> Var {
        self.map(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| if x > S::zero() { x } else { S::zero() }, Op::Relu(a))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        self.map(a, gelu, Op::Gelu(a))
    }

    fn check_vector(&self, v: Var, len: usize, what: &str) -> Result<()> {
        if self.value(v).shape() != [len] {
            return Err(LmptError::Shape(format!("{what}: expected [{len}], got {:?}", self.value(v).shape())));
        }
        Ok(())
    }

    /// Per-row normalization over the last axis with learnable gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (r, c) = rows_cols(self.value(x), "layer_norm")?;
        self.check_vector(gain, c, "layer_norm gain")?;
        self.check_vector(bias, c, "layer_norm bias")?;
        let eps = S::lit(LAYER_NORM_EPS);
        let inv_c = S::one() / S::of_usize(c);
        let xs = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut xhat = vec![S::zero(); r * c];
        let mut inv_std = vec![S::zero(); r];
        let mut out = vec![S::zero(); r * c];
        for i in 0..r {
            let row = &xs[i * c..(i + 1) * c];
            let mean = row.iter().copied().sum::<S>() * inv_c;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() * inv_c;
            let is = S::one() / (var + eps).sqrt();
            inv_std[i] = is;
            for j in 0..c {
                let h = (row[j] - mean) * is;
                xhat[i * c + j] = h;
                out[i * c + j] = h * g[j] + b[j];
            }
        }
        let ng = self.needs(x) || self.needs(gain) || self.needs(bias);
        Ok(self.push(Tensor::new(vec![r, c], out)?, Op::LayerNorm { x, gain, bias, xhat, inv_std }, ng))
    }

    /// Softmax over the last axis of a matrix.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let (r, c) = rows_cols(self.value(x), "softmax")?;
        let xs = self.value(x).data();
        let mut out = vec![S::zero(); r * c];
        for i in 0..r {
            let row = &xs[i * c..(i + 1) * c];
            let m = row.iter().copied().fold(S::neg_infinity(), S::max);
            let mut total = S::zero();
            for j in 0..c {
                let e = (row[j] - m).exp();
                out[i * c + j] = e;
                total += e;
            }
            for o in &mut out[i * c..(i + 1) * c] {
                *o /= total;
            }
        }
        let ng = self.needs(x);
        Ok(self.push(Tensor::new(vec![r, c], out)?, Op::Softmax(x), ng))
    }

    fn check_segments(&self, rows: usize, segments: &[usize], groups: usize, what: &str) -> Result<()> {
        if segments.len() != rows {
            return Err(LmptError::Shape(format!("{what}: {} segment ids for {rows} rows", segments.len())));
        }
        if let Some(&bad) = segments.iter().find(|&&s| s >= groups) {
            return Err(LmptError::Index(format!("{what}: segment {bad} out of range {groups}")));
        }
        Ok(())
    }

    /// Softmax taken per column over the rows sharing a segment id.
    pub fn grouped_softmax(&mut self, x: Var, segments: Arc<[usize]>, groups: usize) -> Result<Var> {
        let (r, c) = rows_cols(self.value(x), "grouped_softmax")?;
        self.check_segments(r, &segments, groups, "grouped_softmax")?;
        let xs = self.value(x).data();
        let mut maxes = vec![S::neg_infinity(); groups * c];
        for (i, &s) in segments.iter().enumerate() {
            for j in 0..c {
                let m = &mut maxes[s * c + j];
                *m = m.max(xs[i * c + j]);
            }
        }
        let mut out = vec![S::zero(); r * c];
        let mut totals = vec![S::zero(); groups * c];
        for (i, &s) in segments.iter().enumerate() {
            for j in 0..c {
                let e = (xs[i * c + j] - maxes[s * c + j]).exp();
                out[i * c + j] = e;
                totals[s * c + j] += e;
            }
        }
        for (i, &s) in segments.iter().enumerate() {
            for j in 0..c {
                out[i * c + j] /= totals[s * c + j];
            }
        }
        let ng = self.needs(x);
        Ok(self.push(Tensor::new(vec![r, c], out)?, Op::GroupedSoftmax { x, segments, groups }, ng))
    }

    /// Row `i` of the output is row `index[i]` of `x`.
    pub fn gather_rows(&mut self, x: Var, index: Arc<[usize]>) -> Result<Var> {
        let (r, c) = rows_cols(self.value(x), "gather_rows")?;
        if let Some(&bad) = index.iter().find(|&&i| i >= r) {
            return Err(LmptError::Index(format!("gather_rows: row {bad} out of range {r}")));
        }
        let xs = self.value(x).data();
        let mut out = Vec::with_capacity(index.len() * c);
        for &i in index.iter() {
            out.extend_from_slice(&xs[i * c..(i + 1) * c]);
        }
        let ng = self.needs(x);
        Ok(self.push(Tensor::new(vec![index.len(), c], out)?, Op::GatherRows { x, index }, ng))
    }

    pub fn segment_sum(&mut self, x: Var, segments: Arc<[usize]>, groups: usize) -> Result<Var> {
        let (r, c) = rows_cols(self.value(x), "segment_sum")?;
        self.check_segments(r, &segments, groups, "segment_sum")?;
        let out = segment_accumulate(self.value(x).data(), &segments, groups, c);
        let ng = self.needs(x);
        Ok(self.push(Tensor::new(vec![groups, c], out)?, Op::SegmentSum { x, segments }, ng))
    }

    /// Mean per segment; empty segments produce zeros.
    pub fn segment_mean(&mut self, x: Var, segments: Arc<[usize]>, groups: usize) -> Result<Var> {
        let (r, c) = rows_cols(self.value(x), "segment_mean")?;
        self.check_segments(r, &segments, groups, "segment_mean")?;
        let mut out = segment_accumulate(self.value(x).data(), &segments, groups, c);
        let mut counts = vec![0usize; groups];
        for &s in segments.iter() {
            counts[s] += 1;
        }
        for (g, &n) in counts.iter().enumerate() {
            if n > 0 {
                let inv = S::one() / S::of_usize(n);
                for v in &mut out[g * c..(g + 1) * c] {
                    *v *= inv;
                }
            }
        }
        let ng = self.needs(x);
        Ok(self.push(Tensor::new(vec![groups, c], out)?, Op::SegmentMean { x, segments, counts }, ng))
    }

    /// Max per segment and column. The gradient flows to the first row
    /// attaining the max; empty segments produce zeros.
    pub fn segment_max(&mut self, x: Var, segments: Arc<[usize]>, groups: usize) -> Result<Var> {
        let (r, c) = rows_cols(self.value(x), "segment_max")?;
        self.check_segments(r, &segments, groups, "segment_max")?;
        let xs = self.value(x).data();
        let mut argmax = vec![usize::MAX; groups * c];
        for (i, &s) in segments.iter().enumerate() {
            for j in 0..c {
                let a = &mut argmax[s * c + j];
                if *a == usize::MAX || xs[i * c + j] > xs[*a * c + j] {
                    *a = i;
                }
            }
        }
        let out = argmax
            .iter()
            .enumerate()
            .map(|(slot, &a)| if a == usize::MAX { S::zero() } else { xs[a * c + slot % c] })
            .collect();
        let ng = self.needs(x);
        Ok(self.push(Tensor::new(vec![groups, c], out)?, Op::SegmentMax { x, argmax }, ng))
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, ca) = rows_cols(self.value(a), "concat lhs")?;
        let (rb, cb) = rows_cols(self.value(b), "concat rhs")?;
        if r != rb {
            return Err(LmptError::Shape(format!("concat rows {r} vs {rb}")));
        }
        let (xa, xb) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(r * (ca + cb));
        for i in 0..r {
            out.extend_from_slice(&xa[i * ca..(i + 1) * ca]);
            out.extend_from_slice(&xb[i * cb..(i + 1) * cb]);
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(vec![r, ca + cb], out)?, Op::Concat(a, b), ng))
    }

    /// Adds a length-C bias to every row of an R×C matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (r, c) = rows_cols(self.value(x), "add_bias")?;
        self.check_vector(bias, c, "add_bias bias")?;
        let b = self.value(bias).data();
        let mut out = self.value(x).data().to_vec();
        for i in 0..r {
            for (o, &bv) in out[i * c..(i + 1) * c].iter_mut().zip(b) {
                *o += bv;
            }
        }
        let ng = self.needs(x) || self.needs(bias);
        Ok(self.push(Tensor::new(vec![r, c], out)?, Op::AddBias(x, bias), ng))
    }

    /// Mean over labeled rows of `-log softmax(row)[target]`. Rows with a
    /// `None` target are ignored; with no labeled rows the loss is 0.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var> {
        let (r, c) = rows_cols(self.value(logits), "cross_entropy")?;
        if targets.len() != r {
            return Err(LmptError::Shape(format!("cross_entropy: {} targets for {r} rows", targets.len())));
        }
        if let Some(bad) = targets.iter().flatten().find(|&&t| t >= c) {
            return Err(LmptError::Index(format!("cross_entropy: target {bad} out of range {c}")));
        }
        let xs = self.value(logits).data();
        let mut probs = vec![S::zero(); r * c];
        let mut total = S::zero();
        let mut labeled = 0usize;
        for (i, t) in targets.iter().enumerate() {
            let Some(t) = *t else { continue };
            labeled += 1;
            let row = &xs[i * c..(i + 1) * c];
            let m = row.iter().copied().fold(S::neg_infinity(), S::max);
            let mut z = S::zero();
            for j in 0..c {
                let e = (row[j] - m).exp();
                probs[i * c + j] = e;
                z += e;
            }
            for p in &mut probs[i * c..(i + 1) * c] {
                *p /= z;
            }
            total += m + z.ln() - row[t];
        }
        let loss = if labeled > 0 { total / S::of_usize(labeled) } else { S::zero() };
        let ng = self.needs(logits);
        let op = Op::CrossEntropy { logits, targets: targets.to_vec(), probs, labeled };
        Ok(self.push(Tensor::scalar(loss), op, ng))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (r, c) = rows_cols(self.value(x), "transpose")?;
        let xs = self.value(x).data();
        let mut out = vec![S::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = xs[i * c + j];
            }
        }
        let ng = self.needs(x);
        Ok(self.push(Tensor::new(vec![c, r], out)?, Op::Transpose(x), ng))
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = rows_cols(self.value(x), "slice_cols")?;
        if start + len > c {
            return Err(LmptError::Index(format!("slice_cols {start}..{} out of {c}", start + len)));
        }
        let xs = self.value(x).data();
        let mut out = Vec::with_capacity(r * len);
        for i in 0..r {
            out.extend_from_slice(&xs[i * c + start..i * c + start + len]);
        }
        let ng = self.needs(x);
        Ok(self.push(Tensor::new(vec![r, len], out)?, Op::SliceCols { x, start }, ng))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().copied().sum();
        let ng = self.needs(x);
        self.push(Tensor::scalar(total), Op::Sum(x), ng)
    }

    /// Reverse pass from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(LmptError::Shape(format!("backward needs a scalar loss, got shape {:?}", lv.shape())));
        }
        if !lv.all_finite() {
            return Err(LmptError::Numerical(format!("non-finite loss {}", lv.item())));
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![S::one()]);
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if !n.needs_grad {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads, shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect() })
    }

    fn acc<'a>(&self, grads: &'a mut [Option<Vec<S>>], v: Var) -> Option<&'a mut Vec<S>> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(vec![S::zero(); self.nodes[v.0].value.numel()]);
        }
        slot.as_mut()
    }

    fn propagate(&self, idx: usize, g: &[S], grads: &mut [Option<Vec<S>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (n, k) = self.value(*a).dims2().expect("checked");
                let m = self.value(*b).dims2().expect("checked").1;
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = self.acc(grads, *a) {
                    matmul_bt_acc(g, vb, ga, n, k, m);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    matmul_at_acc(va, g, gb, n, k, m);
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(gv) = self.acc(grads, v) {
                        add_into(gv, g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(ga) = self.acc(grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for (o, &x) in gb.iter_mut().zip(g) {
                        *o -= x;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, &x), &y) in ga.iter_mut().zip(g).zip(vb) {
                        *o += x * y;
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for ((o, &x), &y) in gb.iter_mut().zip(g).zip(va) {
                        *o += x * y;
                    }
                }
            }
            Op::Scale(a, s) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for (o, &x) in ga.iter_mut().zip(g) {
                        *o += x * *s;
                    }
                }
            }
            Op::Relu(a) => {
                let va = self.value(*a).data();
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, &x), &inp) in ga.iter_mut().zip(g).zip(va) {
                        if inp > S::zero() {
                            *o += x;
                        }
                    }
                }
            }
            Op::Gelu(a) => {
                let va = self.value(*a).data();
                if let Some(ga) = self.acc(grads, *a) {
                    for ((o, &x), &inp) in ga.iter_mut().zip(g).zip(va) {
                        *o += x * gelu_grad(inp);
                    }
                }
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let (r, c) = self.value(*x).dims2().expect("checked");
                let gv = self.value(*gain).data();
                if let Some(gg) = self.acc(grads, *gain) {
                    for i in 0..r {
                        for j in 0..c {
                            gg[j] += g[i * c + j] * xhat[i * c + j];
                        }
                    }
                }
                if let Some(gb) = self.acc(grads, *bias) {
                    for i in 0..r {
                        for j in 0..c {
                            gb[j] += g[i * c + j];
                        }
                    }
                }
                if let Some(gx) = self.acc(grads, *x) {
                    let inv_c = S::one() / S::of_usize(c);
                    for i in 0..r {
                        let mut mean_d = S::zero();
                        let mut mean_dx = S::zero();
                        for j in 0..c {
                            let d = g[i * c + j] * gv[j];
                            mean_d += d;
                            mean_dx += d * xhat[i * c + j];
                        }
                        mean_d *= inv_c;
                        mean_dx *= inv_c;
                        for j in 0..c {
                            let d = g[i * c + j] * gv[j];
                            gx[i * c + j] += inv_std[i] * (d - mean_d - xhat[i * c + j] * mean_dx);
                        }
                    }
                }
            }
            Op::Softmax(x) => {
                let (r, c) = node.value.dims2().expect("checked");
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..r {
                        let dot: S = (0..c).map(|j| out[i * c + j] * g[i * c + j]).sum();
                        for j in 0..c {
                            gx[i * c + j] += out[i * c + j] * (g[i * c + j] - dot);
                        }
                    }
                }
            }
            Op::GroupedSoftmax { x, segments, groups } => {
                let c = node.value.dims2().expect("checked").1;
                if let Some(gx) = self.acc(grads, *x) {
                    let mut dots = vec![S::zero(); groups * c];
                    for (i, &s) in segments.iter().enumerate() {
                        for j in 0..c {
                            dots[s * c + j] += out[i * c + j] * g[i * c + j];
                        }
                    }
                    for (i, &s) in segments.iter().enumerate() {
                        for j in 0..c {
                            gx[i * c + j] += out[i * c + j] * (g[i * c + j] - dots[s * c + j]);
                        }
                    }
                }
            }
            Op::GatherRows { x, index } => {
                let c = node.value.dims2().expect("checked").1;
                if let Some(gx) = self.acc(grads, *x) {
                    for (row, &src) in index.iter().enumerate() {
                        add_into(&mut gx[src * c..(src + 1) * c], &g[row * c..(row + 1) * c]);
                    }
                }
            }
            Op::SegmentSum { x, segments } => {
                let c = node.value.dims2().expect("checked").1;
                if let Some(gx) = self.acc(grads, *x) {
                    for (i, &s) in segments.iter().enumerate() {
                        add_into(&mut gx[i * c..(i + 1) * c], &g[s * c..(s + 1) * c]);
                    }
                }
            }
            Op::SegmentMean { x, segments, counts } => {
                let c = node.value.dims2().expect("checked").1;
                if let Some(gx) = self.acc(grads, *x) {
                    for (i, &s) in segments.iter().enumerate() {
                        let inv = S::one() / S::of_usize(counts[s]);
                        for j in 0..c {
                            gx[i * c + j] += g[s * c + j] * inv;
                        }
                    }
                }
            }
            Op::SegmentMax { x, argmax } => {
                let c = node.value.dims2().expect("checked").1;
                if let Some(gx) = self.acc(grads, *x) {
                    for (slot, &a) in argmax.iter().enumerate() {
                        if a != usize::MAX {
                            gx[a * c + slot % c] += g[slot];
                        }
                    }
                }
            }
            Op::Concat(a, b) => {
                let ca = self.value(*a).dims2().expect("checked").1;
                let (r, cb) = self.value(*b).dims2().expect("checked");
                let w = ca + cb;
                if let Some(ga) = self.acc(grads, *a) {
                    for i in 0..r {
                        add_into(&mut ga[i * ca..(i + 1) * ca], &g[i * w..i * w + ca]);
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for i in 0..r {
                        add_into(&mut gb[i * cb..(i + 1) * cb], &g[i * w + ca..(i + 1) * w]);
                    }
                }
            }
            Op::AddBias(x, bias) => {
                let (r, c) = node.value.dims2().expect("checked");
                if let Some(gx) = self.acc(grads, *x) {
                    add_into(gx, g);
                }
                if let Some(gb) = self.acc(grads, *bias) {
                    for i in 0..r {
                        add_into(gb, &g[i * c..(i + 1) * c]);
                    }
                }
            }
            Op::CrossEntropy { logits, targets, probs, labeled } => {
                if *labeled == 0 {
                    return;
                }
                let c = self.value(*logits).dims2().expect("checked").1;
                let scale = g[0] / S::of_usize(*labeled);
                if let Some(gx) = self.acc(grads, *logits) {
                    for (i, t) in targets.iter().enumerate() {
                        let Some(t) = *t else { continue };
                        for j in 0..c {
                            let onehot = if j == t { S::one() } else { S::zero() };
                            gx[i * c + j] += scale * (probs[i * c + j] - onehot);
                        }
                    }
                }
            }
            Op::Transpose(x) => {
                let (r, c) = self.value(*x).dims2().expect("checked");
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..r {
                        for j in 0..c {
                            gx[i * c + j] += g[j * r + i];
                        }
                    }
                }
            }
            Op::SliceCols { x, start } => {
                let (r, len) = node.value.dims2().expect("checked");
                let c = self.value(*x).dims2().expect("checked").1;
                if let Some(gx) = self.acc(grads, *x) {
                    for i in 0..r {
                        add_into(&mut gx[i * c + start..i * c + start + len], &g[i * len..(i + 1) * len]);
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(gx) = self.acc(grads, *x) {
                    for o in gx.iter_mut() {
                        *o += g[0];
                    }
                }
            }
        }
    }
}

fn add_into<S: Scalar>(dst: &mut [S], src: &[S]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn segment_accumulate<S: Scalar>(xs: &[S], segments: &[usize], groups: usize, c: usize) -> Vec<S> {
    let mut out = vec![S::zero(); groups * c];
    for (i, &s) in segments.iter().enumerate() {
        add_into(&mut out[s * c..(s + 1) * c], &xs[i * c..(i + 1) * c]);
    }
    out
}
