use super::{gemm_acc, gemm_at_acc, gemm_bt_acc, NdError, Real, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    AddRowBias(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    SliceRows { input: Var, start: usize },
    LookupRows { table: Var, ids: Vec<usize> },
    MaskedSoftmax { input: Var, mask: Vec<bool> },
    ScatterAdd { input: Var, groups: Vec<usize> },
    Gather { input: Var, indices: Vec<usize> },
    RowDot(Var, Var),
    BlendRows { new: Var, old: Var, mask: Vec<bool> },
    Reshape(Var),
    LogFloor { input: Var, floor: f64 },
    Sum(Var),
    Scale(Var, f64),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op,
    requires_grad: bool,
}

/// Records forward operations in execution order; node order is a valid
/// topological order, so backward is a single reverse sweep.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar output with respect to every node that requires one.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn check_same(op: &'static str, a: &[usize], b: &[usize]) -> Result<(), NdError> {
    if a != b {
        return Err(NdError::ShapeMismatch {
            op,
            left: a.to_vec(),
            right: b.to_vec(),
        });
    }
    Ok(())
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
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

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push_raw(&mut self, value: Tensor<T>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(
        &mut self,
        name: &'static str,
        value: Tensor<T>,
        op: Op,
        inputs: &[Var],
    ) -> Result<Var, NdError> {
        if !value.is_finite() {
            return Err(NdError::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_raw(value, op, requires_grad))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        let (av, bv) = (self.value(a), self.value(b));
        let ((m, k), (k2, n)) = (av.dims2(), bv.dims2());
        if k != k2 {
            return Err(NdError::ShapeMismatch {
                op: "matmul",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let mut out = vec![T::zero(); m * n];
        gemm_acc(av.data(), bv.data(), &mut out, m, k, n);
        let value = Tensor::matrix(m, n, out)?;
        self.push("matmul", value, Op::MatMul(a, b), &[a, b])
    }

    fn zip(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(T, T) -> T,
        op: Op,
    ) -> Result<Var, NdError> {
        let (av, bv) = (self.value(a), self.value(b));
        check_same(name, av.shape(), bv.shape())?;
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(av.shape().to_vec(), data)?;
        self.push(name, value, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        self.zip("hadamard", a, b, |x, y| x * y, Op::Hadamard(a, b))
    }

    /// Adds a length-`n` bias to every row of an `m×n` matrix.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var, NdError> {
        let (av, bv) = (self.value(a), self.value(bias));
        let (m, n) = av.dims2();
        if bv.numel() != n {
            return Err(NdError::ShapeMismatch {
                op: "add_row_bias",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let b = bv.data();
        let mut data = av.data().to_vec();
        for i in 0..m {
            for (x, &y) in data[i * n..(i + 1) * n].iter_mut().zip(b) {
                *x = *x + y;
            }
        }
        let value = Tensor::new(av.shape().to_vec(), data)?;
        self.push("add_row_bias", value, Op::AddRowBias(a, bias), &[a, bias])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, NdError> {
        let value = self.value(a).map(sigmoid);
        self.push("sigmoid", value, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, NdError> {
        let value = self.value(a).map(|x| x.tanh());
        self.push("tanh", value, Op::Tanh(a), &[a])
    }

    /// Concatenates two tensors along `axis` (0 or 1 for matrices, 0 for vectors).
    pub fn concat(&mut self, a: Var, b: Var, axis: usize) -> Result<Var, NdError> {
        self.concat_many(&[a, b], axis)
    }

    pub fn concat_many(&mut self, inputs: &[Var], axis: usize) -> Result<Var, NdError> {
        let first = self.value(inputs[0]).shape().to_vec();
        if axis >= first.len() {
            return Err(NdError::InvalidShape(first));
        }
        let mut out_shape = first.clone();
        out_shape[axis] = 0;
        for &v in inputs {
            let s = self.value(v).shape();
            let compatible = s.len() == first.len()
                && s.iter()
                    .zip(&first)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(NdError::ShapeMismatch {
                    op: "concat",
                    left: first,
                    right: s.to_vec(),
                });
            }
            out_shape[axis] += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let mut data = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let chunk: usize = t.shape()[axis..].iter().product();
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let value = Tensor::new(out_shape, data)?;
        self.push(
            "concat",
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        )
    }

    /// Rows `start..start+len` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NdError> {
        let av = self.value(a);
        let (m, n) = av.dims2();
        if start + len > m || len == 0 {
            return Err(NdError::IndexOutOfRange {
                op: "slice_rows",
                index: start + len,
                extent: m,
            });
        }
        let value = Tensor::matrix(len, n, av.data()[start * n..(start + len) * n].to_vec())?;
        self.push("slice_rows", value, Op::SliceRows { input: a, start }, &[a])
    }

    /// Gathers `table` rows by id; backward scatter-adds, so repeated ids accumulate.
    pub fn lookup_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var, NdError> {
        let tv = self.value(table);
        let (rows, cols) = tv.dims2();
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(NdError::IndexOutOfRange {
                    op: "lookup_rows",
                    index: id,
                    extent: rows,
                });
            }
            data.extend_from_slice(tv.row(id));
        }
        let value = Tensor::matrix(ids.len(), cols, data)?;
        self.push(
            "lookup_rows",
            value,
            Op::LookupRows {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        )
    }

    /// Row-wise softmax restricted to `mask`; masked slots are exactly zero.
    /// A vector is treated as a single row.
    pub fn masked_softmax(&mut self, scores: Var, mask: &[bool]) -> Result<Var, NdError> {
        let sv = self.value(scores);
        let (m, n) = sv.dims2();
        if mask.len() != m * n {
            return Err(NdError::ShapeMismatch {
                op: "masked_softmax",
                left: sv.shape().to_vec(),
                right: vec![mask.len()],
            });
        }
        let mut data = vec![T::zero(); m * n];
        for i in 0..m {
            let row = sv.row(i);
            let mrow = &mask[i * n..(i + 1) * n];
            let max = row
                .iter()
                .zip(mrow)
                .filter(|(_, &keep)| keep)
                .map(|(&x, _)| x)
                .fold(None, |acc: Option<T>, x| Some(acc.map_or(x, |a| a.max(x))))
                .ok_or(NdError::EmptyMask { row: i })?;
            let out = &mut data[i * n..(i + 1) * n];
            let mut total = T::zero();
            for j in 0..n {
                if mrow[j] {
                    let e = (row[j] - max).exp();
                    out[j] = e;
                    total = total + e;
                }
            }
            for o in out.iter_mut() {
                *o = *o / total;
            }
        }
        let value = Tensor::new(sv.shape().to_vec(), data)?;
        self.push(
            "masked_softmax",
            value,
            Op::MaskedSoftmax {
                input: scores,
                mask: mask.to_vec(),
            },
            &[scores],
        )
    }

    /// `out[j] = Σ weights[i]` over all flat positions `i` with `groups[i] == j`.
    pub fn scatter_add(
        &mut self,
        weights: Var,
        groups: &[usize],
        group_count: usize,
    ) -> Result<Var, NdError> {
        let wv = self.value(weights);
        if groups.len() != wv.numel() {
            return Err(NdError::ShapeMismatch {
                op: "scatter_add",
                left: wv.shape().to_vec(),
                right: vec![groups.len()],
            });
        }
        if group_count == 0 {
            return Err(NdError::InvalidShape(vec![0]));
        }
        let mut out = vec![T::zero(); group_count];
        for (&w, &g) in wv.data().iter().zip(groups) {
            if g >= group_count {
                return Err(NdError::GroupOutOfRange {
                    id: g,
                    groups: group_count,
                });
            }
            out[g] = out[g] + w;
        }
        let value = Tensor::vector(out)?;
        self.push(
            "scatter_add",
            value,
            Op::ScatterAdd {
                input: weights,
                groups: groups.to_vec(),
            },
            &[weights],
        )
    }

    /// Picks flat elements by index into a vector.
    pub fn gather(&mut self, a: Var, indices: &[usize]) -> Result<Var, NdError> {
        let av = self.value(a);
        let mut data = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= av.numel() {
                return Err(NdError::IndexOutOfRange {
                    op: "gather",
                    index: i,
                    extent: av.numel(),
                });
            }
            data.push(av.data()[i]);
        }
        let value = Tensor::vector(data)?;
        self.push(
            "gather",
            value,
            Op::Gather {
                input: a,
                indices: indices.to_vec(),
            },
            &[a],
        )
    }

    /// Dot product of matching rows: `m×k, m×k -> m×1`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var, NdError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.dims2() != bv.dims2() {
            return Err(NdError::ShapeMismatch {
                op: "row_dot",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let m = av.rows();
        let data = (0..m)
            .map(|i| av.row(i).iter().zip(bv.row(i)).map(|(&x, &y)| x * y).sum())
            .collect();
        let value = Tensor::matrix(m, 1, data)?;
        self.push("row_dot", value, Op::RowDot(a, b), &[a, b])
    }

    /// Row `i` of the result is `new[i]` where `mask[i]`, else `old[i]`.
    pub fn blend_rows(&mut self, new: Var, old: Var, mask: &[bool]) -> Result<Var, NdError> {
        let (nv, ov) = (self.value(new), self.value(old));
        check_same("blend_rows", nv.shape(), ov.shape())?;
        let (m, n) = nv.dims2();
        if mask.len() != m {
            return Err(NdError::ShapeMismatch {
                op: "blend_rows",
                left: nv.shape().to_vec(),
                right: vec![mask.len()],
            });
        }
        let mut data = Vec::with_capacity(m * n);
        for (i, &take_new) in mask.iter().enumerate() {
            data.extend_from_slice(if take_new { nv.row(i) } else { ov.row(i) });
        }
        let value = Tensor::new(nv.shape().to_vec(), data)?;
        self.push(
            "blend_rows",
            value,
            Op::BlendRows {
                new,
                old,
                mask: mask.to_vec(),
            },
            &[new, old],
        )
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var, NdError> {
        let value = self.value(a).clone().reshape(shape)?;
        self.push("reshape", value, Op::Reshape(a), &[a])
    }

    /// Elementwise `ln(max(x, floor))`.
    pub fn log_floor(&mut self, a: Var, floor: f64) -> Result<Var, NdError> {
        let f = T::of(floor);
        let value = self.value(a).map(|x| x.max(f).ln());
        self.push("log_floor", value, Op::LogFloor { input: a, floor }, &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NdError> {
        let total = self.value(a).data().iter().copied().sum();
        let value = Tensor::vector(vec![total])?;
        self.push("sum", value, Op::Sum(a), &[a])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, NdError> {
        let s = T::of(c);
        let value = self.value(a).map(|x| x * s);
        self.push("scale", value, Op::Scale(a, c), &[a])
    }

    /// Reverse sweep from a single-element output.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>, NdError> {
        let out = self.value(output);
        if out.numel() != 1 {
            return Err(NdError::NonScalarOutput(out.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::filled(out.shape().to_vec(), T::one()));

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn accumulate(grads: &mut [Option<Tensor<T>>], v: Var, delta: Tensor<T>) {
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn zeros_like(&self, v: Var) -> Tensor<T> {
        Tensor::zeros(self.value(v).shape().to_vec())
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                let ((m, k), (_, n)) = (av.dims2(), bv.dims2());
                if self.wants(a) {
                    let mut da = self.zeros_like(a);
                    gemm_bt_acc(g.data(), bv.data(), da.data_mut(), m, n, k);
                    Self::accumulate(grads, a, da);
                }
                if self.wants(b) {
                    let mut db = self.zeros_like(b);
                    gemm_at_acc(av.data(), g.data(), db.data_mut(), m, k, n);
                    Self::accumulate(grads, b, db);
                }
            }
            &Op::Add(a, b) => {
                if self.wants(a) {
                    Self::accumulate(grads, a, g.clone());
                }
                if self.wants(b) {
                    Self::accumulate(grads, b, g.clone());
                }
            }
            &Op::Sub(a, b) => {
                if self.wants(a) {
                    Self::accumulate(grads, a, g.clone());
                }
                if self.wants(b) {
                    Self::accumulate(grads, b, g.map(|x| -x));
                }
            }
            &Op::Hadamard(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                if self.wants(a) {
                    let mut da = g.clone();
                    for (d, &x) in da.data_mut().iter_mut().zip(bv.data()) {
                        *d = *d * x;
                    }
                    Self::accumulate(grads, a, da);
                }
                if self.wants(b) {
                    let mut db = g.clone();
                    for (d, &x) in db.data_mut().iter_mut().zip(av.data()) {
                        *d = *d * x;
                    }
                    Self::accumulate(grads, b, db);
                }
            }
            &Op::AddRowBias(a, bias) => {
                if self.wants(a) {
                    Self::accumulate(grads, a, g.clone());
                }
                if self.wants(bias) {
                    let mut db = self.zeros_like(bias);
                    let (m, n) = g.dims2();
                    for i in 0..m {
                        for (d, &x) in db.data_mut().iter_mut().zip(&g.data()[i * n..(i + 1) * n]) {
                            *d = *d + x;
                        }
                    }
                    Self::accumulate(grads, bias, db);
                }
            }
            &Op::Sigmoid(a) => {
                if self.wants(a) {
                    let mut da = g.clone();
                    for (d, &s) in da.data_mut().iter_mut().zip(y.data()) {
                        *d = *d * s * (T::one() - s);
                    }
                    Self::accumulate(grads, a, da);
                }
            }
            &Op::Tanh(a) => {
                if self.wants(a) {
                    let mut da = g.clone();
                    for (d, &t) in da.data_mut().iter_mut().zip(y.data()) {
                        *d = *d * (T::one() - t * t);
                    }
                    Self::accumulate(grads, a, da);
                }
            }
            Op::Concat { inputs, axis } => {
                let outer: usize = y.shape()[..*axis].iter().product();
                let out_chunk: usize = y.shape()[*axis..].iter().product();
                let mut offset = 0;
                for &v in inputs {
                    let shape = self.value(v).shape();
                    let chunk: usize = shape[*axis..].iter().product();
                    if self.wants(v) {
                        let mut dv = self.zeros_like(v);
                        for o in 0..outer {
                            let src =
                                &g.data()[o * out_chunk + offset..o * out_chunk + offset + chunk];
                            dv.data_mut()[o * chunk..(o + 1) * chunk].copy_from_slice(src);
                        }
                        Self::accumulate(grads, v, dv);
                    }
                    offset += chunk;
                }
            }
            &Op::SliceRows { input, start } => {
                if self.wants(input) {
                    let mut da = self.zeros_like(input);
                    let n = g.cols();
                    da.data_mut()[start * n..start * n + g.numel()].copy_from_slice(g.data());
                    Self::accumulate(grads, input, da);
                }
            }
            Op::LookupRows { table, ids } => {
                if self.wants(*table) {
                    let mut dt = self.zeros_like(*table);
                    let n = g.cols();
                    for (r, &id) in ids.iter().enumerate() {
                        let dst = &mut dt.data_mut()[id * n..(id + 1) * n];
                        for (d, &x) in dst.iter_mut().zip(g.row(r)) {
                            *d = *d + x;
                        }
                    }
                    Self::accumulate(grads, *table, dt);
                }
            }
            Op::MaskedSoftmax { input, mask } => {
                if self.wants(*input) {
                    let (m, n) = y.dims2();
                    let mut da = self.zeros_like(*input);
                    for i in 0..m {
                        let yr = y.row(i);
                        let gr = g.row(i);
                        let dot: T = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                        for j in 0..n {
                            if mask[i * n + j] {
                                da.data_mut()[i * n + j] = yr[j] * (gr[j] - dot);
                            }
                        }
                    }
                    Self::accumulate(grads, *input, da);
                }
            }
            Op::ScatterAdd { input, groups } => {
                if self.wants(*input) {
                    let mut da = self.zeros_like(*input);
                    for (d, &grp) in da.data_mut().iter_mut().zip(groups) {
                        *d = g.data()[grp];
                    }
                    Self::accumulate(grads, *input, da);
                }
            }
            Op::Gather { input, indices } => {
                if self.wants(*input) {
                    let mut da = self.zeros_like(*input);
                    for (&i, &x) in indices.iter().zip(g.data()) {
                        da.data_mut()[i] = da.data_mut()[i] + x;
                    }
                    Self::accumulate(grads, *input, da);
                }
            }
            &Op::RowDot(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                let (m, k) = av.dims2();
                for (src, dst, wants) in [(bv, a, self.wants(a)), (av, b, self.wants(b))] {
                    if !wants {
                        continue;
                    }
                    let mut d = self.zeros_like(dst);
                    for i in 0..m {
                        let gi = g.data()[i];
                        for (o, &x) in d.data_mut()[i * k..(i + 1) * k].iter_mut().zip(src.row(i)) {
                            *o = gi * x;
                        }
                    }
                    Self::accumulate(grads, dst, d);
                }
            }
            Op::BlendRows { new, old, mask } => {
                let n = g.cols();
                for (v, pick) in [(*new, true), (*old, false)] {
                    if !self.wants(v) {
                        continue;
                    }
                    let mut d = self.zeros_like(v);
                    for (i, &m) in mask.iter().enumerate() {
                        if m == pick {
                            d.data_mut()[i * n..(i + 1) * n].copy_from_slice(g.row(i));
                        }
                    }
                    Self::accumulate(grads, v, d);
                }
            }
            &Op::Reshape(a) => {
                if self.wants(a) {
                    let shape = self.value(a).shape().to_vec();
                    let da = g
                        .clone()
                        .reshape(shape)
                        .expect("reshape preserves element count");
                    Self::accumulate(grads, a, da);
                }
            }
            &Op::LogFloor { input, floor } => {
                if self.wants(input) {
                    let f = T::of(floor);
                    let mut da = g.clone();
                    for (d, &x) in da.data_mut().iter_mut().zip(self.value(input).data()) {
                        *d = if x > f { *d / x } else { T::zero() };
                    }
                    Self::accumulate(grads, input, da);
                }
            }
            &Op::Sum(a) => {
                if self.wants(a) {
                    let da = Tensor::filled(self.value(a).shape().to_vec(), g.data()[0]);
                    Self::accumulate(grads, a, da);
                }
            }
            &Op::Scale(a, c) => {
                if self.wants(a) {
                    let mut da = g.clone();
                    da.scale_in_place(T::of(c));
                    Self::accumulate(grads, a, da);
                }
            }
        }
    }
}
