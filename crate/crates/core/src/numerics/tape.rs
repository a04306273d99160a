//! Reverse-mode differentiation over rank-2 tensors.
//!
//! A [`Tape`] is built fresh for every forward pass. Values are computed
//! eagerly as operations are recorded; [`Tape::backward`] then sweeps the
//! recorded operations once, in reverse order.

use std::collections::BTreeMap;

use super::params::ParamStore;
use super::tensor::{log_softmax, matmul, matmul_nt, matmul_tn, softmax, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Param,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Exp(Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    SliceCols { x: Var, start: usize },
    GatherRows { x: Var, idx: Vec<usize> },
    ScatterAddRows { x: Var, idx: Vec<usize> },
    ScaleRows { x: Var, factors: Vec<T> },
    Gather2d { x: Var, rows: Vec<usize>, cols: Vec<usize> },
    Maximum(Var, Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LogSoftmaxCols(Var),
    Dustbin { body: Var, bin: Var },
    WeightedPick { x: Var, entries: Vec<(usize, usize, T)> },
    Sum(Var),
}

#[derive(Clone, Debug)]
struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
}

/// Recorded computation graph plus the parameter registry of one forward pass.
#[derive(Debug, Default)]
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
    params: BTreeMap<String, Var>,
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Tensor<T>>>,
    params: BTreeMap<String, Var>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient with respect to `v`; zeros when `v` does not influence the output.
    pub fn wrt(&self, v: Var) -> Tensor<T> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    /// Gradients of every parameter registered during the forward pass.
    pub fn params(&self) -> BTreeMap<String, Tensor<T>> {
        self.params
            .iter()
            .map(|(name, &v)| (name.clone(), self.wrt(v)))
            .collect()
    }
}

fn check_same_shape<T: Scalar>(what: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Records a constant input.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(Op::Leaf, value)
    }

    /// Records a named parameter from `store`. Requesting the same name twice
    /// returns the same handle so gradients of shared weights accumulate.
    pub fn param(&mut self, store: &ParamStore<T>, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store
            .get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?
            .clone();
        let v = self.push(Op::Param, value);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    /// Registers an arbitrary tensor as a parameter under `name`.
    pub fn param_value(&mut self, name: &str, value: Tensor<T>) -> Var {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        let v = self.push(Op::Param, value);
        self.params.insert(name.to_string(), v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = matmul(self.value(a), self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = matmul_nt(self.value(a), self.value(b))?;
        Ok(self.push(Op::MatMulNt(a, b), value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same_shape("add", self.value(a), self.value(b))?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same_shape("sub", self.value(a), self.value(b))?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), value))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same_shape("mul", self.value(a), self.value(b))?;
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), value))
    }

    /// Adds a `[1, n]` row to every row of an `[m, n]` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.value(a).require_matrix("add_row")?;
        let r = self.value(row);
        if r.len() != n {
            return Err(Error::Shape(format!(
                "add_row: bias of {} elements for {n} columns",
                r.len()
            )));
        }
        let mut value = self.value(a).clone();
        let bias = r.data().to_vec();
        for i in 0..m {
            for (o, &b) in value.row_slice_mut(i).iter_mut().zip(&bias) {
                *o += b;
            }
        }
        Ok(self.push(Op::AddRow(a, row), value))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let value = self.value(a).map(|x| x * s);
        self.push(Op::Scale(a, s), value)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        self.push(Op::Relu(a), value)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.exp());
        self.push(Op::Exp(a), value)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.value(a).require_matrix("transpose")?;
        let value = self.value(a).transpose();
        Ok(self.push(Op::Transpose(a), value))
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Shape("concat_cols of nothing".into()));
        };
        let m = self.value(first).require_matrix("concat_cols")?.0;
        let mut total = 0;
        for &p in parts {
            let (r, c) = self.value(p).require_matrix("concat_cols")?;
            if r != m {
                return Err(Error::Shape(format!("concat_cols: {r} rows vs {m}")));
            }
            total += c;
        }
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let value = Tensor::matrix(m, total, data)?;
        Ok(self.push(Op::ConcatCols(parts.to_vec()), value))
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.value(x).require_matrix("slice_cols")?;
        if start + len > n {
            return Err(Error::Shape(format!(
                "slice_cols {start}..{} of {n} columns",
                start + len
            )));
        }
        let src = self.value(x);
        let mut data = Vec::with_capacity(m * len);
        for i in 0..m {
            data.extend_from_slice(&src.row_slice(i)[start..start + len]);
        }
        let value = Tensor::matrix(m, len, data)?;
        Ok(self.push(Op::SliceCols { x, start }, value))
    }

    /// Row `k` of the output is row `idx[k]` of `x`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let (m, n) = self.value(x).require_matrix("gather_rows")?;
        let src = self.value(x);
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            if i >= m {
                return Err(Error::Shape(format!("gather_rows: index {i} of {m} rows")));
            }
            data.extend_from_slice(src.row_slice(i));
        }
        let value = Tensor::matrix(idx.len(), n, data)?;
        Ok(self.push(Op::GatherRows { x, idx: idx.to_vec() }, value))
    }

    /// Output row `r` is the sum of the rows `k` of `x` with `idx[k] == r`.
    pub fn scatter_add_rows(&mut self, x: Var, idx: &[usize], out_rows: usize) -> Result<Var> {
        let (m, n) = self.value(x).require_matrix("scatter_add_rows")?;
        if idx.len() != m {
            return Err(Error::Shape(format!(
                "scatter_add_rows: {} indices for {m} rows",
                idx.len()
            )));
        }
        let mut value = Tensor::zeros(&[out_rows, n]);
        for (k, &r) in idx.iter().enumerate() {
            if r >= out_rows {
                return Err(Error::Shape(format!(
                    "scatter_add_rows: target {r} of {out_rows} rows"
                )));
            }
            let src = self.nodes[x.0].value.row_slice(k).to_vec();
            for (o, s) in value.row_slice_mut(r).iter_mut().zip(src) {
                *o += s;
            }
        }
        Ok(self.push(Op::ScatterAddRows { x, idx: idx.to_vec() }, value))
    }

    /// Multiplies row `i` by the constant `factors[i]`.
    pub fn scale_rows(&mut self, x: Var, factors: &[T]) -> Result<Var> {
        let (m, _) = self.value(x).require_matrix("scale_rows")?;
        if factors.len() != m {
            return Err(Error::Shape(format!(
                "scale_rows: {} factors for {m} rows",
                factors.len()
            )));
        }
        let mut value = self.value(x).clone();
        for (i, &f) in factors.iter().enumerate() {
            for v in value.row_slice_mut(i) {
                *v *= f;
            }
        }
        Ok(self.push(Op::ScaleRows { x, factors: factors.to_vec() }, value))
    }

    /// Sub-matrix `out[a, b] = x[rows[a], cols[b]]`.
    pub fn gather_2d(&mut self, x: Var, rows: &[usize], cols: &[usize]) -> Result<Var> {
        let (m, n) = self.value(x).require_matrix("gather_2d")?;
        if rows.iter().any(|&r| r >= m) || cols.iter().any(|&c| c >= n) {
            return Err(Error::Shape(format!("gather_2d: index outside [{m}, {n}]")));
        }
        let src = self.value(x);
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for &r in rows {
            for &c in cols {
                data.push(src.at(r, c));
            }
        }
        let value = Tensor::matrix(rows.len(), cols.len(), data)?;
        Ok(self.push(
            Op::Gather2d {
                x,
                rows: rows.to_vec(),
                cols: cols.to_vec(),
            },
            value,
        ))
    }

    /// Element-wise maximum; ties route the gradient to `a`.
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        check_same_shape("maximum", self.value(a), self.value(b))?;
        let value = self
            .value(a)
            .zip_map(self.value(b), |x, y| if y > x { y } else { x });
        Ok(self.push(Op::Maximum(a, b), value))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        self.value(x).require_matrix("softmax_rows")?;
        let value = softmax(self.value(x), 1)?;
        Ok(self.push(Op::SoftmaxRows(x), value))
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Result<Var> {
        self.value(x).require_matrix("log_softmax_rows")?;
        let value = log_softmax(self.value(x), 1)?;
        Ok(self.push(Op::LogSoftmaxRows(x), value))
    }

    pub fn log_softmax_cols(&mut self, x: Var) -> Result<Var> {
        self.value(x).require_matrix("log_softmax_cols")?;
        let value = log_softmax(self.value(x), 0)?;
        Ok(self.push(Op::LogSoftmaxCols(x), value))
    }

    /// Appends a last row and last column filled with the scalar `bin`.
    pub fn dustbin(&mut self, body: Var, bin: Var) -> Result<Var> {
        let (m, n) = self.value(body).require_matrix("dustbin")?;
        if self.value(bin).len() != 1 {
            return Err(Error::Shape("dustbin: bin must hold one value".into()));
        }
        let z = self.value(bin).item();
        let mut value = Tensor::filled(&[m + 1, n + 1], z);
        for i in 0..m {
            value.row_slice_mut(i)[..n].copy_from_slice(self.value(body).row_slice(i));
        }
        Ok(self.push(Op::Dustbin { body, bin }, value))
    }

    /// Scalar `Σ w · x[i, j]` over the listed entries.
    pub fn weighted_pick(&mut self, x: Var, entries: &[(usize, usize, T)]) -> Result<Var> {
        let (m, n) = self.value(x).require_matrix("weighted_pick")?;
        let mut s = T::zero();
        for &(i, j, w) in entries {
            if i >= m || j >= n {
                return Err(Error::Shape(format!(
                    "weighted_pick: entry ({i}, {j}) outside [{m}, {n}]"
                )));
            }
            s += w * self.value(x).at(i, j);
        }
        Ok(self.push(
            Op::WeightedPick {
                x,
                entries: entries.to_vec(),
            },
            Tensor::scalar(s),
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        self.push(Op::Sum(x), Tensor::scalar(s))
    }

    /// Back-propagates from the scalar `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        if self.value(output).len() != 1 {
            return Err(Error::Shape(format!(
                "backward from non-scalar of shape {:?}",
                self.value(output).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::filled(self.value(output).shape(), T::one()));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(&node.op, &node.value, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        Ok(Gradients {
            grads,
            params: self.params.clone(),
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(
        &self,
        op: &Op<T>,
        out: &Tensor<T>,
        g: &Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
    ) -> Result<()> {
        let mut acc = |v: Var, d: Tensor<T>| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&d),
            slot @ None => *slot = Some(d),
        };
        match op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                acc(*a, matmul_nt(g, self.value(*b))?);
                acc(*b, matmul_tn(self.value(*a), g)?);
            }
            Op::MatMulNt(a, b) => {
                acc(*a, matmul(g, self.value(*b))?);
                acc(*b, matmul_tn(g, self.value(*a))?);
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(self.value(*b), |x, y| x * y));
                acc(*b, g.zip_map(self.value(*a), |x, y| x * y));
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                let n = g.cols();
                let mut db = vec![T::zero(); n];
                for i in 0..g.rows() {
                    for (d, &x) in db.iter_mut().zip(g.row_slice(i)) {
                        *d += x;
                    }
                }
                let shape = self.value(*row).shape().to_vec();
                acc(*row, Tensor::new(shape, db)?);
            }
            Op::Scale(a, s) => acc(*a, g.map(|x| x * *s)),
            Op::Relu(a) => acc(
                *a,
                g.zip_map(out, |x, y| if y > T::zero() { x } else { T::zero() }),
            ),
            Op::Exp(a) => acc(*a, g.zip_map(out, |x, y| x * y)),
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::ConcatCols(parts) => {
                let m = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    let mut data = Vec::with_capacity(m * c);
                    for i in 0..m {
                        data.extend_from_slice(&g.row_slice(i)[offset..offset + c]);
                    }
                    acc(p, Tensor::matrix(m, c, data)?);
                    offset += c;
                }
            }
            Op::SliceCols { x, start } => {
                let (m, n) = (self.value(*x).rows(), self.value(*x).cols());
                let len = g.cols();
                let mut d = Tensor::zeros(&[m, n]);
                for i in 0..m {
                    d.row_slice_mut(i)[*start..*start + len].copy_from_slice(g.row_slice(i));
                }
                acc(*x, d);
            }
            Op::GatherRows { x, idx } => {
                let (m, n) = (self.value(*x).rows(), self.value(*x).cols());
                let mut d = Tensor::zeros(&[m, n]);
                for (k, &i) in idx.iter().enumerate() {
                    for (o, &v) in d.row_slice_mut(i).iter_mut().zip(g.row_slice(k)) {
                        *o += v;
                    }
                }
                acc(*x, d);
            }
            Op::ScatterAddRows { x, idx } => {
                let n = g.cols();
                let mut data = Vec::with_capacity(idx.len() * n);
                for &r in idx {
                    data.extend_from_slice(g.row_slice(r));
                }
                acc(*x, Tensor::matrix(idx.len(), n, data)?);
            }
            Op::ScaleRows { x, factors } => {
                let mut d = g.clone();
                for (i, &f) in factors.iter().enumerate() {
                    for v in d.row_slice_mut(i) {
                        *v *= f;
                    }
                }
                acc(*x, d);
            }
            Op::Gather2d { x, rows, cols } => {
                let (m, n) = (self.value(*x).rows(), self.value(*x).cols());
                let mut d = Tensor::zeros(&[m, n]);
                for (a, &r) in rows.iter().enumerate() {
                    for (b, &c) in cols.iter().enumerate() {
                        let v = d.at(r, c) + g.at(a, b);
                        d.set(r, c, v);
                    }
                }
                acc(*x, d);
            }
            Op::Maximum(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let mut da = g.clone();
                let mut db = g.clone();
                for k in 0..g.len() {
                    if vb.data()[k] > va.data()[k] {
                        da.data_mut()[k] = T::zero();
                    } else {
                        db.data_mut()[k] = T::zero();
                    }
                }
                acc(*a, da);
                acc(*b, db);
            }
            Op::SoftmaxRows(x) => {
                let mut d = g.zip_map(out, |gv, y| gv * y);
                for i in 0..out.rows() {
                    let s: T = d.row_slice(i).iter().copied().sum();
                    let yrow = out.row_slice(i).to_vec();
                    for (dv, y) in d.row_slice_mut(i).iter_mut().zip(yrow) {
                        *dv -= y * s;
                    }
                }
                acc(*x, d);
            }
            Op::LogSoftmaxRows(x) => {
                let mut d = g.clone();
                for i in 0..out.rows() {
                    let s: T = g.row_slice(i).iter().copied().sum();
                    let yrow = out.row_slice(i).to_vec();
                    for (dv, y) in d.row_slice_mut(i).iter_mut().zip(yrow) {
                        *dv -= y.exp() * s;
                    }
                }
                acc(*x, d);
            }
            Op::LogSoftmaxCols(x) => {
                let (m, n) = (out.rows(), out.cols());
                let mut d = g.clone();
                for j in 0..n {
                    let mut s = T::zero();
                    for i in 0..m {
                        s += g.at(i, j);
                    }
                    for i in 0..m {
                        let v = d.at(i, j) - out.at(i, j).exp() * s;
                        d.set(i, j, v);
                    }
                }
                acc(*x, d);
            }
            Op::Dustbin { body, bin } => {
                let (m, n) = (self.value(*body).rows(), self.value(*body).cols());
                let mut db = Tensor::zeros(&[m, n]);
                let mut dz = T::zero();
                for i in 0..=m {
                    for j in 0..=n {
                        if i < m && j < n {
                            db.set(i, j, g.at(i, j));
                        } else {
                            dz += g.at(i, j);
                        }
                    }
                }
                acc(*body, db);
                let shape = self.value(*bin).shape().to_vec();
                acc(*bin, Tensor::new(shape, vec![dz])?);
            }
            Op::WeightedPick { x, entries } => {
                let s = g.item();
                let (m, n) = (self.value(*x).rows(), self.value(*x).cols());
                let mut d = Tensor::zeros(&[m, n]);
                for &(i, j, w) in entries {
                    let v = d.at(i, j) + w * s;
                    d.set(i, j, v);
                }
                acc(*x, d);
            }
            Op::Sum(x) => {
                let s = g.item();
                acc(*x, Tensor::filled(self.value(*x).shape(), s));
            }
        }
        Ok(())
    }
}
