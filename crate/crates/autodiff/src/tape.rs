//! Define-by-run tape.
//!
//! Every primitive checks whether any input is recorded. If none is, the
//! result is a plain constant and nothing is pushed, so inference code that
//! never creates a [`Tape::param`] leaves the tape empty.

use std::cell::RefCell;
use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{AutodiffError, Result};
use crate::tensor::{validate_shape, NodeId, Tensor};

static NEXT_TAPE_ID: AtomicUsize = AtomicUsize::new(0);

#[derive(Clone)]
struct Operand {
    node: Option<usize>,
    value: Rc<Vec<f64>>,
}

enum Op {
    Leaf,
    MatMul {
        a: Operand,
        b: Operand,
        m: usize,
        k: usize,
        n: usize,
    },
    Add(Option<usize>, Option<usize>),
    Sub(Option<usize>, Option<usize>),
    Mul(Operand, Operand),
    AddRow {
        mat: Option<usize>,
        row: Option<usize>,
        rows: usize,
        cols: usize,
    },
    Scale {
        x: Operand,
        s: Operand,
    },
    ScalarMul {
        x: usize,
        c: f64,
    },
    Concat {
        parts: Vec<(Option<usize>, usize)>,
        outer: usize,
        inner: usize,
        total: usize,
    },
    Slice {
        x: usize,
        outer: usize,
        inner: usize,
        len: usize,
        start: usize,
        end: usize,
    },
    Sigmoid {
        x: usize,
        out: Rc<Vec<f64>>,
    },
    Tanh {
        x: usize,
        out: Rc<Vec<f64>>,
    },
    Exp {
        x: usize,
        out: Rc<Vec<f64>>,
    },
    Log {
        x: Operand,
    },
    Recip {
        x: usize,
        out: Rc<Vec<f64>>,
    },
    Softmax {
        x: usize,
        out: Rc<Vec<f64>>,
        outer: usize,
        len: usize,
        inner: usize,
    },
    ClampMin {
        x: Operand,
        lo: f64,
    },
    Minimum(Operand, Operand),
    Embedding {
        table: usize,
        ids: Vec<usize>,
        dim: usize,
    },
    Sum {
        x: usize,
    },
    Gather {
        x: usize,
        idx: Vec<usize>,
    },
    ScatterAdd {
        x: usize,
        idx: Vec<usize>,
    },
    Reshape {
        x: usize,
    },
}

struct Record {
    op: Op,
    numel: usize,
}

#[derive(Default)]
struct Inner {
    records: Vec<Record>,
    leaf_grads: Vec<Option<Vec<f64>>>,
}

/// Ordered list of operation records. Backward walks it in strict reverse
/// creation order, which is a valid topological order by construction.
pub struct Tape {
    id: usize,
    inner: RefCell<Inner>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            inner: RefCell::new(Inner::default()),
        }
    }

    /// Number of recorded operations (leaves included).
    pub fn len(&self) -> usize {
        self.inner.borrow().records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A leaf that requires a gradient.
    pub fn param(&self, shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let t = Tensor::new(shape, data)?;
        Ok(self.leaf(t))
    }

    /// Turns a constant into a gradient-requiring leaf on this tape.
    pub fn leaf(&self, t: Tensor) -> Tensor {
        let numel = t.numel();
        let node = self.push(Op::Leaf, numel);
        self.inner.borrow_mut().leaf_grads[node.index] = Some(vec![0.0; numel]);
        Tensor {
            shape: t.shape,
            data: t.data,
            node: Some(node),
        }
    }

    /// Accumulated gradient of a leaf. `None` for anything that is not a
    /// gradient-requiring leaf of this tape.
    pub fn grad(&self, t: &Tensor) -> Option<Vec<f64>> {
        let node = t.node?;
        if node.tape != self.id {
            return None;
        }
        self.inner.borrow().leaf_grads[node.index].clone()
    }

    pub fn zero_grads(&self) {
        for g in self.inner.borrow_mut().leaf_grads.iter_mut().flatten() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn push(&self, op: Op, numel: usize) -> NodeId {
        let mut inner = self.inner.borrow_mut();
        let index = inner.records.len();
        inner.records.push(Record { op, numel });
        inner.leaf_grads.push(None);
        NodeId {
            tape: self.id,
            index,
        }
    }

    fn node_of(&self, t: &Tensor) -> Result<Option<usize>> {
        match t.node {
            None => Ok(None),
            Some(n) if n.tape == self.id => Ok(Some(n.index)),
            Some(_) => Err(AutodiffError::NotOnTape),
        }
    }

    fn operand(&self, t: &Tensor) -> Result<Operand> {
        Ok(Operand {
            node: self.node_of(t)?,
            value: Rc::clone(&t.data),
        })
    }

    fn finish(&self, shape: Vec<usize>, data: Vec<f64>, op: Option<Op>) -> Tensor {
        let numel = data.len();
        let node = op.map(|op| self.push(op, numel));
        Tensor {
            shape,
            data: Rc::new(data),
            node,
        }
    }

    pub fn matmul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (m, k) = two_d("matmul", a)?;
        let (k2, n) = two_d("matmul", b)?;
        if k != k2 {
            return Err(shape_err("matmul", a, b));
        }
        let out = matmul_raw(&a.data, &b.data, m, k, n);
        let (oa, ob) = (self.operand(a)?, self.operand(b)?);
        let op = (oa.node.is_some() || ob.node.is_some()).then_some(Op::MatMul {
            a: oa,
            b: ob,
            m,
            k,
            n,
        });
        Ok(self.finish(vec![m, n], out, op))
    }

    pub fn add(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        same_shape("add", a, b)?;
        let out = a
            .data
            .iter()
            .zip(b.data.iter())
            .map(|(x, y)| x + y)
            .collect();
        let (na, nb) = (self.node_of(a)?, self.node_of(b)?);
        let op = (na.is_some() || nb.is_some()).then_some(Op::Add(na, nb));
        Ok(self.finish(a.shape.clone(), out, op))
    }

    pub fn sub(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        same_shape("sub", a, b)?;
        let out = a
            .data
            .iter()
            .zip(b.data.iter())
            .map(|(x, y)| x - y)
            .collect();
        let (na, nb) = (self.node_of(a)?, self.node_of(b)?);
        let op = (na.is_some() || nb.is_some()).then_some(Op::Sub(na, nb));
        Ok(self.finish(a.shape.clone(), out, op))
    }

    /// Elementwise product.
    pub fn mul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        same_shape("mul", a, b)?;
        let out = a
            .data
            .iter()
            .zip(b.data.iter())
            .map(|(x, y)| x * y)
            .collect();
        let (oa, ob) = (self.operand(a)?, self.operand(b)?);
        let op = (oa.node.is_some() || ob.node.is_some()).then_some(Op::Mul(oa, ob));
        Ok(self.finish(a.shape.clone(), out, op))
    }

    /// Adds a `[1, n]` (or `[n]`) row to every row of an `[m, n]` matrix.
    pub fn add_row(&self, mat: &Tensor, row: &Tensor) -> Result<Tensor> {
        let (rows, cols) = two_d("add_row", mat)?;
        let (r, c) = row.rows_cols();
        if r != 1 || c != cols {
            return Err(shape_err("add_row", mat, row));
        }
        let mut out = mat.data.as_ref().clone();
        for chunk in out.chunks_mut(cols) {
            chunk
                .iter_mut()
                .zip(row.data.iter())
                .for_each(|(o, v)| *o += v);
        }
        let (nm, nr) = (self.node_of(mat)?, self.node_of(row)?);
        let op = (nm.is_some() || nr.is_some()).then_some(Op::AddRow {
            mat: nm,
            row: nr,
            rows,
            cols,
        });
        Ok(self.finish(mat.shape.clone(), out, op))
    }

    /// Multiplies every element of `x` by the one-element tensor `s`.
    pub fn scale(&self, x: &Tensor, s: &Tensor) -> Result<Tensor> {
        if s.numel() != 1 {
            return Err(shape_err("scale", x, s));
        }
        let c = s.data[0];
        let out = x.data.iter().map(|v| v * c).collect();
        let (ox, os) = (self.operand(x)?, self.operand(s)?);
        let op = (ox.node.is_some() || os.node.is_some()).then_some(Op::Scale { x: ox, s: os });
        Ok(self.finish(x.shape.clone(), out, op))
    }

    pub fn scalar_mul(&self, x: &Tensor, c: f64) -> Result<Tensor> {
        let out = x.data.iter().map(|v| v * c).collect();
        let op = self.node_of(x)?.map(|x| Op::ScalarMul { x, c });
        Ok(self.finish(x.shape.clone(), out, op))
    }

    /// Concatenation along `axis`. All parts must agree on every other
    /// dimension and share a rank.
    pub fn concat(&self, parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = parts.first().ok_or(AutodiffError::Empty { op: "concat" })?;
        let rank = first.shape.len();
        if axis >= rank {
            return Err(AutodiffError::Axis {
                op: "concat",
                axis,
                shape: first.shape.clone(),
            });
        }
        for p in parts {
            let compatible = p.shape.len() == rank
                && p.shape
                    .iter()
                    .zip(first.shape.iter())
                    .enumerate()
                    .all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(shape_err("concat", first, p));
            }
        }
        let outer: usize = first.shape[..axis].iter().product();
        let inner: usize = first.shape[axis + 1..].iter().product();
        let total: usize = parts.iter().map(|p| p.shape[axis]).sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for p in parts {
                let block = p.shape[axis] * inner;
                out.extend_from_slice(&p.data[o * block..(o + 1) * block]);
            }
        }
        let mut shape = first.shape.clone();
        shape[axis] = total;
        let mut recorded = false;
        let mut meta = Vec::with_capacity(parts.len());
        for p in parts {
            let n = self.node_of(p)?;
            recorded |= n.is_some();
            meta.push((n, p.shape[axis]));
        }
        let op = recorded.then_some(Op::Concat {
            parts: meta,
            outer,
            inner,
            total,
        });
        Ok(self.finish(shape, out, op))
    }

    /// Stacks rank-1 `[n]` or row `[1, n]` tensors into an `[k, n]` matrix.
    pub fn stack(&self, rows: &[&Tensor]) -> Result<Tensor> {
        let first = rows.first().ok_or(AutodiffError::Empty { op: "stack" })?;
        let (r0, n) = first.rows_cols();
        if r0 != 1 {
            return Err(AutodiffError::Rank {
                op: "stack",
                shape: first.shape.clone(),
            });
        }
        let as_rows: Vec<Tensor> = rows
            .iter()
            .map(|t| {
                let (r, c) = t.rows_cols();
                if r != 1 || c != n {
                    return Err(shape_err("stack", first, t));
                }
                Ok(Tensor {
                    shape: vec![1, n],
                    data: Rc::clone(&t.data),
                    node: t.node,
                })
            })
            .collect::<Result<_>>()?;
        let refs: Vec<&Tensor> = as_rows.iter().collect();
        self.concat(&refs, 0)
    }

    /// Half-open range `start..end` along `axis`.
    pub fn slice(&self, x: &Tensor, axis: usize, start: usize, end: usize) -> Result<Tensor> {
        if axis >= x.shape.len() {
            return Err(AutodiffError::Axis {
                op: "slice",
                axis,
                shape: x.shape.clone(),
            });
        }
        let len = x.shape[axis];
        if start > end || end > len {
            return Err(AutodiffError::Index {
                op: "slice",
                index: end,
                len,
            });
        }
        let outer: usize = x.shape[..axis].iter().product();
        let inner: usize = x.shape[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            let base = o * len * inner;
            out.extend_from_slice(&x.data[base + start * inner..base + end * inner]);
        }
        let mut shape = x.shape.clone();
        shape[axis] = end - start;
        let op = self.node_of(x)?.map(|x| Op::Slice {
            x,
            outer,
            inner,
            len,
            start,
            end,
        });
        Ok(self.finish(shape, out, op))
    }

    pub fn sigmoid(&self, x: &Tensor) -> Result<Tensor> {
        let out: Vec<f64> = x.data.iter().map(|&v| sigmoid(v)).collect();
        self.unary(x, out, |x, out| Op::Sigmoid { x, out })
    }

    pub fn tanh(&self, x: &Tensor) -> Result<Tensor> {
        let out: Vec<f64> = x.data.iter().map(|v| v.tanh()).collect();
        self.unary(x, out, |x, out| Op::Tanh { x, out })
    }

    pub fn exp(&self, x: &Tensor) -> Result<Tensor> {
        let out: Vec<f64> = x.data.iter().map(|v| v.exp()).collect();
        self.unary(x, out, |x, out| Op::Exp { x, out })
    }

    /// Elementwise reciprocal.
    pub fn recip(&self, x: &Tensor) -> Result<Tensor> {
        let out: Vec<f64> = x.data.iter().map(|v| 1.0 / v).collect();
        self.unary(x, out, |x, out| Op::Recip { x, out })
    }

    /// Natural logarithm.
    pub fn log(&self, x: &Tensor) -> Result<Tensor> {
        let out = x.data.iter().map(|v| v.ln()).collect();
        let ox = self.operand(x)?;
        let op = ox.node.is_some().then_some(Op::Log { x: ox });
        Ok(self.finish(x.shape.clone(), out, op))
    }

    /// `max(x, lo)` elementwise; no gradient flows where the floor is active.
    pub fn clamp_min(&self, x: &Tensor, lo: f64) -> Result<Tensor> {
        let out = x
            .data
            .iter()
            .map(|&v| if v < lo { lo } else { v })
            .collect();
        let ox = self.operand(x)?;
        let op = ox.node.is_some().then_some(Op::ClampMin { x: ox, lo });
        Ok(self.finish(x.shape.clone(), out, op))
    }

    /// Elementwise minimum. On ties the gradient goes to `a`.
    pub fn minimum(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        same_shape("minimum", a, b)?;
        let out = a
            .data
            .iter()
            .zip(b.data.iter())
            .map(|(&x, &y)| if x <= y { x } else { y })
            .collect();
        let (oa, ob) = (self.operand(a)?, self.operand(b)?);
        let op = (oa.node.is_some() || ob.node.is_some()).then_some(Op::Minimum(oa, ob));
        Ok(self.finish(a.shape.clone(), out, op))
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&self, x: &Tensor, axis: usize) -> Result<Tensor> {
        if axis >= x.shape.len() {
            return Err(AutodiffError::Axis {
                op: "softmax",
                axis,
                shape: x.shape.clone(),
            });
        }
        let outer: usize = x.shape[..axis].iter().product();
        let len = x.shape[axis];
        let inner: usize = x.shape[axis + 1..].iter().product();
        let mut out = vec![0.0; x.numel()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * len * inner + j * inner + i;
                let max = (0..len)
                    .map(|j| x.data[at(j)])
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for j in 0..len {
                    let e = (x.data[at(j)] - max).exp();
                    out[at(j)] = e;
                    total += e;
                }
                for j in 0..len {
                    out[at(j)] /= total;
                }
            }
        }
        self.unary(x, out, |x, out| Op::Softmax {
            x,
            out,
            outer,
            len,
            inner,
        })
    }

    /// Rows of `table` selected by `ids`, as an `[ids.len(), dim]` matrix.
    pub fn embedding(&self, table: &Tensor, ids: &[usize]) -> Result<Tensor> {
        let (vocab, dim) = two_d("embedding", table)?;
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= vocab {
                return Err(AutodiffError::Index {
                    op: "embedding",
                    index: id,
                    len: vocab,
                });
            }
            out.extend_from_slice(&table.data[id * dim..(id + 1) * dim]);
        }
        if ids.is_empty() {
            return Err(AutodiffError::Empty { op: "embedding" });
        }
        let op = self.node_of(table)?.map(|table| Op::Embedding {
            table,
            ids: ids.to_vec(),
            dim,
        });
        Ok(self.finish(vec![ids.len(), dim], out, op))
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&self, x: &Tensor) -> Result<Tensor> {
        let total = x.data.iter().sum();
        let op = self.node_of(x)?.map(|x| Op::Sum { x });
        Ok(self.finish(vec![1], vec![total], op))
    }

    /// Picks flat-indexed elements of `x` into a `[1, idx.len()]` row.
    pub fn gather(&self, x: &Tensor, idx: &[usize]) -> Result<Tensor> {
        let n = x.numel();
        let mut out = Vec::with_capacity(idx.len());
        for &i in idx {
            if i >= n {
                return Err(AutodiffError::Index {
                    op: "gather",
                    index: i,
                    len: n,
                });
            }
            out.push(x.data[i]);
        }
        if idx.is_empty() {
            return Err(AutodiffError::Empty { op: "gather" });
        }
        let op = self.node_of(x)?.map(|x| Op::Gather {
            x,
            idx: idx.to_vec(),
        });
        Ok(self.finish(vec![1, idx.len()], out, op))
    }

    /// `out[idx[i]] += x[i]` into a zero `[1, size]` row; repeated indices sum.
    pub fn scatter_add(&self, x: &Tensor, idx: &[usize], size: usize) -> Result<Tensor> {
        if idx.len() != x.numel() {
            return Err(AutodiffError::Length {
                op: "scatter_add",
                expected: x.numel(),
                actual: idx.len(),
            });
        }
        let mut out = vec![0.0; size];
        for (&i, &v) in idx.iter().zip(x.data.iter()) {
            if i >= size {
                return Err(AutodiffError::Index {
                    op: "scatter_add",
                    index: i,
                    len: size,
                });
            }
            out[i] += v;
        }
        let op = self.node_of(x)?.map(|x| Op::ScatterAdd {
            x,
            idx: idx.to_vec(),
        });
        Ok(self.finish(vec![1, size], out, op))
    }

    pub fn reshape(&self, x: &Tensor, shape: &[usize]) -> Result<Tensor> {
        validate_shape("reshape", shape)?;
        let numel: usize = shape.iter().product();
        if numel != x.numel() {
            return Err(AutodiffError::Shape {
                op: "reshape",
                lhs: x.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        let op = self.node_of(x)?.map(|x| Op::Reshape { x });
        let node = op.map(|op| self.push(op, numel));
        Ok(Tensor {
            shape: shape.to_vec(),
            data: Rc::clone(&x.data),
            node,
        })
    }

    fn unary(
        &self,
        x: &Tensor,
        out: Vec<f64>,
        make: impl FnOnce(usize, Rc<Vec<f64>>) -> Op,
    ) -> Result<Tensor> {
        let out = Rc::new(out);
        let node = self
            .node_of(x)?
            .map(|n| self.push(make(n, Rc::clone(&out)), out.len()));
        Ok(Tensor {
            shape: x.shape.clone(),
            data: out,
            node,
        })
    }

    /// Reverse pass from a scalar `loss`. Gradients of every leaf are added
    /// to what is already stored, so repeated calls accumulate.
    pub fn backward(&self, loss: &Tensor) -> Result<()> {
        if loss.numel() != 1 {
            return Err(AutodiffError::NotScalar {
                shape: loss.shape.clone(),
            });
        }
        let root = self.node_of(loss)?.ok_or(AutodiffError::NotOnTape)?;
        let mut inner = self.inner.borrow_mut();
        let Inner {
            records,
            leaf_grads,
        } = &mut *inner;
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; root + 1];
        adj[root] = Some(vec![1.0]);
        for index in (0..=root).rev() {
            let Some(g) = adj[index].take() else { continue };
            let record = &records[index];
            backprop(&record.op, &g, &mut adj, records);
            if let Op::Leaf = record.op {
                if let Some(acc) = leaf_grads[index].as_mut() {
                    acc.iter_mut().zip(g.iter()).for_each(|(a, v)| *a += v);
                }
            }
        }
        Ok(())
    }
}

fn slot<'a>(adj: &'a mut [Option<Vec<f64>>], records: &[Record], node: usize) -> &'a mut [f64] {
    adj[node].get_or_insert_with(|| vec![0.0; records[node].numel])
}

fn backprop(op: &Op, g: &[f64], adj: &mut [Option<Vec<f64>>], records: &[Record]) {
    match op {
        Op::Leaf => {}
        Op::MatMul { a, b, m, k, n } => {
            let (m, k, n) = (*m, *k, *n);
            if let Some(na) = a.node {
                // dA = G · Bᵀ
                let da = slot(adj, records, na);
                for i in 0..m {
                    for j in 0..n {
                        let gij = g[i * n + j];
                        if gij == 0.0 {
                            continue;
                        }
                        for p in 0..k {
                            da[i * k + p] += gij * b.value[p * n + j];
                        }
                    }
                }
            }
            if let Some(nb) = b.node {
                // dB = Aᵀ · G
                let db = slot(adj, records, nb);
                for i in 0..m {
                    for p in 0..k {
                        let aip = a.value[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        let row = &mut db[p * n..(p + 1) * n];
                        row.iter_mut()
                            .zip(&g[i * n..(i + 1) * n])
                            .for_each(|(d, gv)| *d += aip * gv);
                    }
                }
            }
        }
        Op::Add(a, b) => {
            for n in [a, b].into_iter().flatten() {
                add_into(slot(adj, records, *n), g);
            }
        }
        Op::Sub(a, b) => {
            if let Some(n) = a {
                add_into(slot(adj, records, *n), g);
            }
            if let Some(n) = b {
                slot(adj, records, *n)
                    .iter_mut()
                    .zip(g)
                    .for_each(|(d, v)| *d -= v);
            }
        }
        Op::Mul(a, b) => {
            if let Some(n) = a.node {
                let d = slot(adj, records, n);
                for i in 0..g.len() {
                    d[i] += g[i] * b.value[i];
                }
            }
            if let Some(n) = b.node {
                let d = slot(adj, records, n);
                for i in 0..g.len() {
                    d[i] += g[i] * a.value[i];
                }
            }
        }
        Op::AddRow {
            mat,
            row,
            rows,
            cols,
        } => {
            if let Some(n) = mat {
                add_into(slot(adj, records, *n), g);
            }
            if let Some(n) = row {
                let d = slot(adj, records, *n);
                for r in 0..*rows {
                    add_into(d, &g[r * cols..(r + 1) * cols]);
                }
            }
        }
        Op::Scale { x, s } => {
            let c = s.value[0];
            if let Some(n) = x.node {
                slot(adj, records, n)
                    .iter_mut()
                    .zip(g)
                    .for_each(|(d, v)| *d += v * c);
            }
            if let Some(n) = s.node {
                let ds: f64 = g.iter().zip(x.value.iter()).map(|(a, b)| a * b).sum();
                slot(adj, records, n)[0] += ds;
            }
        }
        Op::ScalarMul { x, c } => {
            slot(adj, records, *x)
                .iter_mut()
                .zip(g)
                .for_each(|(d, v)| *d += v * c);
        }
        Op::Concat {
            parts,
            outer,
            inner,
            total,
        } => {
            let mut offset = 0;
            for (node, size) in parts {
                if let Some(n) = node {
                    let d = slot(adj, records, *n);
                    let block = size * inner;
                    for o in 0..*outer {
                        let src = o * total * inner + offset * inner;
                        add_into(&mut d[o * block..(o + 1) * block], &g[src..src + block]);
                    }
                }
                offset += size;
            }
        }
        Op::Slice {
            x,
            outer,
            inner,
            len,
            start,
            end,
        } => {
            let d = slot(adj, records, *x);
            let block = (end - start) * inner;
            for o in 0..*outer {
                let dst = o * len * inner + start * inner;
                add_into(&mut d[dst..dst + block], &g[o * block..(o + 1) * block]);
            }
        }
        Op::Sigmoid { x, out } => {
            let d = slot(adj, records, *x);
            for i in 0..g.len() {
                d[i] += g[i] * out[i] * (1.0 - out[i]);
            }
        }
        Op::Tanh { x, out } => {
            let d = slot(adj, records, *x);
            for i in 0..g.len() {
                d[i] += g[i] * (1.0 - out[i] * out[i]);
            }
        }
        Op::Exp { x, out } => {
            let d = slot(adj, records, *x);
            for i in 0..g.len() {
                d[i] += g[i] * out[i];
            }
        }
        Op::Log { x } => {
            if let Some(n) = x.node {
                let d = slot(adj, records, n);
                for i in 0..g.len() {
                    d[i] += g[i] / x.value[i];
                }
            }
        }
        Op::Recip { x, out } => {
            let d = slot(adj, records, *x);
            for i in 0..g.len() {
                d[i] -= g[i] * out[i] * out[i];
            }
        }
        Op::Softmax {
            x,
            out,
            outer,
            len,
            inner,
        } => {
            let d = slot(adj, records, *x);
            for o in 0..*outer {
                for i in 0..*inner {
                    let at = |j: usize| o * len * inner + j * inner + i;
                    let dot: f64 = (0..*len).map(|j| g[at(j)] * out[at(j)]).sum();
                    for j in 0..*len {
                        d[at(j)] += out[at(j)] * (g[at(j)] - dot);
                    }
                }
            }
        }
        Op::ClampMin { x, lo } => {
            if let Some(n) = x.node {
                let d = slot(adj, records, n);
                for i in 0..g.len() {
                    if x.value[i] >= *lo {
                        d[i] += g[i];
                    }
                }
            }
        }
        Op::Minimum(a, b) => {
            for i in 0..g.len() {
                let a_wins = a.value[i] <= b.value[i];
                let target = if a_wins { a.node } else { b.node };
                if let Some(n) = target {
                    slot(adj, records, n)[i] += g[i];
                }
            }
        }
        Op::Embedding { table, ids, dim } => {
            let d = slot(adj, records, *table);
            for (row, &id) in ids.iter().enumerate() {
                add_into(
                    &mut d[id * dim..(id + 1) * dim],
                    &g[row * dim..(row + 1) * dim],
                );
            }
        }
        Op::Sum { x } => {
            let g0 = g[0];
            slot(adj, records, *x).iter_mut().for_each(|d| *d += g0);
        }
        Op::Gather { x, idx } => {
            let d = slot(adj, records, *x);
            for (k, &i) in idx.iter().enumerate() {
                d[i] += g[k];
            }
        }
        Op::ScatterAdd { x, idx } => {
            let d = slot(adj, records, *x);
            for (k, &i) in idx.iter().enumerate() {
                d[k] += g[i];
            }
        }
        Op::Reshape { x } => add_into(slot(adj, records, *x), g),
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            row.iter_mut()
                .zip(&b[p * n..(p + 1) * n])
                .for_each(|(o, bv)| *o += aip * bv);
        }
    }
    out
}

fn two_d(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match t.shape.as_slice() {
        [r, c] => Ok((*r, *c)),
        _ => Err(AutodiffError::Rank {
            op,
            shape: t.shape.clone(),
        }),
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(shape_err(op, a, b));
    }
    Ok(())
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> AutodiffError {
    AutodiffError::Shape {
        op,
        lhs: a.shape.clone(),
        rhs: b.shape.clone(),
    }
}
