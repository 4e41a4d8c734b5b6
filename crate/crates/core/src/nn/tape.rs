//! Reverse-mode differentiation over row-major 2-D blocks.
//!
//! A [`Tape`] is built fresh for every forward pass. Parameters are read
//! from a borrowed [`ParamStore`], so any number of tapes can run against
//! the same frozen store concurrently. [`Tape::backward`] consumes the tape
//! and returns [`Gradients`], which the caller folds back into the store.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::params::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Const,
    Param(ParamId),
    Gather { src: Var, idx: Vec<usize> },
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Concat(Vec<Var>),
    RepeatSegments { src: Var, lens: Vec<usize> },
    SegmentPool {
        scores: Var,
        items: Var,
        lens: Vec<usize>,
        normalize: bool,
        weights: Vec<f64>,
    },
    ScaleRows(Var, Var),
    Bce { p: Var, t: Var, clamp: f64 },
    Mean(Var),
    Sum(Var),
}

struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, Var>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    /// Scalar value of a `[1, 1]` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, rows: usize, cols: usize, value: Vec<f64>) -> Result<Var> {
        if rows * cols != value.len() {
            return Err(Error::contract(format!(
                "constant of shape [{rows}, {cols}] given {} values",
                value.len()
            )));
        }
        Ok(self.push(rows, cols, value, Op::Const))
    }

    /// Copies `v`'s value into a new node that gradients do not flow through.
    pub fn detach(&mut self, v: Var) -> Var {
        let (r, c) = self.shape(v);
        let value = self.nodes[v.0].value.clone();
        self.push(r, c, value, Op::Const)
    }

    /// The parameter as a node. Vectors become `[1, n]`; repeated requests
    /// return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        let t = self.params.value(id);
        let (r, c) = (t.rows(), t.cols());
        let v = self.push(r, c, t.values().to_vec(), Op::Param(id));
        self.param_nodes.insert(id, v);
        v
    }

    /// Selects rows of `src` (an embedding lookup when `src` is a table).
    pub fn gather(&mut self, src: Var, idx: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(src);
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= r {
                return Err(Error::IndexOutOfRange {
                    what: "embedding lookup".into(),
                    index: i,
                    vocab: r,
                });
            }
            out.extend_from_slice(&self.nodes[src.0].value[i * c..(i + 1) * c]);
        }
        Ok(self.push(
            idx.len(),
            c,
            out,
            Op::Gather {
                src,
                idx: idx.to_vec(),
            },
        ))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul",
                left: vec![m, k],
                right: vec![k2, n],
            });
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            &self.nodes[a.0].value,
            (k as isize, 1),
            &self.nodes[b.0].value,
            (n as isize, 1),
            &mut out,
        );
        Ok(self.push(m, n, out, Op::MatMul(a, b)))
    }

    /// `x [r, c] + b` with `b` broadcast over rows (`b` holds `c` values).
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        let (br, bc) = self.shape(b);
        if br * bc != c {
            return Err(Error::Shape {
                op: "add_bias",
                left: vec![r, c],
                right: vec![br, bc],
            });
        }
        let bv = &self.nodes[b.0].value;
        let mut out = self.nodes[x.0].value.clone();
        for row in out.chunks_exact_mut(c.max(1)) {
            for (o, bb) in row.iter_mut().zip(bv) {
                *o += bb;
            }
        }
        Ok(self.push(r, c, out, Op::AddBias(x, b)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(usize, usize)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::Shape {
                op,
                left: vec![sa.0, sa.1],
                right: vec![sb.0, sb.1],
            });
        }
        Ok(sa)
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (r, c) = self.shape(a);
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(&x, &y)| f(x, y))
            .collect();
        self.push(r, c, out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x + y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b)))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let (r, c) = self.shape(a);
        let out = self.nodes[a.0].value.iter().map(|&x| f(x)).collect();
        self.push(r, c, out, op)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.map(a, |x| x * k, Op::Scale(a, k))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    /// Concatenates along columns; all parts need the same row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::contract("concat of zero tensors"));
        };
        let rows = self.shape(first).0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(Error::Shape {
                    op: "concat",
                    left: vec![rows, self.shape(first).1],
                    right: vec![r, c],
                });
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                let c = self.nodes[p.0].cols;
                out.extend_from_slice(&self.nodes[p.0].value[i * c..(i + 1) * c]);
            }
        }
        Ok(self.push(rows, cols, out, Op::Concat(parts.to_vec())))
    }

    /// Row `b` of `src` repeated `lens[b]` times, segments laid out in order.
    pub fn repeat_segments(&mut self, src: Var, lens: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(src);
        if lens.len() != r {
            return Err(Error::Shape {
                op: "repeat_segments",
                left: vec![r, c],
                right: vec![lens.len()],
            });
        }
        let total: usize = lens.iter().sum();
        let mut out = Vec::with_capacity(total * c);
        for (b, &n) in lens.iter().enumerate() {
            let row = &self.nodes[src.0].value[b * c..(b + 1) * c];
            for _ in 0..n {
                out.extend_from_slice(row);
            }
        }
        Ok(self.push(
            total,
            c,
            out,
            Op::RepeatSegments {
                src,
                lens: lens.to_vec(),
            },
        ))
    }

    /// Attention pooling over variable-length segments.
    ///
    /// `scores` is `[T, 1]` and `items` is `[T, d]` with `T = Σ lens`. Each
    /// segment pools to `Σ w_i · item_i` where `w` is the softmax of its
    /// scores (or the raw scores when `normalize` is false). An empty segment
    /// pools to zeros.
    pub fn segment_pool(
        &mut self,
        scores: Var,
        items: Var,
        lens: &[usize],
        normalize: bool,
    ) -> Result<Var> {
        let total: usize = lens.iter().sum();
        let (sr, sc) = self.shape(scores);
        let (ir, d) = self.shape(items);
        if sc != 1 || sr != total || ir != total {
            return Err(Error::Shape {
                op: "segment_pool",
                left: vec![sr, sc],
                right: vec![ir, d],
            });
        }
        let s = &self.nodes[scores.0].value;
        let it = &self.nodes[items.0].value;
        let mut weights = Vec::with_capacity(total);
        let mut out = vec![0.0; lens.len() * d];
        let mut off = 0;
        for (b, &n) in lens.iter().enumerate() {
            let seg = &s[off..off + n];
            if normalize && n > 0 {
                let m = seg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let start = weights.len();
                weights.extend(seg.iter().map(|&x| (x - m).exp()));
                let z: f64 = weights[start..].iter().sum();
                weights[start..].iter_mut().for_each(|w| *w /= z);
            } else {
                weights.extend_from_slice(seg);
            }
            let o = &mut out[b * d..(b + 1) * d];
            for i in 0..n {
                let w = weights[off + i];
                let row = &it[(off + i) * d..(off + i + 1) * d];
                for (acc, x) in o.iter_mut().zip(row) {
                    *acc += w * x;
                }
            }
            off += n;
        }
        Ok(self.push(
            lens.len(),
            d,
            out,
            Op::SegmentPool {
                scores,
                items,
                lens: lens.to_vec(),
                normalize,
                weights,
            },
        ))
    }

    /// Attention weights recorded by a [`Tape::segment_pool`] node.
    pub fn pool_weights(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::SegmentPool { weights, .. } => Some(weights),
            _ => None,
        }
    }

    /// Multiplies each row of `x [r, c]` by the matching entry of `s [r, 1]`.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        let (sr, sc) = self.shape(s);
        if sr != r || sc != 1 {
            return Err(Error::Shape {
                op: "scale_rows",
                left: vec![r, c],
                right: vec![sr, sc],
            });
        }
        let sv = &self.nodes[s.0].value;
        let mut out = self.nodes[x.0].value.clone();
        for (i, row) in out.chunks_exact_mut(c.max(1)).enumerate() {
            row.iter_mut().for_each(|v| *v *= sv[i]);
        }
        Ok(self.push(r, c, out, Op::ScaleRows(x, s)))
    }

    /// Elementwise binary cross entropy `−[t ln p + (1 − t) ln(1 − p)]` with
    /// `p` clamped into `[clamp, 1 − clamp]`. Gradient reaches `t` unless it
    /// is a constant or detached node.
    pub fn bce(&mut self, p: Var, t: Var, clamp: f64) -> Result<Var> {
        let (r, c) = self.same_shape("bce", p, t)?;
        let out = self.nodes[p.0]
            .value
            .iter()
            .zip(&self.nodes[t.0].value)
            .map(|(&pv, &tv)| {
                let q = pv.clamp(clamp, 1.0 - clamp);
                -(tv * q.ln() + (1.0 - tv) * (1.0 - q).ln())
            })
            .collect();
        Ok(self.push(r, c, out, Op::Bce { p, t, clamp }))
    }

    /// Mean over every element, as a `[1, 1]` node. Empty input means zero.
    pub fn mean(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let m = if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        };
        self.push(1, 1, vec![m], Op::Mean(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.iter().sum();
        self.push(1, 1, vec![s], Op::Sum(a))
    }

    /// Propagates from the scalar `loss` back to every node.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let (r, c) = self.shape(loss);
        if r * c != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape [{r}, {c}]"
            )));
        }
        let nodes = self.nodes;
        let mut grads: Vec<Vec<f64>> = nodes.iter().map(|_| Vec::new()).collect();
        grads[loss.0] = vec![1.0];

        for i in (0..=loss.0).rev() {
            if grads[i].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut grads[i]);
            let node = &nodes[i];
            match &node.op {
                Op::Const | Op::Param(_) => {}
                Op::Gather { src, idx } => {
                    let c = node.cols;
                    let dst = slot(&mut grads, &nodes, *src);
                    for (k, &row) in idx.iter().enumerate() {
                        for j in 0..c {
                            dst[row * c + j] += g[k * c + j];
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (m, k) = (nodes[a.0].rows, nodes[a.0].cols);
                    let n = nodes[b.0].cols;
                    // dA = dC · Bᵀ
                    gemm(
                        m,
                        n,
                        k,
                        &g,
                        (n as isize, 1),
                        &nodes[b.0].value,
                        (1, n as isize),
                        slot(&mut grads, &nodes, *a),
                    );
                    // dB = Aᵀ · dC
                    gemm(
                        k,
                        m,
                        n,
                        &nodes[a.0].value,
                        (1, k as isize),
                        &g,
                        (n as isize, 1),
                        slot(&mut grads, &nodes, *b),
                    );
                }
                Op::AddBias(x, b) => {
                    let c = node.cols;
                    add_into(slot(&mut grads, &nodes, *x), &g);
                    let db = slot(&mut grads, &nodes, *b);
                    for row in g.chunks_exact(c.max(1)) {
                        add_into(db, row);
                    }
                }
                Op::Add(a, b) => {
                    add_into(slot(&mut grads, &nodes, *a), &g);
                    add_into(slot(&mut grads, &nodes, *b), &g);
                }
                Op::Sub(a, b) => {
                    add_into(slot(&mut grads, &nodes, *a), &g);
                    let db = slot(&mut grads, &nodes, *b);
                    db.iter_mut().zip(&g).for_each(|(d, x)| *d -= x);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                    let da = slot(&mut grads, &nodes, *a);
                    for j in 0..g.len() {
                        da[j] += g[j] * bv[j];
                    }
                    let db = slot(&mut grads, &nodes, *b);
                    for j in 0..g.len() {
                        db[j] += g[j] * av[j];
                    }
                }
                Op::Scale(a, k) => {
                    let da = slot(&mut grads, &nodes, *a);
                    da.iter_mut().zip(&g).for_each(|(d, x)| *d += k * x);
                }
                Op::Relu(a) => {
                    let av = &nodes[a.0].value;
                    let da = slot(&mut grads, &nodes, *a);
                    for j in 0..g.len() {
                        if av[j] > 0.0 {
                            da[j] += g[j];
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let da = slot(&mut grads, &nodes, *a);
                    for j in 0..g.len() {
                        da[j] += g[j] * y[j] * (1.0 - y[j]);
                    }
                }
                Op::Concat(parts) => {
                    let rows = node.rows;
                    let cols = node.cols;
                    let mut off = 0;
                    for p in parts {
                        let c = nodes[p.0].cols;
                        let dp = slot(&mut grads, &nodes, *p);
                        for r in 0..rows {
                            add_into(
                                &mut dp[r * c..(r + 1) * c],
                                &g[r * cols + off..r * cols + off + c],
                            );
                        }
                        off += c;
                    }
                }
                Op::RepeatSegments { src, lens } => {
                    let c = node.cols;
                    let ds = slot(&mut grads, &nodes, *src);
                    let mut t = 0;
                    for (b, &n) in lens.iter().enumerate() {
                        for _ in 0..n {
                            add_into(&mut ds[b * c..(b + 1) * c], &g[t * c..(t + 1) * c]);
                            t += 1;
                        }
                    }
                }
                Op::SegmentPool {
                    scores,
                    items,
                    lens,
                    normalize,
                    weights,
                } => {
                    let d = node.cols;
                    let itv = &nodes[items.0].value;
                    let mut dw = vec![0.0; weights.len()];
                    {
                        let di = slot(&mut grads, &nodes, *items);
                        let mut off = 0;
                        for (b, &n) in lens.iter().enumerate() {
                            let gb = &g[b * d..(b + 1) * d];
                            for i in off..off + n {
                                let row = &itv[i * d..(i + 1) * d];
                                dw[i] = row.iter().zip(gb).map(|(x, y)| x * y).sum();
                                for j in 0..d {
                                    di[i * d + j] += weights[i] * gb[j];
                                }
                            }
                            off += n;
                        }
                    }
                    let ds = slot(&mut grads, &nodes, *scores);
                    let mut off = 0;
                    for &n in lens {
                        if *normalize {
                            let dot: f64 = (off..off + n).map(|i| weights[i] * dw[i]).sum();
                            for i in off..off + n {
                                ds[i] += weights[i] * (dw[i] - dot);
                            }
                        } else {
                            for i in off..off + n {
                                ds[i] += dw[i];
                            }
                        }
                        off += n;
                    }
                }
                Op::ScaleRows(x, s) => {
                    let c = node.cols;
                    let (xv, sv) = (&nodes[x.0].value, &nodes[s.0].value);
                    {
                        let dx = slot(&mut grads, &nodes, *x);
                        for r in 0..node.rows {
                            for j in 0..c {
                                dx[r * c + j] += g[r * c + j] * sv[r];
                            }
                        }
                    }
                    let ds = slot(&mut grads, &nodes, *s);
                    for r in 0..node.rows {
                        ds[r] += (0..c).map(|j| g[r * c + j] * xv[r * c + j]).sum::<f64>();
                    }
                }
                Op::Bce { p, t, clamp } => {
                    let (pv, tv) = (&nodes[p.0].value, &nodes[t.0].value);
                    {
                        let dp = slot(&mut grads, &nodes, *p);
                        for j in 0..g.len() {
                            let q = pv[j];
                            if q > *clamp && q < 1.0 - clamp {
                                dp[j] += g[j] * (-tv[j] / q + (1.0 - tv[j]) / (1.0 - q));
                            }
                        }
                    }
                    if !matches!(nodes[t.0].op, Op::Const) {
                        let dt = slot(&mut grads, &nodes, *t);
                        for j in 0..g.len() {
                            let q = pv[j].clamp(*clamp, 1.0 - clamp);
                            dt[j] += g[j] * ((1.0 - q).ln() - q.ln());
                        }
                    }
                }
                Op::Mean(a) => {
                    let n = nodes[a.0].value.len();
                    if n > 0 {
                        let k = g[0] / n as f64;
                        slot(&mut grads, &nodes, *a).iter_mut().for_each(|d| *d += k);
                    }
                }
                Op::Sum(a) => {
                    let k = g[0];
                    slot(&mut grads, &nodes, *a).iter_mut().for_each(|d| *d += k);
                }
            }
            grads[i] = g;
        }

        let params = nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(id) => Some((id, i)),
                _ => None,
            })
            .collect();
        Ok(Gradients {
            grads,
            params,
        })
    }
}

/// Result of [`Tape::backward`]: the gradient of the loss with respect to
/// every recorded node.
pub struct Gradients {
    grads: Vec<Vec<f64>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    /// Gradient with respect to `v`; all zeros when the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads
            .get(v.0)
            .map(|g| g.as_slice())
            .filter(|g| !g.is_empty())
    }

    /// Parameter gradients, one entry per parameter the tape read.
    pub fn params(&self) -> impl Iterator<Item = (ParamId, &[f64])> + '_ {
        self.params
            .iter()
            .filter(|(_, i)| !self.grads[*i].is_empty())
            .map(|(id, i)| (*id, self.grads[*i].as_slice()))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn slot<'a>(grads: &'a mut [Vec<f64>], nodes: &[Node], v: Var) -> &'a mut [f64] {
    let g = &mut grads[v.0];
    if g.is_empty() {
        *g = vec![0.0; nodes[v.0].value.len()];
    }
    g
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

/// `c += a · b` for an `m × k` by `k × n` product with arbitrary strides
/// given as `(row_stride, col_stride)`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    c: &mut [f64],
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    // SAFETY: strides describe in-bounds views of `a` (m×k), `b` (k×n) and
    // `c` (m×n, row-major), all checked by the shape logic of the callers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
