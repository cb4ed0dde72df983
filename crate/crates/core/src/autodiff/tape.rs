use std::sync::Arc;

use super::params::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::hierarchy::{CliqueIndexMatrix, PoolMode};
use crate::matrix::Matrix;

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Arc<[usize]>),
    ScatterAdd(Var, Arc<[usize]>),
    Pool(Var, Arc<CliqueIndexMatrix>, PoolMode),
    Unpool(Var, Arc<[usize]>),
    LayerNorm { x: Var, gain: Var, bias: Var, normalized: Matrix, inv_std: Vec<f64> },
    Mse(Var, Var),
    Sum(Var),
}

struct Node {
    /// `None` for parameters, which are read from the store.
    value: Option<Matrix>,
    op: Op,
}

/// Records matrix operations for one forward pass so that
/// [`Tape::backward`] can return exact gradients.
///
/// Parameters are borrowed from a [`ParamStore`], never copied. Nodes are
/// appended in evaluation order, so parents always precede children.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self { params, nodes: Vec::new(), param_vars: vec![None; params.len()] }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn value(&self, v: Var) -> &Matrix {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(m), _) => m,
            (None, Op::Param(id)) => self.params.get(*id),
            (None, _) => unreachable!("only parameters are stored out of line"),
        }
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value: Some(value), op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.index()] {
            return v;
        }
        self.nodes.push(Node { value: None, op: Op::Param(id) });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.index()] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// Adds a `1 x C` row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(shape("add_bias", xv, bv));
        }
        let mut out = xv.clone();
        let b = bv.as_slice();
        for r in 0..out.rows() {
            for (o, bb) in out.row_mut(r).iter_mut().zip(b) {
                *o += bb;
            }
        }
        Ok(self.push(out, Op::AddBias(x, bias)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape("add", av, bv));
        }
        let mut out = av.clone();
        out.add_assign(bv);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let out = self.value(x).map(|v| v * s);
        self.push(out, Op::Scale(x, s))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        self.push(out, Op::Relu(x))
    }

    /// Joins matrices side by side: row `r` of the result is the
    /// concatenation of row `r` of every part.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::ShapeMismatch("concat_cols: row counts differ".into()));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.row_mut(r)[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn gather_rows(&mut self, x: Var, idx: Arc<[usize]>) -> Result<Var> {
        let xv = self.value(x);
        check_indices(&idx, xv.rows())?;
        let out = xv.gather_rows(&idx);
        Ok(self.push(out, Op::GatherRows(x, idx)))
    }

    /// Sums row `r` of `x` into output row `dest[r]`, visiting rows in
    /// order. Output has `n_out` rows; untouched rows are zero.
    pub fn scatter_add(&mut self, x: Var, dest: Arc<[usize]>, n_out: usize) -> Result<Var> {
        let xv = self.value(x);
        if dest.len() != xv.rows() {
            return Err(Error::ShapeMismatch(format!(
                "scatter_add: {} destinations for {} rows",
                dest.len(),
                xv.rows()
            )));
        }
        check_indices(&dest, n_out)?;
        let mut out = Matrix::zeros(n_out, xv.cols());
        for (r, &d) in dest.iter().enumerate() {
            for (o, v) in out.row_mut(d).iter_mut().zip(xv.row(r)) {
                *o += v;
            }
        }
        Ok(self.push(out, Op::ScatterAdd(x, dest)))
    }

    pub fn pool(&mut self, x: Var, index: Arc<CliqueIndexMatrix>, mode: PoolMode) -> Result<Var> {
        let out = crate::hierarchy::pool_features(self.value(x), &index, mode)?;
        Ok(self.push(out, Op::Pool(x, index, mode)))
    }

    /// Broadcasts clique rows back to their members; `assignment[v]` is the
    /// clique holding node `v`.
    pub fn unpool(&mut self, x: Var, assignment: Arc<[usize]>) -> Result<Var> {
        let xv = self.value(x);
        check_indices(&assignment, xv.rows())?;
        let out = xv.gather_rows(&assignment);
        Ok(self.push(out, Op::Unpool(x, assignment)))
    }

    /// Row-wise normalisation with learned `1 x C` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.cols();
        for p in [gain, bias] {
            let pv = self.value(p);
            if pv.shape() != (1, c) {
                return Err(shape("layer_norm", xv, pv));
            }
        }
        let (g, b) = (self.value(gain).as_slice(), self.value(bias).as_slice());
        let mut normalized = Matrix::zeros(xv.rows(), c);
        let mut out = Matrix::zeros(xv.rows(), c);
        let mut inv_std = Vec::with_capacity(xv.rows());
        for r in 0..xv.rows() {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(inv);
            let nrow = normalized.row_mut(r);
            for (n, v) in nrow.iter_mut().zip(row) {
                *n = (v - mean) * inv;
            }
            let nrow = normalized.row(r).to_vec();
            for (k, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = nrow[k] * g[k] + b[k];
            }
        }
        Ok(self.push(out, Op::LayerNorm { x, gain, bias, normalized, inv_std }))
    }

    /// Mean of squared differences, as a `1 x 1` value.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() {
            return Err(shape("mse", p, t));
        }
        let n = p.len().max(1) as f64;
        let s: f64 = p.as_slice().iter().zip(t.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(self.push(Matrix::filled(1, 1, s / n), Op::Mse(pred, target)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Matrix::filled(1, 1, s), Op::Sum(x))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Autodiff("backward called on a value that was never recorded".into()));
        }
        if self.value(loss).shape() != (1, 1) {
            let (r, c) = self.value(loss).shape();
            return Err(Error::Autodiff(format!("loss must be scalar, got {r}x{c}")));
        }
        let mut grads: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Constant | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = slot(&mut grads, *a, av);
                    Matrix::gemm_into(&g, false, bv, true, 1.0, ga);
                    let gb = slot(&mut grads, *b, bv);
                    Matrix::gemm_into(av, true, &g, false, 1.0, gb);
                }
                Op::AddBias(x, bias) => {
                    slot(&mut grads, *x, self.value(*x)).add_assign(&g);
                    let gb = slot(&mut grads, *bias, self.value(*bias)).as_mut_slice();
                    for r in 0..g.rows() {
                        for (acc, v) in gb.iter_mut().zip(g.row(r)) {
                            *acc += v;
                        }
                    }
                }
                Op::Add(a, b) => {
                    slot(&mut grads, *a, self.value(*a)).add_assign(&g);
                    slot(&mut grads, *b, self.value(*b)).add_assign(&g);
                }
                Op::Scale(x, s) => {
                    let gx = slot(&mut grads, *x, self.value(*x));
                    for (acc, v) in gx.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *acc += s * v;
                    }
                }
                Op::Relu(x) => {
                    let out = self.nodes[i].value.as_ref().unwrap();
                    let gx = slot(&mut grads, *x, self.value(*x));
                    for ((acc, v), o) in gx.as_mut_slice().iter_mut().zip(g.as_slice()).zip(out.as_slice()) {
                        if *o > 0.0 {
                            *acc += v;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let pv = self.value(*p);
                        let w = pv.cols();
                        let gp = slot(&mut grads, *p, pv);
                        for r in 0..g.rows() {
                            for (acc, v) in gp.row_mut(r).iter_mut().zip(&g.row(r)[offset..offset + w]) {
                                *acc += v;
                            }
                        }
                        offset += w;
                    }
                }
                Op::GatherRows(x, idx) | Op::Unpool(x, idx) => {
                    let gx = slot(&mut grads, *x, self.value(*x));
                    for (r, &src) in idx.iter().enumerate() {
                        for (acc, v) in gx.row_mut(src).iter_mut().zip(g.row(r)) {
                            *acc += v;
                        }
                    }
                }
                Op::ScatterAdd(x, dest) => {
                    let gx = slot(&mut grads, *x, self.value(*x));
                    for (r, &d) in dest.iter().enumerate() {
                        for (acc, v) in gx.row_mut(r).iter_mut().zip(g.row(d)) {
                            *acc += v;
                        }
                    }
                }
                Op::Pool(x, index, mode) => {
                    let gx = slot(&mut grads, *x, self.value(*x));
                    for (r, (row, &size)) in index.rows().iter().zip(index.sizes()).enumerate() {
                        let (members, weight): (&[usize], f64) = match mode {
                            PoolMode::Padded => (&row[..], 1.0 / 3.0),
                            PoolMode::TrueMean => (&row[..size as usize], 1.0 / size as f64),
                        };
                        for &m in members {
                            for (acc, v) in gx.row_mut(m).iter_mut().zip(g.row(r)) {
                                *acc += v * weight;
                            }
                        }
                    }
                }
                Op::LayerNorm { x, gain, bias, normalized, inv_std } => {
                    let c = normalized.cols();
                    let gain_v = self.value(*gain).as_slice().to_vec();
                    {
                        let gg = slot(&mut grads, *gain, self.value(*gain)).as_mut_slice();
                        for r in 0..g.rows() {
                            for k in 0..c {
                                gg[k] += g.row(r)[k] * normalized.row(r)[k];
                            }
                        }
                    }
                    {
                        let gb = slot(&mut grads, *bias, self.value(*bias)).as_mut_slice();
                        for r in 0..g.rows() {
                            for (acc, v) in gb.iter_mut().zip(g.row(r)) {
                                *acc += v;
                            }
                        }
                    }
                    let gx = slot(&mut grads, *x, self.value(*x));
                    let mut dn = vec![0.0; c];
                    for r in 0..g.rows() {
                        let nrow = normalized.row(r);
                        for k in 0..c {
                            dn[k] = g.row(r)[k] * gain_v[k];
                        }
                        let mean_dn = dn.iter().sum::<f64>() / c as f64;
                        let mean_dn_n = dn.iter().zip(nrow).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                        for (k, acc) in gx.row_mut(r).iter_mut().enumerate() {
                            *acc += inv_std[r] * (dn[k] - mean_dn - nrow[k] * mean_dn_n);
                        }
                    }
                }
                Op::Mse(pred, target) => {
                    let (p, t) = (self.value(*pred), self.value(*target));
                    let scale = 2.0 * g[(0, 0)] / p.len().max(1) as f64;
                    let diff: Vec<f64> = p.as_slice().iter().zip(t.as_slice()).map(|(a, b)| a - b).collect();
                    for (acc, d) in slot(&mut grads, *pred, p).as_mut_slice().iter_mut().zip(&diff) {
                        *acc += scale * d;
                    }
                    for (acc, d) in slot(&mut grads, *target, t).as_mut_slice().iter_mut().zip(&diff) {
                        *acc -= scale * d;
                    }
                }
                Op::Sum(x) => {
                    let s = g[(0, 0)];
                    for acc in slot(&mut grads, *x, self.value(*x)).as_mut_slice() {
                        *acc += s;
                    }
                }
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads, param_vars: self.param_vars.clone() })
    }
}

fn slot<'g>(grads: &'g mut [Option<Matrix>], v: Var, like: &Matrix) -> &'g mut Matrix {
    grads[v.0].get_or_insert_with(|| Matrix::zeros(like.rows(), like.cols()))
}

fn shape(op: &str, a: &Matrix, b: &Matrix) -> Error {
    Error::ShapeMismatch(format!(
        "{op}: {}x{} vs {}x{}",
        a.rows(),
        a.cols(),
        b.rows(),
        b.cols()
    ))
}

fn check_indices(idx: &[usize], len: usize) -> Result<()> {
    match idx.iter().find(|&&i| i >= len) {
        Some(&index) => Err(Error::IndexOutOfRange { index, len }),
        None => Ok(()),
    }
}

/// Result of a reverse sweep.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    param_vars: Vec<Option<Var>>,
}

impl Gradients {
    /// Gradient of the loss with respect to a recorded value, if it
    /// influenced the loss.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// One gradient per stored parameter, zero where a parameter was unused.
    pub fn param_grads(&self, store: &ParamStore) -> Vec<Matrix> {
        store
            .iter()
            .map(|(id, _, value)| {
                self.param_vars[id.index()]
                    .and_then(|v| self.get(v).cloned())
                    .unwrap_or_else(|| Matrix::zeros(value.rows(), value.cols()))
            })
            .collect()
    }
}
