//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends a node holding its forward value and the handles
//! of its inputs. [`Tape::backward`] walks the nodes in reverse, so a node's
//! gradient is complete before it is propagated to its inputs.

use std::collections::HashMap;

use crate::error::{Error, Result};

use super::matrix::Matrix;
use super::param::{ParamId, ParamStore};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    ShiftRows(Var, isize),
    OuterSum(Var, Var),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Softmax(Var),
    Mse(Var, Var),
    SumSquares(Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Computation record for one forward pass over a fixed parameter store.
pub struct Tape<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

fn softmax_row(src: &[f64], mask: Option<&[bool]>, dst: &mut [f64]) {
    let keep = |j: usize| mask.is_none_or(|m| m[j]);
    let max = src.iter().enumerate().filter(|&(j, _)| keep(j)).fold(f64::NEG_INFINITY, |m, (_, &v)| m.max(v));
    if max == f64::NEG_INFINITY {
        dst.fill(0.0);
        return;
    }
    let mut total = 0.0;
    for (j, (d, &s)) in dst.iter_mut().zip(src).enumerate() {
        *d = if keep(j) { (s - max).exp() } else { 0.0 };
        total += *d;
    }
    for d in dst.iter_mut() {
        *d /= total;
    }
}

/// Row-wise softmax with row-max subtraction. Masked-out entries (mask
/// `false`) get weight exactly 0; a fully masked row is all zeros.
pub fn softmax_rows_value(x: &Matrix, mask: Option<&[bool]>) -> Matrix {
    let mut out = Matrix::zeros(x.rows(), x.cols());
    let c = x.cols();
    for i in 0..x.rows() {
        let m = mask.map(|m| &m[i * c..(i + 1) * c]);
        softmax_row(x.row(i), m, out.row_mut(i));
    }
    out
}

impl<'s> Tape<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Tape { store, nodes: Vec::new(), params: HashMap::new() }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Input)
    }

    /// The parameter's value as a leaf; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(self.store.value(id).clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// `x + b` with the `1×c` row `b` broadcast over the rows of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::Shape(format!("add_row {:?} + {:?}", xv.shape(), bv.shape())));
        }
        let mut out = xv.clone();
        for i in 0..out.rows() {
            for (o, &bj) in out.row_mut(i).iter_mut().zip(bv.data()) {
                *o += bj;
            }
        }
        Ok(self.push(out, Op::AddRow(x, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s))
    }

    /// Concatenation along the feature (column) axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::Shape("concat_cols of nothing".into()))?;
        let rows = self.value(first).rows();
        if let Some(p) = parts.iter().find(|&&p| self.value(p).rows() != rows) {
            return Err(Error::Shape(format!("concat_cols rows {rows} vs {}", self.value(*p).rows())));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let out = Matrix::from_vec(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Concatenation along the row axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| Error::Shape("concat_rows of nothing".into()))?;
        let cols = self.value(first).cols();
        if let Some(p) = parts.iter().find(|&&p| self.value(p).cols() != cols) {
            return Err(Error::Shape(format!("concat_rows cols {cols} vs {}", self.value(*p).cols())));
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let rows = parts.iter().map(|&p| self.value(p).rows()).sum();
        let out = Matrix::from_vec(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    /// Columns `start..start + width`.
    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let av = self.value(a);
        if start + width > av.cols() {
            return Err(Error::Shape(format!("slice_cols {start}..{} of {} columns", start + width, av.cols())));
        }
        let out = Matrix::from_fn(av.rows(), width, |i, j| av.get(i, start + j));
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    /// `y[t] = a[t + offset]`, zero where `t + offset` is out of range.
    pub fn shift_rows(&mut self, a: Var, offset: isize) -> Var {
        let av = self.value(a);
        let n = av.rows() as isize;
        let mut out = Matrix::zeros(av.rows(), av.cols());
        for t in 0..n {
            let src = t + offset;
            if (0..n).contains(&src) {
                out.row_mut(t as usize).copy_from_slice(av.row(src as usize));
            }
        }
        self.push(out, Op::ShiftRows(a, offset))
    }

    /// `y[i][j] = a[i] + b[j]` for column vectors `a (n×1)`, `b (m×1)`.
    pub fn outer_sum(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != 1 || bv.cols() != 1 {
            return Err(Error::Shape(format!("outer_sum of {:?} and {:?}", av.shape(), bv.shape())));
        }
        let out = Matrix::from_fn(av.rows(), bv.rows(), |i, j| av.data()[i] + bv.data()[j]);
        Ok(self.push(out, Op::OuterSum(a, b)))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(out, Op::LeakyRelu(a, slope))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = softmax_rows_value(self.value(a), None);
        self.push(out, Op::Softmax(a))
    }

    /// Row softmax restricted to entries where `mask` (row-major, same
    /// shape as `a`) is `true`.
    pub fn masked_softmax_rows(&mut self, a: Var, mask: Vec<bool>) -> Result<Var> {
        if mask.len() != self.value(a).len() {
            return Err(Error::Shape(format!("mask of {} entries for {:?}", mask.len(), self.shape(a))));
        }
        let out = softmax_rows_value(self.value(a), Some(&mask));
        Ok(self.push(out, Op::Softmax(a)))
    }

    /// Mean squared error, as a `1×1` node.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.shape() != t.shape() || p.is_empty() {
            return Err(Error::Shape(format!("mse between {:?} and {:?}", p.shape(), t.shape())));
        }
        let n = p.len() as f64;
        let v = p.data().iter().zip(t.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n;
        Ok(self.push(Matrix::row_vector(vec![v]), Op::Mse(pred, target)))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let v = self.value(a).data().iter().map(|x| x * x).sum();
        self.push(Matrix::row_vector(vec![v]), Op::SumSquares(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = self.value(a).sum();
        self.push(Matrix::row_vector(vec![v]), Op::Sum(a))
    }

    /// Gradients of the `1×1` node `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Shape(format!("backward from non-scalar {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input | Op::Param => {}
                Op::MatMul(a, b) => {
                    acc(&mut grads, *a, g.matmul_t(self.value(*b))?);
                    acc(&mut grads, *b, self.value(*a).t_matmul(&g)?);
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()),
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.map(|x| -x));
                }
                Op::AddRow(x, b) => {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (o, &v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *x, g.clone());
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, s) => acc(&mut grads, *a, g.map(|x| x * s)),
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        acc(&mut grads, p, Matrix::from_fn(g.rows(), w, |r, c| g.get(r, start + c)));
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let h = self.value(p).rows();
                        acc(&mut grads, p, Matrix::from_fn(h, g.cols(), |r, c| g.get(start + r, c)));
                        start += h;
                    }
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = self.shape(*a);
                    let mut ga = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        ga.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ShiftRows(a, offset) => {
                    let (rows, cols) = self.shape(*a);
                    let mut ga = Matrix::zeros(rows, cols);
                    let n = rows as isize;
                    for t in 0..n {
                        let src = t + offset;
                        if (0..n).contains(&src) {
                            ga.row_mut(src as usize).copy_from_slice(g.row(t as usize));
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::OuterSum(a, b) => {
                    let ga = Matrix::from_fn(g.rows(), 1, |r, _| g.row(r).iter().sum());
                    let gb = Matrix::from_fn(g.cols(), 1, |c, _| (0..g.rows()).map(|r| g.get(r, c)).sum());
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::LeakyRelu(a, slope) => {
                    let ga = self.value(*a).zip_map(&g, |x, gv| if x > 0.0 { gv } else { slope * gv })?;
                    acc(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = node.value.zip_map(&g, |y, gv| gv * (1.0 - y * y))?;
                    acc(&mut grads, *a, ga);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut ga = Matrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 = y.row(r).iter().zip(g.row(r)).map(|(p, q)| p * q).sum();
                        for ((o, &p), &q) in ga.row_mut(r).iter_mut().zip(y.row(r)).zip(g.row(r)) {
                            *o = p * (q - dot);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Mse(p, t) => {
                    let (pv, tv) = (self.value(*p), self.value(*t));
                    let k = 2.0 * g.data()[0] / pv.len() as f64;
                    let gp = pv.zip_map(tv, |a, b| k * (a - b))?;
                    acc(&mut grads, *t, gp.map(|x| -x));
                    acc(&mut grads, *p, gp);
                }
                Op::SumSquares(a) => {
                    let k = 2.0 * g.data()[0];
                    acc(&mut grads, *a, self.value(*a).map(|x| k * x));
                }
                Op::Sum(a) => {
                    let (rows, cols) = self.shape(*a);
                    acc(&mut grads, *a, Matrix::filled(rows, cols, g.data()[0]));
                }
            }
            grads[i] = Some(g);
        }
        let params = self.params.iter().map(|(&id, &v)| (id, v)).collect();
        Ok(Grads { nodes: grads, params })
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Grads {
    nodes: Vec<Option<Matrix>>,
    params: Vec<(ParamId, Var)>,
}

impl Grads {
    /// Gradient with respect to a node; `None` if the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.nodes[v.0].as_ref()
    }

    pub fn param(&self, id: ParamId) -> Option<&Matrix> {
        self.params.iter().find(|(p, _)| *p == id).and_then(|&(_, v)| self.wrt(v))
    }
}

impl ParamStore {
    /// Adds the gradients in `grads` to each parameter's buffer.
    pub fn accumulate(&mut self, grads: &Grads) {
        for &(id, v) in &grads.params {
            if let Some(g) = grads.wrt(v) {
                self.get_mut(id).grad.add_assign(g);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd<F: Fn(&Matrix) -> f64>(f: F, x: &Matrix) -> Matrix {
        let h = 1e-6;
        Matrix::from_fn(x.rows(), x.cols(), |i, j| {
            let mut p = x.clone();
            p.set(i, j, x.get(i, j) + h);
            let mut m = x.clone();
            m.set(i, j, x.get(i, j) - h);
            (f(&p) - f(&m)) / (2.0 * h)
        })
    }

    fn close(a: &Matrix, b: &Matrix, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())), "{x} vs {y}");
        }
    }

    /// Checks d(loss)/d(input) for a unary op built by `build`.
    fn check_unary(x: Matrix, build: impl Fn(&mut Tape, Var) -> Var) {
        let store = ParamStore::new();
        let eval = |m: &Matrix| {
            let mut t = Tape::new(&store);
            let v = t.constant(m.clone());
            let y = build(&mut t, v);
            // Weighted sum so every output element matters differently.
            let w =
                t.constant(Matrix::from_fn(t.shape(y).0, t.shape(y).1, |i, j| 0.3 + 0.1 * i as f64 - 0.2 * j as f64));
            let p = t.sub(y, w).unwrap();
            let l = t.sum_squares(p);
            (t, v, l)
        };
        let (t, v, l) = eval(&x);
        let g = t.backward(l).unwrap();
        let numeric = fd(
            |m| {
                let (t, _, l) = eval(m);
                t.scalar(l)
            },
            &x,
        );
        close(g.wrt(v).unwrap(), &numeric, 1e-6);
    }

    fn sample(rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |i, j| ((i * 7 + j * 3) as f64 * 0.37).sin())
    }

    #[test]
    fn unary_op_gradients() {
        check_unary(sample(3, 4), |t, v| t.transpose(v));
        check_unary(sample(3, 4), |t, v| t.scale(v, -1.7));
        // Off the kink at 0, where central differences average the two slopes.
        check_unary(sample(3, 4).map(|x| x + 0.05), |t, v| t.leaky_relu(v, 0.2));
        check_unary(sample(3, 4), |t, v| t.tanh(v));
        check_unary(sample(3, 4), |t, v| t.softmax_rows(v));
        check_unary(sample(4, 3), |t, v| t.shift_rows(v, 1));
        check_unary(sample(4, 3), |t, v| t.shift_rows(v, -2));
        check_unary(sample(3, 4), |t, v| t.slice_cols(v, 1, 2).unwrap());
        check_unary(sample(3, 3), |t, v| {
            let mask = vec![true, false, true, true, true, false, false, false, true];
            t.masked_softmax_rows(v, mask).unwrap()
        });
        check_unary(sample(3, 4), |t, v| {
            let w = t.constant(sample(4, 2));
            t.matmul(v, w).unwrap()
        });
        check_unary(sample(3, 4), |t, v| {
            let w = t.constant(sample(2, 3));
            t.matmul(w, v).unwrap()
        });
        check_unary(sample(3, 2), |t, v| {
            let c = t.constant(sample(3, 1));
            t.concat_cols(&[c, v, v]).unwrap()
        });
        check_unary(sample(2, 3), |t, v| {
            let c = t.constant(sample(1, 3));
            t.concat_rows(&[v, c, v]).unwrap()
        });
        check_unary(sample(1, 4), |t, v| {
            let x = t.constant(sample(3, 4));
            t.add_row(x, v).unwrap()
        });
        check_unary(sample(3, 1), |t, v| {
            let b = t.constant(sample(4, 1));
            t.outer_sum(v, b).unwrap()
        });
        check_unary(sample(3, 1), |t, v| {
            let b = t.constant(sample(4, 1));
            t.outer_sum(b, v).unwrap()
        });
        check_unary(sample(2, 3), |t, v| {
            let target = t.constant(sample(3, 2));
            let tt = t.transpose(target);
            t.mse(v, tt).unwrap()
        });
        check_unary(sample(2, 3), |t, v| t.sum(v));
    }

    #[test]
    fn softmax_examples() {
        let ln3 = 3f64.ln();
        let x = Matrix::from_rows(&[[0.0, 0.0], [1000.0, 1000.0], [0.0, ln3]]).unwrap();
        let y = softmax_rows_value(&x, None);
        assert_eq!(y.row(0), &[0.5, 0.5]);
        assert_eq!(y.row(1), &[0.5, 0.5]);
        assert!((y.get(2, 0) - 0.25).abs() < 1e-15 && (y.get(2, 1) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn masked_softmax_zeroes_masked() {
        let x = sample(2, 3);
        let y = softmax_rows_value(&x, Some(&[true, false, true, false, false, false]));
        assert_eq!(y.get(0, 1), 0.0);
        assert!((y.get(0, 0) + y.get(0, 2) - 1.0).abs() < 1e-15);
        assert_eq!(y.row(1), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn param_leaf_is_shared_and_accumulates() {
        let mut store = ParamStore::new();
        let id = store.add("w", Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap()).unwrap();
        let grads = {
            let mut t = Tape::new(&store);
            let a = t.param(id);
            let b = t.param(id);
            assert_eq!(a, b);
            let s = t.add(a, b).unwrap();
            let l = t.sum_squares(s);
            t.backward(l).unwrap()
        };
        // l = Σ (2w)² → dl/dw = 8w
        assert_eq!(grads.param(id).unwrap().data(), &[8.0, 16.0]);
        store.accumulate(&grads);
        store.accumulate(&grads);
        assert_eq!(store.get(id).grad.data(), &[16.0, 32.0]);
    }

    #[test]
    fn backward_requires_scalar() {
        let store = ParamStore::new();
        let mut t = Tape::new(&store);
        let v = t.constant(sample(2, 2));
        assert!(t.backward(v).is_err());
    }

    #[test]
    fn unreachable_nodes_have_no_gradient() {
        let store = ParamStore::new();
        let mut t = Tape::new(&store);
        let a = t.constant(sample(2, 2));
        let b = t.constant(sample(2, 2));
        let l = t.sum(a);
        let g = t.backward(l).unwrap();
        assert!(g.wrt(b).is_none());
    }
}
