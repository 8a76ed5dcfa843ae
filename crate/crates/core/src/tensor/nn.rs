//! Differentiable layers: linear maps, cross-attention and width-preserving
//! 1-D convolution.

use crate::error::{Error, Result};
use crate::rng::KeyedRng;

use super::param::{ParamId, ParamStore};
use super::tape::{Tape, Var};

/// `x·w + b`, with `b (1×d_out)` broadcast over rows.
pub fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add_row(y, b)
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut KeyedRng) -> Result<Self> {
        if d_in == 0 || d_out == 0 {
            return Err(Error::Config(format!("{name}: linear {d_in}->{d_out}")));
        }
        let w = store.add_uniform(format!("{name}.w"), d_in, d_out, d_in, rng)?;
        let b = store.add_uniform(format!("{name}.b"), 1, d_out, d_in, rng)?;
        Ok(Linear { w, b: Some(b), d_in, d_out })
    }

    /// `x·w` with no bias term.
    pub fn unbiased(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut KeyedRng) -> Result<Self> {
        if d_in == 0 || d_out == 0 {
            return Err(Error::Config(format!("{name}: linear {d_in}->{d_out}")));
        }
        let w = store.add_uniform(format!("{name}.w"), d_in, d_out, d_in, rng)?;
        Ok(Linear { w, b: None, d_in, d_out })
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        if tape.shape(x).1 != self.d_in {
            return Err(Error::Shape(format!("linear expects {} inputs, got {:?}", self.d_in, tape.shape(x))));
        }
        let w = tape.param(self.w);
        match self.b {
            Some(b) => {
                let b = tape.param(b);
                linear(tape, x, w, b)
            }
            None => tape.matmul(x, w),
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        std::iter::once(self.w).chain(self.b).collect()
    }
}

/// Scaled dot-product cross-attention with learned query/key/value/output
/// projections. Heads split the model width evenly. The key projection has
/// no bias: a key bias shifts every score of a query row equally and has no
/// effect after the softmax.
#[derive(Debug, Clone)]
pub struct CrossAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub d: usize,
    pub heads: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionOutput {
    pub out: Var,
    /// Per head, `L×M` attention weights. Empty when there are no keys.
    pub weights: Vec<Var>,
    /// Head outputs concatenated, before the output projection.
    pub mixed: Var,
}

impl CrossAttention {
    pub fn new(store: &mut ParamStore, name: &str, d: usize, heads: usize, rng: &mut KeyedRng) -> Result<Self> {
        if heads == 0 || !d.is_multiple_of(heads) {
            return Err(Error::Config(format!("{name}: width {d} not divisible into {heads} heads")));
        }
        Ok(CrossAttention {
            q: Linear::new(store, &format!("{name}.q"), d, d, rng)?,
            k: Linear::unbiased(store, &format!("{name}.k"), d, d, rng)?,
            v: Linear::new(store, &format!("{name}.v"), d, d, rng)?,
            o: Linear::new(store, &format!("{name}.o"), d, d, rng)?,
            d,
            heads,
        })
    }

    /// Attends from each row of `query (L×d)` over `key`/`value (M×d)`.
    /// With `M = 0` the output is all zeros.
    pub fn forward(&self, tape: &mut Tape, query: Var, key: Var, value: Var) -> Result<AttentionOutput> {
        let (l, dq) = tape.shape(query);
        let (m, dk) = tape.shape(key);
        let (mv, dv) = tape.shape(value);
        if dq != self.d || dk != self.d || dv != self.d || m != mv {
            return Err(Error::Shape(format!(
                "cross-attention width {}: query {:?}, key {:?}, value {:?}",
                self.d,
                (l, dq),
                (m, dk),
                (mv, dv)
            )));
        }
        if m == 0 {
            let zeros = tape.constant(super::Matrix::zeros(l, self.d));
            return Ok(AttentionOutput { out: zeros, weights: Vec::new(), mixed: zeros });
        }
        let qp = self.q.forward(tape, query)?;
        let kp = self.k.forward(tape, key)?;
        let vp = self.v.forward(tape, value)?;
        let dh = self.d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut weights = Vec::with_capacity(self.heads);
        let mut ctx = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qh, kh, vh) = if self.heads == 1 {
                (qp, kp, vp)
            } else {
                (tape.slice_cols(qp, h * dh, dh)?, tape.slice_cols(kp, h * dh, dh)?, tape.slice_cols(vp, h * dh, dh)?)
            };
            let kt = tape.transpose(kh);
            let raw = tape.matmul(qh, kt)?;
            let scores = tape.scale(raw, scale);
            let w = tape.softmax_rows(scores);
            ctx.push(tape.matmul(w, vh)?);
            weights.push(w);
        }
        let mixed = if ctx.len() == 1 { ctx[0] } else { tape.concat_cols(&ctx)? };
        let out = self.o.forward(tape, mixed)?;
        Ok(AttentionOutput { out, weights, mixed })
    }

    pub fn params(&self) -> Vec<ParamId> {
        [&self.q, &self.k, &self.v, &self.o].iter().flat_map(|l| l.params()).collect()
    }
}

/// `CA(query, key, value)`.
pub fn cross_attention(
    tape: &mut Tape,
    query: Var,
    key: Var,
    value: Var,
    params: &CrossAttention,
) -> Result<AttentionOutput> {
    params.forward(tape, query, key, value)
}

/// 1-D convolution over the row (time) axis with symmetric zero padding,
/// so the output keeps the input length.
///
/// The kernel is stored as a `(k·d_in)×d_out` matrix: rows
/// `j·d_in..(j+1)·d_in` hold tap `j`, which reads input row
/// `t + j - (k-1)/2`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub width: usize,
    pub d_in: usize,
    pub d_out: usize,
}

impl Conv1d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        width: usize,
        rng: &mut KeyedRng,
    ) -> Result<Self> {
        if width.is_multiple_of(2) {
            return Err(Error::Config(format!("{name}: conv kernel width {width} must be odd")));
        }
        if d_in == 0 || d_out == 0 {
            return Err(Error::Config(format!("{name}: conv {d_in}->{d_out}")));
        }
        let fan_in = width * d_in;
        let kernel = store.add_uniform(format!("{name}.kernel"), fan_in, d_out, fan_in, rng)?;
        let bias = store.add_uniform(format!("{name}.bias"), 1, d_out, fan_in, rng)?;
        Ok(Conv1d { kernel, bias, width, d_in, d_out })
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        if tape.shape(x).1 != self.d_in {
            return Err(Error::Shape(format!("conv1d expects {} channels, got {:?}", self.d_in, tape.shape(x))));
        }
        let input = if self.width == 1 {
            x
        } else {
            let half = (self.width / 2) as isize;
            let taps: Vec<Var> = (0..self.width as isize).map(|j| tape.shift_rows(x, j - half)).collect();
            tape.concat_cols(&taps)?
        };
        let w = tape.param(self.kernel);
        let b = tape.param(self.bias);
        linear(tape, input, w, b)
    }

    pub fn params(&self) -> [ParamId; 2] {
        [self.kernel, self.bias]
    }
}

/// Functional form of [`Conv1d::forward`].
pub fn conv1d(tape: &mut Tape, x: Var, params: &Conv1d) -> Result<Var> {
    params.forward(tape, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;

    fn rng() -> KeyedRng {
        KeyedRng::from_seed(17)
    }

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, s);
            }
        }
        out
    }

    fn assert_close(a: &Matrix, b: &Matrix, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < tol, "{x} vs {y}");
        }
    }

    fn random(rows: usize, cols: usize, r: &mut KeyedRng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| r.uniform(-1.0, 1.0))
    }

    #[test]
    fn linear_identity_and_zero_input() {
        let mut store = ParamStore::new();
        let w = store.add("w", Matrix::identity(3)).unwrap();
        let b = store.add("b", Matrix::row_vector(vec![0.5, -1.0, 2.0])).unwrap();
        let zero_b = store.add("zb", Matrix::zeros(1, 3)).unwrap();
        let mut t = Tape::new(&store);
        let x = Matrix::from_fn(2, 3, |i, j| (i + j) as f64);
        let xv = t.constant(x.clone());
        let (wv, bv, zv) = (t.param(w), t.param(b), t.param(zero_b));
        let y = linear(&mut t, xv, wv, zv).unwrap();
        assert_eq!(t.value(y), &x);
        let z = t.constant(Matrix::zeros(4, 3));
        let y = linear(&mut t, z, wv, bv).unwrap();
        for i in 0..4 {
            assert_eq!(t.value(y).row(i), &[0.5, -1.0, 2.0]);
        }
    }

    #[test]
    fn linear_matches_triple_loop() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let lin = Linear::new(&mut store, "l", 4, 2, &mut r).unwrap();
        let x = random(3, 4, &mut r);
        let mut t = Tape::new(&store);
        let xv = t.constant(x.clone());
        let y = lin.forward(&mut t, xv).unwrap();
        let mut want = naive_matmul(&x, store.value(lin.w));
        for i in 0..3 {
            for j in 0..2 {
                want.set(i, j, want.get(i, j) + lin.b.map_or(0.0, |b| store.value(b).get(0, j)));
            }
        }
        assert_close(t.value(y), &want, 1e-14);
        let bad = t.constant(Matrix::zeros(3, 5));
        assert!(matches!(lin.forward(&mut t, bad), Err(Error::Shape(_))));
    }

    /// Loop-based attention: softmax(q'k'ᵀ/√d)·v' followed by the output map.
    fn naive_attention(
        ca: &CrossAttention,
        store: &ParamStore,
        q: &Matrix,
        k: &Matrix,
        v: &Matrix,
    ) -> (Matrix, Matrix) {
        let proj = |lin: &Linear, x: &Matrix| {
            let mut y = naive_matmul(x, store.value(lin.w));
            for i in 0..y.rows() {
                for j in 0..y.cols() {
                    y.set(i, j, y.get(i, j) + lin.b.map_or(0.0, |b| store.value(b).get(0, j)));
                }
            }
            y
        };
        let (qp, kp, vp) = (proj(&ca.q, q), proj(&ca.k, k), proj(&ca.v, v));
        let d = ca.d as f64;
        let mut w = Matrix::zeros(q.rows(), k.rows());
        for i in 0..q.rows() {
            let s: Vec<f64> =
                (0..k.rows()).map(|j| (0..ca.d).map(|c| qp.get(i, c) * kp.get(j, c)).sum::<f64>() / d.sqrt()).collect();
            let mx = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = s.iter().map(|x| (x - mx).exp()).collect();
            let z: f64 = e.iter().sum();
            for j in 0..k.rows() {
                w.set(i, j, e[j] / z);
            }
        }
        let ctx = naive_matmul(&w, &vp);
        (proj(&ca.o, &ctx), w)
    }

    #[test]
    fn attention_matches_loop_oracle() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let ca = CrossAttention::new(&mut store, "ca", 4, 1, &mut r).unwrap();
        let q = random(2, 4, &mut r);
        let k = random(3, 4, &mut r);
        let v = random(3, 4, &mut r);
        let mut t = Tape::new(&store);
        let (qv, kv, vv) = (t.constant(q.clone()), t.constant(k.clone()), t.constant(v.clone()));
        let out = ca.forward(&mut t, qv, kv, vv).unwrap();
        let (want, want_w) = naive_attention(&ca, &store, &q, &k, &v);
        assert_close(t.value(out.out), &want, 1e-13);
        assert_close(t.value(out.weights[0]), &want_w, 1e-14);
        for i in 0..2 {
            assert!((t.value(out.weights[0]).row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_key_attention_copies_value_row() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let ca = CrossAttention::new(&mut store, "ca", 4, 2, &mut r).unwrap();
        let mut t = Tape::new(&store);
        let q = t.constant(random(5, 4, &mut r));
        let kv = t.constant(random(1, 4, &mut r));
        let out = ca.forward(&mut t, q, kv, kv).unwrap();
        let vp = ca.v.forward(&mut t, kv).unwrap();
        let vrow = t.value(vp).row(0).to_vec();
        for i in 0..5 {
            assert_eq!(t.value(out.mixed).row(i), &vrow[..]);
        }
    }

    #[test]
    fn attention_over_no_keys_is_zero() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let ca = CrossAttention::new(&mut store, "ca", 4, 1, &mut r).unwrap();
        let mut t = Tape::new(&store);
        let q = t.constant(random(3, 4, &mut r));
        let kv = t.constant(Matrix::zeros(0, 4));
        let out = ca.forward(&mut t, q, kv, kv).unwrap();
        assert_eq!(t.value(out.out), &Matrix::zeros(3, 4));
    }

    #[test]
    fn attention_head_config() {
        let mut store = ParamStore::new();
        assert!(matches!(CrossAttention::new(&mut store, "ca", 6, 4, &mut rng()), Err(Error::Config(_))));
    }

    #[test]
    fn conv_width_one_is_linear_bitwise() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let conv = Conv1d::new(&mut store, "c", 4, 3, 1, &mut r).unwrap();
        let x = random(6, 4, &mut r);
        let mut t = Tape::new(&store);
        let xv = t.constant(x);
        let a = conv.forward(&mut t, xv).unwrap();
        let (w, b) = (t.param(conv.kernel), t.param(conv.bias));
        let l = linear(&mut t, xv, w, b).unwrap();
        assert_eq!(t.value(a).data(), t.value(l).data());
    }

    #[test]
    fn conv_even_width_rejected() {
        let mut store = ParamStore::new();
        assert!(matches!(Conv1d::new(&mut store, "c", 4, 3, 2, &mut rng()), Err(Error::Config(_))));
    }

    #[test]
    fn conv_impulse_response() {
        let mut store = ParamStore::new();
        let mut r = rng();
        let conv = Conv1d::new(&mut store, "c", 2, 3, 3, &mut r).unwrap();
        store.get_mut(conv.bias).value = Matrix::zeros(1, 3);
        let kernel = store.value(conv.kernel).clone();
        let mut x = Matrix::zeros(7, 2);
        x.set(3, 1, 1.0);
        let mut t = Tape::new(&store);
        let xv = t.constant(x);
        let y = conv.forward(&mut t, xv).unwrap();
        let y = t.value(y);
        // Tap j reads row t + j - 1, so the impulse at row 3 lands at t = 4 - j.
        for j in 0..3 {
            assert_eq!(y.row(4 - j), kernel.row(j * 2 + 1));
        }
        for row in [0, 1, 5, 6] {
            assert!(y.row(row).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn conv_matches_sliding_window() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let conv = Conv1d::new(&mut store, "c", 3, 2, 3, &mut r).unwrap();
        let x = random(5, 3, &mut r);
        let mut t = Tape::new(&store);
        let xv = t.constant(x.clone());
        let y = conv.forward(&mut t, xv).unwrap();
        let (k, b) = (store.value(conv.kernel), store.value(conv.bias));
        let mut want = Matrix::zeros(5, 2);
        for pos in 0..5i32 {
            for o in 0..2 {
                let mut s = b.get(0, o);
                for j in 0..3i32 {
                    let src = pos + j - 1;
                    if !(0..5).contains(&src) {
                        continue;
                    }
                    for c in 0..3 {
                        s += x.get(src as usize, c) * k.get(j as usize * 3 + c, o);
                    }
                }
                want.set(pos as usize, o, s);
            }
        }
        assert_close(t.value(y), &want, 1e-14);
    }
}
