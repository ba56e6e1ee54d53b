//! Layers with explicit forward/backward passes. Each layer holds parameter
//! ids and shapes only; activations needed by the backward pass travel in
//! per-call trace structs so shared parameters stay immutable during batch
//! fan-out.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::{GradStore, ParamId, ParamStore};
use crate::util::sample_normal;

const LN_EPS: f64 = 1e-5;

pub fn sinusoidal_pe(len: usize, width: usize) -> Array2<f64> {
    let mut pe = Array2::zeros((len, width));
    for pos in 0..len {
        for i in 0..width / 2 {
            let rate = 1.0 / 10000f64.powf(2.0 * i as f64 / width as f64);
            pe[[pos, 2 * i]] = (pos as f64 * rate).sin();
            pe[[pos, 2 * i + 1]] = (pos as f64 * rate).cos();
        }
    }
    pe
}

pub fn softmax_rows(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: f64 = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// dL/dz for y = softmax(z) given dL/dy, row-wise.
fn softmax_backward(y: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dz = Array2::zeros(y.dim());
    for i in 0..y.nrows() {
        let yi = y.row(i);
        let dyi = dy.row(i);
        let dot: f64 = yi.iter().zip(dyi.iter()).map(|(a, b)| a * b).sum();
        for j in 0..y.ncols() {
            dz[[i, j]] = yi[j] * (dyi[j] - dot);
        }
    }
    dz
}

// ---------------------------------------------------------------------------

pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new<R: Rng>(p: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut R) -> Self {
        let scale = (2.0 / (d_in + d_out) as f64).sqrt();
        Self::new_with_scale(p, name, d_in, d_out, scale, rng)
    }

    pub fn new_with_scale<R: Rng>(
        p: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let w = p.add(
            &format!("{name}.w"),
            Array2::from_shape_fn((d_in, d_out), |_| sample_normal(rng) * scale),
        );
        let b = p.add(&format!("{name}.b"), Array2::zeros((1, d_out)));
        Self {
            w,
            b: Some(b),
            d_in,
            d_out,
        }
    }

    /// No bias: the output is exactly `x . W`, so a zero input maps to zero.
    pub fn new_no_bias<R: Rng>(
        p: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Self {
        let scale = (2.0 / (d_in + d_out) as f64).sqrt();
        let w = p.add(
            &format!("{name}.w"),
            Array2::from_shape_fn((d_in, d_out), |_| sample_normal(rng) * scale),
        );
        Self {
            w,
            b: None,
            d_in,
            d_out,
        }
    }

    pub fn forward(&self, p: &ParamStore, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(p.get(self.w));
        if let Some(b) = self.b {
            y += &p.get(b).row(0);
        }
        y
    }

    pub fn backward(
        &self,
        p: &ParamStore,
        x: &Array2<f64>,
        dy: &Array2<f64>,
        g: &mut GradStore,
    ) -> Array2<f64> {
        *g.get_mut(self.w) += &x.t().dot(dy);
        if let Some(b) = self.b {
            let gb = dy.sum_axis(Axis(0));
            *g.get_mut(b) += &gb.insert_axis(Axis(0));
        }
        dy.dot(&p.get(self.w).t())
    }
}

// ---------------------------------------------------------------------------

pub struct Embedding {
    pub table: ParamId,
    pub width: usize,
}

impl Embedding {
    pub fn new<R: Rng>(p: &mut ParamStore, name: &str, vocab: usize, width: usize, rng: &mut R) -> Self {
        let table = p.add(
            &format!("{name}.table"),
            Array2::from_shape_fn((vocab.max(1), width), |_| sample_normal(rng) * 0.1),
        );
        Self { table, width }
    }

    pub fn forward(&self, p: &ParamStore, ids: &[usize]) -> Array2<f64> {
        let table = p.get(self.table);
        let mut out = Array2::zeros((ids.len(), self.width));
        for (i, &id) in ids.iter().enumerate() {
            out.row_mut(i).assign(&table.row(id));
        }
        out
    }

    pub fn backward(&self, _p: &ParamStore, ids: &[usize], dy: &Array2<f64>, g: &mut GradStore) {
        let gt = g.get_mut(self.table);
        for (i, &id) in ids.iter().enumerate() {
            let mut row = gt.row_mut(id);
            row += &dy.row(i);
        }
    }

    pub fn row(&self, p: &ParamStore, id: usize) -> Array1<f64> {
        p.get(self.table).row(id).to_owned()
    }
}

// ---------------------------------------------------------------------------

pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub width: usize,
}

pub struct LnTrace {
    x_hat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn new(p: &mut ParamStore, name: &str, width: usize) -> Self {
        let gamma = p.add(&format!("{name}.gamma"), Array2::ones((1, width)));
        let beta = p.add(&format!("{name}.beta"), Array2::zeros((1, width)));
        Self { gamma, beta, width }
    }

    pub fn forward(&self, p: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, LnTrace) {
        let d = self.width as f64;
        let mean = x.mean_axis(Axis(1)).unwrap();
        let mut centered = x.clone();
        for (mut row, &m) in centered.rows_mut().into_iter().zip(mean.iter()) {
            row.mapv_inplace(|v| v - m);
        }
        let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / d;
        let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
        let mut x_hat = centered;
        for (mut row, &s) in x_hat.rows_mut().into_iter().zip(inv_std.iter()) {
            row.mapv_inplace(|v| v * s);
        }
        let gamma = p.get(self.gamma).row(0).to_owned();
        let beta = p.get(self.beta).row(0).to_owned();
        let mut y = x_hat.clone();
        for mut row in y.rows_mut() {
            for j in 0..self.width {
                row[j] = row[j] * gamma[j] + beta[j];
            }
        }
        (y, LnTrace { x_hat, inv_std })
    }

    pub fn backward(
        &self,
        p: &ParamStore,
        trace: &LnTrace,
        dy: &Array2<f64>,
        g: &mut GradStore,
    ) -> Array2<f64> {
        let d = self.width as f64;
        let gamma = p.get(self.gamma).row(0).to_owned();
        {
            let ggamma = g.get_mut(self.gamma);
            for i in 0..dy.nrows() {
                for j in 0..self.width {
                    ggamma[[0, j]] += dy[[i, j]] * trace.x_hat[[i, j]];
                }
            }
        }
        {
            let gbeta = g.get_mut(self.beta);
            let sums = dy.sum_axis(Axis(0));
            for j in 0..self.width {
                gbeta[[0, j]] += sums[j];
            }
        }
        let mut dx = Array2::zeros(dy.dim());
        for i in 0..dy.nrows() {
            let inv_std = trace.inv_std[i];
            let mut sum_dxhat = 0.0;
            let mut sum_dxhat_xhat = 0.0;
            for j in 0..self.width {
                let dxh = dy[[i, j]] * gamma[j];
                sum_dxhat += dxh;
                sum_dxhat_xhat += dxh * trace.x_hat[[i, j]];
            }
            for j in 0..self.width {
                let dxh = dy[[i, j]] * gamma[j];
                dx[[i, j]] =
                    inv_std * (dxh - sum_dxhat / d - trace.x_hat[[i, j]] * sum_dxhat_xhat / d);
            }
        }
        dx
    }
}

// ---------------------------------------------------------------------------

pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
    pub width: usize,
}

pub struct AttnTrace {
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    att: Vec<Array2<f64>>, // per head, rows softmaxed
    concat: Array2<f64>,
}

impl MultiHeadAttention {
    pub fn new<R: Rng>(p: &mut ParamStore, name: &str, width: usize, heads: usize, rng: &mut R) -> Self {
        assert!(width % heads == 0, "width {width} not divisible by heads {heads}");
        Self {
            wq: Linear::new(p, &format!("{name}.wq"), width, width, rng),
            wk: Linear::new(p, &format!("{name}.wk"), width, width, rng),
            wv: Linear::new(p, &format!("{name}.wv"), width, width, rng),
            wo: Linear::new(p, &format!("{name}.wo"), width, width, rng),
            heads,
            width,
        }
    }

    pub fn forward(&self, p: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, AttnTrace) {
        let s = x.nrows();
        let dh = self.width / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = self.wq.forward(p, x);
        let k = self.wk.forward(p, x);
        let v = self.wv.forward(p, x);
        let mut concat = Array2::zeros((s, self.width));
        let mut att = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = h * dh..(h + 1) * dh;
            let qh = q.slice(ndarray::s![.., cols.clone()]);
            let kh = k.slice(ndarray::s![.., cols.clone()]);
            let vh = v.slice(ndarray::s![.., cols.clone()]);
            let scores = qh.dot(&kh.t()) * scale;
            let a = softmax_rows(&scores);
            let oh = a.dot(&vh);
            concat.slice_mut(ndarray::s![.., cols]).assign(&oh);
            att.push(a);
        }
        let y = self.wo.forward(p, &concat);
        (y, AttnTrace { q, k, v, att, concat })
    }

    pub fn backward(
        &self,
        p: &ParamStore,
        x: &Array2<f64>,
        trace: &AttnTrace,
        dy: &Array2<f64>,
        g: &mut GradStore,
    ) -> Array2<f64> {
        let dh = self.width / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let d_concat = self.wo.backward(p, &trace.concat, dy, g);
        let mut dq = Array2::zeros(trace.q.dim());
        let mut dk = Array2::zeros(trace.k.dim());
        let mut dv = Array2::zeros(trace.v.dim());
        for h in 0..self.heads {
            let cols = h * dh..(h + 1) * dh;
            let qh = trace.q.slice(ndarray::s![.., cols.clone()]);
            let kh = trace.k.slice(ndarray::s![.., cols.clone()]);
            let vh = trace.v.slice(ndarray::s![.., cols.clone()]);
            let a = &trace.att[h];
            let d_oh = d_concat.slice(ndarray::s![.., cols.clone()]);
            let da = d_oh.dot(&vh.t());
            let dvh = a.t().dot(&d_oh);
            let dscores = softmax_backward(a, &da) * scale;
            let dqh = dscores.dot(&kh);
            let dkh = dscores.t().dot(&qh);
            dq.slice_mut(ndarray::s![.., cols.clone()]).assign(&dqh);
            dk.slice_mut(ndarray::s![.., cols.clone()]).assign(&dkh);
            dv.slice_mut(ndarray::s![.., cols]).assign(&dvh);
        }
        let mut dx = self.wq.backward(p, x, &dq, g);
        dx += &self.wk.backward(p, x, &dk, g);
        dx += &self.wv.backward(p, x, &dv, g);
        dx
    }
}

// ---------------------------------------------------------------------------

pub struct FeedForward {
    pub w1: Linear,
    pub w2: Linear,
}

pub struct FfnTrace {
    h_pre: Array2<f64>,
}

impl FeedForward {
    pub fn new<R: Rng>(p: &mut ParamStore, name: &str, width: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            w1: Linear::new(p, &format!("{name}.w1"), width, hidden, rng),
            w2: Linear::new(p, &format!("{name}.w2"), hidden, width, rng),
        }
    }

    pub fn forward(&self, p: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, FfnTrace) {
        let h_pre = self.w1.forward(p, x);
        let h = h_pre.mapv(|v| v.max(0.0));
        let y = self.w2.forward(p, &h);
        (y, FfnTrace { h_pre })
    }

    pub fn backward(
        &self,
        p: &ParamStore,
        x: &Array2<f64>,
        trace: &FfnTrace,
        dy: &Array2<f64>,
        g: &mut GradStore,
    ) -> Array2<f64> {
        let h = trace.h_pre.mapv(|v| v.max(0.0));
        let mut dh = self.w2.backward(p, &h, dy, g);
        ndarray::Zip::from(&mut dh).and(&trace.h_pre).for_each(|d, &pre| {
            if pre <= 0.0 {
                *d = 0.0;
            }
        });
        self.w1.backward(p, x, &dh, g)
    }
}

// ---------------------------------------------------------------------------

/// Pre-norm transformer block: `x + attn(ln1(x))`, then `+ ffn(ln2(.))`.
pub struct TransformerBlock {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub ffn: FeedForward,
}

pub struct BlockTrace {
    ln1: LnTrace,
    x_norm1: Array2<f64>,
    attn: AttnTrace,
    ln2: LnTrace,
    x_norm2: Array2<f64>,
    ffn: FfnTrace,
}

impl TransformerBlock {
    pub fn new<R: Rng>(
        p: &mut ParamStore,
        name: &str,
        width: usize,
        heads: usize,
        ffn_hidden: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            ln1: LayerNorm::new(p, &format!("{name}.ln1"), width),
            attn: MultiHeadAttention::new(p, &format!("{name}.attn"), width, heads, rng),
            ln2: LayerNorm::new(p, &format!("{name}.ln2"), width),
            ffn: FeedForward::new(p, &format!("{name}.ffn"), width, ffn_hidden, rng),
        }
    }

    pub fn forward(&self, p: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, BlockTrace) {
        let (x_norm1, ln1) = self.ln1.forward(p, x);
        let (attn_out, attn) = self.attn.forward(p, &x_norm1);
        let mid = x + &attn_out;
        let (x_norm2, ln2) = self.ln2.forward(p, &mid);
        let (ffn_out, ffn) = self.ffn.forward(p, &x_norm2);
        let y = mid + &ffn_out;
        (
            y,
            BlockTrace {
                ln1,
                x_norm1,
                attn,
                ln2,
                x_norm2,
                ffn,
            },
        )
    }

    pub fn backward(
        &self,
        p: &ParamStore,
        _x_in: &Array2<f64>,
        trace: &BlockTrace,
        dy: &Array2<f64>,
        g: &mut GradStore,
    ) -> Array2<f64> {
        let d_ffn_in = self.ffn.backward(p, &trace.x_norm2, &trace.ffn, dy, g);
        let d_mid = dy + &self.ln2.backward(p, &trace.ln2, &d_ffn_in, g);
        let d_attn_in = self
            .attn
            .backward(p, &trace.x_norm1, &trace.attn, &d_mid, g);
        &d_mid + &self.ln1.backward(p, &trace.ln1, &d_attn_in, g)
    }
}

// ---------------------------------------------------------------------------

/// 1-D convolution over time-major input (T x C_in), same padding, odd
/// kernel. Realized as im2col + matmul.
pub struct Conv1d {
    pub w: ParamId, // (k * c_in) x c_out
    pub b: ParamId,
    pub kernel: usize,
    pub c_in: usize,
    pub c_out: usize,
}

impl Conv1d {
    pub fn new<R: Rng>(
        p: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        assert!(kernel % 2 == 1, "kernel must be odd for same padding");
        let fan_in = kernel * c_in;
        let scale = (2.0 / (fan_in + c_out) as f64).sqrt();
        let w = p.add(
            &format!("{name}.w"),
            Array2::from_shape_fn((fan_in, c_out), |_| sample_normal(rng) * scale),
        );
        let b = p.add(&format!("{name}.b"), Array2::zeros((1, c_out)));
        Self {
            w,
            b,
            kernel,
            c_in,
            c_out,
        }
    }

    fn im2col(&self, x: &Array2<f64>) -> Array2<f64> {
        let t = x.nrows();
        let half = self.kernel / 2;
        let mut out = Array2::zeros((t, self.kernel * self.c_in));
        for i in 0..t {
            for kk in 0..self.kernel {
                let src = i as isize + kk as isize - half as isize;
                if src < 0 || src >= t as isize {
                    continue;
                }
                for c in 0..self.c_in {
                    out[[i, kk * self.c_in + c]] = x[[src as usize, c]];
                }
            }
        }
        out
    }

    pub fn forward(&self, p: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let xc = self.im2col(x);
        let mut y = xc.dot(p.get(self.w));
        y += &p.get(self.b).row(0);
        (y, xc)
    }

    pub fn backward(
        &self,
        p: &ParamStore,
        xc: &Array2<f64>,
        dy: &Array2<f64>,
        g: &mut GradStore,
    ) -> Array2<f64> {
        *g.get_mut(self.w) += &xc.t().dot(dy);
        {
            let gb = g.get_mut(self.b);
            let sums = dy.sum_axis(Axis(0));
            for j in 0..self.c_out {
                gb[[0, j]] += sums[j];
            }
        }
        let d_xc = dy.dot(&p.get(self.w).t());
        let t = dy.nrows();
        let half = self.kernel / 2;
        let mut dx = Array2::zeros((t, self.c_in));
        for i in 0..t {
            for kk in 0..self.kernel {
                let src = i as isize + kk as isize - half as isize;
                if src < 0 || src >= t as isize {
                    continue;
                }
                for c in 0..self.c_in {
                    dx[[src as usize, c]] += d_xc[[i, kk * self.c_in + c]];
                }
            }
        }
        dx
    }
}

/// Repeat each row `rate` times (nearest-neighbour upsampling over time).
pub fn upsample_repeat(x: &Array2<f64>, rate: usize) -> Array2<f64> {
    let (t, c) = x.dim();
    let mut out = Array2::zeros((t * rate, c));
    for i in 0..t {
        for r in 0..rate {
            out.row_mut(i * rate + r).assign(&x.row(i));
        }
    }
    out
}

pub fn upsample_repeat_backward(dy: &Array2<f64>, rate: usize) -> Array2<f64> {
    let (tr, c) = dy.dim();
    let t = tr / rate;
    let mut dx = Array2::zeros((t, c));
    for i in 0..t {
        for r in 0..rate {
            let row = dy.row(i * rate + r);
            let mut acc = dx.row_mut(i);
            acc += &row;
        }
    }
    dx
}

pub fn leaky_relu(x: &Array2<f64>, slope: f64) -> Array2<f64> {
    x.mapv(|v| if v >= 0.0 { v } else { slope * v })
}

pub fn leaky_relu_backward(x_pre: &Array2<f64>, dy: &Array2<f64>, slope: f64) -> Array2<f64> {
    let mut dx = dy.clone();
    ndarray::Zip::from(&mut dx).and(x_pre).for_each(|d, &pre| {
        if pre < 0.0 {
            *d *= slope;
        }
    });
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{finite_diff_check, GradStore, ParamStore};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_input(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| sample_normal(rng) * 0.7)
    }

    /// Weighted-sum loss so every output element gets a distinct cotangent.
    fn loss_weights(rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 1.7)
    }

    #[test]
    fn linear_gradients_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ParamStore::new();
        let lin = Linear::new(&mut p, "l", 4, 3, &mut rng);
        let x = rand_input(&mut rng, 5, 4);
        let w = loss_weights(5, 3);
        let mut g = GradStore::zeros_like(&p);
        let y = lin.forward(&p, &x);
        let _ = lin.backward(&p, &x, &w, &mut g);
        let _ = y;
        let worst = finite_diff_check(&mut p, &g, |p| (&lin.forward(p, &x) * &w).sum(), 15, 1e-6, 1e-6, 42);
        assert!(worst < 1e-7, "worst rel err {worst}");
    }

    #[test]
    fn layernorm_gradients_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = ParamStore::new();
        let ln = LayerNorm::new(&mut p, "ln", 6);
        // non-trivial gamma/beta
        p.get_mut(ln.gamma).mapv_inplace(|_| 1.3);
        p.get_mut(ln.beta).mapv_inplace(|_| -0.2);
        let x = rand_input(&mut rng, 4, 6);
        let w = loss_weights(4, 6);
        let mut g = GradStore::zeros_like(&p);
        let (_, trace) = ln.forward(&p, &x);
        let _dx = ln.backward(&p, &trace, &w, &mut g);
        let worst = finite_diff_check(&mut p, &g, |p| (&ln.forward(p, &x).0 * &w).sum(), 12, 1e-6, 1e-6, 43);
        assert!(worst < 1e-6, "worst rel err {worst}");
    }

    #[test]
    fn layernorm_input_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = ParamStore::new();
        let ln = LayerNorm::new(&mut p, "ln", 5);
        let x = rand_input(&mut rng, 3, 5);
        let w = loss_weights(3, 5);
        let mut g = GradStore::zeros_like(&p);
        let (_, trace) = ln.forward(&p, &x);
        let dx = ln.backward(&p, &trace, &w, &mut g);
        let h = 1e-6;
        for idx in [(0, 0), (1, 3), (2, 4)] {
            let mut xp = x.clone();
            xp[idx] += h;
            let mut xm = x.clone();
            xm[idx] -= h;
            let fd = ((&ln.forward(&p, &xp).0 * &w).sum() - (&ln.forward(&p, &xm).0 * &w).sum())
                / (2.0 * h);
            assert!(
                (fd - dx[idx]).abs() / fd.abs().max(dx[idx].abs()).max(1e-8) < 1e-5,
                "at {idx:?}: fd {fd} analytic {}",
                dx[idx]
            );
        }
    }

    #[test]
    fn attention_gradients_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = ParamStore::new();
        let attn = MultiHeadAttention::new(&mut p, "a", 8, 2, &mut rng);
        let x = rand_input(&mut rng, 6, 8);
        let w = loss_weights(6, 8);
        let mut g = GradStore::zeros_like(&p);
        let (_, trace) = attn.forward(&p, &x);
        let _ = attn.backward(&p, &x, &trace, &w, &mut g);
        let worst =
            finite_diff_check(&mut p, &g, |p| (&attn.forward(p, &x).0 * &w).sum(), 25, 1e-6, 1e-6, 44);
        assert!(worst < 1e-4, "worst rel err {worst}");
    }

    #[test]
    fn transformer_block_gradients_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = ParamStore::new();
        let block = TransformerBlock::new(&mut p, "b", 8, 2, 16, &mut rng);
        let x = rand_input(&mut rng, 5, 8);
        let w = loss_weights(5, 8);
        let mut g = GradStore::zeros_like(&p);
        let (_, trace) = block.forward(&p, &x);
        let dx = block.backward(&p, &x, &trace, &w, &mut g);
        let worst =
            finite_diff_check(&mut p, &g, |p| (&block.forward(p, &x).0 * &w).sum(), 30, 1e-6, 1e-6, 45);
        assert!(worst < 1e-5, "params worst rel err {worst}");
        // input gradient too
        let h = 1e-6;
        let idx = (2, 3);
        let mut xp = x.clone();
        xp[idx] += h;
        let mut xm = x.clone();
        xm[idx] -= h;
        let fd =
            ((&block.forward(&p, &xp).0 * &w).sum() - (&block.forward(&p, &xm).0 * &w).sum()) / (2.0 * h);
        assert!((fd - dx[idx]).abs() / fd.abs().max(1e-8) < 1e-5);
    }

    #[test]
    fn conv1d_gradients_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut p = ParamStore::new();
        let conv = Conv1d::new(&mut p, "c", 3, 4, 5, &mut rng);
        let x = rand_input(&mut rng, 9, 3);
        let w = loss_weights(9, 4);
        let mut g = GradStore::zeros_like(&p);
        let (_, xc) = conv.forward(&p, &x);
        let dx = conv.backward(&p, &xc, &w, &mut g);
        let worst =
            finite_diff_check(&mut p, &g, |p| (&conv.forward(p, &x).0 * &w).sum(), 20, 1e-6, 1e-6, 46);
        assert!(worst < 1e-6, "worst rel err {worst}");
        let h = 1e-6;
        for idx in [(0, 0), (4, 2), (8, 1)] {
            let mut xp = x.clone();
            xp[idx] += h;
            let mut xm = x.clone();
            xm[idx] -= h;
            let fd =
                ((&conv.forward(&p, &xp).0 * &w).sum() - (&conv.forward(&p, &xm).0 * &w).sum()) / (2.0 * h);
            assert!((fd - dx[idx]).abs() / fd.abs().max(1e-8) < 1e-5, "{idx:?}");
        }
    }

    #[test]
    fn upsample_shapes_and_adjoint() {
        let x = Array2::from_shape_fn((3, 2), |(i, j)| (i * 2 + j) as f64);
        let y = upsample_repeat(&x, 4);
        assert_eq!(y.dim(), (12, 2));
        assert_eq!(y[[0, 0]], y[[3, 0]]);
        // adjoint identity: <y_cot, up(x)> == <down(y_cot), x>
        let y_cot = Array2::from_shape_fn((12, 2), |(i, j)| ((i + j) % 3) as f64 - 1.0);
        let lhs = (&y_cot * &y).sum();
        let rhs = (&upsample_repeat_backward(&y_cot, 4) * &x).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn pe_alternates_sin_cos() {
        let pe = sinusoidal_pe(4, 8);
        assert_eq!(pe[[0, 0]], 0.0);
        assert_eq!(pe[[0, 1]], 1.0);
        assert!((pe[[1, 0]] - 1f64.sin()).abs() < 1e-12);
    }
}
