//! Batched forward and backward passes.
//!
//! A batch of `b` sequences is padded to the longest length `t_max` and laid
//! out time-major: row `t * b + i` holds step `t` of sequence `i`. At padded
//! steps the GRU carries its state unchanged, so the final state is the state
//! after the last real frame.

use super::{argmax, Params, PROB_FLOOR};
use crate::error::{Error, Result};
use crate::matrix::{gemm, Matrix, Scalar, View};

/// Sequences per forward/backward work item.
pub const SHARD_SIZE: usize = 50;

pub struct Batch<T = f64> {
    b: usize,
    t_max: usize,
    d: usize,
    lengths: Vec<usize>,
    x: Vec<T>,
}

impl<T: Scalar> Batch<T> {
    pub fn new(sequences: &[&Matrix<T>], input_dim: usize) -> Result<Self> {
        let b = sequences.len();
        if b == 0 {
            return Err(Error::input("empty batch"));
        }
        for s in sequences {
            if s.cols() != input_dim {
                return Err(Error::Shape(format!(
                    "sequence has {} features, model expects {input_dim}",
                    s.cols()
                )));
            }
            if s.rows() == 0 {
                return Err(Error::input("empty sequence"));
            }
        }
        let lengths: Vec<usize> = sequences.iter().map(|s| s.rows()).collect();
        let t_max = *lengths.iter().max().unwrap();
        let mut x = vec![T::zero(); t_max * b * input_dim];
        for (i, s) in sequences.iter().enumerate() {
            for t in 0..s.rows() {
                let dst = (t * b + i) * input_dim;
                x[dst..dst + input_dim].copy_from_slice(s.row(t));
            }
        }
        Ok(Self {
            b,
            t_max,
            d: input_dim,
            lengths,
            x,
        })
    }

    pub fn len(&self) -> usize {
        self.b
    }

    pub fn is_empty(&self) -> bool {
        self.b == 0
    }
}

/// Summed (or, after [`BatchOutput::scale`], averaged) loss and gradients.
#[derive(Clone, Debug)]
pub struct BatchOutput<T = f64> {
    pub grads: Params<T>,
    pub loss: f64,
    pub correct: usize,
    pub count: usize,
}

impl<T: Scalar> BatchOutput<T> {
    pub(super) fn accumulate(&mut self, other: &BatchOutput<T>) {
        for (a, b) in self.grads.slices_mut().into_iter().zip(other.grads.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
        self.loss += other.loss;
        self.correct += other.correct;
        self.count += other.count;
    }

    pub(super) fn scale(&mut self, s: f64) {
        for a in self.grads.slices_mut() {
            for x in a {
                *x *= T::of(s);
            }
        }
        self.loss *= s;
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn col_sums<T: Scalar>(data: &[T], rows: usize, cols: usize, ld: usize) -> Vec<T> {
    let mut out = vec![T::zero(); cols];
    for r in 0..rows {
        for (o, v) in out.iter_mut().zip(&data[r * ld..r * ld + cols]) {
            *o += *v;
        }
    }
    out
}

fn add_bias<T: Scalar>(data: &mut [T], bias: &[T]) {
    for row in data.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += *b;
        }
    }
}

/// Returns the im2col matrix and the post-ReLU activations.
pub(super) fn tcn<T: Scalar>(params: &Params<T>, batch: &Batch<T>) -> (Vec<T>, Vec<T>) {
    let c = &params.config;
    let (b, d, k) = (batch.b, batch.d, c.tcn_width);
    let n = batch.t_max * b;
    let kd = k * d;
    let mut col = vec![T::zero(); n * kd];
    for t in 0..batch.t_max {
        for i in 0..b {
            let row = (t * b + i) * kd;
            for tap in 0..k {
                let back = (k - 1 - tap) * c.tcn_dilation;
                if back <= t {
                    let src = ((t - back) * b + i) * d;
                    col[row + tap * d..row + (tap + 1) * d].copy_from_slice(&batch.x[src..src + d]);
                }
            }
        }
    }
    let f = c.tcn_filters;
    let mut act = vec![T::zero(); n * f];
    gemm(
        T::one(), View::block(&col, n, kd, kd), params.tcn_weight.view(), T::zero(), &mut act, f);
    add_bias(&mut act, &params.tcn_bias);
    for v in &mut act {
        *v = v.max(T::zero());
    }
    (col, act)
}

pub(super) struct GruCache<T> {
    /// `(t_max + 1) * b x hidden`; block `t` is the state before step `t`.
    h: Vec<T>,
    z: Vec<T>,
    r: Vec<T>,
    c: Vec<T>,
    rh: Vec<T>,
    pub(super) last_state: Vec<T>,
}

pub(super) fn gru<T: Scalar>(params: &Params<T>, input: &[T], lengths: &[usize], t_max: usize) -> GruCache<T> {
    let hs = params.config.gru_hidden;
    let f = params.config.tcn_filters;
    let b = lengths.len();
    let n = t_max * b;
    let h3 = 3 * hs;
    let u = params.gru_recurrent_weight.data();
    let mut xp = vec![T::zero(); n * h3];
    gemm(
        T::one(), View::block(input, n, f, f), params.gru_input_weight.view(), T::zero(), &mut xp, h3);
    add_bias(&mut xp, &params.gru_bias);

    let mut h = vec![T::zero(); (t_max + 1) * b * hs];
    let mut z = vec![T::zero(); n * hs];
    let mut r = vec![T::zero(); n * hs];
    let mut cand = vec![T::zero(); n * hs];
    let mut rh = vec![T::zero(); n * hs];
    let mut g = vec![T::zero(); b * h3];
    for t in 0..t_max {
        let s = t * b * hs;
        g.copy_from_slice(&xp[t * b * h3..(t + 1) * b * h3]);
        let (h_prev, h_next) = h[s..s + 2 * b * hs].split_at_mut(b * hs);
        gemm(
        T::one(), View::block(h_prev, b, hs, hs), View::block(u, hs, 2 * hs, h3), T::one(), &mut g, h3);
        for i in 0..b {
            for j in 0..hs {
                let k = i * hs + j;
                z[s + k] = sigmoid(g[i * h3 + j]);
                r[s + k] = sigmoid(g[i * h3 + hs + j]);
                rh[s + k] = r[s + k] * h_prev[k];
            }
        }
        gemm(
        T::one(),
            View::block(&rh[s..s + b * hs], b, hs, hs),
            View::block(&u[2 * hs..], hs, hs, h3),
            T::one(),
            &mut g[2 * hs..],
            h3,
        );
        for i in 0..b {
            for j in 0..hs {
                let k = i * hs + j;
                if t < lengths[i] {
                    let c = g[i * h3 + 2 * hs + j].tanh();
                    cand[s + k] = c;
                    h_next[k] = z[s + k] * h_prev[k] + (T::one() - z[s + k]) * c;
                } else {
                    h_next[k] = h_prev[k];
                }
            }
        }
    }
    let last_state = h[t_max * b * hs..].to_vec();
    GruCache {
        h,
        z,
        r,
        c: cand,
        rh,
        last_state,
    }
}

pub(super) struct Forward<T> {
    col: Vec<T>,
    act: Vec<T>,
    gru: GruCache<T>,
    probs: Vec<T>,
    n_classes: usize,
}

impl<T: Scalar> Forward<T> {
    pub(super) fn probs_rows(&self) -> Vec<Vec<f64>> {
        self.probs
            .chunks_exact(self.n_classes)
            .map(|r| r.iter().map(|v| v.to_f64().unwrap()).collect())
            .collect()
    }
}

pub(super) fn forward<T: Scalar>(params: &Params<T>, batch: &Batch<T>) -> Forward<T> {
    let (col, act) = tcn(params, batch);
    let gru = gru(params, &act, &batch.lengths, batch.t_max);
    let (b, hs, nc) = (batch.b, params.config.gru_hidden, params.config.n_speakers);
    let mut probs = vec![T::zero(); b * nc];
    gemm(
        T::one(),
        View::block(&gru.last_state, b, hs, hs),
        params.dense_weight.view().t(),
        T::zero(),
        &mut probs,
        nc,
    );
    add_bias(&mut probs, &params.dense_bias);
    for row in probs.chunks_exact_mut(nc) {
        let p = super::softmax(row);
        row.copy_from_slice(&p);
    }
    Forward {
        col,
        act,
        gru,
        probs,
        n_classes: nc,
    }
}

/// Summed loss and gradients over the batch.
pub(super) fn backward<T: Scalar>(params: &Params<T>, batch: &Batch<T>, labels: &[usize]) -> BatchOutput<T> {
    let cfg = params.config;
    let fw = forward(params, batch);
    let (b, hs, nc, f) = (batch.b, cfg.gru_hidden, cfg.n_speakers, cfg.tcn_filters);
    let h3 = 3 * hs;
    let n = batch.t_max * b;
    let mut grads = Params::zeros(cfg);

    let mut loss = 0.0f64;
    let mut correct = 0;
    let mut dlogits = vec![T::zero(); b * nc];
    for (i, &y) in labels.iter().enumerate() {
        let p = &fw.probs[i * nc..(i + 1) * nc];
        loss += super::cross_entropy(p, y).to_f64().unwrap();
        if argmax(p) == y {
            correct += 1;
        }
        // the floored loss is constant below the floor
        if p[y].is_nan() || p[y] >= T::of(PROB_FLOOR) {
            for k in 0..nc {
                dlogits[i * nc + k] = p[k] - if k == y { T::one() } else { T::zero() };
            }
        }
    }

    let last = &fw.gru.last_state;
    gemm(
        T::one(),
        View::block(&dlogits, b, nc, nc).t(),
        View::block(last, b, hs, hs),
        T::zero(),
        grads.dense_weight.data_mut(),
        hs,
    );
    grads.dense_bias = col_sums(&dlogits, b, nc, nc);
    let mut dh = vec![T::zero(); b * hs];
    gemm(
        T::one(), View::block(&dlogits, b, nc, nc), params.dense_weight.view(), T::zero(), &mut dh, hs);

    let u = params.gru_recurrent_weight.data();
    let g = &fw.gru;
    let mut dxp = vec![T::zero(); n * h3];
    let mut drh = vec![T::zero(); b * hs];
    let mut dh_prev = vec![T::zero(); b * hs];
    for t in (0..batch.t_max).rev() {
        let s = t * b * hs;
        let dx = &mut dxp[t * b * h3..(t + 1) * b * h3];
        for i in 0..b {
            if t >= batch.lengths[i] {
                continue;
            }
            for j in 0..hs {
                let k = i * hs + j;
                let (z, c, hp) = (g.z[s + k], g.c[s + k], g.h[s + k]);
                let gd = dh[k];
                dx[i * h3 + j] = gd * (hp - c) * z * (T::one() - z);
                dx[i * h3 + 2 * hs + j] = gd * (T::one() - z) * (T::one() - c * c);
            }
        }
        gemm(
        T::one(),
            View::block(&dx[2 * hs..], b, hs, h3),
            View::block(&u[2 * hs..], hs, hs, h3).t(),
            T::zero(),
            &mut drh,
            hs,
        );
        for i in 0..b {
            let active = t < batch.lengths[i];
            for j in 0..hs {
                let k = i * hs + j;
                if active {
                    let (z, r, hp) = (g.z[s + k], g.r[s + k], g.h[s + k]);
                    dx[i * h3 + hs + j] = drh[k] * hp * r * (T::one() - r);
                    dh_prev[k] = dh[k] * z + drh[k] * r;
                } else {
                    dh_prev[k] = dh[k];
                }
            }
        }
        gemm(
        T::one(),
            View::block(dx, b, 2 * hs, h3),
            View::block(u, hs, 2 * hs, h3).t(),
            T::one(),
            &mut dh_prev,
            hs,
        );
        std::mem::swap(&mut dh, &mut dh_prev);
    }

    let du = grads.gru_recurrent_weight.data_mut();
    gemm(
        T::one(),
        View::block(&g.h[..n * hs], n, hs, hs).t(),
        View::block(&dxp, n, 2 * hs, h3),
        T::zero(),
        du,
        h3,
    );
    gemm(
        T::one(),
        View::block(&g.rh, n, hs, hs).t(),
        View::block(&dxp[2 * hs..], n, hs, h3),
        T::zero(),
        &mut du[2 * hs..],
        h3,
    );
    gemm(
        T::one(),
        View::block(&fw.act, n, f, f).t(),
        View::block(&dxp, n, h3, h3),
        T::zero(),
        grads.gru_input_weight.data_mut(),
        h3,
    );
    grads.gru_bias = col_sums(&dxp, n, h3, h3);

    let mut dact = vec![T::zero(); n * f];
    gemm(
        T::one(), View::block(&dxp, n, h3, h3), params.gru_input_weight.view().t(), T::zero(), &mut dact, f);
    for (d, a) in dact.iter_mut().zip(&fw.act) {
        if *a <= T::zero() {
            *d = T::zero();
        }
    }
    let kd = cfg.tcn_width * cfg.input_dim;
    gemm(
        T::one(),
        View::block(&fw.col, n, kd, kd).t(),
        View::block(&dact, n, f, f),
        T::zero(),
        grads.tcn_weight.data_mut(),
        f,
    );
    grads.tcn_bias = col_sums(&dact, n, f, f);

    BatchOutput {
        grads,
        loss,
        correct,
        count: b,
    }
}
