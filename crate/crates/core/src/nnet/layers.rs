//! Forward and backward kernels for the ops the network needs.
//!
//! Tensors are flat row-major `f64` slices; `C×H×W` means channel, angle,
//! time. Backward functions accumulate into gradient buffers.

use crate::error::{Error, Result};

use super::config::BlockShape;

/// A `C×H×W` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "{} values do not fill a {channels}x{height}x{width} tensor",
                data.len()
            )));
        }
        Ok(Tensor3 {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn at(&self, c: usize, h: usize, w: usize) -> f64 {
        self.data[(c * self.height + h) * self.width + w]
    }
}

/// Wraps rows cyclically on the angle axis: row `j` of the output is row
/// `(j - pad) mod H` of the input.
pub fn circular_pad(t: &Tensor3, pad: usize) -> Result<Tensor3> {
    if pad >= t.height {
        return Err(Error::Shape(format!(
            "circular padding {pad} needs more than {pad} angle bins, got {}",
            t.height
        )));
    }
    let data = pad_input(&t.data, t.channels, t.height, t.width, pad, 0);
    Tensor3::new(t.channels, t.height + 2 * pad, t.width, data)
}

/// Circular padding by `ph` rows and zero padding by `pw` columns.
fn pad_input(x: &[f64], c: usize, h: usize, w: usize, ph: usize, pw: usize) -> Vec<f64> {
    let (hp, wp) = (h + 2 * ph, w + 2 * pw);
    let mut out = vec![0.0; c * hp * wp];
    for ch in 0..c {
        for j in 0..hp {
            let src_row = (j + h - ph) % h;
            let src = &x[(ch * h + src_row) * w..][..w];
            out[(ch * hp + j) * wp + pw..][..w].copy_from_slice(src);
        }
    }
    out
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Four independent partial sums so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

/// "Same" convolution with circular angle padding and zero time padding.
/// Weights are `[out, in, k, k]`. Returns the pre-activation and the padded
/// input (kept for the backward pass).
pub fn conv_same(shape: &BlockShape, weight: &[f64], bias: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let BlockShape {
        in_channels: ci,
        out_channels: co,
        kernel: k,
        height: h,
        width: w,
        ..
    } = *shape;
    let xp = pad_input(x, ci, h, w, k / 2, k / 2);
    let mut y = vec![0.0; co * h * w];
    const TILE: usize = 8;
    let full = w / TILE * TILE;
    let p = k / 2;
    let (hp, wp) = (h + 2 * p, w + 2 * p);
    for o in 0..co {
        let w_o = &weight[o * ci * k * k..][..ci * k * k];
        for r in 0..h {
            let dst = &mut y[(o * h + r) * w..][..w];
            // output tiles accumulate over every tap in registers
            for c0 in (0..full).step_by(TILE) {
                let mut acc = [bias[o]; TILE];
                for i in 0..ci {
                    for kh in 0..k {
                        let row = &xp[(i * hp + r + kh) * wp + c0..][..TILE + k - 1];
                        let wrow = &w_o[(i * k + kh) * k..][..k];
                        for (kw, &wt) in wrow.iter().enumerate() {
                            let src = &row[kw..kw + TILE];
                            for j in 0..TILE {
                                acc[j] += wt * src[j];
                            }
                        }
                    }
                }
                dst[c0..c0 + TILE].copy_from_slice(&acc);
            }
            if full < w {
                let tail = &mut dst[full..];
                tail.iter_mut().for_each(|v| *v = bias[o]);
                for i in 0..ci {
                    for kh in 0..k {
                        let row = &xp[(i * hp + r + kh) * wp..][..wp];
                        let wrow = &w_o[(i * k + kh) * k..][..k];
                        for (kw, &wt) in wrow.iter().enumerate() {
                            axpy(wt, &row[full + kw..kw + w], tail);
                        }
                    }
                }
            }
        }
    }
    (y, xp)
}

pub(crate) struct ConvCache {
    padded: Vec<f64>,
    pre: Vec<f64>,
    argmax: Vec<u32>,
}

/// Conv, rectifier, floor max-pool. Returns the pooled `C×H'×W'` output.
pub(crate) fn conv_block_forward(shape: &BlockShape, weight: &[f64], bias: &[f64], x: &[f64], pool: usize) -> (Vec<f64>, ConvCache) {
    let (pre, padded) = conv_same(shape, weight, bias, x);
    let (h, w) = (shape.height, shape.width);
    let (ph, pw) = (shape.pooled_height, shape.pooled_width);
    let mut out = vec![0.0; shape.out_channels * ph * pw];
    let mut argmax = vec![0u32; out.len()];
    for o in 0..shape.out_channels {
        let plane = &pre[o * h * w..][..h * w];
        for r in 0..ph {
            for c in 0..pw {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for dr in 0..pool {
                    for dc in 0..pool {
                        let idx = (r * pool + dr) * w + c * pool + dc;
                        if plane[idx] > best {
                            best = plane[idx];
                            best_idx = idx;
                        }
                    }
                }
                let j = (o * ph + r) * pw + c;
                // max commutes with the monotone rectifier
                out[j] = best.max(0.0);
                argmax[j] = (o * h * w + best_idx) as u32;
            }
        }
    }
    (out, ConvCache { padded, pre, argmax })
}

/// Accumulates weight and bias gradients; returns the input gradient when
/// `want_input_grad` is set.
pub(crate) fn conv_block_backward(
    shape: &BlockShape,
    weight: &[f64],
    cache: &ConvCache,
    d_out: &[f64],
    d_weight: &mut [f64],
    d_bias: &mut [f64],
    want_input_grad: bool,
) -> Option<Vec<f64>> {
    let BlockShape {
        in_channels: ci,
        kernel: k,
        height: h,
        width: w,
        ..
    } = *shape;
    let p = k / 2;
    let (hp, wp) = (h + 2 * p, w + 2 * p);

    // only pooled winners with a positive pre-activation carry gradient
    let mut d_padded = if want_input_grad { vec![0.0; ci * hp * wp] } else { Vec::new() };
    for (j, &g) in d_out.iter().enumerate() {
        let idx = cache.argmax[j] as usize;
        if g == 0.0 || cache.pre[idx] <= 0.0 {
            continue;
        }
        let o = idx / (h * w);
        let (r, c) = ((idx % (h * w)) / w, idx % w);
        d_bias[o] += g;
        for i in 0..ci {
            for kh in 0..k {
                let base = (i * hp + r + kh) * wp + c;
                let wi = ((o * ci + i) * k + kh) * k;
                let xs = &cache.padded[base..base + k];
                for (dw, x) in d_weight[wi..wi + k].iter_mut().zip(xs) {
                    *dw += g * x;
                }
                if want_input_grad {
                    for (dp, wt) in d_padded[base..base + k].iter_mut().zip(&weight[wi..wi + k]) {
                        *dp += g * wt;
                    }
                }
            }
        }
    }

    if !want_input_grad {
        return None;
    }
    let mut dx = vec![0.0; ci * h * w];
    for i in 0..ci {
        for j in 0..hp {
            let dst_row = (j + h - p) % h;
            let src = &d_padded[(i * hp + j) * wp + p..][..w];
            let dst = &mut dx[(i * h + dst_row) * w..][..w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    Some(dx)
}

/// `out += W x` for `W` of shape `[out.len(), x.len()]`.
#[inline]
pub(crate) fn matvec_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(n)) {
        *o += dot(row, x);
    }
}

/// `out += Wᵀ d`.
#[inline]
pub(crate) fn matvec_t_acc(w: &[f64], d: &[f64], out: &mut [f64]) {
    let n = out.len();
    for (&di, row) in d.iter().zip(w.chunks_exact(n)) {
        if di != 0.0 {
            axpy(di, row, out);
        }
    }
}

/// `dW += d xᵀ`.
#[inline]
pub(crate) fn outer_acc(dw: &mut [f64], d: &[f64], x: &[f64]) {
    let n = x.len();
    for (&di, row) in d.iter().zip(dw.chunks_exact_mut(n)) {
        if di != 0.0 {
            axpy(di, x, row);
        }
    }
}

pub(crate) fn dense(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    matvec_acc(w, x, &mut y);
    y
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Weights of one recurrent direction; gate blocks are ordered reset,
/// update, candidate.
pub(crate) struct GruWeights<'a> {
    pub w_ih: &'a [f64],
    pub w_hh: &'a [f64],
    pub b_ih: &'a [f64],
    pub b_hh: &'a [f64],
}

pub(crate) struct GruGrads<'a> {
    pub w_ih: &'a mut [f64],
    pub w_hh: &'a mut [f64],
    pub b_ih: &'a mut [f64],
    pub b_hh: &'a mut [f64],
}

pub(crate) struct GruStep {
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    /// `W_hn h + b_hn`
    g: Vec<f64>,
}

/// Runs one direction over `xs` (already in processing order).
///
/// `h' = (1 - z) n + z h` with `n = tanh(W_in x + b_in + r (W_hn h + b_hn))`,
/// initial state zero. Returns the hidden state after every step.
pub(crate) fn gru_forward(wt: &GruWeights, hidden: usize, xs: &[&[f64]]) -> (Vec<Vec<f64>>, Vec<GruStep>) {
    let hd = hidden;
    let mut h = vec![0.0; hd];
    let mut hs = Vec::with_capacity(xs.len());
    let mut steps = Vec::with_capacity(xs.len());
    for x in xs {
        let mut a_i = wt.b_ih.to_vec();
        matvec_acc(wt.w_ih, x, &mut a_i);
        let mut a_h = wt.b_hh.to_vec();
        matvec_acc(wt.w_hh, &h, &mut a_h);
        let r: Vec<f64> = (0..hd).map(|j| sigmoid(a_i[j] + a_h[j])).collect();
        let z: Vec<f64> = (0..hd).map(|j| sigmoid(a_i[hd + j] + a_h[hd + j])).collect();
        let g = a_h[2 * hd..].to_vec();
        let n: Vec<f64> = (0..hd).map(|j| (a_i[2 * hd + j] + r[j] * g[j]).tanh()).collect();
        let h_new: Vec<f64> = (0..hd).map(|j| (1.0 - z[j]) * n[j] + z[j] * h[j]).collect();
        steps.push(GruStep {
            h_prev: std::mem::replace(&mut h, h_new.clone()),
            r,
            z,
            n,
            g,
        });
        hs.push(h_new);
    }
    (hs, steps)
}

/// Backpropagation through time. `d_hs[t]` is the loss gradient flowing
/// into the output at step `t` from outside the recurrence. Returns the
/// gradient for each input.
pub(crate) fn gru_backward(
    wt: &GruWeights,
    grads: &mut GruGrads,
    hidden: usize,
    xs: &[&[f64]],
    steps: &[GruStep],
    d_hs: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    let hd = hidden;
    let in_dim = xs.first().map_or(0, |x| x.len());
    let mut dxs = vec![vec![0.0; in_dim]; xs.len()];
    let mut dh_next = vec![0.0; hd];
    let mut d_ai = vec![0.0; 3 * hd];
    let mut d_ah = vec![0.0; 3 * hd];
    for t in (0..xs.len()).rev() {
        let s = &steps[t];
        let mut dh_prev = vec![0.0; hd];
        for j in 0..hd {
            let dh = d_hs[t][j] + dh_next[j];
            let dn = dh * (1.0 - s.z[j]);
            let dz = dh * (s.h_prev[j] - s.n[j]);
            dh_prev[j] = dh * s.z[j];
            let da_n = dn * (1.0 - s.n[j] * s.n[j]);
            let dr = da_n * s.g[j];
            let da_z = dz * s.z[j] * (1.0 - s.z[j]);
            let da_r = dr * s.r[j] * (1.0 - s.r[j]);
            d_ai[j] = da_r;
            d_ai[hd + j] = da_z;
            d_ai[2 * hd + j] = da_n;
            d_ah[j] = da_r;
            d_ah[hd + j] = da_z;
            d_ah[2 * hd + j] = da_n * s.r[j];
        }
        outer_acc(grads.w_ih, &d_ai, xs[t]);
        outer_acc(grads.w_hh, &d_ah, &s.h_prev);
        axpy(1.0, &d_ai, grads.b_ih);
        axpy(1.0, &d_ah, grads.b_hh);
        matvec_t_acc(wt.w_ih, &d_ai, &mut dxs[t]);
        matvec_t_acc(wt.w_hh, &d_ah, &mut dh_prev);
        dh_next = dh_prev;
    }
    dxs
}
