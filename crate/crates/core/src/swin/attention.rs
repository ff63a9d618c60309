//! Fused scaled-dot-product attention over window-partitioned tokens.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::{gemm, Scalar, Var};

struct Forward<T: Scalar> {
    out: Vec<T>,
    /// Row-softmaxed scores, `n×n` per (window, head), compact over valid tokens.
    probs: Vec<Vec<T>>,
    /// Valid token positions per window.
    valid_idx: Vec<Vec<usize>>,
}

fn gather_rows_into<T: Scalar>(src: &[T], base: usize, width: usize, idx: &[usize], dst: &mut Vec<T>) {
    dst.clear();
    for &t in idx {
        let r = (base + t) * width;
        dst.extend_from_slice(&src[r..r + width]);
    }
}

fn forward<T: Scalar>(
    qkv: &[T],
    windows: usize,
    tokens: usize,
    channels: usize,
    heads: usize,
    valid: &[bool],
) -> Forward<T> {
    let dk = channels / heads;
    let width = 3 * channels;
    let scale = T::from_f64(1.0 / (dk as f64).sqrt());
    let mut out = vec![T::ZERO; windows * tokens * channels];
    let mut probs = Vec::with_capacity(windows * heads);
    let mut valid_idx = Vec::with_capacity(windows);
    let mut buf = Vec::new();
    let mut obuf = Vec::new();
    for w in 0..windows {
        let idx: Vec<usize> = (0..tokens).filter(|&t| valid[w * tokens + t]).collect();
        let n = idx.len();
        gather_rows_into(qkv, w * tokens, width, &idx, &mut buf);
        obuf.clear();
        obuf.resize(n * channels, T::ZERO);
        for h in 0..heads {
            let (qo, ko, vo) = (h * dk, channels + h * dk, 2 * channels + h * dk);
            let mut p = vec![T::ZERO; n * n];
            if n > 0 {
                gemm(n, dk, n, scale, &buf[qo..], (width, 1), &buf[ko..], (1, width), T::ZERO, &mut p, (n, 1));
                for row in p.chunks_mut(n) {
                    let m = row.iter().copied().fold(row[0], T::max);
                    let mut z = T::ZERO;
                    for v in row.iter_mut() {
                        *v = (*v - m).exp();
                        z += *v;
                    }
                    row.iter_mut().for_each(|v| *v /= z);
                }
                gemm(n, n, dk, T::ONE, &p, (n, 1), &buf[vo..], (width, 1), T::ZERO, &mut obuf[h * dk..], (channels, 1));
            }
            probs.push(p);
        }
        for (r, &t) in idx.iter().enumerate() {
            let o = (w * tokens + t) * channels;
            out[o..o + channels].copy_from_slice(&obuf[r * channels..(r + 1) * channels]);
        }
        valid_idx.push(idx);
    }
    Forward { out, probs, valid_idx }
}

fn check<T: Scalar>(qkv: &Var<'_, T>, heads: usize, valid: &[bool]) -> Result<(usize, usize, usize)> {
    let s = qkv.shape();
    if s.len() != 3 || s[2] % 3 != 0 {
        return Err(Error::invalid("window_attention", format!("expected [windows, tokens, 3C], got {s:?}")));
    }
    let c = s[2] / 3;
    if heads == 0 || c % heads != 0 {
        return Err(Error::invalid("window_attention", format!("{c} channels not divisible into {heads} heads")));
    }
    if valid.len() != s[0] * s[1] {
        return Err(Error::shape("window_attention", &s, &[valid.len()]));
    }
    Ok((s[0], s[1], c))
}

/// Multi-head attention inside each window.
///
/// `qkv` is `[windows, tokens, 3C]` laid out as `[Q | K | V]`, each split into
/// `heads` contiguous column blocks. Tokens with `valid == false` (window
/// padding) are excluded as keys and produce zero output rows.
pub fn window_attention<'t, T: Scalar>(qkv: Var<'t, T>, heads: usize, valid: Rc<Vec<bool>>) -> Result<Var<'t, T>> {
    let (windows, tokens, channels) = check(&qkv, heads, &valid)?;
    let qv = qkv.value();
    let fwd = forward(&qv, windows, tokens, channels, heads, &valid);
    let Forward { out, probs, valid_idx } = fwd;
    let dk = channels / heads;
    let width = 3 * channels;
    let scale = T::from_f64(1.0 / (dk as f64).sqrt());

    Ok(qkv.tape().record(vec![windows, tokens, channels], out, &[qkv], move |g, _| {
        let mut gqkv = vec![T::ZERO; qv.len()];
        let mut buf = Vec::new();
        let mut dout = Vec::new();
        let mut dbuf = Vec::new();
        let mut dp = Vec::new();
        for (w, idx) in valid_idx.iter().enumerate() {
            let n = idx.len();
            if n == 0 {
                continue;
            }
            gather_rows_into(&qv, w * tokens, width, idx, &mut buf);
            gather_rows_into(g, w * tokens, channels, idx, &mut dout);
            dbuf.clear();
            dbuf.resize(n * width, T::ZERO);
            dp.resize(n * n, T::ZERO);
            for h in 0..heads {
                let p = &probs[w * heads + h];
                let (qo, ko, vo) = (h * dk, channels + h * dk, 2 * channels + h * dk);
                let d_o = &dout[h * dk..];
                gemm(n, n, dk, T::ONE, p, (1, n), d_o, (channels, 1), T::ZERO, &mut dbuf[vo..], (width, 1));
                gemm(n, dk, n, T::ONE, d_o, (channels, 1), &buf[vo..], (1, width), T::ZERO, &mut dp, (n, 1));
                for (drow, prow) in dp.chunks_mut(n).zip(p.chunks(n)) {
                    let dot: T = drow.iter().zip(prow).map(|(a, b)| *a * *b).sum();
                    for (d, &pv) in drow.iter_mut().zip(prow) {
                        *d = pv * (*d - dot);
                    }
                }
                gemm(n, n, dk, scale, &dp, (n, 1), &buf[ko..], (width, 1), T::ZERO, &mut dbuf[qo..], (width, 1));
                gemm(n, n, dk, scale, &dp, (1, n), &buf[qo..], (width, 1), T::ZERO, &mut dbuf[ko..], (width, 1));
            }
            for (r, &t) in idx.iter().enumerate() {
                let o = (w * tokens + t) * width;
                gqkv[o..o + width].copy_from_slice(&dbuf[r * width..(r + 1) * width]);
            }
        }
        vec![Some(gqkv)]
    }))
}

/// Attention probabilities per (window, head), each a row-major `n×n` matrix
/// over the window's valid tokens.
pub fn attention_probabilities<T: Scalar>(qkv: Var<'_, T>, heads: usize, valid: &[bool]) -> Result<Vec<Vec<T>>> {
    let (windows, tokens, channels) = check(&qkv, heads, valid)?;
    Ok(forward(&qkv.value(), windows, tokens, channels, heads, valid).probs)
}
