//! Training objectives: masked-reconstruction MAE, NT-Xent and Dice-CE.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Var};

pub const NT_XENT_TEMPERATURE: f64 = 0.5;
pub const DICE_SMOOTH: f64 = 1e-5;

/// `mean |pred - target|`; the subgradient at ties is 0.
pub fn mae_loss<'t, T: Scalar>(pred: Var<'t, T>, target: Var<'t, T>) -> Result<Var<'t, T>> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("mae_loss", &pred.shape(), &target.shape()));
    }
    let (p, t) = (pred.value(), target.value());
    if p.is_empty() {
        return Err(Error::Empty("mae_loss input"));
    }
    let inv_n = T::ONE / T::from_usize(p.len());
    let sign: Vec<T> = p.iter().zip(t.iter()).map(|(&a, &b)| (a - b).signum0()).collect();
    let loss = p.iter().zip(t.iter()).map(|(&a, &b)| (a - b).abs()).sum::<T>() * inv_n;
    Ok(pred.tape().record(vec![], vec![loss], &[pred, target], move |g, need| {
        let gs = g[0] * inv_n;
        let gp: Vec<T> = sign.iter().map(|&s| s * gs).collect();
        let gt = need[1].then(|| gp.iter().map(|&v| -v).collect());
        vec![need[0].then_some(gp), gt]
    }))
}

/// NT-Xent over `z: [2B, D]`, where row `i < B` and row `i + B` form a
/// positive pair. Averaged over all `2B` anchors; similarities are cosines
/// divided by `tau`.
pub fn nt_xent<T: Scalar>(z: Var<'_, T>, tau: f64) -> Result<Var<'_, T>> {
    let shape = z.shape();
    if shape.len() != 2 || shape[0] < 2 || shape[0] % 2 != 0 || shape[1] == 0 {
        return Err(Error::invalid("nt_xent", format!("need [2B, D] with B >= 1, got {shape:?}")));
    }
    if !(tau > 0.0) {
        return Err(Error::invalid("nt_xent", format!("temperature must be positive, got {tau}")));
    }
    let (n, d) = (shape[0], shape[1]);
    let half = n / 2;
    let zv = z.value();
    let mut norms = Vec::with_capacity(n);
    let mut u = vec![T::ZERO; n * d];
    for i in 0..n {
        let row = &zv[i * d..(i + 1) * d];
        let norm = row.iter().map(|&v| v * v).sum::<T>().sqrt();
        if !(norm.to_f64() > 0.0) || !norm.is_finite() {
            return Err(Error::Undefined("cosine similarity of a zero or non-finite embedding"));
        }
        for (o, &v) in u[i * d..(i + 1) * d].iter_mut().zip(row) {
            *o = v / norm;
        }
        norms.push(norm);
    }
    let inv_tau = T::from_f64(1.0 / tau);
    let dot = |i: usize, k: usize| -> T { (0..d).map(|c| u[i * d + c] * u[k * d + c]).sum::<T>() };
    // dL/dS for S_ik = u_i . u_k / tau.
    let mut g_s = vec![T::ZERO; n * n];
    let mut loss = T::ZERO;
    let inv_n = T::ONE / T::from_usize(n);
    for i in 0..n {
        let j = (i + half) % n;
        let s: Vec<T> = (0..n).map(|k| dot(i, k) * inv_tau).collect();
        let m = (0..n).filter(|&k| k != i).map(|k| s[k]).fold(T::from_f64(f64::NEG_INFINITY), T::max);
        let denom = (0..n).filter(|&k| k != i).map(|k| (s[k] - m).exp()).sum::<T>();
        loss += m + denom.ln() - s[j];
        for k in (0..n).filter(|&k| k != i) {
            g_s[i * n + k] = (s[k] - m).exp() / denom * inv_n;
        }
        g_s[i * n + j] -= inv_n;
    }
    loss *= inv_n;
    Ok(z.tape().record(vec![], vec![loss], &[z], move |g, _| {
        let mut gz = vec![T::ZERO; n * d];
        for i in 0..n {
            let mut gu = vec![T::ZERO; d];
            for k in 0..n {
                let w = (g_s[i * n + k] + g_s[k * n + i]) * inv_tau * g[0];
                for (o, &v) in gu.iter_mut().zip(&u[k * d..(k + 1) * d]) {
                    *o += w * v;
                }
            }
            let ui = &u[i * d..(i + 1) * d];
            let proj = gu.iter().zip(ui).map(|(&a, &b)| a * b).sum::<T>();
            for c in 0..d {
                gz[i * d + c] = (gu[c] - ui[c] * proj) / norms[i];
            }
        }
        vec![Some(gz)]
    }))
}

/// Soft Dice on the foreground channel (averaged over samples) plus mean
/// voxelwise cross entropy.
///
/// `logits` is `[B, 2, ...]`; `labels` holds `B · prod(...)` values in
/// `{0, 1}` laid out like one channel of `logits`.
pub fn dice_ce_loss<'t, T: Scalar>(logits: Var<'t, T>, labels: &[u8]) -> Result<Var<'t, T>> {
    let shape = logits.shape();
    if shape.len() < 3 || shape[1] != 2 {
        return Err(Error::invalid("dice_ce_loss", format!("need [B, 2, ...] logits, got {shape:?}")));
    }
    let b = shape[0];
    let vox: usize = shape[2..].iter().product();
    if labels.len() != b * vox {
        return Err(Error::shape("dice_ce_loss", &shape, &[labels.len()]));
    }
    if labels.iter().any(|&g| g > 1) {
        return Err(Error::invalid("dice_ce_loss", "labels must be 0 or 1"));
    }
    if b * vox == 0 {
        return Err(Error::Empty("dice_ce_loss input"));
    }
    let zv = logits.value();
    let eps = T::from_f64(DICE_SMOOTH);
    let two = T::from_f64(2.0);
    let inv_b = T::ONE / T::from_usize(b);
    let inv_n = T::ONE / T::from_usize(b * vox);
    let mut p1 = vec![T::ZERO; b * vox];
    let mut ce = T::ZERO;
    let mut dice = T::ZERO;
    let mut stats = Vec::with_capacity(b);
    for s in 0..b {
        let (z0, z1) = (&zv[(2 * s) * vox..(2 * s + 1) * vox], &zv[(2 * s + 1) * vox..(2 * s + 2) * vox]);
        let (mut inter, mut union) = (T::ZERO, eps);
        for v in 0..vox {
            let margin = z1[v] - z0[v];
            let g = labels[s * vox + v];
            // -log p_true = softplus(-margin) for foreground, softplus(margin) otherwise.
            let x = if g == 1 { -margin } else { margin };
            ce += x.max(T::ZERO) + (T::ONE + (-x.abs()).exp()).ln();
            let p = T::ONE / (T::ONE + (-margin).exp());
            p1[s * vox + v] = p;
            let gf = T::from_usize(g as usize);
            inter += p * gf;
            union += p + gf;
        }
        dice += T::ONE - two * inter / union;
        stats.push((inter, union));
    }
    let loss = dice * inv_b + ce * inv_n;
    let labels = labels.to_vec();
    Ok(logits.tape().record(vec![], vec![loss], &[logits], move |g, _| {
        let mut gz = vec![T::ZERO; 2 * b * vox];
        for s in 0..b {
            let (inter, union) = stats[s];
            for v in 0..vox {
                let p = p1[s * vox + v];
                let gf = T::from_usize(labels[s * vox + v] as usize);
                let d_dice = (two * inter / (union * union) - two * gf / union) * inv_b;
                let dm = (d_dice * p * (T::ONE - p) + (p - gf) * inv_n) * g[0];
                gz[(2 * s + 1) * vox + v] = dm;
                gz[(2 * s) * vox + v] = -dm;
            }
        }
        vec![Some(gz)]
    }))
}
