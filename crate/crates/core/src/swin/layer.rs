use std::rc::Rc;

use super::attention::window_attention;
use super::window::{cyclic_shift, window_partition, window_reverse, WindowBatch, WindowSpec};
use crate::error::{Error, Result};
use crate::tensor::ops::{self, NORM_EPS};
use crate::tensor::{Scalar, Var};

/// Projection weights of one multi-head self-attention.
///
/// `w_qkv` is `[C, 3C]`: columns `[Q_1..Q_I | K_1..K_I | V_1..V_I]`, each
/// head block `d_k = C / I` wide. `w_out` is `[C, C]`.
#[derive(Clone, Copy, Debug)]
pub struct AttentionParams<'t, T: Scalar> {
    pub w_qkv: Var<'t, T>,
    pub w_out: Var<'t, T>,
    pub heads: usize,
}

impl<T: Scalar> AttentionParams<'_, T> {
    pub fn channels(&self) -> usize {
        self.w_out.shape()[0]
    }

    pub fn key_dim(&self) -> usize {
        self.channels() / self.heads
    }

    fn validate(&self) -> Result<usize> {
        let c = self.w_out.shape();
        let qkv = self.w_qkv.shape();
        if c.len() != 2 || c[0] != c[1] || qkv != [c[0], 3 * c[0]] {
            return Err(Error::shape("attention params", &qkv, &c));
        }
        if self.heads == 0 || c[0] % self.heads != 0 {
            return Err(Error::invalid(
                "attention params",
                format!("{} channels do not split into {} heads", c[0], self.heads),
            ));
        }
        Ok(c[0])
    }
}

/// A weight matrix `[din, dout]` with optional bias applied over the trailing axis.
#[derive(Clone, Copy, Debug)]
pub struct Affine<'t, T: Scalar> {
    pub w: Var<'t, T>,
    pub b: Option<Var<'t, T>>,
}

impl<'t, T: Scalar> Affine<'t, T> {
    pub fn apply(&self, x: Var<'t, T>) -> Result<Var<'t, T>> {
        ops::linear(x, self.w, self.b)
    }
}

/// Attention plus the linear embedding applied to the gathered windows.
#[derive(Clone, Copy, Debug)]
pub struct WindowAttentionParams<'t, T: Scalar> {
    pub attention: AttentionParams<'t, T>,
    pub embed: Affine<'t, T>,
}

/// Both halves of a Swin layer: W-SA and SW-SA, each followed by its linear.
#[derive(Clone, Copy, Debug)]
pub struct SwinLayerParams<'t, T: Scalar> {
    pub window: WindowAttentionParams<'t, T>,
    pub window_proj: Affine<'t, T>,
    pub shifted: WindowAttentionParams<'t, T>,
    pub shifted_proj: Affine<'t, T>,
}

/// `A_l = Concat(head_1..head_I) W_out` for every window `l`, where
/// `head_i = softmax(M_l Q_i (M_l K_i)^T / sqrt(d_k)) M_l V_i`.
pub fn mhsa<'t, T: Scalar>(wb: &WindowBatch<'t, T>, params: &AttentionParams<'t, T>) -> Result<WindowBatch<'t, T>> {
    let c = params.validate()?;
    if wb.channels() != c {
        return Err(Error::shape("mhsa", &wb.tokens.shape(), &params.w_out.shape()));
    }
    let qkv = ops::linear(wb.tokens, params.w_qkv, None)?;
    let heads = window_attention(qkv, params.heads, Rc::clone(&wb.valid))?;
    let tokens = ops::linear(heads, params.w_out, None)?;
    Ok(WindowBatch { tokens, ..wb.clone() })
}

fn windowed<'t, T: Scalar>(x: Var<'t, T>, spec: WindowSpec, p: &WindowAttentionParams<'t, T>) -> Result<Var<'t, T>> {
    let offsets = spec.shift.map(|s| s as isize);
    let x = if spec.is_shifted() { cyclic_shift(x, offsets)? } else { x };
    let wb = window_partition(x, spec)?;
    let attended = mhsa(&wb, &p.attention)?;
    let embedded = WindowBatch {
        tokens: p.embed.apply(attended.tokens)?,
        ..attended
    };
    let y = window_reverse(&embedded)?;
    if spec.is_shifted() {
        cyclic_shift(y, offsets.map(|o| -o))
    } else {
        Ok(y)
    }
}

/// Window self-attention over a channel-last `[B, H, W, L, C]` tensor. Any
/// shift in `spec` is ignored.
pub fn w_sa<'t, T: Scalar>(x: Var<'t, T>, spec: WindowSpec, p: &WindowAttentionParams<'t, T>) -> Result<Var<'t, T>> {
    windowed(x, spec.unshifted(), p)
}

/// Shifted-window self-attention: roll by `spec.shift`, attend, roll back.
pub fn sw_sa<'t, T: Scalar>(x: Var<'t, T>, spec: WindowSpec, p: &WindowAttentionParams<'t, T>) -> Result<Var<'t, T>> {
    windowed(x, spec, p)
}

/// `X_e^out = X_e + LN(linear(W-SA(X_e)))`, `Y_out = X_e^out + LN(linear(SW-SA(X_e^out)))`.
pub fn swin_layer<'t, T: Scalar>(x_e: Var<'t, T>, window: WindowSpec, p: &SwinLayerParams<'t, T>) -> Result<Var<'t, T>> {
    let a = w_sa(x_e, window, &p.window)?;
    let a = ops::layer_norm(p.window_proj.apply(a)?, NORM_EPS)?;
    let x_out = ops::add(x_e, a)?;
    let b = sw_sa(x_out, window.shifted(), &p.shifted)?;
    let b = ops::layer_norm(p.shifted_proj.apply(b)?, NORM_EPS)?;
    ops::add(x_out, b)
}
