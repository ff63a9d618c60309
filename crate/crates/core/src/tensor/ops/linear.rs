use super::same_tape;
use crate::error::{Error, Result};
use crate::tensor::{gemm, Scalar, Var};

/// Affine map over the trailing axis: `x[..., din] · w[din, dout] + b[dout]`.
pub fn linear<'t, T: Scalar>(
    x: Var<'t, T>,
    w: Var<'t, T>,
    b: Option<Var<'t, T>>,
) -> Result<Var<'t, T>> {
    let xs = x.shape();
    let ws = w.shape();
    let din = *xs.last().ok_or_else(|| Error::invalid("linear", "scalar input"))?;
    if ws.len() != 2 || ws[0] != din {
        return Err(Error::shape("linear", &xs, &ws));
    }
    let dout = ws[1];
    let mut parents = vec![x, w];
    if let Some(b) = b {
        if b.shape() != [dout] {
            return Err(Error::shape("linear bias", &ws, &b.shape()));
        }
        parents.push(b);
    }
    same_tape("linear", &parents)?;

    let rows = x.numel() / din;
    let (xv, wv) = (x.value(), w.value());
    let mut y = vec![T::ZERO; rows * dout];
    if let Some(b) = b {
        let bv = b.value();
        for r in y.chunks_mut(dout) {
            r.copy_from_slice(&bv);
        }
    }
    gemm(rows, din, dout, T::ONE, &xv, (din, 1), &wv, (dout, 1), T::ONE, &mut y, (dout, 1));

    let mut out_shape = xs;
    *out_shape.last_mut().unwrap() = dout;
    let has_bias = b.is_some();
    Ok(x.tape().record(out_shape, y, &parents, move |g, need| {
        let gx = need[0].then(|| {
            let mut gx = vec![T::ZERO; rows * din];
            gemm(rows, dout, din, T::ONE, g, (dout, 1), &wv, (1, dout), T::ZERO, &mut gx, (din, 1));
            gx
        });
        let gw = need[1].then(|| {
            let mut gw = vec![T::ZERO; din * dout];
            gemm(din, rows, dout, T::ONE, &xv, (1, din), g, (dout, 1), T::ZERO, &mut gw, (dout, 1));
            gw
        });
        let mut grads = vec![gx, gw];
        if has_bias {
            grads.push(need[2].then(|| {
                let mut gb = vec![T::ZERO; dout];
                for r in g.chunks(dout) {
                    gb.iter_mut().zip(r).for_each(|(a, b)| *a += *b);
                }
                gb
            }));
        }
        grads
    }))
}
