use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Var};

pub const NORM_EPS: f64 = 1e-5;

/// Normalize each contiguous group of `group` elements to zero mean and unit
/// (population) variance.
fn normalize_groups<T: Scalar>(x: Var<'_, T>, group: usize, eps: f64) -> Var<'_, T> {
    let xv = x.value();
    let eps = T::from_f64(eps);
    let inv_n = T::ONE / T::from_usize(group);
    let mut y = vec![T::ZERO; xv.len()];
    let mut inv_std = Vec::with_capacity(xv.len() / group);
    for (xs, ys) in xv.chunks(group).zip(y.chunks_mut(group)) {
        let mean = xs.iter().copied().sum::<T>() * inv_n;
        let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_n;
        let r = T::ONE / (var + eps).sqrt();
        for (y, &v) in ys.iter_mut().zip(xs) {
            *y = (v - mean) * r;
        }
        inv_std.push(r);
    }
    let yv = Rc::new(y.clone());
    x.tape().record(x.shape(), y, &[x], move |g, _| {
        let mut gx = vec![T::ZERO; g.len()];
        for (((gs, ys), out), &r) in g
            .chunks(group)
            .zip(yv.chunks(group))
            .zip(gx.chunks_mut(group))
            .zip(&inv_std)
        {
            let mg = gs.iter().copied().sum::<T>() * inv_n;
            let mgy = gs.iter().zip(ys).map(|(&g, &y)| g * y).sum::<T>() * inv_n;
            for ((o, &g), &y) in out.iter_mut().zip(gs).zip(ys) {
                *o = r * (g - mg - y * mgy);
            }
        }
        vec![Some(gx)]
    })
}

/// Per-(batch, channel) normalization over all spatial axes of `[B, C, ...]`.
pub fn instance_norm<T: Scalar>(x: Var<'_, T>, eps: f64) -> Result<Var<'_, T>> {
    let shape = x.shape();
    if shape.len() < 3 {
        return Err(Error::invalid("instance_norm", format!("need [B, C, ...], got {shape:?}")));
    }
    let group: usize = shape[2..].iter().product();
    Ok(normalize_groups(x, group, eps))
}

/// Normalization over the trailing feature axis.
pub fn layer_norm<T: Scalar>(x: Var<'_, T>, eps: f64) -> Result<Var<'_, T>> {
    let shape = x.shape();
    let Some(&d) = shape.last() else {
        return Err(Error::invalid("layer_norm", "scalar input"));
    };
    Ok(normalize_groups(x, d, eps))
}
