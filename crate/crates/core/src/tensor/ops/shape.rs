use std::rc::Rc;

use super::same_tape;
use crate::error::{Error, Result};
use crate::tensor::{strides, Scalar, Var};

/// Sentinel in a remap table: the output element is zero and has no source.
pub const PAD: usize = usize::MAX;

/// Gather `out[i] = x[map[i]]` (zero where `map[i] == PAD`). Backward scatters.
pub fn remap<'t, T: Scalar>(
    x: Var<'t, T>,
    out_shape: Vec<usize>,
    map: Rc<Vec<usize>>,
) -> Result<Var<'t, T>> {
    let n_out: usize = out_shape.iter().product();
    let n_in = x.numel();
    if map.len() != n_out {
        return Err(Error::shape("remap", &out_shape, &[map.len()]));
    }
    if let Some(bad) = map.iter().find(|&&m| m != PAD && m >= n_in) {
        return Err(Error::invalid("remap", format!("source index {bad} out of range {n_in}")));
    }
    let xv = x.value();
    let out = map
        .iter()
        .map(|&m| if m == PAD { T::ZERO } else { xv[m] })
        .collect();
    Ok(x.tape().record(out_shape, out, &[x], move |g, _| {
        let mut gx = vec![T::ZERO; n_in];
        for (&m, &gi) in map.iter().zip(g) {
            if m != PAD {
                gx[m] += gi;
            }
        }
        vec![Some(gx)]
    }))
}

pub fn reshape<'t, T: Scalar>(x: Var<'t, T>, shape: impl Into<Vec<usize>>) -> Result<Var<'t, T>> {
    let shape = shape.into();
    if shape.iter().product::<usize>() != x.numel() {
        return Err(Error::shape("reshape", &x.shape(), &shape));
    }
    let data = x.value().as_ref().clone();
    Ok(x.tape().record(shape, data, &[x], |g, _| vec![Some(g.to_vec())]))
}

fn unravel(mut flat: usize, shape: &[usize], out: &mut [usize]) {
    for d in (0..shape.len()).rev() {
        out[d] = flat % shape[d];
        flat /= shape[d];
    }
}

/// Reorder axes: output axis `d` is input axis `perm[d]`.
pub fn permute<'t, T: Scalar>(x: Var<'t, T>, perm: &[usize]) -> Result<Var<'t, T>> {
    let shape = x.shape();
    let mut seen = vec![false; shape.len()];
    if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::invalid("permute", format!("{perm:?} is not a permutation of {} axes", shape.len())));
    }
    let in_strides = strides(&shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let n = x.numel();
    let mut idx = vec![0; shape.len()];
    let map = (0..n)
        .map(|i| {
            unravel(i, &out_shape, &mut idx);
            idx.iter().zip(perm).map(|(&v, &p)| v * in_strides[p]).sum()
        })
        .collect();
    remap(x, out_shape, Rc::new(map))
}

/// Slice `len` entries starting at `start` along `axis`.
pub fn narrow<'t, T: Scalar>(x: Var<'t, T>, axis: usize, start: usize, len: usize) -> Result<Var<'t, T>> {
    let shape = x.shape();
    if axis >= shape.len() || start + len > shape[axis] || len == 0 {
        return Err(Error::invalid("narrow", format!("range {start}+{len} on axis {axis} of {shape:?}")));
    }
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut map = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * shape[axis] + start) * inner;
        map.extend(base..base + len * inner);
    }
    let mut out_shape = shape;
    out_shape[axis] = len;
    remap(x, out_shape, Rc::new(map))
}

/// Concatenate along `axis`; all other extents must agree.
pub fn concat<'t, T: Scalar>(xs: &[Var<'t, T>], axis: usize) -> Result<Var<'t, T>> {
    if xs.is_empty() {
        return Err(Error::invalid("concat", "no operands"));
    }
    same_tape("concat", xs)?;
    let first = xs[0].shape();
    if axis >= first.len() {
        return Err(Error::invalid("concat", format!("axis {axis} out of range for {first:?}")));
    }
    let shapes: Vec<Vec<usize>> = xs.iter().map(|x| x.shape()).collect();
    for s in &shapes[1..] {
        let compatible = s.len() == first.len()
            && s.iter().zip(&first).enumerate().all(|(d, (a, b))| d == axis || a == b);
        if !compatible {
            return Err(Error::shape("concat", &first, s));
        }
    }
    let outer: usize = first[..axis].iter().product();
    let inner: usize = first[axis + 1..].iter().product();
    let chunks: Vec<usize> = shapes.iter().map(|s| s[axis] * inner).collect();
    let row: usize = chunks.iter().sum();
    let values: Vec<_> = xs.iter().map(|x| x.value()).collect();
    let mut out = Vec::with_capacity(outer * row);
    for o in 0..outer {
        for (v, &c) in values.iter().zip(&chunks) {
            out.extend_from_slice(&v[o * c..(o + 1) * c]);
        }
    }
    let mut out_shape = first.clone();
    out_shape[axis] = shapes.iter().map(|s| s[axis]).sum();
    let tape = xs[0].tape();
    Ok(tape.record(out_shape, out, xs, move |g, need| {
        let mut grads: Vec<Option<Vec<T>>> = need
            .iter()
            .zip(&chunks)
            .map(|(&n, &c)| n.then(|| Vec::with_capacity(outer * c)))
            .collect();
        for o in 0..outer {
            let mut off = o * row;
            for (gi, &c) in grads.iter_mut().zip(&chunks) {
                if let Some(gi) = gi {
                    gi.extend_from_slice(&g[off..off + c]);
                }
                off += c;
            }
        }
        grads
    }))
}

/// Treat `x` as rows of `row_len` trailing elements and gather rows by index
/// (`PAD` yields a zero row).
pub fn gather_rows<'t, T: Scalar>(
    x: Var<'t, T>,
    row_len: usize,
    rows: &[usize],
    out_shape: Vec<usize>,
) -> Result<Var<'t, T>> {
    if row_len == 0 || x.numel() % row_len != 0 {
        return Err(Error::invalid("gather_rows", format!("row length {row_len} does not divide {}", x.numel())));
    }
    let mut map = Vec::with_capacity(rows.len() * row_len);
    for &r in rows {
        if r == PAD {
            map.extend(std::iter::repeat_n(PAD, row_len));
        } else {
            map.extend(r * row_len..(r + 1) * row_len);
        }
    }
    remap(x, out_shape, Rc::new(map))
}

/// Nearest-neighbour ×2 up-sampling along the given axes.
pub fn upsample_x2<'t, T: Scalar>(x: Var<'t, T>, axes: &[usize]) -> Result<Var<'t, T>> {
    let shape = x.shape();
    if axes.iter().any(|&a| a >= shape.len()) {
        return Err(Error::invalid("upsample_x2", format!("axes {axes:?} out of range for {shape:?}")));
    }
    let in_strides = strides(&shape);
    let mut out_shape = shape.clone();
    let mut factor = vec![1; shape.len()];
    for &a in axes {
        out_shape[a] *= 2;
        factor[a] = 2;
    }
    let n: usize = out_shape.iter().product();
    let mut idx = vec![0; shape.len()];
    let map = (0..n)
        .map(|i| {
            unravel(i, &out_shape, &mut idx);
            (0..shape.len()).map(|d| idx[d] / factor[d] * in_strides[d]).sum()
        })
        .collect();
    remap(x, out_shape, Rc::new(map))
}

/// Mean over every axis after the first two: `[B, C, ...] -> [B, C]`.
pub fn global_avg_pool<T: Scalar>(x: Var<'_, T>) -> Result<Var<'_, T>> {
    let shape = x.shape();
    if shape.len() < 3 {
        return Err(Error::invalid("global_avg_pool", format!("need [B, C, ...], got {shape:?}")));
    }
    let rows = shape[0] * shape[1];
    let inner: usize = shape[2..].iter().product();
    let inv = T::ONE / T::from_usize(inner);
    let xv = x.value();
    let out = xv.chunks(inner).map(|c| c.iter().copied().sum::<T>() * inv).collect();
    Ok(x.tape().record(vec![shape[0], shape[1]], out, &[x], move |g, _| {
        let mut gx = Vec::with_capacity(rows * inner);
        for &gi in g {
            gx.extend(std::iter::repeat_n(gi * inv, inner));
        }
        vec![Some(gx)]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    #[test]
    fn upsample_repeats_along_one_axis() {
        let tape = Tape::<f32>::new();
        let x = tape.constant([2], vec![1.0, 2.0]).unwrap();
        let y = upsample_x2(x, &[0]).unwrap();
        assert_eq!(y.value().as_slice(), &[1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn upsample_shape_rule_3d() {
        let tape = Tape::<f32>::new();
        let x = tape.constant([4, 4, 2], vec![0.0; 32]).unwrap();
        let y = upsample_x2(x, &[0, 1, 2]).unwrap();
        assert_eq!(y.shape(), vec![8, 8, 4]);
    }

    #[test]
    fn upsample_then_strided_pick_recovers_input() {
        let tape = Tape::<f32>::new();
        let data: Vec<f32> = (0..24).map(|v| v as f32).collect();
        let x = tape.constant([1, 1, 3, 4, 2], data.clone()).unwrap();
        let y = upsample_x2(x, &[2, 3, 4]).unwrap();
        let (yv, ys) = (y.value(), y.shape());
        let st = strides(&ys);
        let mut back = Vec::new();
        for h in 0..3 {
            for w in 0..4 {
                for l in 0..2 {
                    back.push(yv[2 * h * st[2] + 2 * w * st[3] + 2 * l * st[4]]);
                }
            }
        }
        assert_eq!(back, data);
    }

    #[test]
    fn permute_transposes_and_round_trips() {
        let tape = Tape::<f32>::new();
        let x = tape.constant([2, 3], vec![0., 1., 2., 3., 4., 5.]).unwrap();
        let y = permute(x, &[1, 0]).unwrap();
        assert_eq!(y.shape(), vec![3, 2]);
        assert_eq!(y.value().as_slice(), &[0., 3., 1., 4., 2., 5.]);
        let z = permute(y, &[1, 0]).unwrap();
        assert_eq!(z.value().as_slice(), x.value().as_slice());
        assert!(permute(x, &[0, 0]).is_err());
    }

    #[test]
    fn concat_and_narrow_are_inverse() {
        let tape = Tape::<f32>::new();
        let a = tape.constant([1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        let b = tape.constant([1, 1, 2], vec![5., 6.]).unwrap();
        let c = concat(&[a, b], 1).unwrap();
        assert_eq!(c.shape(), vec![1, 3, 2]);
        assert_eq!(c.value().as_slice(), &[1., 2., 3., 4., 5., 6.]);
        let back = narrow(c, 1, 2, 1).unwrap();
        assert_eq!(back.value().as_slice(), &[5., 6.]);
        assert!(concat(&[a, tape.constant([2, 1, 2], vec![0.; 4]).unwrap()], 1).is_err());
    }

    #[test]
    fn gather_rows_pads_with_zero() {
        let tape = Tape::<f32>::new();
        let x = tape.constant([2, 2], vec![1., 2., 3., 4.]).unwrap();
        let y = gather_rows(x, 2, &[1, PAD, 0], vec![3, 2]).unwrap();
        assert_eq!(y.value().as_slice(), &[3., 4., 0., 0., 1., 2.]);
    }
}
