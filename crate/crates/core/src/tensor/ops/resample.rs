//! Grid resampling (inference only, no tape).

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// How output sample positions map onto the input grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Align {
    /// First and last samples coincide; the physical extent `(n - 1) · spacing` is kept.
    Corners,
    /// Voxel centres of equal-size cells; the field of view `n · spacing` is kept.
    Centers,
}

/// Source coordinate of output index `i` when mapping `n_in` samples onto `n_out`.
fn source_coord(i: usize, n_in: usize, n_out: usize, align: Align) -> f64 {
    if n_in == 1 {
        return 0.0;
    }
    match align {
        Align::Corners if n_out == 1 => 0.0,
        Align::Corners => i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64,
        Align::Centers => ((i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64),
    }
}

/// Lower index and fractional weight per output index along one axis.
fn axis_weights(n_in: usize, n_out: usize, align: Align) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|i| {
            let s = source_coord(i, n_in, n_out, align);
            let lo = (s.floor() as usize).min(n_in - 1);
            let hi = (lo + 1).min(n_in - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}

fn check_target(dims: [usize; 3], target: [usize; 3]) -> Result<()> {
    if target.contains(&0) || dims.contains(&0) {
        return Err(Error::invalid(
            "resample",
            format!("zero extent in {dims:?} -> {target:?}"),
        ));
    }
    Ok(())
}

/// Corner-aligned trilinear interpolation of a row-major `dims` grid onto `target`.
pub fn trilinear_resample_grid<T: Scalar>(data: &[T], dims: [usize; 3], target: [usize; 3]) -> Result<Vec<T>> {
    resample_linear(data, dims, target, Align::Corners)
}

/// Trilinear interpolation of a row-major `dims` grid onto `target`.
pub fn resample_linear<T: Scalar>(data: &[T], dims: [usize; 3], target: [usize; 3], align: Align) -> Result<Vec<T>> {
    check_target(dims, target)?;
    if data.len() != dims.iter().product::<usize>() {
        return Err(Error::shape("resample", &dims, &[data.len()]));
    }
    if dims == target {
        return Ok(data.to_vec());
    }
    let [_, w, l] = dims;
    let ax: [Vec<_>; 3] = std::array::from_fn(|d| axis_weights(dims[d], target[d], align));
    let at = |h: usize, ww: usize, ll: usize| data[(h * w + ww) * l + ll].to_f64();
    let mut out = Vec::with_capacity(target.iter().product());
    for &(h0, h1, fh) in &ax[0] {
        for &(w0, w1, fw) in &ax[1] {
            for &(l0, l1, fl) in &ax[2] {
                let c00 = at(h0, w0, l0) * (1.0 - fl) + at(h0, w0, l1) * fl;
                let c01 = at(h0, w1, l0) * (1.0 - fl) + at(h0, w1, l1) * fl;
                let c10 = at(h1, w0, l0) * (1.0 - fl) + at(h1, w0, l1) * fl;
                let c11 = at(h1, w1, l0) * (1.0 - fl) + at(h1, w1, l1) * fl;
                let c0 = c00 * (1.0 - fw) + c01 * fw;
                let c1 = c10 * (1.0 - fw) + c11 * fw;
                out.push(T::from_f64(c0 * (1.0 - fh) + c1 * fh));
            }
        }
    }
    Ok(out)
}

/// Corner-aligned nearest-neighbour counterpart of [`trilinear_resample_grid`], for label grids.
pub fn nearest_resample_grid<V: Copy>(data: &[V], dims: [usize; 3], target: [usize; 3]) -> Result<Vec<V>> {
    resample_nearest(data, dims, target, Align::Corners)
}

/// Nearest-neighbour resampling; ties round up.
pub fn resample_nearest<V: Copy>(data: &[V], dims: [usize; 3], target: [usize; 3], align: Align) -> Result<Vec<V>> {
    check_target(dims, target)?;
    if data.len() != dims.iter().product::<usize>() {
        return Err(Error::shape("resample", &dims, &[data.len()]));
    }
    let idx: [Vec<usize>; 3] = std::array::from_fn(|d| {
        (0..target[d])
            .map(|i| (source_coord(i, dims[d], target[d], align).round() as usize).min(dims[d] - 1))
            .collect()
    });
    let mut out = Vec::with_capacity(target.iter().product());
    for &h in &idx[0] {
        for &w in &idx[1] {
            for &l in &idx[2] {
                out.push(data[(h * dims[1] + w) * dims[2] + l]);
            }
        }
    }
    Ok(out)
}

/// Trilinear resampling of every `(batch, channel)` grid of a `[B, C, H, W, L]` tensor.
pub fn trilinear_resample<T: Scalar>(x: &Tensor<T>, target: [usize; 3]) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.len() != 5 {
        return Err(Error::invalid("trilinear_resample", format!("need [B, C, H, W, L], got {s:?}")));
    }
    let dims = [s[2], s[3], s[4]];
    check_target(dims, target)?;
    let n: usize = dims.iter().product();
    let mut out = Vec::with_capacity(s[0] * s[1] * target.iter().product::<usize>());
    for grid in x.data().chunks(n) {
        out.extend(trilinear_resample_grid(grid, dims, target)?);
    }
    Tensor::new(vec![s[0], s[1], target[0], target[1], target[2]], out)
}
