use super::same_tape;
use crate::error::{Error, Result};
use crate::tensor::{gemm, Scalar, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Output extent `ceil(n / stride)`, zero padding split low/high.
    Same,
    /// No padding.
    Valid,
}

pub fn conv_output_extent(n: usize, k: usize, s: usize, padding: Padding) -> usize {
    match padding {
        Padding::Same => n.div_ceil(s),
        Padding::Valid => (n - k) / s + 1,
    }
}

fn pad_before(n: usize, k: usize, s: usize, padding: Padding) -> usize {
    match padding {
        Padding::Same => {
            let out = n.div_ceil(s);
            ((out - 1) * s + k).saturating_sub(n) / 2
        }
        Padding::Valid => 0,
    }
}

/// Geometry of one convolution, shared by forward and backward.
#[derive(Clone, Copy, Debug)]
struct Geometry {
    c: usize,
    input: [usize; 3],
    kernel: [usize; 3],
    stride: [usize; 3],
    pad: [usize; 3],
    output: [usize; 3],
}

impl Geometry {
    fn k(&self) -> usize {
        self.c * self.kernel.iter().product::<usize>()
    }

    fn p(&self) -> usize {
        self.output.iter().product()
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == [1, 1, 1] && self.stride == [1, 1, 1]
    }

    /// Visit every (column row, output position, input offset) triple that lands inside the
    /// input; positions falling in the padding are skipped.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let [h, w, l] = self.input;
        let [kh, kw, kl] = self.kernel;
        let [sh, sw, sl] = self.stride;
        let [ph, pw, pl] = self.pad;
        let [oh_n, ow_n, ol_n] = self.output;
        let mut row = 0;
        for c in 0..self.c {
            for i in 0..kh {
                for j in 0..kw {
                    for m in 0..kl {
                        for oh in 0..oh_n {
                            let ih = (oh * sh + i) as isize - ph as isize;
                            if ih < 0 || ih >= h as isize {
                                continue;
                            }
                            for ow in 0..ow_n {
                                let iw = (ow * sw + j) as isize - pw as isize;
                                if iw < 0 || iw >= w as isize {
                                    continue;
                                }
                                let in_base = ((c * h + ih as usize) * w + iw as usize) * l;
                                let out_base = (oh * ow_n + ow) * ol_n;
                                for ol in 0..ol_n {
                                    let il = (ol * sl + m) as isize - pl as isize;
                                    if il >= 0 && il < l as isize {
                                        f(row, out_base + ol, in_base + il as usize);
                                    }
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
    }

    fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        cols.fill(T::ZERO);
        let p = self.p();
        self.for_each_tap(|row, pos, src| cols[row * p + pos] = x[src]);
    }

    fn col2im<T: Scalar>(&self, cols: &[T], gx: &mut [T]) {
        let p = self.p();
        self.for_each_tap(|row, pos, src| gx[src] += cols[row * p + pos]);
    }
}

/// 3D convolution over `[B, C, H, W, L]` with weight `[Cout, C, kh, kw, kl]`.
pub fn conv3d<'t, T: Scalar>(
    x: Var<'t, T>,
    w: Var<'t, T>,
    bias: Option<Var<'t, T>>,
    stride: [usize; 3],
    padding: Padding,
) -> Result<Var<'t, T>> {
    let xs = x.shape();
    let ws = w.shape();
    if xs.len() != 5 || ws.len() != 5 || xs[1] != ws[1] {
        return Err(Error::shape("conv3d", &xs, &ws));
    }
    if stride.contains(&0) || xs[2..].contains(&0) {
        return Err(Error::invalid("conv3d", "stride and extents must be positive"));
    }
    let kernel = [ws[2], ws[3], ws[4]];
    let input = [xs[2], xs[3], xs[4]];
    for d in 0..3 {
        if padding == Padding::Same && kernel[d] % 2 == 0 {
            return Err(Error::invalid("conv3d", format!("same padding needs odd kernels, got {kernel:?}")));
        }
        if padding == Padding::Valid && kernel[d] > input[d] {
            return Err(Error::shape("conv3d", &xs, &ws));
        }
    }
    let (batch, cout) = (xs[0], ws[0]);
    let mut parents = vec![x, w];
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::shape("conv3d bias", &ws, &b.shape()));
        }
        parents.push(b);
    }
    same_tape("conv3d", &parents)?;

    let geo = Geometry {
        c: xs[1],
        input,
        kernel,
        stride,
        pad: std::array::from_fn(|d| pad_before(input[d], kernel[d], stride[d], padding)),
        output: std::array::from_fn(|d| conv_output_extent(input[d], kernel[d], stride[d], padding)),
    };
    let (k, p) = (geo.k(), geo.p());
    let in_len: usize = xs[1..].iter().product();

    let (xv, wv) = (x.value(), w.value());
    let mut y = vec![T::ZERO; batch * cout * p];
    let mut cols = if geo.is_pointwise() { Vec::new() } else { vec![T::ZERO; k * p] };
    for (xb, yb) in xv.chunks(in_len).zip(y.chunks_mut(cout * p)) {
        let src: &[T] = if geo.is_pointwise() {
            xb
        } else {
            geo.im2col(xb, &mut cols);
            &cols
        };
        gemm(cout, k, p, T::ONE, &wv, (k, 1), src, (p, 1), T::ZERO, yb, (p, 1));
    }
    if let Some(b) = bias {
        let bv = b.value();
        for yb in y.chunks_mut(cout * p) {
            for (yc, &bc) in yb.chunks_mut(p).zip(bv.iter()) {
                yc.iter_mut().for_each(|v| *v += bc);
            }
        }
    }

    let out_shape = vec![batch, cout, geo.output[0], geo.output[1], geo.output[2]];
    let has_bias = bias.is_some();
    Ok(x.tape().record(out_shape, y, &parents, move |g, need| {
        let mut gx = need[0].then(|| vec![T::ZERO; batch * in_len]);
        let mut gw = need[1].then(|| vec![T::ZERO; cout * k]);
        let mut cols = vec![T::ZERO; if geo.is_pointwise() { 0 } else { k * p }];
        let mut dcols = vec![T::ZERO; if gx.is_some() && !geo.is_pointwise() { k * p } else { 0 }];
        for b in 0..batch {
            let gb = &g[b * cout * p..(b + 1) * cout * p];
            let xb = &xv[b * in_len..(b + 1) * in_len];
            if let Some(gw) = gw.as_mut() {
                let src: &[T] = if geo.is_pointwise() {
                    xb
                } else {
                    geo.im2col(xb, &mut cols);
                    &cols
                };
                gemm(cout, p, k, T::ONE, gb, (p, 1), src, (1, p), T::ONE, gw, (k, 1));
            }
            if let Some(gx) = gx.as_mut() {
                let gxb = &mut gx[b * in_len..(b + 1) * in_len];
                if geo.is_pointwise() {
                    gemm(k, cout, p, T::ONE, &wv, (1, k), gb, (p, 1), T::ONE, gxb, (p, 1));
                } else {
                    gemm(k, cout, p, T::ONE, &wv, (1, k), gb, (p, 1), T::ZERO, &mut dcols, (p, 1));
                    geo.col2im(&dcols, gxb);
                }
            }
        }
        let mut grads = vec![gx, gw];
        if has_bias {
            grads.push(need[2].then(|| {
                let mut gb = vec![T::ZERO; cout];
                for gbatch in g.chunks(cout * p) {
                    for (acc, gc) in gb.iter_mut().zip(gbatch.chunks(p)) {
                        *acc += gc.iter().copied().sum::<T>();
                    }
                }
                gb
            }));
        }
        grads
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;
    use rand::{Rng, SeedableRng};

    /// Direct nested-loop convolution with explicit same-padding offsets.
    #[allow(clippy::too_many_arguments)]
    fn naive(
        x: &[f64],
        xs: [usize; 5],
        w: &[f64],
        ws: [usize; 5],
        stride: [usize; 3],
    ) -> (Vec<f64>, [usize; 5]) {
        let out: [usize; 3] = std::array::from_fn(|d| xs[d + 2].div_ceil(stride[d]));
        let pad: [isize; 3] = std::array::from_fn(|d| {
            let total = ((out[d] - 1) * stride[d] + ws[d + 2]) as isize - xs[d + 2] as isize;
            total.max(0) / 2
        });
        let os = [xs[0], ws[0], out[0], out[1], out[2]];
        let mut y = vec![0.0; os.iter().product()];
        for b in 0..xs[0] {
            for co in 0..ws[0] {
                for oh in 0..out[0] {
                    for ow in 0..out[1] {
                        for ol in 0..out[2] {
                            let mut acc = 0.0;
                            for ci in 0..xs[1] {
                                for i in 0..ws[2] {
                                    for j in 0..ws[3] {
                                        for m in 0..ws[4] {
                                            let ih = (oh * stride[0] + i) as isize - pad[0];
                                            let iw = (ow * stride[1] + j) as isize - pad[1];
                                            let il = (ol * stride[2] + m) as isize - pad[2];
                                            if ih < 0 || iw < 0 || il < 0 {
                                                continue;
                                            }
                                            let (ih, iw, il) = (ih as usize, iw as usize, il as usize);
                                            if ih >= xs[2] || iw >= xs[3] || il >= xs[4] {
                                                continue;
                                            }
                                            let xi = (((b * xs[1] + ci) * xs[2] + ih) * xs[3] + iw) * xs[4] + il;
                                            let wi = (((co * ws[1] + ci) * ws[2] + i) * ws[3] + j) * ws[4] + m;
                                            acc += x[xi] * w[wi];
                                        }
                                    }
                                }
                            }
                            let yi = (((b * ws[0] + co) * out[0] + oh) * out[1] + ow) * out[2] + ol;
                            y[yi] = acc;
                        }
                    }
                }
            }
        }
        (y, os)
    }

    #[test]
    fn identity_kernel_is_identity() {
        let tape = Tape::<f32>::new();
        let data: Vec<f32> = (0..16).map(|v| v as f32).collect();
        let x = tape.constant([1, 1, 4, 4, 1], data.clone()).unwrap();
        let w = tape.constant([1, 1, 1, 1, 1], vec![1.0]).unwrap();
        let y = conv3d(x, w, None, [1, 1, 1], Padding::Same).unwrap();
        assert_eq!(y.value().as_slice(), data.as_slice());
    }

    #[test]
    fn patch_embedding_stride_halves_in_plane() {
        let tape = Tape::<f32>::new();
        let x = tape.constant([1, 1, 64, 64, 32], vec![0.5; 64 * 64 * 32]).unwrap();
        let w = tape.constant([32, 1, 3, 3, 1], vec![0.1; 32 * 9]).unwrap();
        let y = conv3d(x, w, None, [2, 2, 1], Padding::Same).unwrap();
        assert_eq!(y.shape(), vec![1, 32, 32, 32, 32]);
    }

    #[test]
    fn random_matches_nested_loop_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for stride in [[1, 1, 1], [2, 2, 1], [2, 1, 2]] {
            let xs = [1, 2, 5, 5, 3];
            let ws = [4, 2, 3, 3, 3];
            let xd: Vec<f64> = (0..xs.iter().product()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let wd: Vec<f64> = (0..ws.iter().product()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (want, os) = naive(&xd, xs, &wd, ws, stride);
            let tape = Tape::<f64>::new();
            let x = tape.constant(xs, xd).unwrap();
            let w = tape.constant(ws, wd).unwrap();
            let y = conv3d(x, w, None, stride, Padding::Same).unwrap();
            assert_eq!(y.shape(), os.to_vec());
            for (a, b) in y.value().iter().zip(&want) {
                assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn same_padding_preserves_extents_at_unit_stride() {
        let tape = Tape::<f32>::new();
        let x = tape.constant([2, 3, 5, 4, 1], vec![1.0; 120]).unwrap();
        let w = tape.constant([2, 3, 3, 3, 3], vec![0.0; 162]).unwrap();
        let y = conv3d(x, w, None, [1, 1, 1], Padding::Same).unwrap();
        assert_eq!(y.shape(), vec![2, 2, 5, 4, 1]);
    }

    #[test]
    fn channel_mismatch_reports_both_shapes() {
        let tape = Tape::<f32>::new();
        let x = tape.constant([1, 2, 4, 4, 4], vec![0.0; 128]).unwrap();
        let w = tape.constant([1, 3, 1, 1, 1], vec![0.0; 3]).unwrap();
        let err = conv3d(x, w, None, [1, 1, 1], Padding::Same).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 2, 4, 4, 4]") && msg.contains("[1, 3, 1, 1, 1]"), "{msg}");
    }
}
