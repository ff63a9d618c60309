use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::ops::{self, PAD};
use crate::tensor::{Scalar, Var};

/// Whether the axial axis is windowed like the in-plane axes (3D) or kept at
/// depth 1 (2D).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DimMode {
    D2,
    D3,
}

impl DimMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DimMode::D2 => "2d",
            DimMode::D3 => "3d",
        }
    }
}

/// Window geometry: in-plane edge `edge`, axial edge `axial_edge` and cyclic
/// shift per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct WindowSpec {
    pub edge: usize,
    pub axial_edge: usize,
    pub shift: [usize; 3],
}

impl WindowSpec {
    /// Unshifted window; the axial edge is `edge` in 3D and 1 in 2D.
    pub fn new(edge: usize, mode: DimMode) -> Result<Self> {
        if edge == 0 {
            return Err(Error::invalid("window", "edge must be positive"));
        }
        let axial_edge = match mode {
            DimMode::D2 => 1,
            DimMode::D3 => edge,
        };
        Ok(Self {
            edge,
            axial_edge,
            shift: [0; 3],
        })
    }

    /// Half-window shift `(⌊N/2⌋, ⌊N/2⌋, ⌊N_L/2⌋)`.
    pub fn shifted(self) -> Self {
        Self {
            shift: [self.edge / 2, self.edge / 2, self.axial_edge / 2],
            ..self
        }
    }

    pub fn unshifted(self) -> Self {
        Self { shift: [0; 3], ..self }
    }

    pub fn is_shifted(&self) -> bool {
        self.shift != [0; 3]
    }

    pub fn window_shape(&self) -> [usize; 3] {
        [self.edge, self.edge, self.axial_edge]
    }

    pub fn tokens_per_window(&self) -> usize {
        self.edge * self.edge * self.axial_edge
    }

    /// Extents after zero-padding up to whole windows.
    pub fn padded(&self, spatial: [usize; 3]) -> [usize; 3] {
        let ws = self.window_shape();
        std::array::from_fn(|d| spatial[d].div_ceil(ws[d]) * ws[d])
    }

    pub fn window_grid(&self, spatial: [usize; 3]) -> [usize; 3] {
        let ws = self.window_shape();
        std::array::from_fn(|d| spatial[d].div_ceil(ws[d]))
    }
}

/// Tokens grouped by window: `tokens` is `[windows, N·N·N_L, C]`.
#[derive(Clone, Debug)]
pub struct WindowBatch<'t, T: Scalar = f32> {
    pub tokens: Var<'t, T>,
    pub batch: usize,
    /// Unpadded `(H, W, L)` of the source.
    pub spatial: [usize; 3],
    pub spec: WindowSpec,
    /// False for tokens that came from zero padding.
    pub valid: Rc<Vec<bool>>,
}

impl<T: Scalar> WindowBatch<'_, T> {
    pub fn num_windows(&self) -> usize {
        self.batch * self.spec.window_grid(self.spatial).iter().product::<usize>()
    }

    pub fn channels(&self) -> usize {
        self.tokens.shape()[2]
    }
}

/// For every window token, the source row in the `[B, H, W, L]` grid, or `PAD`.
fn window_rows(batch: usize, spatial: [usize; 3], spec: &WindowSpec) -> Vec<usize> {
    let [h, w, l] = spatial;
    let [gh, gw, gl] = spec.window_grid(spatial);
    let [eh, ew, el] = spec.window_shape();
    let mut rows = Vec::with_capacity(batch * gh * gw * gl * eh * ew * el);
    for b in 0..batch {
        for wh in 0..gh {
            for ww in 0..gw {
                for wl in 0..gl {
                    for th in 0..eh {
                        for tw in 0..ew {
                            for tl in 0..el {
                                let (ph, pw, pl) = (wh * eh + th, ww * ew + tw, wl * el + tl);
                                rows.push(if ph < h && pw < w && pl < l {
                                    ((b * h + ph) * w + pw) * l + pl
                                } else {
                                    PAD
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    rows
}

fn split_channel_last(op: &'static str, shape: &[usize]) -> Result<(usize, [usize; 3], usize)> {
    if shape.len() != 5 {
        return Err(Error::invalid(op, format!("expected [B, H, W, L, C], got {shape:?}")));
    }
    Ok((shape[0], [shape[1], shape[2], shape[3]], shape[4]))
}

/// Partition a channel-last `[B, H, W, L, C]` tensor into non-overlapping
/// windows. Non-divisible extents are zero-padded; token order inside a window
/// is row-major `(h, w, l)`.
pub fn window_partition<'t, T: Scalar>(x: Var<'t, T>, spec: WindowSpec) -> Result<WindowBatch<'t, T>> {
    let (batch, spatial, c) = split_channel_last("window_partition", &x.shape())?;
    let rows = window_rows(batch, spatial, &spec);
    let valid: Vec<bool> = rows.iter().map(|&r| r != PAD).collect();
    let t = spec.tokens_per_window();
    let n = rows.len() / t;
    let tokens = ops::gather_rows(x, c, &rows, vec![n, t, c])?;
    Ok(WindowBatch {
        tokens,
        batch,
        spatial,
        spec,
        valid: Rc::new(valid),
    })
}

/// Inverse of [`window_partition`], cropping any padding.
pub fn window_reverse<'t, T: Scalar>(wb: &WindowBatch<'t, T>) -> Result<Var<'t, T>> {
    let shape = wb.tokens.shape();
    let t = wb.spec.tokens_per_window();
    let n = wb.num_windows();
    if shape.len() != 3 || shape[0] != n || shape[1] != t || wb.valid.len() != n * t {
        return Err(Error::invalid(
            "window_reverse",
            format!(
                "tokens {shape:?} inconsistent with {} windows of {t} tokens over {:?}",
                n, wb.spatial
            ),
        ));
    }
    let c = shape[2];
    let rows = window_rows(wb.batch, wb.spatial, &wb.spec);
    let [h, w, l] = wb.spatial;
    let mut inverse = vec![PAD; wb.batch * h * w * l];
    for (token, &src) in rows.iter().enumerate() {
        if src != PAD {
            inverse[src] = token;
        }
    }
    ops::gather_rows(wb.tokens, c, &inverse, vec![wb.batch, h, w, l, c])
}

/// Roll a `[B, H, W, L, C]` tensor: element at `h` moves to `(h + offset) mod H`.
pub fn cyclic_shift<'t, T: Scalar>(x: Var<'t, T>, offsets: [isize; 3]) -> Result<Var<'t, T>> {
    let (batch, [h, w, l], c) = split_channel_last("cyclic_shift", &x.shape())?;
    let src = |i: usize, n: usize, o: isize| (i as isize - o).rem_euclid(n as isize) as usize;
    let mut rows = Vec::with_capacity(batch * h * w * l);
    for b in 0..batch {
        for i in 0..h {
            let si = src(i, h, offsets[0]);
            for j in 0..w {
                let sj = src(j, w, offsets[1]);
                for k in 0..l {
                    rows.push(((b * h + si) * w + sj) * l + src(k, l, offsets[2]));
                }
            }
        }
    }
    ops::gather_rows(x, c, &rows, x.shape())
}
