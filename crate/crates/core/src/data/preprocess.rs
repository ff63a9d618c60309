use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LesionVolume, RecistSlice};
use crate::error::{Error, Result};
use crate::metrics::BinaryMask;
use crate::tensor::ops::{resample_linear, resample_nearest, Align};
use crate::tensor::Tensor;

pub const MASK_RATIO: f64 = 0.15;
pub const ROI_TOLERANCE: f64 = 0.01;
pub const HU_OFFSET: f32 = 1024.0;
pub const HU_SCALE: f32 = 3000.0;

/// Resample to (nearly) `target` mm spacing. Trilinear for intensities,
/// nearest for labels; the physical extent between first and last voxel is
/// kept. Depth-1 axes are left alone.
pub fn resample_iso(v: &LesionVolume, target: f64) -> Result<LesionVolume> {
    if !(target > 0.0) {
        return Err(Error::invalid("resample_iso", format!("target spacing must be positive, got {target}")));
    }
    let dims = v.dims();
    let sp = v.spacing();
    let mut out_dims = dims;
    let mut out_sp = sp;
    for d in 0..3 {
        if dims[d] > 1 {
            let extent = (dims[d] - 1) as f64 * sp[d];
            out_dims[d] = (extent / target).round() as usize + 1;
            out_sp[d] = if out_dims[d] > 1 { extent / (out_dims[d] - 1) as f64 } else { target };
        }
    }
    if out_dims == dims {
        return Ok(v.clone());
    }
    let voxels = resample_linear(v.voxels(), dims, out_dims, Align::Corners)?;
    let label = v.label().map(|l| resample_nearest(l.data(), dims, out_dims, Align::Corners)).transpose()?;
    v.with_grid(out_dims, out_sp, voxels, label)
}

/// Location and size of the lesion on its largest axial slice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecistGeometry {
    pub slice: usize,
    /// Mean `(h, w)` voxel index of the slice's foreground.
    pub centroid: [f64; 2],
    pub area: usize,
    /// Longest in-slice chord between foreground voxel centres, in mm.
    pub diameter_mm: f64,
}

pub fn recist_geometry(label: &BinaryMask) -> Result<RecistGeometry> {
    let [nh, nw, nl] = label.dims();
    let mut areas = vec![0usize; nl];
    for h in 0..nh {
        for w in 0..nw {
            for (l, a) in areas.iter_mut().enumerate() {
                *a += label.get(h, w, l) as usize;
            }
        }
    }
    let (slice, &area) = areas
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("grid has at least one slice");
    if area == 0 {
        return Err(Error::Empty("lesion label"));
    }
    let on = |h: isize, w: isize| {
        h >= 0 && w >= 0 && (h as usize) < nh && (w as usize) < nw && label.get(h as usize, w as usize, slice)
    };
    let mut sum = [0.0, 0.0];
    let mut rim = Vec::new();
    for h in 0..nh as isize {
        for w in 0..nw as isize {
            if !on(h, w) {
                continue;
            }
            sum[0] += h as f64;
            sum[1] += w as f64;
            if !(on(h - 1, w) && on(h + 1, w) && on(h, w - 1) && on(h, w + 1)) {
                rim.push([h as f64, w as f64]);
            }
        }
    }
    let sp = label.spacing();
    let mut best = 0.0f64;
    for (i, a) in rim.iter().enumerate() {
        for b in &rim[i + 1..] {
            best = best.max(((a[0] - b[0]) * sp[0]).powi(2) + ((a[1] - b[1]) * sp[1]).powi(2));
        }
    }
    Ok(RecistGeometry {
        slice,
        centroid: [sum[0] / area as f64, sum[1] / area as f64],
        area,
        diameter_mm: best.sqrt(),
    })
}

/// The axial slice of largest lesion area with its in-slice longest diameter.
pub fn extract_recist_slice(v: &LesionVolume) -> Result<RecistSlice> {
    let label = v.require_label()?;
    let g = recist_geometry(label)?;
    let [nh, nw, _] = v.dims();
    let mut voxels = Vec::with_capacity(nh * nw);
    let mut lab = Vec::with_capacity(nh * nw);
    for h in 0..nh {
        for w in 0..nw {
            let i = v.index(h, w, g.slice);
            voxels.push(v.voxels()[i]);
            lab.push(label.data()[i]);
        }
    }
    let mut volume = v.with_grid([nh, nw, 1], v.spacing(), voxels, Some(lab))?;
    volume.diameter_mm = g.diameter_mm.max(v.spacing()[0].min(v.spacing()[1]));
    Ok(RecistSlice {
        volume,
        slice_index: g.slice,
    })
}

/// Copy the window starting at `start` (may be negative) with extents
/// `size`; out-of-grid voxels become `fill`.
fn window<V: Copy>(data: &[V], dims: [usize; 3], start: [isize; 3], size: [usize; 3], fill: V) -> Vec<V> {
    let mut out = Vec::with_capacity(size.iter().product());
    for h in 0..size[0] {
        let sh = start[0] + h as isize;
        for w in 0..size[1] {
            let sw = start[1] + w as isize;
            for l in 0..size[2] {
                let sl = start[2] + l as isize;
                let inside = [sh, sw, sl].iter().zip(&dims).all(|(&s, &n)| s >= 0 && (s as usize) < n);
                out.push(if inside {
                    data[((sh as usize) * dims[1] + sw as usize) * dims[2] + sl as usize]
                } else {
                    fill
                });
            }
        }
    }
    out
}

fn reframe(v: &LesionVolume, start: [isize; 3], size: [usize; 3]) -> Result<LesionVolume> {
    let dims = v.dims();
    let voxels = window(v.voxels(), dims, start, size, 0.0);
    let label = v.label().map(|l| window(l.data(), dims, start, size, 0));
    v.with_grid(size, v.spacing(), voxels, label)
}

/// Cube of edge `2d` mm (rounded to an even voxel count per axis) centred on
/// the lesion: the RECIST-slice centroid when labelled, else the grid centre.
/// Depth-1 volumes are cropped in-plane only. Outside voxels are zero.
pub fn crop_recist(v: &LesionVolume) -> Result<LesionVolume> {
    let d = v.diameter_mm;
    if !(d > 0.0) {
        return Err(Error::invalid("crop_recist", format!("diameter must be positive, got {d}")));
    }
    let dims = v.dims();
    let sp = v.spacing();
    let centre: [f64; 3] = match v.label() {
        Some(label) if !label.is_empty() => {
            let g = recist_geometry(label)?;
            [g.centroid[0], g.centroid[1], g.slice as f64]
        }
        _ => dims.map(|n| (n as f64 - 1.0) / 2.0),
    };
    let mut size = [0; 3];
    let mut start = [0isize; 3];
    for a in 0..3 {
        if dims[a] == 1 {
            size[a] = 1;
            continue;
        }
        size[a] = (2.0 * (d / sp[a]).round()).max(2.0) as usize;
        start[a] = (centre[a] + 0.5).floor() as isize - (size[a] / 2) as isize;
    }
    reframe(v, start, size)
}

/// Centre pad (zeros) or centre crop each axis to `target`.
pub fn pad_crop(v: &LesionVolume, target: [usize; 3]) -> Result<LesionVolume> {
    if target.contains(&0) {
        return Err(Error::invalid("pad_crop", format!("zero target extent {target:?}")));
    }
    let dims = v.dims();
    let start = std::array::from_fn(|a| {
        if dims[a] >= target[a] {
            ((dims[a] - target[a]) / 2) as isize
        } else {
            -(((target[a] - dims[a]) / 2) as isize)
        }
    });
    reframe(v, start, target)
}

/// `(HU + 1024) / 3000`.
pub fn normalize_hu(v: &LesionVolume) -> LesionVolume {
    let mut out = v.clone();
    out.voxels = v.voxels().iter().map(|&x| (x + HU_OFFSET) / HU_SCALE).collect();
    out
}

/// Halve every axis longer than one voxel: trilinear at cell centres (the
/// mean of each voxel pair), nearest for labels.
pub fn downsample_2x(v: &LesionVolume) -> Result<LesionVolume> {
    let dims = v.dims();
    if dims.iter().any(|&n| n > 1 && n % 2 != 0) {
        return Err(Error::invalid("downsample_2x", format!("extents must be even, got {dims:?}")));
    }
    let target = dims.map(|n| if n > 1 { n / 2 } else { 1 });
    let sp = v.spacing();
    let spacing = std::array::from_fn(|a| if dims[a] > 1 { sp[a] * 2.0 } else { sp[a] });
    let voxels = resample_linear(v.voxels(), dims, target, Align::Centers)?;
    let label = v.label().map(|l| resample_nearest(l.data(), dims, target, Align::Centers)).transpose()?;
    v.with_grid(target, spacing, voxels, label)
}

/// Zero one random axis-aligned cuboid covering `ratio` of the grid (within
/// [`ROI_TOLERANCE`] whenever the grid admits it; otherwise the closest
/// achievable cuboid). Returns the masked volume and the cuboid.
pub fn mask_roi(v: &LesionVolume, ratio: f64, seed: u64) -> Result<(LesionVolume, BinaryMask)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid("mask_roi", format!("ratio must lie in (0, 1), got {ratio}")));
    }
    let dims = v.dims();
    let total = v.numel() as f64;
    let mut within = Vec::new();
    let mut closest = ([1, 1, 1], f64::INFINITY);
    for eh in 1..=dims[0] {
        for ew in 1..=dims[1] {
            let ideal = ratio * total / (eh * ew) as f64;
            let lo = (ideal.floor() as usize).clamp(1, dims[2]);
            let hi = (ideal.ceil() as usize).clamp(1, dims[2]);
            for el in [lo, hi] {
                let err = ((eh * ew * el) as f64 / total - ratio).abs();
                if err <= ROI_TOLERANCE && !within.contains(&[eh, ew, el]) {
                    within.push([eh, ew, el]);
                }
                if err < closest.1 {
                    closest = ([eh, ew, el], err);
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = if within.is_empty() { closest.0 } else { within[rng.random_range(0..within.len())] };
    let start: [usize; 3] = std::array::from_fn(|a| rng.random_range(0..=dims[a] - size[a]));
    let roi = BinaryMask::from_fn(dims, v.spacing(), |i| {
        let p = [i / (dims[1] * dims[2]), i / dims[2] % dims[1], i % dims[2]];
        (0..3).all(|a| p[a] >= start[a] && p[a] < start[a] + size[a])
    })?;
    let mut masked = v.clone();
    for (x, &m) in masked.voxels.iter_mut().zip(roi.data()) {
        if m == 1 {
            *x = 0.0;
        }
    }
    Ok((masked, roi))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessConfig {
    pub spacing_mm: f64,
    /// Extents after padding/cropping, before the ×2 reduction.
    pub shape: [usize; 3],
}

impl PreprocessConfig {
    /// Network input 32×32×16.
    pub fn desk() -> Self {
        Self {
            spacing_mm: 0.75,
            shape: [64, 64, 32],
        }
    }

    /// Network input 64×64×32.
    pub fn paper() -> Self {
        Self {
            spacing_mm: 0.75,
            shape: [128, 128, 64],
        }
    }

    /// Same in-plane geometry for depth-1 slices.
    pub fn planar(&self) -> Self {
        Self {
            shape: [self.shape[0], self.shape[1], 1],
            ..self.clone()
        }
    }

    pub fn network_shape(&self) -> [usize; 3] {
        self.shape.map(|n| if n > 1 { n / 2 } else { 1 })
    }
}

/// A volume at evaluation resolution and its network input.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub full: LesionVolume,
    pub input: LesionVolume,
}

impl Prepared {
    /// Network input as a `[1, 1, H, W, L]` tensor.
    pub fn input_tensor(&self) -> Tensor<f32> {
        let [h, w, l] = self.input.dims();
        Tensor::new([1, 1, h, w, l], self.input.voxels().to_vec()).expect("dims match voxels")
    }
}

/// Resample, crop around the lesion, pad/crop, normalize, then halve.
pub fn preprocess(v: &LesionVolume, cfg: &PreprocessConfig) -> Result<Prepared> {
    let planar = v.dims()[2] == 1;
    let target = if planar { [cfg.shape[0], cfg.shape[1], 1] } else { cfg.shape };
    let v = resample_iso(v, cfg.spacing_mm)?;
    let v = crop_recist(&v)?;
    let v = pad_crop(&v, target)?;
    let full = normalize_hu(&v);
    let input = downsample_2x(&full)?;
    Ok(Prepared { full, input })
}

/// Trilinearly resize two-class logits `[1, 2, h, w, l]` to `dims`, then take
/// the argmax (softmax is monotone); ties go to background.
pub fn postprocess(logits: &Tensor<f32>, dims: [usize; 3], spacing: [f64; 3]) -> Result<BinaryMask> {
    let s = logits.shape();
    if s.len() != 5 || s[0] != 1 || s[1] != 2 {
        return Err(Error::invalid("postprocess", format!("need [1, 2, H, W, L] logits, got {s:?}")));
    }
    let src = [s[2], s[3], s[4]];
    let n = src.iter().product::<usize>();
    let bg = resample_linear(&logits.data()[..n], src, dims, Align::Centers)?;
    let fg = resample_linear(&logits.data()[n..], src, dims, Align::Centers)?;
    BinaryMask::new(dims, spacing, bg.iter().zip(&fg).map(|(b, f)| u8::from(f > b)).collect())
}
