use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::preprocess::recist_geometry;
use super::LesionVolume;
use crate::error::{Error, Result};
use crate::metrics::BinaryMask;

/// Parameters of one synthetic lesion volume.
///
/// The lesion is the set `|q| <= 1 + lobulation · cos(lobes · φ + phase)`,
/// where `q` is the voxel offset from the lesion centre, rotated in-plane by
/// `rotation` and divided by `semi_axes_mm`, and `φ` is its in-plane angle.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSpec {
    pub seed: u64,
    pub id: String,
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub semi_axes_mm: [f64; 3],
    pub lobes: u32,
    pub lobulation: f64,
    pub phase: f64,
    pub rotation: f64,
    /// Lesion centre relative to the grid centre.
    pub offset_mm: [f64; 3],
    pub background_hu: f64,
    pub contrast_hu: f64,
    pub noise_hu: f64,
    /// Small unlabelled spheres with lesion-like contrast.
    pub distractors: usize,
}

impl PhantomSpec {
    /// Native grid of 64×64×32 voxels at 0.9×0.9×1.8 mm.
    pub const DIMS: [usize; 3] = [64, 64, 32];
    pub const SPACING: [f64; 3] = [0.9, 0.9, 1.8];

    /// Draw a lesion with a longest in-plane diameter of roughly 10 to 22 mm.
    pub fn random(seed: u64, id: impl Into<String>) -> Self {
        let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_FACE_0000_0000);
        let lobulation = if r.random_bool(0.5) { r.random_range(0.05..0.2) } else { 0.0 };
        let a = r.random_range(5.0..11.0) / (1.0 + lobulation);
        let b = a * r.random_range(0.6..1.0);
        let c = a * r.random_range(0.5..1.0);
        Self {
            seed,
            id: id.into(),
            dims: Self::DIMS,
            spacing: Self::SPACING,
            semi_axes_mm: [a, b, c],
            lobes: r.random_range(3..7),
            lobulation,
            phase: r.random_range(0.0..std::f64::consts::TAU),
            rotation: r.random_range(0.0..std::f64::consts::PI),
            offset_mm: [r.random_range(-4.0..4.0), r.random_range(-4.0..4.0), r.random_range(-2.0..2.0)],
            background_hu: -50.0,
            contrast_hu: r.random_range(50.0..110.0) * if r.random_bool(0.8) { 1.0 } else { -1.0 },
            noise_hu: r.random_range(15.0..35.0),
            distractors: r.random_range(0..4),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::invalid("gen_phantom", format!("degenerate grid {:?}", self.dims)));
        }
        let positive = |v: &[f64; 3]| v.iter().all(|&x| x > 0.0 && x.is_finite());
        if !positive(&self.spacing) || !positive(&self.semi_axes_mm) {
            return Err(Error::invalid("gen_phantom", "spacing and semi-axes must be positive"));
        }
        if !(0.0..1.0).contains(&self.lobulation) || self.noise_hu < 0.0 {
            return Err(Error::invalid("gen_phantom", "lobulation must lie in [0, 1) and noise be non-negative"));
        }
        Ok(())
    }

    /// Lesion centre in mm from voxel `(0, 0, 0)`.
    pub fn centre_mm(&self) -> [f64; 3] {
        std::array::from_fn(|a| (self.dims[a] as f64 - 1.0) / 2.0 * self.spacing[a] + self.offset_mm[a])
    }

    /// Whether the point `p` (mm) lies inside the lesion.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let c = self.centre_mm();
        let (dx, dy, dz) = (p[0] - c[0], p[1] - c[1], p[2] - c[2]);
        let (s, co) = self.rotation.sin_cos();
        let x = (co * dx + s * dy) / self.semi_axes_mm[0];
        let y = (-s * dx + co * dy) / self.semi_axes_mm[1];
        let z = dz / self.semi_axes_mm[2];
        let rho = (x * x + y * y + z * z).sqrt();
        let bound = 1.0 + self.lobulation * (self.lobes as f64 * y.atan2(x) + self.phase).cos();
        rho <= bound
    }
}

/// Render a phantom: Gaussian background noise around `background_hu`, the
/// lesion raised by `contrast_hu`, distractor spheres, and the exact label.
pub fn gen_phantom(spec: &PhantomSpec) -> Result<LesionVolume> {
    spec.validate()?;
    let [nh, nw, nl] = spec.dims;
    let sp = spec.spacing;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let extent: [f64; 3] = std::array::from_fn(|a| spec.dims[a] as f64 * sp[a]);
    let lesion_c = spec.centre_mm();
    let reach = spec.semi_axes_mm.iter().copied().fold(0.0, f64::max) * (1.0 + spec.lobulation);
    let distractors: Vec<([f64; 3], f64)> = (0..spec.distractors)
        .filter_map(|_| {
            let r = rng.random_range(1.5..3.5);
            let p: [f64; 3] = std::array::from_fn(|a| rng.random_range(0.0..extent[a]));
            let gap = (0..3).map(|a| (p[a] - lesion_c[a]).powi(2)).sum::<f64>().sqrt();
            (gap > reach + r + 2.0).then_some((p, r))
        })
        .collect();
    let noise = Normal::new(0.0, spec.noise_hu.max(f64::MIN_POSITIVE)).expect("finite noise level");
    let mut voxels = Vec::with_capacity(nh * nw * nl);
    let mut label = Vec::with_capacity(nh * nw * nl);
    for h in 0..nh {
        for w in 0..nw {
            for l in 0..nl {
                let p = [h as f64 * sp[0], w as f64 * sp[1], l as f64 * sp[2]];
                let inside = spec.contains(p);
                let mut v = spec.background_hu;
                if inside {
                    v += spec.contrast_hu;
                } else if distractors
                    .iter()
                    .any(|(c, r)| (0..3).map(|a| (p[a] - c[a]).powi(2)).sum::<f64>() <= r * r)
                {
                    v += spec.contrast_hu.abs();
                }
                if spec.noise_hu > 0.0 {
                    v += noise.sample(&mut rng);
                }
                voxels.push(v as f32);
                label.push(u8::from(inside));
            }
        }
    }
    let mask = BinaryMask::new(spec.dims, sp, label)?;
    if mask.is_empty() {
        return Err(Error::invalid("gen_phantom", "lesion lies outside the grid"));
    }
    let d = recist_geometry(&mask)?.diameter_mm.max(sp[0].min(sp[1]));
    LesionVolume::new(spec.id.clone(), spec.dims, sp, d, voxels, Some(mask.into_data()))
}
