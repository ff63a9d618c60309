//! Volumes, preprocessing, the masking pretext task, synthetic phantoms,
//! corpus splitting and the on-disk formats.

mod io;
mod phantom;
mod preprocess;
mod split;

pub use io::{read_manifest, read_volume, volume_from_bytes, volume_to_bytes, write_manifest, write_volume, ManifestEntry, Split};
pub use phantom::{gen_phantom, PhantomSpec};
pub use preprocess::{
    crop_recist, downsample_2x, extract_recist_slice, mask_roi, normalize_hu, pad_crop, postprocess, preprocess,
    recist_geometry, resample_iso, Prepared, PreprocessConfig, RecistGeometry, MASK_RATIO, ROI_TOLERANCE,
};
pub use split::{split_corpus, split_sizes};

use crate::error::{Error, Result};
use crate::metrics::BinaryMask;

/// An intensity grid with optional lesion label.
#[derive(Clone, Debug, PartialEq)]
pub struct LesionVolume {
    pub id: String,
    dims: [usize; 3],
    spacing: [f64; 3],
    /// Longest in-plane lesion diameter in millimetres.
    pub diameter_mm: f64,
    voxels: Vec<f32>,
    label: Option<BinaryMask>,
}

impl LesionVolume {
    pub fn new(
        id: impl Into<String>,
        dims: [usize; 3],
        spacing: [f64; 3],
        diameter_mm: f64,
        voxels: Vec<f32>,
        label: Option<Vec<u8>>,
    ) -> Result<Self> {
        if dims.contains(&0) || voxels.len() != dims.iter().product::<usize>() {
            return Err(Error::shape("lesion volume", &dims, &[voxels.len()]));
        }
        if !(diameter_mm > 0.0 && diameter_mm.is_finite()) {
            return Err(Error::invalid("lesion volume", format!("diameter must be positive, got {diameter_mm}")));
        }
        let label = label.map(|l| BinaryMask::new(dims, spacing, l)).transpose()?;
        if label.is_none() && spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("lesion volume", format!("spacing must be positive, got {spacing:?}")));
        }
        Ok(Self {
            id: id.into(),
            dims,
            spacing,
            diameter_mm,
            voxels,
            label,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn label(&self) -> Option<&BinaryMask> {
        self.label.as_ref()
    }

    pub fn numel(&self) -> usize {
        self.voxels.len()
    }

    pub fn index(&self, h: usize, w: usize, l: usize) -> usize {
        (h * self.dims[1] + w) * self.dims[2] + l
    }

    /// Same metadata, new grid.
    pub fn with_grid(&self, dims: [usize; 3], spacing: [f64; 3], voxels: Vec<f32>, label: Option<Vec<u8>>) -> Result<Self> {
        Self::new(self.id.clone(), dims, spacing, self.diameter_mm, voxels, label)
    }

    pub fn without_label(mut self) -> Self {
        self.label = None;
        self
    }

    pub fn require_label(&self) -> Result<&BinaryMask> {
        self.label.as_ref().ok_or_else(|| Error::invalid("lesion volume", format!("`{}` has no label", self.id)))
    }
}

/// The axial slice of largest lesion area, as a depth-1 volume.
#[derive(Clone, Debug, PartialEq)]
pub struct RecistSlice {
    pub volume: LesionVolume,
    /// Axial index of the slice in its source volume.
    pub slice_index: usize,
}
