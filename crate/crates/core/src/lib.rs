//! Multi-dimension unified Swin transformer (MDU-ST) for lesion segmentation.
//!
//! One Swin encoder serves 2D slices (axial depth 1) and 3D volumes. It is
//! trained in three stages: self-supervised 3D pretraining (masked
//! reconstruction plus contrastive learning), supervised 2D segmentation on
//! RECIST slices, and supervised 3D segmentation.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod metrics;
pub mod network;
pub mod objectives;
pub mod swin;
pub mod tensor;
pub mod training;

pub use data::{LesionVolume, RecistSlice};
pub use error::{Error, Result};
pub use metrics::{dsc, hausdorff, paired_t_test, BinaryMask, TTest};
pub use network::{CheckpointBundle, EncoderFeatures, ModelConfig, Network, Stage};
pub use swin::DimMode;
pub use tensor::{Scalar, Tape, Tensor, Var};
