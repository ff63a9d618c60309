//! Window partitioning, cyclic shifting and windowed multi-head attention.
//!
//! Everything here works on channel-last `[B, H, W, L, C]` tensors. A 2D input
//! is a depth-1 volume windowed with `N_L = 1`; no code path distinguishes
//! the two beyond the window shape.

mod attention;
mod layer;
mod window;

pub use attention::{attention_probabilities, window_attention};
pub use layer::{
    mhsa, sw_sa, swin_layer, w_sa, Affine, AttentionParams, SwinLayerParams, WindowAttentionParams,
};
pub use window::{cyclic_shift, window_partition, window_reverse, DimMode, WindowBatch, WindowSpec};
