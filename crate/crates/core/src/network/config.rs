use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Architecture hyper-parameters. One record fully determines the encoder and
/// every decoder.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    /// Patch-embedding width `C0`; block `k` outputs `C0 · 2^k` channels.
    pub base_channels: usize,
    /// In-plane window edge per Swin block.
    pub window_edges: [usize; 4],
    pub heads: [usize; 4],
    /// `(H, W, L)` of a 3D network input.
    pub input_shape: [usize; 3],
}

pub const NUM_BLOCKS: usize = 4;
pub const EMBED_DIM: usize = 128;

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Full-size configuration: 32 base channels on 64×64×32 inputs.
    pub fn paper() -> Self {
        Self {
            base_channels: 32,
            window_edges: [4, 4, 8, 4],
            heads: [4; 4],
            input_shape: [64, 64, 32],
        }
    }

    /// Reduced configuration for CPU runs: 8 base channels on 32×32×16 inputs.
    pub fn desk() -> Self {
        Self {
            base_channels: 8,
            input_shape: [32, 32, 16],
            ..Self::paper()
        }
    }

    /// Tiny configuration for end-to-end gradient checks.
    pub fn miniature() -> Self {
        Self {
            base_channels: 4,
            input_shape: [16, 16, 4],
            ..Self::paper()
        }
    }

    /// Width of encoder feature `k` (0 = patch embedding, 1..=4 = Swin blocks).
    pub fn channels(&self, k: usize) -> usize {
        self.base_channels << k
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 {
            return Err(Error::invalid("model config", "base_channels must be positive"));
        }
        if self.window_edges.contains(&0) {
            return Err(Error::invalid("model config", "window edges must be positive"));
        }
        for k in 0..NUM_BLOCKS {
            let c = self.channels(k + 1);
            if self.heads[k] == 0 || c % self.heads[k] != 0 {
                return Err(Error::invalid(
                    "model config",
                    format!("block {} width {c} not divisible by {} heads", k + 1, self.heads[k]),
                ));
            }
        }
        if self.input_shape.contains(&0) {
            return Err(Error::invalid("model config", "input extents must be positive"));
        }
        Ok(())
    }

    /// Hash of everything that determines encoder parameter shapes. Input
    /// extents and dimensionality are excluded: the same encoder serves 2D
    /// slices and 3D volumes.
    pub fn fingerprint(&self) -> u64 {
        let canonical = format!(
            "mdust-encoder;c0={};windows={:?};heads={:?}",
            self.base_channels, self.window_edges, self.heads
        );
        let digest = Sha256::digest(canonical.as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }

    /// Expected `(H, W, L, C)` of encoder feature `k` for an input of `shape`.
    pub fn feature_shape(&self, shape: [usize; 3], k: usize) -> [usize; 4] {
        let f = 1 << (k + 1);
        [shape[0].div_ceil(f), shape[1].div_ceil(f), shape[2], self.channels(k)]
    }
}
