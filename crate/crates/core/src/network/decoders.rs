use super::config::{ModelConfig, EMBED_DIM, NUM_BLOCKS};
use super::encoder::EncoderFeatures;
use super::layers::{kernel_for, Conv, Dense, ResBlock};
use super::params::{Init, Session};
use crate::error::{Error, Result};
use crate::swin::DimMode;
use crate::tensor::ops::{self, LEAKY_SLOPE, NORM_EPS};
use crate::tensor::{Scalar, Var};

/// Nearest ×2 in-plane up-sampling, cropped to `target` H and W when the
/// encoder rounded an odd extent up.
fn upsample_to<'t, T: Scalar>(x: Var<'t, T>, target: [usize; 2]) -> Result<Var<'t, T>> {
    let mut y = ops::upsample_x2(x, &[2, 3])?;
    for (axis, &t) in [2, 3].iter().zip(&target) {
        let n = y.shape()[*axis];
        if n > t {
            y = ops::narrow(y, *axis, 0, t)?;
        }
    }
    Ok(y)
}

fn plane<T: Scalar>(x: Var<'_, T>) -> [usize; 2] {
    let s = x.shape();
    [s[2], s[3]]
}

fn require_mode<T: Scalar>(op: &'static str, feats: &EncoderFeatures<'_, T>, mode: DimMode) -> Result<()> {
    if feats.mode != mode {
        return Err(Error::invalid(
            op,
            format!("expects {} features, got {}", mode.as_str(), feats.mode.as_str()),
        ));
    }
    Ok(())
}

/// Four up-sampling residual blocks without skips, then ×2 and a pointwise conv
/// to one channel.
#[derive(Clone, Debug)]
pub struct ReconstructionDecoder {
    pub ups: Vec<ResBlock>,
    pub head: Conv,
}

impl ReconstructionDecoder {
    pub const PREFIX: &'static str = "recon.";

    pub fn new<T: Scalar>(init: &mut Init<'_, T>, config: &ModelConfig) -> Self {
        let kernel = kernel_for(DimMode::D3);
        let ups = (0..NUM_BLOCKS)
            .map(|k| ResBlock::new(init, &format!("recon.up{k}"), config.channels(k + 1), config.channels(k), kernel))
            .collect();
        let head = Conv::new(init, "recon.head", config.channels(0), 1, [1; 3], [1; 3], true);
        Self { ups, head }
    }

    pub fn forward<'t, T: Scalar>(&self, s: &Session<'t, '_, T>, feats: &EncoderFeatures<'t, T>) -> Result<Var<'t, T>> {
        require_mode("reconstruction_decode", feats, DimMode::D3)?;
        let mut x = feats.deepest();
        for k in (0..NUM_BLOCKS).rev() {
            x = upsample_to(x, plane(feats.levels[k]))?;
            x = self.ups[k].forward(s, x)?;
        }
        x = upsample_to(x, plane(feats.input))?;
        self.head.forward(s, x)
    }
}

/// Global average pool, then two linear layers each followed by normalization
/// and leaky ReLU. On a feature vector, instance normalization reduces to
/// normalizing over its elements.
#[derive(Clone, Debug)]
pub struct ContrastiveHead {
    pub fc1: Dense,
    pub fc2: Dense,
}

impl ContrastiveHead {
    pub const PREFIX: &'static str = "contrast.";

    pub fn new<T: Scalar>(init: &mut Init<'_, T>, config: &ModelConfig) -> Self {
        let c = config.channels(NUM_BLOCKS);
        Self {
            fc1: Dense::new(init, "contrast.fc1", c, c, true),
            fc2: Dense::new(init, "contrast.fc2", c, EMBED_DIM, true),
        }
    }

    /// `[B, 128]`.
    pub fn forward<'t, T: Scalar>(&self, s: &Session<'t, '_, T>, feats: &EncoderFeatures<'t, T>) -> Result<Var<'t, T>> {
        let mut x = ops::global_avg_pool(feats.deepest())?;
        for fc in [&self.fc1, &self.fc2] {
            x = ops::layer_norm(fc.forward(s, x)?, NORM_EPS)?;
            x = ops::leaky_relu(x, LEAKY_SLOPE);
        }
        Ok(x)
    }
}

/// U-shaped segmentation decoder. Each skip passes through a residual block
/// and is concatenated after up-sampling; the final ×2 stage concatenates a
/// residual block over the raw input before the pointwise two-class head.
#[derive(Clone, Debug)]
pub struct SegmentationDecoder {
    pub mode: DimMode,
    pub skips: Vec<ResBlock>,
    pub ups: Vec<ResBlock>,
    pub input_skip: ResBlock,
    pub head: Conv,
}

pub const NUM_CLASSES: usize = 2;

impl SegmentationDecoder {
    pub fn prefix(mode: DimMode) -> &'static str {
        match mode {
            DimMode::D2 => "seg2d.",
            DimMode::D3 => "seg3d.",
        }
    }

    pub fn new<T: Scalar>(init: &mut Init<'_, T>, config: &ModelConfig, mode: DimMode) -> Self {
        let p = Self::prefix(mode);
        let kernel = kernel_for(mode);
        let skips = (0..NUM_BLOCKS)
            .map(|k| ResBlock::new(init, &format!("{p}skip{k}"), config.channels(k), config.channels(k), kernel))
            .collect();
        let ups = (0..NUM_BLOCKS)
            .map(|k| {
                let cin = config.channels(k + 1) + config.channels(k);
                ResBlock::new(init, &format!("{p}up{k}"), cin, config.channels(k), kernel)
            })
            .collect();
        let c0 = config.channels(0);
        let input_skip = ResBlock::new(init, &format!("{p}input"), 1, c0, kernel);
        let head = Conv::new(init, &format!("{p}head"), 2 * c0, NUM_CLASSES, [1; 3], [1; 3], true);
        Self {
            mode,
            skips,
            ups,
            input_skip,
            head,
        }
    }

    /// Two-channel logits `[B, 2, H, W, L]` at input resolution.
    pub fn forward<'t, T: Scalar>(&self, s: &Session<'t, '_, T>, feats: &EncoderFeatures<'t, T>) -> Result<Var<'t, T>> {
        let op = match self.mode {
            DimMode::D2 => "seg_decode_2d",
            DimMode::D3 => "seg_decode_3d",
        };
        require_mode(op, feats, self.mode)?;
        let mut x = feats.deepest();
        for k in (0..NUM_BLOCKS).rev() {
            let skip = self.skips[k].forward(s, feats.levels[k])?;
            x = upsample_to(x, plane(skip))?;
            x = self.ups[k].forward(s, ops::concat(&[x, skip], 1)?)?;
        }
        let skip = self.input_skip.forward(s, feats.input)?;
        x = upsample_to(x, plane(skip))?;
        self.head.forward(s, ops::concat(&[x, skip], 1)?)
    }
}
