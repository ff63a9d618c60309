use super::config::{ModelConfig, NUM_BLOCKS};
use super::layers::{ConvUnit, Dense};
use super::params::{Init, Session};
use crate::error::{Error, Result};
use crate::swin::{swin_layer, Affine, AttentionParams, DimMode, SwinLayerParams, WindowAttentionParams, WindowSpec};
use crate::tensor::ops;
use crate::tensor::{Scalar, Var};

const DOWN: [usize; 3] = [2, 2, 1];

/// Stem: strided planar conv then isotropic conv, plus a strided pointwise
/// shortcut. Halves H and W, keeps L.
#[derive(Clone, Debug)]
pub struct PatchEmbed {
    pub down: ConvUnit,
    pub refine: ConvUnit,
    pub shortcut: ConvUnit,
}

impl PatchEmbed {
    pub fn new<T: Scalar>(init: &mut Init<'_, T>, name: &str, channels: usize) -> Self {
        Self {
            down: ConvUnit::new(init, &format!("{name}.down"), 1, channels, [3, 3, 1], DOWN),
            refine: ConvUnit::new(init, &format!("{name}.refine"), channels, channels, [3, 3, 3], [1; 3]),
            shortcut: ConvUnit::new(init, &format!("{name}.shortcut"), 1, channels, [1, 1, 1], DOWN),
        }
    }

    pub fn forward<'t, T: Scalar>(&self, s: &Session<'t, '_, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let shape = x.shape();
        if shape.len() != 5 || shape[1] != 1 {
            return Err(Error::invalid("patch_embed", format!("expected [B, 1, H, W, L], got {shape:?}")));
        }
        let main = self.refine.forward(s, self.down.forward(s, x)?)?;
        ops::add(main, self.shortcut.forward(s, x)?)
    }
}

/// Parameter names of one W-SA or SW-SA branch.
#[derive(Clone, Debug)]
pub struct AttentionBranch {
    pub qkv: String,
    pub out: String,
    pub embed: Dense,
    pub proj: Dense,
}

impl AttentionBranch {
    fn new<T: Scalar>(init: &mut Init<'_, T>, name: &str, c: usize) -> Self {
        Self {
            qkv: init.he_uniform(&format!("{name}.qkv"), &[c, 3 * c], c),
            out: init.he_uniform(&format!("{name}.out"), &[c, c], c),
            embed: Dense::new(init, &format!("{name}.embed"), c, c, true),
            proj: Dense::new(init, &format!("{name}.proj"), c, c, true),
        }
    }

    fn bind<'t, T: Scalar>(
        &self,
        s: &Session<'t, '_, T>,
        heads: usize,
    ) -> Result<(WindowAttentionParams<'t, T>, Affine<'t, T>)> {
        let dense = |d: &Dense| -> Result<Affine<'t, T>> {
            Ok(Affine {
                w: s.param(&d.weight)?,
                b: d.bias.as_deref().map(|b| s.param(b)).transpose()?,
            })
        };
        let attention = AttentionParams {
            w_qkv: s.param(&self.qkv)?,
            w_out: s.param(&self.out)?,
            heads,
        };
        Ok((
            WindowAttentionParams {
                attention,
                embed: dense(&self.embed)?,
            },
            dense(&self.proj)?,
        ))
    }
}

/// Down-sampling conv followed by one Swin layer.
#[derive(Clone, Debug)]
pub struct SwinBlock {
    pub down: ConvUnit,
    pub window: AttentionBranch,
    pub shifted: AttentionBranch,
    pub window_edge: usize,
    pub heads: usize,
}

impl SwinBlock {
    pub fn new<T: Scalar>(
        init: &mut Init<'_, T>,
        name: &str,
        cin: usize,
        window_edge: usize,
        heads: usize,
    ) -> Self {
        let c = 2 * cin;
        Self {
            down: ConvUnit::new(init, &format!("{name}.down"), cin, c, [3, 3, 1], DOWN),
            window: AttentionBranch::new(init, &format!("{name}.wsa"), c),
            shifted: AttentionBranch::new(init, &format!("{name}.swsa"), c),
            window_edge,
            heads,
        }
    }

    /// `[B, C, H, W, L] -> [B, 2C, H/2, W/2, L]`.
    pub fn forward<'t, T: Scalar>(&self, s: &Session<'t, '_, T>, x: Var<'t, T>, mode: DimMode) -> Result<Var<'t, T>> {
        let y = self.down.forward(s, x)?;
        let (window, window_proj) = self.window.bind(s, self.heads)?;
        let (shifted, shifted_proj) = self.shifted.bind(s, self.heads)?;
        let params = SwinLayerParams {
            window,
            window_proj,
            shifted,
            shifted_proj,
        };
        let tokens = ops::permute(y, &[0, 2, 3, 4, 1])?;
        let tokens = swin_layer(tokens, WindowSpec::new(self.window_edge, mode)?, &params)?;
        ops::permute(tokens, &[0, 4, 1, 2, 3])
    }
}

/// Patch embedding output `f0`, the four block outputs `f1..f4`, and the
/// network input they were computed from.
#[derive(Clone, Debug)]
pub struct EncoderFeatures<'t, T: Scalar> {
    pub input: Var<'t, T>,
    pub levels: Vec<Var<'t, T>>,
    pub mode: DimMode,
}

impl<'t, T: Scalar> EncoderFeatures<'t, T> {
    pub fn deepest(&self) -> Var<'t, T> {
        *self.levels.last().expect("encoder emits five feature levels")
    }

    /// `(H, W, L, C)` of level `k`.
    pub fn extents(&self, k: usize) -> [usize; 4] {
        let s = self.levels[k].shape();
        [s[2], s[3], s[4], s[1]]
    }
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub patch: PatchEmbed,
    pub blocks: Vec<SwinBlock>,
}

impl Encoder {
    pub const PREFIX: &'static str = "encoder.";

    pub fn new<T: Scalar>(init: &mut Init<'_, T>, config: &ModelConfig) -> Self {
        let patch = PatchEmbed::new(init, "encoder.patch", config.channels(0));
        let blocks = (0..NUM_BLOCKS)
            .map(|k| {
                SwinBlock::new(
                    init,
                    &format!("encoder.block{}", k + 1),
                    config.channels(k),
                    config.window_edges[k],
                    config.heads[k],
                )
            })
            .collect();
        Self { patch, blocks }
    }

    /// `x` is `[B, 1, H, W, L]`; 2D mode requires `L = 1`.
    pub fn forward<'t, T: Scalar>(
        &self,
        s: &Session<'t, '_, T>,
        x: Var<'t, T>,
        mode: DimMode,
    ) -> Result<EncoderFeatures<'t, T>> {
        let shape = x.shape();
        if mode == DimMode::D2 && shape.get(4) != Some(&1) {
            return Err(Error::invalid("encoder", format!("2D mode needs depth 1, got {shape:?}")));
        }
        let mut levels = Vec::with_capacity(NUM_BLOCKS + 1);
        let mut h = self.patch.forward(s, x)?;
        levels.push(h);
        for block in &self.blocks {
            h = block.forward(s, h, mode)?;
            levels.push(h);
        }
        Ok(EncoderFeatures { input: x, levels, mode })
    }
}
