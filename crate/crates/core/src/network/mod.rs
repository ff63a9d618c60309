//! The shared Swin encoder, its four decoders and the stage assemblies.
//!
//! Modules hold parameter names only; weights live in a [`ParamStore`] and
//! are bound to a tape per forward pass through a [`Session`].

mod checkpoint;
mod config;
mod decoders;
mod encoder;
mod layers;
mod params;

pub use checkpoint::{write_atomic, CheckpointBundle};
pub use config::{ModelConfig, EMBED_DIM, NUM_BLOCKS};
pub use decoders::{ContrastiveHead, ReconstructionDecoder, SegmentationDecoder, NUM_CLASSES};
pub use encoder::{AttentionBranch, Encoder, EncoderFeatures, PatchEmbed, SwinBlock};
pub use layers::{kernel_for, Conv, ConvUnit, Dense, ResBlock};
pub use params::{Init, ParamStore, Session};

use crate::error::{Error, Result};
use crate::swin::DimMode;
use crate::tensor::{Scalar, Tensor, Var};

/// Training stage and, with it, which decoders are attached.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    /// Encoder + reconstruction decoder + contrastive head, 3D.
    Pretrain = 1,
    /// Encoder + 2D segmentation decoder.
    Seg2d = 2,
    /// Encoder + 3D segmentation decoder.
    Seg3d = 3,
}

impl Stage {
    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(Stage::Pretrain),
            2 => Ok(Stage::Seg2d),
            3 => Ok(Stage::Seg3d),
            _ => Err(Error::format("checkpoint", format!("unknown stage tag {tag}"))),
        }
    }

    pub fn mode(self) -> DimMode {
        match self {
            Stage::Seg2d => DimMode::D2,
            Stage::Pretrain | Stage::Seg3d => DimMode::D3,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Heads {
    Pretrain {
        reconstruction: ReconstructionDecoder,
        contrastive: ContrastiveHead,
    },
    Segment(SegmentationDecoder),
}

/// Encoder plus the decoders of one stage, with their parameters.
#[derive(Clone, Debug)]
pub struct Network<T: Scalar = f32> {
    pub config: ModelConfig,
    pub stage: Stage,
    pub params: ParamStore<T>,
    pub encoder: Encoder,
    pub heads: Heads,
}

/// Distinct init streams per component, so the encoder draw does not depend on
/// which decoders are attached.
fn component_seed(seed: u64, component: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(component.wrapping_mul(0xBF58_476D_1CE4_E5B9))
}

impl<T: Scalar> Network<T> {
    pub fn new(config: ModelConfig, stage: Stage, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let encoder = Encoder::new(&mut Init::new(&mut params, component_seed(seed, 0)), &config);
        let heads = match stage {
            Stage::Pretrain => Heads::Pretrain {
                reconstruction: ReconstructionDecoder::new(&mut Init::new(&mut params, component_seed(seed, 1)), &config),
                contrastive: ContrastiveHead::new(&mut Init::new(&mut params, component_seed(seed, 2)), &config),
            },
            Stage::Seg2d | Stage::Seg3d => {
                let mode = stage.mode();
                let mut init = Init::new(&mut params, component_seed(seed, 2 + stage.tag() as u64));
                Heads::Segment(SegmentationDecoder::new(&mut init, &config, mode))
            }
        };
        Ok(Self {
            config,
            stage,
            params,
            encoder,
            heads,
        })
    }

    pub fn mode(&self) -> DimMode {
        self.stage.mode()
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }

    pub fn encoder_param_count(&self) -> usize {
        self.params.numel_with_prefix(Encoder::PREFIX)
    }

    /// Wrap a `[B, 1, H, W, L]` tensor as an input leaf without gradient.
    pub fn input<'t>(&self, s: &Session<'t, '_, T>, x: &Tensor<T>) -> Var<'t, T> {
        s.tape().leaf(&Tensor::new(x.shape(), x.data().to_vec()).expect("shape already valid"))
    }

    pub fn encode<'t>(&self, s: &Session<'t, '_, T>, x: Var<'t, T>) -> Result<EncoderFeatures<'t, T>> {
        self.encoder.forward(s, x, self.mode())
    }

    pub fn reconstruct<'t>(&self, s: &Session<'t, '_, T>, feats: &EncoderFeatures<'t, T>) -> Result<Var<'t, T>> {
        match &self.heads {
            Heads::Pretrain { reconstruction, .. } => reconstruction.forward(s, feats),
            Heads::Segment(_) => Err(Error::invalid("reconstruct", "no reconstruction decoder attached")),
        }
    }

    pub fn embed<'t>(&self, s: &Session<'t, '_, T>, feats: &EncoderFeatures<'t, T>) -> Result<Var<'t, T>> {
        match &self.heads {
            Heads::Pretrain { contrastive, .. } => contrastive.forward(s, feats),
            Heads::Segment(_) => Err(Error::invalid("embed", "no contrastive head attached")),
        }
    }

    pub fn segment<'t>(&self, s: &Session<'t, '_, T>, feats: &EncoderFeatures<'t, T>) -> Result<Var<'t, T>> {
        match &self.heads {
            Heads::Segment(dec) => dec.forward(s, feats),
            Heads::Pretrain { .. } => Err(Error::invalid("segment", "no segmentation decoder attached")),
        }
    }

    /// Every parameter, stored as `f32`.
    pub fn checkpoint(&self) -> CheckpointBundle {
        self.bundle(|_| true)
    }

    /// Encoder parameters only; decoders are stripped.
    pub fn encoder_checkpoint(&self) -> CheckpointBundle {
        self.bundle(|name| name.starts_with(Encoder::PREFIX))
    }

    fn bundle(&self, keep: impl Fn(&str) -> bool) -> CheckpointBundle {
        CheckpointBundle {
            fingerprint: self.config.fingerprint(),
            stage: self.stage.tag(),
            params: self.params.iter().filter(|(k, _)| keep(k)).map(|(k, t)| (k.to_string(), t.cast())).collect(),
        }
    }

    /// Copy encoder parameters from `bundle`; decoders keep their current values.
    pub fn load_encoder(&mut self, bundle: &CheckpointBundle) -> Result<()> {
        self.load_matching(bundle, |name| name.starts_with(Encoder::PREFIX))
    }

    /// Copy every parameter of this network from `bundle`.
    pub fn load_all(&mut self, bundle: &CheckpointBundle) -> Result<()> {
        self.load_matching(bundle, |_| true)
    }

    fn load_matching(&mut self, bundle: &CheckpointBundle, wanted: impl Fn(&str) -> bool) -> Result<()> {
        let expected = self.config.fingerprint();
        if bundle.fingerprint != expected {
            return Err(Error::FingerprintMismatch {
                expected,
                found: bundle.fingerprint,
            });
        }
        let names: Vec<String> = self.params.names().filter(|n| wanted(n)).map(str::to_string).collect();
        for name in &names {
            let src = bundle.params.get(name).ok_or_else(|| Error::MissingParameter(name.clone()))?;
            let dst = self.params.get(name).expect("name listed from store");
            if src.shape() != dst.shape() {
                return Err(Error::shape("load checkpoint", src.shape(), dst.shape()));
            }
        }
        for name in &names {
            let src = &bundle.params[name];
            *self.params.get_mut(name).expect("name listed from store") = src.cast();
        }
        Ok(())
    }
}
