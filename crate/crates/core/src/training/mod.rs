//! The three training stages, evaluation and run reports.

mod corpus;
mod report;

pub use corpus::{prepare, Corpus, CorpusConfig, Sample, MANIFEST};
pub use report::{compare_reports, evaluate, mean_dsc, predict, predict_logits, read_lesions_csv, LesionResult, RunReport, Summary};

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{mask_roi, LesionVolume, PreprocessConfig, MASK_RATIO};
use crate::error::{Error, Result};
use crate::network::{CheckpointBundle, ModelConfig, Network, ParamStore, Session, Stage};
use crate::objectives::{dice_ce_loss, mae_loss, nt_xent, NT_XENT_TEMPERATURE};
use crate::tensor::ops::{add, narrow};
use crate::tensor::optim::{Adam, AdamConfig};
use crate::tensor::{Tape, Tensor, Var};

pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;

/// Hyper-parameters of one stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StageConfig {
    pub stage: Stage,
    pub model: ModelConfig,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    /// Validation interval for stage 3; 0 validates only after the last step.
    pub validate_every: usize,
}

impl StageConfig {
    /// Batch sizes 16, 16 and 2 for stages 1 to 3.
    pub fn new(stage: Stage, model: ModelConfig) -> Self {
        Self {
            stage,
            model,
            learning_rate: DEFAULT_LEARNING_RATE,
            batch_size: match stage {
                Stage::Pretrain | Stage::Seg2d => 16,
                Stage::Seg3d => 2,
            },
            steps: 100,
            seed: 0,
            validate_every: 0,
        }
    }

    /// Rejects unusable settings; returns warnings for degenerate ones.
    pub fn validate(&self) -> Result<Vec<String>> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(Error::invalid("stage config", "batch size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("stage config", "learning rate must be finite and non-negative"));
        }
        let mut warnings = Vec::new();
        if self.stage == Stage::Pretrain && self.batch_size == 1 {
            warnings.push("batch size 1 leaves the contrastive loss without negatives".to_string());
        }
        Ok(warnings)
    }

    pub fn echo(&self) -> Vec<(String, String)> {
        let m = &self.model;
        [
            ("stage", self.stage.tag().to_string()),
            ("base_channels", m.base_channels.to_string()),
            ("window_edges", format!("{:?}", m.window_edges)),
            ("heads", format!("{:?}", m.heads)),
            ("learning_rate", self.learning_rate.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("steps", self.steps.to_string()),
            ("seed", self.seed.to_string()),
            ("validate_every", self.validate_every.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

/// A trained network with its report.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub network: Network<f32>,
    pub report: RunReport,
    /// Step whose parameters were kept.
    pub selected_step: usize,
    pub elapsed: Duration,
}

impl TrainOutcome {
    /// Encoder only after pretraining, every parameter otherwise.
    pub fn checkpoint(&self) -> CheckpointBundle {
        match self.network.stage {
            Stage::Pretrain => self.network.encoder_checkpoint(),
            _ => self.network.checkpoint(),
        }
    }
}

/// Called after every step with the step number (from 1) and its loss.
pub type StepHook<'a> = &'a mut dyn FnMut(usize, f64);

/// Epoch-wise shuffled batches of indices.
struct Batches {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl Batches {
    fn new(n: usize, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..n).collect(),
            cursor: n,
        }
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        (0..size)
            .map(|_| {
                if self.cursor == self.order.len() {
                    self.order.shuffle(&mut self.rng);
                    self.cursor = 0;
                }
                self.cursor += 1;
                self.order[self.cursor - 1]
            })
            .collect()
    }
}

fn stack(vols: &[&LesionVolume]) -> Result<Tensor<f32>> {
    let [h, w, l] = vols[0].dims();
    let mut data = Vec::with_capacity(vols.len() * h * w * l);
    for v in vols {
        if v.dims() != [h, w, l] {
            return Err(Error::shape("batch", &[h, w, l], &v.dims()));
        }
        data.extend_from_slice(v.voxels());
    }
    Tensor::new([vols.len(), 1, h, w, l], data)
}

fn fresh_network(cfg: &StageConfig, init: Option<&CheckpointBundle>) -> Result<Network<f32>> {
    let mut net = Network::new(cfg.model.clone(), cfg.stage, cfg.seed)?;
    if let Some(bundle) = init {
        net.load_encoder(bundle)?;
    }
    Ok(net)
}

/// One optimisation step: build the loss, backpropagate, update.
fn step<F>(net: &mut Network<f32>, opt: &mut Adam<f32>, loss_fn: F) -> Result<f64>
where
    F: for<'t> FnOnce(&Network<f32>, &Session<'t, '_, f32>) -> Result<Var<'t, f32>>,
{
    let tape = Tape::new();
    let grads = {
        let s = Session::training(&tape, &net.params);
        let loss = loss_fn(net, &s)?;
        let value = loss.item() as f64;
        if !value.is_finite() {
            return Err(Error::invalid("training", format!("loss became {value}")));
        }
        let mut g = tape.backward(loss)?;
        (value, s.gradients(&mut g))
    };
    let (value, named): (f64, BTreeMap<String, Vec<f32>>) = grads;
    opt.step(
        net.params
            .iter_mut()
            .filter_map(|(name, t)| named.get(name).map(|g| (name, t.data_mut(), g.as_slice()))),
    );
    Ok(value)
}

fn seg_loss<'t>(net: &Network<f32>, s: &Session<'t, '_, f32>, batch: &[&Sample]) -> Result<Var<'t, f32>> {
    let inputs: Vec<&LesionVolume> = batch.iter().map(|b| &b.prepared.input).collect();
    let mut labels = Vec::new();
    for v in &inputs {
        labels.extend_from_slice(v.require_label()?.data());
    }
    let x = net.input(s, &stack(&inputs)?);
    let feats = net.encode(s, x)?;
    dice_ce_loss(net.segment(s, &feats)?, &labels)
}

fn masking_seed(seed: u64, step: usize, slot: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ ((step as u64) << 20) ^ slot as u64
}

fn check_stage(cfg: &StageConfig, want: Stage) -> Result<()> {
    cfg.validate()?;
    if cfg.stage != want {
        return Err(Error::invalid("training", format!("config is for stage {}, expected {}", cfg.stage.tag(), want.tag())));
    }
    Ok(())
}

/// Stage 1: masked reconstruction (MAE) plus NT-Xent between each volume and
/// its masked twin, on unlabelled volumes.
pub fn run_stage1(cfg: &StageConfig, data: &[Sample], init: Option<&CheckpointBundle>, hook: StepHook) -> Result<TrainOutcome> {
    check_stage(cfg, Stage::Pretrain)?;
    if data.is_empty() {
        return Err(Error::Empty("pretraining corpus"));
    }
    let start = Instant::now();
    let mut net = fresh_network(cfg, init)?;
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.learning_rate));
    let mut batches = Batches::new(data.len(), cfg.seed);
    let mut losses = Vec::with_capacity(cfg.steps);
    for k in 1..=cfg.steps {
        let idx = batches.next(cfg.batch_size);
        let originals: Vec<&LesionVolume> = idx.iter().map(|&i| &data[i].prepared.input).collect();
        let masked: Vec<LesionVolume> = originals
            .iter()
            .enumerate()
            .map(|(slot, v)| Ok(mask_roi(v, MASK_RATIO, masking_seed(cfg.seed, k, slot))?.0))
            .collect::<Result<_>>()?;
        let target = stack(&originals)?;
        let views: Vec<&LesionVolume> = originals.iter().copied().chain(&masked).collect();
        let input = stack(&views)?;
        let b = idx.len();
        let loss = step(&mut net, &mut opt, |net, s| {
            let feats = net.encode(s, net.input(s, &input))?;
            let contrast = nt_xent(net.embed(s, &feats)?, NT_XENT_TEMPERATURE)?;
            let recon = narrow(net.reconstruct(s, &feats)?, 0, b, b)?;
            let recon_loss = mae_loss(recon, net.input(s, &target))?;
            add(recon_loss, contrast)
        })?;
        hook(k, loss);
        losses.push(loss);
    }
    Ok(finish(cfg, net, losses, Vec::new(), cfg.steps, start))
}

/// Stage 2: Dice-CE on depth-1 slices with the 2D decoder.
pub fn run_stage2(cfg: &StageConfig, data: &[Sample], init: Option<&CheckpointBundle>, hook: StepHook) -> Result<TrainOutcome> {
    check_stage(cfg, Stage::Seg2d)?;
    if data.is_empty() {
        return Err(Error::Empty("slice corpus"));
    }
    let start = Instant::now();
    let mut net = fresh_network(cfg, init)?;
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.learning_rate));
    let mut batches = Batches::new(data.len(), cfg.seed);
    let mut losses = Vec::with_capacity(cfg.steps);
    for k in 1..=cfg.steps {
        let batch: Vec<&Sample> = batches.next(cfg.batch_size).into_iter().map(|i| &data[i]).collect();
        let loss = step(&mut net, &mut opt, |net, s| seg_loss(net, s, &batch))?;
        hook(k, loss);
        losses.push(loss);
    }
    Ok(finish(cfg, net, losses, Vec::new(), cfg.steps, start))
}

/// Stage 3: Dice-CE on 3D volumes with the 3D decoder, keeping the parameters
/// of the best validation DSC (earliest on ties). Without validation data the
/// final parameters are kept.
pub fn run_stage3(
    cfg: &StageConfig,
    train: &[Sample],
    val: &[Sample],
    init: Option<&CheckpointBundle>,
    hook: StepHook,
) -> Result<TrainOutcome> {
    check_stage(cfg, Stage::Seg3d)?;
    if train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    let start = Instant::now();
    let mut net = fresh_network(cfg, init)?;
    let mut opt = Adam::new(AdamConfig::with_lr(cfg.learning_rate));
    let mut batches = Batches::new(train.len(), cfg.seed);
    let mut losses = Vec::with_capacity(cfg.steps);
    let mut validation = Vec::new();
    let mut best: Option<(f64, usize, ParamStore<f32>)> = None;
    for k in 1..=cfg.steps {
        let batch: Vec<&Sample> = batches.next(cfg.batch_size).into_iter().map(|i| &train[i]).collect();
        let loss = step(&mut net, &mut opt, |net, s| seg_loss(net, s, &batch))?;
        hook(k, loss);
        losses.push(loss);
        let due = k == cfg.steps || (cfg.validate_every > 0 && k % cfg.validate_every == 0);
        if due && !val.is_empty() {
            let d = mean_dsc(&net, val)?;
            validation.push((k, d));
            if best.as_ref().is_none_or(|(b, _, _)| d > *b) {
                best = Some((d, k, net.params.clone()));
            }
        }
    }
    let selected = match best {
        Some((_, k, params)) => {
            net.params = params;
            k
        }
        None => cfg.steps,
    };
    Ok(finish(cfg, net, losses, validation, selected, start))
}

fn finish(
    cfg: &StageConfig,
    network: Network<f32>,
    losses: Vec<f64>,
    validation: Vec<(usize, f64)>,
    selected_step: usize,
    start: Instant,
) -> TrainOutcome {
    let report = RunReport {
        config: cfg.echo(),
        param_count: network.param_count(),
        losses,
        validation,
        lesions: Vec::new(),
    };
    TrainOutcome {
        network,
        report,
        selected_step,
        elapsed: start.elapsed(),
    }
}

/// Preprocessing whose output matches the network input of `model`.
pub fn preprocess_config(model: &ModelConfig) -> PreprocessConfig {
    PreprocessConfig {
        spacing_mm: 0.75,
        shape: model.input_shape.map(|n| 2 * n),
    }
}

/// Network of the stage recorded in `bundle`, with every parameter loaded.
pub fn load_network(config: ModelConfig, bundle: &CheckpointBundle) -> Result<Network<f32>> {
    let stage = Stage::from_tag(bundle.stage)?;
    let mut net = Network::new(config, stage, 0)?;
    if stage == Stage::Pretrain {
        net.load_encoder(bundle)?;
    } else {
        net.load_all(bundle)?;
    }
    Ok(net)
}
