mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mdust::data::{read_volume, write_volume, Split};
use mdust::diagnostics::{gradient_suite, GRADCHECK_TOLERANCE};
use mdust::training::{
    compare_reports, evaluate, load_network, predict, prepare, preprocess_config, read_lesions_csv, run_stage1, run_stage2, run_stage3,
    Corpus, CorpusConfig, RunReport, Sample, StageConfig, TrainOutcome,
};
use mdust::{CheckpointBundle, ModelConfig, Stage};

/// Lesion segmentation with a dimension-unified Swin encoder, trained in three
/// stages on synthetic phantoms.
#[derive(Parser, Debug)]
#[command(name = "mdust", version, about)]
pub struct Cli {
    /// File of `key=value` defaults; flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Serial, reproducible execution. Every code path is currently serial,
    /// so this only records the request.
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a phantom corpus with a manifest.
    #[command(name = "gen-phantoms", args_override_self = true)]
    GenPhantoms(GenArgs),
    /// Stage 1: self-supervised pretraining of the encoder.
    #[command(args_override_self = true)]
    Pretrain(TrainArgs),
    /// Stage 2: supervised training on 2D RECIST slices.
    #[command(args_override_self = true)]
    Finetune2d(TrainArgs),
    /// Stage 3: supervised training on 3D volumes.
    #[command(args_override_self = true)]
    Finetune3d(TrainArgs),
    /// Score a checkpoint on one split of a corpus.
    #[command(args_override_self = true)]
    Evaluate(EvalArgs),
    /// Segment one volume file.
    #[command(args_override_self = true)]
    Predict(PredictArgs),
    /// Finite-difference gradient checks of every differentiable operation.
    #[command(args_override_self = true)]
    Gradcheck(GradArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Desk,
    Paper,
    Miniature,
}

impl Preset {
    fn config(self) -> ModelConfig {
        match self {
            Preset::Desk => ModelConfig::desk(),
            Preset::Paper => ModelConfig::paper(),
            Preset::Miniature => ModelConfig::miniature(),
        }
    }

    fn name(self) -> String {
        self.to_possible_value().expect("no skipped variants").get_name().to_string()
    }
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Output directory; must not already hold a manifest.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    unlabeled: usize,
    #[arg(long, default_value_t = 100)]
    slices: usize,
    #[arg(long, default_value_t = 60)]
    labeled: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Corpus manifest.
    #[arg(long)]
    corpus: PathBuf,
    /// Encoder to start from.
    #[arg(long)]
    checkpoint_in: Option<PathBuf>,
    #[arg(long)]
    checkpoint_out: PathBuf,
    /// Directory for losses and summary.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    model: Preset,
    #[arg(long, default_value_t = mdust::training::DEFAULT_LEARNING_RATE)]
    lr: f64,
    /// Defaults to 16, 16 and 2 for stages 1 to 3.
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Stage 3 validation interval; 0 validates after the last step only.
    #[arg(long, default_value_t = 0)]
    validate_every: usize,
    /// Print the loss every N steps; 0 disables.
    #[arg(long, default_value_t = 10)]
    log_every: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EvalSplit {
    Train,
    Val,
    Test,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    checkpoint_in: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalSplit::Test)]
    split: EvalSplit,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    model: Preset,
    /// Directory for `lesions.csv` and `summary.txt`.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Another `lesions.csv` for a paired t-test on DSC.
    #[arg(long)]
    compare: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    checkpoint_in: PathBuf,
    /// Volume file to segment.
    #[arg(long)]
    input: PathBuf,
    /// Volume file receiving the preprocessed intensities and predicted label.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    model: Preset,
}

#[derive(Args, Debug)]
struct GradArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent shape draws per operation.
    #[arg(long, default_value_t = 3)]
    rounds: u64,
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{what} not found: {}", path.display());
    }
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<CheckpointBundle> {
    require_file(path, "checkpoint")?;
    CheckpointBundle::load(path).with_context(|| format!("cannot load checkpoint {}", path.display()))
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    require_file(path, "corpus manifest")?;
    Corpus::read(path).with_context(|| format!("cannot read corpus {}", path.display()))
}

fn gen_phantoms(a: &GenArgs) -> Result<()> {
    let manifest = a.out.join(mdust::training::MANIFEST);
    if manifest.exists() {
        bail!("refusing to overwrite existing corpus at {}", a.out.display());
    }
    let corpus = Corpus::generate(&CorpusConfig {
        unlabeled: a.unlabeled,
        slices: a.slices,
        labeled: a.labeled,
        seed: a.seed,
    })?;
    corpus.write(&a.out)?;
    println!(
        "wrote {} volumes ({} unlabeled, {} slices, {}/{}/{} train/val/test) to {}",
        corpus.len(),
        corpus.unlabeled.len(),
        corpus.slices.len(),
        corpus.train.len(),
        corpus.val.len(),
        corpus.test.len(),
        manifest.display()
    );
    Ok(())
}

fn nonempty(samples: Vec<Sample>, split: Split, manifest: &Path) -> Result<Vec<Sample>> {
    if samples.is_empty() {
        bail!("corpus {} has no `{split}` volumes", manifest.display());
    }
    Ok(samples)
}

fn train(stage: Stage, a: &TrainArgs) -> Result<()> {
    let init = a.checkpoint_in.as_deref().map(load_checkpoint).transpose()?;
    let corpus = load_corpus(&a.corpus)?;
    let model = a.model.config();
    let mut cfg = StageConfig::new(stage, model.clone());
    cfg.learning_rate = a.lr;
    cfg.steps = a.steps;
    cfg.seed = a.seed;
    cfg.validate_every = a.validate_every;
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    for w in cfg.validate()? {
        eprintln!("warning: {w}");
    }
    if let Some(b) = &init {
        if b.fingerprint != model.fingerprint() {
            bail!(
                "checkpoint {} was written by a different model configuration (fingerprint {:016x}, expected {:016x})",
                a.checkpoint_in.as_ref().expect("init implies path").display(),
                b.fingerprint,
                model.fingerprint()
            );
        }
    }
    let pre = preprocess_config(&model);
    let log_every = a.log_every;
    let mut hook = |k: usize, loss: f64| {
        if log_every > 0 && k % log_every == 0 {
            eprintln!("step {k:>6}  loss {loss:.6}");
        }
    };
    let outcome: TrainOutcome = match stage {
        Stage::Pretrain => {
            let data = nonempty(prepare(&corpus.unlabeled, &pre)?, Split::Unlabeled, &a.corpus)?;
            run_stage1(&cfg, &data, init.as_ref(), &mut hook)?
        }
        Stage::Seg2d => {
            let data = nonempty(prepare(&corpus.slices, &pre)?, Split::Slice, &a.corpus)?;
            run_stage2(&cfg, &data, init.as_ref(), &mut hook)?
        }
        Stage::Seg3d => {
            let train = nonempty(prepare(&corpus.train, &pre)?, Split::Train, &a.corpus)?;
            let val = prepare(&corpus.val, &pre)?;
            run_stage3(&cfg, &train, &val, init.as_ref(), &mut hook)?
        }
    };
    if let Some(dir) = &a.report {
        outcome.report.write(dir)?;
    }
    outcome.checkpoint().save(&a.checkpoint_out)?;
    println!(
        "stage {} finished {} steps in {:.1}s ({} parameters, kept step {}); checkpoint {}",
        stage.tag(),
        cfg.steps,
        outcome.elapsed.as_secs_f64(),
        outcome.report.param_count,
        outcome.selected_step,
        a.checkpoint_out.display()
    );
    Ok(())
}

fn evaluate_cmd(a: &EvalArgs) -> Result<()> {
    let bundle = load_checkpoint(&a.checkpoint_in)?;
    if let Some(p) = &a.compare {
        require_file(p, "comparison report")?;
    }
    let corpus = load_corpus(&a.corpus)?;
    let net = load_network(a.model.config(), &bundle)
        .with_context(|| format!("checkpoint {} does not fit --model {}", a.checkpoint_in.display(), a.model.name()))?;
    if net.stage == Stage::Pretrain {
        bail!("checkpoint {} holds only a pretrained encoder and cannot segment", a.checkpoint_in.display());
    }
    let (vols, split) = match a.split {
        EvalSplit::Train => (&corpus.train, Split::Train),
        EvalSplit::Val => (&corpus.val, Split::Val),
        EvalSplit::Test => (&corpus.test, Split::Test),
    };
    let samples = nonempty(prepare(vols, &preprocess_config(&net.config))?, split, &a.corpus)?;
    let report = RunReport {
        config: vec![
            ("checkpoint".into(), a.checkpoint_in.display().to_string()),
            ("split".into(), split.to_string()),
        ],
        param_count: net.param_count(),
        lesions: evaluate(&net, &samples)?,
        ..RunReport::default()
    };
    let comparison = match &a.compare {
        Some(p) => {
            let other = RunReport { lesions: read_lesions_csv(p)?, ..RunReport::default() };
            Some(compare_reports(&report, &other).with_context(|| format!("paired t-test against {}", p.display()))?)
        }
        None => None,
    };
    if let Some(dir) = &a.report {
        report.write(dir)?;
    }
    print!("{}", report.summary_text());
    if let Some(t) = comparison {
        println!(
            "paired t-test: mean difference {:+.4}, t = {:.3}, df = {}, p = {:.4} ({})",
            t.mean_difference,
            t.t,
            t.df,
            t.p,
            if t.significant { "significant" } else { "not significant" }
        );
    }
    Ok(())
}

fn predict_cmd(a: &PredictArgs) -> Result<()> {
    let bundle = load_checkpoint(&a.checkpoint_in)?;
    require_file(&a.input, "input volume")?;
    let net = load_network(a.model.config(), &bundle)
        .with_context(|| format!("checkpoint {} does not fit --model {}", a.checkpoint_in.display(), a.model.name()))?;
    if net.stage == Stage::Pretrain {
        bail!("checkpoint {} holds only a pretrained encoder and cannot segment", a.checkpoint_in.display());
    }
    let v = read_volume(&a.input).with_context(|| format!("cannot read volume {}", a.input.display()))?;
    let sample = prepare(std::slice::from_ref(&v), &preprocess_config(&net.config))?.remove(0);
    let mask = predict(&net, &sample)?;
    let full = &sample.prepared.full;
    let voxels = mask.count();
    let out = full.with_grid(full.dims(), full.spacing(), full.voxels().to_vec(), Some(mask.into_data()))?;
    write_volume(&a.out, &out)?;
    println!("{}: {voxels} foreground voxels on a {:?} grid; wrote {}", v.id, full.dims(), a.out.display());
    Ok(())
}

fn gradcheck(a: &GradArgs) -> Result<bool> {
    let mut ok = true;
    for round in 0..a.rounds {
        for c in gradient_suite(a.seed.wrapping_add(round))? {
            let pass = c.passed();
            ok &= pass;
            println!(
                "{} {:<14} shape {:?} max rel error {:.2e}",
                if pass { "PASS" } else { "FAIL" },
                c.op,
                c.shape,
                c.report.max_rel_error()
            );
        }
    }
    println!("tolerance {GRADCHECK_TOLERANCE:e}: {}", if ok { "all checks passed" } else { "some checks failed" });
    Ok(ok)
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::GenPhantoms(a) => gen_phantoms(a)?,
        Command::Pretrain(a) => train(Stage::Pretrain, a)?,
        Command::Finetune2d(a) => train(Stage::Seg2d, a)?,
        Command::Finetune3d(a) => train(Stage::Seg3d, a)?,
        Command::Evaluate(a) => evaluate_cmd(a)?,
        Command::Predict(a) => predict_cmd(a)?,
        Command::Gradcheck(a) => return gradcheck(a),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let args = match config::expand_args(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
