//! `cpgan`: synthetic data, training, evaluation, ablation, frontalization
//! and gradient checks.
//!
//! Exit codes: 0 success, 2 configuration error, 1 runtime failure.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use cpgan_core::baselines::{train_adda, train_cpcnn, AddaStages};
use cpgan_core::checkpoint::{Checkpoint, ModelKind};
use cpgan_core::datamodel::{generate_synthetic, u8_to_pixel, Dataset, ImageSample};
use cpgan_core::evaluation::{ablation_variants, evaluate_checkpoint, run_ablation, write_metrics};
use cpgan_core::frontalizer::{emit_grid, CrossDecoder, Direction};
use cpgan_core::gradcheck::{check_objective, GradCheckOptions, Objective};
use cpgan_core::io::{read_png, write_atomic};
use cpgan_core::networks::SkipPolicy;
use cpgan_core::trainer::{resume_with, train_cpgan, CHECKPOINT_FILE};
use cpgan_core::{Error, Result};

use config::RunConfig;

const EFFECTIVE_CONFIG_FILE: &str = "effective_config.toml";

#[derive(Parser, Debug)]
#[command(name = "cpgan", version = cpgan_core::VERSION, about = "Coupled conditional GANs for profile/frontal embedding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the seeded synthetic two-domain benchmark.
    SynthData(SynthArgs),
    /// Train cpGAN, cpCNN or PF-ADDA.
    Train(TrainArgs),
    /// Verification and identification metrics of a checkpoint.
    Eval(EvalArgs),
    /// Train every ablation variant over several seeds and compare.
    Ablate(AblateArgs),
    /// Cross-decode images with a trained cpGAN and write a PNG grid.
    Frontalize(FrontalizeArgs),
    /// Finite-difference gradient checks on tiny 64-bit networks.
    GradCheck(GradCheckArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// TOML config file ([data] section).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    identities: Option<usize>,
    /// Views per identity and domain.
    #[arg(long)]
    views: Option<usize>,
    /// Square image side in pixels.
    #[arg(long)]
    size: Option<usize>,
    /// Profile warp strength in [0, 1].
    #[arg(long)]
    warp: Option<f64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long, env = "CPGAN_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "CPGAN_OUT")]
    out: Option<PathBuf>,
}

/// Overrides of the [train] section shared by `train` and `ablate`.
#[derive(Args, Debug)]
struct TrainFlags {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Adversarial weight.
    #[arg(long)]
    lambda1: Option<f64>,
    /// Perceptual weight.
    #[arg(long)]
    lambda2: Option<f64>,
    /// L2 reconstruction weight.
    #[arg(long)]
    lambda3: Option<f64>,
    /// Contrastive margin.
    #[arg(long)]
    margin: Option<f64>,
    /// Fixed number of steps per epoch.
    #[arg(long)]
    steps_per_epoch: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    train_folds: Option<Vec<u32>>,
    /// Train with zero tensors in place of the decoder skip inputs.
    #[arg(long)]
    zero_skips: bool,
    #[arg(long, env = "CPGAN_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "CPGAN_OUT")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Cpgan,
    Cpcnn,
    Adda,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Cpgan => ModelKind::Cpgan,
            ModelArg::Cpcnn => ModelKind::Cpcnn,
            ModelArg::Adda => ModelKind::Adda,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AblationArg {
    #[value(name = "cpl+l2")]
    CplL2,
    #[value(name = "cpl+l2+gan")]
    CplL2Gan,
    Full,
}

impl AblationArg {
    fn name(self) -> &'static str {
        match self {
            AblationArg::CplL2 => "cpl+l2",
            AblationArg::CplL2Gan => "cpl+l2+gan",
            AblationArg::Full => "full",
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    /// ADDA stage: 1 (source pretraining), 2 (adaptation) or both.
    #[arg(long, value_parser = ["1", "2", "both"])]
    stage: Option<String>,
    /// Stage-1 ADDA checkpoint for --stage 2.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Continue a cpGAN checkpoint for --epochs more epochs.
    #[arg(long, conflicts_with_all = ["init", "stage", "ablation"])]
    resume: Option<PathBuf>,
    /// Loss-weight variant applied on top of the configured weights.
    #[arg(long, value_enum)]
    ablation: Option<AblationArg>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Held-out folds.
    #[arg(long, value_delimiter = ',', default_value = "3,4")]
    folds: Vec<u32>,
    /// Directory for metrics.json and the ROC/CMC tables.
    #[arg(long, env = "CPGAN_OUT")]
    report_out: PathBuf,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Held-out folds.
    #[arg(long, value_delimiter = ',')]
    folds: Option<Vec<u32>>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DirectionArg {
    P2f,
    F2p,
}

#[derive(Args, Debug)]
struct FrontalizeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// A single PNG image of the source domain.
    #[arg(long, conflicts_with_all = ["manifest", "fold"])]
    input: Option<PathBuf>,
    /// Translate every source-domain image of --fold from this manifest.
    #[arg(long, requires = "fold")]
    manifest: Option<PathBuf>,
    #[arg(long, requires = "manifest")]
    fold: Option<u32>,
    #[arg(long, value_enum, default_value = "p2f")]
    direction: DirectionArg,
    /// Zero tensors in place of the source encoder's skip activations.
    #[arg(long)]
    zero_skips: bool,
    /// Output PNG: (input, output) pairs side by side.
    #[arg(long)]
    grid_out: PathBuf,
}

#[derive(Args, Debug)]
struct GradCheckArgs {
    /// Objective name or "all".
    #[arg(long, default_value = "all")]
    objective: String,
    #[arg(long, env = "CPGAN_SEED", default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = GradCheckOptions::default().step)]
    step: f64,
    #[arg(long, default_value_t = GradCheckOptions::default().tolerance)]
    tolerance: f64,
    /// Optional JSON report path.
    #[arg(long)]
    report_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::SynthData(a) => synth_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::Frontalize(a) => frontalize(a),
        Command::GradCheck(a) => grad_check(a),
    }
}

fn echo(cfg: &RunConfig, dir: Option<&Path>) -> Result<()> {
    let text = cfg.to_toml();
    info!("effective config:\n{text}");
    if let Some(d) = dir {
        write_atomic(&d.join(EFFECTIVE_CONFIG_FILE), text.as_bytes())?;
    }
    Ok(())
}

fn create_dir(d: &Path) -> Result<()> {
    std::fs::create_dir_all(d).map_err(|e| Error::InvalidArgument(format!("cannot create {}: {e}", d.display())))
}

fn synth_data(a: SynthArgs) -> Result<()> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    let d = &mut cfg.data;
    if let Some(v) = a.identities {
        d.num_identities = v;
    }
    if let Some(v) = a.views {
        d.views_per_domain = v;
    }
    if let Some(v) = a.size {
        d.image_height = v;
        d.image_width = v;
    }
    if let Some(v) = a.warp {
        d.warp_magnitude = v;
    }
    if let Some(v) = a.folds {
        d.num_folds = v;
    }
    if let Some(v) = a.seed {
        d.seed = v;
    }
    if a.out.is_some() {
        cfg.run.out = a.out;
    }
    cfg.data.validate()?;
    let out = cfg.out()?.to_path_buf();
    echo(&cfg, None)?;
    let ds = generate_synthetic(&cfg.data, &out)?;
    info!(
        "wrote {} images and {}",
        ds.manifest.entries.len(),
        out.join("manifest.csv").display()
    );
    Ok(())
}

fn apply_train_flags(f: &TrainFlags) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(f.config.as_deref())?;
    let t = &mut cfg.train;
    if let Some(v) = f.epochs {
        t.epochs = v;
    }
    if let Some(v) = f.batch {
        t.batch_size = v;
    }
    if let Some(v) = f.lr {
        t.learning_rate = v;
    }
    if let Some(v) = f.lambda1 {
        t.weights.lambda1 = v;
    }
    if let Some(v) = f.lambda2 {
        t.weights.lambda2 = v;
    }
    if let Some(v) = f.lambda3 {
        t.weights.lambda3 = v;
    }
    if let Some(v) = f.margin {
        t.weights.margin = v;
    }
    if let Some(v) = f.steps_per_epoch {
        t.steps_per_epoch = Some(v);
    }
    if let Some(v) = &f.train_folds {
        t.train_folds = v.clone();
    }
    if f.zero_skips {
        t.arch.zero_skips = true;
    }
    if let Some(v) = f.seed {
        t.seed = v;
    }
    if f.manifest.is_some() {
        cfg.run.manifest = f.manifest.clone();
    }
    if f.out.is_some() {
        cfg.run.out = f.out.clone();
    }
    Ok(cfg)
}

fn open_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let ds = Dataset::open(cfg.manifest()?)?;
    cfg.train.check_dataset(&ds)?;
    Ok(ds)
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = apply_train_flags(&a.flags)?;
    if let Some(m) = a.model {
        cfg.run.model = m.into();
    }
    let adda = cfg.run.model == ModelKind::Adda;
    if a.stage.is_some() && !adda {
        return Err(Error::Config("--stage requires --model adda".into()));
    }
    if a.init.is_some() && !adda {
        return Err(Error::Config("--init requires --model adda".into()));
    }
    if a.resume.is_some() && cfg.run.model != ModelKind::Cpgan {
        return Err(Error::Config("--resume supports cpgan checkpoints only".into()));
    }
    if let Some(v) = a.ablation {
        if cfg.run.model != ModelKind::Cpgan {
            return Err(Error::Config("--ablation requires --model cpgan".into()));
        }
        cfg.train.weights = ablation_variants(&cfg.train.weights)
            .into_iter()
            .find(|(n, _)| *n == v.name())
            .expect("variant exists")
            .1;
    }
    let stages: AddaStages = a.stage.as_deref().unwrap_or("both").parse()?;
    if adda && stages == AddaStages::Adapt && a.init.is_none() {
        return Err(Error::Config("--stage 2 needs a stage-1 checkpoint (--init)".into()));
    }
    if a.init.is_some() && stages != AddaStages::Adapt {
        return Err(Error::Config("--init is only used with --stage 2".into()));
    }
    cfg.validate()?;
    let out = cfg.out()?.to_path_buf();
    let ds = open_dataset(&cfg)?;
    let init = a.init.as_deref().map(Checkpoint::load).transpose()?;
    let resume = a.resume.as_deref().map(Checkpoint::load).transpose()?;
    create_dir(&out)?;
    echo(&cfg, Some(&out))?;

    let checkpoint = match cfg.run.model {
        ModelKind::Cpgan => match &resume {
            Some(ck) => resume_with(ck, &cfg.train, &ds, cfg.train.epochs, Some(&out))?.checkpoint,
            None => train_cpgan(&ds, &cfg.train, Some(&out))?.checkpoint,
        },
        ModelKind::Cpcnn => train_cpcnn(&ds, &cfg.train, Some(&out))?.checkpoint,
        ModelKind::Adda => {
            let r = train_adda(&ds, &cfg.train, stages, init.as_ref(), Some(&out))?;
            if let Some((_, acc)) = &r.stage1 {
                info!("stage 1 train classification accuracy {acc:.4}");
            }
            r.outcome.checkpoint
        }
    };
    if !(adda && stages == AddaStages::Pretrain) {
        let r = evaluate_checkpoint(&checkpoint, &ds, &cfg.run.test_folds)?;
        info!(
            "held-out folds {:?}: auc {:.4} eer {:.4} rank-1 {:.4}",
            cfg.run.test_folds,
            r.auc,
            r.eer,
            r.rank1().unwrap_or(f64::NAN)
        );
    }
    if adda {
        let stage_dir = if stages == AddaStages::Pretrain {
            "stage1"
        } else {
            "stage2"
        };
        info!("checkpoint {}", out.join(stage_dir).join(CHECKPOINT_FILE).display());
    } else {
        info!("checkpoint {}", out.join(CHECKPOINT_FILE).display());
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let ds = Dataset::open(&a.manifest)?;
    let report = evaluate_checkpoint(&ck, &ds, &a.folds)?;
    create_dir(&a.report_out)?;
    let config = serde_json::json!({
        "checkpoint": a.checkpoint,
        "manifest": a.manifest,
        "folds": a.folds,
        "model": ck.header.model,
        "train": ck.header.config,
    });
    write_metrics(&report, &config, &a.report_out, "metrics")?;
    info!(
        "auc {:.4} eer {:.4} gar@far=0.01 {:.4} rank-1 {:.4}",
        report.auc,
        report.eer,
        report.gar_at(0.01).unwrap_or(f64::NAN),
        report.rank1().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<()> {
    let mut cfg = apply_train_flags(&a.flags)?;
    if let Some(s) = a.seeds {
        cfg.run.seeds = s;
    }
    if let Some(f) = a.folds {
        cfg.run.test_folds = f;
    }
    cfg.validate()?;
    let out = cfg.out()?.to_path_buf();
    let ds = open_dataset(&cfg)?;
    create_dir(&out)?;
    echo(&cfg, Some(&out))?;
    let report = run_ablation(&ds, &cfg.train, &cfg.run.seeds, &cfg.run.test_folds, Some(&out))?;
    for v in &report.variants {
        info!(
            "{:<11} median auc {:.4} median eer {:.4}",
            v.name, v.median_auc, v.median_eer
        );
    }
    Ok(())
}

fn frontalize(a: FrontalizeArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let model = CrossDecoder::from_checkpoint(&ck)?;
    let arch = model.arch().clone();
    let direction = match a.direction {
        DirectionArg::P2f => Direction::P2f,
        DirectionArg::F2p => Direction::F2p,
    };
    let inputs: Vec<Vec<f32>> = match (&a.input, &a.manifest, a.fold) {
        (Some(p), None, None) => {
            let (size, rgb) = read_png(p)?;
            if (size.height, size.width) != (arch.image_height, arch.image_width) {
                return Err(Error::Config(format!(
                    "{} is {}x{}, the model expects {}x{}",
                    p.display(),
                    size.height,
                    size.width,
                    arch.image_height,
                    arch.image_width
                )));
            }
            vec![rgb.into_iter().map(u8_to_pixel).collect()]
        }
        (None, Some(m), Some(fold)) => {
            let ds = Dataset::open(m)?;
            let imgs: Vec<_> = ds.select(direction.source(), &[fold]);
            if imgs.is_empty() {
                return Err(Error::Config(format!(
                    "fold {fold} holds no {} images",
                    direction.source()
                )));
            }
            imgs.iter()
                .map(|s: &std::sync::Arc<ImageSample>| s.pixels.clone())
                .collect()
        }
        _ => return Err(Error::Config("give either --input or --manifest with --fold".into())),
    };
    let refs: Vec<&[f32]> = inputs.iter().map(Vec::as_slice).collect();
    let outputs = model.cross(direction, &refs, SkipPolicy::from_zero_skips(a.zero_skips))?;
    let mut cells = Vec::with_capacity(2 * inputs.len());
    for (i, o) in inputs.into_iter().zip(outputs) {
        cells.push(i);
        cells.push(o);
    }
    let columns = 2 * (cells.len() / 2).clamp(1, 4);
    let config = serde_json::json!({
        "checkpoint": a.checkpoint,
        "direction": direction,
        "zero_skips": a.zero_skips,
        "input": a.input,
        "manifest": a.manifest,
        "fold": a.fold,
        "train": ck.header.config,
    });
    let size = cpgan_core::datamodel::ImageSize::rgb(arch.image_height, arch.image_width);
    emit_grid(&cells, size, columns, &a.grid_out, &config)?;
    info!("wrote {} pairs to {}", cells.len() / 2, a.grid_out.display());
    Ok(())
}

fn grad_check(a: GradCheckArgs) -> Result<()> {
    let objectives = if a.objective == "all" {
        Objective::ALL.to_vec()
    } else {
        vec![a.objective.parse()?]
    };
    let opts = GradCheckOptions {
        step: a.step,
        tolerance: a.tolerance,
        ..GradCheckOptions::default()
    };
    if !(opts.step > 0.0 && opts.tolerance > 0.0) {
        return Err(Error::Config("--step and --tolerance must be positive".into()));
    }
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for o in objectives {
        let r = check_objective(o, a.seed, &opts)?;
        info!(
            "{:<12} {} max rel err {:.3e} over {} coordinates ({} nudged off kinks)",
            o.name(),
            if r.passed { "PASS" } else { "FAIL" },
            r.max_relative_error,
            r.checked,
            r.nudges
        );
        if !r.passed {
            failed.push(o.name());
        }
        rows.push(serde_json::json!({ "objective": o, "report": r }));
    }
    if let Some(p) = &a.report_out {
        let doc = serde_json::json!({
            "version": cpgan_core::VERSION,
            "seed": a.seed,
            "step": opts.step,
            "tolerance": opts.tolerance,
            "results": rows,
        });
        write_atomic(p, serde_json::to_string_pretty(&doc)?.as_bytes())?;
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::CheckFailed(format!("gradient check of {}", failed.join(", "))))
    }
}
