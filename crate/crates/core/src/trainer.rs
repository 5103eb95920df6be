//! The coupled-GAN optimization loop and the epoch driver shared with the
//! baselines.

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use log::{debug, info};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::datamodel::{sample_pair_batch, Dataset, Domain, PairBatch};
use crate::error::{Error, Result};
use crate::layers::Parameterized;
use crate::losses::PairLabel;
use crate::losses::{self, LossBreakdown, LossWeights};
use crate::networks::{
    ArchConfig, EmbeddingOutput, EncoderCache, Generator, GeneratorCache, PatchDiscriminator, PerceptualNet,
};
use crate::optim::{Adam, AdamConfig};
use crate::rng::{self, RngState};
use crate::tensor::{images_to_tensor, Real, Tensor};

/// Stream tag of the pair sampler.
pub const SAMPLER_STREAM: &str = "sampler";
pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const LOG_FILE: &str = "train_log.csv";
pub const NAN_SNAPSHOT_FILE: &str = "nan_snapshot.ckpt";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Multiplicative learning-rate factor applied once per epoch.
    pub lr_decay: f64,
    pub d_steps_per_g_step: usize,
    /// Overrides `ceil(#train profile images / batch_size)`.
    pub steps_per_epoch: Option<usize>,
    pub train_folds: Vec<u32>,
    pub device: String,
    pub weights: LossWeights,
    pub arch: ArchConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 30,
            seed: 0,
            learning_rate: 4e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            lr_decay: 1.0,
            d_steps_per_g_step: 1,
            steps_per_epoch: None,
            train_folds: vec![0, 1, 2],
            device: "cpu".into(),
            weights: LossWeights::default(),
            arch: ArchConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Settings for the synthetic benchmark on a CPU: half-width networks,
    /// batch 16, 24 epochs with a 0.93 per-epoch learning-rate decay and
    /// contrastive margin 10.
    pub fn desk() -> Self {
        let d = Self::default();
        Self {
            batch_size: 16,
            epochs: 24,
            lr_decay: 0.93,
            weights: LossWeights { margin: 10.0, ..d.weights },
            arch: ArchConfig {
                base_width: 16,
                disc_base_width: 32,
                ..d.arch
            },
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 || self.batch_size % 2 != 0 {
            return Err(Error::Config(format!(
                "batch_size must be even and >= 2, got {}",
                self.batch_size
            )));
        }
        if self.d_steps_per_g_step == 0 {
            return Err(Error::Config("d_steps_per_g_step must be >= 1".into()));
        }
        if self.steps_per_epoch == Some(0) {
            return Err(Error::Config("steps_per_epoch must be >= 1".into()));
        }
        if self.train_folds.is_empty() {
            return Err(Error::Config("train_folds is empty".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!(
                "lr_decay must lie in (0, 1], got {}",
                self.lr_decay
            )));
        }
        if self.device != "cpu" {
            return Err(Error::Config(format!(
                "device {:?} is not supported (only \"cpu\")",
                self.device
            )));
        }
        self.adam().validate()?;
        self.weights.validate()?;
        self.arch.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }

    /// Adam settings for a given epoch, after learning-rate decay.
    pub fn adam_at_epoch(&self, epoch: u64) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate * self.lr_decay.powi(epoch as i32),
            ..self.adam()
        }
    }

    pub fn steps_per_epoch(&self, dataset: &Dataset) -> usize {
        self.steps_per_epoch.unwrap_or_else(|| {
            let n = dataset.select(Domain::Profile, &self.train_folds).len();
            n.div_ceil(self.batch_size).max(1)
        })
    }

    /// Rejects a dataset the configuration cannot consume.
    pub fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        let s = dataset.image_size();
        let a = &self.arch;
        if (s.height, s.width, s.channels) != (a.image_height, a.image_width, a.image_channels) {
            return Err(Error::Config(format!(
                "manifest images are {}x{}x{}, architecture expects {}x{}x{}",
                s.height, s.width, s.channels, a.image_height, a.image_width, a.image_channels
            )));
        }
        if let Some(f) = self
            .train_folds
            .iter()
            .find(|&&f| f as usize >= dataset.manifest.num_folds)
        {
            return Err(Error::Config(format!(
                "train fold {f} does not exist (manifest has {} folds)",
                dataset.manifest.num_folds
            )));
        }
        if dataset.manifest.identities_in(&self.train_folds).len() < 2 {
            return Err(Error::InsufficientData(
                "train folds hold fewer than 2 identities".into(),
            ));
        }
        Ok(())
    }
}

/// One logged optimization step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub model: ModelKind,
    pub stage: u8,
    pub epoch: u64,
    pub step: u64,
    pub losses: LossBreakdown,
}

impl StepRecord {
    const HEADER: [&'static str; 24] = [
        "model",
        "stage",
        "epoch",
        "step",
        "l_tot",
        "l_cpl",
        "l_cont",
        "l_gan",
        "l_pr",
        "l_fr",
        "l_2",
        "l2_pr",
        "l2_fr",
        "l_p",
        "lp_pr",
        "lp_fr",
        "d_pr",
        "d_fr",
        "genuine_distance",
        "impostor_distance",
        "l_cls",
        "l_adv_d",
        "l_adv_g",
        "lr",
    ];

    fn row(&self, lr: f64) -> Vec<String> {
        let l = &self.losses;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut r = vec![
            self.model.as_str().to_string(),
            self.stage.to_string(),
            self.epoch.to_string(),
            self.step.to_string(),
        ];
        r.extend(
            [
                l.l_tot,
                l.l_cpl,
                l.l_cont,
                l.l_gan,
                l.l_pr,
                l.l_fr,
                l.l_2,
                l.l2_pr,
                l.l2_fr,
                l.l_p,
                l.lp_pr,
                l.lp_fr,
                l.d_pr,
                l.d_fr,
                l.genuine_distance,
                l.impostor_distance,
            ]
            .iter()
            .map(f64::to_string),
        );
        r.extend([opt(l.l_cls), opt(l.l_adv_d), opt(l.l_adv_g), lr.to_string()]);
        r
    }
}

/// Appends step records to a CSV file, writing the header for a new file.
pub struct CsvLog {
    writer: csv::Writer<std::fs::File>,
    path: PathBuf,
}

impl CsvLog {
    pub fn open(path: &Path) -> Result<Self> {
        let fresh = !path.exists() || std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut writer = csv::Writer::from_writer(file);
        if fresh {
            writer.write_record(StepRecord::HEADER)?;
        }
        Ok(Self {
            writer,
            path: path.to_path_buf(),
        })
    }

    pub fn append(&mut self, rec: &StepRecord, lr: f64) -> Result<()> {
        self.writer.write_record(rec.row(lr))?;
        self.writer.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Something trained by alternating optimization over balanced pair batches.
pub trait Learner {
    fn model(&self) -> ModelKind;
    fn stage(&self) -> u8 {
        0
    }
    fn config(&self) -> &TrainConfig;
    /// Completed epochs and steps.
    fn position(&self) -> (u64, u64);
    fn set_position(&mut self, epoch: u64, step: u64);
    /// Applies the learning-rate schedule for `epoch`.
    fn set_epoch_lr(&mut self, epoch: u64);
    /// One optimization step. Non-finite losses are reported as
    /// [`Error::NonFinite`] before the affected update is applied.
    fn step(&mut self, dataset: &Dataset) -> Result<LossBreakdown>;
    fn checkpoint(&self) -> Checkpoint;
}

/// Runs `epochs` further epochs, logging every step and checkpointing after
/// every epoch when `out_dir` is given.
pub fn run_epochs<L: Learner + ?Sized>(
    learner: &mut L,
    dataset: &Dataset,
    epochs: usize,
    out_dir: Option<&Path>,
) -> Result<Vec<StepRecord>> {
    learner.config().check_dataset(dataset)?;
    let steps = learner.config().steps_per_epoch(dataset);
    let mut csv = match out_dir {
        Some(d) => {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            Some(CsvLog::open(&d.join(LOG_FILE))?)
        }
        None => None,
    };
    let mut records = Vec::with_capacity(epochs * steps);
    for _ in 0..epochs {
        let (epoch, _) = learner.position();
        learner.set_epoch_lr(epoch);
        let lr = learner.config().adam_at_epoch(epoch).learning_rate;
        for _ in 0..steps {
            let (_, step) = learner.position();
            let losses = match learner.step(dataset) {
                Ok(l) => l,
                Err(e @ Error::NonFinite { .. }) => {
                    if let Some(d) = out_dir {
                        let p = d.join(NAN_SNAPSHOT_FILE);
                        learner.checkpoint().save(&p)?;
                        log::error!("non-finite loss; state at abort saved to {}", p.display());
                    }
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            learner.set_position(epoch, step + 1);
            let rec = StepRecord {
                model: learner.model(),
                stage: learner.stage(),
                epoch,
                step,
                losses,
            };
            debug!(
                "{} epoch {epoch} step {step}: l_tot {:.5} l_cpl {:.5} genuine {:.4} impostor {:.4}",
                rec.model.as_str(),
                rec.losses.l_tot,
                rec.losses.l_cpl,
                rec.losses.genuine_distance,
                rec.losses.impostor_distance
            );
            if let Some(c) = csv.as_mut() {
                c.append(&rec, lr)?;
            }
            records.push(rec);
        }
        let (_, step) = learner.position();
        learner.set_position(epoch + 1, step);
        if let Some(last) = records.last() {
            info!(
                "{} epoch {} done: l_tot {:.5} l_cpl {:.5}",
                learner.model().as_str(),
                epoch + 1,
                last.losses.l_tot,
                last.losses.l_cpl
            );
        }
        if let Some(d) = out_dir {
            learner.checkpoint().save(&d.join(CHECKPOINT_FILE))?;
        }
    }
    Ok(records)
}

/// Stacks a batch into `[C, N, H, W]` profile and frontal tensors.
pub fn batch_tensors(batch: &PairBatch, arch: &ArchConfig) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let (h, w, c) = (arch.image_height, arch.image_width, arch.image_channels);
    Ok((
        images_to_tensor(&batch.profiles(), h, w, c)?,
        images_to_tensor(&batch.frontals(), h, w, c)?,
    ))
}

pub(crate) fn non_finite(step: u64, what: &str, losses: &LossBreakdown) -> Error {
    Error::NonFinite {
        step,
        detail: format!("{what}; losses {losses:?}"),
    }
}

/// The four trainable networks of the coupled GAN plus the frozen
/// perceptual network.
#[derive(Clone, Debug)]
pub struct CpGanNets {
    pub g_pr: Generator<f32>,
    pub g_fr: Generator<f32>,
    pub d_pr: PatchDiscriminator<f32>,
    pub d_fr: PatchDiscriminator<f32>,
    pub perceptual: PerceptualNet<f32>,
}

impl CpGanNets {
    pub fn new(arch: &ArchConfig, seed: u64) -> Self {
        Self {
            g_pr: Generator::new("profile", arch, seed),
            g_fr: Generator::new("frontal", arch, seed),
            d_pr: PatchDiscriminator::new("profile.disc", arch, seed),
            d_fr: PatchDiscriminator::new("frontal.disc", arch, seed),
            perceptual: PerceptualNet::new(arch),
        }
    }

    pub fn generator(&self, domain: Domain) -> &Generator<f32> {
        match domain {
            Domain::Profile => &self.g_pr,
            Domain::Frontal => &self.g_fr,
        }
    }

    /// Checksums of `(generators, discriminators)`.
    pub fn checksums(&self) -> (u64, u64) {
        (
            self.g_pr.checksum() ^ self.g_fr.checksum().rotate_left(1),
            self.d_pr.checksum() ^ self.d_fr.checksum().rotate_left(1),
        )
    }
}

const OPT_NAMES: [&str; 4] = ["adam.profile", "adam.frontal", "adam.profile.disc", "adam.frontal.disc"];

pub struct CpGanTrainer {
    pub config: TrainConfig,
    pub nets: CpGanNets,
    /// Optimizers of G_PR, G_FR, D_PR, D_FR.
    pub optimizers: [Adam; 4],
    sampler: ChaCha8Rng,
    epoch: u64,
    step: u64,
}

/// Per-domain generator pass retained for the update phases.
pub struct DomainPass<T> {
    pub x: Tensor<T>,
    pub recon: Option<Tensor<T>>,
    gen_cache: Option<GeneratorCache<T>>,
    enc_only: Option<(EmbeddingOutput<T>, EncoderCache<T>)>,
}

impl<T: Real> DomainPass<T> {
    /// Full generator pass, or encoder only when no decoder term is active.
    pub fn run(g: &Generator<T>, x: Tensor<T>, use_decoder: bool) -> Result<Self> {
        Ok(if use_decoder {
            let (recon, cache) = g.forward_train(&x)?;
            Self {
                x,
                recon: Some(recon),
                gen_cache: Some(cache),
                enc_only: None,
            }
        } else {
            Self {
                enc_only: Some(g.encoder.forward_train(&x)?),
                x,
                recon: None,
                gen_cache: None,
            }
        })
    }

    pub fn embedding(&self) -> &Tensor<T> {
        match (&self.gen_cache, &self.enc_only) {
            (Some(c), _) => &c.enc.embedding,
            (None, Some((e, _))) => &e.embedding,
            _ => unreachable!("one of the caches is set"),
        }
    }

    /// Accumulates generator parameter gradients from a reconstruction
    /// gradient and an embedding gradient.
    pub fn backward(&self, g: &mut Generator<T>, d_recon: Option<&Tensor<T>>, d_z: &Tensor<T>) {
        match (&self.gen_cache, &self.enc_only) {
            (Some(cache), _) => g.backward(cache, d_recon, Some(d_z)),
            (None, Some((out, cache))) => g.encoder.backward(cache, out, Some(d_z), &[None, None, None]),
            _ => unreachable!("one of the caches is set"),
        }
    }
}

/// Discriminator loss on (real, fake) for one domain; parameter gradients are
/// accumulated into `d`.
pub fn discriminator_objective<T: Real>(d: &mut PatchDiscriminator<T>, x: &Tensor<T>, fake: &Tensor<T>) -> Result<f64> {
    let real_c = d.forward_train(x, x)?;
    let fake_c = d.forward_train(x, fake)?;
    let (loss, g_real, g_fake) = losses::discriminator_loss_grad(&real_c.output, &fake_c.output)?;
    d.backward(&real_c, &g_real, true, false);
    d.backward(&fake_c, &g_fake, true, false);
    Ok(loss)
}

/// Gradients of the generator-side objective
/// `L_cpl + λ1·L_GAN + λ2·L_P + λ3·L_2` with the discriminators held fixed.
///
/// Fills the loss fields of `bd` and returns, per domain, the gradient on the
/// reconstruction (when the decoder ran) and on the embedding.
pub fn generator_objective<T: Real>(
    passes: &[DomainPass<T>; 2],
    discs: [&mut PatchDiscriminator<T>; 2],
    perceptual: &PerceptualNet<T>,
    labels: &[PairLabel],
    w: &LossWeights,
    bd: &mut LossBreakdown,
) -> Result<[(Option<Tensor<T>>, Tensor<T>); 2]> {
    let coupling = losses::coupling_loss_grad(passes[0].embedding(), passes[1].embedding(), labels, w.margin)?;
    bd.l_cont = coupling.value;
    bd.l_cpl = coupling.value;
    bd.genuine_distance = coupling.genuine_distance;
    bd.impostor_distance = coupling.impostor_distance;
    let mut d_recons: [Option<Tensor<T>>; 2] = [None, None];
    let (mut l2, mut lp, mut lg) = ([0.0; 2], [0.0; 2], [0.0; 2]);
    for (i, d) in discs.into_iter().enumerate() {
        let p = &passes[i];
        let Some(recon) = p.recon.as_ref() else {
            continue;
        };
        let (v, g) = losses::l2_reconstruction_grad(recon, &p.x)?;
        l2[i] = v;
        let mut d_recon = recon.zeros_like();
        d_recon.axpy(w.lambda3, &g);
        if w.lambda2 > 0.0 {
            let pc = perceptual.forward_train(recon)?;
            let target = perceptual.features(&p.x)?;
            let (v, g) = losses::perceptual_loss_grad(pc.features(), &target)?;
            lp[i] = v;
            d_recon.axpy(w.lambda2, &perceptual.input_grad(&pc, &g));
        }
        if w.lambda1 > 0.0 {
            let fake_c = d.forward_train(&p.x, recon)?;
            let (v, g) = losses::generator_gan_loss_grad(&fake_c.output)?;
            lg[i] = v;
            d_recon.axpy(w.lambda1, &d.backward(&fake_c, &g, false, true).expect("requested"));
        }
        d_recons[i] = Some(d_recon);
    }
    (bd.l2_pr, bd.l2_fr, bd.l_2) = (l2[0], l2[1], l2[0] + l2[1]);
    (bd.lp_pr, bd.lp_fr, bd.l_p) = (lp[0], lp[1], lp[0] + lp[1]);
    (bd.l_pr, bd.l_fr, bd.l_gan) = (lg[0], lg[1], lg[0] + lg[1]);
    bd.l_tot = bd.recombine(w);
    let [r0, r1] = d_recons;
    Ok([(r0, coupling.d_z1), (r1, coupling.d_z2)])
}

impl CpGanTrainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let nets = CpGanNets::new(&config.arch, config.seed);
        let adam = config.adam();
        let optimizers = [
            Adam::new(adam, &nets.g_pr),
            Adam::new(adam, &nets.g_fr),
            Adam::new(adam, &nets.d_pr),
            Adam::new(adam, &nets.d_fr),
        ];
        Ok(Self {
            sampler: rng::stream(config.seed, SAMPLER_STREAM),
            config,
            nets,
            optimizers,
            epoch: 0,
            step: 0,
        })
    }

    /// Restores a full training state. `config` must describe the same
    /// architecture as the checkpoint.
    pub fn from_checkpoint(ck: &Checkpoint, config: &TrainConfig) -> Result<Self> {
        if ck.header.model != ModelKind::Cpgan {
            return Err(Error::Checkpoint(format!(
                "expected a cpgan checkpoint, found {}",
                ck.header.model.as_str()
            )));
        }
        if ck.header.arch != config.arch {
            return Err(Error::Config(format!(
                "architecture mismatch: checkpoint has {:?}, config has {:?}",
                ck.header.arch, config.arch
            )));
        }
        let mut t = Self::new(config.clone())?;
        ck.load_network(&mut t.nets.g_pr)?;
        ck.load_network(&mut t.nets.g_fr)?;
        ck.load_network(&mut t.nets.d_pr)?;
        ck.load_network(&mut t.nets.d_fr)?;
        for (slot, name) in t.optimizers.iter_mut().zip(OPT_NAMES) {
            *slot = ck.load_optimizer(name)?;
        }
        t.sampler = restore_sampler(ck)?;
        t.epoch = ck.header.epoch;
        t.step = ck.header.step;
        Ok(t)
    }
}

pub(crate) fn restore_sampler(ck: &Checkpoint) -> Result<ChaCha8Rng> {
    ck.header
        .rng
        .as_ref()
        .and_then(RngState::restore)
        .ok_or_else(|| Error::Checkpoint("missing or invalid sampler state".into()))
}

/// Reads the training configuration echoed into a checkpoint.
pub fn checkpoint_config(ck: &Checkpoint) -> Result<TrainConfig> {
    serde_json::from_value(ck.header.config.clone())
        .map_err(|e| Error::Checkpoint(format!("embedded training config: {e}")))
}

impl Learner for CpGanTrainer {
    fn model(&self) -> ModelKind {
        ModelKind::Cpgan
    }

    fn config(&self) -> &TrainConfig {
        &self.config
    }

    fn position(&self) -> (u64, u64) {
        (self.epoch, self.step)
    }

    fn set_position(&mut self, epoch: u64, step: u64) {
        self.epoch = epoch;
        self.step = step;
    }

    fn set_epoch_lr(&mut self, epoch: u64) {
        let lr = self.config.adam_at_epoch(epoch).learning_rate;
        self.optimizers.iter_mut().for_each(|o| o.config.learning_rate = lr);
    }

    fn step(&mut self, dataset: &Dataset) -> Result<LossBreakdown> {
        let batch = sample_pair_batch(
            dataset,
            &self.config.train_folds,
            self.config.batch_size,
            &mut self.sampler,
        )?;
        let w = self.config.weights;
        let use_decoder = w.lambda1 > 0.0 || w.lambda2 > 0.0 || w.lambda3 > 0.0;
        let (x_pr, x_fr) = batch_tensors(&batch, &self.config.arch)?;
        let passes = [
            DomainPass::run(&self.nets.g_pr, x_pr, use_decoder)?,
            DomainPass::run(&self.nets.g_fr, x_fr, use_decoder)?,
        ];
        let mut bd = LossBreakdown::default();

        // discriminator phase, generators frozen
        if w.lambda1 > 0.0 {
            let before = cfg!(debug_assertions).then(|| self.nets.checksums().0);
            for k in 0..self.config.d_steps_per_g_step {
                let [o_pr, o_fr, ..] = &mut self.optimizers[2..] else {
                    unreachable!()
                };
                for (i, (d, opt)) in [(&mut self.nets.d_pr, o_pr), (&mut self.nets.d_fr, o_fr)]
                    .into_iter()
                    .enumerate()
                {
                    let p = &passes[i];
                    d.zero_grad();
                    let v = discriminator_objective(d, &p.x, p.recon.as_ref().expect("decoder ran"))?;
                    if i == 0 {
                        bd.d_pr = v;
                    } else {
                        bd.d_fr = v;
                    }
                    if !v.is_finite() {
                        return Err(non_finite(self.step, &format!("discriminator loss (d step {k})"), &bd));
                    }
                    opt.step(d)?;
                }
            }
            if let Some(b) = before {
                assert_eq!(
                    b,
                    self.nets.checksums().0,
                    "discriminator update touched generator parameters"
                );
            }
        }

        let grads = generator_objective(
            &passes,
            [&mut self.nets.d_pr, &mut self.nets.d_fr],
            &self.nets.perceptual,
            &batch.labels(),
            &w,
            &mut bd,
        )?;
        if !bd.l_tot.is_finite() {
            return Err(non_finite(self.step, "generator objective", &bd));
        }

        // generator phase, discriminators frozen
        let before = cfg!(debug_assertions).then(|| self.nets.checksums().1);
        let [o_pr, o_fr, ..] = &mut self.optimizers;
        for (i, (g, opt)) in [(&mut self.nets.g_pr, o_pr), (&mut self.nets.g_fr, o_fr)]
            .into_iter()
            .enumerate()
        {
            g.zero_grad();
            passes[i].backward(g, grads[i].0.as_ref(), &grads[i].1);
            opt.step(g)?;
        }
        if let Some(b) = before {
            assert_eq!(
                b,
                self.nets.checksums().1,
                "generator update touched discriminator parameters"
            );
        }
        Ok(bd)
    }

    fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(
            ModelKind::Cpgan,
            self.config.arch.clone(),
            serde_json::to_value(&self.config).expect("serializable"),
        );
        ck.header.epoch = self.epoch;
        ck.header.step = self.step;
        ck.header.rng = Some(RngState::capture(self.config.seed, SAMPLER_STREAM, &self.sampler));
        ck.put_network(&self.nets.g_pr);
        ck.put_network(&self.nets.g_fr);
        ck.put_network(&self.nets.d_pr);
        ck.put_network(&self.nets.d_fr);
        for (opt, name) in self.optimizers.iter().zip(OPT_NAMES) {
            ck.put_optimizer(name, opt);
        }
        ck
    }
}

/// Result of a training run.
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<StepRecord>,
}

/// Trains the coupled GAN from scratch for `config.epochs` epochs.
pub fn train_cpgan(dataset: &Dataset, config: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let mut t = CpGanTrainer::new(config.clone())?;
    let log = run_epochs(&mut t, dataset, config.epochs, out_dir)?;
    Ok(TrainOutcome {
        checkpoint: t.checkpoint(),
        log,
    })
}

/// Continues a coupled-GAN run for `extra_epochs` with the configuration,
/// optimizer state and sampler position stored in the checkpoint.
pub fn resume(ck: &Checkpoint, dataset: &Dataset, extra_epochs: usize, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let config = checkpoint_config(ck)?;
    resume_with(ck, &config, dataset, extra_epochs, out_dir)
}

/// As [`resume`], with an explicit configuration that must match the
/// checkpoint's architecture.
pub fn resume_with(
    ck: &Checkpoint,
    config: &TrainConfig,
    dataset: &Dataset,
    extra_epochs: usize,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    let mut t = CpGanTrainer::from_checkpoint(ck, config)?;
    let log = run_epochs(&mut t, dataset, extra_epochs, out_dir)?;
    Ok(TrainOutcome {
        checkpoint: t.checkpoint(),
        log,
    })
}
