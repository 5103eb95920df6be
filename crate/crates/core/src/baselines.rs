//! Comparison learners: coupled encoders trained on the contrastive loss
//! alone (cpCNN), and two-stage adversarial discriminative domain
//! adaptation with a contrastive regularizer (PF-ADDA).

use std::path::Path;

use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::datamodel::{sample_pair_batch, Dataset, Domain};
use crate::error::{Error, Result};
use crate::layers::Parameterized;
use crate::losses::{self, LossBreakdown};
use crate::networks::{Classifier, EmbeddingDiscriminator, Encoder};
use crate::optim::Adam;
use crate::rng::{self, RngState};
use crate::tensor::images_to_tensor;
use crate::trainer::{
    batch_tensors, non_finite, restore_sampler, run_epochs, Learner, TrainConfig, TrainOutcome, SAMPLER_STREAM,
};

pub const CLASSIFIER_NAME: &str = "adda.classifier";
pub const EMBED_DISC_NAME: &str = "adda.embed_disc";
/// Sampler stream of the adaptation stage.
pub const STAGE2_SAMPLER_STREAM: &str = "sampler.stage2";

/// Builds an encoder from the same named stream a generator's encoder uses,
/// so baselines and the coupled GAN start from identical encoder weights.
pub fn seeded_encoder(domain: Domain, config: &TrainConfig) -> Encoder<f32> {
    Encoder::seeded(&format!("{domain}.encoder"), &config.arch, config.seed)
}

/// Two independent encoders coupled only by the contrastive loss.
pub struct CpCnnTrainer {
    pub config: TrainConfig,
    pub z1: Encoder<f32>,
    pub z2: Encoder<f32>,
    pub optimizers: [Adam; 2],
    sampler: ChaCha8Rng,
    epoch: u64,
    step: u64,
}

const CPCNN_OPT_NAMES: [&str; 2] = ["adam.profile.encoder", "adam.frontal.encoder"];

impl CpCnnTrainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let z1 = seeded_encoder(Domain::Profile, &config);
        let z2 = seeded_encoder(Domain::Frontal, &config);
        let adam = config.adam();
        Ok(Self {
            optimizers: [Adam::new(adam, &z1), Adam::new(adam, &z2)],
            z1,
            z2,
            sampler: rng::stream(config.seed, SAMPLER_STREAM),
            config,
            epoch: 0,
            step: 0,
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint, config: &TrainConfig) -> Result<Self> {
        expect_model(ck, ModelKind::Cpcnn)?;
        check_arch(ck, config)?;
        let mut t = Self::new(config.clone())?;
        ck.load_network(&mut t.z1)?;
        ck.load_network(&mut t.z2)?;
        for (slot, name) in t.optimizers.iter_mut().zip(CPCNN_OPT_NAMES) {
            *slot = ck.load_optimizer(name)?;
        }
        t.sampler = restore_sampler(ck)?;
        (t.epoch, t.step) = (ck.header.epoch, ck.header.step);
        Ok(t)
    }

    /// Trainable parameter count; there are no decoder or discriminator
    /// parameters to count.
    pub fn num_params(&self) -> usize {
        self.z1.num_params() + self.z2.num_params()
    }
}

fn expect_model(ck: &Checkpoint, kind: ModelKind) -> Result<()> {
    if ck.header.model != kind {
        return Err(Error::Checkpoint(format!(
            "expected a {} checkpoint, found {}",
            kind.as_str(),
            ck.header.model.as_str()
        )));
    }
    Ok(())
}

fn check_arch(ck: &Checkpoint, config: &TrainConfig) -> Result<()> {
    if ck.header.arch != config.arch {
        return Err(Error::Config(format!(
            "architecture mismatch: checkpoint has {:?}, config has {:?}",
            ck.header.arch, config.arch
        )));
    }
    Ok(())
}

impl Learner for CpCnnTrainer {
    fn model(&self) -> ModelKind {
        ModelKind::Cpcnn
    }

    fn config(&self) -> &TrainConfig {
        &self.config
    }

    fn position(&self) -> (u64, u64) {
        (self.epoch, self.step)
    }

    fn set_position(&mut self, epoch: u64, step: u64) {
        (self.epoch, self.step) = (epoch, step);
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
        let (x_pr, x_fr) = batch_tensors(&batch, &self.config.arch)?;
        let (e1, c1) = self.z1.forward_train(&x_pr)?;
        let (e2, c2) = self.z2.forward_train(&x_fr)?;
        let g = losses::coupling_loss_grad(
            &e1.embedding,
            &e2.embedding,
            &batch.labels(),
            self.config.weights.margin,
        )?;
        let bd = LossBreakdown {
            l_cont: g.value,
            l_cpl: g.value,
            l_tot: g.value,
            genuine_distance: g.genuine_distance,
            impostor_distance: g.impostor_distance,
            ..Default::default()
        };
        if !g.value.is_finite() {
            return Err(non_finite(self.step, "contrastive loss", &bd));
        }
        let none = [None, None, None];
        self.z1.zero_grad();
        self.z1.backward(&c1, &e1, Some(&g.d_z1), &none);
        self.optimizers[0].step(&mut self.z1)?;
        self.z2.zero_grad();
        self.z2.backward(&c2, &e2, Some(&g.d_z2), &none);
        self.optimizers[1].step(&mut self.z2)?;
        Ok(bd)
    }

    fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(
            ModelKind::Cpcnn,
            self.config.arch.clone(),
            serde_json::to_value(&self.config).expect("serializable"),
        );
        (ck.header.epoch, ck.header.step) = (self.epoch, self.step);
        ck.header.rng = Some(RngState::capture(self.config.seed, SAMPLER_STREAM, &self.sampler));
        ck.put_network(&self.z1);
        ck.put_network(&self.z2);
        for (opt, name) in self.optimizers.iter().zip(CPCNN_OPT_NAMES) {
            ck.put_optimizer(name, opt);
        }
        ck
    }
}

pub fn train_cpcnn(dataset: &Dataset, config: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let mut t = CpCnnTrainer::new(config.clone())?;
    let log = run_epochs(&mut t, dataset, config.epochs, out_dir)?;
    Ok(TrainOutcome {
        checkpoint: t.checkpoint(),
        log,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AddaStage {
    /// Frontal (source) encoder and identity classifier.
    PretrainSource,
    /// Profile (target) encoder against a frozen source.
    AdaptTarget,
}

impl AddaStage {
    pub fn number(self) -> u8 {
        match self {
            AddaStage::PretrainSource => 1,
            AddaStage::AdaptTarget => 2,
        }
    }
}

/// Stage metadata stored in an ADDA checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AddaStageConfig {
    pub stage: AddaStage,
    /// Identity of each classifier output, ascending.
    pub classes: Vec<u32>,
    pub frozen_source: bool,
    /// Checksum of the frozen frontal encoder and classifier, once frozen.
    pub frozen_checksum: Option<u64>,
}

impl AddaStageConfig {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }
}

/// Target-stage networks.
pub struct AddaAdaptation {
    pub z1: Encoder<f32>,
    pub disc: EmbeddingDiscriminator<f32>,
    /// Optimizers of z1 and the embedding discriminator.
    pub optimizers: [Adam; 2],
}

pub struct AddaTrainer {
    pub config: TrainConfig,
    pub stage: AddaStageConfig,
    pub z2: Encoder<f32>,
    pub classifier: Classifier<f32>,
    /// Stage-1 optimizers of z2 and the classifier.
    pub source_optimizers: [Adam; 2],
    pub adaptation: Option<AddaAdaptation>,
    sampler: ChaCha8Rng,
    epoch: u64,
    step: u64,
}

const ADDA_SOURCE_OPTS: [&str; 2] = ["adam.frontal.encoder", "adam.classifier"];
const ADDA_TARGET_OPTS: [&str; 2] = ["adam.profile.encoder", "adam.embed_disc"];

impl AddaTrainer {
    /// Stage 1 from scratch; classes are the identities of the train folds.
    pub fn pretrain(config: TrainConfig, dataset: &Dataset) -> Result<Self> {
        config.validate()?;
        config.check_dataset(dataset)?;
        let classes = dataset.manifest.identities_in(&config.train_folds);
        let z2 = seeded_encoder(Domain::Frontal, &config);
        let classifier = Classifier::new(CLASSIFIER_NAME, config.arch.embedding_dim, classes.len(), config.seed);
        let adam = config.adam();
        Ok(Self {
            source_optimizers: [Adam::new(adam, &z2), Adam::new(adam, &classifier)],
            z2,
            classifier,
            adaptation: None,
            stage: AddaStageConfig {
                stage: AddaStage::PretrainSource,
                classes,
                frozen_source: false,
                frozen_checksum: None,
            },
            sampler: rng::stream(config.seed, SAMPLER_STREAM),
            config,
            epoch: 0,
            step: 0,
        })
    }

    /// Stage 2 from a finished stage-1 checkpoint. The profile encoder
    /// starts as a copy of the frontal encoder.
    pub fn adapt(stage1: &Checkpoint, config: TrainConfig) -> Result<Self> {
        let meta =
            stage_meta(stage1).map_err(|e| Error::Config(format!("stage 2 needs a stage-1 ADDA checkpoint: {e}")))?;
        if meta.stage != AddaStage::PretrainSource {
            return Err(Error::Config(
                "stage 2 needs a stage-1 ADDA checkpoint, got a stage-2 one".into(),
            ));
        }
        config.validate()?;
        check_arch(stage1, &config)?;
        let mut z2 = seeded_encoder(Domain::Frontal, &config);
        stage1.load_network(&mut z2)?;
        let mut classifier = Classifier::new(
            CLASSIFIER_NAME,
            config.arch.embedding_dim,
            meta.num_classes(),
            config.seed,
        );
        stage1.load_network(&mut classifier)?;
        let source_optimizers = [
            stage1.load_optimizer(ADDA_SOURCE_OPTS[0])?,
            stage1.load_optimizer(ADDA_SOURCE_OPTS[1])?,
        ];
        let mut z1 = seeded_encoder(Domain::Profile, &config);
        stage1.load_network_renamed(&mut z1, |n| n.replacen("profile.", "frontal.", 1))?;
        let disc = EmbeddingDiscriminator::new(EMBED_DISC_NAME, &config.arch, config.seed);
        let adam = config.adam();
        let mut t = Self {
            adaptation: Some(AddaAdaptation {
                optimizers: [Adam::new(adam, &z1), Adam::new(adam, &disc)],
                z1,
                disc,
            }),
            z2,
            classifier,
            source_optimizers,
            stage: AddaStageConfig {
                stage: AddaStage::AdaptTarget,
                frozen_source: true,
                ..meta
            },
            sampler: rng::stream(config.seed, STAGE2_SAMPLER_STREAM),
            config,
            epoch: 0,
            step: 0,
        };
        t.stage.frozen_checksum = Some(t.source_checksum());
        Ok(t)
    }

    /// Resumes either stage from one of its own checkpoints.
    pub fn from_checkpoint(ck: &Checkpoint, config: &TrainConfig) -> Result<Self> {
        let meta = stage_meta(ck)?;
        check_arch(ck, config)?;
        config.validate()?;
        let mut z2 = seeded_encoder(Domain::Frontal, config);
        ck.load_network(&mut z2)?;
        let mut classifier = Classifier::new(
            CLASSIFIER_NAME,
            config.arch.embedding_dim,
            meta.num_classes(),
            config.seed,
        );
        ck.load_network(&mut classifier)?;
        let adaptation = if meta.stage == AddaStage::AdaptTarget {
            let mut z1 = seeded_encoder(Domain::Profile, config);
            ck.load_network(&mut z1)?;
            let mut disc = EmbeddingDiscriminator::new(EMBED_DISC_NAME, &config.arch, config.seed);
            ck.load_network(&mut disc)?;
            Some(AddaAdaptation {
                z1,
                disc,
                optimizers: [
                    ck.load_optimizer(ADDA_TARGET_OPTS[0])?,
                    ck.load_optimizer(ADDA_TARGET_OPTS[1])?,
                ],
            })
        } else {
            None
        };
        let t = Self {
            config: config.clone(),
            z2,
            classifier,
            source_optimizers: [
                ck.load_optimizer(ADDA_SOURCE_OPTS[0])?,
                ck.load_optimizer(ADDA_SOURCE_OPTS[1])?,
            ],
            adaptation,
            stage: meta,
            sampler: restore_sampler(ck)?,
            epoch: ck.header.epoch,
            step: ck.header.step,
        };
        if let Some(sum) = t.stage.frozen_checksum {
            if sum != t.source_checksum() {
                return Err(Error::Checkpoint(
                    "frozen source parameters do not match the recorded checksum".into(),
                ));
            }
        }
        Ok(t)
    }

    /// Checksum of the frontal encoder and the classifier.
    pub fn source_checksum(&self) -> u64 {
        self.z2.checksum() ^ self.classifier.checksum().rotate_left(7)
    }

    /// Fraction of train-fold frontal images whose identity the classifier
    /// predicts correctly.
    pub fn source_accuracy(&self, dataset: &Dataset) -> Result<f64> {
        let samples = dataset.select(Domain::Frontal, &self.config.train_folds);
        if samples.is_empty() {
            return Err(Error::InsufficientData("no frontal train images".into()));
        }
        let a = &self.config.arch;
        let mut correct = 0usize;
        for chunk in samples.chunks(64) {
            let imgs: Vec<&[f32]> = chunk.iter().map(|s| s.pixels.as_slice()).collect();
            let x = images_to_tensor::<f32>(&imgs, a.image_height, a.image_width, a.image_channels)?;
            let probs = self.classifier.classify(&self.z2.encode(&x)?.embedding)?;
            let (k, n) = (probs.channels, probs.batch);
            for (i, s) in chunk.iter().enumerate() {
                let best = (0..k)
                    .max_by(|&p, &q| probs.data[p * n + i].total_cmp(&probs.data[q * n + i]))
                    .expect("at least one class");
                correct += usize::from(self.stage.classes[best] == s.identity);
            }
        }
        Ok(correct as f64 / samples.len() as f64)
    }

    fn pretrain_step(&mut self, dataset: &Dataset) -> Result<LossBreakdown> {
        let pool = dataset.select(Domain::Frontal, &self.config.train_folds);
        let b = self.config.batch_size.min(pool.len());
        let picked: Vec<_> = index::sample(&mut self.sampler, pool.len(), b)
            .into_iter()
            .map(|i| &pool[i])
            .collect();
        let labels = picked
            .iter()
            .map(|s| {
                self.stage
                    .classes
                    .binary_search(&s.identity)
                    .map_err(|_| Error::InvalidArgument(format!("identity {} is not a known class", s.identity)))
            })
            .collect::<Result<Vec<_>>>()?;
        let a = &self.config.arch;
        let imgs: Vec<&[f32]> = picked.iter().map(|s| s.pixels.as_slice()).collect();
        let x = images_to_tensor::<f32>(&imgs, a.image_height, a.image_width, a.image_channels)?;
        let (e, cache) = self.z2.forward_train(&x)?;
        let cc = self.classifier.forward_train(&e.embedding)?;
        let (l_cls, d_probs) = losses::cross_entropy_grad(&cc.probs, &labels)?;
        let bd = LossBreakdown {
            l_cls: Some(l_cls),
            l_tot: l_cls,
            ..Default::default()
        };
        if !l_cls.is_finite() {
            return Err(non_finite(self.step, "classification loss", &bd));
        }
        self.z2.zero_grad();
        self.classifier.zero_grad();
        let d_emb = self.classifier.backward(&cc, &d_probs, true, true).expect("requested");
        self.z2.backward(&cache, &e, Some(&d_emb), &[None, None, None]);
        self.source_optimizers[0].step(&mut self.z2)?;
        self.source_optimizers[1].step(&mut self.classifier)?;
        Ok(bd)
    }

    fn adapt_step(&mut self, dataset: &Dataset) -> Result<LossBreakdown> {
        let batch = sample_pair_batch(
            dataset,
            &self.config.train_folds,
            self.config.batch_size,
            &mut self.sampler,
        )?;
        let (x_pr, x_fr) = batch_tensors(&batch, &self.config.arch)?;
        let margin = self.config.weights.margin;
        let ad = self.adaptation.as_mut().expect("stage 2 state");
        // frozen source: plain forward, no gradient reaches z2
        let source = self.z2.encode(&x_fr)?.embedding;
        let (e1, c1) = ad.z1.forward_train(&x_pr)?;
        let mut bd = LossBreakdown::default();

        // embedding discriminator: frontal = real, profile = fake
        let real = ad.disc.forward_train(&source)?;
        let fake = ad.disc.forward_train(&e1.embedding)?;
        let (l_adv_d, g_real, g_fake) = losses::discriminator_loss_grad(&real.output, &fake.output)?;
        bd.l_adv_d = Some(l_adv_d);
        if !l_adv_d.is_finite() {
            return Err(non_finite(self.step, "embedding discriminator loss", &bd));
        }
        ad.disc.zero_grad();
        ad.disc.backward(&real, &g_real, true, false);
        ad.disc.backward(&fake, &g_fake, true, false);
        ad.optimizers[1].step(&mut ad.disc)?;

        // target encoder: inverted labels plus the contrastive term
        let fake = ad.disc.forward_train(&e1.embedding)?;
        let (l_adv_g, g_adv) = losses::generator_gan_loss_grad(&fake.output)?;
        let mut d_z1 = ad.disc.backward(&fake, &g_adv, false, true).expect("requested");
        let cpl = losses::coupling_loss_grad(&e1.embedding, &source, &batch.labels(), margin)?;
        d_z1.add_assign(&cpl.d_z1);
        bd.l_adv_g = Some(l_adv_g);
        bd.l_cont = cpl.value;
        bd.l_cpl = cpl.value;
        bd.genuine_distance = cpl.genuine_distance;
        bd.impostor_distance = cpl.impostor_distance;
        bd.l_tot = l_adv_g + cpl.value;
        if !bd.l_tot.is_finite() {
            return Err(non_finite(self.step, "target encoder objective", &bd));
        }
        ad.z1.zero_grad();
        ad.z1.backward(&c1, &e1, Some(&d_z1), &[None, None, None]);
        ad.optimizers[0].step(&mut ad.z1)?;

        if let Some(sum) = self.stage.frozen_checksum {
            assert_eq!(
                sum,
                self.source_checksum(),
                "stage 2 modified the frozen source networks"
            );
        }
        Ok(bd)
    }
}

/// Reads the stage metadata of an ADDA checkpoint.
pub fn stage_meta(ck: &Checkpoint) -> Result<AddaStageConfig> {
    expect_model(ck, ModelKind::Adda)?;
    serde_json::from_value(ck.header.extra.clone()).map_err(|e| Error::Checkpoint(format!("ADDA stage metadata: {e}")))
}

impl Learner for AddaTrainer {
    fn model(&self) -> ModelKind {
        ModelKind::Adda
    }

    fn stage(&self) -> u8 {
        self.stage.stage.number()
    }

    fn config(&self) -> &TrainConfig {
        &self.config
    }

    fn position(&self) -> (u64, u64) {
        (self.epoch, self.step)
    }

    fn set_position(&mut self, epoch: u64, step: u64) {
        (self.epoch, self.step) = (epoch, step);
    }

    fn set_epoch_lr(&mut self, epoch: u64) {
        let lr = self.config.adam_at_epoch(epoch).learning_rate;
        match self.adaptation.as_mut() {
            Some(ad) => ad.optimizers.iter_mut().for_each(|o| o.config.learning_rate = lr),
            None => self
                .source_optimizers
                .iter_mut()
                .for_each(|o| o.config.learning_rate = lr),
        }
    }

    fn step(&mut self, dataset: &Dataset) -> Result<LossBreakdown> {
        match self.stage.stage {
            AddaStage::PretrainSource => self.pretrain_step(dataset),
            AddaStage::AdaptTarget => self.adapt_step(dataset),
        }
    }

    fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new(
            ModelKind::Adda,
            self.config.arch.clone(),
            serde_json::to_value(&self.config).expect("serializable"),
        );
        (ck.header.epoch, ck.header.step) = (self.epoch, self.step);
        let tag = match self.stage.stage {
            AddaStage::PretrainSource => SAMPLER_STREAM,
            AddaStage::AdaptTarget => STAGE2_SAMPLER_STREAM,
        };
        ck.header.rng = Some(RngState::capture(self.config.seed, tag, &self.sampler));
        ck.header.extra = serde_json::to_value(&self.stage).expect("serializable");
        ck.put_network(&self.z2);
        ck.put_network(&self.classifier);
        for (opt, name) in self.source_optimizers.iter().zip(ADDA_SOURCE_OPTS) {
            ck.put_optimizer(name, opt);
        }
        if let Some(ad) = &self.adaptation {
            ck.put_network(&ad.z1);
            ck.put_network(&ad.disc);
            for (opt, name) in ad.optimizers.iter().zip(ADDA_TARGET_OPTS) {
                ck.put_optimizer(name, opt);
            }
        }
        ck
    }
}

/// Which ADDA stages a run executes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AddaStages {
    Pretrain,
    Adapt,
    Both,
}

impl std::str::FromStr for AddaStages {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(AddaStages::Pretrain),
            "2" => Ok(AddaStages::Adapt),
            "both" => Ok(AddaStages::Both),
            other => Err(Error::Config(format!(
                "unknown ADDA stage {other:?} (expected 1, 2 or both)"
            ))),
        }
    }
}

/// Result of an ADDA run: the final checkpoint plus the stage-1 checkpoint
/// and its train accuracy when stage 1 ran.
pub struct AddaOutcome {
    pub stage1: Option<(Checkpoint, f64)>,
    pub outcome: TrainOutcome,
}

/// Runs the requested ADDA stages for `config.epochs` epochs each. With
/// `out_dir`, stage outputs go to its `stage1` and `stage2` subdirectories.
pub fn train_adda(
    dataset: &Dataset,
    config: &TrainConfig,
    stages: AddaStages,
    stage1_checkpoint: Option<&Checkpoint>,
    out_dir: Option<&Path>,
) -> Result<AddaOutcome> {
    let sub = |name: &str| out_dir.map(|d| d.join(name));
    let mut stage1 = None;
    let source = match (stages, stage1_checkpoint) {
        (AddaStages::Adapt, None) => {
            return Err(Error::Config("ADDA stage 2 needs a stage-1 checkpoint".into()));
        }
        (AddaStages::Adapt, Some(ck)) => ck.clone(),
        (_, Some(_)) => {
            return Err(Error::Config(
                "a stage-1 checkpoint is only used when running stage 2 alone".into(),
            ));
        }
        (_, None) => {
            let mut t = AddaTrainer::pretrain(config.clone(), dataset)?;
            let log = run_epochs(&mut t, dataset, config.epochs, sub("stage1").as_deref())?;
            let acc = t.source_accuracy(dataset)?;
            log::info!("adda stage 1: train classification accuracy {acc:.4}");
            let ck = t.checkpoint();
            if stages == AddaStages::Pretrain {
                return Ok(AddaOutcome {
                    stage1: Some((ck.clone(), acc)),
                    outcome: TrainOutcome { checkpoint: ck, log },
                });
            }
            stage1 = Some((ck.clone(), acc));
            ck
        }
    };
    let mut t = AddaTrainer::adapt(&source, config.clone())?;
    let log = run_epochs(&mut t, dataset, config.epochs, sub("stage2").as_deref())?;
    Ok(AddaOutcome {
        stage1,
        outcome: TrainOutcome {
            checkpoint: t.checkpoint(),
            log,
        },
    })
}
