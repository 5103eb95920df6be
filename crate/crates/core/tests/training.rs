//! Trainer behaviour on a tiny synthetic benchmark: determinism, resume,
//! logging and the cpCNN special case.

use cpgan_core::baselines::{train_cpcnn, CpCnnTrainer};
use cpgan_core::checkpoint::{Checkpoint, ModelKind};
use cpgan_core::datamodel::{generate_synthetic, Dataset, Domain, SyntheticSpec};
use cpgan_core::evaluation::CoupledEncoders;
use cpgan_core::losses::LossWeights;
use cpgan_core::networks::ArchConfig;
use cpgan_core::trainer::{
    resume, run_epochs, train_cpgan, CpGanTrainer, Learner, TrainConfig, CHECKPOINT_FILE, LOG_FILE,
};

fn setup() -> (tempfile::TempDir, Dataset, TrainConfig) {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        num_identities: 10,
        views_per_domain: 2,
        image_height: 16,
        image_width: 16,
        ..SyntheticSpec::default()
    };
    let ds = generate_synthetic(&spec, dir.path()).unwrap();
    let cfg = TrainConfig {
        batch_size: 4,
        epochs: 2,
        steps_per_epoch: Some(3),
        arch: ArchConfig {
            image_height: 16,
            image_width: 16,
            base_width: 2,
            embedding_dim: 8,
            disc_base_width: 2,
            perceptual_base_width: 2,
            embed_disc_hidden: [4, 4],
            ..ArchConfig::default()
        },
        ..TrainConfig::default()
    };
    (dir, ds, cfg)
}

#[test]
fn identical_seeds_give_identical_first_steps() {
    let (_d, ds, cfg) = setup();
    let a = CpGanTrainer::new(cfg.clone()).unwrap().step(&ds).unwrap();
    let b = CpGanTrainer::new(cfg.clone()).unwrap().step(&ds).unwrap();
    assert_eq!(a, b);
    let c = CpGanTrainer::new(TrainConfig { seed: 1, ..cfg })
        .unwrap()
        .step(&ds)
        .unwrap();
    assert_ne!(a.l_tot, c.l_tot);
}

#[test]
fn every_logged_breakdown_recombines_to_the_total() {
    let (_d, ds, cfg) = setup();
    let out = train_cpgan(&ds, &cfg, None).unwrap();
    assert_eq!(out.log.len(), 6);
    for r in &out.log {
        assert!(r.losses.is_consistent(&cfg.weights), "{:?}", r.losses);
        assert!(r.losses.l_tot.is_finite());
    }
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let (dir, ds, cfg) = setup();
    let full = train_cpgan(&ds, &cfg, None).unwrap();
    let first = train_cpgan(
        &ds,
        &TrainConfig {
            epochs: 1,
            ..cfg.clone()
        },
        None,
    )
    .unwrap();
    let path = dir.path().join("one.ckpt");
    first.checkpoint.save(&path).unwrap();
    let resumed = resume(&Checkpoint::load(&path).unwrap(), &ds, 1, None).unwrap();

    let a = full.log.last().unwrap().losses.l_tot;
    let b = resumed.log.last().unwrap().losses.l_tot;
    assert!((a - b).abs() <= 1e-4 * a.abs(), "{a} vs {b}");
    assert_eq!(resumed.checkpoint.header.epoch, 2);
    assert_eq!(resumed.checkpoint.header.step, full.checkpoint.header.step);
    let (r, f) = (&resumed.checkpoint, &full.checkpoint);
    assert_eq!(r.header.tensors, f.header.tensors);
    assert_eq!(r.header.optimizers, f.header.optimizers);
    assert_eq!(r.header.rng, f.header.rng);
    for t in &f.header.tensors {
        assert_eq!(r.get(&t.name), f.get(&t.name), "{}", t.name);
    }
}

#[test]
fn outputs_land_in_the_run_directory() {
    let (dir, ds, cfg) = setup();
    let run = dir.path().join("run");
    train_cpgan(&ds, &cfg, Some(&run)).unwrap();
    let ck = Checkpoint::load(&run.join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(ck.header.model, ModelKind::Cpgan);
    assert_eq!(ck.header.version, cpgan_core::VERSION);
    assert_eq!(ck.header.config["weights"]["lambda1"], 1.0);
    let log = std::fs::read_to_string(run.join(LOG_FILE)).unwrap();
    assert_eq!(log.lines().count(), 1 + 6);
    assert!(log.starts_with("model,stage,epoch,step,l_tot"));
}

#[test]
fn learning_rate_decays_per_epoch() {
    let (_d, _ds, cfg) = setup();
    let cfg = TrainConfig { lr_decay: 0.5, ..cfg };
    assert_eq!(cfg.adam_at_epoch(0).learning_rate, cfg.learning_rate);
    assert!((cfg.adam_at_epoch(3).learning_rate - cfg.learning_rate / 8.0).abs() < 1e-15);
}

#[test]
fn invalid_configs_are_rejected_before_compute() {
    let (_d, ds, cfg) = setup();
    for bad in [
        TrainConfig {
            batch_size: 3,
            ..cfg.clone()
        },
        TrainConfig {
            lr_decay: 0.0,
            ..cfg.clone()
        },
        TrainConfig {
            device: "cuda".into(),
            ..cfg.clone()
        },
        TrainConfig {
            train_folds: vec![],
            ..cfg.clone()
        },
        TrainConfig {
            weights: LossWeights {
                lambda1: -1.0,
                ..cfg.weights
            },
            ..cfg.clone()
        },
    ] {
        assert!(CpGanTrainer::new(bad).err().unwrap().is_config());
    }
    let wrong_size = TrainConfig {
        arch: ArchConfig {
            image_height: 8,
            image_width: 8,
            ..cfg.arch.clone()
        },
        ..cfg
    };
    assert!(train_cpgan(&ds, &wrong_size, None).err().unwrap().is_config());
}

/// With every generator-side weight at zero the coupled GAN reduces to the
/// coupled CNN: the same encoders see the same batches and gradients.
#[test]
fn zero_lambdas_reduce_cpgan_to_cpcnn() {
    let (_d, ds, cfg) = setup();
    let cfg = TrainConfig {
        weights: LossWeights {
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
            ..cfg.weights
        },
        ..cfg
    };
    let gan = train_cpgan(&ds, &cfg, None).unwrap();
    let cnn = train_cpcnn(&ds, &cfg, None).unwrap();
    for (g, c) in gan.log.iter().zip(&cnn.log) {
        assert!((g.losses.l_cpl - c.losses.l_cpl).abs() <= 1e-5 * g.losses.l_cpl.abs().max(1.0));
    }
    let (eg, ec) = (
        CoupledEncoders::from_checkpoint(&gan.checkpoint).unwrap(),
        CoupledEncoders::from_checkpoint(&cnn.checkpoint).unwrap(),
    );
    for domain in [Domain::Profile, Domain::Frontal] {
        let imgs: Vec<&[f32]> = ds
            .samples
            .iter()
            .filter(|s| s.domain == domain)
            .map(|s| s.pixels.as_slice())
            .collect();
        let (a, b) = (eg.embed(domain, &imgs).unwrap(), ec.embed(domain, &imgs).unwrap());
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            assert!((x - y).abs() <= 1e-5 * x.abs().max(1.0), "{x} vs {y}");
        }
    }
    let t = CpCnnTrainer::new(cfg).unwrap();
    assert!(t.num_params() > 0);
}

#[test]
fn run_epochs_continues_step_numbering() {
    let (_d, ds, cfg) = setup();
    let mut t = CpGanTrainer::new(cfg).unwrap();
    let a = run_epochs(&mut t, &ds, 1, None).unwrap();
    let b = run_epochs(&mut t, &ds, 1, None).unwrap();
    assert_eq!(a.last().unwrap().step + 1, b[0].step);
    assert_eq!((b[0].epoch, t.position()), (1, (2, 6)));
}
