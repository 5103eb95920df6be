//! Acceptance harness. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails. Artifacts (ROC tables, charts, reports)
//! go to `$CARGO_TARGET_TMPDIR/acceptance`.
//!
//! Criteria 4 to 7 train on the desk benchmark and take the better part of
//! an hour on one core. `CPGAN_ACCEPTANCE=1,2,3` runs a subset; skipped
//! criteria print SKIP.

use std::f64::consts::{LN_10, LN_2};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cpgan_core::baselines::{stage_meta, train_adda, train_cpcnn, AddaStages, AddaTrainer, CLASSIFIER_NAME};
use cpgan_core::checkpoint::Checkpoint;
use cpgan_core::datamodel::{generate_synthetic, Dataset, SyntheticSpec};
use cpgan_core::evaluation::{
    ablation_variants, combined_roc_csv, compute_identification, compute_verification, evaluate_checkpoint, median,
    roc_svg, write_ablation, AblationReport, MetricsReport, ScoreSet, SeedResult, VariantReport, FAR_BUDGETS,
};
use cpgan_core::frontalizer::{identity_proxy, CrossDecoder, Direction};
use cpgan_core::gradcheck::{check_objective, GradCheckOptions, Objective};
use cpgan_core::layers::Parameterized;
use cpgan_core::losses::{
    adda_losses, cgan_losses, contrastive_loss, coupling_loss, cross_entropy_grad, l2_reconstruction, perceptual_loss,
    total_loss, AddaInputs, LossBreakdown, LossWeights, PairLabel,
};
use cpgan_core::networks::{ArchConfig, Classifier, Generator, PatchDiscriminator, SkipPolicy};
use cpgan_core::trainer::{resume, train_cpgan, CpGanTrainer, Learner, TrainConfig};
use cpgan_core::Tensor;

mod common;
use common::{cmc_from_ranks, eer_by_bisection, gar_at_far_oracle, mann_whitney, operating_points, true_ranks};

// Pinned tolerances.
const LOSS_TOL: f64 = 1e-6;
const GRAD_TOL: f64 = 1e-4;
const GRAD_MAX_PARAMS: usize = 2000;
const METRIC_TRIALS: usize = 100;
const METRIC_MAX_ENTRIES: usize = 1000;
/// AUC equals the Mann-Whitney statistic; the two sum in different orders.
const AUC_TOL: f64 = 1e-12;
const EER_TOL: f64 = 1e-9;
const LEARNING_GAIN: f64 = 0.35;
const ABLATION_SLACK: f64 = 0.02;
const PROXY_MIN: f64 = 0.8;
/// Untrained control counts as chance when within this of 1/identities.
const PROXY_CHANCE_BAND: f64 = 0.15;
const BASELINE_MIN_AUC: f64 = 0.75;
const STAGE1_MIN_ACC: f64 = 0.9;
const STEP0_TOL: f64 = 1e-6;
const RESUME_REL_TOL: f64 = 1e-4;

const SEEDS: [u64; 3] = [0, 1, 2];
const TEST_FOLDS: [u32; 2] = [3, 4];

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

type Check = Result<Verdict, String>;

fn close(what: &str, got: f64, want: f64, failures: &mut Vec<String>) {
    if !((got - want).abs() <= LOSS_TOL) {
        failures.push(format!("{what}: {got} vs {want}"));
    }
}

fn t64(c: usize, n: usize, h: usize, w: usize, v: Vec<f64>) -> Tensor<f64> {
    Tensor::from_vec(c, n, h, w, v).unwrap()
}

fn losses_match_oracles() -> Check {
    let mut f = Vec::new();
    let m = 1.0;
    let g = PairLabel::Genuine;
    let i = PairLabel::Impostor;
    let c = |a: &[f64], b: &[f64], y, m| contrastive_loss(a, b, y, m).map_err(|e| e.to_string());
    close(
        "contrastive z1 = z2 genuine",
        c(&[0.3, -1.2], &[0.3, -1.2], g, m)?,
        0.0,
        &mut f,
    );
    close(
        "contrastive impostor beyond margin",
        c(&[2.0, 0.0], &[0.0, 0.0], i, m)?,
        0.0,
        &mut f,
    );
    close(
        "contrastive impostor at margin",
        c(&[1.0, 0.0], &[0.0, 0.0], i, m)?,
        0.0,
        &mut f,
    );
    close(
        "contrastive (3,0)/(0,4) genuine",
        c(&[3.0, 0.0], &[0.0, 4.0], g, m)?,
        12.5,
        &mut f,
    );
    close(
        "contrastive impostor D = 0.4",
        c(&[0.4, 0.0], &[0.0, 0.0], i, m)?,
        0.18,
        &mut f,
    );

    let (a, b, z) = ([0.4, 0.0], [3.0, 0.0], [0.0, 0.0]);
    let (p, q) = ([0.0, 4.0], [0.0, 0.0]);
    let pairs: [(&[f64], &[f64], PairLabel); 2] = [(&a, &z, i), (&b, &p, g)];
    let cpl = coupling_loss(&pairs, m).map_err(|e| e.to_string())?;
    close("coupling mean of 0.18 and 12.5", cpl, 6.34, &mut f);
    let swapped: [(&[f64], &[f64], PairLabel); 2] = [(&b, &p, g), (&a, &q, i)];
    close(
        "coupling permutation",
        coupling_loss(&swapped, m).map_err(|e| e.to_string())?,
        cpl,
        &mut f,
    );

    let half = t64(1, 4, 3, 3, vec![0.5; 36]);
    let cg = cgan_losses(&half, &half).map_err(|e| e.to_string())?;
    close("cgan d_loss at D = 0.5", cg.d_loss, 2.0 * LN_2, &mut f);
    close("cgan g_loss at D = 0.5", cg.g_loss, LN_2, &mut f);
    let perfect =
        cgan_losses(&t64(1, 2, 2, 2, vec![1.0; 8]), &t64(1, 2, 2, 2, vec![0.0; 8])).map_err(|e| e.to_string())?;
    close("cgan perfect discriminator", perfect.d_loss, 0.0, &mut f);

    let x = t64(1, 1, 2, 2, vec![0.1, -0.3, 0.7, 0.0]);
    let y = t64(1, 1, 2, 2, vec![0.1, -0.3, 0.5, 0.0]);
    close(
        "l2 single 0.2 difference",
        l2_reconstruction(&x, &y).map_err(|e| e.to_string())?,
        0.01,
        &mut f,
    );
    close(
        "l2 identical",
        l2_reconstruction(&x, &x).map_err(|e| e.to_string())?,
        0.0,
        &mut f,
    );
    let pa = t64(2, 1, 1, 1, vec![1.0, 2.0]);
    let pb = t64(2, 1, 1, 1, vec![2.0, 4.0]);
    close(
        "perceptual (1,2) vs (2,4)",
        perceptual_loss(&pa, &pb).map_err(|e| e.to_string())?,
        1.5,
        &mut f,
    );

    let parts = LossBreakdown {
        l_cpl: 1.0,
        l_gan: 2.0,
        l_p: 4.0,
        l_2: 8.0,
        ..LossBreakdown::default()
    };
    let w = LossWeights::default();
    close(
        "total with default weights",
        total_loss(&parts, &w).map_err(|e| e.to_string())?,
        6.0,
        &mut f,
    );
    let zero = LossWeights {
        lambda1: 0.0,
        lambda2: 0.0,
        lambda3: 0.0,
        ..w
    };
    close(
        "total with zero weights",
        total_loss(&parts, &zero).map_err(|e| e.to_string())?,
        1.0,
        &mut f,
    );

    let uniform = t64(10, 3, 1, 1, vec![0.1; 30]);
    let (ce, _) = cross_entropy_grad(&uniform, &[0, 4, 9]).map_err(|e| e.to_string())?;
    close("cross-entropy uniform over 10", ce, LN_10, &mut f);

    let d = t64(1, 4, 1, 1, vec![0.5; 4]);
    let e = t64(2, 4, 1, 1, vec![0.0; 8]);
    let labels = [g, g, i, i];
    let ad = adda_losses(&AddaInputs {
        classifier: Some((&uniform, &[1, 2, 3])),
        disc_frontal: &d,
        disc_profile: &d,
        profile_embeddings: &e,
        frontal_embeddings: &e,
        pair_labels: &labels,
        margin: 1.0,
    })
    .map_err(|e| e.to_string())?;
    close("adda adversarial D at 0.5", ad.l_adv_d, 2.0 * LN_2, &mut f);
    close("adda adversarial G at 0.5", ad.l_adv_g, LN_2, &mut f);
    close(
        "adda classification uniform",
        ad.l_cls.unwrap_or(f64::NAN),
        LN_10,
        &mut f,
    );
    // coincident embeddings: genuine pairs 0, impostors 0.5 m^2
    close("adda contrastive", ad.l_cont, 0.25, &mut f);

    Ok(if f.is_empty() {
        verdict(true, format!("all examples within {LOSS_TOL:e}"))
    } else {
        verdict(false, f.join("; "))
    })
}

fn gradients_match_differences() -> Check {
    let opts = GradCheckOptions {
        tolerance: GRAD_TOL,
        ..GradCheckOptions::default()
    };
    // every network of the fixture stays under the size bound; composed
    // objectives span several of them
    let arch = ArchConfig::tiny();
    let sizes = [
        ("generator", Generator::<f64>::new("g", &arch, 1).num_params()),
        (
            "patch discriminator",
            PatchDiscriminator::<f64>::new("d", &arch, 1).num_params(),
        ),
        (
            "classifier",
            Classifier::<f64>::new("c", arch.embedding_dim, 3, 1).num_params(),
        ),
    ];
    let mut ok = sizes.iter().all(|&(_, n)| n <= GRAD_MAX_PARAMS);
    let mut lines = vec![format!("network sizes {sizes:?}")];
    for o in Objective::ALL {
        let r = check_objective(o, 1, &opts).map_err(|e| e.to_string())?;
        ok &= r.passed && r.max_relative_error < GRAD_TOL;
        lines.push(format!(
            "{} {:.1e} over {} params",
            o.name(),
            r.max_relative_error,
            r.num_params
        ));
    }
    Ok(verdict(ok, lines.join(", ")))
}

fn random_scores(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    // coarse grid so that ties occur
    (0..len)
        .map(|_| rng.random_range(0..200) as f64 / 100.0 - 1.0)
        .collect()
}

fn metrics_match_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce);
    let mut f = Vec::new();
    for trial in 0..METRIC_TRIALS {
        let ng = rng.random_range(1..METRIC_MAX_ENTRIES / 2);
        let ni = rng.random_range(1..=METRIC_MAX_ENTRIES - ng);
        let (g, i) = (random_scores(&mut rng, ng), random_scores(&mut rng, ni));
        let r = compute_verification(&ScoreSet {
            genuine: g.clone(),
            impostor: i.clone(),
        })
        .map_err(|e| e.to_string())?;
        let points = operating_points(&g, &i);
        if r.roc != points {
            f.push(format!("trial {trial}: ROC differs"));
        }
        if (r.auc - mann_whitney(&g, &i)).abs() > AUC_TOL {
            f.push(format!("trial {trial}: AUC {}", r.auc));
        }
        if (r.eer - eer_by_bisection(&points)).abs() > EER_TOL {
            f.push(format!("trial {trial}: EER {}", r.eer));
        }
        for b in FAR_BUDGETS {
            if r.gar_at(b) != Some(gar_at_far_oracle(&points, b)) {
                f.push(format!("trial {trial}: GAR@{b}"));
            }
        }

        let gallery_size = rng.random_range(2..50);
        let vec3 = |rng: &mut ChaCha8Rng| (0..3).map(|_| rng.random_range(-2..3) as f32).collect::<Vec<f32>>();
        let gallery: Vec<(Vec<f32>, u32)> = (0..gallery_size).map(|j| (vec3(&mut rng), j as u32)).collect();
        let probes: Vec<(Vec<f32>, u32)> = (0..rng.random_range(1..METRIC_MAX_ENTRIES - gallery_size))
            .map(|_| (vec3(&mut rng), rng.random_range(0..gallery_size as u32)))
            .collect();
        let cmc = compute_identification(&probes, &gallery).map_err(|e| e.to_string())?;
        if cmc != cmc_from_ranks(&true_ranks(&probes, &gallery), gallery_size) {
            f.push(format!("trial {trial}: CMC differs"));
        }
    }

    let hand = compute_verification(&ScoreSet {
        genuine: vec![0.9, 0.8, 0.4],
        impostor: vec![0.7, 0.3, 0.2],
    })
    .map_err(|e| e.to_string())?;
    if (hand.eer - 1.0 / 3.0).abs() > EER_TOL {
        f.push(format!("hand EER {}", hand.eer));
    }
    let sep = compute_verification(&ScoreSet {
        genuine: vec![0.9, 0.8],
        impostor: vec![0.1, 0.2],
    })
    .map_err(|e| e.to_string())?;
    if sep.eer != 0.0 || sep.auc != 1.0 {
        f.push(format!("perfect separation EER {} AUC {}", sep.eer, sep.auc));
    }
    // probe 2 sits nearer identity 0's gallery entry than its own
    let gallery = vec![(vec![0.0, 0.0], 0), (vec![4.0, 0.0], 1), (vec![0.0, 4.0], 2)];
    let probes = vec![(vec![0.5, 0.0], 0), (vec![3.5, 0.5], 1), (vec![0.5, 1.0], 2)];
    let cmc = compute_identification(&probes, &gallery).map_err(|e| e.to_string())?;
    if (cmc[0] - 2.0 / 3.0).abs() > EER_TOL {
        f.push(format!("hand rank-1 {}", cmc[0]));
    }

    Ok(if f.is_empty() {
        verdict(true, format!("{METRIC_TRIALS} randomized trials and hand cases agree"))
    } else {
        verdict(false, f.join("; "))
    })
}

/// Desk benchmark shared by the training criteria.
struct Bench {
    _dir: tempfile::TempDir,
    ds: Dataset,
    cfg: TrainConfig,
    out: PathBuf,
    full: Vec<(u64, Checkpoint, MetricsReport)>,
}

impl Bench {
    fn new(out: &Path) -> Result<Self, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let ds = generate_synthetic(&SyntheticSpec::default(), dir.path()).map_err(|e| e.to_string())?;
        Ok(Self {
            _dir: dir,
            ds,
            cfg: TrainConfig::desk(),
            out: out.to_path_buf(),
            full: Vec::new(),
        })
    }

    fn seed_cfg(&self, seed: u64, weights: LossWeights) -> TrainConfig {
        TrainConfig {
            seed,
            weights,
            ..self.cfg.clone()
        }
    }
}

fn learning_signal(b: &mut Bench) -> Check {
    let mut init = Vec::new();
    let mut trained = Vec::new();
    for seed in SEEDS {
        let cfg = b.seed_cfg(seed, b.cfg.weights);
        let start = CpGanTrainer::new(cfg.clone()).map_err(|e| e.to_string())?.checkpoint();
        init.push(
            evaluate_checkpoint(&start, &b.ds, &TEST_FOLDS)
                .map_err(|e| e.to_string())?
                .auc,
        );
        let run = train_cpgan(&b.ds, &cfg, Some(&b.out.join(format!("full-seed{seed}")))).map_err(|e| e.to_string())?;
        let report = evaluate_checkpoint(&run.checkpoint, &b.ds, &TEST_FOLDS).map_err(|e| e.to_string())?;
        trained.push(report.auc);
        b.full.push((seed, run.checkpoint, report));
    }
    let (mi, mt) = (median(&init), median(&trained));
    Ok(verdict(
        mt >= mi + LEARNING_GAIN,
        format!("median AUC {mt:.3} vs init {mi:.3} (need +{LEARNING_GAIN}); per seed {trained:.3?}"),
    ))
}

fn ablation_ordering(b: &Bench) -> Check {
    let mut variants = Vec::new();
    for (name, weights) in ablation_variants(&b.cfg.weights) {
        let runs = if weights == b.cfg.weights {
            b.full
                .iter()
                .map(|(seed, _, r)| SeedResult {
                    seed: *seed,
                    report: r.clone(),
                })
                .collect()
        } else {
            let mut runs = Vec::new();
            for seed in SEEDS {
                let cfg = b.seed_cfg(seed, weights);
                let run = train_cpgan(&b.ds, &cfg, Some(&b.out.join(format!("{name}-seed{seed}"))))
                    .map_err(|e| e.to_string())?;
                let report = evaluate_checkpoint(&run.checkpoint, &b.ds, &TEST_FOLDS).map_err(|e| e.to_string())?;
                runs.push(SeedResult { seed, report });
            }
            runs
        };
        variants.push(VariantReport::from_runs(name, weights, runs));
    }
    let report = AblationReport {
        version: cpgan_core::VERSION.to_string(),
        config: b.cfg.clone(),
        test_folds: TEST_FOLDS.to_vec(),
        variants,
    };
    let dir = b.out.join("ablation");
    write_ablation(&report, &dir).map_err(|e| e.to_string())?;
    let tables = report.variants.iter().all(|v| {
        v.runs
            .iter()
            .all(|r| dir.join(format!("roc_{}_seed{}.csv", v.name, r.seed)).is_file())
    });
    let auc = |n: &str| {
        report
            .variants
            .iter()
            .find(|v| v.name == n)
            .map(|v| v.median_auc)
            .unwrap_or(f64::NAN)
    };
    let (full, base) = (auc("full"), auc("cpl+l2"));
    let summary: Vec<String> = report
        .variants
        .iter()
        .map(|v| format!("{} {:.3}", v.name, v.median_auc))
        .collect();
    Ok(verdict(
        tables && full >= base - ABLATION_SLACK,
        format!("median AUC {}; ROC tables in {}", summary.join(", "), dir.display()),
    ))
}

fn frontalization_proxy(b: &Bench) -> Check {
    let mut trained = Vec::new();
    let mut control = Vec::new();
    let mut chance = 0.0;
    for (seed, ck, _) in &b.full {
        let policy = SkipPolicy::from_zero_skips(ck.header.arch.zero_skips);
        let model = CrossDecoder::from_checkpoint(ck).map_err(|e| e.to_string())?;
        let r = identity_proxy(&model, &b.ds, &TEST_FOLDS, Direction::P2f, policy).map_err(|e| e.to_string())?;
        let untrained = CrossDecoder::untrained(&ck.header.arch, *seed);
        let u = identity_proxy(&untrained, &b.ds, &TEST_FOLDS, Direction::P2f, policy).map_err(|e| e.to_string())?;
        trained.push(r.success_rate);
        control.push(u.success_rate);
        chance = r.chance;
    }
    let (mt, mc) = (median(&trained), median(&control));
    Ok(verdict(
        mt >= PROXY_MIN && (mc - chance).abs() <= PROXY_CHANCE_BAND,
        format!(
            "median success {mt:.3} (need {PROXY_MIN}), untrained {mc:.3}, chance {chance:.3}; per seed {trained:.3?}"
        ),
    ))
}

fn baseline_parity(b: &Bench) -> Check {
    let cfg = b.seed_cfg(0, b.cfg.weights);
    let cnn = train_cpcnn(&b.ds, &cfg, Some(&b.out.join("cpcnn"))).map_err(|e| e.to_string())?;
    let cnn_r = evaluate_checkpoint(&cnn.checkpoint, &b.ds, &TEST_FOLDS).map_err(|e| e.to_string())?;
    let adda = train_adda(&b.ds, &cfg, AddaStages::Both, None, Some(&b.out.join("adda"))).map_err(|e| e.to_string())?;
    let (stage1, acc) = adda.stage1.ok_or("stage 1 did not run")?;
    let stage2 = &adda.outcome.checkpoint;
    let adda_r = evaluate_checkpoint(stage2, &b.ds, &TEST_FOLDS).map_err(|e| e.to_string())?;

    // frozen tensors must be bit-identical between the stages
    let frozen: Vec<&str> = stage1
        .header
        .tensors
        .iter()
        .map(|t| t.name.as_str())
        .filter(|n| n.starts_with("frontal.encoder") || n.starts_with(CLASSIFIER_NAME))
        .collect();
    let bitwise = !frozen.is_empty()
        && frozen.iter().all(|n| match (stage1.get(n), stage2.get(n)) {
            (Some((s1, v1)), Some((s2, v2))) => s1 == s2 && v1.iter().zip(v2).all(|(a, b)| a.to_bits() == b.to_bits()),
            _ => false,
        });
    let meta = stage_meta(stage2).map_err(|e| e.to_string())?;
    let reloaded = AddaTrainer::from_checkpoint(stage2, &cfg).map_err(|e| e.to_string())?;
    let checksum = meta.frozen_source && meta.frozen_checksum == Some(reloaded.source_checksum());

    let gan = b.full.first().map(|(_, _, r)| r).ok_or("no cpGAN run")?;
    let series = vec![
        ("cpGAN".to_string(), gan),
        ("cpCNN".to_string(), &cnn_r),
        ("ADDA".to_string(), &adda_r),
    ];
    let dir = b.out.join("baselines");
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    std::fs::write(dir.join("comparative_roc.csv"), combined_roc_csv(&series)).map_err(|e| e.to_string())?;
    std::fs::write(
        dir.join("comparative_roc.svg"),
        roc_svg(&series, "cpGAN vs cpCNN vs ADDA"),
    )
    .map_err(|e| e.to_string())?;

    let ok =
        cnn_r.auc >= BASELINE_MIN_AUC && adda_r.auc >= BASELINE_MIN_AUC && acc >= STAGE1_MIN_ACC && bitwise && checksum;
    Ok(verdict(
        ok,
        format!(
            "AUC cpCNN {:.3}, ADDA {:.3}, cpGAN {:.3}; stage-1 accuracy {acc:.3}; {} frozen tensors bit-identical: {bitwise}; checksum: {checksum}",
            cnn_r.auc,
            adda_r.auc,
            gan.auc,
            frozen.len()
        ),
    ))
}

fn determinism_and_resume() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SyntheticSpec {
        num_identities: 10,
        views_per_domain: 2,
        image_height: 16,
        image_width: 16,
        ..SyntheticSpec::default()
    };
    let ds = generate_synthetic(&spec, dir.path()).map_err(|e| e.to_string())?;
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
    let step0 = || -> Result<LossBreakdown, String> {
        CpGanTrainer::new(cfg.clone())
            .and_then(|mut t| t.step(&ds))
            .map_err(|e| e.to_string())
    };
    let (a, b) = (step0()?, step0()?);
    let fields = |l: &LossBreakdown| {
        [
            l.l_cont, l.l_cpl, l.l_pr, l.l_fr, l.l_gan, l.l2_pr, l.l2_fr, l.l_2, l.lp_pr, l.lp_fr, l.l_p, l.l_tot,
            l.d_pr, l.d_fr,
        ]
    };
    let step_gap = fields(&a)
        .iter()
        .zip(fields(&b))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);

    let full = train_cpgan(&ds, &cfg, None).map_err(|e| e.to_string())?;
    let first = train_cpgan(
        &ds,
        &TrainConfig {
            epochs: 1,
            ..cfg.clone()
        },
        None,
    )
    .map_err(|e| e.to_string())?;
    let path = dir.path().join("epoch1.ckpt");
    first.checkpoint.save(&path).map_err(|e| e.to_string())?;
    let loaded = Checkpoint::load(&path).map_err(|e| e.to_string())?;
    let resumed = resume(&loaded, &ds, 1, None).map_err(|e| e.to_string())?;
    let x = full.log.last().ok_or("empty log")?.losses.l_tot;
    let y = resumed.log.last().ok_or("empty log")?.losses.l_tot;
    let rel = (x - y).abs() / x.abs().max(f64::MIN_POSITIVE);
    Ok(verdict(
        step_gap <= STEP0_TOL && rel <= RESUME_REL_TOL,
        format!("step-0 max gap {step_gap:.1e}; resumed final loss relative gap {rel:.1e}"),
    ))
}

fn main() {
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("cannot create {}: {e}", out.display());
        std::process::exit(2);
    }
    println!("acceptance artifacts: {}", out.display());

    let selected: Option<Vec<u8>> = std::env::var("CPGAN_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let wanted = |id: u8| selected.as_ref().is_none_or(|s| s.contains(&id));

    let mut failed = 0;
    let mut record = |id: u8, name: &str, started: Instant, r: Check| {
        let secs = started.elapsed().as_secs_f64();
        let (tag, detail) = match r {
            Ok(v) if v.passed => ("PASS", v.detail),
            Ok(v) => ("FAIL", v.detail),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("{tag} [{id}] {name} ({secs:.1}s): {detail}");
    };

    let quick: [(u8, &str, fn() -> Check); 4] = [
        (1, "loss oracles", losses_match_oracles),
        (2, "gradient fidelity", gradients_match_differences),
        (3, "metric oracles", metrics_match_oracles),
        (8, "determinism and resume", determinism_and_resume),
    ];
    for (id, name, check) in quick {
        if wanted(id) {
            let t = Instant::now();
            record(id, name, t, check());
        } else {
            println!("SKIP [{id}] {name}");
        }
    }

    let t = Instant::now();
    if ![4, 5, 6, 7].into_iter().any(wanted) {
        println!("SKIP [4-7] desk benchmark");
    } else {
        match Bench::new(&out) {
            Err(e) => {
                for (id, name) in [
                    (4, "learning signal"),
                    (5, "ablation ordering"),
                    (6, "frontalization proxy"),
                    (7, "baseline parity"),
                ] {
                    record(id, name, t, Err(format!("benchmark setup: {e}")));
                }
            }
            Ok(mut b) => {
                let r = learning_signal(&mut b);
                record(4, "learning signal", t, r);
                let t = Instant::now();
                record(6, "frontalization proxy", t, frontalization_proxy(&b));
                let t = Instant::now();
                record(5, "ablation ordering", t, ablation_ordering(&b));
                let t = Instant::now();
                record(7, "baseline parity", t, baseline_parity(&b));
            }
        }
    }

    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
