//! Central finite-difference validation of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::layers::Parameterized;
use crate::losses::{self, euclidean_distance, LossBreakdown, LossWeights, PairLabel};
use crate::networks::{ArchConfig, Classifier, Generator, PatchDiscriminator, PerceptualNet};
use crate::tensor::Tensor;
use crate::trainer::{discriminator_objective, generator_objective, DomainPass};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Pass threshold on the maximum relative error.
    pub tolerance: f64,
    /// Denominator floor of the relative error, so that coordinates with a
    /// vanishing gradient are compared absolutely.
    pub floor: f64,
    /// Check only these coordinates (all when `None`).
    pub coordinates: Option<Vec<usize>>,
    /// Relative disagreement between the central differences at `step` and
    /// `2 * step` above which the stencil is taken to straddle a kink. On a
    /// smooth function the two agree to second order in the step.
    pub kink_threshold: f64,
    /// Retries per coordinate when a kink is detected inside the stencil.
    pub max_nudges: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            floor: 1e-6,
            coordinates: None,
            kink_threshold: 1e-5,
            max_nudges: 6,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    /// Size of the parameter vector.
    pub num_params: usize,
    pub checked: usize,
    pub max_relative_error: f64,
    pub worst_coordinate: Option<usize>,
    /// Analytic and numeric derivative at the worst coordinate.
    pub worst_pair: Option<(f64, f64)>,
    /// Number of times a parameter was nudged off a kink.
    pub nudges: usize,
    pub passed: bool,
}

fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Compares the analytic gradient returned by `loss_fn` with central
/// differences, coordinate by coordinate.
///
/// `loss_fn` maps a flat parameter vector to `(loss, gradient)`. A kink
/// (hinge, clamp or rectifier) inside the stencil shows up as first or second
/// differences that disagree between two step sizes; the coordinate is then nudged to a fresh random point
/// and the comparison repeated there.
pub fn grad_check<F>(mut loss_fn: F, params: &[f64], opts: &GradCheckOptions) -> GradCheckReport
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let coords: Vec<usize> = opts.coordinates.clone().unwrap_or_else(|| (0..params.len()).collect());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut theta = params.to_vec();
    let (_, mut analytic) = loss_fn(&theta);
    let mut max_err = 0.0f64;
    let mut worst = None;
    let mut worst_pair = None;
    let mut nudges = 0;
    let h = opts.step;

    for &i in &coords {
        let mut attempt = 0;
        loop {
            let base = theta[i];
            let mut at = |d: f64| {
                theta[i] = base + d;
                loss_fn(&theta).0
            };
            let (fp, fm) = (at(h), at(-h));
            let (fp2, fm2, f0) = (at(2.0 * h), at(-2.0 * h), at(0.0));
            let numeric = (fp - fm) / (2.0 * h);
            let wide = (fp2 - fm2) / (4.0 * h);
            // curvature times h, at both scales
            let bend = (fp - 2.0 * f0 + fm) / h;
            let wide_bend = (fp2 - 2.0 * f0 + fm2) / (4.0 * h);
            let scale = numeric.abs().max(wide.abs()).max(opts.floor);
            let kinked = (numeric - wide).abs().max((bend - wide_bend).abs()) > opts.kink_threshold * scale;
            if kinked && attempt < opts.max_nudges {
                attempt += 1;
                nudges += 1;
                theta[i] = base + h * rng.random_range(5.0..20.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
                analytic = loss_fn(&theta).1;
                continue;
            }
            let err = relative_error(analytic[i], numeric, opts.floor);
            if err > max_err || worst.is_none() {
                max_err = max_err.max(err);
                worst = Some(i);
                worst_pair = Some((analytic[i], numeric));
            }
            break;
        }
    }
    GradCheckReport {
        num_params: params.len(),
        checked: coords.len(),
        max_relative_error: max_err,
        worst_coordinate: worst,
        worst_pair,
        nudges,
        passed: max_err < opts.tolerance,
    }
}

/// Evenly spread subset of `count` coordinates out of `total`.
pub fn spread_coordinates(total: usize, count: usize) -> Vec<usize> {
    if count >= total {
        return (0..total).collect();
    }
    (0..count).map(|j| j * total / count).collect()
}

/// Objectives covered by [`check_objective`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Coupling loss through both encoders.
    Contrastive,
    /// Reconstruction L2 through a generator.
    L2,
    /// Perceptual loss through a generator and the frozen feature net.
    Perceptual,
    /// Discriminator loss with respect to the discriminator.
    CganD,
    /// Non-saturating generator loss through a fixed discriminator.
    CganG,
    /// Cross-entropy through an encoder and the identity classifier.
    Classifier,
    /// The full generator objective over both generators.
    Total,
}

impl Objective {
    pub const ALL: [Objective; 7] = [
        Objective::Contrastive,
        Objective::L2,
        Objective::Perceptual,
        Objective::CganD,
        Objective::CganG,
        Objective::Classifier,
        Objective::Total,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Contrastive => "contrastive",
            Objective::L2 => "l2",
            Objective::Perceptual => "perceptual",
            Objective::CganD => "cgan-d",
            Objective::CganG => "cgan-g",
            Objective::Classifier => "classifier",
            Objective::Total => "total",
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Objective::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown objective {s:?}")))
    }
}

/// Upper bound on coordinates compared per objective.
pub const MAX_COORDINATES: usize = 1500;

fn flat<N: Parameterized<f64>>(nets: &[&N]) -> Vec<f64> {
    nets.iter().flat_map(|n| n.flat_values()).collect()
}

fn set_flat<N: Parameterized<f64>>(nets: &mut [&mut N], theta: &[f64]) {
    let mut off = 0;
    for n in nets.iter_mut() {
        let k = n.num_params();
        n.set_flat_values(&theta[off..off + k]).expect("sizes match");
        off += k;
    }
}

fn random_images(arch: &ArchConfig, n: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let len = arch.image_channels * n * arch.image_height * arch.image_width;
    let data = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(arch.image_channels, n, arch.image_height, arch.image_width, data).expect("sized")
}

/// Small random biases move the fixture off the exactly-zero
/// pre-activations that zero-initialized biases produce (a dead unit feeding
/// zeros leaves its successors sitting on their rectifier kinks).
fn jitter_biases<N: Parameterized<f64>>(net: &mut N, rng: &mut ChaCha8Rng) {
    for p in net.params_mut() {
        if p.name.ends_with("bias") {
            p.value.iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
        }
    }
}

/// Margin placing the fixture's impostor pairs on both sides of the hinge.
fn fixture_margin(z1: &Tensor<f64>, z2: &Tensor<f64>, labels: &[PairLabel]) -> f64 {
    let (r1, r2) = (z1.rows(), z2.rows());
    let mut d: Vec<f64> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| **l == PairLabel::Impostor)
        .map(|(i, _)| euclidean_distance(&r1[i], &r2[i]))
        .collect();
    d.sort_by(f64::total_cmp);
    (d[0] + d[d.len() - 1]) / 2.0
}

/// Gradient check of one objective over tiny 64-bit networks on random
/// inputs.
pub fn check_objective(objective: Objective, seed: u64, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let arch = ArchConfig::tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x67c4);
    let n = 4;
    let x_pr = random_images(&arch, n, &mut rng);
    let x_fr = random_images(&arch, n, &mut rng);
    let labels = [
        PairLabel::Genuine,
        PairLabel::Genuine,
        PairLabel::Impostor,
        PairLabel::Impostor,
    ];
    let mut g_pr = Generator::<f64>::new("profile", &arch, seed);
    let mut g_fr = Generator::<f64>::new("frontal", &arch, seed);
    let mut d_pr = PatchDiscriminator::<f64>::new("profile.disc", &arch, seed);
    let mut d_fr = PatchDiscriminator::<f64>::new("frontal.disc", &arch, seed);
    let mut perceptual = PerceptualNet::<f64>::new(&arch);
    jitter_biases(&mut g_pr, &mut rng);
    jitter_biases(&mut g_fr, &mut rng);
    jitter_biases(&mut d_pr, &mut rng);
    jitter_biases(&mut d_fr, &mut rng);
    jitter_biases(&mut perceptual, &mut rng);
    let margin = fixture_margin(&g_pr.encode(&x_pr)?.embedding, &g_fr.encode(&x_fr)?.embedding, &labels);
    let coords = |total: usize| {
        let mut o = opts.clone();
        o.coordinates
            .get_or_insert_with(|| spread_coordinates(total, MAX_COORDINATES));
        o
    };

    let report = match objective {
        Objective::Contrastive => {
            let (mut e1, mut e2) = (g_pr.encoder.clone(), g_fr.encoder.clone());
            let theta = flat(&[&e1, &e2]);
            let f = |t: &[f64]| {
                set_flat(&mut [&mut e1, &mut e2], t);
                let (o1, c1) = e1.forward_train(&x_pr).expect("shapes");
                let (o2, c2) = e2.forward_train(&x_fr).expect("shapes");
                let g = losses::coupling_loss_grad(&o1.embedding, &o2.embedding, &labels, margin).expect("sizes");
                e1.zero_grad();
                e2.zero_grad();
                e1.backward(&c1, &o1, Some(&g.d_z1), &[None, None, None]);
                e2.backward(&c2, &o2, Some(&g.d_z2), &[None, None, None]);
                (g.value, [e1.flat_grads(), e2.flat_grads()].concat())
            };
            grad_check(f, &theta, &coords(theta.len()))
        }
        Objective::L2 | Objective::Perceptual => {
            let theta = g_pr.flat_values();
            let f = |t: &[f64]| {
                g_pr.set_flat_values(t).expect("sized");
                let (recon, cache) = g_pr.forward_train(&x_pr).expect("shapes");
                let (v, d_recon) = if objective == Objective::L2 {
                    losses::l2_reconstruction_grad(&recon, &x_pr).expect("shapes")
                } else {
                    let pc = perceptual.forward_train(&recon).expect("shapes");
                    let target = perceptual.features(&x_pr).expect("shapes");
                    let (v, g) = losses::perceptual_loss_grad(pc.features(), &target).expect("shapes");
                    (v, perceptual.input_grad(&pc, &g))
                };
                g_pr.zero_grad();
                g_pr.backward(&cache, Some(&d_recon), None);
                (v, g_pr.flat_grads())
            };
            grad_check(f, &theta, &coords(theta.len()))
        }
        Objective::CganD => {
            let fake = g_pr.forward(&x_pr)?.0;
            let theta = d_pr.flat_values();
            let f = |t: &[f64]| {
                d_pr.set_flat_values(t).expect("sized");
                d_pr.zero_grad();
                let v = discriminator_objective(&mut d_pr, &x_pr, &fake).expect("shapes");
                (v, d_pr.flat_grads())
            };
            grad_check(f, &theta, &coords(theta.len()))
        }
        Objective::CganG => {
            let theta = g_pr.flat_values();
            let f = |t: &[f64]| {
                g_pr.set_flat_values(t).expect("sized");
                let (recon, cache) = g_pr.forward_train(&x_pr).expect("shapes");
                let fc = d_pr.forward_train(&x_pr, &recon).expect("shapes");
                let (v, g) = losses::generator_gan_loss_grad(&fc.output).expect("probabilities");
                let d_recon = d_pr.backward(&fc, &g, false, true).expect("requested");
                g_pr.zero_grad();
                g_pr.backward(&cache, Some(&d_recon), None);
                (v, g_pr.flat_grads())
            };
            grad_check(f, &theta, &coords(theta.len()))
        }
        Objective::Classifier => {
            let mut enc = g_fr.encoder.clone();
            let mut cls = Classifier::<f64>::new("classifier", arch.embedding_dim, 3, seed);
            let classes = [0usize, 2, 1, 2];
            let mut theta = enc.flat_values();
            theta.extend(cls.flat_values());
            let ne = enc.num_params();
            let f = |t: &[f64]| {
                enc.set_flat_values(&t[..ne]).expect("sized");
                cls.set_flat_values(&t[ne..]).expect("sized");
                let (o, c) = enc.forward_train(&x_fr).expect("shapes");
                let cc = cls.forward_train(&o.embedding).expect("shapes");
                let (v, dp) = losses::cross_entropy_grad(&cc.probs, &classes).expect("labels");
                enc.zero_grad();
                cls.zero_grad();
                let de = cls.backward(&cc, &dp, true, true).expect("requested");
                enc.backward(&c, &o, Some(&de), &[None, None, None]);
                (v, [enc.flat_grads(), cls.flat_grads()].concat())
            };
            grad_check(f, &theta, &coords(theta.len()))
        }
        Objective::Total => {
            let w = LossWeights {
                margin,
                ..LossWeights::default()
            };
            let theta = flat(&[&g_pr, &g_fr]);
            let f = |t: &[f64]| {
                set_flat(&mut [&mut g_pr, &mut g_fr], t);
                let passes = [
                    DomainPass::run(&g_pr, x_pr.clone(), true).expect("shapes"),
                    DomainPass::run(&g_fr, x_fr.clone(), true).expect("shapes"),
                ];
                let mut bd = LossBreakdown::default();
                let grads = generator_objective(&passes, [&mut d_pr, &mut d_fr], &perceptual, &labels, &w, &mut bd)
                    .expect("shapes");
                g_pr.zero_grad();
                g_fr.zero_grad();
                passes[0].backward(&mut g_pr, grads[0].0.as_ref(), &grads[0].1);
                passes[1].backward(&mut g_fr, grads[1].0.as_ref(), &grads[1].1);
                (bd.l_tot, [g_pr.flat_grads(), g_fr.flat_grads()].concat())
            };
            grad_check(f, &theta, &coords(theta.len()))
        }
    };
    Ok(report)
}
