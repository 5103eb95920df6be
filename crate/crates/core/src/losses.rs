//! Scalar objectives and their analytic gradients.
//!
//! Every loss is a pure function of network outputs. Values are accumulated
//! and returned in `f64`; gradients come back in the element type of the
//! inputs so they can be fed straight into a backward pass.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Probability clamp applied before every logarithm.
pub const PROB_EPS: f64 = 1e-7;

/// Genuine/impostor label. The numeric value follows the convention
/// `Y = 0` for a genuine (same identity) pair and `Y = 1` for an impostor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairLabel {
    Genuine,
    Impostor,
}

impl PairLabel {
    pub fn y(self) -> u8 {
        match self {
            PairLabel::Genuine => 0,
            PairLabel::Impostor => 1,
        }
    }

    pub fn from_identities(a: u32, b: u32) -> Self {
        if a == b {
            PairLabel::Genuine
        } else {
            PairLabel::Impostor
        }
    }
}

impl TryFrom<u8> for PairLabel {
    type Error = Error;

    fn try_from(y: u8) -> Result<Self> {
        match y {
            0 => Ok(PairLabel::Genuine),
            1 => Ok(PairLabel::Impostor),
            other => Err(Error::InvalidArgument(format!(
                "pair label must be 0 or 1, got {other}"
            ))),
        }
    }
}

/// Weights of the composite objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Adversarial term.
    pub lambda1: f64,
    /// Perceptual term.
    pub lambda2: f64,
    /// L2 reconstruction term.
    pub lambda3: f64,
    /// Contrastive margin.
    pub margin: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 0.25,
            lambda3: 0.25,
            margin: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !self.margin.is_finite() || self.margin <= 0.0 {
            return Err(Error::Config(format!(
                "margin must be finite and > 0, got {}",
                self.margin
            )));
        }
        Ok(())
    }
}

/// Every named scalar of one optimization step.
///
/// Terms whose weight is zero are not evaluated during training and are
/// logged as `0`. The adversarial-adaptation scalars are only present for
/// that baseline.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Mean contrastive loss over the sampled pairs (same estimator as `l_cpl`).
    pub l_cont: f64,
    pub l_cpl: f64,
    /// Generator-side adversarial losses per domain.
    pub l_pr: f64,
    pub l_fr: f64,
    pub l_gan: f64,
    pub l2_pr: f64,
    pub l2_fr: f64,
    pub l_2: f64,
    pub lp_pr: f64,
    pub lp_fr: f64,
    pub l_p: f64,
    pub l_tot: f64,
    /// Discriminator losses, logged for monitoring.
    pub d_pr: f64,
    pub d_fr: f64,
    /// Mean embedding distance over genuine and impostor pairs of the batch.
    pub genuine_distance: f64,
    pub impostor_distance: f64,
    pub l_cls: Option<f64>,
    pub l_adv_d: Option<f64>,
    pub l_adv_g: Option<f64>,
}

impl LossBreakdown {
    /// `L_cpl + λ1 L_GAN + λ2 L_P + λ3 L_2` from the stored parts.
    pub fn recombine(&self, w: &LossWeights) -> f64 {
        self.l_cpl + w.lambda1 * self.l_gan + w.lambda2 * self.l_p + w.lambda3 * self.l_2
    }

    /// Checks the recombination identity to 1e-6 relative.
    pub fn is_consistent(&self, w: &LossWeights) -> bool {
        let r = self.recombine(w);
        (r - self.l_tot).abs() <= 1e-6 * r.abs().max(self.l_tot.abs()).max(1e-12)
    }
}

fn check_len(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{what}: lengths {a} and {b} differ")));
    }
    Ok(())
}

pub fn euclidean_distance<T: Real>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.to_f64() - y.to_f64();
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Contrastive loss between two embeddings:
/// `½ D²` for genuine pairs, `½ max(0, m − D)²` for impostors, with `D` the
/// Euclidean distance.
pub fn contrastive_loss<T: Real>(z1: &[T], z2: &[T], label: PairLabel, margin: f64) -> Result<f64> {
    contrastive_loss_grad(z1, z2, label, margin).map(|(l, _)| l)
}

/// Contrastive loss and its gradient with respect to `z1`; the gradient
/// with respect to `z2` is the negation.
pub fn contrastive_loss_grad<T: Real>(z1: &[T], z2: &[T], label: PairLabel, margin: f64) -> Result<(f64, Vec<T>)> {
    check_len(z1.len(), z2.len(), "contrastive_loss")?;
    let diff: Vec<f64> = z1.iter().zip(z2).map(|(&a, &b)| a.to_f64() - b.to_f64()).collect();
    let dist = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
    match label {
        PairLabel::Genuine => Ok((0.5 * dist * dist, diff.iter().map(|&d| T::from_f64(d)).collect())),
        PairLabel::Impostor => {
            let gap = margin - dist;
            if gap <= 0.0 || dist == 0.0 {
                let loss = if gap > 0.0 { 0.5 * gap * gap } else { 0.0 };
                return Ok((loss, vec![T::zero(); z1.len()]));
            }
            let scale = -gap / dist;
            Ok((0.5 * gap * gap, diff.iter().map(|&d| T::from_f64(scale * d)).collect()))
        }
    }
}

/// Mean contrastive loss over sampled `(z1, z2, Y)` pairs.
pub fn coupling_loss<T: Real>(pairs: &[(&[T], &[T], PairLabel)], margin: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("coupling_loss over an empty batch".into()));
    }
    let mut total = 0.0;
    for &(z1, z2, y) in pairs {
        total += contrastive_loss(z1, z2, y, margin)?;
    }
    Ok(total / pairs.len() as f64)
}

/// Coupling loss over batched embeddings (column `n` of `z1` is paired with
/// column `n` of `z2`) together with gradients for both embedding tensors.
#[derive(Clone, Debug)]
pub struct CouplingGrad<T> {
    pub value: f64,
    pub d_z1: Tensor<T>,
    pub d_z2: Tensor<T>,
    pub genuine_distance: f64,
    pub impostor_distance: f64,
}

pub fn coupling_loss_grad<T: Real>(
    z1: &Tensor<T>,
    z2: &Tensor<T>,
    labels: &[PairLabel],
    margin: f64,
) -> Result<CouplingGrad<T>> {
    z1.check_shape(z2, "coupling_loss embeddings")?;
    check_len(z1.batch, labels.len(), "coupling_loss labels")?;
    if labels.is_empty() {
        return Err(Error::InvalidArgument("coupling_loss over an empty batch".into()));
    }
    let n = labels.len();
    let inv_n = 1.0 / n as f64;
    let mut d_z1 = z1.zeros_like();
    let mut d_z2 = z2.zeros_like();
    let mut total = 0.0;
    let (mut gd, mut gc, mut id, mut ic) = (0.0, 0usize, 0.0, 0usize);
    for (i, &label) in labels.iter().enumerate() {
        let a = z1.row(i);
        let b = z2.row(i);
        let (l, g) = contrastive_loss_grad(&a, &b, label, margin)?;
        total += l;
        let dist = euclidean_distance(&a, &b);
        match label {
            PairLabel::Genuine => {
                gd += dist;
                gc += 1;
            }
            PairLabel::Impostor => {
                id += dist;
                ic += 1;
            }
        }
        for (d, gv) in g.into_iter().enumerate() {
            let v = T::from_f64(gv.to_f64() * inv_n);
            d_z1.data[d * n + i] = v;
            d_z2.data[d * n + i] = -v;
        }
    }
    let mean = |s: f64, c: usize| if c == 0 { 0.0 } else { s / c as f64 };
    Ok(CouplingGrad {
        value: total * inv_n,
        d_z1,
        d_z2,
        genuine_distance: mean(gd, gc),
        impostor_distance: mean(id, ic),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CganLosses {
    pub d_loss: f64,
    pub g_loss: f64,
}

#[inline]
fn clamp_prob(p: f64) -> (f64, bool) {
    if p < PROB_EPS {
        (PROB_EPS, true)
    } else if p > 1.0 - PROB_EPS {
        (1.0 - PROB_EPS, true)
    } else {
        (p, false)
    }
}

/// `−mean log p` and its gradient (`−1 / (n p)`, zero where clamped).
fn neg_mean_log<T: Real>(probs: &[T]) -> (f64, Vec<T>) {
    let n = probs.len() as f64;
    let mut total = 0.0;
    let grad = probs
        .iter()
        .map(|&p| {
            let (pc, clamped) = clamp_prob(p.to_f64());
            total -= pc.ln();
            if clamped {
                T::zero()
            } else {
                T::from_f64(-1.0 / (n * pc))
            }
        })
        .collect();
    (total / n, grad)
}

/// `−mean log (1 − p)` and its gradient.
fn neg_mean_log_complement<T: Real>(probs: &[T]) -> (f64, Vec<T>) {
    let n = probs.len() as f64;
    let mut total = 0.0;
    let grad = probs
        .iter()
        .map(|&p| {
            let (pc, clamped) = clamp_prob(p.to_f64());
            total -= (1.0 - pc).ln();
            if clamped {
                T::zero()
            } else {
                T::from_f64(1.0 / (n * (1.0 - pc)))
            }
        })
        .collect();
    (total / n, grad)
}

fn check_probs<T: Real>(t: &Tensor<T>, what: &str) -> Result<()> {
    if t.is_empty() {
        return Err(Error::InvalidArgument(format!("{what}: empty probability grid")));
    }
    if let Some(p) = t.data.iter().find(|p| !(p.to_f64() >= 0.0 && p.to_f64() <= 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "{what}: value {} is not a probability",
            p.to_f64()
        )));
    }
    Ok(())
}

/// Conditional-GAN losses from discriminator outputs on real and generated
/// candidates: `d = −mean log D(real) − mean log(1 − D(fake))` and the
/// non-saturating generator loss `g = −mean log D(fake)`.
pub fn cgan_losses<T: Real>(real: &Tensor<T>, fake: &Tensor<T>) -> Result<CganLosses> {
    let (d_loss, _, _) = discriminator_loss_grad(real, fake)?;
    let (g_loss, _) = generator_gan_loss_grad(fake)?;
    Ok(CganLosses { d_loss, g_loss })
}

/// Discriminator loss with gradients for the real and fake probability grids.
pub fn discriminator_loss_grad<T: Real>(real: &Tensor<T>, fake: &Tensor<T>) -> Result<(f64, Tensor<T>, Tensor<T>)> {
    real.check_shape(fake, "cgan real/fake grids")?;
    check_probs(real, "real grid")?;
    check_probs(fake, "fake grid")?;
    let (lr, gr) = neg_mean_log(&real.data);
    let (lf, gf) = neg_mean_log_complement(&fake.data);
    Ok((lr + lf, real.with_data(gr), fake.with_data(gf)))
}

/// Non-saturating generator loss `−mean log D(fake)` and its gradient.
pub fn generator_gan_loss_grad<T: Real>(fake: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    check_probs(fake, "fake grid")?;
    let (l, g) = neg_mean_log(&fake.data);
    Ok((l, fake.with_data(g)))
}

/// Mean squared difference over all elements.
pub fn l2_reconstruction<T: Real>(recon: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    l2_reconstruction_grad(recon, target).map(|(l, _)| l)
}

/// Mean squared difference and its gradient with respect to `recon`.
pub fn l2_reconstruction_grad<T: Real>(recon: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    recon.check_shape(target, "l2_reconstruction")?;
    let n = recon.len().max(1) as f64;
    let mut total = 0.0;
    let grad = recon
        .data
        .iter()
        .zip(&target.data)
        .map(|(&r, &t)| {
            let d = r.to_f64() - t.to_f64();
            total += d * d;
            T::from_f64(2.0 * d / n)
        })
        .collect();
    Ok((total / n, recon.with_data(grad)))
}

/// Mean absolute difference over all feature elements.
pub fn perceptual_loss<T: Real>(feat_recon: &Tensor<T>, feat_target: &Tensor<T>) -> Result<f64> {
    perceptual_loss_grad(feat_recon, feat_target).map(|(l, _)| l)
}

/// Mean absolute feature difference and its (sub)gradient with respect to
/// `feat_recon`; zero where the features coincide.
pub fn perceptual_loss_grad<T: Real>(feat_recon: &Tensor<T>, feat_target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    feat_recon.check_shape(feat_target, "perceptual_loss")?;
    let n = feat_recon.len().max(1) as f64;
    let mut total = 0.0;
    let grad = feat_recon
        .data
        .iter()
        .zip(&feat_target.data)
        .map(|(&a, &b)| {
            let d = a.to_f64() - b.to_f64();
            total += d.abs();
            let s = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
            T::from_f64(s / n)
        })
        .collect();
    Ok((total / n, feat_recon.with_data(grad)))
}

/// `L_cpl + λ1 L_GAN + λ2 L_P + λ3 L_2`.
pub fn total_loss(parts: &LossBreakdown, w: &LossWeights) -> Result<f64> {
    for (name, v) in [
        ("l_cpl", parts.l_cpl),
        ("l_gan", parts.l_gan),
        ("l_p", parts.l_p),
        ("l_2", parts.l_2),
    ] {
        if v.is_nan() {
            return Err(Error::InvalidArgument(format!("{name} is NaN")));
        }
    }
    Ok(parts.recombine(w))
}

/// Mean cross-entropy `−mean log p[label]` over `[K, N, 1, 1]` class
/// probabilities, with the gradient on the probabilities.
pub fn cross_entropy_grad<T: Real>(probs: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>)> {
    check_len(probs.batch, labels.len(), "cross_entropy labels")?;
    if labels.is_empty() {
        return Err(Error::InvalidArgument("cross_entropy over an empty batch".into()));
    }
    let (k, n) = (probs.channels, probs.batch);
    let mut grad = probs.zeros_like();
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::InvalidArgument(format!("class label {y} outside [0, {k})")));
        }
        let (p, clamped) = clamp_prob(probs.data[y * n + i].to_f64());
        total -= p.ln();
        if !clamped {
            grad.data[y * n + i] = T::from_f64(-1.0 / (n as f64 * p));
        }
    }
    Ok((total / n as f64, grad))
}

/// Inputs to the adversarial domain-adaptation objective.
pub struct AddaInputs<'a, T> {
    /// Classifier probabilities on frontal embeddings and their class labels.
    pub classifier: Option<(&'a Tensor<T>, &'a [usize])>,
    /// Embedding discriminator outputs on frontal (source) embeddings.
    pub disc_frontal: &'a Tensor<T>,
    /// Embedding discriminator outputs on profile (target) embeddings.
    pub disc_profile: &'a Tensor<T>,
    /// Paired profile/frontal embeddings for the contrastive term.
    pub profile_embeddings: &'a Tensor<T>,
    pub frontal_embeddings: &'a Tensor<T>,
    pub pair_labels: &'a [PairLabel],
    pub margin: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AddaLosses {
    pub l_cls: Option<f64>,
    pub l_adv_d: f64,
    pub l_adv_g: f64,
    pub l_cont: f64,
}

/// Classification, embedding-discriminator, inverted-label encoder and
/// contrastive losses of the adaptation baseline.
pub fn adda_losses<T: Real>(inp: &AddaInputs<'_, T>) -> Result<AddaLosses> {
    let l_cls = match inp.classifier {
        Some((probs, labels)) => Some(cross_entropy_grad(probs, labels)?.0),
        None => None,
    };
    let (l_adv_d, _, _) = discriminator_loss_grad(inp.disc_frontal, inp.disc_profile)?;
    let (l_adv_g, _) = generator_gan_loss_grad(inp.disc_profile)?;
    let l_cont = coupling_loss_grad(
        inp.profile_embeddings,
        inp.frontal_embeddings,
        inp.pair_labels,
        inp.margin,
    )?
    .value;
    Ok(AddaLosses {
        l_cls,
        l_adv_d,
        l_adv_g,
        l_cont,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn grid(v: f64, n: usize) -> Tensor<f64> {
        Tensor::from_vec(1, 1, 1, n, vec![v; n]).unwrap()
    }

    #[test]
    fn contrastive_hand_values() {
        assert_eq!(
            contrastive_loss(&[1.0f64, 2.0], &[1.0, 2.0], PairLabel::Genuine, 1.0).unwrap(),
            0.0
        );
        assert_eq!(
            contrastive_loss(&[0.0f64, 0.0], &[3.0, 0.0], PairLabel::Impostor, 1.0).unwrap(),
            0.0
        );
        assert!((contrastive_loss(&[3.0f64, 0.0], &[0.0, 4.0], PairLabel::Genuine, 1.0).unwrap() - 12.5).abs() < 1e-12);
        assert!(
            (contrastive_loss(&[0.4f64, 0.0], &[0.0, 0.0], PairLabel::Impostor, 1.0).unwrap() - 0.18).abs() < 1e-12
        );
    }

    #[test]
    fn contrastive_errors() {
        assert!(contrastive_loss(&[1.0f64], &[1.0, 2.0], PairLabel::Genuine, 1.0).is_err());
        assert!(PairLabel::try_from(2u8).is_err());
        assert_eq!(PairLabel::try_from(0u8).unwrap(), PairLabel::Genuine);
        assert_eq!(PairLabel::Impostor.y(), 1);
    }

    #[test]
    fn hinge_is_flat_beyond_margin() {
        let (_, g) = contrastive_loss_grad(&[2.0f64, 0.0], &[0.0, 0.0], PairLabel::Impostor, 1.0).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn coupling_mean_and_permutation() {
        let a = [0.4f64, 0.0];
        let o = [0.0f64, 0.0];
        let b = [3.0f64, 0.0];
        let c = [0.0f64, 4.0];
        let pairs = [
            (&a[..], &o[..], PairLabel::Impostor),
            (&b[..], &c[..], PairLabel::Genuine),
        ];
        assert!((coupling_loss(&pairs, 1.0).unwrap() - 6.34).abs() < 1e-12);
        let rev = [pairs[1], pairs[0]];
        assert_eq!(coupling_loss(&rev, 1.0).unwrap(), coupling_loss(&pairs, 1.0).unwrap());
        assert!(coupling_loss::<f64>(&[], 1.0).is_err());
        let same = [
            (&b[..], &b[..], PairLabel::Genuine),
            (&c[..], &c[..], PairLabel::Genuine),
        ];
        assert_eq!(coupling_loss(&same, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn batched_coupling_matches_pairwise() {
        let z1 = Tensor::from_rows(&[vec![0.4f64, 0.0], vec![3.0, 0.0]]).unwrap();
        let z2 = Tensor::from_rows(&[vec![0.0f64, 0.0], vec![0.0, 4.0]]).unwrap();
        let g = coupling_loss_grad(&z1, &z2, &[PairLabel::Impostor, PairLabel::Genuine], 1.0).unwrap();
        assert!((g.value - 6.34).abs() < 1e-12);
        assert!((g.genuine_distance - 5.0).abs() < 1e-12);
        assert!((g.impostor_distance - 0.4).abs() < 1e-12);
        for (a, b) in g.d_z1.data.iter().zip(&g.d_z2.data) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn cgan_constant_half_grids() {
        let l = cgan_losses(&grid(0.5, 64), &grid(0.5, 64)).unwrap();
        assert!((l.d_loss - 2.0 * LN_2).abs() < 1e-12);
        assert!((l.g_loss - LN_2).abs() < 1e-12);
        let perfect = cgan_losses(&grid(1.0, 4), &grid(0.0, 4)).unwrap();
        assert!(perfect.d_loss < 1e-6);
        assert!(cgan_losses(&grid(0.5, 4), &grid(0.5, 3)).is_err());
        assert!(cgan_losses(&grid(1.5, 4), &grid(0.5, 4)).is_err());
    }

    #[test]
    fn l2_and_perceptual_hand_values() {
        let a = Tensor::from_vec(1, 1, 2, 2, vec![0.0f64, 0.5, -0.5, 1.0]).unwrap();
        let mut b = a.clone();
        assert_eq!(l2_reconstruction(&a, &b).unwrap(), 0.0);
        b.data[1] += 0.2;
        assert!((l2_reconstruction(&a, &b).unwrap() - 0.01).abs() < 1e-12);
        assert_eq!(l2_reconstruction(&a, &b).unwrap(), l2_reconstruction(&b, &a).unwrap());
        let f1 = Tensor::from_vec(2, 1, 1, 1, vec![1.0f64, 2.0]).unwrap();
        let f2 = Tensor::from_vec(2, 1, 1, 1, vec![2.0f64, 4.0]).unwrap();
        assert!((perceptual_loss(&f1, &f2).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(perceptual_loss(&f1, &f1).unwrap(), 0.0);
        assert!(l2_reconstruction(&a, &f1).is_err());
    }

    #[test]
    fn total_loss_hand_values() {
        let parts = LossBreakdown {
            l_cpl: 1.0,
            l_gan: 2.0,
            l_p: 4.0,
            l_2: 8.0,
            ..Default::default()
        };
        assert_eq!(total_loss(&parts, &LossWeights::default()).unwrap(), 6.0);
        let zero = LossWeights {
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
            margin: 1.0,
        };
        assert_eq!(total_loss(&parts, &zero).unwrap(), 1.0);
        let nan = LossBreakdown { l_p: f64::NAN, ..parts };
        assert!(total_loss(&nan, &zero).is_err());
    }

    #[test]
    fn adda_hand_values() {
        let k = 10;
        let probs = Tensor::from_vec(k, 2, 1, 1, vec![0.1f64; 2 * k]).unwrap();
        let labels = [3usize, 9];
        let e = Tensor::from_rows(&[vec![1.0f64, 2.0], vec![0.5, 0.5]]).unwrap();
        let d = grid(0.5, 2);
        let out = adda_losses(&AddaInputs {
            classifier: Some((&probs, &labels)),
            disc_frontal: &d,
            disc_profile: &d,
            profile_embeddings: &e,
            frontal_embeddings: &e,
            pair_labels: &[PairLabel::Genuine, PairLabel::Genuine],
            margin: 1.0,
        })
        .unwrap();
        assert!((out.l_cls.unwrap() - 10f64.ln()).abs() < 1e-12);
        assert!((out.l_adv_d - 2.0 * LN_2).abs() < 1e-12);
        assert!((out.l_adv_g - LN_2).abs() < 1e-12);
        assert_eq!(out.l_cont, 0.0);
        assert!(cross_entropy_grad(&probs, &[10, 0]).is_err());
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::default().validate().is_ok());
        assert!(LossWeights {
            margin: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(LossWeights {
            lambda2: -1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
