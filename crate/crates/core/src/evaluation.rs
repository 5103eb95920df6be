//! Verification and identification metrics in the shared embedding space,
//! fold protocols and the loss ablation harness.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::datamodel::{Dataset, Domain, ImageSample};
use crate::error::{Error, Result};
use crate::losses::{euclidean_distance, LossWeights};
use crate::networks::{ArchConfig, Encoder};
use crate::tensor::images_to_tensor;
use crate::trainer::{train_cpgan, TrainConfig};

/// FAR budgets reported by [`compute_verification`].
pub const FAR_BUDGETS: [f64; 2] = [0.01, 0.001];

/// Similarity scores, higher meaning more similar.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `(FAR, GAR)` from `(0, 0)` to `(1, 1)`.
    pub roc: Vec<(f64, f64)>,
    pub auc: f64,
    pub eer: f64,
    /// GAR at each FAR budget, keyed by the budget as written in [`FAR_BUDGETS`].
    pub gar_at_far: BTreeMap<String, f64>,
    /// Balanced accuracy at the threshold that maximizes it on the same scores
    /// (an optimistic convention).
    pub accuracy_at_best_threshold: f64,
    pub best_threshold: f64,
    /// Rank-k identification accuracies, `cmc[k - 1]`.
    pub cmc: Vec<f64>,
    pub num_genuine: usize,
    pub num_impostor: usize,
}

impl MetricsReport {
    pub fn gar_at(&self, far: f64) -> Option<f64> {
        self.gar_at_far.get(&far_key(far)).copied()
    }

    pub fn rank1(&self) -> Option<f64> {
        self.cmc.first().copied()
    }
}

fn far_key(far: f64) -> String {
    format!("{far}")
}

fn check_scores(s: &ScoreSet) -> Result<()> {
    if s.genuine.is_empty() || s.impostor.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "verification needs genuine and impostor scores (got {} and {})",
            s.genuine.len(),
            s.impostor.len()
        )));
    }
    if s.genuine.iter().chain(&s.impostor).any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    Ok(())
}

/// Threshold sweep: accept when `score >= t`, for every distinct score `t`
/// in decreasing order, preceded by the reject-all point.
struct Sweep {
    thresholds: Vec<f64>,
    far: Vec<f64>,
    gar: Vec<f64>,
}

fn sweep(s: &ScoreSet) -> Sweep {
    let mut all: Vec<(f64, bool)> = s
        .genuine
        .iter()
        .map(|&v| (v, true))
        .chain(s.impostor.iter().map(|&v| (v, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (ng, ni) = (s.genuine.len() as f64, s.impostor.len() as f64);
    let mut out = Sweep {
        thresholds: vec![f64::INFINITY],
        far: vec![0.0],
        gar: vec![0.0],
    };
    let (mut g, mut i) = (0usize, 0usize);
    let mut k = 0;
    while k < all.len() {
        let t = all[k].0;
        while k < all.len() && all[k].0 == t {
            if all[k].1 {
                g += 1;
            } else {
                i += 1;
            }
            k += 1;
        }
        out.thresholds.push(t);
        out.far.push(i as f64 / ni);
        out.gar.push(g as f64 / ng);
    }
    out
}

/// Linear interpolation of the FAR = FRR crossing along a sequence of
/// operating points ordered by decreasing threshold.
pub fn eer_from_curve(far: &[f64], frr: &[f64]) -> f64 {
    for k in 0..far.len() {
        let d1 = far[k] - frr[k];
        if d1 >= 0.0 {
            if k == 0 || d1 == 0.0 {
                return far[k];
            }
            let d0 = far[k - 1] - frr[k - 1];
            let a = -d0 / (d1 - d0);
            return far[k - 1] + a * (far[k] - far[k - 1]);
        }
    }
    far.last().copied().unwrap_or(1.0)
}

/// ROC, AUC, EER, GAR@FAR and best balanced accuracy from raw scores.
pub fn compute_verification(scores: &ScoreSet) -> Result<MetricsReport> {
    check_scores(scores)?;
    let sw = sweep(scores);
    let frr: Vec<f64> = sw.gar.iter().map(|g| 1.0 - g).collect();
    let eer = eer_from_curve(&sw.far, &frr);
    let auc = sw
        .far
        .windows(2)
        .zip(sw.gar.windows(2))
        .map(|(f, g)| (f[1] - f[0]) * (g[1] + g[0]) / 2.0)
        .sum();
    let gar_at_far = FAR_BUDGETS
        .iter()
        .map(|&b| {
            let best = sw
                .far
                .iter()
                .zip(&sw.gar)
                .filter(|(f, _)| **f <= b)
                .map(|(_, g)| *g)
                .fold(0.0, f64::max);
            (far_key(b), best)
        })
        .collect();
    let (mut best_acc, mut best_t) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..sw.far.len() {
        let acc = (sw.gar[k] + 1.0 - sw.far[k]) / 2.0;
        if acc > best_acc {
            best_acc = acc;
            best_t = sw.thresholds[k];
        }
    }
    Ok(MetricsReport {
        roc: sw.far.iter().copied().zip(sw.gar.iter().copied()).collect(),
        auc,
        eer,
        gar_at_far,
        accuracy_at_best_threshold: best_acc,
        best_threshold: best_t,
        cmc: Vec::new(),
        num_genuine: scores.genuine.len(),
        num_impostor: scores.impostor.len(),
    })
}

/// Rank-k accuracies for probes against a gallery holding exactly one
/// embedding per identity. Ties go to the earlier gallery entry.
pub fn compute_identification(probes: &[(Vec<f32>, u32)], gallery: &[(Vec<f32>, u32)]) -> Result<Vec<f64>> {
    if probes.is_empty() || gallery.is_empty() {
        return Err(Error::InvalidArgument(
            "identification needs probes and a gallery".into(),
        ));
    }
    let mut seen = BTreeSet::new();
    for (_, id) in gallery {
        if !seen.insert(*id) {
            return Err(Error::InvalidArgument(format!("gallery holds identity {id} twice")));
        }
    }
    let mut hits = vec![0usize; gallery.len()];
    for (emb, id) in probes {
        let true_idx = gallery
            .iter()
            .position(|(_, g)| g == id)
            .ok_or_else(|| Error::InvalidArgument(format!("probe identity {id} missing from gallery")))?;
        let dists: Vec<f64> = gallery.iter().map(|(g, _)| euclidean_distance(emb, g)).collect();
        let dt = dists[true_idx];
        let rank = dists
            .iter()
            .enumerate()
            .filter(|&(j, &d)| d < dt || (d == dt && j < true_idx))
            .count();
        hits[rank] += 1;
    }
    let n = probes.len() as f64;
    let mut acc = 0usize;
    Ok(hits
        .iter()
        .map(|h| {
            acc += h;
            acc as f64 / n
        })
        .collect())
}

/// The profile encoder z1 and frontal encoder z2 of any trained model.
#[derive(Clone, Debug)]
pub struct CoupledEncoders {
    pub profile: Encoder<f32>,
    pub frontal: Encoder<f32>,
}

/// Images are pushed through the encoders in chunks of this size.
const EMBED_CHUNK: usize = 64;

impl CoupledEncoders {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let arch = &ck.header.arch;
        arch.validate()?;
        let mut enc = Self {
            profile: Encoder::seeded("profile.encoder", arch, 0),
            frontal: Encoder::seeded("frontal.encoder", arch, 0),
        };
        ck.load_network(&mut enc.profile)?;
        ck.load_network(&mut enc.frontal)?;
        Ok(enc)
    }

    pub fn arch(&self) -> &ArchConfig {
        self.profile.arch()
    }

    pub fn encoder(&self, domain: Domain) -> &Encoder<f32> {
        match domain {
            Domain::Profile => &self.profile,
            Domain::Frontal => &self.frontal,
        }
    }

    /// Embeds images of one domain with that domain's encoder.
    pub fn embed(&self, domain: Domain, images: &[&[f32]]) -> Result<Vec<Vec<f32>>> {
        let a = self.arch();
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(EMBED_CHUNK) {
            let x = images_to_tensor::<f32>(chunk, a.image_height, a.image_width, a.image_channels)?;
            out.extend(self.encoder(domain).encode(&x)?.vectors());
        }
        Ok(out)
    }

    fn embed_samples(&self, domain: Domain, samples: &[std::sync::Arc<ImageSample>]) -> Result<Vec<Vec<f32>>> {
        let imgs: Vec<&[f32]> = samples.iter().map(|s| s.pixels.as_slice()).collect();
        self.embed(domain, &imgs)
    }
}

fn check_test_folds(dataset: &Dataset, test_folds: &[u32]) -> Result<()> {
    if test_folds.is_empty() || dataset.manifest.identities_in(test_folds).is_empty() {
        return Err(Error::InsufficientData(format!("test folds {test_folds:?} are empty")));
    }
    Ok(())
}

/// Scores every cross-domain (profile, frontal) pair of the test folds by
/// `−‖z1 − z2‖`. The score is not symmetric in the two encoders.
pub fn score_pairs(model: &CoupledEncoders, dataset: &Dataset, test_folds: &[u32]) -> Result<ScoreSet> {
    check_test_folds(dataset, test_folds)?;
    let profiles = dataset.select(Domain::Profile, test_folds);
    let frontals = dataset.select(Domain::Frontal, test_folds);
    let zp = model.embed_samples(Domain::Profile, &profiles)?;
    let zf = model.embed_samples(Domain::Frontal, &frontals)?;
    let mut s = ScoreSet::default();
    for (p, a) in profiles.iter().zip(&zp) {
        for (f, b) in frontals.iter().zip(&zf) {
            let score = -euclidean_distance(a, b);
            if p.identity == f.identity {
                s.genuine.push(score);
            } else {
                s.impostor.push(score);
            }
        }
    }
    Ok(s)
}

/// Probes are all test-fold profiles; the gallery is the first frontal image
/// of each test identity in manifest order.
pub fn identification_cmc(model: &CoupledEncoders, dataset: &Dataset, test_folds: &[u32]) -> Result<Vec<f64>> {
    check_test_folds(dataset, test_folds)?;
    let profiles = dataset.select(Domain::Profile, test_folds);
    let mut seen = BTreeSet::new();
    let gallery: Vec<_> = dataset
        .select(Domain::Frontal, test_folds)
        .into_iter()
        .filter(|s| seen.insert(s.identity))
        .collect();
    let zp = model.embed_samples(Domain::Profile, &profiles)?;
    let zg = model.embed_samples(Domain::Frontal, &gallery)?;
    let probes: Vec<_> = zp.into_iter().zip(profiles.iter().map(|s| s.identity)).collect();
    let gal: Vec<_> = zg.into_iter().zip(gallery.iter().map(|s| s.identity)).collect();
    compute_identification(&probes, &gal)
}

/// Verification plus identification on the test folds.
pub fn evaluate(model: &CoupledEncoders, dataset: &Dataset, test_folds: &[u32]) -> Result<MetricsReport> {
    let mut r = compute_verification(&score_pairs(model, dataset, test_folds)?)?;
    r.cmc = identification_cmc(model, dataset, test_folds)?;
    Ok(r)
}

pub fn evaluate_checkpoint(ck: &Checkpoint, dataset: &Dataset, test_folds: &[u32]) -> Result<MetricsReport> {
    evaluate(&CoupledEncoders::from_checkpoint(ck)?, dataset, test_folds)
}

/// The three objective variants compared by the ablation.
pub fn ablation_variants(full: &LossWeights) -> Vec<(&'static str, LossWeights)> {
    vec![
        (
            "cpl+l2",
            LossWeights {
                lambda1: 0.0,
                lambda2: 0.0,
                ..*full
            },
        ),
        ("cpl+l2+gan", LossWeights { lambda2: 0.0, ..*full }),
        ("full", *full),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub report: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub name: String,
    pub weights: LossWeights,
    pub runs: Vec<SeedResult>,
    pub median_auc: f64,
    pub median_eer: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub version: String,
    pub config: TrainConfig,
    pub test_folds: Vec<u32>,
    pub variants: Vec<VariantReport>,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

impl VariantReport {
    pub fn from_runs(name: &str, weights: LossWeights, runs: Vec<SeedResult>) -> Self {
        let aucs: Vec<f64> = runs.iter().map(|r| r.report.auc).collect();
        let eers: Vec<f64> = runs.iter().map(|r| r.report.eer).collect();
        Self {
            name: name.to_string(),
            weights,
            median_auc: median(&aucs),
            median_eer: median(&eers),
            runs,
        }
    }
}

/// Trains every ablation variant once per seed with otherwise identical
/// settings, and evaluates each on `test_folds`.
pub fn run_ablation(
    dataset: &Dataset,
    base: &TrainConfig,
    seeds: &[u64],
    test_folds: &[u32],
    out_dir: Option<&Path>,
) -> Result<AblationReport> {
    base.validate()?;
    if seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    let mut variants = Vec::new();
    for (name, weights) in ablation_variants(&base.weights) {
        let mut runs = Vec::new();
        for &seed in seeds {
            let cfg = TrainConfig {
                seed,
                weights,
                ..base.clone()
            };
            let run_dir = out_dir.map(|d| d.join(format!("{name}-seed{seed}")));
            let outcome = train_cpgan(dataset, &cfg, run_dir.as_deref())?;
            let report = evaluate_checkpoint(&outcome.checkpoint, dataset, test_folds)?;
            info!(
                "ablation {name} seed {seed}: auc {:.4} eer {:.4}",
                report.auc, report.eer
            );
            runs.push(SeedResult { seed, report });
        }
        variants.push(VariantReport::from_runs(name, weights, runs));
    }
    let report = AblationReport {
        version: crate::VERSION.to_string(),
        config: base.clone(),
        test_folds: test_folds.to_vec(),
        variants,
    };
    if let Some(d) = out_dir {
        write_ablation(&report, d)?;
    }
    Ok(report)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n − 1); zero for a single fold.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub test_folds: Vec<u32>,
    pub train_folds: Vec<u32>,
    pub report: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KFoldReport {
    pub folds: Vec<FoldResult>,
    pub auc: MeanStd,
    pub eer: MeanStd,
    pub accuracy: MeanStd,
    pub rank1: MeanStd,
    pub gar_at_far: BTreeMap<String, MeanStd>,
}

impl KFoldReport {
    pub fn aggregate(folds: Vec<FoldResult>) -> Self {
        let col =
            |f: &dyn Fn(&MetricsReport) -> f64| MeanStd::of(&folds.iter().map(|r| f(&r.report)).collect::<Vec<_>>());
        let gar_at_far = FAR_BUDGETS
            .iter()
            .map(|&b| (far_key(b), col(&|r| r.gar_at(b).unwrap_or(f64::NAN))))
            .collect();
        Self {
            auc: col(&|r| r.auc),
            eer: col(&|r| r.eer),
            accuracy: col(&|r| r.accuracy_at_best_threshold),
            rank1: col(&|r| r.rank1().unwrap_or(f64::NAN)),
            gar_at_far,
            folds,
        }
    }
}

/// Groups the manifest's folds into `num_folds` protocol folds (manifest
/// fold `f` goes to group `f % num_folds`), then trains on all groups but
/// `i` and tests on group `i`, for every `i`.
pub fn kfold_evaluate<F>(dataset: &Dataset, config: &TrainConfig, num_folds: usize, mut train: F) -> Result<KFoldReport>
where
    F: FnMut(&Dataset, &TrainConfig) -> Result<Checkpoint>,
{
    let available = dataset.manifest.num_folds;
    if num_folds < 2 || num_folds > available {
        return Err(Error::InsufficientData(format!(
            "{num_folds}-fold protocol needs between 2 and {available} manifest folds"
        )));
    }
    let mut results = Vec::with_capacity(num_folds);
    for i in 0..num_folds {
        let (test, train_folds): (Vec<u32>, Vec<u32>) =
            (0..available as u32).partition(|f| *f as usize % num_folds == i);
        let cfg = TrainConfig {
            train_folds: train_folds.clone(),
            ..config.clone()
        };
        let ck = train(dataset, &cfg)?;
        let report = evaluate_checkpoint(&ck, dataset, &test)?;
        info!("fold {i}: auc {:.4} eer {:.4}", report.auc, report.eer);
        results.push(FoldResult {
            test_folds: test,
            train_folds,
            report,
        });
    }
    Ok(KFoldReport::aggregate(results))
}

/// `far,gar` rows of one ROC.
pub fn roc_csv(report: &MetricsReport) -> String {
    let mut s = String::from("far,gar\n");
    for (f, g) in &report.roc {
        let _ = writeln!(s, "{f},{g}");
    }
    s
}

pub fn cmc_csv(report: &MetricsReport) -> String {
    let mut s = String::from("rank,accuracy\n");
    for (k, a) in report.cmc.iter().enumerate() {
        let _ = writeln!(s, "{},{a}", k + 1);
    }
    s
}

/// Long-format ROC table for several labeled curves: `series,far,gar`.
pub fn combined_roc_csv(series: &[(String, &MetricsReport)]) -> String {
    let mut s = String::from("series,far,gar\n");
    for (name, r) in series {
        for (f, g) in &r.roc {
            let _ = writeln!(s, "{name},{f},{g}");
        }
    }
    s
}

/// Minimal SVG line chart of several ROC curves.
pub fn roc_svg(series: &[(String, &MetricsReport)], title: &str) -> String {
    const W: f64 = 480.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let (pw, ph) = (W - 2.0 * M, H - 2.0 * M);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#,
        W / 2.0,
        xml_escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{M}" y="{M}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for t in 0..=4 {
        let v = t as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{v}</text>"#,
            M + v * pw,
            H - M + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{v}</text>"#,
            M - 6.0,
            H - M - v * ph + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">FAR</text>"#,
        W / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">GAR</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (i, (name, r)) in series.iter().enumerate() {
        let c = colors[i % colors.len()];
        let pts: Vec<String> = r
            .roc
            .iter()
            .map(|(f, g)| format!("{:.2},{:.2}", M + f * pw, H - M - g * ph))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        let y = M + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{y}" fill="{c}">{} (AUC {:.3})</text>"#,
            M + pw * 0.45,
            xml_escape(name),
            r.auc
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    crate::io::write_atomic(path, text.as_bytes())
}

/// Writes `<stem>.json`, `<stem>_roc.csv` and `<stem>_cmc.csv`. `config`
/// is embedded in the JSON for provenance.
pub fn write_metrics(report: &MetricsReport, config: &serde_json::Value, dir: &Path, stem: &str) -> Result<()> {
    let doc = serde_json::json!({
        "version": crate::VERSION,
        "config": config,
        "metrics": report,
    });
    write_text(&dir.join(format!("{stem}.json")), &serde_json::to_string_pretty(&doc)?)?;
    write_text(&dir.join(format!("{stem}_roc.csv")), &roc_csv(report))?;
    write_text(&dir.join(format!("{stem}_cmc.csv")), &cmc_csv(report))
}

/// `ablation.json`, one ROC CSV per variant and seed, the combined table and an SVG chart.
pub fn write_ablation(report: &AblationReport, dir: &Path) -> Result<()> {
    write_text(&dir.join("ablation.json"), &serde_json::to_string_pretty(report)?)?;
    let mut series = Vec::new();
    for v in &report.variants {
        for r in &v.runs {
            write_text(
                &dir.join(format!("roc_{}_seed{}.csv", v.name, r.seed)),
                &roc_csv(&r.report),
            )?;
            series.push((format!("{} seed {}", v.name, r.seed), &r.report));
        }
    }
    write_text(&dir.join("ablation_roc.csv"), &combined_roc_csv(&series))?;
    // chart shows the first seed of each variant
    let first: Vec<(String, &MetricsReport)> = report
        .variants
        .iter()
        .filter_map(|v| v.runs.first().map(|r| (v.name.clone(), &r.report)))
        .collect();
    write_text(&dir.join("ablation_roc.svg"), &roc_svg(&first, "Loss ablation"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(g: &[f64], i: &[f64]) -> ScoreSet {
        ScoreSet {
            genuine: g.to_vec(),
            impostor: i.to_vec(),
        }
    }

    #[test]
    fn perfect_separation() {
        let r = compute_verification(&set(&[1.0, 1.0, 1.0], &[0.0, 0.0, 0.0])).unwrap();
        assert_eq!(r.eer, 0.0);
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.gar_at(0.01), Some(1.0));
        assert_eq!(r.accuracy_at_best_threshold, 1.0);
        assert_eq!(r.roc.first(), Some(&(0.0, 0.0)));
        assert_eq!(r.roc.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn hand_case_eer_is_one_third() {
        let r = compute_verification(&set(&[0.9, 0.8, 0.4], &[0.7, 0.3, 0.2])).unwrap();
        assert!((r.eer - 1.0 / 3.0).abs() < 1e-12);
        // 8 of 9 genuine/impostor orderings are correct
        assert!((r.auc - 8.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn all_ties_give_chance() {
        let r = compute_verification(&set(&[0.5; 4], &[0.5; 3])).unwrap();
        assert!((r.auc - 0.5).abs() < 1e-12);
        assert!((r.eer - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_scores_rejected() {
        assert!(compute_verification(&set(&[], &[1.0])).is_err());
        assert!(compute_verification(&set(&[1.0], &[])).is_err());
    }

    #[test]
    fn identification_hand_cases() {
        let g = vec![(vec![0.0f32, 0.0], 0u32), (vec![1.0, 0.0], 1), (vec![0.0, 1.0], 2)];
        let probes = vec![(vec![0.1f32, 0.0], 0u32), (vec![0.9, 0.1], 1), (vec![0.9, 0.2], 2)];
        let cmc = compute_identification(&probes, &g).unwrap();
        assert!((cmc[0] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(cmc[2], 1.0);
        let one = compute_identification(&[(vec![5.0f32], 3)], &[(vec![0.0f32], 3)]).unwrap();
        assert_eq!(one, vec![1.0]);
        assert!(compute_identification(&[(vec![5.0f32], 4)], &[(vec![0.0f32], 3)]).is_err());
    }

    #[test]
    fn ties_break_by_gallery_order() {
        let g = vec![(vec![1.0f32], 0u32), (vec![-1.0], 1)];
        let cmc = compute_identification(&[(vec![0.0f32], 1)], &g).unwrap();
        assert_eq!(cmc, vec![0.0, 1.0]);
    }

    #[test]
    fn mean_std() {
        let m = MeanStd::of(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m.mean - 2.5).abs() < 1e-12);
        assert!((m.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn svg_and_csv_render() {
        let r = compute_verification(&set(&[0.9, 0.8, 0.4], &[0.7, 0.3, 0.2])).unwrap();
        let svg = roc_svg(&[("a<b".into(), &r)], "t");
        assert!(svg.starts_with("<svg") && svg.contains("a&lt;b"));
        assert_eq!(roc_csv(&r).lines().count(), r.roc.len() + 1);
    }
}
