//! Images, identities, manifests, balanced pair sampling and the synthetic
//! paired-domain generator.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::PairLabel;
use crate::rng;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Profile,
    Frontal,
}

impl Domain {
    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Profile => "profile",
            Domain::Frontal => "frontal",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "profile" => Ok(Domain::Profile),
            "frontal" => Ok(Domain::Frontal),
            other => Err(Error::Manifest(format!("unknown domain {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageSize {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageSize {
    pub fn rgb(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            channels: 3,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for ImageSize {
    fn default() -> Self {
        Self::rgb(64, 64)
    }
}

/// One image, HWC layout, values in [-1, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSample {
    pub pixels: Vec<f32>,
    pub size: ImageSize,
    pub identity: u32,
    pub domain: Domain,
    pub fold: u32,
    pub source_path: Option<PathBuf>,
}

impl ImageSample {
    pub fn validate(&self, expected: ImageSize) -> Result<()> {
        if self.size != expected || self.pixels.len() != expected.len() {
            return Err(Error::Shape(format!(
                "image of identity {} is {:?}, dataset expects {:?}",
                self.identity, self.size, expected
            )));
        }
        if let Some(v) = self.pixels.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("pixel value {v} outside [-1, 1]")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PairSample {
    pub profile: Arc<ImageSample>,
    pub frontal: Arc<ImageSample>,
    pub label: PairLabel,
}

#[derive(Clone, Debug)]
pub struct PairBatch {
    pub pairs: Vec<PairSample>,
}

impl PairBatch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn labels(&self) -> Vec<PairLabel> {
        self.pairs.iter().map(|p| p.label).collect()
    }

    pub fn profiles(&self) -> Vec<&[f32]> {
        self.pairs.iter().map(|p| p.profile.pixels.as_slice()).collect()
    }

    pub fn frontals(&self) -> Vec<&[f32]> {
        self.pairs.iter().map(|p| p.frontal.pixels.as_slice()).collect()
    }

    pub fn num_genuine(&self) -> usize {
        self.pairs.iter().filter(|p| p.label == PairLabel::Genuine).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub identity: u32,
    pub domain: Domain,
    pub fold: u32,
    /// Relative to the manifest's directory unless absolute.
    pub path: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestHeader {
    schema_version: u32,
    image_size: ImageSize,
    num_identities: usize,
    num_folds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    synthetic: Option<SyntheticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    version: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub image_size: ImageSize,
    pub num_identities: usize,
    pub num_folds: usize,
    /// Directory relative paths are resolved against.
    pub root: PathBuf,
    /// Generator settings when the dataset is synthetic.
    pub synthetic: Option<SyntheticSpec>,
}

impl DatasetManifest {
    /// Checks the structural invariants (not file existence).
    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Manifest("manifest has no entries".into()));
        }
        if self.image_size.is_empty() {
            return Err(Error::Manifest("image size must be positive".into()));
        }
        let mut fold_of: BTreeMap<u32, u32> = BTreeMap::new();
        let mut domains: BTreeMap<u32, (bool, bool)> = BTreeMap::new();
        for e in &self.entries {
            if e.fold as usize >= self.num_folds {
                return Err(Error::Manifest(format!(
                    "identity {} has fold {} but the manifest declares {} folds",
                    e.identity, e.fold, self.num_folds
                )));
            }
            if let Some(&f) = fold_of.get(&e.identity) {
                if f != e.fold {
                    return Err(Error::Manifest(format!(
                        "identity {} appears in folds {f} and {}",
                        e.identity, e.fold
                    )));
                }
            }
            fold_of.insert(e.identity, e.fold);
            let d = domains.entry(e.identity).or_default();
            match e.domain {
                Domain::Profile => d.0 = true,
                Domain::Frontal => d.1 = true,
            }
        }
        if let Some((id, _)) = domains.iter().find(|(_, (p, f))| !(*p && *f)) {
            return Err(Error::Manifest(format!(
                "identity {id} needs at least one profile and one frontal image"
            )));
        }
        if domains.len() != self.num_identities {
            return Err(Error::Manifest(format!(
                "header declares {} identities, entries contain {}",
                self.num_identities,
                domains.len()
            )));
        }
        Ok(())
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.root.join(&entry.path)
        }
    }

    /// Sorted identities whose fold is in `folds`.
    pub fn identities_in(&self, folds: &[u32]) -> Vec<u32> {
        let set: BTreeSet<u32> = self
            .entries
            .iter()
            .filter(|e| folds.contains(&e.fold))
            .map(|e| e.identity)
            .collect();
        set.into_iter().collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let header = ManifestHeader {
            schema_version: MANIFEST_SCHEMA_VERSION,
            image_size: self.image_size,
            num_identities: self.num_identities,
            num_folds: self.num_folds,
            synthetic: self.synthetic.clone(),
            version: Some(crate::VERSION.to_string()),
        };
        let mut buf = serde_json::to_vec(&header)?;
        buf.push(b'\n');
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(["identity", "domain", "fold", "path"])?;
            for e in &self.entries {
                let p = e
                    .path
                    .to_str()
                    .ok_or_else(|| Error::Manifest(format!("non UTF-8 path {:?}", e.path)))?;
                w.write_record([
                    e.identity.to_string(),
                    e.domain.to_string(),
                    e.fold.to_string(),
                    p.to_string(),
                ])?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        crate::io::write_atomic(path, &buf)
    }

    /// Parses and validates a manifest, including that every image exists.
    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = BufReader::new(file);
        let mut first = String::new();
        reader.read_line(&mut first).map_err(|e| Error::io(path, e))?;
        let header: ManifestHeader = serde_json::from_str(first.trim())
            .map_err(|e| Error::Manifest(format!("{}: bad header line: {e}", path.display())))?;
        if header.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported schema version {}",
                header.schema_version
            )));
        }
        let mut csv_reader = csv::Reader::from_reader(reader);
        let mut entries = Vec::new();
        for (i, rec) in csv_reader.records().enumerate() {
            let rec = rec?;
            if rec.len() != 4 {
                return Err(Error::Manifest(format!(
                    "record {} has {} fields, expected 4",
                    i + 1,
                    rec.len()
                )));
            }
            let bad = |what: &str| Error::Manifest(format!("record {}: malformed {what}", i + 1));
            entries.push(ManifestEntry {
                identity: rec[0].trim().parse().map_err(|_| bad("identity"))?,
                domain: rec[1].trim().parse()?,
                fold: rec[2].trim().parse().map_err(|_| bad("fold"))?,
                path: PathBuf::from(&rec[3]),
            });
        }
        let manifest = DatasetManifest {
            entries,
            image_size: header.image_size,
            num_identities: header.num_identities,
            num_folds: header.num_folds,
            root: path.parent().map(Path::to_path_buf).unwrap_or_default(),
            synthetic: header.synthetic,
        };
        manifest.validate()?;
        for e in &manifest.entries {
            let p = manifest.resolve(e);
            if !p.is_file() {
                return Err(Error::Manifest(format!("missing image file {}", p.display())));
            }
        }
        Ok(manifest)
    }
}

/// A manifest with every image decoded into memory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<Arc<ImageSample>>,
}

impl Dataset {
    pub fn load(manifest: DatasetManifest) -> Result<Self> {
        let mut samples = Vec::with_capacity(manifest.entries.len());
        for e in &manifest.entries {
            let path = manifest.resolve(e);
            let (size, bytes) = crate::io::read_png(&path)?;
            if size != manifest.image_size {
                return Err(Error::Manifest(format!(
                    "{} is {:?}, manifest declares {:?}",
                    path.display(),
                    size,
                    manifest.image_size
                )));
            }
            samples.push(Arc::new(ImageSample {
                pixels: bytes.iter().map(|&b| u8_to_pixel(b)).collect(),
                size,
                identity: e.identity,
                domain: e.domain,
                fold: e.fold,
                source_path: Some(path),
            }));
        }
        Ok(Self { manifest, samples })
    }

    pub fn open(path: &Path) -> Result<Self> {
        Self::load(DatasetManifest::load(path)?)
    }

    pub fn image_size(&self) -> ImageSize {
        self.manifest.image_size
    }

    /// Samples of one domain within the given folds, in manifest order.
    pub fn select(&self, domain: Domain, folds: &[u32]) -> Vec<Arc<ImageSample>> {
        self.samples
            .iter()
            .filter(|s| s.domain == domain && folds.contains(&s.fold))
            .cloned()
            .collect()
    }

    fn by_identity(&self, folds: &[u32]) -> BTreeMap<u32, (Vec<usize>, Vec<usize>)> {
        let mut map: BTreeMap<u32, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
        for (i, s) in self.samples.iter().enumerate() {
            if folds.contains(&s.fold) {
                let slot = map.entry(s.identity).or_default();
                match s.domain {
                    Domain::Profile => slot.0.push(i),
                    Domain::Frontal => slot.1.push(i),
                }
            }
        }
        map
    }
}

/// Draws ⌊B/2⌋ genuine pairs followed by ⌈B/2⌉ impostor pairs from the
/// identities of `folds`. Identities and views are drawn uniformly.
pub fn sample_pair_batch(
    dataset: &Dataset,
    folds: &[u32],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PairBatch> {
    if batch_size < 2 {
        return Err(Error::InvalidArgument(format!("batch size {batch_size} < 2")));
    }
    let groups: Vec<(Vec<usize>, Vec<usize>)> = dataset
        .by_identity(folds)
        .into_values()
        .filter(|(p, f)| !p.is_empty() && !f.is_empty())
        .collect();
    if groups.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "folds {folds:?} hold {} usable identities; impostor pairs need at least 2",
            groups.len()
        )));
    }
    let pick = |rng: &mut ChaCha8Rng, v: &[usize]| v[rng.random_range(0..v.len())];
    let mut pairs = Vec::with_capacity(batch_size);
    let genuine = batch_size / 2;
    for k in 0..batch_size {
        let a = rng.random_range(0..groups.len());
        let b = if k < genuine {
            a
        } else {
            let b = rng.random_range(0..groups.len() - 1);
            if b >= a {
                b + 1
            } else {
                b
            }
        };
        let profile = dataset.samples[pick(rng, &groups[a].0)].clone();
        let frontal = dataset.samples[pick(rng, &groups[b].1)].clone();
        let label = PairLabel::from_identities(profile.identity, frontal.identity);
        pairs.push(PairSample {
            profile,
            frontal,
            label,
        });
    }
    Ok(PairBatch { pairs })
}

pub fn pixel_to_u8(v: f32) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

pub fn u8_to_pixel(b: u8) -> f32 {
    b as f32 / 127.5 - 1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub num_identities: usize,
    pub views_per_domain: usize,
    pub image_height: usize,
    pub image_width: usize,
    /// Strength of the profile-domain perspective/shear warp, in [0, 1].
    pub warp_magnitude: f64,
    /// Half-width of the per-view gain and bias perturbation.
    pub illumination_jitter: f64,
    pub num_folds: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_identities: 30,
            views_per_domain: 8,
            image_height: 64,
            image_width: 64,
            warp_magnitude: 0.5,
            illumination_jitter: 0.1,
            num_folds: 5,
            seed: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.num_identities == 0 || self.views_per_domain == 0 {
            return fail("identities and views must be positive".into());
        }
        if self.num_folds == 0 {
            return fail("num_folds must be positive".into());
        }
        if self.num_identities < self.num_folds {
            return fail(format!(
                "{} identities cannot fill {} identity-disjoint folds",
                self.num_identities, self.num_folds
            ));
        }
        if self.image_height < 4 || self.image_width < 4 {
            return fail("image size must be at least 4x4".into());
        }
        if !(0.0..=1.0).contains(&self.warp_magnitude) {
            return fail(format!("warp_magnitude {} outside [0, 1]", self.warp_magnitude));
        }
        if !(self.illumination_jitter >= 0.0 && self.illumination_jitter.is_finite()) {
            return fail(format!("illumination_jitter {} must be >= 0", self.illumination_jitter));
        }
        Ok(())
    }

    pub fn image_size(&self) -> ImageSize {
        ImageSize::rgb(self.image_height, self.image_width)
    }
}

#[derive(Clone, Debug)]
enum Shape {
    Ellipse {
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
        angle: f64,
    },
    Stroke {
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        half_width: f64,
    },
}

#[derive(Clone, Debug)]
struct Primitive {
    shape: Shape,
    color: [f64; 3],
}

impl Primitive {
    /// Signed coverage in [0, 1] with a one-pixel soft edge.
    fn coverage(&self, x: f64, y: f64, edge: f64) -> f64 {
        let d = match self.shape {
            Shape::Ellipse { cx, cy, rx, ry, angle } => {
                let (s, c) = angle.sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                let u = (c * dx + s * dy) / rx;
                let v = (-s * dx + c * dy) / ry;
                // approximate signed distance in pixels
                ((u * u + v * v).sqrt() - 1.0) * rx.min(ry)
            }
            Shape::Stroke {
                x0,
                y0,
                x1,
                y1,
                half_width,
            } => {
                let (vx, vy) = (x1 - x0, y1 - y0);
                let t = (((x - x0) * vx + (y - y0) * vy) / (vx * vx + vy * vy)).clamp(0.0, 1.0);
                let (px, py) = (x0 + t * vx - x, y0 + t * vy - y);
                (px * px + py * py).sqrt() - half_width
            }
        };
        (0.5 - d / edge).clamp(0.0, 1.0)
    }
}

struct IdentityPattern {
    background: [f64; 3],
    primitives: Vec<Primitive>,
}

impl IdentityPattern {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let color = |rng: &mut ChaCha8Rng| {
            [
                rng.random_range(-0.9..0.9),
                rng.random_range(-0.9..0.9),
                rng.random_range(-0.9..0.9),
            ]
        };
        let background = {
            let c = color(rng);
            [c[0] * 0.3, c[1] * 0.3, c[2] * 0.3]
        };
        let count = rng.random_range(3..=6);
        let primitives = (0..count)
            .map(|_| {
                let shape = if rng.random_bool(0.6) {
                    Shape::Ellipse {
                        cx: rng.random_range(-0.6..0.6),
                        cy: rng.random_range(-0.6..0.6),
                        rx: rng.random_range(0.12..0.45),
                        ry: rng.random_range(0.12..0.45),
                        angle: rng.random_range(0.0..std::f64::consts::PI),
                    }
                } else {
                    Shape::Stroke {
                        x0: rng.random_range(-0.8..0.8),
                        y0: rng.random_range(-0.8..0.8),
                        x1: rng.random_range(-0.8..0.8),
                        y1: rng.random_range(-0.8..0.8),
                        half_width: rng.random_range(0.04..0.12),
                    }
                };
                Primitive {
                    shape,
                    color: color(rng),
                }
            })
            .collect();
        Self { background, primitives }
    }

    fn color_at(&self, x: f64, y: f64, edge: f64) -> [f64; 3] {
        let mut c = self.background;
        for p in &self.primitives {
            let a = p.coverage(x, y, edge);
            if a > 0.0 {
                for k in 0..3 {
                    c[k] = (1.0 - a) * c[k] + a * p.color[k];
                }
            }
        }
        c
    }
}

/// Source coordinate for output coordinate (x, y) under the profile warp.
pub fn profile_warp(x: f64, y: f64, w: f64) -> (f64, f64) {
    let den = 1.0 - 0.5 * w * x;
    ((x + 0.35 * w * y) / den, y / den)
}

/// Renders one view as 8-bit HWC RGB.
fn render_view(pattern: &IdentityPattern, spec: &SyntheticSpec, domain: Domain, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let (h, w) = (spec.image_height, spec.image_width);
    let j = spec.illumination_jitter;
    let gain = if j > 0.0 { 1.0 + rng.random_range(-j..=j) } else { 1.0 };
    let bias = if j > 0.0 { rng.random_range(-j..=j) } else { 0.0 };
    let edge = 2.0 / h.min(w) as f64;
    let mut out = Vec::with_capacity(h * w * 3);
    for r in 0..h {
        let y = (2.0 * r as f64 + 1.0) / h as f64 - 1.0;
        for c in 0..w {
            let x = (2.0 * c as f64 + 1.0) / w as f64 - 1.0;
            let (sx, sy) = match domain {
                Domain::Frontal => (x, y),
                Domain::Profile => profile_warp(x, y, spec.warp_magnitude),
            };
            for v in pattern.color_at(sx, sy, edge) {
                out.push(pixel_to_u8((gain * v + bias) as f32));
            }
        }
    }
    out
}

/// Renders the dataset into `out_dir` (PNG files plus `manifest.csv`) and
/// returns it decoded in memory. Identity `i` lands in fold `i % num_folds`.
pub fn generate_synthetic(spec: &SyntheticSpec, out_dir: &Path) -> Result<Dataset> {
    spec.validate()?;
    let img_dir = out_dir.join("images");
    fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let size = spec.image_size();
    let mut entries = Vec::new();
    let mut samples = Vec::new();
    for id in 0..spec.num_identities as u32 {
        let mut rng = rng::stream(spec.seed, &format!("synth.identity.{id}"));
        let pattern = IdentityPattern::new(&mut rng);
        let fold = id % spec.num_folds as u32;
        for domain in [Domain::Frontal, Domain::Profile] {
            for view in 0..spec.views_per_domain {
                let bytes = render_view(&pattern, spec, domain, &mut rng);
                let rel = PathBuf::from(format!("images/id{id:04}_{}{view:02}.png", &domain.as_str()[..1]));
                let path = out_dir.join(&rel);
                crate::io::write_png(&path, size, &bytes, &[])?;
                entries.push(ManifestEntry {
                    identity: id,
                    domain,
                    fold,
                    path: rel,
                });
                samples.push(Arc::new(ImageSample {
                    pixels: bytes.iter().map(|&b| u8_to_pixel(b)).collect(),
                    size,
                    identity: id,
                    domain,
                    fold,
                    source_path: Some(path),
                }));
            }
        }
    }
    let manifest = DatasetManifest {
        entries,
        image_size: size,
        num_identities: spec.num_identities,
        num_folds: spec.num_folds,
        root: out_dir.to_path_buf(),
        synthetic: Some(spec.clone()),
    };
    manifest.save(&out_dir.join("manifest.csv"))?;
    Ok(Dataset { manifest, samples })
}
