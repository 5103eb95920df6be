//! Cross-decoder reconstruction: one domain's encoder feeding the other
//! domain's decoder, plus identity-preservation checks on the outputs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, ModelKind};
use crate::datamodel::{pixel_to_u8, Dataset, Domain, ImageSize};
use crate::error::{Error, Result};
use crate::networks::{ArchConfig, Generator, SkipPolicy};
use crate::tensor::{images_to_tensor, tensor_to_image};

const CHUNK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Profile encoder into the frontal decoder.
    P2f,
    /// Frontal encoder into the profile decoder.
    F2p,
}

impl Direction {
    pub fn source(self) -> Domain {
        match self {
            Direction::P2f => Domain::Profile,
            Direction::F2p => Domain::Frontal,
        }
    }

    pub fn target(self) -> Domain {
        match self {
            Direction::P2f => Domain::Frontal,
            Direction::F2p => Domain::Profile,
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p2f" => Ok(Direction::P2f),
            "f2p" => Ok(Direction::F2p),
            other => Err(Error::Config(format!(
                "unknown direction {other:?} (expected p2f or f2p)"
            ))),
        }
    }
}

/// Both generators of a coupled GAN, used for inference only.
#[derive(Clone, Debug)]
pub struct CrossDecoder {
    pub profile: Generator<f32>,
    pub frontal: Generator<f32>,
}

impl CrossDecoder {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.header.model != ModelKind::Cpgan {
            return Err(Error::Config(format!(
                "cross-decoding needs a cpgan checkpoint (with decoders), got {}",
                ck.header.model.as_str()
            )));
        }
        let arch = &ck.header.arch;
        arch.validate()?;
        let mut cd = Self::untrained(arch, 0);
        ck.load_network(&mut cd.profile)?;
        ck.load_network(&mut cd.frontal)?;
        Ok(cd)
    }

    /// Randomly initialized generators, as a chance-level control.
    pub fn untrained(arch: &ArchConfig, seed: u64) -> Self {
        Self {
            profile: Generator::new("profile", arch, seed),
            frontal: Generator::new("frontal", arch, seed),
        }
    }

    pub fn arch(&self) -> &ArchConfig {
        self.profile.arch()
    }

    pub fn generator(&self, domain: Domain) -> &Generator<f32> {
        match domain {
            Domain::Profile => &self.profile,
            Domain::Frontal => &self.frontal,
        }
    }

    /// Encodes with `from`'s encoder and decodes with `to`'s decoder. HWC
    /// images in, HWC images out.
    pub fn translate(&self, from: Domain, to: Domain, images: &[&[f32]], policy: SkipPolicy) -> Result<Vec<Vec<f32>>> {
        let a = self.arch();
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(CHUNK) {
            let x = images_to_tensor::<f32>(chunk, a.image_height, a.image_width, a.image_channels)?;
            let enc = self.generator(from).encode(&x)?;
            let y = self.generator(to).decode(&enc, policy)?;
            out.extend((0..chunk.len()).map(|n| tensor_to_image(&y, n)));
        }
        Ok(out)
    }

    pub fn cross(&self, direction: Direction, images: &[&[f32]], policy: SkipPolicy) -> Result<Vec<Vec<f32>>> {
        self.translate(direction.source(), direction.target(), images, policy)
    }

    pub fn frontalize(&self, profiles: &[&[f32]], zero_skips: bool) -> Result<Vec<Vec<f32>>> {
        self.cross(Direction::P2f, profiles, SkipPolicy::from_zero_skips(zero_skips))
    }

    pub fn profilize(&self, frontals: &[&[f32]], zero_skips: bool) -> Result<Vec<Vec<f32>>> {
        self.cross(Direction::F2p, frontals, SkipPolicy::from_zero_skips(zero_skips))
    }
}

fn mse(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| ((x - y) as f64).powi(2)).sum::<f64>() / a.len() as f64
}

/// Mean pairwise squared pixel distance between two image sets.
fn mean_distance(a: &[Vec<f32>], b: &[&[f32]]) -> f64 {
    let total: f64 = a.iter().flat_map(|x| b.iter().map(move |y| mse(x, y))).sum();
    total / (a.len() * b.len()) as f64
}

fn by_identity<'a>(dataset: &'a Dataset, domain: Domain, folds: &[u32]) -> BTreeMap<u32, Vec<&'a [f32]>> {
    let mut m: BTreeMap<u32, Vec<&[f32]>> = BTreeMap::new();
    for s in dataset
        .samples
        .iter()
        .filter(|s| s.domain == domain && folds.contains(&s.fold))
    {
        m.entry(s.identity).or_default().push(s.pixels.as_slice());
    }
    m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyReport {
    pub direction: Direction,
    pub skip_policy: SkipPolicy,
    /// Fraction of identities whose translated images are, on average,
    /// nearest to that identity's own target-domain images.
    pub success_rate: f64,
    pub chance: f64,
    /// `(identity, nearest identity)`.
    pub nearest: Vec<(u32, u32)>,
}

/// Identity-preservation proxy on the held-out folds.
pub fn identity_proxy(
    model: &CrossDecoder,
    dataset: &Dataset,
    test_folds: &[u32],
    direction: Direction,
    policy: SkipPolicy,
) -> Result<ProxyReport> {
    let sources = by_identity(dataset, direction.source(), test_folds);
    let targets = by_identity(dataset, direction.target(), test_folds);
    if targets.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "identity proxy needs at least 2 test identities, folds {test_folds:?} have {}",
            targets.len()
        )));
    }
    let mut nearest = Vec::with_capacity(sources.len());
    for (&id, imgs) in &sources {
        let translated = model.translate(direction.source(), direction.target(), imgs, policy)?;
        let best = targets
            .iter()
            .map(|(&j, t)| (mean_distance(&translated, t), j))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("at least two identities")
            .1;
        nearest.push((id, best));
    }
    let hits = nearest.iter().filter(|(a, b)| a == b).count();
    Ok(ProxyReport {
        direction,
        skip_policy: policy,
        success_rate: hits as f64 / nearest.len() as f64,
        chance: 1.0 / targets.len() as f64,
        nearest,
    })
}

/// Fraction of test identities whose profilized frontals lie closer to the
/// identity's true profiles than its frontalized profiles do.
pub fn warp_consistency(
    model: &CrossDecoder,
    dataset: &Dataset,
    test_folds: &[u32],
    policy: SkipPolicy,
) -> Result<f64> {
    let profiles = by_identity(dataset, Domain::Profile, test_folds);
    let frontals = by_identity(dataset, Domain::Frontal, test_folds);
    if profiles.is_empty() {
        return Err(Error::InsufficientData(format!("test folds {test_folds:?} are empty")));
    }
    let mut hits = 0usize;
    for (id, p) in &profiles {
        let f = frontals
            .get(id)
            .ok_or_else(|| Error::InsufficientData(format!("identity {id} has no frontal test images")))?;
        let profilized = model.cross(Direction::F2p, f, policy)?;
        let frontalized = model.cross(Direction::P2f, p, policy)?;
        hits += usize::from(mean_distance(&profilized, p) < mean_distance(&frontalized, p));
    }
    Ok(hits as f64 / profiles.len() as f64)
}

/// Writes HWC images in row-major order on a grid with `columns` columns;
/// pass (input, output) pairs flattened so odd columns hold the inputs.
/// Pixels map linearly from [-1, 1] to [0, 255] with clamping.
pub fn emit_grid(
    images: &[Vec<f32>],
    size: ImageSize,
    columns: usize,
    path: &Path,
    config: &serde_json::Value,
) -> Result<()> {
    if images.is_empty() {
        return Err(Error::InvalidArgument("emit_grid needs at least one image".into()));
    }
    if columns == 0 {
        return Err(Error::InvalidArgument("emit_grid needs at least one column".into()));
    }
    if let Some(i) = images.iter().position(|im| im.len() != size.len()) {
        return Err(Error::Shape(format!("grid image {i} does not match {size:?}")));
    }
    let rows = images.len().div_ceil(columns);
    let grid = ImageSize::rgb(rows * size.height, columns * size.width);
    let mut rgb = vec![0u8; grid.len()];
    for (k, im) in images.iter().enumerate() {
        let (r, c) = (k / columns, k % columns);
        for y in 0..size.height {
            for x in 0..size.width {
                let src = (y * size.width + x) * 3;
                let dst = ((r * size.height + y) * grid.width + c * size.width + x) * 3;
                for ch in 0..3 {
                    rgb[dst + ch] = pixel_to_u8(im[src + ch]);
                }
            }
        }
    }
    let text = [
        ("cpgan-version", crate::VERSION.to_string()),
        ("cpgan-config", serde_json::to_string(config)?),
    ];
    let text: Vec<(&str, &str)> = text.iter().map(|(k, v)| (*k, v.as_str())).collect();
    crate::io::write_png(path, grid, &rgb, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{read_png, read_png_text};

    fn tiny() -> ArchConfig {
        ArchConfig {
            image_height: 16,
            image_width: 16,
            ..ArchConfig::tiny()
        }
    }

    fn image(seed: f32) -> Vec<f32> {
        (0..16 * 16 * 3).map(|i| (i as f32 * 0.37 + seed).sin() * 0.9).collect()
    }

    #[test]
    fn shapes_range_and_policy() {
        let cd = CrossDecoder::untrained(&tiny(), 4);
        let x = image(0.3);
        let a = cd.frontalize(&[&x], false).unwrap();
        let b = cd.frontalize(&[&x], true).unwrap();
        assert_eq!(a[0].len(), x.len());
        assert_eq!(b[0].len(), x.len());
        assert!(a[0].iter().all(|v| v.is_finite() && v.abs() < 1.0));
        assert_ne!(a, b);
        assert_eq!(cd.profilize(&[&x], false).unwrap(), cd.profilize(&[&x], false).unwrap());
    }

    #[test]
    fn same_domain_translation_is_reconstruction() {
        let cd = CrossDecoder::untrained(&tiny(), 9);
        let x = image(1.1);
        let t = images_to_tensor::<f32>(&[&x], 16, 16, 3).unwrap();
        let (recon, _) = cd.frontal.forward(&t).unwrap();
        let via = cd
            .translate(Domain::Frontal, Domain::Frontal, &[&x], SkipPolicy::Source)
            .unwrap();
        assert_eq!(via[0], tensor_to_image(&recon, 0));
    }

    #[test]
    fn grid_layout_and_metadata() {
        let size = ImageSize::rgb(2, 3);
        let imgs: Vec<Vec<f32>> = (0..16).map(|k| vec![k as f32 / 8.0 - 1.0; size.len()]).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        emit_grid(&imgs, size, 4, &path, &serde_json::json!({"seed": 1})).unwrap();
        let (s, bytes) = read_png(&path).unwrap();
        assert_eq!((s.height, s.width), (8, 12));
        // row 1, column 2 holds image 6
        assert_eq!(bytes[(2 * 12 + 6) * 3], pixel_to_u8(6.0 / 8.0 - 1.0));
        let text = read_png_text(&path).unwrap();
        assert!(text.iter().any(|(k, v)| k == "cpgan-config" && v.contains("seed")));
        assert!(emit_grid(&[], size, 4, &path, &serde_json::Value::Null).is_err());
    }

    #[test]
    fn pixel_map_clamps() {
        assert_eq!(pixel_to_u8(-3.0), 0);
        assert_eq!(pixel_to_u8(1.0), 255);
        assert_eq!(pixel_to_u8(2.0), 255);
        assert_eq!(pixel_to_u8(0.0), 128);
    }
}
