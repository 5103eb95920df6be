//! Binary checkpoint container.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header, then every tensor as little-endian `f32` in header order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::Parameterized;
use crate::networks::ArchConfig;
use crate::optim::Adam;
use crate::rng::RngState;
use crate::tensor::Real;

pub const MAGIC: &[u8; 8] = b"CPGANCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Cpgan,
    Cpcnn,
    Adda,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cpgan => "cpgan",
            ModelKind::Cpcnn => "cpcnn",
            ModelKind::Adda => "adda",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cpgan" => Ok(ModelKind::Cpgan),
            "cpcnn" => Ok(ModelKind::Cpcnn),
            "adda" => Ok(ModelKind::Adda),
            other => Err(Error::Config(format!(
                "unknown model {other:?} (expected cpgan, cpcnn or adda)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub model: ModelKind,
    /// Software version that wrote the file.
    pub version: String,
    pub arch: ArchConfig,
    /// Effective run configuration.
    pub config: serde_json::Value,
    pub epoch: u64,
    pub step: u64,
    pub rng: Option<RngState>,
    /// Adam step counters and hyper-parameters by optimizer name.
    pub optimizers: BTreeMap<String, serde_json::Value>,
    /// Model-specific metadata.
    pub extra: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    data: BTreeMap<String, Vec<f32>>,
}

#[derive(Serialize, Deserialize)]
struct AdamMeta {
    config: crate::optim::AdamConfig,
    step: u64,
    sizes: Vec<usize>,
}

impl Checkpoint {
    pub fn new(model: ModelKind, arch: ArchConfig, config: serde_json::Value) -> Self {
        Self {
            header: CheckpointHeader {
                model,
                version: crate::VERSION.to_string(),
                arch,
                config,
                epoch: 0,
                step: 0,
                rng: None,
                optimizers: BTreeMap::new(),
                extra: serde_json::Value::Null,
                tensors: Vec::new(),
            },
            data: BTreeMap::new(),
        }
    }

    pub fn put(&mut self, name: &str, shape: Vec<usize>, values: Vec<f32>) {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        if self.data.insert(name.to_string(), values).is_none() {
            self.header.tensors.push(TensorEntry {
                name: name.to_string(),
                shape,
            });
        }
    }

    pub fn get(&self, name: &str) -> Option<(&[usize], &[f32])> {
        let e = self.header.tensors.iter().find(|e| e.name == name)?;
        Some((&e.shape, self.data.get(name)?))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.data.contains_key(name)
    }

    /// Stores every parameter of `net` under its own name.
    pub fn put_network<T: Real, N: Parameterized<T> + ?Sized>(&mut self, net: &N) {
        for p in net.params() {
            self.put(
                &p.name,
                p.shape.clone(),
                p.value.iter().map(|v| v.to_f64() as f32).collect(),
            );
        }
    }

    /// Restores every parameter of `net`, checking names and shapes.
    pub fn load_network<T: Real, N: Parameterized<T> + ?Sized>(&self, net: &mut N) -> Result<()> {
        for p in net.params_mut() {
            let (shape, values) = self
                .get(&p.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {}", p.name)))?;
            if shape != p.shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} has shape {:?}, network expects {:?}",
                    p.name, shape, p.shape
                )));
            }
            p.value = values.iter().map(|&v| T::from_f64(v as f64)).collect();
        }
        Ok(())
    }

    /// Same as [`Checkpoint::load_network`] but maps parameter names with
    /// `rename` first, e.g. to initialize one encoder from another.
    pub fn load_network_renamed<T: Real, N: Parameterized<T> + ?Sized>(
        &self,
        net: &mut N,
        rename: impl Fn(&str) -> String,
    ) -> Result<()> {
        for p in net.params_mut() {
            let src = rename(&p.name);
            let (shape, values) = self
                .get(&src)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {src}")))?;
            if shape != p.shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "tensor {src} has shape {shape:?}, expected {:?}",
                    p.shape
                )));
            }
            p.value = values.iter().map(|&v| T::from_f64(v as f64)).collect();
        }
        Ok(())
    }

    pub fn put_optimizer(&mut self, name: &str, adam: &Adam) {
        let meta = AdamMeta {
            config: adam.config,
            step: adam.step,
            sizes: adam.m.iter().map(Vec::len).collect(),
        };
        self.header
            .optimizers
            .insert(name.to_string(), serde_json::to_value(meta).expect("serializable"));
        for (i, (m, v)) in adam.m.iter().zip(&adam.v).enumerate() {
            self.put(&format!("{name}.m.{i}"), vec![m.len()], m.clone());
            self.put(&format!("{name}.v.{i}"), vec![v.len()], v.clone());
        }
    }

    pub fn load_optimizer(&self, name: &str) -> Result<Adam> {
        let meta: AdamMeta = serde_json::from_value(
            self.header
                .optimizers
                .get(name)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("missing optimizer {name}")))?,
        )
        .map_err(|e| Error::Checkpoint(format!("optimizer {name}: {e}")))?;
        let mut adam = Adam {
            config: meta.config,
            step: meta.step,
            m: Vec::new(),
            v: Vec::new(),
        };
        for (i, &n) in meta.sizes.iter().enumerate() {
            for (slot, kind) in [(&mut adam.m, "m"), (&mut adam.v, "v")] {
                let key = format!("{name}.{kind}.{i}");
                let (_, vals) = self
                    .get(&key)
                    .ok_or_else(|| Error::Checkpoint(format!("missing tensor {key}")))?;
                if vals.len() != n {
                    return Err(Error::Checkpoint(format!(
                        "tensor {key} has {} values, expected {n}",
                        vals.len()
                    )));
                }
                slot.push(vals.to_vec());
            }
        }
        Ok(adam)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let total: usize = self.data.values().map(Vec::len).sum();
        let mut out = Vec::with_capacity(20 + header.len() + 4 * total);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for e in &self.header.tensors {
            for v in &self.data[&e.name] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader =
            serde_json::from_slice(body).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        let mut offset = 20 + hlen;
        let mut data = BTreeMap::new();
        for e in &header.tensors {
            let n: usize = e.shape.iter().product();
            let raw = bytes
                .get(offset..offset + 4 * n)
                .ok_or_else(|| Error::Checkpoint(format!("truncated tensor {}", e.name)))?;
            let vals = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            data.insert(e.name.clone(), vals);
            offset += 4 * n;
        }
        if offset != bytes.len() {
            return Err(bad("trailing bytes after last tensor"));
        }
        Ok(Self { header, data })
    }

    /// Atomic write (temporary file then rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::Generator;
    use crate::optim::AdamConfig;

    #[test]
    fn round_trips_networks_and_optimizers() {
        let arch = ArchConfig::tiny();
        let g: Generator<f32> = Generator::new("profile", &arch, 3);
        let mut adam = Adam::new(AdamConfig::default(), &g);
        adam.step = 7;
        adam.m[0][0] = 0.25;
        let mut ck = Checkpoint::new(ModelKind::Cpgan, arch.clone(), serde_json::json!({"seed": 3}));
        ck.header.epoch = 2;
        ck.put_network(&g);
        ck.put_optimizer("adam.profile", &adam);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ckpt");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        let mut g2: Generator<f32> = Generator::new("profile", &arch, 99);
        assert_ne!(g2.checksum(), g.checksum());
        back.load_network(&mut g2).unwrap();
        assert_eq!(g2.checksum(), g.checksum());
        assert_eq!(back.load_optimizer("adam.profile").unwrap(), adam);
    }

    #[test]
    fn rejects_corruption_and_shape_mismatch() {
        let arch = ArchConfig::tiny();
        let g: Generator<f32> = Generator::new("profile", &arch, 3);
        let mut ck = Checkpoint::new(ModelKind::Cpgan, arch.clone(), serde_json::Value::Null);
        ck.put_network(&g);
        let bytes = ck.to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(b"garbage that is long enough").is_err());
        let wider = ArchConfig {
            embedding_dim: 4,
            ..arch
        };
        let mut g3: Generator<f32> = Generator::new("profile", &wider, 3);
        assert!(ck.load_network(&mut g3).is_err());
    }
}
