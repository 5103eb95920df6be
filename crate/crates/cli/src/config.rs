//! Run configuration: TOML file, then environment, then flags.

use std::path::{Path, PathBuf};

use cpgan_core::checkpoint::ModelKind;
use cpgan_core::datamodel::SyntheticSpec;
use cpgan_core::trainer::TrainConfig;
use cpgan_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Everything a subcommand may need, merged from defaults, an optional
/// config file and command-line overrides.
///
/// File layout: `[run]`, `[data]`, `[train]`, `[train.weights]`,
/// `[train.arch]`. Unknown keys are rejected.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub data: SyntheticSpec,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub model: ModelKind,
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Held-out folds for evaluation.
    pub test_folds: Vec<u32>,
    /// Seeds of the ablation runs.
    pub seeds: Vec<u64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            model: ModelKind::Cpgan,
            manifest: None,
            out: None,
            test_folds: vec![3, 4],
            seeds: vec![0, 1, 2],
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    /// Defaults, overlaid with `path` when given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_toml(&text).map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn manifest(&self) -> Result<&Path> {
        self.run
            .manifest
            .as_deref()
            .ok_or_else(|| Error::Config("no manifest given (--manifest or run.manifest)".into()))
    }

    pub fn out(&self) -> Result<&Path> {
        self.run
            .out
            .as_deref()
            .ok_or_else(|| Error::Config("no output directory given (--out, CPGAN_OUT or run.out)".into()))
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        self.train.validate()?;
        if self.run.test_folds.is_empty() {
            return Err(Error::Config("run.test_folds is empty".into()));
        }
        if let Some(f) = self.run.test_folds.iter().find(|f| self.train.train_folds.contains(f)) {
            return Err(Error::Config(format!("fold {f} is both a train and a test fold")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_published_settings() {
        let c = RunConfig::load(None).unwrap();
        assert_eq!(c.train.batch_size, 128);
        assert_eq!(c.train.learning_rate, 4e-4);
        assert_eq!(c.train.adam_beta1, 0.5);
        let w = c.train.weights;
        assert_eq!((w.lambda1, w.lambda2, w.lambda3), (1.0, 0.25, 0.25));
        c.validate().unwrap();
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let c = RunConfig::from_toml("[train]\nlearning_rate = 0.001\n[train.weights]\nmargin = 10.0\n").unwrap();
        assert_eq!(c.train.learning_rate, 0.001);
        assert_eq!(c.train.weights.margin, 10.0);
        assert_eq!(c.train.weights.lambda2, 0.25);
        assert_eq!(c.train.batch_size, 128);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = RunConfig::from_toml("[train.weights]\nlamda1 = 0.5\n").unwrap_err();
        assert!(e.is_config());
        assert!(e.to_string().contains("lamda1"), "{e}");
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = RunConfig::default();
        c.run.manifest = Some("d/manifest.csv".into());
        c.train.epochs = 3;
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn shipped_desk_config_is_the_desk_preset() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
        let c = RunConfig::load(Some(&path)).unwrap();
        assert_eq!(c.train, TrainConfig::desk());
        assert_eq!(c.data, SyntheticSpec::default());
        c.validate().unwrap();
    }

    #[test]
    fn overlapping_folds_are_rejected() {
        let mut c = RunConfig::default();
        c.run.test_folds = vec![2, 3];
        assert!(c.validate().unwrap_err().to_string().contains("fold 2"));
    }
}
