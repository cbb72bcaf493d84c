//! JSON pipeline configuration. Command-line flags override file values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::enhance::{AheConfig, AugmentConfig};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, NetworkConfig, TrainConfig};
use crate::preproc::SavGolConfig;
use crate::skeleton::{DatasetKind, SplitSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub stop_at_train_accuracy: Option<f64>,
    pub stop_at_test_accuracy: Option<f64>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            epochs: 250,
            batch_size: 64,
            lr: 3e-4,
            stop_at_train_accuracy: None,
            stop_at_test_accuracy: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: DatasetKind,
    /// Directory of skeleton files.
    pub data: Option<PathBuf>,
    /// Directory of encoded images with `index.csv`.
    pub images: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Checkpoint to continue training from.
    pub resume: Option<PathBuf>,
    /// Frozen statistics JSON to encode with instead of fitting them.
    pub stats: Option<PathBuf>,
    pub out: PathBuf,
    /// Built-in split name, a split JSON file, or `none`.
    pub split: String,
    pub savgol: SavGolConfig,
    pub ahe: AheConfig,
    pub enhance: bool,
    pub augment: AugmentConfig,
    /// Augmented copies written per training image.
    pub augment_copies: usize,
    pub depth: usize,
    pub train: TrainSettings,
    pub seed: u64,
    /// Worker threads for encoding; `None` uses every core.
    pub threads: Option<usize>,
    pub deterministic: bool,
    pub warmup: usize,
    pub runs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dataset: DatasetKind::Canonical,
            data: None,
            images: None,
            checkpoint: None,
            resume: None,
            stats: None,
            out: PathBuf::from("out"),
            split: "odd-even".into(),
            savgol: SavGolConfig::default(),
            ahe: AheConfig::default(),
            enhance: true,
            augment: AugmentConfig::default(),
            augment_copies: 0,
            depth: 16,
            train: TrainSettings::default(),
            seed: 0,
            threads: None,
            deterministic: false,
            warmup: 5,
            runs: 50,
        }
    }
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.savgol.validate()?;
        self.ahe.validate()?;
        self.augment.validate()?;
        if ![16, 28, 40].contains(&self.depth) {
            return Err(Error::Config(format!("depth must be 16, 28 or 40, got {}", self.depth)));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        for (what, p) in [
            ("data", &self.data),
            ("images", &self.images),
            ("checkpoint", &self.checkpoint),
            ("resume", &self.resume),
            ("stats", &self.stats),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(Error::Config(format!("{what} path {} does not exist", p.display())));
                }
            }
        }
        self.train_config()?.validate()
    }

    /// `None` for `split: "none"`.
    pub fn split_spec(&self) -> Result<Option<SplitSpec>> {
        if self.split.eq_ignore_ascii_case("none") {
            return Ok(None);
        }
        SplitSpec::resolve(&self.split).map(Some)
    }

    pub fn ahe_config(&self) -> Option<AheConfig> {
        self.enhance.then_some(self.ahe)
    }

    pub fn network(&self, classes: usize) -> Result<NetworkConfig> {
        NetworkConfig::densenet(self.depth, classes)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        Ok(TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            adam: AdamConfig {
                lr: t.lr,
                ..AdamConfig::default()
            },
            seed: self.seed,
            stop_at_train_accuracy: t.stop_at_train_accuracy,
            stop_at_test_accuracy: t.stop_at_test_accuracy,
        })
    }

    pub fn require<'a>(&self, what: &str, p: &'a Option<PathBuf>) -> Result<&'a Path> {
        p.as_deref()
            .ok_or_else(|| Error::Config(format!("--{what} is required for this command")))
    }

    /// Writes the resolved configuration as `config.json` into `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("config.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&text).unwrap(), c);
        assert_eq!(c.train_config().unwrap().batch_size, 64);
    }

    #[test]
    fn partial_files_take_defaults() {
        let c: PipelineConfig = serde_json::from_str(r#"{"depth": 28, "train": {"epochs": 3}}"#).unwrap();
        assert_eq!(c.depth, 28);
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.lr, 3e-4);
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"detph": 28}"#).is_err());
    }

    #[test]
    fn bad_values_are_config_errors() {
        let c = PipelineConfig { depth: 20, ..PipelineConfig::default() };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = PipelineConfig { data: Some("/definitely/not/here".into()), ..PipelineConfig::default() };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = PipelineConfig { split: "nope".into(), ..PipelineConfig::default() };
        assert!(matches!(c.split_spec(), Err(Error::Config(_))));
    }
}
