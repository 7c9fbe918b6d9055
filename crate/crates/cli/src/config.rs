//! Experiment configuration: one JSON document, every key optional, unknown
//! keys rejected. The fully resolved document (defaults included) is echoed
//! into each run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use fullres::detail::{DEFAULT_GAMMA, DEFAULT_RADIUS};
use fullres::mtf::MtfConfig;
use fullres::net::LossConfig;
use fullres::synth::SynthConfig;
use fullres::train::{Scheme, TrainConfig, DEFAULT_ITERATIONS, DEFAULT_LR, DEFAULT_TILE};
use fullres::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetailSection {
    pub gamma: f64,
    pub radius: usize,
}

impl Default for DetailSection {
    fn default() -> Self {
        DetailSection { gamma: DEFAULT_GAMMA, radius: DEFAULT_RADIUS }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub scheme: Scheme,
    pub iterations: usize,
    pub lr: f64,
    pub tile: usize,
    pub seed: u64,
    pub log_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            scheme: Scheme::Proposed,
            iterations: DEFAULT_ITERATIONS,
            lr: DEFAULT_LR,
            tile: DEFAULT_TILE,
            seed: 0,
            log_every: 10,
        }
    }
}

/// Default file locations; command-line arguments take precedence.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    pub in10: Option<PathBuf>,
    pub in20: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mtf: MtfConfig,
    pub ratio: usize,
    pub detail: DetailSection,
    pub loss: LossConfig,
    pub train: TrainSection,
    pub synth: SynthConfig,
    pub io: IoSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mtf: MtfConfig::default(),
            ratio: 2,
            detail: DetailSection::default(),
            loss: LossConfig::default(),
            train: TrainSection::default(),
            synth: SynthConfig::default(),
            io: IoSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.into_inner()))
        })?;
        let cfg = ExperimentConfig { mtf: cfg.mtf.completed(), ..cfg };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratio < 2 {
            return Err(Error::Config(format!("ratio: must be >= 2, got {}", self.ratio)));
        }
        if self.train.iterations == 0 {
            return Err(Error::Config("train.iterations: must be >= 1".into()));
        }
        fullres::KernelBank::new(&self.mtf, self.ratio).map_err(|e| Error::Config(format!("mtf: {e}")))?;
        self.loss.validate()?;
        self.synth.validate()?;
        self.train_config().validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            scheme: self.train.scheme,
            iterations: self.train.iterations,
            lr: self.train.lr,
            beta: self.loss.beta,
            gamma: self.detail.gamma,
            radius: self.detail.radius,
            seed: self.train.seed,
            tile: self.train.tile,
            log_every: self.train.log_every,
            norm: self.loss.norm,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
