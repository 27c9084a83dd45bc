//! The JSON run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use neurop_core::experiments::{Architecture, ConvergenceSpec};
use neurop_core::pde::DatasetSpec;
use neurop_core::train::{AdamConfig, LossSpec, TrainConfig};
use serde::{Deserialize, Serialize};

/// One document describing data, model, training and experiments.
///
/// Unknown keys are rejected. Every default is written out in the
/// effective configuration a command echoes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds data generation and model initialization; `--seed` overrides it.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub data: DatasetSpec,
    #[serde(default)]
    pub model: Option<Architecture>,
    /// Fit input/output standardization on the training split before training.
    #[serde(default)]
    pub normalize: bool,
    #[serde(default)]
    pub train: TrainConfig,
    /// Worker threads for per-sample gradients; 0 and 1 run serially.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct ExperimentConfig {
    /// Caps how many test samples the per-sample modes visit.
    pub max_samples: Option<usize>,
    /// Target resolution of `superres`; defaults to the dataset's high resolution.
    pub superres_resolution: Option<usize>,
    /// Further checkpoints compared in `spectrum`.
    pub compare: Vec<NamedCheckpoint>,
    pub invert: InvertConfig,
    pub finetune: FinetuneConfig,
    pub convergence: Option<ConvergenceConfig>,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedCheckpoint {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InvertConfig {
    pub steps: usize,
    pub adam: AdamConfig,
    pub tikhonov_weight: f64,
}

impl Default for InvertConfig {
    fn default() -> Self {
        InvertConfig { steps: 500, adam: AdamConfig { lr: 1e-2, weight_decay: 0.0, ..AdamConfig::default() }, tikhonov_weight: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub steps: usize,
    pub adam: AdamConfig,
    /// Physics objective; its data weight is ignored.
    pub loss: LossSpec,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            steps: 100,
            adam: AdamConfig { lr: 1e-4, weight_decay: 0.0, ..AdamConfig::default() },
            loss: LossSpec { w_data: 0.0, w_pde: 1.0, ..LossSpec::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedArchitecture {
    pub name: String,
    pub model: Architecture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub architectures: Vec<NamedArchitecture>,
    pub spec: ConvergenceSpec,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            anyhow::anyhow!("invalid config at `{path}`: {}", e.into_inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate().context("in `data`")?;
        self.train.validate().context("in `train`")?;
        match &self.model {
            Some(Architecture::Operator(c)) => c.validate().context("in `model`")?,
            Some(Architecture::Cnn(c)) => c.validate().context("in `model`")?,
            None => {}
        }
        self.experiment.invert.adam.validate().context("in `experiment.invert.adam`")?;
        self.experiment.finetune.adam.validate().context("in `experiment.finetune.adam`")?;
        Ok(())
    }

    /// The configuration with every default filled in, as pretty JSON.
    pub fn effective_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
