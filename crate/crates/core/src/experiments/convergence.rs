use alloc::string::String;
use alloc::vec::Vec;

use super::cnn::{CnnConfig, FixedGridCnn};
use crate::error::{Error, Result};
use crate::operator::{ModelConfig, NeuralOperatorModel, Normalization};
use crate::pde::{make_dataset, Dataset, DatasetSpec, GrfSpec, TaskSpec};
use crate::train::{evaluate, train_loop, Executor, GridModel, TrainConfig};

/// Architecture trained in every cell; its parameter count does not depend on resolution.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", content = "config", rename_all = "kebab-case"))]
pub enum Architecture {
    Operator(ModelConfig),
    Cnn(CnnConfig),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ConvergenceSpec {
    pub task: TaskSpec,
    pub grf: GrfSpec,
    pub n_train: usize,
    pub n_test: usize,
    pub resolutions: Vec<usize>,
    pub data_seed: u64,
    pub model_seed: u64,
    pub train: TrainConfig,
    /// Fit per-channel input/output standardization on each training split.
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvergenceCell {
    pub architecture: String,
    pub resolution: usize,
    pub parameter_count: usize,
    pub test_error: f64,
    pub final_train_loss: Option<f64>,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvergenceReport {
    pub resolutions: Vec<usize>,
    pub cells: Vec<ConvergenceCell>,
}

impl ConvergenceReport {
    /// Test errors of `architecture` in resolution order.
    pub fn errors(&self, architecture: &str) -> Vec<f64> {
        self.resolutions
            .iter()
            .filter_map(|&r| self.cells.iter().find(|c| c.architecture == architecture && c.resolution == r).map(|c| c.test_error))
            .collect()
    }

    /// Largest over smallest test error of `architecture`.
    pub fn spread(&self, architecture: &str) -> f64 {
        let e = self.errors(architecture);
        let max = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = e.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    }
}

fn fit_normalization(data: &Dataset) -> Result<Normalization> {
    Normalization::fit(data.train_samples().map(|s| &s.input), data.train_samples().map(|s| &s.output))
}

fn train_cell<M: GridModel>(model: M, data: &Dataset, config: &TrainConfig, exec: &dyn Executor) -> Result<(f64, Option<f64>, bool, usize)> {
    let count = model.parameter_count();
    let out = train_loop(&model, data, config, exec, &mut |_, _, _| Ok(()))?;
    let err = evaluate(&out.best, data.test_samples())?;
    let last = out.history.epochs.last().map(|r| r.train_loss);
    Ok((err, last, out.diverged.is_some(), count))
}

/// Trains every architecture at every resolution with the same budget and
/// tests at the training resolution. `progress` sees each finished cell.
pub fn convergence_experiment(
    architectures: &[(String, Architecture)],
    spec: &ConvergenceSpec,
    exec: &dyn Executor,
    progress: &mut dyn FnMut(&ConvergenceCell),
) -> Result<ConvergenceReport> {
    if spec.n_test == 0 || spec.n_train == 0 {
        return Err(Error::Config("convergence experiment needs train and test samples".into()));
    }
    let mut report = ConvergenceReport { resolutions: spec.resolutions.clone(), cells: Vec::new() };
    for &r in &spec.resolutions {
        let ds = DatasetSpec {
            task: spec.task,
            grf: spec.grf,
            n_samples: spec.n_train + spec.n_test,
            n_train: spec.n_train,
            res_in: r,
            res_out: r,
            res_high: None,
        };
        let data = make_dataset(&ds, spec.data_seed)?;
        let norm = if spec.normalize { Some(fit_normalization(&data)?) } else { None };
        for (name, arch) in architectures {
            let (test_error, final_train_loss, diverged, parameter_count) = match arch {
                Architecture::Operator(cfg) => {
                    let cfg = ModelConfig { normalization: norm.clone().or(cfg.normalization.clone()), ..cfg.clone() };
                    train_cell(NeuralOperatorModel::init(&cfg, spec.model_seed)?, &data, &spec.train, exec)?
                }
                Architecture::Cnn(cfg) => {
                    let cfg = CnnConfig { normalization: norm.clone().or(cfg.normalization.clone()), ..cfg.clone() };
                    train_cell(FixedGridCnn::init(&cfg, spec.model_seed)?, &data, &spec.train, exec)?
                }
            };
            let cell = ConvergenceCell { architecture: name.clone(), resolution: r, parameter_count, test_error, final_train_loss, diverged };
            progress(&cell);
            report.cells.push(cell);
        }
    }
    Ok(report)
}
