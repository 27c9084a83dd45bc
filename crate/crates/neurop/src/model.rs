use anyhow::Result;
use neurop_core::experiments::{Architecture, CnnConfig, FixedGridCnn};
use neurop_core::operator::Normalization;
use neurop_core::train::GridModel;
use neurop_core::{Graph, ModelConfig, NeuralOperatorModel, Tensor, Var};

/// Either architecture a run can train.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Operator(NeuralOperatorModel),
    Cnn(FixedGridCnn),
}

impl AnyModel {
    pub fn init(arch: &Architecture, seed: u64) -> Result<Self> {
        Ok(match arch {
            Architecture::Operator(c) => AnyModel::Operator(NeuralOperatorModel::init(c, seed)?),
            Architecture::Cnn(c) => AnyModel::Cnn(FixedGridCnn::init(c, seed)?),
        })
    }

    pub fn architecture(&self) -> Architecture {
        match self {
            AnyModel::Operator(m) => Architecture::Operator(m.config().clone()),
            AnyModel::Cnn(m) => Architecture::Cnn(m.config.clone()),
        }
    }
}

/// `arch` with its normalization statistics replaced.
pub fn with_normalization(arch: &Architecture, norm: Option<Normalization>) -> Architecture {
    match arch {
        Architecture::Operator(c) => Architecture::Operator(ModelConfig { normalization: norm, ..c.clone() }),
        Architecture::Cnn(c) => Architecture::Cnn(CnnConfig { normalization: norm, ..c.clone() }),
    }
}

pub fn in_channels(arch: &Architecture) -> usize {
    match arch {
        Architecture::Operator(c) => c.in_channels,
        Architecture::Cnn(c) => c.in_channels,
    }
}

impl GridModel for AnyModel {
    fn params(&self) -> Vec<&Tensor> {
        match self {
            AnyModel::Operator(m) => m.params(),
            AnyModel::Cnn(m) => GridModel::params(m),
        }
    }

    fn set_params(&mut self, values: &[Tensor]) -> neurop_core::Result<()> {
        match self {
            AnyModel::Operator(m) => m.set_params(values),
            AnyModel::Cnn(m) => GridModel::set_params(m, values),
        }
    }

    fn out_channels(&self) -> usize {
        match self {
            AnyModel::Operator(m) => m.config().out_channels,
            AnyModel::Cnn(m) => m.config.out_channels,
        }
    }

    fn forward_grid(&self, g: &mut Graph, vars: &[Var], a: Var, periodic: bool, out: &[usize]) -> neurop_core::Result<Var> {
        match self {
            AnyModel::Operator(m) => m.forward_grid(g, vars, a, periodic, out),
            AnyModel::Cnn(m) => GridModel::forward_grid(m, g, vars, a, periodic, out),
        }
    }
}
