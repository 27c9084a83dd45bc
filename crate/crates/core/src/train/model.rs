use alloc::vec::Vec;

use crate::autodiff::{Graph, Var};
use crate::error::Result;
use crate::grid::GridFunction;
use crate::tensor::Tensor;
use crate::NeuralOperatorModel;

/// A differentiable grid-to-grid map that the losses and loops can train.
pub trait GridModel: Clone + Sync {
    /// Parameters in a fixed canonical order.
    fn params(&self) -> Vec<&Tensor>;

    fn set_params(&mut self, values: &[Tensor]) -> Result<()>;

    fn out_channels(&self) -> usize;

    /// `a: [c_in, n_1, ..., n_d]` to `[c_out, m_1, ..., m_d]`; `vars` are the
    /// bound parameters in [`GridModel::params`] order.
    fn forward_grid(&self, g: &mut Graph, vars: &[Var], a: Var, periodic: bool, out_resolution: &[usize]) -> Result<Var>;

    fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.params()
            .into_iter()
            .map(|t| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) })
            .collect()
    }

    fn predict(&self, a: &GridFunction, out_resolution: &[usize]) -> Result<GridFunction> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let x = g.constant(a.values().clone());
        let y = self.forward_grid(&mut g, &vars, x, a.periodic(), out_resolution)?;
        GridFunction::new(g.value(y).clone(), a.periodic())
    }

    fn parameter_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }
}

impl GridModel for NeuralOperatorModel {
    fn params(&self) -> Vec<&Tensor> {
        NeuralOperatorModel::params(self)
    }

    fn set_params(&mut self, values: &[Tensor]) -> Result<()> {
        NeuralOperatorModel::set_params(self, values)
    }

    fn out_channels(&self) -> usize {
        self.config().out_channels
    }

    fn forward_grid(&self, g: &mut Graph, vars: &[Var], a: Var, periodic: bool, out_resolution: &[usize]) -> Result<Var> {
        NeuralOperatorModel::forward_grid(self, g, vars, a, periodic, out_resolution)
    }
}
