use alloc::vec::Vec;

use crate::autodiff::{ContractSpec, Graph, Var};
use crate::error::{shape_err, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Pointwise multilayer map acting on the trailing (channel) axis, GeLU
/// between layers and none after the last.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMap {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl ChannelMap {
    /// Layer widths `dims[0] -> dims[1] -> ...`, weights and biases uniform in
    /// `±1/sqrt(fan_in)`.
    pub fn init(dims: &[usize], rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(crate::Error::Config(alloc::format!("channel map widths {dims:?} must be positive, at least two")));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in dims.windows(2) {
            let bound = 1.0 / crate::math::sqrt(w[0] as f64);
            let wv = (0..w[0] * w[1]).map(|_| rng.uniform_in(-bound, bound)).collect();
            let bv = (0..w[1]).map(|_| rng.uniform_in(-bound, bound)).collect();
            weights.push(Tensor::new(&[w[1], w[0]], wv)?);
            biases.push(Tensor::new(&[w[1]], bv)?);
        }
        Ok(ChannelMap { weights, biases })
    }

    pub fn in_dim(&self) -> usize {
        self.weights[0].shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.last().unwrap().shape()[0]
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Tensor::len).sum()
    }

    pub(crate) fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w, b])
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.weights.iter_mut().zip(self.biases.iter_mut()).flat_map(|(w, b)| [w, b])
    }

    pub(crate) fn param_count_tensors(&self) -> usize {
        2 * self.weights.len()
    }

    /// Applies the map to `x` of shape `[..., in_dim]`; `vars` are this map's
    /// bound parameters in [`ChannelMap::params`] order.
    pub fn apply(g: &mut Graph, vars: &[Var], x: Var) -> Result<Var> {
        let layers = vars.len() / 2;
        let mut h = x;
        for l in 0..layers {
            let (w, b) = (vars[2 * l], vars[2 * l + 1]);
            let last_axis = g.shape(h).len() - 1;
            if g.shape(h)[last_axis] != g.shape(w)[1] {
                return Err(shape_err!("channel map expects {} channels, got {:?}", g.shape(w)[1], g.shape(h)));
            }
            h = g.contract(h, w, &ContractSpec::new(0, &[(last_axis, 1)]))?;
            h = g.add(h, b)?;
            if l + 1 < layers {
                h = g.gelu(h)?;
            }
        }
        Ok(h)
    }
}
