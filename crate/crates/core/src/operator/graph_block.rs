//! Kernel integration by quadrature over a fixed-radius ball.

use alloc::vec::Vec;

use super::channel_map::ChannelMap;
use crate::autodiff::{ContractSpec, Graph, Var};
use crate::error::{shape_err, Error, Result};
use crate::grid::{distance, PointCloudFunction};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Riemann sum `Σ_i κ(x, y_i) a(y_i) Δy_i` for a dense kernel
/// `kappa: [n_out, n_in, c_out, c_in]` and values `a: [n_in, c_in]`.
pub fn kernel_quadrature(g: &mut Graph, kappa: Var, a: Var, weights: &[f64]) -> Result<Var> {
    let ks = g.shape(kappa).to_vec();
    let asz = g.shape(a).to_vec();
    if ks.len() != 4 || asz.len() != 2 || ks[1] != asz[0] || ks[3] != asz[1] || weights.len() != asz[0] {
        return Err(shape_err!("kernel {ks:?}, values {asz:?}, {} weights", weights.len()));
    }
    let w = g.constant(Tensor::new(&[weights.len(), 1], weights.to_vec())?);
    let aw = g.mul(a, w)?;
    g.contract(kappa, aw, &ContractSpec::new(0, &[(1, 0), (3, 1)]))
}

/// Value-level [`kernel_quadrature`] against a point cloud.
pub fn kernel_quadrature_cloud(kappa: &Tensor, a: &PointCloudFunction) -> Result<Tensor> {
    let mut g = Graph::new();
    let k = g.constant(kappa.clone());
    let v = g.constant(a.values().clone());
    let out = kernel_quadrature(&mut g, k, v, a.weights())?;
    Ok(g.value(out).clone())
}

/// Neighbor pairs within `radius` and the nearest cloud point of each query.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub query: Vec<usize>,
    pub source: Vec<usize>,
    pub nearest: Vec<usize>,
    pub n_queries: usize,
}

/// Exact brute-force search of `|x - y_i| <= radius` for every query `x`.
pub fn neighborhoods(points: &[f64], queries: &[f64], dim: usize, radius: f64, periodic: bool) -> Neighborhood {
    let n = points.len() / dim;
    let nq = queries.len() / dim;
    let mut query = Vec::new();
    let mut source = Vec::new();
    let mut nearest = Vec::with_capacity(nq);
    for q in 0..nq {
        let x = &queries[q * dim..(q + 1) * dim];
        let mut best = (f64::INFINITY, 0);
        for i in 0..n {
            let d = distance(x, &points[i * dim..(i + 1) * dim], periodic);
            if d < best.0 {
                best = (d, i);
            }
            if d <= radius {
                query.push(q);
                source.push(i);
            }
        }
        nearest.push(best.1);
    }
    Neighborhood { query, source, nearest, n_queries: nq }
}

/// `GeLU(Σ_{|x-y_i|<=r} κ_θ(x, y_i) a(y_i) Δy_i + W_skip a(x) + bias)`.
///
/// `κ_θ` is a [`ChannelMap`] from `(x, y)` to a flattened `c_out × c_in`
/// matrix. At queries outside the cloud, `a(x)` is the nearest cloud value.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBlock {
    pub radius: f64,
    pub kernel: ChannelMap,
    pub w_skip: Tensor,
    pub bias: Tensor,
}

impl GraphBlock {
    pub fn init(dim: usize, radius: f64, hidden: usize, c_in: usize, c_out: usize, rng: &mut Rng) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Config(alloc::format!("graph block radius must be positive, got {radius}")));
        }
        let mut kernel = ChannelMap::init(&[2 * dim, hidden, c_out * c_in], rng)?;
        // keep the initial integral term on the scale of a 1/c_in average
        let last = kernel.weights.len() - 1;
        kernel.weights[last] = kernel.weights[last].scale(1.0 / c_in as f64);
        kernel.biases[last] = kernel.biases[last].scale(1.0 / c_in as f64);
        let bound = 1.0 / crate::math::sqrt(c_in as f64);
        let w_skip = Tensor::new(&[c_out, c_in], (0..c_out * c_in).map(|_| rng.uniform_in(-bound, bound)).collect())?;
        let bias = Tensor::new(&[c_out], (0..c_out).map(|_| rng.uniform_in(-bound, bound)).collect())?;
        Ok(GraphBlock { radius, kernel, w_skip, bias })
    }

    pub fn c_in(&self) -> usize {
        self.w_skip.shape()[1]
    }

    pub fn c_out(&self) -> usize {
        self.w_skip.shape()[0]
    }

    pub(crate) fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.kernel.params().chain([&self.w_skip, &self.bias])
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.kernel.params_mut().chain([&mut self.w_skip, &mut self.bias])
    }

    pub(crate) fn param_tensors(&self) -> usize {
        self.kernel.param_count_tensors() + 2
    }

    /// Graph-level application. `x: [n, c_in]` are values at `points`;
    /// `vars` are this block's bound parameters.
    #[allow(clippy::too_many_arguments)]
    pub fn apply(
        &self,
        g: &mut Graph,
        vars: &[Var],
        x: Var,
        points: &[f64],
        weights: &[f64],
        queries: &[f64],
        dim: usize,
        periodic: bool,
    ) -> Result<Var> {
        let (ci, co) = (self.c_in(), self.c_out());
        let nq = queries.len() / dim;
        if queries.iter().any(|&q| !(0.0..=1.0).contains(&q)) {
            return Err(Error::InvalidDomain("query point outside [0, 1]^d".into()));
        }
        if g.shape(x) != [weights.len(), ci] {
            return Err(shape_err!("graph block expects [{}, {ci}], got {:?}", weights.len(), g.shape(x)));
        }
        let nb = neighborhoods(points, queries, dim, self.radius, periodic);
        let kvars = &vars[..self.kernel.param_count_tensors()];
        let (w_skip, bias) = (vars[kvars.len()], vars[kvars.len() + 1]);

        let integral = if nb.query.is_empty() {
            g.constant(Tensor::zeros(&[nq, co]))
        } else {
            let p = nb.query.len();
            let mut feats = Vec::with_capacity(p * 2 * dim);
            for (&q, &i) in nb.query.iter().zip(&nb.source) {
                feats.extend_from_slice(&queries[q * dim..(q + 1) * dim]);
                feats.extend_from_slice(&points[i * dim..(i + 1) * dim]);
            }
            let feats = g.constant(Tensor::new(&[p, 2 * dim], feats)?);
            let kappa = ChannelMap::apply(g, kvars, feats)?;
            let kappa = g.reshape(kappa, &[p, co, ci])?;
            let w = g.constant(Tensor::new(&[weights.len(), 1], weights.to_vec())?);
            let aw = g.mul(x, w)?;
            let a_src = g.gather_rows(aw, &nb.source)?;
            let contrib = g.contract(a_src, kappa, &ContractSpec::new(1, &[(1, 2)]))?;
            g.segment_sum(contrib, &nb.query, nq)?
        };
        let a_near = g.gather_rows(x, &nb.nearest)?;
        let skip = g.contract(a_near, w_skip, &ContractSpec::new(0, &[(1, 1)]))?;
        let s = g.add(integral, skip)?;
        let s = g.add(s, bias)?;
        g.gelu(s)
    }
}

/// Applies `block` to a cloud function at `queries` (flattened `[n_q, dim]`).
pub fn graph_block_apply(u: &PointCloudFunction, block: &GraphBlock, queries: &[f64]) -> Result<Tensor> {
    let mut g = Graph::new();
    let x = g.constant(u.values().clone());
    let vars: Vec<Var> = block.params().map(|t| g.constant(t.clone())).collect();
    let y = block.apply(&mut g, &vars, x, u.points(), u.weights(), queries, u.dim(), u.periodic())?;
    Ok(g.value(y).clone())
}
