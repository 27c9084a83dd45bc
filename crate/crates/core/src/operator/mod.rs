//! Neural operators: lifting, a stack of kernel-integral blocks, projection.
//!
//! Internally every block works on channel-last tensors
//! (`[n_1, ..., n_d, c]` on grids, `[n, c]` on clouds). Intermediate blocks
//! run at the input discretization; only the final block evaluates at the
//! requested output discretization, which may be finer than anything seen
//! in training.

mod channel_map;
mod graph_block;
mod spectral;

use alloc::vec;
use alloc::vec::Vec;

pub use channel_map::ChannelMap;
pub use graph_block::{graph_block_apply, kernel_quadrature, kernel_quadrature_cloud, neighborhoods, GraphBlock, Neighborhood};
pub use spectral::{spectral_block_apply, SpectralBlock};

use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Error, Result};
use crate::grid::{grid_point, GridFunction, PointCloudFunction};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields))]
pub enum BlockConfig {
    Spectral { k_max: usize },
    Graph { radius: f64, kernel_hidden: usize },
}

/// Architecture description; together with a seed it determines a model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ModelConfig {
    pub dim: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub width: usize,
    pub lifting_hidden: usize,
    pub projection_hidden: usize,
    pub blocks: Vec<BlockConfig>,
    pub coord_features: bool,
    /// Fixed per-channel affine maps around the learned network.
    #[cfg_attr(feature = "serde", serde(default))]
    pub normalization: Option<Normalization>,
}

/// Inputs are standardized as `(a - in_mean) / in_std` before lifting and
/// outputs decoded as `y * out_std + out_mean` after projection. The
/// statistics are constants, not parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Normalization {
    pub in_mean: Vec<f64>,
    pub in_std: Vec<f64>,
    pub out_mean: Vec<f64>,
    pub out_std: Vec<f64>,
}

impl Normalization {
    /// Per-channel mean and standard deviation over every point of `inputs` and `outputs`.
    pub fn fit<'a>(inputs: impl IntoIterator<Item = &'a GridFunction>, outputs: impl IntoIterator<Item = &'a GridFunction>) -> Result<Self> {
        let (in_mean, in_std) = channel_stats(inputs)?;
        let (out_mean, out_std) = channel_stats(outputs)?;
        Ok(Normalization { in_mean, in_std, out_mean, out_std })
    }

    fn validate(&self, c_in: usize, c_out: usize) -> Result<()> {
        if self.in_mean.len() != c_in || self.in_std.len() != c_in || self.out_mean.len() != c_out || self.out_std.len() != c_out {
            return Err(Error::Config(alloc::format!("normalization needs {c_in} input and {c_out} output channel statistics")));
        }
        if self.in_std.iter().chain(&self.out_std).any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Config("normalization standard deviations must be positive and finite".into()));
        }
        Ok(())
    }
}

fn channel_stats<'a>(fields: impl IntoIterator<Item = &'a GridFunction>) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut sum: Vec<f64> = Vec::new();
    let mut sq: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for f in fields {
        if sum.is_empty() {
            sum = vec![0.0; f.channels()];
            sq = vec![0.0; f.channels()];
        } else if f.channels() != sum.len() {
            return Err(shape_err!("normalization: {} channels vs {}", f.channels(), sum.len()));
        }
        for c in 0..f.channels() {
            for &v in f.channel(c) {
                sum[c] += v;
                sq[c] += v * v;
            }
        }
        count += f.num_points();
    }
    if count == 0 {
        return Err(Error::Config("normalization statistics need at least one field".into()));
    }
    let n = count as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std = sq.iter().zip(&mean).map(|(q, m)| crate::math::sqrt((q / n - m * m).max(0.0)).max(1e-12)).collect();
    Ok((mean, std))
}

impl ModelConfig {
    /// All-spectral model with `n_blocks` Fourier layers.
    pub fn fno(dim: usize, in_channels: usize, out_channels: usize, width: usize, k_max: usize, n_blocks: usize) -> Self {
        ModelConfig {
            dim,
            in_channels,
            out_channels,
            width,
            lifting_hidden: 2 * width,
            projection_hidden: 2 * width,
            blocks: vec![BlockConfig::Spectral { k_max }; n_blocks],
            coord_features: false,
            normalization: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.dim, self.in_channels, self.out_channels, self.width, self.lifting_hidden, self.projection_hidden];
        if positive.contains(&0) {
            return Err(Error::Config("dim, channels and widths must be positive".into()));
        }
        if self.blocks.is_empty() {
            return Err(Error::Config("a model needs at least one block".into()));
        }
        if let Some(n) = &self.normalization {
            n.validate(self.in_channels, self.out_channels)?;
        }
        for b in &self.blocks {
            match *b {
                BlockConfig::Graph { radius, kernel_hidden } if !(radius > 0.0) || kernel_hidden == 0 => {
                    return Err(Error::Config(alloc::format!("graph block radius {radius} / hidden {kernel_hidden} invalid")));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn lifted_inputs(&self) -> usize {
        self.in_channels + if self.coord_features { self.dim } else { 0 }
    }

    /// Closed-form number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        let map = |dims: &[usize]| dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum::<usize>();
        let w = self.width;
        let blocks: usize = self
            .blocks
            .iter()
            .map(|b| match *b {
                BlockConfig::Spectral { k_max } => (2 * k_max + 1).pow(self.dim as u32) * w * w + w * w + w,
                BlockConfig::Graph { kernel_hidden, .. } => map(&[2 * self.dim, kernel_hidden, w * w]) + w * w + w,
            })
            .sum();
        map(&[self.lifted_inputs(), self.lifting_hidden, w]) + blocks + map(&[w, self.projection_hidden, self.out_channels])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    Spectral(SpectralBlock),
    Graph(GraphBlock),
}

impl Block {
    fn param_tensors(&self) -> usize {
        match self {
            Block::Spectral(_) => 3,
            Block::Graph(b) => b.param_tensors(),
        }
    }
}

/// Where the final block evaluates the output function.
#[derive(Debug, Clone, PartialEq)]
pub enum Discretization {
    Grid(Vec<usize>),
    /// Flattened `[n, dim]` query coordinates.
    Points(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralOperatorModel {
    config: ModelConfig,
    pub lifting: ChannelMap,
    pub blocks: Vec<Block>,
    pub projection: ChannelMap,
}

impl NeuralOperatorModel {
    /// Deterministic initialization: each component draws from its own stream of `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let w = config.width;
        let lifting = ChannelMap::init(&[config.lifted_inputs(), config.lifting_hidden, w], &mut Rng::split(seed, 0))?;
        let mut blocks = Vec::with_capacity(config.blocks.len());
        for (i, b) in config.blocks.iter().enumerate() {
            let rng = &mut Rng::split(seed, 1 + i as u64);
            blocks.push(match *b {
                BlockConfig::Spectral { k_max } => Block::Spectral(SpectralBlock::init(config.dim, k_max, w, w, rng)?),
                BlockConfig::Graph { radius, kernel_hidden } => {
                    Block::Graph(GraphBlock::init(config.dim, radius, kernel_hidden, w, w, rng)?)
                }
            });
        }
        let projection = ChannelMap::init(
            &[w, config.projection_hidden, config.out_channels],
            &mut Rng::split(seed, 1 + config.blocks.len() as u64),
        )?;
        Ok(NeuralOperatorModel { config: config.clone(), lifting, blocks, projection })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Parameters in canonical order: lifting, blocks, projection.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.lifting.params().collect();
        for b in &self.blocks {
            match b {
                Block::Spectral(s) => out.extend(s.params()),
                Block::Graph(gb) => out.extend(gb.params()),
            }
        }
        out.extend(self.projection.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.lifting.params_mut().collect();
        for b in &mut self.blocks {
            match b {
                Block::Spectral(s) => out.extend(s.params_mut()),
                Block::Graph(gb) => out.extend(gb.params_mut()),
            }
        }
        out.extend(self.projection.params_mut());
        out
    }

    /// Replaces every parameter; shapes must match.
    pub fn set_params(&mut self, values: &[Tensor]) -> Result<()> {
        let mut slots = self.params_mut();
        if slots.len() != values.len() {
            return Err(shape_err!("model has {} parameter tensors, got {}", slots.len(), values.len()));
        }
        for (slot, v) in slots.iter_mut().zip(values) {
            if slot.shape() != v.shape() || slot.is_complex() != v.is_complex() {
                return Err(shape_err!("parameter {:?} (complex {}) vs {:?} (complex {})", slot.shape(), slot.is_complex(), v.shape(), v.is_complex()));
            }
        }
        for (slot, v) in slots.into_iter().zip(values) {
            *slot = v.clone();
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Inserts all parameters into `g`, as differentiable leaves when `trainable`.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.params()
            .into_iter()
            .map(|t| if trainable { g.param(t.clone()) } else { g.constant(t.clone()) })
            .collect()
    }

    fn split_vars<'a>(&self, vars: &'a [Var]) -> (&'a [Var], Vec<&'a [Var]>, &'a [Var]) {
        let nl = self.lifting.param_count_tensors();
        let mut off = nl;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let n = b.param_tensors();
            blocks.push(&vars[off..off + n]);
            off += n;
        }
        (&vars[..nl], blocks, &vars[off..])
    }

    /// Forward pass on a grid input `a: [c_in, n_1, ..., n_d]`, returning
    /// `[c_out, m_1, ..., m_d]` at `out_resolution`.
    pub fn forward_grid(&self, g: &mut Graph, vars: &[Var], a: Var, periodic: bool, out_resolution: &[usize]) -> Result<Var> {
        let d = self.config.dim;
        let shape = g.shape(a).to_vec();
        if shape.len() != d + 1 || shape[0] != self.config.in_channels || out_resolution.len() != d {
            return Err(shape_err!(
                "model expects [{}, {d} spatial axes] input and {d}-d output, got {shape:?} -> {out_resolution:?}",
                self.config.in_channels
            ));
        }
        let in_res = shape[1..].to_vec();
        let (lift_v, block_v, proj_v) = self.split_vars(vars);
        let mut perm: Vec<usize> = (1..=d).collect();
        perm.push(0);
        let h = g.permute(a, &perm)?;
        let mut h = self.normalize_input(g, h)?;
        if self.config.coord_features {
            let coords = g.constant(coordinate_tensor(&in_res, periodic));
            h = g.concat(&[h, coords], d)?;
        }
        h = ChannelMap::apply(g, lift_v, h)?;
        let last = self.blocks.len() - 1;
        for (i, (block, bv)) in self.blocks.iter().zip(block_v).enumerate() {
            let target: Vec<usize> = if i == last { out_resolution.to_vec() } else { in_res.clone() };
            let cur: Vec<usize> = g.shape(h)[..d].to_vec();
            h = match block {
                Block::Spectral(sb) => sb.apply(g, bv, h, &target)?,
                Block::Graph(gb) => {
                    let n: usize = cur.iter().product();
                    let w = g.shape(h)[d];
                    let flat = g.reshape(h, &[n, w])?;
                    let points = grid_points(&cur, periodic);
                    let queries = grid_points(&target, periodic);
                    let weights = vec![1.0 / n as f64; n];
                    let y = gb.apply(g, bv, flat, &points, &weights, &queries, d, periodic)?;
                    let mut s = target.clone();
                    s.push(gb.c_out());
                    g.reshape(y, &s)?
                }
            };
        }
        h = ChannelMap::apply(g, proj_v, h)?;
        h = self.decode_output(g, h)?;
        let mut back = vec![d];
        back.extend(0..d);
        g.permute(h, &back)
    }

    /// Forward pass on cloud values `a: [n, c_in]` at the cloud's points,
    /// returning `[n_q, c_out]` at `queries`. Only graph blocks apply here.
    pub fn forward_cloud(&self, g: &mut Graph, vars: &[Var], a: Var, cloud: &PointCloudFunction, queries: &[f64]) -> Result<Var> {
        let d = cloud.dim();
        if d != self.config.dim || g.shape(a) != [cloud.len(), self.config.in_channels] {
            return Err(shape_err!("cloud input {:?} does not match the model", g.shape(a)));
        }
        let (lift_v, block_v, proj_v) = self.split_vars(vars);
        let mut h = self.normalize_input(g, a)?;
        if self.config.coord_features {
            let coords = g.constant(Tensor::new(&[cloud.len(), d], cloud.points().to_vec())?);
            h = g.concat(&[h, coords], 1)?;
        }
        h = ChannelMap::apply(g, lift_v, h)?;
        let last = self.blocks.len() - 1;
        for (i, (block, bv)) in self.blocks.iter().zip(block_v).enumerate() {
            let Block::Graph(gb) = block else {
                return Err(Error::Invalid("spectral blocks need grid inputs".into()));
            };
            let q = if i == last { queries } else { cloud.points() };
            h = gb.apply(g, bv, h, cloud.points(), cloud.weights(), q, d, cloud.periodic())?;
        }
        let h = ChannelMap::apply(g, proj_v, h)?;
        self.decode_output(g, h)
    }

    /// Applies the input standardization to channel-last `h` (identity without normalization).
    fn normalize_input(&self, g: &mut Graph, h: Var) -> Result<Var> {
        let Some(n) = &self.config.normalization else { return Ok(h) };
        let shift = g.constant(Tensor::new(&[n.in_mean.len()], n.in_mean.clone())?);
        let inv = g.constant(Tensor::new(&[n.in_std.len()], n.in_std.iter().map(|s| 1.0 / s).collect())?);
        let h = g.sub(h, shift)?;
        g.mul(h, inv)
    }

    fn decode_output(&self, g: &mut Graph, h: Var) -> Result<Var> {
        let Some(n) = &self.config.normalization else { return Ok(h) };
        let scale = g.constant(Tensor::new(&[n.out_std.len()], n.out_std.clone())?);
        let shift = g.constant(Tensor::new(&[n.out_mean.len()], n.out_mean.clone())?);
        let h = g.mul(h, scale)?;
        g.add(h, shift)
    }

    /// Evaluates the model on a grid function at `out_resolution`.
    pub fn predict(&self, a: &GridFunction, out_resolution: &[usize]) -> Result<GridFunction> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let x = g.constant(a.values().clone());
        let y = self.forward_grid(&mut g, &vars, x, a.periodic(), out_resolution)?;
        GridFunction::new(g.value(y).clone(), a.periodic())
    }

    pub fn predict_cloud(&self, a: &PointCloudFunction, queries: &[f64]) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let x = g.constant(a.values().clone());
        let y = self.forward_cloud(&mut g, &vars, x, a, queries)?;
        Ok(g.value(y).clone())
    }

    /// Dispatches on the discretization of the input.
    pub fn forward_any(&self, a: &ModelInput<'_>, out: &Discretization) -> Result<Tensor> {
        match (a, out) {
            (ModelInput::Grid(gf), Discretization::Grid(res)) => Ok(self.predict(gf, res)?.into_values()),
            (ModelInput::Cloud(c), Discretization::Points(q)) => self.predict_cloud(c, q),
            (ModelInput::Grid(gf), Discretization::Points(q)) => self.predict_cloud(&PointCloudFunction::from_grid(gf)?, q),
            (ModelInput::Cloud(_), Discretization::Grid(_)) => Err(Error::Invalid("grid output from a cloud input is not supported".into())),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum ModelInput<'a> {
    Grid(&'a GridFunction),
    Cloud(&'a PointCloudFunction),
}

/// Flattened coordinates of every grid point, `[n, d]` row-major.
pub fn grid_points(resolution: &[usize], periodic: bool) -> Vec<f64> {
    let d = resolution.len();
    let n: usize = resolution.iter().product();
    let mut out = vec![0.0; n * d];
    for p in 0..n {
        grid_point(resolution, periodic, p, &mut out[p * d..(p + 1) * d]);
    }
    out
}

fn coordinate_tensor(resolution: &[usize], periodic: bool) -> Tensor {
    let mut shape = resolution.to_vec();
    shape.push(resolution.len());
    Tensor::new(&shape, grid_points(resolution, periodic)).expect("coordinate shape")
}
