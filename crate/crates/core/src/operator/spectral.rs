//! Fourier-domain kernel integration.

use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{ContractSpec, Graph, Var};
use crate::error::{Error, Result};
use crate::fft::check_pow2;
use crate::grid::GridFunction;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// One Fourier layer: `GeLU(IFT(W_spec · FT(u)|_{|k|<=k_max}) + W_skip u + bias)`.
///
/// `w_spec` is the real parameter tensor `[(2 k_max + 1)^d, c_out, c_in]`
/// expanded into conjugate-symmetric complex weights by
/// [`Graph::hermitian_expand`], so real inputs give real outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralBlock {
    pub dim: usize,
    pub k_max: usize,
    pub w_spec: Tensor,
    pub w_skip: Tensor,
    pub bias: Tensor,
}

impl SpectralBlock {
    pub fn init(dim: usize, k_max: usize, c_in: usize, c_out: usize, rng: &mut Rng) -> Result<Self> {
        if dim == 0 || c_in == 0 || c_out == 0 {
            return Err(Error::Config("spectral block needs positive dim and channels".into()));
        }
        let rows = (2 * k_max + 1).pow(dim as u32);
        let scale = 1.0 / (c_in * c_out) as f64;
        let w_spec = (0..rows * c_out * c_in).map(|_| scale * rng.uniform()).collect();
        let bound = 1.0 / crate::math::sqrt(c_in as f64);
        let w_skip = (0..c_out * c_in).map(|_| rng.uniform_in(-bound, bound)).collect();
        let bias = (0..c_out).map(|_| rng.uniform_in(-bound, bound)).collect();
        Ok(SpectralBlock {
            dim,
            k_max,
            w_spec: Tensor::new(&[rows, c_out, c_in], w_spec)?,
            w_skip: Tensor::new(&[c_out, c_in], w_skip)?,
            bias: Tensor::new(&[c_out], bias)?,
        })
    }

    pub fn modes_per_axis(&self) -> usize {
        2 * self.k_max + 1
    }

    pub fn c_in(&self) -> usize {
        self.w_skip.shape()[1]
    }

    pub fn c_out(&self) -> usize {
        self.w_skip.shape()[0]
    }

    pub(crate) fn params(&self) -> [&Tensor; 3] {
        [&self.w_spec, &self.w_skip, &self.bias]
    }

    pub(crate) fn params_mut(&mut self) -> [&mut Tensor; 3] {
        [&mut self.w_spec, &mut self.w_skip, &mut self.bias]
    }

    /// Graph-level application to channel-last `x: [n_1, ..., n_d, c_in]`.
    /// `vars` are `[w_spec, w_skip, bias]`.
    pub fn apply(&self, g: &mut Graph, vars: &[Var], x: Var, out_resolution: &[usize]) -> Result<Var> {
        let d = self.dim;
        let in_res = g.shape(x)[..d].to_vec();
        let m = self.modes_per_axis();
        for &n in in_res.iter().chain(out_resolution) {
            check_pow2(n)?;
            if n < m {
                return Err(Error::Undersampled { resolution: n, k_max: self.k_max });
            }
        }
        let axes: Vec<usize> = (0..d).collect();
        let spectrum = g.dft(x, &axes)?;
        let low = g.truncate_modes(spectrum, &axes, self.k_max)?;
        let weights = g.hermitian_expand(vars[0], &vec![m; d])?;
        let mixed = g.contract(low, weights, &ContractSpec::new(d, &[(d, d + 1)]))?;
        let field = g.idft(mixed, &axes, out_resolution)?;
        let field = g.real(field)?;
        let skip_in = if in_res == out_resolution {
            x
        } else {
            let up = g.idft(spectrum, &axes, out_resolution)?;
            g.real(up)?
        };
        let skip = g.contract(skip_in, vars[1], &ContractSpec::new(0, &[(d, 1)]))?;
        let sum = g.add(field, skip)?;
        let sum = g.add(sum, vars[2])?;
        g.gelu(sum)
    }
}

/// Applies `block` to a periodic grid function, emitting at `out_resolution`.
pub fn spectral_block_apply(u: &GridFunction, block: &SpectralBlock, out_resolution: &[usize]) -> Result<GridFunction> {
    if !u.periodic() {
        return Err(Error::InvalidDomain("spectral blocks act on periodic grids".into()));
    }
    if u.dim() != block.dim || out_resolution.len() != block.dim {
        return Err(crate::error::shape_err!("block is {}-d, input {}-d", block.dim, u.dim()));
    }
    let d = block.dim;
    let mut g = Graph::new();
    let x = g.constant(u.values().clone());
    let mut perm: Vec<usize> = (1..=d).collect();
    perm.push(0);
    let x = g.permute(x, &perm)?;
    let vars: Vec<Var> = block.params().iter().map(|t| g.constant((*t).clone())).collect();
    let y = block.apply(&mut g, &vars, x, out_resolution)?;
    let mut back = vec![d];
    back.extend(0..d);
    let y = g.permute(y, &back)?;
    GridFunction::new(g.value(y).clone(), true)
}
