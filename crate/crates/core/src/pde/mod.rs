//! Reference solvers and input distributions used as data generators and
//! ground-truth oracles.

mod burgers;
mod darcy;
mod dataset;
mod grf;
mod ns;
mod resample;

pub use burgers::{solve_burgers, BurgersSpec};
pub use darcy::{apply_darcy_operator, darcy_face_coefficients, solve_darcy, solve_darcy_with_forcing, DarcySpec};
pub use dataset::{generate_sample, make_dataset, Dataset, DatasetSpec, PdeMeta, Sample, TaskSpec};
pub use grf::{sample_grf, GrfSpec};
pub use ns::{enstrophy, solve_ns_vorticity, NsSpec};
pub use resample::{resample, ResampleMethod};

use alloc::vec::Vec;

use crate::error::Result;
use crate::fft::{dft, fft_axes};
use crate::math::{is_nyquist, wavenumber};
use crate::tensor::Tensor;

/// `2π k` for every index of an axis of extent `n`, with the Nyquist entry
/// zeroed so odd derivatives of real fields stay real.
pub(crate) fn derivative_symbols(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| if is_nyquist(j, n) { 0.0 } else { crate::math::TAU * wavenumber(j, n) as f64 })
        .collect()
}

/// 2/3-rule mask for an axis of extent `n`.
pub(crate) fn dealias_mask(n: usize) -> Vec<bool> {
    (0..n).map(|j| 3 * wavenumber(j, n).unsigned_abs() < n as u64).collect()
}

pub(crate) fn forward(t: &Tensor, axes: &[usize]) -> Result<Tensor> {
    dft(t, axes)
}

/// Inverse of [`forward`] on the same grid, returning the real part.
pub(crate) fn inverse_real(c: &Tensor, axes: &[usize]) -> Result<Tensor> {
    Ok(fft_axes(c, axes, true, false)?.real_part())
}
