use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fft::{check_pow2, fft_axes};
use crate::grid::GridFunction;
use crate::math::{self, is_nyquist, wavenumber};
use crate::rng::Rng;
use crate::tensor::{numel, Tensor};

/// Gaussian random field with spectral density
/// `scale² (4π² |k|² + tau²)^(-alpha)` on the periodic unit box.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct GrfSpec {
    pub alpha: f64,
    pub tau: f64,
    pub scale: f64,
}

impl Default for GrfSpec {
    fn default() -> Self {
        GrfSpec { alpha: 2.0, tau: 3.0, scale: 1.0 }
    }
}

impl GrfSpec {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.alpha > dim as f64 / 2.0) {
            return Err(Error::Config(format!("grf.alpha must exceed d/2 = {}, got {}", dim as f64 / 2.0, self.alpha)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("grf.tau must be positive, got {}", self.tau)));
        }
        if !self.scale.is_finite() {
            return Err(Error::Config("grf.scale must be finite".into()));
        }
        Ok(())
    }

    /// Standard deviation of the Fourier coefficient at wavenumber `k`.
    pub fn mode_std(&self, k: &[i64]) -> f64 {
        let k2: f64 = k.iter().map(|&v| (v * v) as f64).sum();
        self.scale * math::pow(4.0 * math::PI * math::PI * k2 + self.tau * self.tau, -self.alpha / 2.0)
    }
}

/// Draws one field at `resolution` by colouring conjugate-symmetric white
/// noise. Nyquist modes are left at zero.
pub fn sample_grf(spec: &GrfSpec, resolution: &[usize], seed: u64) -> Result<GridFunction> {
    spec.validate(resolution.len())?;
    for &n in resolution {
        check_pow2(n)?;
    }
    let total = numel(resolution);
    let d = resolution.len();
    let mut re = vec![0.0; total];
    let mut im = vec![0.0; total];
    let mut rng = Rng::new(seed);
    let mut idx = vec![0usize; d];
    let mut ks = vec![0i64; d];
    for flat in 0..total {
        let mut q = flat;
        for ax in (0..d).rev() {
            idx[ax] = q % resolution[ax];
            q /= resolution[ax];
        }
        if idx.iter().zip(resolution).any(|(&j, &n)| is_nyquist(j, n)) {
            continue;
        }
        let mut mirror = 0;
        for ax in 0..d {
            let n = resolution[ax];
            ks[ax] = wavenumber(idx[ax], n);
            mirror = mirror * n + (n - idx[ax]) % n;
        }
        let sigma = spec.mode_std(&ks);
        if mirror == flat {
            re[flat] = sigma * rng.normal();
        } else if flat < mirror {
            let (a, b) = (rng.normal(), rng.normal());
            let s = sigma / math::sqrt(2.0);
            re[flat] = s * a;
            im[flat] = s * b;
            re[mirror] = s * a;
            im[mirror] = -s * b;
        }
    }
    let mut shape = Vec::with_capacity(d + 1);
    shape.push(1);
    shape.extend_from_slice(resolution);
    let c = Tensor::complex(&shape, re, im)?;
    let axes: Vec<usize> = (1..=d).collect();
    let field = fft_axes(&c, &axes, true, false)?.real_part();
    GridFunction::new(field, true)
}
