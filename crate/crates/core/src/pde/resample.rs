use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::fft::{check_pow2, dft, fft_axes, resize_spectrum};
use crate::grid::{grid_coordinate, GridFunction};
use crate::math;
use crate::tensor::{numel, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ResampleMethod {
    /// Fourier zero-padding or truncation.
    Spectral,
    /// Stride picking; only valid when the new grid is a subset of the old.
    Subsample,
    /// Multilinear interpolation (wrapping on periodic grids).
    Bilinear,
}

/// Re-discretizes `u` at `resolution` (one extent per spatial axis).
pub fn resample(u: &GridFunction, resolution: &[usize], method: ResampleMethod) -> Result<GridFunction> {
    if resolution.len() != u.dim() {
        return Err(shape_err!("{}-d resolution for a {}-d function", resolution.len(), u.dim()));
    }
    if resolution == u.resolution() {
        return Ok(u.clone());
    }
    match method {
        ResampleMethod::Spectral => spectral(u, resolution),
        ResampleMethod::Subsample => subsample(u, resolution),
        ResampleMethod::Bilinear => multilinear(u, resolution),
    }
}

fn spectral(u: &GridFunction, resolution: &[usize]) -> Result<GridFunction> {
    if !u.periodic() {
        return Err(Error::InvalidDomain("spectral resampling needs a periodic grid".into()));
    }
    for &n in resolution.iter().chain(u.resolution()) {
        check_pow2(n)?;
    }
    let axes: Vec<usize> = (1..=u.dim()).collect();
    let c = dft(u.values(), &axes)?;
    let c = resize_spectrum(&c, &axes, resolution)?;
    GridFunction::new(fft_axes(&c, &axes, true, false)?.real_part(), true)
}

fn subsample(u: &GridFunction, resolution: &[usize]) -> Result<GridFunction> {
    let mut strides = Vec::with_capacity(resolution.len());
    for (&n_new, &n_old) in resolution.iter().zip(u.resolution()) {
        let (a, b) = if u.periodic() { (n_old, n_new) } else { (n_old - 1, n_new.max(2) - 1) };
        if n_new > n_old || n_new == 0 || a % b != 0 {
            return Err(Error::Invalid(format!("cannot subsample an axis of {n_old} points to {n_new}")));
        }
        strides.push(a / b);
    }
    let c = u.channels();
    let old = u.resolution();
    let mut shape = vec![c];
    shape.extend_from_slice(resolution);
    let total = numel(resolution);
    let old_total = u.num_points();
    let mut out = Vec::with_capacity(c * total);
    for ch in 0..c {
        let src = u.channel(ch);
        for p in 0..total {
            let mut q = p;
            let mut flat = 0;
            let mut mult = 1;
            for ax in (0..resolution.len()).rev() {
                flat += (q % resolution[ax]) * strides[ax] * mult;
                q /= resolution[ax];
                mult *= old[ax];
            }
            debug_assert!(flat < old_total);
            out.push(src[flat]);
        }
    }
    GridFunction::new(Tensor::new(&shape, out)?, u.periodic())
}

fn multilinear(u: &GridFunction, resolution: &[usize]) -> Result<GridFunction> {
    let d = u.dim();
    let old = u.resolution().to_vec();
    let periodic = u.periodic();
    // per axis and new index: (lower index, upper index, upper weight)
    let stencils: Vec<Vec<(usize, usize, f64)>> = (0..d)
        .map(|ax| {
            let (n_old, n_new) = (old[ax], resolution[ax]);
            (0..n_new)
                .map(|j| {
                    let x = grid_coordinate(j, n_new, periodic);
                    let s = if periodic { x * n_old as f64 } else { x * (n_old - 1) as f64 };
                    let mut lo = math::floor(s) as usize;
                    if !periodic && lo >= n_old - 1 {
                        lo = n_old - 2;
                    }
                    let t = s - lo as f64;
                    let hi = if periodic { (lo + 1) % n_old } else { lo + 1 };
                    (lo % n_old, hi, t)
                })
                .collect()
        })
        .collect();
    let c = u.channels();
    let total = numel(resolution);
    let mut out = vec![0.0; c * total];
    let mut idx = vec![0usize; d];
    for p in 0..total {
        let mut q = p;
        for ax in (0..d).rev() {
            idx[ax] = q % resolution[ax];
            q /= resolution[ax];
        }
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for ax in 0..d {
                let (lo, hi, t) = stencils[ax][idx[ax]];
                let up = corner >> (d - 1 - ax) & 1 == 1;
                w *= if up { t } else { 1.0 - t };
                flat = flat * old[ax] + if up { hi } else { lo };
            }
            if w == 0.0 {
                continue;
            }
            for ch in 0..c {
                out[ch * total + p] += w * u.channel(ch)[flat];
            }
        }
    }
    let mut shape = vec![c];
    shape.extend_from_slice(resolution);
    GridFunction::new(Tensor::new(&shape, out)?, periodic)
}
