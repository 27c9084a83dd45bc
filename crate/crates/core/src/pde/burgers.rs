use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{dealias_mask, derivative_symbols};
use crate::error::{shape_err, Error, Result};
use crate::fft::{check_pow2, fft_1d, idft};
use crate::grid::GridFunction;
use crate::math;
use crate::tensor::Tensor;

/// Viscous Burgers `u_t + u u_x = nu u_xx` on the periodic unit interval.
///
/// Output slices are taken at `t_j = j T / (n_t_out - 1)`, so the first slice
/// is the initial condition and the last is `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct BurgersSpec {
    pub nu: f64,
    pub t_final: f64,
    pub dt: f64,
    pub n_solver: usize,
    pub n_t_out: usize,
}

impl Default for BurgersSpec {
    fn default() -> Self {
        BurgersSpec { nu: 0.1, t_final: 1.0, dt: 1e-3, n_solver: 256, n_t_out: 11 }
    }
}

impl BurgersSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) {
            return Err(Error::Config(format!("burgers.nu must be positive, got {}", self.nu)));
        }
        if !(self.dt > 0.0) || !(self.t_final > 0.0) {
            return Err(Error::Config("burgers.dt and burgers.t_final must be positive".into()));
        }
        if self.n_t_out < 2 {
            return Err(Error::Config("burgers.n_t_out must be at least 2".into()));
        }
        check_pow2(self.n_solver).map_err(|_| Error::Config(format!("burgers.n_solver must be a power of two, got {}", self.n_solver)))
    }

    /// Spacing between stored time slices.
    pub fn slice_interval(&self) -> f64 {
        self.t_final / (self.n_t_out - 1) as f64
    }
}

/// Space-time solution `[n_t_out, n_solver]` of Burgers from `a0: [1, n]`.
///
/// Pseudo-spectral in `x` with the 2/3 rule on the nonlinear term; time
/// stepping is fourth-order Runge-Kutta in integrating-factor form, so the
/// diffusion is integrated exactly.
pub fn solve_burgers(a0: &GridFunction, spec: &BurgersSpec) -> Result<GridFunction> {
    spec.validate()?;
    if a0.dim() != 1 || a0.channels() != 1 || !a0.periodic() {
        return Err(shape_err!("burgers expects a periodic [1, n] initial condition, got {:?}", a0.values().shape()));
    }
    let n = spec.n_solver;
    let n0 = a0.resolution()[0];
    if n0 > n {
        return Err(shape_err!("initial condition resolution {n0} exceeds solver resolution {n}"));
    }
    let u0 = if n0 == n {
        a0.channel(0).to_vec()
    } else {
        let c = crate::fft::dft(&Tensor::new(&[n0], a0.channel(0).to_vec())?, &[0])?;
        idft(&c, &[0], &[n])?.real_part().data().to_vec()
    };

    let kx = derivative_symbols(n);
    let mask = dealias_mask(n);
    let interval = spec.slice_interval();
    let steps = math::step_count(interval, spec.dt);
    let dt = interval / steps as f64;
    let lin: Vec<f64> = (0..n).map(|j| {
        let k = math::TAU * math::wavenumber(j, n) as f64;
        -spec.nu * k * k
    }).collect();
    let half: Vec<f64> = lin.iter().map(|&l| math::exp(0.5 * dt * l)).collect();
    let full: Vec<f64> = half.iter().map(|e| e * e).collect();

    let mut out = Vec::with_capacity(spec.n_t_out * n);
    out.extend_from_slice(&u0);
    let mut ur = u0;
    let mut ui = vec![0.0; n];
    fft_1d(&mut ur, &mut ui, false, 1.0 / n as f64)?;
    let mut buf = Spectral::new(n);
    for slice in 1..spec.n_t_out {
        for _ in 0..steps {
            rk4_step(&mut ur, &mut ui, dt, &half, &full, &kx, &mask, &mut buf)?;
        }
        let u = buf.physical(&ur, &ui)?;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!("burgers solution non-finite before slice {slice}")));
        }
        out.extend(u);
    }
    GridFunction::new(Tensor::new(&[spec.n_t_out, n], out)?, true)
}

struct Spectral {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Spectral {
    fn new(n: usize) -> Self {
        Spectral { re: vec![0.0; n], im: vec![0.0; n] }
    }

    fn physical(&mut self, cr: &[f64], ci: &[f64]) -> Result<Vec<f64>> {
        self.re.copy_from_slice(cr);
        self.im.copy_from_slice(ci);
        fft_1d(&mut self.re, &mut self.im, true, 1.0)?;
        Ok(self.re.clone())
    }

    /// Dealiased `-(u²/2)_x` in Fourier space.
    fn nonlinear(&mut self, cr: &[f64], ci: &[f64], kx: &[f64], mask: &[bool]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = cr.len();
        self.re.copy_from_slice(cr);
        self.im.copy_from_slice(ci);
        fft_1d(&mut self.re, &mut self.im, true, 1.0)?;
        for j in 0..n {
            self.re[j] = 0.5 * self.re[j] * self.re[j];
            self.im[j] = 0.0;
        }
        fft_1d(&mut self.re, &mut self.im, false, 1.0 / n as f64)?;
        let mut nr = vec![0.0; n];
        let mut ni = vec![0.0; n];
        for j in 0..n {
            if mask[j] {
                // -(i k) w
                nr[j] = kx[j] * self.im[j];
                ni[j] = -kx[j] * self.re[j];
            }
        }
        Ok((nr, ni))
    }
}

#[allow(clippy::too_many_arguments)]
fn rk4_step(
    ur: &mut [f64],
    ui: &mut [f64],
    dt: f64,
    half: &[f64],
    full: &[f64],
    kx: &[f64],
    mask: &[bool],
    buf: &mut Spectral,
) -> Result<()> {
    let n = ur.len();
    let (ar, ai) = buf.nonlinear(ur, ui, kx, mask)?;
    let stage = |h: f64, kr: &[f64], ki: &[f64]| -> (Vec<f64>, Vec<f64>) {
        ((0..n).map(|j| half[j] * (ur[j] + h * dt * kr[j])).collect(), (0..n).map(|j| half[j] * (ui[j] + h * dt * ki[j])).collect())
    };
    let (sr, si) = stage(0.5, &ar, &ai);
    let (br, bi) = buf.nonlinear(&sr, &si, kx, mask)?;
    let sr: Vec<f64> = (0..n).map(|j| half[j] * ur[j] + 0.5 * dt * br[j]).collect();
    let si: Vec<f64> = (0..n).map(|j| half[j] * ui[j] + 0.5 * dt * bi[j]).collect();
    let (cr, ci) = buf.nonlinear(&sr, &si, kx, mask)?;
    let sr: Vec<f64> = (0..n).map(|j| full[j] * ur[j] + dt * half[j] * cr[j]).collect();
    let si: Vec<f64> = (0..n).map(|j| full[j] * ui[j] + dt * half[j] * ci[j]).collect();
    let (dr, di) = buf.nonlinear(&sr, &si, kx, mask)?;
    for j in 0..n {
        ur[j] = full[j] * ur[j] + dt / 6.0 * (full[j] * ar[j] + 2.0 * half[j] * (br[j] + cr[j]) + dr[j]);
        ui[j] = full[j] * ui[j] + dt / 6.0 * (full[j] * ai[j] + 2.0 * half[j] * (bi[j] + ci[j]) + di[j]);
    }
    Ok(())
}
