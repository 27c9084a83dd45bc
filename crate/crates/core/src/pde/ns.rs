use alloc::format;
use alloc::vec::Vec;

use super::{dealias_mask, derivative_symbols, forward, inverse_real};
use crate::error::{shape_err, Error, Result};
use crate::fft::{check_pow2, dft, idft};
use crate::grid::GridFunction;
use crate::math;
use crate::tensor::Tensor;

/// Incompressible 2-d Navier-Stokes in vorticity form on the periodic unit
/// square, forced by `forcing_amplitude * sin(2π forcing_wavenumber y)`.
///
/// Output slices are taken at `t_j = j T / (n_t_out - 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct NsSpec {
    pub nu: f64,
    pub forcing_wavenumber: u32,
    pub forcing_amplitude: f64,
    pub t_final: f64,
    pub dt: f64,
    pub n_solver: usize,
    pub n_t_out: usize,
}

impl Default for NsSpec {
    fn default() -> Self {
        NsSpec { nu: 1e-3, forcing_wavenumber: 4, forcing_amplitude: 0.1, t_final: 1.0, dt: 1e-3, n_solver: 64, n_t_out: 11 }
    }
}

impl NsSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) {
            return Err(Error::Config(format!("ns.nu must be positive, got {}", self.nu)));
        }
        if self.forcing_wavenumber < 1 {
            return Err(Error::Config("ns.forcing_wavenumber must be at least 1".into()));
        }
        if !(self.dt > 0.0) || !(self.t_final > 0.0) {
            return Err(Error::Config("ns.dt and ns.t_final must be positive".into()));
        }
        if self.n_t_out < 2 {
            return Err(Error::Config("ns.n_t_out must be at least 2".into()));
        }
        check_pow2(self.n_solver).map_err(|_| Error::Config(format!("ns.n_solver must be a power of two, got {}", self.n_solver)))
    }
}

/// `Σ w²` per time slice of a space-time field `[n_t, ...]`.
pub fn enstrophy(w: &GridFunction) -> Vec<f64> {
    (0..w.channels()).map(|t| w.channel(t).iter().map(|v| v * v).sum()).collect()
}

struct Operators {
    n: usize,
    kx: Vec<f64>,
    mask: Vec<bool>,
    inv_lap: Vec<f64>,
    lap: Vec<f64>,
}

impl Operators {
    fn new(n: usize) -> Self {
        let kx = derivative_symbols(n);
        let m1 = dealias_mask(n);
        let mut mask = Vec::with_capacity(n * n);
        let mut inv_lap = Vec::with_capacity(n * n);
        let mut lap = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                mask.push(m1[i] && m1[j]);
                let (a, b) = (math::TAU * math::wavenumber(i, n) as f64, math::TAU * math::wavenumber(j, n) as f64);
                let k2 = a * a + b * b;
                lap.push(-k2);
                inv_lap.push(if k2 == 0.0 { 0.0 } else { 1.0 / k2 });
            }
        }
        Operators { n, kx, mask, inv_lap, lap }
    }

    /// Multiplies a spectrum by `i k_axis`.
    fn derivative(&self, c: &Tensor, axis: usize) -> Tensor {
        let n = self.n;
        let (re, im) = (c.data(), c.imag().unwrap());
        let mut or = alloc::vec![0.0; n * n];
        let mut oi = alloc::vec![0.0; n * n];
        for p in 0..n * n {
            let k = if axis == 0 { self.kx[p / n] } else { self.kx[p % n] };
            or[p] = -k * im[p];
            oi[p] = k * re[p];
        }
        Tensor::complex(&[n, n], or, oi).expect("matching planes")
    }

    /// Dealiased `-(u · grad w)` plus forcing, in Fourier space.
    fn rhs(&self, w_hat: &Tensor, forcing: &Tensor) -> Result<Tensor> {
        let n = self.n;
        let psi = scale_by(w_hat, &self.inv_lap);
        let u = inverse_real(&self.derivative(&psi, 1), &[0, 1])?;
        let v = inverse_real(&self.derivative(&psi, 0), &[0, 1])?.scale(-1.0);
        let wx = inverse_real(&self.derivative(w_hat, 0), &[0, 1])?;
        let wy = inverse_real(&self.derivative(w_hat, 1), &[0, 1])?;
        let adv: Vec<f64> = (0..n * n).map(|p| -(u.data()[p] * wx.data()[p] + v.data()[p] * wy.data()[p])).collect();
        let mut a = forward(&Tensor::new(&[n, n], adv)?, &[0, 1])?;
        let (re, im) = (forcing.data(), forcing.imag().unwrap());
        let (shape, mut ar, ai) = a.into_parts();
        let mut ai = ai.unwrap();
        for p in 0..n * n {
            if self.mask[p] {
                ar[p] += re[p];
                ai[p] += im[p];
            } else {
                ar[p] = 0.0;
                ai[p] = 0.0;
            }
        }
        a = Tensor::complex(&shape, ar, ai)?;
        Ok(a)
    }
}

fn scale_by(c: &Tensor, s: &[f64]) -> Tensor {
    let re = c.data().iter().zip(s).map(|(a, b)| a * b).collect();
    let im = c.imag().unwrap().iter().zip(s).map(|(a, b)| a * b).collect();
    Tensor::complex(c.shape(), re, im).expect("matching planes")
}

/// Space-time vorticity `[n_t_out, n_solver, n_solver]` from `w0: [1, n, n]`.
///
/// Stream function by Fourier inversion of the Laplacian, 2/3-rule
/// dealiasing, Crank-Nicolson for diffusion and Heun for advection.
pub fn solve_ns_vorticity(w0: &GridFunction, spec: &NsSpec) -> Result<GridFunction> {
    spec.validate()?;
    let res = w0.resolution();
    if w0.dim() != 2 || w0.channels() != 1 || !w0.periodic() || res[0] != res[1] {
        return Err(shape_err!("navier-stokes expects a periodic square [1, n, n] vorticity, got {:?}", w0.values().shape()));
    }
    let n = spec.n_solver;
    if res[0] > n {
        return Err(shape_err!("initial vorticity resolution {} exceeds solver resolution {n}", res[0]));
    }
    let base = w0.values().reshape(&[res[0], res[1]])?;
    let mut w_hat = dft(&base, &[0, 1])?;
    if res[0] != n {
        w_hat = dft(&idft(&w_hat, &[0, 1], &[n, n])?.real_part(), &[0, 1])?;
    }
    let ops = Operators::new(n);
    let force_field: Vec<f64> = (0..n * n)
        .map(|p| spec.forcing_amplitude * math::sin(math::TAU * spec.forcing_wavenumber as f64 * (p % n) as f64 / n as f64))
        .collect();
    let forcing = forward(&Tensor::new(&[n, n], force_field)?, &[0, 1])?;

    let interval = spec.t_final / (spec.n_t_out - 1) as f64;
    let steps = math::step_count(interval, spec.dt);
    let dt = interval / steps as f64;
    let explicit: Vec<f64> = ops.lap.iter().map(|l| 1.0 + 0.5 * dt * spec.nu * l).collect();
    let implicit: Vec<f64> = ops.lap.iter().map(|l| 1.0 / (1.0 - 0.5 * dt * spec.nu * l)).collect();

    let mut out = Vec::with_capacity(spec.n_t_out * n * n);
    out.extend_from_slice(inverse_real(&w_hat, &[0, 1])?.data());
    for slice in 1..spec.n_t_out {
        for _ in 0..steps {
            let n0 = ops.rhs(&w_hat, &forcing)?;
            let lhs = scale_by(&w_hat, &explicit);
            let pred = scale_by(&lhs.add(&n0.scale(dt))?, &implicit);
            let n1 = ops.rhs(&pred, &forcing)?;
            w_hat = scale_by(&lhs.add(&n0.add(&n1)?.scale(0.5 * dt))?, &implicit);
        }
        let w = inverse_real(&w_hat, &[0, 1])?;
        if !w.all_finite() {
            return Err(Error::Divergence(format!("vorticity non-finite before slice {slice}")));
        }
        out.extend_from_slice(w.data());
    }
    GridFunction::new(Tensor::new(&[spec.n_t_out, n, n], out)?, true)
}
