use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Error, Result};
use crate::grid::GridFunction;
use crate::math;
use crate::pde::{darcy_face_coefficients, resample, PdeMeta, ResampleMethod, Sample};
use crate::tensor::Tensor;
use super::GridModel;

/// `‖pred - truth‖ / ‖truth‖` over all channels and points.
pub fn relative_l2(pred: &GridFunction, truth: &GridFunction) -> Result<f64> {
    if pred.values().shape() != truth.values().shape() {
        return Err(shape_err!("relative_l2: {:?} vs {:?}", pred.values().shape(), truth.values().shape()));
    }
    let den = truth.values().norm();
    if den == 0.0 {
        return Err(Error::UndefinedMetric("relative L2 against a zero-norm reference".into()));
    }
    Ok(pred.values().sub(truth.values())?.norm() / den)
}

/// Graph form of [`relative_l2`] with a constant reference.
pub fn relative_l2_graph(g: &mut Graph, pred: Var, truth: &Tensor) -> Result<Var> {
    let den = truth.norm();
    if den == 0.0 {
        return Err(Error::UndefinedMetric("relative L2 against a zero-norm reference".into()));
    }
    let t = g.constant(truth.clone());
    let d = g.sub(pred, t)?;
    let s = g.square(d)?;
    let s = g.sum(s)?;
    let n = g.sqrt(s)?;
    g.scale(n, 1.0 / den)
}

/// Residual of `u_t + u u_x - nu u_xx` on a space-time field `u: [n_t, n]`
/// with slices `dt` apart. `x`-derivatives are spectral; the time
/// derivative is second-order central inside and one-sided at both ends.
/// `linear` drops the advection term (heat equation).
pub fn burgers_residual_graph(g: &mut Graph, u: Var, nu: f64, dt: f64, linear: bool) -> Result<Var> {
    let shape = g.shape(u).to_vec();
    if shape.len() != 2 || shape[0] < 3 {
        return Err(shape_err!("burgers residual needs [n_t >= 3, n], got {shape:?}"));
    }
    let (nt, n) = (shape[0], shape[1]);
    let kx = crate::pde::derivative_symbols(n);
    let ik = g.constant(Tensor::complex(&[n], vec![0.0; n], kx)?);
    let k2 = g.constant(Tensor::new(&[n], (0..n).map(|j| {
        let k = math::TAU * math::wavenumber(j, n) as f64;
        -k * k
    }).collect())?);
    let c = g.dft(u, &[1])?;
    let cx = g.mul(c, ik)?;
    let ux = g.idft(cx, &[1], &[n])?;
    let ux = g.real(ux)?;
    let cxx = g.mul(c, k2)?;
    let uxx = g.idft(cxx, &[1], &[n])?;
    let uxx = g.real(uxx)?;

    let slice = |g: &mut Graph, s: usize, len: usize| g.narrow(u, 0, s, len);
    let hi = slice(g, 2, nt - 2)?;
    let lo = slice(g, 0, nt - 2)?;
    let mid = g.sub(hi, lo)?;
    let mid = g.scale(mid, 0.5 / dt)?;
    let one_sided = |g: &mut Graph, a: usize, b: usize, c: usize, sign: f64| -> Result<Var> {
        let (ua, ub, uc) = (slice(g, a, 1)?, slice(g, b, 1)?, slice(g, c, 1)?);
        let ua = g.scale(ua, -3.0)?;
        let ub = g.scale(ub, 4.0)?;
        let s = g.add(ua, ub)?;
        let s = g.sub(s, uc)?;
        g.scale(s, sign * 0.5 / dt)
    };
    let first = one_sided(g, 0, 1, 2, 1.0)?;
    let last = one_sided(g, nt - 1, nt - 2, nt - 3, -1.0)?;
    let ut = g.concat(&[first, mid, last], 0)?;

    let diff = g.scale(uxx, nu)?;
    let mut r = g.sub(ut, diff)?;
    if !linear {
        let adv = g.mul(u, ux)?;
        r = g.add(r, adv)?;
    }
    Ok(r)
}

/// Value-level [`burgers_residual_graph`] on a space-time grid function.
pub fn burgers_residual(u: &GridFunction, nu: f64, dt: f64, linear: bool) -> Result<GridFunction> {
    if u.dim() != 1 || !u.periodic() {
        return Err(shape_err!("burgers residual needs a periodic [n_t, n] field"));
    }
    let mut g = Graph::new();
    let x = g.constant(u.values().clone());
    let r = burgers_residual_graph(&mut g, x, nu, dt, linear)?;
    GridFunction::new(g.value(r).clone(), true)
}

/// Interior residual `-div(a grad u) - f` of the Darcy stencil and the
/// boundary values of `u`, for `u: [n, m]` on the `j / n` lattice.
///
/// Returns `(residual, boundary)`: `residual` is zero on boundary points,
/// `boundary` is `u` masked to boundary points.
pub fn darcy_residual_graph(g: &mut Graph, u: Var, a: &GridFunction, f_const: f64) -> Result<(Var, Var)> {
    let (east, north) = darcy_face_coefficients(a)?;
    let (n, m) = (a.resolution()[0], a.resolution()[1]);
    if g.shape(u) != [n, m] {
        return Err(shape_err!("darcy residual: field {:?} vs coefficient [{n}, {m}]", g.shape(u)));
    }
    let (hx, hy) = ((n * n) as f64, (m * m) as f64);
    let west = roll_tensor(&east, 0, 1);
    let south = roll_tensor(&north, 1, 1);
    let e = g.constant(east.scale(hx));
    let w = g.constant(west.scale(hx));
    let nn = g.constant(north.scale(hy));
    let s = g.constant(south.scale(hy));

    let mut total: Option<Var> = None;
    for (coef, axis, shift) in [(e, 0, -1isize), (w, 0, 1), (nn, 1, -1), (s, 1, 1)] {
        let nb = g.roll(u, axis, shift)?;
        let d = g.sub(u, nb)?;
        let t = g.mul(d, coef)?;
        total = Some(match total {
            None => t,
            Some(acc) => g.add(acc, t)?,
        });
    }
    let au = total.expect("four faces");
    let f = g.constant(Tensor::full(&[n, m], f_const));
    let r = g.sub(au, f)?;
    let interior = g.constant(Tensor::new(&[n, m], (0..n * m).map(|p| if p / m != 0 && p % m != 0 { 1.0 } else { 0.0 }).collect())?);
    let boundary = g.constant(Tensor::new(&[n, m], (0..n * m).map(|p| if p / m == 0 || p % m == 0 { 1.0 } else { 0.0 }).collect())?);
    let r = g.mul(r, interior)?;
    let b = g.mul(u, boundary)?;
    Ok((r, b))
}

fn roll_tensor(t: &Tensor, axis: usize, shift: isize) -> Tensor {
    let mut g = Graph::new();
    let v = g.constant(t.clone());
    let r = g.roll(v, axis, shift).expect("valid axis");
    g.value(r).clone()
}

/// Value-level Darcy residual (interior, zero on the boundary) and the mean
/// square of the boundary values.
pub fn darcy_residual(u: &GridFunction, a: &GridFunction, f_const: f64) -> Result<(GridFunction, f64)> {
    if u.values().shape() != a.values().shape() || u.channels() != 1 {
        return Err(shape_err!("darcy residual: field {:?} vs coefficient {:?}", u.values().shape(), a.values().shape()));
    }
    let res = u.resolution().to_vec();
    let mut g = Graph::new();
    let x = g.constant(u.values().reshape(&res)?);
    let (r, b) = darcy_residual_graph(&mut g, x, a, f_const)?;
    let nb = boundary_count(res[0], res[1]);
    let bpen = g.value(b).norm_sq() / nb as f64;
    let mut shape = vec![1];
    shape.extend_from_slice(&res);
    Ok((GridFunction::new(g.value(r).reshape(&shape)?, u.periodic())?, bpen))
}

fn boundary_count(n: usize, m: usize) -> usize {
    n + m - 1
}

fn interior_count(n: usize, m: usize) -> usize {
    (n - 1) * (m - 1)
}

/// Mean-square interior residual of `u` against the Darcy stencil.
pub fn darcy_residual_ms(u: &GridFunction, a: &GridFunction, f_const: f64) -> Result<f64> {
    let (r, _) = darcy_residual(u, a, f_const)?;
    let res = u.resolution();
    Ok(r.values().norm_sq() / interior_count(res[0], res[1]) as f64)
}

/// Weights and resolutions of the composite physics-informed objective.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct LossSpec {
    pub w_data: f64,
    pub w_pde: f64,
    /// Resolution of the data term; `None` uses the stored output resolution.
    pub res_data: Option<usize>,
    /// Resolution of the physics term; `None` means four times the data resolution.
    pub res_pde: Option<usize>,
    /// Weight of the boundary (Darcy) or initial-condition (Burgers) penalty inside the physics term.
    pub constraint_weight: f64,
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec { w_data: 1.0, w_pde: 0.1, res_data: None, res_pde: None, constraint_weight: 1.0 }
    }
}

impl LossSpec {
    pub fn data_only() -> Self {
        LossSpec { w_pde: 0.0, ..LossSpec::default() }
    }

    pub fn physics_only(res_pde: usize) -> Self {
        LossSpec { w_data: 0.0, w_pde: 1.0, res_pde: Some(res_pde), ..LossSpec::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.w_data >= 0.0 && self.w_pde >= 0.0) || !(self.w_data + self.w_pde > 0.0) {
            return Err(Error::Config(format!("loss weights must be non-negative with a positive sum, got w_data={} w_pde={}", self.w_data, self.w_pde)));
        }
        if let (Some(d), Some(p)) = (self.res_data, self.res_pde) {
            if self.w_data > 0.0 && self.w_pde > 0.0 && p < d {
                return Err(Error::Config(format!("loss.res_pde = {p} is below loss.res_data = {d}")));
            }
        }
        if !(self.constraint_weight >= 0.0) {
            return Err(Error::Config("loss.constraint_weight must be non-negative".into()));
        }
        Ok(())
    }

    fn data_resolution(&self, sample: &Sample) -> usize {
        self.res_data.unwrap_or(sample.output.resolution()[0])
    }

    fn pde_resolution(&self, sample: &Sample) -> usize {
        self.res_pde.unwrap_or(4 * self.data_resolution(sample))
    }
}

/// Picks a stored copy of `f` at resolution `n`, subsampling when possible.
fn stored_at(low: &GridFunction, high: Option<&GridFunction>, n: usize) -> Option<GridFunction> {
    let want = vec![n; low.dim()];
    for cand in [Some(low), high].into_iter().flatten() {
        if cand.resolution() == want.as_slice() {
            return Some(cand.clone());
        }
    }
    for cand in [high, Some(low)].into_iter().flatten() {
        if cand.resolution()[0] > n {
            if let Ok(s) = resample(cand, &want, ResampleMethod::Subsample) {
                return Some(s);
            }
        }
    }
    None
}

/// Data term: relative L2 of the model output at the data resolution.
pub fn data_loss_graph<M: GridModel>(g: &mut Graph, model: &M, vars: &[Var], sample: &Sample, spec: &LossSpec) -> Result<Var> {
    let n = spec.data_resolution(sample);
    let truth = stored_at(&sample.output, sample.output_high.as_ref(), n)
        .ok_or_else(|| Error::Config(format!("no stored output at data resolution {n}")))?;
    let x = g.constant(sample.input.values().clone());
    let y = model.forward_grid(g, vars, x, sample.input.periodic(), truth.resolution())?;
    relative_l2_graph(g, y, truth.values())
}

/// Physics term at the physics resolution: mean-square residual plus the
/// weighted boundary or initial-condition penalty.
pub fn physics_loss_graph<M: GridModel>(
    g: &mut Graph,
    model: &M,
    vars: &[Var],
    sample: &Sample,
    meta: Option<&PdeMeta>,
    spec: &LossSpec,
) -> Result<Var> {
    let meta = meta.ok_or_else(|| Error::Config("physics loss requested without PDE metadata".into()))?;
    let n = spec.pde_resolution(sample);
    let x = g.constant(sample.input.values().clone());
    let dim = sample.input.dim();
    let res = vec![n; dim];
    let y = model.forward_grid(g, vars, x, sample.input.periodic(), &res)?;
    match *meta {
        PdeMeta::Darcy { f_const } => {
            let a = stored_at(&sample.input, sample.input_high.as_ref(), n)
                .ok_or_else(|| Error::Config(format!("no stored coefficient at physics resolution {n}")))?;
            let u = g.reshape(y, &[n, n])?;
            let (r, b) = darcy_residual_graph(g, u, &a, f_const)?;
            let r2 = g.square(r)?;
            let r2 = g.sum(r2)?;
            let r2 = g.scale(r2, 1.0 / interior_count(n, n) as f64)?;
            let b2 = g.square(b)?;
            let b2 = g.sum(b2)?;
            let b2 = g.scale(b2, spec.constraint_weight / boundary_count(n, n) as f64)?;
            g.add(r2, b2)
        }
        PdeMeta::Burgers { nu, t_final } => {
            let nt = model.out_channels();
            let dt = t_final / (nt - 1) as f64;
            let r = burgers_residual_graph(g, y, nu, dt, false)?;
            let r2 = g.square(r)?;
            let r2 = g.mean(r2)?;
            let a0 = resample(&sample.input, &res, ResampleMethod::Spectral)?;
            let first = g.narrow(y, 0, 0, 1)?;
            let a0 = g.constant(a0.into_values());
            let d = g.sub(first, a0)?;
            let d = g.square(d)?;
            let d = g.mean(d)?;
            let d = g.scale(d, spec.constraint_weight)?;
            g.add(r2, d)
        }
        PdeMeta::Ns { .. } => Err(Error::Config("physics loss is implemented for burgers and darcy only".into())),
    }
}

/// `w_data * data + w_pde * physics`, one forward pass per active term.
pub fn pino_loss_graph<M: GridModel>(
    g: &mut Graph,
    model: &M,
    vars: &[Var],
    sample: &Sample,
    meta: Option<&PdeMeta>,
    spec: &LossSpec,
) -> Result<Var> {
    spec.validate()?;
    let mut total = None;
    if spec.w_data > 0.0 {
        let d = data_loss_graph(g, model, vars, sample, spec)?;
        total = Some(g.scale(d, spec.w_data)?);
    }
    if spec.w_pde > 0.0 {
        let p = physics_loss_graph(g, model, vars, sample, meta, spec)?;
        let p = g.scale(p, spec.w_pde)?;
        total = Some(match total {
            None => p,
            Some(t) => g.add(t, p)?,
        });
    }
    Ok(total.expect("validated weights"))
}

/// Value of [`pino_loss_graph`].
pub fn pino_loss<M: GridModel>(model: &M, sample: &Sample, meta: Option<&PdeMeta>, spec: &LossSpec) -> Result<f64> {
    let mut g = Graph::new();
    let vars = model.bind(&mut g, false);
    let l = pino_loss_graph(&mut g, model, &vars, sample, meta, spec)?;
    Ok(g.value(l).item())
}

/// Loss and parameter gradients (ordered like [`NeuralOperatorModel::params`]).
pub fn pino_loss_and_grad<M: GridModel>(model: &M, sample: &Sample, meta: Option<&PdeMeta>, spec: &LossSpec) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let vars = model.bind(&mut g, true);
    let l = pino_loss_graph(&mut g, model, &vars, sample, meta, spec)?;
    let grads = g.backward(l)?;
    let params = model.params();
    let out = vars.iter().zip(params).map(|(&v, p)| grads.get_or_zeros(v, p)).collect();
    Ok((g.value(l).item(), out))
}
