use alloc::vec::Vec;

use crate::autodiff::{Graph, Var};
use crate::error::{shape_err, Error, Result};
use crate::grid::GridFunction;
use crate::train::{adam_step, relative_l2, AdamConfig, AdamState, GridModel};

#[derive(Debug, Clone, PartialEq)]
pub struct InversionResult {
    /// Best iterate by objective value, `init` included.
    pub recovered: GridFunction,
    /// Objective at every iterate, the last one after the final step.
    pub losses: Vec<f64>,
    pub best_loss: f64,
    pub best_step: usize,
    /// Relative L2 of `recovered` against the true input when one was given.
    pub relative_error: Option<f64>,
    pub diverged: bool,
}

/// Squared first differences of `x: [c, n_1, ..]` per unit length, averaged
/// over points and summed over axes.
fn gradient_penalty(g: &mut Graph, x: Var, periodic: bool) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    let mut total: Option<Var> = None;
    for (axis, &n) in shape.iter().enumerate().skip(1) {
        let h = if periodic { n as f64 } else { (n - 1) as f64 };
        let diff = if periodic {
            let next = g.roll(x, axis, -1)?;
            g.sub(next, x)?
        } else if n > 1 {
            let hi = g.narrow(x, axis, 1, n - 1)?;
            let lo = g.narrow(x, axis, 0, n - 1)?;
            g.sub(hi, lo)?
        } else {
            continue;
        };
        let d = g.scale(diff, h)?;
        let d = g.square(d)?;
        let m = g.mean(d)?;
        total = Some(match total {
            None => m,
            Some(t) => g.add(t, m)?,
        });
    }
    match total {
        Some(t) => Ok(t),
        None => {
            let z = g.scale(x, 0.0)?;
            g.sum(z)
        }
    }
}

fn objective<M: GridModel>(model: &M, x: &GridFunction, y_obs: &GridFunction, weight: f64, grad: bool) -> Result<(f64, Option<crate::Tensor>)> {
    let mut g = Graph::new();
    let vars = model.bind(&mut g, false);
    let xv = if grad { g.param(x.values().clone()) } else { g.constant(x.values().clone()) };
    let y = model.forward_grid(&mut g, &vars, xv, x.periodic(), y_obs.resolution())?;
    let t = g.constant(y_obs.values().clone());
    let d = g.sub(y, t)?;
    let d = g.square(d)?;
    let data = g.mean(d)?;
    let loss = if weight > 0.0 {
        let reg = gradient_penalty(&mut g, xv, x.periodic())?;
        let reg = g.scale(reg, weight)?;
        g.add(data, reg)?
    } else {
        data
    };
    let value = g.value(loss).item();
    if !grad {
        return Ok((value, None));
    }
    let grads = g.backward(loss)?;
    Ok((value, Some(grads.get_or_zeros(xv, x.values()))))
}

/// Recovers an input whose image under the frozen `model` matches `y_obs`,
/// minimizing `mean |model(x) - y_obs|^2 + tikhonov_weight * mean |grad x|^2`
/// by Adam on `x` from `init`.
pub fn invert<M: GridModel>(
    model: &M,
    y_obs: &GridFunction,
    init: &GridFunction,
    steps: usize,
    adam: &AdamConfig,
    tikhonov_weight: f64,
    truth: Option<&GridFunction>,
) -> Result<InversionResult> {
    adam.validate()?;
    if !(tikhonov_weight >= 0.0) {
        return Err(Error::Config("tikhonov_weight must be non-negative".into()));
    }
    if let Some(t) = truth {
        if !t.same_layout(init) {
            return Err(shape_err!("true input {:?} vs init {:?}", t.values().shape(), init.values().shape()));
        }
    }
    let mut x = init.clone();
    let mut params = alloc::vec![x.values().clone()];
    let mut state = AdamState::new(&params);
    let mut best = init.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_step = 0;
    let mut losses = Vec::with_capacity(steps + 1);
    let mut diverged = false;
    for step in 0..=steps {
        let (l, grad) = objective(model, &x, y_obs, tikhonov_weight, step < steps)?;
        if !l.is_finite() {
            diverged = true;
            break;
        }
        losses.push(l);
        if l < best_loss {
            best_loss = l;
            best = x.clone();
            best_step = step;
        }
        if let Some(gx) = grad {
            match adam_step(&mut params, &[gx], adam, adam.lr, &mut state) {
                Ok(()) => x = GridFunction::new(params[0].clone(), init.periodic())?,
                Err(Error::Divergence(_)) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }
    if losses.is_empty() {
        return Err(Error::Divergence("inversion objective is not finite at the initial guess".into()));
    }
    let relative_error = truth.map(|t| relative_l2(&best, t)).transpose()?;
    Ok(InversionResult { recovered: best, losses, best_loss, best_step, relative_error, diverged })
}
