use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::pde::{resample, ResampleMethod, Sample};
use crate::train::{relative_l2, GridModel};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SuperresReport {
    pub res_low: usize,
    pub res_high: usize,
    /// Per-sample relative L2 of the operator queried at `res_high`.
    pub operator: Vec<f64>,
    /// Per-sample relative L2 of the `res_low` prediction bilinearly upsampled.
    pub baseline: Vec<f64>,
}

impl SuperresReport {
    pub fn mean_operator(&self) -> f64 {
        mean(&self.operator)
    }

    pub fn mean_baseline(&self) -> f64 {
        mean(&self.baseline)
    }

    /// Fraction of samples where the operator error does not exceed the baseline's.
    pub fn operator_win_rate(&self) -> f64 {
        let wins = self.operator.iter().zip(&self.baseline).filter(|(o, b)| o <= b).count();
        wins as f64 / self.operator.len().max(1) as f64
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Truth at resolution `n`: an exact stored copy or a stride subsample of a finer one.
pub(crate) fn truth_at(s: &Sample, n: usize) -> Result<GridFunction> {
    let want: Vec<usize> = alloc::vec![n; s.output.dim()];
    for cand in [Some(&s.output), s.output_high.as_ref()].into_iter().flatten() {
        if cand.resolution() == want.as_slice() {
            return Ok(cand.clone());
        }
    }
    match &s.output_high {
        Some(h) if h.resolution()[0] > n => resample(h, &want, ResampleMethod::Subsample),
        _ => Err(Error::Config(alloc::format!("no stored truth at resolution {n}"))),
    }
}

/// Zero-shot super-resolution: the operator evaluated at `res_high` against
/// bilinear upsampling of its own `res_low` prediction.
pub fn superres_experiment<M: GridModel>(model: &M, samples: &[&Sample], res_low: usize, res_high: usize) -> Result<SuperresReport> {
    if res_high < res_low {
        return Err(Error::Config(alloc::format!("res_high {res_high} is below res_low {res_low}")));
    }
    let mut operator = Vec::with_capacity(samples.len());
    let mut baseline = Vec::with_capacity(samples.len());
    for s in samples {
        let truth = truth_at(s, res_high)?;
        let d = truth.dim();
        let high = alloc::vec![res_high; d];
        let direct = model.predict(&s.input, &high)?;
        let native = model.predict(&s.input, &alloc::vec![res_low; d])?;
        let up = resample(&native, &high, ResampleMethod::Bilinear)?;
        operator.push(relative_l2(&direct, &truth)?);
        baseline.push(relative_l2(&up, &truth)?);
    }
    Ok(SuperresReport { res_low, res_high, operator, baseline })
}
