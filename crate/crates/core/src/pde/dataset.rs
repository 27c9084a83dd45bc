use alloc::format;
use alloc::vec::Vec;

use super::{resample, sample_grf, solve_burgers, solve_darcy, solve_ns_vorticity, BurgersSpec, DarcySpec, GrfSpec, NsSpec, ResampleMethod};
use crate::error::{Error, Result};
use crate::fft::check_pow2;
use crate::grid::GridFunction;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Which PDE generates the data, with its solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "kebab-case"))]
pub enum TaskSpec {
    Burgers(BurgersSpec),
    Darcy(DarcySpec),
    Ns(NsSpec),
}

impl TaskSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TaskSpec::Burgers(_) => "burgers",
            TaskSpec::Darcy(_) => "darcy",
            TaskSpec::Ns(_) => "ns",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TaskSpec::Burgers(_) => 1,
            _ => 2,
        }
    }

    pub fn n_solver(&self) -> usize {
        match self {
            TaskSpec::Burgers(s) => s.n_solver,
            TaskSpec::Darcy(s) => s.n_solver,
            TaskSpec::Ns(s) => s.n_solver,
        }
    }

    /// Output channels: time slices for evolution problems, 1 for Darcy.
    pub fn out_channels(&self) -> usize {
        match self {
            TaskSpec::Burgers(s) => s.n_t_out,
            TaskSpec::Darcy(_) => 1,
            TaskSpec::Ns(s) => s.n_t_out,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TaskSpec::Burgers(s) => s.validate(),
            TaskSpec::Darcy(s) => s.validate(),
            TaskSpec::Ns(s) => s.validate(),
        }
    }

    pub fn meta(&self) -> PdeMeta {
        match *self {
            TaskSpec::Burgers(s) => PdeMeta::Burgers { nu: s.nu, t_final: s.t_final },
            TaskSpec::Darcy(s) => PdeMeta::Darcy { f_const: s.f_const },
            TaskSpec::Ns(s) => PdeMeta::Ns { nu: s.nu, t_final: s.t_final },
        }
    }
}

/// What a physics loss needs to know about a sample beyond its arrays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PdeMeta {
    Burgers { nu: f64, t_final: f64 },
    Darcy { f_const: f64 },
    Ns { nu: f64, t_final: f64 },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct DatasetSpec {
    pub task: TaskSpec,
    pub grf: GrfSpec,
    pub n_samples: usize,
    pub n_train: usize,
    pub res_in: usize,
    pub res_out: usize,
    /// Resolution of the held-out copies used for super-resolution tests.
    pub res_high: Option<usize>,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.grf.validate(self.task.dim())?;
        if self.n_train > self.n_samples {
            return Err(Error::Config(format!("n_train {} exceeds n_samples {}", self.n_train, self.n_samples)));
        }
        let n = self.task.n_solver();
        for (key, r) in [("res_in", Some(self.res_in)), ("res_out", Some(self.res_out)), ("res_high", self.res_high)] {
            if let Some(r) = r {
                if check_pow2(r).is_err() || r > n {
                    return Err(Error::Config(format!("{key} = {r} must be a power of two no larger than the solver resolution {n}")));
                }
            }
        }
        if let TaskSpec::Darcy(_) = self.task {
            check_pow2(n).map_err(|_| Error::Config(format!("darcy.n_solver must be a power of two for dataset generation, got {n}")))?;
        }
        Ok(())
    }
}

/// One input/output pair, with optional high-resolution copies.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: GridFunction,
    pub output: GridFunction,
    pub input_high: Option<GridFunction>,
    pub output_high: Option<GridFunction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub seed: u64,
    pub samples: Vec<Sample>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Dataset {
    pub fn meta(&self) -> PdeMeta {
        self.spec.task.meta()
    }

    pub fn train_samples(&self) -> impl Iterator<Item = &Sample> {
        self.train.iter().map(|&i| &self.samples[i])
    }

    pub fn test_samples(&self) -> impl Iterator<Item = &Sample> {
        self.test.iter().map(|&i| &self.samples[i])
    }

    /// Assembles a dataset from samples generated elsewhere (for example in
    /// parallel), applying the seed-determined split.
    pub fn assemble(spec: DatasetSpec, seed: u64, samples: Vec<Sample>) -> Result<Self> {
        if samples.len() != spec.n_samples {
            return Err(Error::Config(format!("expected {} samples, got {}", spec.n_samples, samples.len())));
        }
        let (train, test) = split(spec.n_samples, spec.n_train, seed);
        Ok(Dataset { spec, seed, samples, train, test })
    }
}

fn split(n: usize, n_train: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let perm = Rng::split(seed, u64::MAX).permutation(n);
    let mut train = perm[..n_train].to_vec();
    let mut test = perm[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn at(u: &GridFunction, n: usize) -> Result<GridFunction> {
    let res = alloc::vec![n; u.dim()];
    resample(u, &res, ResampleMethod::Subsample)
}

/// Generates sample `index`; the input draw uses the stream `(seed, index)`
/// so samples are independent of generation order.
pub fn generate_sample(spec: &DatasetSpec, seed: u64, index: usize) -> Result<Sample> {
    let n = spec.task.n_solver();
    let dim = spec.task.dim();
    let draw_seed = Rng::split(seed, index as u64).next_u64();
    let field = sample_grf(&spec.grf, &alloc::vec![n; dim], draw_seed)?;
    let (input, output) = match spec.task {
        TaskSpec::Burgers(s) => {
            let u = solve_burgers(&field, &s)?;
            (field, u)
        }
        TaskSpec::Darcy(s) => {
            let a: Vec<f64> = field.values().data().iter().map(|&v| if v >= 0.0 { s.a_plus } else { s.a_minus }).collect();
            let a = GridFunction::new(Tensor::new(field.values().shape(), a)?, true)?;
            let u = solve_darcy(&a, &s)?;
            (a, u)
        }
        TaskSpec::Ns(s) => {
            let w = solve_ns_vorticity(&field, &s)?;
            (field, w)
        }
    };
    Ok(Sample {
        input: at(&input, spec.res_in)?,
        output: at(&output, spec.res_out)?,
        input_high: spec.res_high.map(|r| at(&input, r)).transpose()?,
        output_high: spec.res_high.map(|r| at(&output, r)).transpose()?,
    })
}

/// Generates every sample in order and splits them into train and test.
pub fn make_dataset(spec: &DatasetSpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let samples = (0..spec.n_samples).map(|i| generate_sample(spec, seed, i)).collect::<Result<Vec<_>>>()?;
    Dataset::assemble(spec.clone(), seed, samples)
}
