use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::{pino_loss, pino_loss_and_grad, relative_l2, LossSpec};
use crate::error::{Error, Result};
use crate::math;
use crate::pde::{Dataset, PdeMeta, Sample};
use crate::rng::Rng;
use crate::tensor::Tensor;
use super::GridModel;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs between learning-rate halvings; 0 keeps the rate fixed.
    pub halving_period: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub loss: LossSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 100, batch_size: 8, halving_period: 50, seed: 0, adam: AdamConfig::default(), loss: LossSpec::data_only() }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be positive".into()));
        }
        self.adam.validate()?;
        self.loss.validate()
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.halving_period {
            0 => self.adam.lr,
            p => self.adam.lr * math::pow(0.5, (epoch / p) as f64),
        }
    }
}

/// Runs per-sample loss/gradient jobs. Results must come back in job order
/// so the reduction is deterministic whatever the worker count.
pub trait Executor {
    fn map(&self, jobs: usize, f: &(dyn Fn(usize) -> Result<(f64, Vec<Tensor>)> + Sync)) -> Vec<Result<(f64, Vec<Tensor>)>>;
}

/// Executes jobs one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Serial;

impl Executor for Serial {
    fn map(&self, jobs: usize, f: &(dyn Fn(usize) -> Result<(f64, Vec<Tensor>)> + Sync)) -> Vec<Result<(f64, Vec<Tensor>)>> {
        (0..jobs).map(f).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean training objective over the epoch's mini-batches.
    pub train_loss: f64,
    /// Mean relative L2 on the test split after the epoch.
    pub test_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters scored best (test loss when a test split exists, else train loss).
    pub best_epoch: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    /// Parameters after the last completed epoch.
    pub model: M,
    pub best: M,
    pub history: History,
    /// Set when training stopped on non-finite values; `model` then holds the last finite parameters.
    pub diverged: Option<String>,
}

/// Mean relative L2 of `model` over `samples` at their stored output resolution.
pub fn evaluate<'a, M: GridModel>(model: &M, samples: impl IntoIterator<Item = &'a Sample>) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0;
    for s in samples {
        let pred = model.predict(&s.input, s.output.resolution())?;
        total += relative_l2(&pred, &s.output)?;
        count += 1;
    }
    if count == 0 {
        return Err(Error::UndefinedMetric("evaluation over an empty sample set".into()));
    }
    Ok(total / count as f64)
}

fn batch_gradient<M: GridModel>(
    exec: &dyn Executor,
    model: &M,
    samples: &[&Sample],
    meta: Option<&PdeMeta>,
    loss: &LossSpec,
) -> Result<(f64, Vec<Tensor>)> {
    let job = |i: usize| pino_loss_and_grad(model, samples[i], meta, loss);
    let results = exec.map(samples.len(), &job);
    let mut total = 0.0;
    let mut acc: Option<Vec<Tensor>> = None;
    for r in results {
        let (l, g) = r?;
        total += l;
        match &mut acc {
            None => acc = Some(g),
            Some(a) => {
                for (x, y) in a.iter_mut().zip(&g) {
                    x.add_assign(y);
                }
            }
        }
    }
    let inv = 1.0 / samples.len() as f64;
    let grads = acc.unwrap_or_default().into_iter().map(|t| t.scale(inv)).collect();
    Ok((total * inv, grads))
}

/// Mini-batch Adam on the training split of `data`.
///
/// Batches are drawn from a permutation seeded by `(config.seed, epoch)`;
/// `observer` sees every finished epoch with the current parameters and may
/// persist them.
pub fn train_loop<M: GridModel>(
    model: &M,
    data: &Dataset,
    config: &TrainConfig,
    exec: &dyn Executor,
    observer: &mut dyn FnMut(&EpochRecord, &M, bool) -> Result<()>,
) -> Result<TrainOutcome<M>> {
    config.validate()?;
    if config.epochs > 0 && data.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let meta = data.meta();
    let mut current = model.clone();
    let mut params: Vec<Tensor> = current.params().into_iter().cloned().collect();
    let mut state = AdamState::new(&params);
    let mut history = History::default();
    let mut best = model.clone();
    let mut best_score = f64::INFINITY;
    let has_test = !data.test.is_empty();

    for epoch in 0..config.epochs {
        let lr = config.lr_at(epoch);
        let order = Rng::split(config.seed, epoch as u64).permutation(data.train.len());
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&k| &data.samples[data.train[k]]).collect();
            let step = batch_gradient(exec, &current, &batch, Some(&meta), &config.loss).and_then(|(l, g)| {
                if !l.is_finite() {
                    return Err(Error::Divergence(format!("non-finite training loss at epoch {epoch}")));
                }
                let mut trial = params.clone();
                adam_step(&mut trial, &g, &config.adam, lr, &mut state)?;
                if trial.iter().any(|t| !t.all_finite()) {
                    return Err(Error::Divergence(format!("non-finite parameters at epoch {epoch}")));
                }
                Ok((l, trial))
            });
            match step {
                Ok((l, trial)) => {
                    params = trial;
                    current.set_params(&params)?;
                    sum += l;
                    batches += 1;
                }
                Err(Error::Divergence(msg)) => {
                    return Ok(TrainOutcome { model: current, best, history, diverged: Some(msg) });
                }
                Err(e) => return Err(e),
            }
        }
        let train_loss = sum / batches as f64;
        let test_loss = if has_test { Some(evaluate(&current, data.test_samples())?) } else { None };
        let score = test_loss.unwrap_or(train_loss);
        let improved = score < best_score;
        if improved {
            best_score = score;
            best = current.clone();
            history.best_epoch = Some(epoch);
        }
        let record = EpochRecord { epoch, lr, train_loss, test_loss };
        observer(&record, &current, improved)?;
        history.epochs.push(record);
    }
    Ok(TrainOutcome { model: current, best, history, diverged: None })
}

#[derive(Debug, Clone)]
pub struct FinetuneResult<M> {
    /// Best parameters seen, including the starting point.
    pub model: M,
    /// Objective before each step, followed by the objective after the last step.
    pub losses: Vec<f64>,
    pub best_loss: f64,
    pub diverged: bool,
}

/// Minimizes the physics loss of `spec` (its data weight forced to zero) on
/// one instance, returning the best iterate. `model` is not modified.
pub fn finetune_instance<M: GridModel>(
    model: &M,
    sample: &Sample,
    meta: &PdeMeta,
    spec: &LossSpec,
    steps: usize,
    adam: &AdamConfig,
) -> Result<FinetuneResult<M>> {
    let spec = LossSpec { w_data: 0.0, w_pde: if spec.w_pde > 0.0 { spec.w_pde } else { 1.0 }, ..*spec };
    let mut current = model.clone();
    let mut params: Vec<Tensor> = current.params().into_iter().cloned().collect();
    let mut state = AdamState::new(&params);
    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut losses = Vec::with_capacity(steps + 1);
    let mut diverged = false;
    for step in 0..=steps {
        let evaluated = if step < steps {
            pino_loss_and_grad(&current, sample, Some(meta), &spec).map(|(l, g)| (l, Some(g)))
        } else {
            pino_loss(&current, sample, Some(meta), &spec).map(|l| (l, None))
        };
        let (l, grads) = evaluated?;
        if !l.is_finite() {
            diverged = true;
            break;
        }
        losses.push(l);
        if l < best_loss {
            best_loss = l;
            best = current.clone();
        }
        if let Some(g) = grads {
            match adam_step(&mut params, &g, adam, adam.lr, &mut state) {
                Ok(()) => current.set_params(&params)?,
                Err(Error::Divergence(_)) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(FinetuneResult { model: best, losses, best_loss, diverged })
}
