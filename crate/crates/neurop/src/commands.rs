//! The `gen-data`, `train` and `eval` subcommands as library calls.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use neurop_core::experiments::{
    convergence_experiment, invert, spectrum_experiment, superres_experiment, Predictor,
};
use neurop_core::operator::Normalization;
use neurop_core::pde::{generate_sample, make_dataset, Dataset, Sample};
use neurop_core::train::{finetune_instance, pino_loss, relative_l2, train_loop, GridModel, History, LossSpec};
use neurop_core::GridFunction;
use serde::Serialize;

use crate::config::{ExperimentConfig, RunConfig};
use crate::exec::executor;
use crate::format::{load_checkpoint, load_dataset, save_checkpoint, save_dataset, sha256_hex, write_atomic, Checkpoint};
use crate::model::{in_channels, with_normalization, AnyModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    SameRes,
    Superres,
    Spectrum,
    Convergence,
    Invert,
    Finetune,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::SameRes => "same-res",
            EvalMode::Superres => "superres",
            EvalMode::Spectrum => "spectrum",
            EvalMode::Convergence => "convergence",
            EvalMode::Invert => "invert",
            EvalMode::Finetune => "finetune",
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value)?;
    text.push(b'\n');
    write_atomic(path, &text)
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    write_atomic(path, &w.into_inner()?)
}

fn ensure_finite(what: &str, values: impl IntoIterator<Item = f64>) -> Result<()> {
    if let Some(v) = values.into_iter().find(|v| !v.is_finite()) {
        bail!("{what} contains a non-finite value ({v})");
    }
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenDataSummary {
    pub dataset: PathBuf,
    pub n_samples: usize,
    pub sha256: String,
}

/// Generates the configured dataset into `out_dir/dataset.nods`.
pub fn gen_data(cfg: &RunConfig) -> Result<GenDataSummary> {
    let spec = &cfg.data;
    let data = if cfg.workers > 1 && cfg!(feature = "parallel") {
        generate_parallel(cfg)?
    } else {
        make_dataset(spec, cfg.seed)?
    };
    let path = cfg.out_dir.join("dataset.nods");
    let bytes = save_dataset(&path, &data)?;
    write_atomic(&cfg.out_dir.join("gen-data.config.json"), cfg.effective_json().as_bytes())?;
    Ok(GenDataSummary { dataset: path, n_samples: data.samples.len(), sha256: sha256_hex(&bytes) })
}

#[cfg(feature = "parallel")]
fn generate_parallel(cfg: &RunConfig) -> Result<Dataset> {
    use rayon::prelude::*;
    cfg.data.validate()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
    let samples = pool.install(|| {
        (0..cfg.data.n_samples).into_par_iter().map(|i| generate_sample(&cfg.data, cfg.seed, i)).collect::<neurop_core::Result<Vec<Sample>>>()
    })?;
    Ok(Dataset::assemble(cfg.data.clone(), cfg.seed, samples)?)
}

#[cfg(not(feature = "parallel"))]
fn generate_parallel(cfg: &RunConfig) -> Result<Dataset> {
    let samples = (0..cfg.data.n_samples).map(|i| generate_sample(&cfg.data, cfg.seed, i)).collect::<neurop_core::Result<Vec<_>>>()?;
    Ok(Dataset::assemble(cfg.data.clone(), cfg.seed, samples)?)
}

fn layout(g: &GridFunction) -> String {
    format!("{:?}", g.values().shape())
}

/// Fails with expected and found shapes unless `model` can read `data`.
pub fn check_compatible(model: &AnyModel, data: &Dataset) -> Result<()> {
    let Some(s) = data.samples.first() else { return Ok(()) };
    let (dim, c_in, c_out) = match model {
        AnyModel::Operator(m) => (m.config().dim, m.config().in_channels, m.config().out_channels),
        AnyModel::Cnn(m) => (2, m.config.in_channels, m.config.out_channels),
    };
    ensure!(
        s.input.dim() == dim && s.input.channels() == c_in && s.output.channels() == c_out,
        "model expects inputs [{c_in}, <{dim} axes>] and outputs [{c_out}, ..], dataset holds inputs {} and outputs {}",
        layout(&s.input),
        layout(&s.output)
    );
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainMetrics {
    pub command: &'static str,
    pub effective_config: RunConfig,
    pub dataset: PathBuf,
    pub parameter_count: usize,
    pub wall_clock_seconds: f64,
    pub history: History,
    /// Test loss of the parameters in the best checkpoint, when a test split exists.
    pub best_test_loss: Option<f64>,
    pub best_checkpoint: Option<PathBuf>,
    pub final_checkpoint: PathBuf,
    pub diverged: Option<String>,
}

/// Trains the configured model on `dataset`, writing `best.nock`,
/// `final.nock`, `metrics.json` and `history.csv` under `out_dir`.
pub fn train(cfg: &RunConfig, dataset: &Path) -> Result<TrainMetrics> {
    let start = Instant::now();
    let data = load_dataset(dataset)?;
    ensure!(
        data.spec.task.name() == cfg.data.task.name(),
        "dataset task `{}` does not match config task `{}`",
        data.spec.task.name(),
        cfg.data.task.name()
    );
    let arch = cfg.model.as_ref().context("config has no `model` to train")?;
    let arch = if cfg.normalize {
        ensure!(!data.train.is_empty(), "normalize needs a training split");
        let n = Normalization::fit(data.train_samples().map(|s| &s.input), data.train_samples().map(|s| &s.output))?;
        with_normalization(arch, Some(n))
    } else {
        arch.clone()
    };
    let model = AnyModel::init(&arch, cfg.seed)?;
    check_compatible(&model, &data)?;
    if let Some(s) = data.samples.first() {
        ensure!(in_channels(&arch) == s.input.channels(), "input channel mismatch");
    }
    let exec = executor(cfg.workers)?;
    let best_path = cfg.out_dir.join("best.nock");
    let final_path = cfg.out_dir.join("final.nock");
    let ckpt = |m: &AnyModel, step: usize| Checkpoint { model: m.clone(), seed: cfg.seed, step, loss: cfg.train.loss };
    let mut best_written = false;
    let mut observer = |rec: &neurop_core::train::EpochRecord, m: &AnyModel, improved: bool| {
        if improved {
            save_checkpoint(&best_path, &ckpt(m, rec.epoch + 1)).map_err(|e| neurop_core::Error::Config(format!("{e:#}")))?;
            best_written = true;
        }
        Ok(())
    };
    let outcome = train_loop(&model, &data, &cfg.train, exec.as_ref(), &mut observer)?;
    save_checkpoint(&final_path, &ckpt(&outcome.model, outcome.history.epochs.len()))?;
    let best_test_loss = outcome.history.best_epoch.and_then(|e| outcome.history.epochs[e].test_loss);
    let metrics = TrainMetrics {
        command: "train",
        effective_config: RunConfig { model: Some(arch), ..cfg.clone() },
        dataset: dataset.to_path_buf(),
        parameter_count: model.parameter_count(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        history: outcome.history.clone(),
        best_test_loss,
        best_checkpoint: best_written.then(|| best_path.clone()),
        final_checkpoint: final_path,
        diverged: outcome.diverged.clone(),
    };
    write_json(&cfg.out_dir.join("metrics.json"), &metrics)?;
    let rows: Vec<Vec<String>> = metrics
        .history
        .epochs
        .iter()
        .map(|r| vec![r.epoch.to_string(), num(r.lr), num(r.train_loss), r.test_loss.map(num).unwrap_or_default()])
        .collect();
    write_csv(&cfg.out_dir.join("history.csv"), &["epoch", "lr", "train_loss", "test_loss"].map(String::from), &rows)?;
    if let Some(msg) = &outcome.diverged {
        bail!("training diverged ({msg}); the last finite parameters are in {}", metrics.final_checkpoint.display());
    }
    ensure_finite("training history", metrics.history.epochs.iter().flat_map(|r| [Some(r.train_loss), r.test_loss]).flatten())?;
    Ok(metrics)
}

/// Inputs of an `eval` run beyond the mode.
#[derive(Debug, Clone, Default)]
pub struct EvalArgs {
    pub config: Option<RunConfig>,
    pub checkpoint: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalOutput {
    pub mode: EvalMode,
    pub metrics: serde_json::Value,
    pub json: PathBuf,
    pub csv: PathBuf,
}

#[derive(Serialize)]
struct EvalEnvelope<'a, T: Serialize> {
    command: &'static str,
    mode: EvalMode,
    checkpoint: Option<&'a Path>,
    dataset: Option<&'a Path>,
    effective_config: Option<&'a RunConfig>,
    experiment: &'a ExperimentConfig,
    result: T,
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }
}

fn samples_for<'a>(data: &'a Dataset, exp: &ExperimentConfig) -> Vec<&'a Sample> {
    let take = exp.max_samples.unwrap_or(usize::MAX);
    data.test_samples().take(take).collect()
}

/// Dispatches one evaluation mode and writes `eval-<mode>.json` and `.csv`.
pub fn eval(mode: EvalMode, args: &EvalArgs) -> Result<EvalOutput> {
    let exp = args.config.as_ref().map(|c| c.experiment.clone()).unwrap_or_default();
    let loaded = |what: &str| -> Result<(Checkpoint, Dataset)> {
        let c = args.checkpoint.as_deref().with_context(|| format!("{what} mode needs --checkpoint"))?;
        let d = args.dataset.as_deref().with_context(|| format!("{what} mode needs --dataset"))?;
        let (c, d) = (load_checkpoint(c)?, load_dataset(d)?);
        check_compatible(&c.model, &d)?;
        ensure!(!d.test.is_empty(), "dataset has no test samples to evaluate");
        Ok((c, d))
    };

    let mut table;
    let mut finite: Vec<f64> = Vec::new();
    let result: serde_json::Value = match mode {
        EvalMode::SameRes => {
            let (c, d) = loaded(mode.name())?;
            table = Table::new(&["sample", "relative_l2"]);
            let mut per = Vec::new();
            for (&i, s) in d.test.iter().zip(d.test_samples()) {
                let e = relative_l2(&c.model.predict(&s.input, s.output.resolution())?, &s.output)?;
                table.rows.push(vec![i.to_string(), num(e)]);
                per.push(e);
            }
            let test_loss = per.iter().sum::<f64>() / per.len() as f64;
            finite.push(test_loss);
            serde_json::json!({ "test_loss": test_loss, "per_sample": per, "resolution": d.spec.res_out })
        }
        EvalMode::Superres => {
            let (c, d) = loaded(mode.name())?;
            let high = exp.superres_resolution.or(d.spec.res_high).context("superres mode needs a high-resolution target")?;
            let samples = samples_for(&d, &exp);
            let rep = superres_experiment(&c.model, &samples, d.spec.res_out, high)?;
            table = Table::new(&["sample", "operator_relative_l2", "bilinear_relative_l2"]);
            for (k, (o, b)) in rep.operator.iter().zip(&rep.baseline).enumerate() {
                table.rows.push(vec![d.test[k].to_string(), num(*o), num(*b)]);
            }
            finite.extend(rep.operator.iter().chain(&rep.baseline));
            serde_json::json!({
                "mean_operator": rep.mean_operator(),
                "mean_baseline": rep.mean_baseline(),
                "operator_win_rate": rep.operator_win_rate(),
                "report": rep,
            })
        }
        EvalMode::Spectrum => {
            let (c, d) = loaded(mode.name())?;
            let others = exp.compare.iter().map(|n| Ok((n.name.clone(), load_checkpoint(&n.path)?.model))).collect::<Result<Vec<_>>>()?;
            let mut candidates = vec![("model".to_string(), Predictor::Operator(&c.model))];
            candidates.extend(others.iter().map(|(n, m)| (n.clone(), Predictor::Operator(m))));
            candidates.push(("bilinear".to_string(), Predictor::Interpolated(&c.model)));
            let samples = samples_for(&d, &exp);
            let rep = spectrum_experiment(&candidates, &samples, d.spec.res_out)?;
            let mut header = vec!["wavenumber".to_string(), "energy_true".to_string()];
            header.extend(rep.names.iter().map(|n| format!("energy_{n}")));
            table = Table { header, rows: Vec::new() };
            for k in 0..rep.bins() {
                let mut row = vec![k.to_string(), num(rep.energy_true[k])];
                row.extend(rep.energy_models.iter().map(|e| num(e[k])));
                table.rows.push(row);
            }
            finite.extend(rep.discrepancy.iter().copied());
            let m = rep.names.len();
            let no_worse: Vec<Vec<f64>> = (0..m).map(|a| (0..m).map(|b| rep.fraction_no_worse(a, b)).collect()).collect();
            serde_json::json!({ "fraction_no_worse": no_worse, "report": rep })
        }
        EvalMode::Convergence => {
            let conv = exp.convergence.as_ref().context("convergence mode needs `experiment.convergence` in --config")?;
            let workers = args.config.as_ref().map_or(0, |c| c.workers);
            let archs: Vec<(String, _)> = conv.architectures.iter().map(|a| (a.name.clone(), a.model.clone())).collect();
            let rep = convergence_experiment(&archs, &conv.spec, executor(workers)?.as_ref(), &mut |cell| {
                eprintln!("{} at {}: test error {:.4e}", cell.architecture, cell.resolution, cell.test_error);
            })?;
            table = Table::new(&["architecture", "resolution", "parameter_count", "test_error", "final_train_loss", "diverged"]);
            for cell in &rep.cells {
                table.rows.push(vec![
                    cell.architecture.clone(),
                    cell.resolution.to_string(),
                    cell.parameter_count.to_string(),
                    num(cell.test_error),
                    cell.final_train_loss.map(num).unwrap_or_default(),
                    cell.diverged.to_string(),
                ]);
            }
            finite.extend(rep.cells.iter().map(|c| c.test_error));
            let spread: serde_json::Map<String, serde_json::Value> = archs.iter().map(|(n, _)| (n.clone(), rep.spread(n).into())).collect();
            serde_json::json!({ "spread": spread, "report": rep })
        }
        EvalMode::Invert => {
            let (c, d) = loaded(mode.name())?;
            let ic = exp.invert;
            table = Table::new(&["sample", "step", "loss"]);
            let mut per = Vec::new();
            for (&i, s) in d.test.iter().zip(samples_for(&d, &exp)) {
                let y = c.model.predict(&s.input, s.output.resolution())?;
                let init = GridFunction::zeros(s.input.resolution(), s.input.channels(), s.input.periodic())?;
                let r = invert(&c.model, &y, &init, ic.steps, &ic.adam, ic.tikhonov_weight, Some(&s.input))?;
                for (k, l) in r.losses.iter().enumerate() {
                    table.rows.push(vec![i.to_string(), k.to_string(), num(*l)]);
                }
                let err = r.relative_error.expect("truth supplied");
                finite.push(err);
                per.push(serde_json::json!({
                    "sample": i, "relative_error": err, "best_loss": r.best_loss, "best_step": r.best_step, "diverged": r.diverged,
                }));
            }
            let mean = finite.iter().sum::<f64>() / finite.len().max(1) as f64;
            serde_json::json!({ "mean_relative_error": mean, "per_sample": per })
        }
        EvalMode::Finetune => {
            let (c, d) = loaded(mode.name())?;
            let fc = exp.finetune;
            let meta = d.meta();
            let residual = LossSpec { w_data: 0.0, w_pde: 1.0, constraint_weight: 0.0, ..fc.loss };
            table = Table::new(&["sample", "step", "loss"]);
            let mut per = Vec::new();
            for (&i, s) in d.test.iter().zip(samples_for(&d, &exp)) {
                let before = pino_loss(&c.model, s, Some(&meta), &residual)?;
                let r = finetune_instance(&c.model, s, &meta, &fc.loss, fc.steps, &fc.adam)?;
                let after = pino_loss(&r.model, s, Some(&meta), &residual)?;
                for (k, l) in r.losses.iter().enumerate() {
                    table.rows.push(vec![i.to_string(), k.to_string(), num(*l)]);
                }
                finite.extend([before, after]);
                per.push(serde_json::json!({
                    "sample": i, "residual_before": before, "residual_after": after,
                    "reduction": before / after, "best_loss": r.best_loss, "diverged": r.diverged,
                }));
            }
            serde_json::json!({ "per_sample": per })
        }
    };

    let envelope = EvalEnvelope {
        command: "eval",
        mode,
        checkpoint: args.checkpoint.as_deref(),
        dataset: args.dataset.as_deref(),
        effective_config: args.config.as_ref(),
        experiment: &exp,
        result,
    };
    let json = args.out_dir.join(format!("eval-{}.json", mode.name()));
    let csv = args.out_dir.join(format!("eval-{}.csv", mode.name()));
    write_json(&json, &envelope)?;
    write_csv(&csv, &table.header, &table.rows)?;
    ensure_finite(&format!("{} results", mode.name()), finite)?;
    Ok(EvalOutput { mode, metrics: serde_json::to_value(&envelope)?, json, csv })
}
