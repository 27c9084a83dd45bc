//! Spectra, super-resolution, the CNN baseline, the resolution sweep and inversion.

use neurop_core::experiments::*;
use neurop_core::gradcheck::{finite_difference_gradient, max_relative_error};
use neurop_core::math;
use neurop_core::pde::*;
use neurop_core::rng::Rng;
use neurop_core::train::{AdamConfig, GridModel, LossSpec, TrainConfig, Serial};
use neurop_core::{Error, Graph, GridFunction, ModelConfig, NeuralOperatorModel, Result, Tensor, Var};

fn grid2(n: usize, f: impl Fn(f64, f64) -> f64) -> GridFunction {
    GridFunction::from_fn(&[n, n], 1, true, |x, o| o[0] = f(x[0], x[1])).unwrap()
}

fn grid1(n: usize, f: impl Fn(f64) -> f64) -> GridFunction {
    GridFunction::from_fn(&[n], 1, true, |x, o| o[0] = f(x[0])).unwrap()
}

fn mean_sq(u: &GridFunction) -> f64 {
    u.values().norm_sq() / u.values().len() as f64
}

#[test]
fn energy_spectrum_examples() {
    let amp = 1.7;
    let e = energy_spectrum(&grid2(32, |x, _| amp * math::sin(math::TAU * 3.0 * x))).unwrap();
    assert!((e[3] - 0.5 * amp * amp).abs() < 1e-12);
    assert!(e.iter().enumerate().all(|(k, &v)| k == 3 || v < 1e-24));
    let e1 = energy_spectrum(&grid1(32, |x| amp * math::sin(math::TAU * 3.0 * x))).unwrap();
    assert!((e1[3] - 0.5 * amp * amp).abs() < 1e-12);
    assert_eq!(e1.len(), 17);
    // bins reach the grid corner
    assert_eq!(e.len(), 24);

    let c = energy_spectrum(&grid2(16, |_, _| -0.6)).unwrap();
    assert!((c[0] - 0.36).abs() < 1e-14 && c[1..].iter().all(|&v| v < 1e-28));

    let mut r = Rng::new(3);
    let u = GridFunction::new(Tensor::new(&[2, 16, 16], (0..512).map(|_| r.normal()).collect()).unwrap(), true).unwrap();
    let total: f64 = energy_spectrum(&u).unwrap().iter().sum();
    assert!((total - mean_sq(&u)).abs() < 1e-10);

    let flat = GridFunction::zeros(&[16, 8], 1, true).unwrap();
    assert!(matches!(energy_spectrum(&flat), Err(Error::Invalid(_))));
    assert!(energy_spectrum(&GridFunction::zeros(&[12], 1, true).unwrap()).is_err());
}

#[test]
fn bilinear_upsampling_distorts_high_frequencies() {
    let truth = grid1(64, |x| math::sin(math::TAU * 6.0 * x) + 0.05 * math::sin(math::TAU * 20.0 * x));
    let coarse = resample(&truth, &[16], ResampleMethod::Subsample).unwrap();
    let up = resample(&coarse, &[64], ResampleMethod::Bilinear).unwrap();
    let (et, eb) = (energy_spectrum(&truth).unwrap(), energy_spectrum(&up).unwrap());
    // images of the k = 6 mode appear at 16 - 6 and 16 + 6
    assert!(eb[10] > 1e-4 && et[10] < 1e-20);
    assert!(log_spectrum_discrepancy(&eb, &et, 8) > 1.0);
    assert_eq!(log_spectrum_discrepancy(&et, &et, 8), 0.0);
    // only bins with resolved true energy count
    let lone = grid1(64, |x| math::sin(math::TAU * 6.0 * x));
    assert_eq!(log_spectrum_discrepancy(&eb, &energy_spectrum(&lone).unwrap(), 8), 0.0);
}

fn burgers_data(n_samples: usize, res_in: usize, res_high: usize) -> Dataset {
    let spec = DatasetSpec {
        task: TaskSpec::Burgers(BurgersSpec { nu: 0.05, t_final: 0.5, dt: 1e-3, n_solver: res_high, n_t_out: 3 }),
        grf: GrfSpec { alpha: 2.5, tau: 5.0, scale: 20.0 },
        n_samples,
        n_train: 0,
        res_in,
        res_out: res_in,
        res_high: Some(res_high),
    };
    make_dataset(&spec, 5).unwrap()
}

#[test]
fn spectrum_experiment_oracle_and_baseline() {
    let data = burgers_data(3, 16, 64);
    let samples: Vec<&Sample> = data.test_samples().collect();
    let model = NeuralOperatorModel::init(&ModelConfig::fno(1, 1, 3, 4, 4, 2), 1).unwrap();
    let candidates = vec![
        ("truth".to_string(), Predictor::Oracle),
        ("fno".to_string(), Predictor::Operator(&model)),
        ("bilinear".to_string(), Predictor::Interpolated(&model)),
    ];
    let report = spectrum_experiment(&candidates, &samples, 16).unwrap();
    assert_eq!(report.nyquist, 8);
    assert_eq!(report.bins(), 33);
    assert_eq!(report.discrepancy[0], 0.0);
    assert!(report.per_sample[0].iter().all(|&d| d == 0.0));
    assert!(report.discrepancy[1] > 0.0 && report.discrepancy[2] > 0.0);
    assert_eq!(report.per_sample[1].len(), 3);
    assert_eq!(report.fraction_no_worse(0, 2), 1.0);
    assert!(report.energy_true.iter().chain(report.energy_models.iter().flatten()).all(|&e| e >= 0.0));

    let mut bare = data.clone();
    bare.samples.iter_mut().for_each(|s| s.output_high = None);
    let bare_samples: Vec<&Sample> = bare.test_samples().collect();
    assert!(matches!(spectrum_experiment(&candidates, &bare_samples, 16), Err(Error::Config(_))));
}

/// Spectral interpolation of the input, a stand-in operator whose output is
/// exactly band-limited.
#[derive(Clone)]
struct Interpolant;

impl GridModel for Interpolant {
    fn params(&self) -> Vec<&Tensor> {
        Vec::new()
    }

    fn set_params(&mut self, _: &[Tensor]) -> Result<()> {
        Ok(())
    }

    fn out_channels(&self) -> usize {
        1
    }

    fn forward_grid(&self, g: &mut Graph, _: &[Var], a: Var, _: bool, out: &[usize]) -> Result<Var> {
        let axes: Vec<usize> = (1..=out.len()).collect();
        let c = g.dft(a, &axes)?;
        let y = g.idft(c, &axes, out)?;
        g.real(y)
    }
}

fn band_limited_samples(count: usize) -> Vec<Sample> {
    let mut r = Rng::new(9);
    (0..count)
        .map(|_| {
            let (a, b, p) = (r.normal(), r.normal(), r.uniform());
            let f = move |x: f64, y: f64| a * math::sin(math::TAU * (x + p)) + b * math::cos(math::TAU * (x + 2.0 * y));
            let low = grid2(16, f);
            Sample { input: low.clone(), output: low, input_high: None, output_high: Some(grid2(64, f)) }
        })
        .collect()
}

#[test]
fn superres_experiment_examples() {
    let samples = band_limited_samples(4);
    let refs: Vec<&Sample> = samples.iter().collect();
    let same = superres_experiment(&Interpolant, &refs, 16, 16).unwrap();
    assert_eq!(same.operator, same.baseline);
    assert!(same.operator.iter().all(|&e| e < 1e-13));
    let up = superres_experiment(&Interpolant, &refs, 16, 64).unwrap();
    assert!(up.operator.iter().all(|&e| e < 1e-13));
    assert!(up.baseline.iter().all(|&e| e > 1e-4 && e < 0.2), "{:?}", up.baseline);
    assert_eq!(up.operator_win_rate(), 1.0);
    assert!(superres_experiment(&Interpolant, &refs, 16, 128).is_err());
    assert!(superres_experiment(&Interpolant, &refs, 32, 16).is_err());
}

fn cnn_loss(m: &FixedGridCnn, u: &GridFunction, w: &Tensor) -> f64 {
    let y = cnn_forward(m, u).unwrap();
    y.values().data().iter().zip(w.data()).map(|(a, b)| a * b).sum::<f64>() + 0.5 * y.values().norm_sq()
}

#[test]
fn cnn_examples() {
    let mut cfg = CnnConfig::new(1, 1, &[3, 2]);
    let mut m = FixedGridCnn::init(&cfg, 1).unwrap();
    assert_eq!(m.parameter_count(), cfg.parameter_count());
    assert_eq!(m.parameter_count(), (3 * 9 + 3) + (2 * 3 * 9 + 2) + (2 + 1));
    let u = grid2(8, |x, y| math::sin(math::TAU * x) * math::cos(math::TAU * 2.0 * y));
    let zeros: Vec<Tensor> = m.params().iter().map(|t| Tensor::zeros(t.shape())).collect();
    let mut z = m.clone();
    z.set_params(&zeros).unwrap();
    assert!(cnn_forward(&z, &u).unwrap().values().data().iter().all(|&v| v == 0.0));

    let mut id = FixedGridCnn::init(&CnnConfig::new(1, 1, &[]), 0).unwrap();
    id.set_params(&[Tensor::new(&[1, 1, 1, 1], vec![1.0]).unwrap(), Tensor::zeros(&[1, 1, 1])]).unwrap();
    assert_eq!(cnn_forward(&id, &u).unwrap(), u);
    assert!(cnn_forward(&m, &GridFunction::zeros(&[8, 8], 2, true).unwrap()).is_err());
    assert!(m.predict(&u, &[16, 16]).is_err());
    cfg.kernel = 2;
    assert!(FixedGridCnn::init(&cfg, 0).is_err());

    // the same weights run at any resolution
    assert_eq!(cnn_forward(&m, &grid2(32, |x, _| x)).unwrap().resolution(), &[32, 32]);

    let mut r = Rng::new(4);
    let w = Tensor::new(&[1, 8, 8], (0..64).map(|_| r.normal()).collect()).unwrap();
    let mut g = Graph::new();
    let vars = m.bind(&mut g, true);
    let x = g.constant(u.values().clone());
    let y = m.forward_grid(&mut g, &vars, x, true, &[8, 8]).unwrap();
    let wv = g.constant(w.clone());
    let l1 = g.mul(y, wv).unwrap();
    let l1 = g.sum(l1).unwrap();
    let sq = g.square(y).unwrap();
    let sq = g.sum(sq).unwrap();
    let sq = g.scale(sq, 0.5).unwrap();
    let l = g.add(l1, sq).unwrap();
    let grads = g.backward(l).unwrap();
    let params: Vec<Tensor> = m.params().into_iter().cloned().collect();
    for (i, p) in params.iter().enumerate() {
        let numeric = finite_difference_gradient(
            |probe| {
                let mut ps = params.clone();
                ps[i] = probe.clone();
                m.set_params(&ps)?;
                Ok(cnn_loss(&m, &u, &w))
            },
            p,
            1e-5,
        )
        .unwrap();
        assert!(max_relative_error(&grads.get_or_zeros(vars[i], p), &numeric, 1e-4) < 1e-4, "tensor {i}");
    }
}

#[test]
fn periodic_cnn_is_shift_equivariant() {
    let mut cfg = CnnConfig::new(1, 2, &[4, 4]);
    cfg.periodic_padding = true;
    let m = FixedGridCnn::init(&cfg, 7).unwrap();
    let mut r = Rng::new(1);
    let vals: Vec<f64> = (0..256).map(|_| r.normal()).collect();
    let u = GridFunction::new(Tensor::new(&[1, 16, 16], vals.clone()).unwrap(), true).unwrap();
    let (sy, sx) = (3, 5);
    let shift = |t: &Tensor, c: usize| -> Vec<f64> {
        (0..c * 256).map(|p| {
            let (ch, i, j) = (p / 256, (p / 16) % 16, p % 16);
            t.data()[ch * 256 + ((i + 16 - sy) % 16) * 16 + (j + 16 - sx) % 16]
        }).collect()
    };
    let us = GridFunction::new(Tensor::new(&[1, 16, 16], shift(u.values(), 1)).unwrap(), true).unwrap();
    let a = cnn_forward(&m, &us).unwrap();
    let b = shift(cnn_forward(&m, &u).unwrap().values(), 2);
    let err = a.values().data().iter().zip(&b).fold(0.0f64, |e, (x, y)| e.max((x - y).abs()));
    assert!(err < 1e-8, "{err:e}");
}

#[test]
fn inversion_examples() {
    let model = NeuralOperatorModel::init(&ModelConfig::fno(1, 1, 1, 4, 4, 2), 2).unwrap();
    let x0 = grid1(32, |x| math::sin(math::TAU * x) + 0.3);
    let y = model.predict(&x0, &[32]).unwrap();
    let adam = AdamConfig { lr: 1e-2, weight_decay: 0.0, ..AdamConfig::default() };
    let none = invert(&model, &y, &x0, 0, &adam, 0.0, Some(&x0)).unwrap();
    assert_eq!(none.recovered, x0);
    assert_eq!(none.losses, vec![0.0]);
    assert_eq!(none.relative_error, Some(0.0));

    let fixed = invert(&model, &y, &x0, 20, &adam, 1e-4, None).unwrap();
    // at the true input only the smoothness term remains, close to 2 pi^2 weight
    let smooth = 1e-4 * 2.0 * math::PI * math::PI;
    assert!((fixed.losses[0] - smooth).abs() < 0.05 * smooth, "{}", fixed.losses[0]);
    assert!(fixed.best_loss <= fixed.losses[0]);

    let init = grid1(32, |_| 0.0);
    let run = invert(&model, &y, &init, 200, &AdamConfig { lr: 3e-2, ..adam }, 1e-5, Some(&x0)).unwrap();
    assert_eq!(run.losses.len(), 201);
    assert!(run.losses.iter().all(|l| l.is_finite()) && !run.diverged);
    assert!(run.best_loss <= run.losses[0] && run.best_loss < 0.9 * run.losses[0]);
    assert_eq!(run.losses[run.best_step], run.best_loss);
    assert!(run.relative_error.unwrap() < 1.0);
    assert!(invert(&model, &y, &init, 1, &adam, -1.0, None).is_err());
}

#[test]
fn convergence_experiment_single_cell() {
    let spec = ConvergenceSpec {
        task: TaskSpec::Darcy(DarcySpec { n_solver: 32, ..DarcySpec::default() }),
        grf: GrfSpec::default(),
        n_train: 4,
        n_test: 2,
        resolutions: vec![16],
        data_seed: 1,
        model_seed: 2,
        train: TrainConfig { epochs: 2, batch_size: 2, loss: LossSpec::data_only(), ..TrainConfig::default() },
        normalize: true,
    };
    let mut fno = ModelConfig::fno(2, 1, 1, 4, 3, 1);
    fno.coord_features = true;
    let mut seen = 0;
    let report = convergence_experiment(&[("fno".into(), Architecture::Operator(fno.clone()))], &spec, &Serial, &mut |_| seen += 1).unwrap();
    assert_eq!(report.cells.len(), 1);
    assert_eq!(seen, 1);
    let cell = &report.cells[0];
    assert!(cell.test_error.is_finite() && cell.resolution == 16 && cell.parameter_count == fno.parameter_count());

    let mut gno = ModelConfig::fno(2, 1, 1, 3, 1, 1);
    gno.blocks = vec![neurop_core::operator::BlockConfig::Graph { radius: 0.15, kernel_hidden: 4 }];
    let archs = vec![
        ("gno".to_string(), Architecture::Operator(gno)),
        ("cnn".to_string(), Architecture::Cnn(CnnConfig::new(1, 1, &[3]))),
    ];
    let two = ConvergenceSpec { resolutions: vec![8, 16], train: TrainConfig { epochs: 1, ..spec.train }, ..spec };
    let report = convergence_experiment(&archs, &two, &Serial, &mut |_| {}).unwrap();
    assert_eq!(report.cells.len(), 4);
    for name in ["gno", "cnn"] {
        let counts: Vec<usize> = report.cells.iter().filter(|c| c.architecture == name).map(|c| c.parameter_count).collect();
        assert_eq!(counts[0], counts[1]);
        assert_eq!(report.errors(name).len(), 2);
        assert!(report.spread(name) >= 1.0);
    }
}
