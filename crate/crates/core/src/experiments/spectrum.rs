use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fft::{check_pow2, dft};
use crate::grid::GridFunction;
use crate::math;
use crate::pde::{resample, ResampleMethod, Sample};
use crate::train::GridModel;

/// Energies below this are treated as dissipated in log comparisons.
pub const LOG_FLOOR: f64 = 1e-12;

/// Radial energy spectrum of a periodic 1-d or square 2-d field.
///
/// Bin `k` sums `|c|^2` over modes with `round(|k_vec|) = k`, using the
/// `1/N`-normalized transform and every mode of the FFT layout once, so the
/// bins sum to the mean of `u^2`. Channels are averaged.
pub fn energy_spectrum(u: &GridFunction) -> Result<Vec<f64>> {
    let res = u.resolution();
    if !u.periodic() {
        return Err(Error::InvalidDomain("energy spectra need periodic fields".into()));
    }
    if res.len() > 2 || (res.len() == 2 && res[0] != res[1]) {
        return Err(Error::Invalid(alloc::format!("energy spectrum supports 1-d or square 2-d grids, got {res:?}")));
    }
    let n = res[0];
    check_pow2(n)?;
    let d = res.len();
    let axes: Vec<usize> = (1..=d).collect();
    let c = dft(u.values(), &axes)?;
    let (re, im) = (c.data(), c.imag().expect("complex spectrum"));
    let half = (n / 2) as f64;
    let top = math::round(half * math::sqrt(d as f64)) as usize;
    let mut bins = vec![0.0; top + 1];
    let per_channel = u.num_points();
    for (p, (r, i)) in re.iter().zip(im).enumerate() {
        let q = p % per_channel;
        let mut k2 = 0.0;
        let mut rest = q;
        for _ in 0..d {
            let k = math::wavenumber(rest % n, n) as f64;
            k2 += k * k;
            rest /= n;
        }
        bins[math::round(math::sqrt(k2)) as usize] += r * r + i * i;
    }
    let inv = 1.0 / u.channels() as f64;
    bins.iter_mut().for_each(|b| *b *= inv);
    Ok(bins)
}

/// `sum_{k > nyquist} (log E_model(k) - log E_true(k))^2` over bins where the
/// true energy exceeds [`LOG_FLOOR`]; model energies are clamped at the floor.
pub fn log_spectrum_discrepancy(model: &[f64], truth: &[f64], nyquist: usize) -> f64 {
    model
        .iter()
        .zip(truth)
        .enumerate()
        .filter(|&(k, (_, &t))| k > nyquist && t > LOG_FLOOR)
        .map(|(_, (&m, &t))| {
            let d = math::ln(m.max(LOG_FLOOR)) - math::ln(t);
            d * d
        })
        .sum()
}

/// How a spectrum candidate produces its high-resolution field.
#[derive(Debug)]
pub enum Predictor<'a, M> {
    /// Operator queried directly at the test resolution.
    Operator(&'a M),
    /// Prediction at the training resolution, bilinearly upsampled.
    Interpolated(&'a M),
    /// The stored high-resolution truth itself.
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectrumReport {
    pub test_resolution: usize,
    pub train_resolution: usize,
    /// Bins above this wavenumber are beyond what the training grid resolves.
    pub nyquist: usize,
    pub energy_true: Vec<f64>,
    pub names: Vec<String>,
    /// Mean energy per bin, one row per candidate.
    pub energy_models: Vec<Vec<f64>>,
    /// Discrepancy of each candidate's mean spectrum.
    pub discrepancy: Vec<f64>,
    /// `per_sample[m][s]`: discrepancy of candidate `m` on test sample `s`.
    pub per_sample: Vec<Vec<f64>>,
}

impl SpectrumReport {
    pub fn bins(&self) -> usize {
        self.energy_true.len()
    }

    /// Fraction of samples on which candidate `a` scores no worse than `b`.
    pub fn fraction_no_worse(&self, a: usize, b: usize) -> f64 {
        let pairs = self.per_sample[a].iter().zip(&self.per_sample[b]);
        let n = self.per_sample[a].len().max(1);
        pairs.filter(|(x, y)| x <= y).count() as f64 / n as f64
    }
}

/// Compares super-Nyquist spectra of several candidates with the truth on
/// the samples' high-resolution outputs.
pub fn spectrum_experiment<M: GridModel>(
    candidates: &[(String, Predictor<'_, M>)],
    samples: &[&Sample],
    train_resolution: usize,
) -> Result<SpectrumReport> {
    if samples.is_empty() {
        return Err(Error::Config("spectrum experiment needs test samples".into()));
    }
    let truth_of = |s: &Sample| {
        s.output_high.clone().ok_or_else(|| Error::Config("spectrum experiment needs high-resolution truth".into()))
    };
    let first = truth_of(samples[0])?;
    let test_res = first.resolution().to_vec();
    let train_res = vec![train_resolution; test_res.len()];
    let nyquist = train_resolution / 2;
    let mut energy_true: Vec<f64> = Vec::new();
    let mut per_true = Vec::with_capacity(samples.len());
    for s in samples {
        let e = energy_spectrum(&truth_of(s)?)?;
        accumulate(&mut energy_true, &e, samples.len());
        per_true.push(e);
    }
    let mut energy_models = Vec::new();
    let mut per_sample = Vec::new();
    let mut discrepancy = Vec::new();
    for (_, cand) in candidates {
        let mut mean: Vec<f64> = Vec::new();
        let mut scores = Vec::with_capacity(samples.len());
        for (s, et) in samples.iter().zip(&per_true) {
            let field = match cand {
                Predictor::Operator(m) => m.predict(&s.input, &test_res)?,
                Predictor::Interpolated(m) => resample(&m.predict(&s.input, &train_res)?, &test_res, ResampleMethod::Bilinear)?,
                Predictor::Oracle => truth_of(s)?,
            };
            let e = energy_spectrum(&field)?;
            scores.push(log_spectrum_discrepancy(&e, et, nyquist));
            accumulate(&mut mean, &e, samples.len());
        }
        discrepancy.push(log_spectrum_discrepancy(&mean, &energy_true, nyquist));
        energy_models.push(mean);
        per_sample.push(scores);
    }
    Ok(SpectrumReport {
        test_resolution: test_res[0],
        train_resolution,
        nyquist,
        energy_true,
        names: candidates.iter().map(|(n, _)| n.clone()).collect(),
        energy_models,
        discrepancy,
        per_sample,
    })
}

fn accumulate(mean: &mut Vec<f64>, e: &[f64], count: usize) {
    if mean.is_empty() {
        mean.resize(e.len(), 0.0);
    }
    for (m, v) in mean.iter_mut().zip(e) {
        *m += v / count as f64;
    }
}
