//! Desk-scale harnesses: energy spectra, zero-shot super-resolution, the
//! resolution sweep against a fixed-grid CNN, and inversion through a
//! frozen operator.

mod cnn;
mod convergence;
mod inversion;
mod spectrum;
mod superres;

pub use cnn::{cnn_forward, CnnConfig, FixedGridCnn};
pub use convergence::{convergence_experiment, Architecture, ConvergenceCell, ConvergenceReport, ConvergenceSpec};
pub use inversion::{invert, InversionResult};
pub use spectrum::{energy_spectrum, log_spectrum_discrepancy, spectrum_experiment, Predictor, SpectrumReport, LOG_FLOOR};
pub use superres::{superres_experiment, SuperresReport};
