use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Every failure the engine can report.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes are incompatible for the requested operation.
    Shape(String),
    /// Operation applied outside its mathematical domain (complex input to a real op, non-positive coefficient, ...).
    InvalidDomain(String),
    /// Transform extent not supported by the radix-2 kernels.
    UnsupportedSize(usize),
    /// Call violates an API contract such as a non-scalar loss.
    Contract(String),
    /// Configuration value out of range.
    Config(String),
    /// Grid too coarse for the retained Fourier modes.
    Undersampled { resolution: usize, k_max: usize },
    /// Iterative solver failed to reach its tolerance.
    Solver { iterations: usize, residual: f64 },
    /// Non-finite values appeared during time stepping or optimization.
    Divergence(String),
    /// A metric is undefined for the given input, e.g. a zero-norm reference.
    UndefinedMetric(String),
    /// Request that is well-formed but not meaningful, e.g. upsampling by stride picking.
    Invalid(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(m) => write!(f, "shape error: {m}"),
            Error::InvalidDomain(m) => write!(f, "invalid domain: {m}"),
            Error::UnsupportedSize(n) => write!(f, "unsupported transform size {n} (power of two required)"),
            Error::Contract(m) => write!(f, "contract violation: {m}"),
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::Undersampled { resolution, k_max } => {
                write!(f, "resolution {resolution} cannot carry modes up to k_max={k_max} (needs >= {})", 2 * k_max + 1)
            }
            Error::Solver { iterations, residual } => {
                write!(f, "solver did not converge after {iterations} iterations (relative residual {residual:e})")
            }
            Error::Divergence(m) => write!(f, "divergence: {m}"),
            Error::UndefinedMetric(m) => write!(f, "undefined metric: {m}"),
            Error::Invalid(m) => write!(f, "invalid request: {m}"),
        }
    }
}

impl core::error::Error for Error {}

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::error::Error::Shape(alloc::format!($($arg)*)) };
}
pub(crate) use shape_err;
