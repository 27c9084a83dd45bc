//! Scalar math routed through `libm` so the crate builds without `std`.

pub const PI: f64 = core::f64::consts::PI;
pub const TAU: f64 = core::f64::consts::TAU;

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}
#[inline]
pub fn sin(x: f64) -> f64 {
    libm::sin(x)
}
#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}
#[inline]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}
#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}
#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}
#[inline]
pub fn pow(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}
#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}
#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

/// Wavenumber of index `j` in FFT order for an axis of extent `n`.
///
/// Indices below `n/2` are non-negative modes, indices above are negative.
/// For even `n` the index `n/2` is the Nyquist mode and reported as `+n/2`.
#[inline]
pub fn wavenumber(j: usize, n: usize) -> i64 {
    if 2 * j <= n {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// `true` when `j` is the Nyquist index of an even extent.
#[inline]
pub fn is_nyquist(j: usize, n: usize) -> bool {
    n.is_multiple_of(2) && 2 * j == n
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

/// Number of equal steps of size at most `dt` covering `span`.
pub fn step_count(span: f64, dt: f64) -> usize {
    let ratio = span / dt;
    // tolerate round-off in spans that are whole multiples of dt
    let n = ceil(ratio - 1e-9 * ratio.max(1.0));
    (n as usize).max(1)
}
