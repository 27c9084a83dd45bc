//! Central finite differences, the oracle for every analytic adjoint.

use alloc::vec::Vec;

use crate::error::Result;
use crate::tensor::Tensor;

/// `(f(t + eps e_i) - f(t - eps e_i)) / (2 eps)` for every coordinate of a real `t`.
pub fn finite_difference_gradient<F>(mut f: F, t: &Tensor, eps: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    let mut probe = t.clone();
    let mut grad = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = f(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let down = f(&probe)?;
        probe.data_mut()[i] = orig;
        grad.push((up - down) / (2.0 * eps));
    }
    Tensor::new(t.shape(), grad)
}

/// Largest entrywise relative error `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &Tensor, b: &Tensor, floor: f64) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares() {
        let t = Tensor::from_slice(&[1.0, 2.0]);
        let g = finite_difference_gradient(|x| Ok(x.data().iter().map(|v| v * v).sum()), &t, 1e-5).unwrap();
        assert!((g.data()[0] - 2.0).abs() < 1e-8);
        assert!((g.data()[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn linear_function_is_exact_for_any_eps() {
        let t = Tensor::from_slice(&[0.3, -1.7, 2.0]);
        let w = [2.0, -3.0, 0.5];
        for eps in [1e-1, 1e-3, 1.0] {
            let g = finite_difference_gradient(|x| Ok(x.data().iter().zip(&w).map(|(a, b)| a * b).sum()), &t, eps).unwrap();
            for (gi, wi) in g.data().iter().zip(&w) {
                assert!((gi - wi).abs() < 1e-12);
            }
        }
    }
}
