//! Discretized functions on the unit box.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;

/// Channel-valued samples on an equispaced grid over `[0, 1]^d`.
///
/// Periodic grids place point `j` at `j / n` (endpoint excluded); other grids
/// at `j / (n - 1)`. Values are stored as `[channels, n_1, ..., n_d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: Tensor,
    periodic: bool,
}

impl GridFunction {
    pub fn new(values: Tensor, periodic: bool) -> Result<Self> {
        if values.ndim() < 2 {
            return Err(shape_err!("grid function needs [channels, n_1, ...], got {:?}", values.shape()));
        }
        if values.is_complex() {
            return Err(Error::InvalidDomain("grid functions are real-valued".into()));
        }
        if !periodic && values.shape()[1..].iter().any(|&n| n < 2) {
            return Err(shape_err!("non-periodic grids need at least two points per axis"));
        }
        Ok(GridFunction { values, periodic })
    }

    /// Samples `f(x)` (one value per channel) on a grid of the given resolution.
    pub fn from_fn(resolution: &[usize], channels: usize, periodic: bool, f: impl Fn(&[f64], &mut [f64])) -> Result<Self> {
        let mut shape = vec![channels];
        shape.extend_from_slice(resolution);
        let mut values = Tensor::zeros(&shape);
        let npts: usize = resolution.iter().product();
        let mut x = vec![0.0; resolution.len()];
        let mut out = vec![0.0; channels];
        for p in 0..npts {
            grid_point(resolution, periodic, p, &mut x);
            f(&x, &mut out);
            for (c, &v) in out.iter().enumerate() {
                values.data_mut()[c * npts + p] = v;
            }
        }
        GridFunction::new(values, periodic)
    }

    pub fn zeros(resolution: &[usize], channels: usize, periodic: bool) -> Result<Self> {
        let mut shape = vec![channels];
        shape.extend_from_slice(resolution);
        GridFunction::new(Tensor::zeros(&shape), periodic)
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn into_values(self) -> Tensor {
        self.values
    }

    pub fn periodic(&self) -> bool {
        self.periodic
    }

    pub fn channels(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn resolution(&self) -> &[usize] {
        &self.values.shape()[1..]
    }

    pub fn dim(&self) -> usize {
        self.values.ndim() - 1
    }

    pub fn num_points(&self) -> usize {
        self.resolution().iter().product()
    }

    /// Values of channel `c` as a flat slice over grid points.
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.num_points();
        &self.values.data()[c * n..(c + 1) * n]
    }

    /// Coordinates of flat grid point `p`.
    pub fn point(&self, p: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        grid_point(self.resolution(), self.periodic, p, &mut x);
        x
    }

    pub fn same_layout(&self, other: &GridFunction) -> bool {
        self.values.shape() == other.values.shape() && self.periodic == other.periodic
    }
}

/// Coordinate of index `j` on an axis of extent `n`.
pub fn grid_coordinate(j: usize, n: usize, periodic: bool) -> f64 {
    if periodic {
        j as f64 / n as f64
    } else {
        j as f64 / (n - 1) as f64
    }
}

pub(crate) fn grid_point(resolution: &[usize], periodic: bool, mut p: usize, x: &mut [f64]) {
    for ax in (0..resolution.len()).rev() {
        let n = resolution[ax];
        x[ax] = grid_coordinate(p % n, n, periodic);
        p /= n;
    }
}

/// Function samples at scattered points with quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloudFunction {
    dim: usize,
    points: Vec<f64>,
    values: Tensor,
    weights: Vec<f64>,
    periodic: bool,
}

impl PointCloudFunction {
    /// `points` are flattened `[N, dim]` coordinates, `values` is `[N, channels]`.
    pub fn new(dim: usize, points: Vec<f64>, values: Tensor, weights: Vec<f64>, periodic: bool) -> Result<Self> {
        if dim == 0 || !points.len().is_multiple_of(dim) {
            return Err(shape_err!("{} coordinates do not form {dim}-d points", points.len()));
        }
        let n = points.len() / dim;
        if values.ndim() != 2 || values.shape()[0] != n || weights.len() != n {
            return Err(shape_err!("{n} points, values {:?}, {} weights", values.shape(), weights.len()));
        }
        if points.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::InvalidDomain("point outside [0, 1]^d".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidDomain("quadrature weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidDomain(alloc::format!("weights sum to {total}, expected the unit volume")));
        }
        Ok(PointCloudFunction { dim, points, values, weights, periodic })
    }

    /// Midpoint cloud of `n` cells per axis with weights `1/n^d`.
    pub fn uniform(n: usize, dim: usize, channels: usize, f: impl Fn(&[f64], &mut [f64])) -> Result<Self> {
        let total = n.pow(dim as u32);
        let mut points = Vec::with_capacity(total * dim);
        let mut vals = Vec::with_capacity(total * channels);
        let mut out = vec![0.0; channels];
        for p in 0..total {
            let mut x = vec![0.0; dim];
            let mut q = p;
            for ax in (0..dim).rev() {
                x[ax] = ((q % n) as f64 + 0.5) / n as f64;
                q /= n;
            }
            f(&x, &mut out);
            points.extend_from_slice(&x);
            vals.extend_from_slice(&out);
        }
        let values = Tensor::new(&[total, channels], vals)?;
        PointCloudFunction::new(dim, points, values, vec![1.0 / total as f64; total], false)
    }

    /// Grid points of `g` as a cloud with uniform weights.
    pub fn from_grid(g: &GridFunction) -> Result<Self> {
        let n = g.num_points();
        let c = g.channels();
        let mut points = Vec::with_capacity(n * g.dim());
        for p in 0..n {
            points.extend(g.point(p));
        }
        let values = g.values().reshape(&[c, n])?.permute(&[1, 0])?;
        PointCloudFunction::new(g.dim(), points, values, vec![1.0 / n as f64; n], g.periodic())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn periodic(&self) -> bool {
        self.periodic
    }

    pub fn channels(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn with_values(&self, values: Tensor) -> Result<Self> {
        PointCloudFunction::new(self.dim, self.points.clone(), values, self.weights.clone(), self.periodic)
    }
}

/// Euclidean distance in the unit box, wrapping each axis when `periodic`.
pub fn distance(x: &[f64], y: &[f64], periodic: bool) -> f64 {
    let mut s = 0.0;
    for (a, b) in x.iter().zip(y) {
        let mut d = (a - b).abs();
        if periodic {
            d = d.min(1.0 - d);
        }
        s += d * d;
    }
    crate::math::sqrt(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_coordinates_follow_convention() {
        assert_eq!(grid_coordinate(3, 8, true), 0.375);
        assert_eq!(grid_coordinate(7, 8, false), 1.0);
        let g = GridFunction::from_fn(&[4, 2], 1, true, |x, o| o[0] = 10.0 * x[0] + x[1]).unwrap();
        assert_eq!(g.channel(0), &[0.0, 0.5, 2.5, 3.0, 5.0, 5.5, 7.5, 8.0]);
    }

    #[test]
    fn cloud_invariants() {
        let ok = PointCloudFunction::uniform(16, 2, 1, |_, o| o[0] = 1.0).unwrap();
        assert!((ok.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let bad = PointCloudFunction::new(1, vec![0.2, 0.4], Tensor::zeros(&[2, 1]), vec![0.3, 0.3], false);
        assert!(matches!(bad, Err(Error::InvalidDomain(_))));
        let outside = PointCloudFunction::new(1, vec![1.2], Tensor::zeros(&[1, 1]), vec![1.0], false);
        assert!(outside.is_err());
        let mismatch = PointCloudFunction::new(1, vec![0.2, 0.4], Tensor::zeros(&[3, 1]), vec![0.5, 0.5], false);
        assert!(matches!(mismatch, Err(Error::Shape(_))));
    }

    #[test]
    fn periodic_distance_wraps() {
        assert!((distance(&[0.05], &[0.95], true) - 0.1).abs() < 1e-12);
        assert!((distance(&[0.05], &[0.95], false) - 0.9).abs() < 1e-12);
    }
}
