//! Dense row-major tensors of `f64`, optionally complex.
//!
//! A complex tensor keeps its real and imaginary parts in two planes of the
//! same shape. Shapes are non-empty lists of positive extents; a scalar is
//! shape `[1]`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    re: Vec<f64>,
    im: Option<Vec<f64>>,
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Row-major strides for `shape`.
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn check_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(shape_err!("shape {shape:?} must be non-empty with positive extents"));
    }
    Ok(())
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        check_shape(shape)?;
        if data.len() != numel(shape) {
            return Err(shape_err!("data length {} does not match shape {shape:?}", data.len()));
        }
        Ok(Tensor { shape: shape.to_vec(), re: data, im: None })
    }

    pub fn complex(shape: &[usize], re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        check_shape(shape)?;
        let n = numel(shape);
        if re.len() != n || im.len() != n {
            return Err(shape_err!("complex planes ({}, {}) do not match shape {shape:?}", re.len(), im.len()));
        }
        Ok(Tensor { shape: shape.to_vec(), re, im: Some(im) })
    }

    /// Panics on an invalid shape; meant for internally computed shapes.
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        check_shape(shape).expect("valid shape");
        Tensor { shape: shape.to_vec(), re: vec![value; numel(shape)], im: None }
    }

    pub fn complex_zeros(shape: &[usize]) -> Self {
        let n = numel(shape);
        Tensor { shape: shape.to_vec(), re: vec![0.0; n], im: Some(vec![0.0; n]) }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![1], re: vec![value], im: None }
    }

    pub fn from_slice(data: &[f64]) -> Self {
        Tensor::new(&[data.len().max(1)], if data.is_empty() { vec![0.0] } else { data.to_vec() }).unwrap()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn is_complex(&self) -> bool {
        self.im.is_some()
    }

    pub fn is_scalar(&self) -> bool {
        self.re.len() == 1
    }

    /// Real plane (the whole value for real tensors).
    pub fn data(&self) -> &[f64] {
        &self.re
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.re
    }

    pub fn imag(&self) -> Option<&[f64]> {
        self.im.as_deref()
    }

    pub fn imag_mut(&mut self) -> Option<&mut [f64]> {
        self.im.as_deref_mut()
    }

    pub fn into_parts(self) -> (Vec<usize>, Vec<f64>, Option<Vec<f64>>) {
        (self.shape, self.re, self.im)
    }

    pub(crate) fn from_parts(shape: Vec<usize>, re: Vec<f64>, im: Option<Vec<f64>>) -> Self {
        debug_assert_eq!(numel(&shape), re.len());
        debug_assert!(im.as_ref().is_none_or(|v| v.len() == re.len()));
        Tensor { shape, re, im }
    }

    pub fn item(&self) -> f64 {
        self.re[0]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        check_shape(shape)?;
        if numel(shape) != self.len() {
            return Err(shape_err!("cannot reshape {:?} into {shape:?}", self.shape));
        }
        Ok(Tensor { shape: shape.to_vec(), re: self.re.clone(), im: self.im.clone() })
    }

    /// Promotes a real tensor to complex with a zero imaginary plane.
    pub fn to_complex(&self) -> Tensor {
        let im = self.im.clone().unwrap_or_else(|| vec![0.0; self.re.len()]);
        Tensor { shape: self.shape.clone(), re: self.re.clone(), im: Some(im) }
    }

    pub fn real_part(&self) -> Tensor {
        Tensor { shape: self.shape.clone(), re: self.re.clone(), im: None }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            re: self.re.iter().map(|&x| f(x)).collect(),
            im: self.im.as_ref().map(|v| v.iter().map(|&x| f(x)).collect()),
        }
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|x| x * s)
    }

    /// Elementwise sum of two tensors of identical shape; the result is
    /// complex when either operand is.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(shape_err!("add: {:?} vs {:?}", self.shape, other.shape));
        }
        let re = self.re.iter().zip(&other.re).map(|(a, b)| a + b).collect();
        let im = match (&self.im, &other.im) {
            (None, None) => None,
            (Some(a), None) | (None, Some(a)) => Some(a.clone()),
            (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(x, y)| x + y).collect()),
        };
        Ok(Tensor { shape: self.shape.clone(), re, im })
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.add(&other.scale(-1.0))
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.re.iter_mut().zip(&other.re) {
            *a += b;
        }
        if let Some(oi) = &other.im {
            let si = self.im.get_or_insert_with(|| vec![0.0; oi.len()]);
            for (a, b) in si.iter_mut().zip(oi) {
                *a += b;
            }
        }
    }

    /// Sum of squared moduli.
    pub fn norm_sq(&self) -> f64 {
        let r: f64 = self.re.iter().map(|x| x * x).sum();
        r + self.im.as_ref().map_or(0.0, |v| v.iter().map(|x| x * x).sum())
    }

    pub fn norm(&self) -> f64 {
        crate::math::sqrt(self.norm_sq())
    }

    pub fn sum(&self) -> f64 {
        self.re.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        let r = self.re.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        self.im.as_ref().map_or(r, |v| v.iter().fold(r, |m, x| m.max(x.abs())))
    }

    pub fn all_finite(&self) -> bool {
        self.re.iter().all(|x| x.is_finite()) && self.im.as_ref().is_none_or(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Largest absolute elementwise difference, comparing imaginary planes too.
    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        let d = self.sub(other)?;
        Ok(d.max_abs())
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        let nd = self.ndim();
        let mut seen = vec![false; nd];
        if perm.len() != nd || perm.iter().any(|&p| p >= nd || core::mem::replace(&mut seen[p], true)) {
            return Err(shape_err!("invalid permutation {perm:?} for {:?}", self.shape));
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let in_strides = strides(&self.shape);
        let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let gather = |plane: &[f64]| permute_plane(plane, &out_shape, &src_strides);
        Ok(Tensor {
            re: gather(&self.re),
            im: self.im.as_ref().map(|v| gather(v)),
            shape: out_shape,
        })
    }

    /// Extracts `len` consecutive entries along `axis` starting at `start`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        if axis >= self.ndim() || len == 0 || start + len > self.shape[axis] {
            return Err(shape_err!("narrow({axis}, {start}, {len}) out of range for {:?}", self.shape));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let inner: usize = self.shape[axis + 1..].iter().product();
        let n = self.shape[axis];
        let pick = |plane: &[f64]| {
            let mut out = Vec::with_capacity(outer * len * inner);
            for o in 0..outer {
                let base = o * n * inner + start * inner;
                out.extend_from_slice(&plane[base..base + len * inner]);
            }
            out
        };
        let mut shape = self.shape.clone();
        shape[axis] = len;
        Ok(Tensor { re: pick(&self.re), im: self.im.as_ref().map(|v| pick(v)), shape })
    }
}

pub(crate) fn permute_plane(src: &[f64], out_shape: &[usize], src_strides: &[usize]) -> Vec<f64> {
    let n = numel(out_shape);
    let nd = out_shape.len();
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; nd];
    let mut offset = 0usize;
    for _ in 0..n {
        out.push(src[offset]);
        for ax in (0..nd).rev() {
            idx[ax] += 1;
            offset += src_strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            offset -= src_strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    out
}

impl From<f64> for Tensor {
    fn from(v: f64) -> Self {
        Tensor::scalar(v)
    }
}

/// Error for an operation that only accepts real tensors.
pub(crate) fn require_real(t: &Tensor, op: &str) -> Result<()> {
    if t.is_complex() {
        return Err(Error::InvalidDomain(alloc::format!("{op} requires a real tensor")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors_validate_length() {
        assert!(Tensor::new(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(Tensor::new(&[2, 3], vec![0.0; 5]), Err(Error::Shape(_))));
        assert!(matches!(Tensor::new(&[0], vec![]), Err(Error::Shape(_))));
        assert!(Tensor::complex(&[2], vec![1.0, 2.0], vec![0.0]).is_err());
    }

    #[test]
    fn permute_matches_index_formula() {
        let t = Tensor::new(&[2, 3, 4], (0..24).map(|x| x as f64).collect()).unwrap();
        let p = t.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    assert_eq!(p.data()[k * 6 + i * 3 + j], t.data()[i * 12 + j * 4 + k]);
                }
            }
        }
        assert!(t.permute(&[0, 0, 1]).is_err());
    }

    #[test]
    fn narrow_picks_slab() {
        let t = Tensor::new(&[3, 4], (0..12).map(|x| x as f64).collect()).unwrap();
        let n = t.narrow(1, 1, 2).unwrap();
        assert_eq!(n.data(), &[1.0, 2.0, 5.0, 6.0, 9.0, 10.0]);
    }
}
