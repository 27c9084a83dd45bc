//! Iterative radix-2 Cooley-Tukey transforms.
//!
//! Conventions used across the crate: the forward transform carries a `1/n`
//! factor per axis and the inverse none, so forward coefficients of a
//! band-limited signal do not depend on the sampling resolution.
//! Spectra are kept in FFT order (see [`crate::math::wavenumber`]).

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::math;
use crate::tensor::{strides, Tensor};

pub fn check_pow2(n: usize) -> Result<()> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::UnsupportedSize(n));
    }
    Ok(())
}

/// Twiddle factors `exp(-2πi k/n)` for `k < n/2`.
struct Twiddles {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Twiddles {
    fn new(n: usize) -> Self {
        let half = n / 2;
        let mut re = Vec::with_capacity(half);
        let mut im = Vec::with_capacity(half);
        for k in 0..half {
            let angle = -math::TAU * k as f64 / n as f64;
            re.push(math::cos(angle));
            im.push(math::sin(angle));
        }
        Twiddles { re, im }
    }
}

fn bit_reverse(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
}

/// Unnormalized in-place transform of one line. `inverse` flips the exponent sign.
fn transform_line(re: &mut [f64], im: &mut [f64], tw: &Twiddles, inverse: bool) {
    let n = re.len();
    if n < 2 {
        return;
    }
    bit_reverse(re, im);
    let sign = if inverse { -1.0 } else { 1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let wr = tw.re[k * step];
                let wi = sign * tw.im[k * step];
                let (a, b) = (start + k, start + k + half);
                let xr = re[b] * wr - im[b] * wi;
                let xi = re[b] * wi + im[b] * wr;
                re[b] = re[a] - xr;
                im[b] = im[a] - xi;
                re[a] += xr;
                im[a] += xi;
            }
        }
        len <<= 1;
    }
}

/// In-place transform of a single complex sequence, `scale` applied afterwards.
pub fn fft_1d(re: &mut [f64], im: &mut [f64], inverse: bool, scale: f64) -> Result<()> {
    check_pow2(re.len())?;
    if re.len() != im.len() {
        return Err(shape_err!("fft planes differ: {} vs {}", re.len(), im.len()));
    }
    let tw = Twiddles::new(re.len());
    transform_line(re, im, &tw, inverse);
    if scale != 1.0 {
        re.iter_mut().chain(im.iter_mut()).for_each(|x| *x *= scale);
    }
    Ok(())
}

/// Transforms a row-major `[n, inner]` block along its first axis, treating
/// each row as a vector of `inner` independent lanes.
fn transform_rows(re: &mut [f64], im: &mut [f64], inner: usize, tw: &Twiddles, inverse: bool) {
    let n = re.len() / inner;
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            for l in 0..inner {
                re.swap(i * inner + l, j * inner + l);
                im.swap(i * inner + l, j * inner + l);
            }
        }
    }
    let sign = if inverse { -1.0 } else { 1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let wr = tw.re[k * step];
                let wi = sign * tw.im[k * step];
                let (a, b) = ((start + k) * inner, (start + k + half) * inner);
                let (ra, rb) = re.split_at_mut(b);
                let (ia, ib) = im.split_at_mut(b);
                let (ra, ia) = (&mut ra[a..a + inner], &mut ia[a..a + inner]);
                let (rb, ib) = (&mut rb[..inner], &mut ib[..inner]);
                for l in 0..inner {
                    let xr = rb[l] * wr - ib[l] * wi;
                    let xi = rb[l] * wi + ib[l] * wr;
                    rb[l] = ra[l] - xr;
                    ib[l] = ia[l] - xi;
                    ra[l] += xr;
                    ia[l] += xi;
                }
            }
        }
        len <<= 1;
    }
}

/// Transforms `tensor` in place along `axis`.
fn transform_axis(shape: &[usize], re: &mut [f64], im: &mut [f64], axis: usize, inverse: bool) {
    let n = shape[axis];
    let st = strides(shape);
    let inner = st[axis];
    let outer: usize = shape[..axis].iter().product();
    let tw = Twiddles::new(n);
    if inner > 1 {
        for o in 0..outer {
            let block = o * n * inner..(o + 1) * n * inner;
            transform_rows(&mut re[block.clone()], &mut im[block], inner, &tw, inverse);
        }
        return;
    }
    for o in 0..outer {
        let line = o * n..(o + 1) * n;
        transform_line(&mut re[line.clone()], &mut im[line], &tw, inverse);
    }
}

pub(crate) fn check_axes(shape: &[usize], axes: &[usize]) -> Result<()> {
    for (i, &a) in axes.iter().enumerate() {
        if a >= shape.len() || axes[..i].contains(&a) {
            return Err(shape_err!("invalid transform axes {axes:?} for shape {shape:?}"));
        }
    }
    Ok(())
}

/// Multi-axis transform returning a complex tensor; `normalize` applies `1/n`
/// for every transformed axis of extent `n`.
pub fn fft_axes(t: &Tensor, axes: &[usize], inverse: bool, normalize: bool) -> Result<Tensor> {
    check_axes(t.shape(), axes)?;
    for &a in axes {
        check_pow2(t.shape()[a])?;
    }
    let shape = t.shape().to_vec();
    let mut re = t.data().to_vec();
    let mut im = t.imag().map_or_else(|| vec![0.0; re.len()], <[f64]>::to_vec);
    let mut scale = 1.0;
    for &a in axes {
        transform_axis(&shape, &mut re, &mut im, a, inverse);
        if normalize {
            scale /= shape[a] as f64;
        }
    }
    if scale != 1.0 {
        re.iter_mut().chain(im.iter_mut()).for_each(|x| *x *= scale);
    }
    Ok(Tensor::from_parts(shape, re, Some(im)))
}

/// Forward transform with `1/n` per axis.
pub fn dft(t: &Tensor, axes: &[usize]) -> Result<Tensor> {
    fft_axes(t, axes, false, true)
}

/// Destination of one spectral index when a spectrum of extent `n_in` is
/// placed into a spectrum of extent `n_out` (both FFT order). Returns up to
/// two `(index, weight)` targets; a Nyquist coefficient moving to a larger
/// grid is split evenly between `+n_in/2` and `-n_in/2`. Indices with no
/// counterpart (truncation) return an empty list.
pub(crate) fn spectral_targets(j: usize, n_in: usize, n_out: usize) -> ([(usize, f64); 2], usize) {
    let mut out = [(0usize, 0.0f64); 2];
    let k = math::wavenumber(j, n_in);
    if math::is_nyquist(j, n_in) && n_out > n_in {
        let h = n_in / 2;
        out[0] = (h, 0.5);
        out[1] = (n_out - h, 0.5);
        return (out, 2);
    }
    let twice = 2 * k.unsigned_abs() as usize;
    let fits = if n_out.is_multiple_of(2) { twice <= n_out } else { twice < n_out };
    if !fits {
        return (out, 0);
    }
    let idx = if k >= 0 { k as usize } else { (n_out as i64 + k) as usize };
    out[0] = (idx, 1.0);
    (out, 1)
}

/// Per-axis index map used by [`resize_spectrum`] and its adjoint.
pub(crate) fn axis_maps(in_shape: &[usize], axes: &[usize], out_sizes: &[usize]) -> Vec<Vec<Vec<(usize, f64)>>> {
    axes.iter()
        .zip(out_sizes)
        .map(|(&a, &m)| {
            (0..in_shape[a])
                .map(|j| {
                    let (t, c) = spectral_targets(j, in_shape[a], m);
                    t[..c].to_vec()
                })
                .collect()
        })
        .collect()
}

/// Zero-pads or truncates a complex spectrum along `axes` to `out_sizes`.
pub fn resize_spectrum(c: &Tensor, axes: &[usize], out_sizes: &[usize]) -> Result<Tensor> {
    check_axes(c.shape(), axes)?;
    if axes.len() != out_sizes.len() {
        return Err(shape_err!("{} axes but {} output sizes", axes.len(), out_sizes.len()));
    }
    let mut cur = c.to_complex();
    for (ax_i, &a) in axes.iter().enumerate() {
        let maps = axis_maps(cur.shape(), &[a], &out_sizes[ax_i..ax_i + 1]);
        cur = scatter_axis(&cur, a, out_sizes[ax_i], &maps[0]);
    }
    Ok(cur)
}

/// Adjoint of [`resize_spectrum`] (gather with the same weights).
pub(crate) fn resize_spectrum_adjoint(g: &Tensor, in_shape: &[usize], axes: &[usize]) -> Tensor {
    let mut cur = g.to_complex();
    for &a in axes.iter().rev() {
        let out_n = cur.shape()[a];
        let maps = axis_maps(in_shape, &[a], &[out_n]);
        cur = gather_axis(&cur, a, in_shape[a], &maps[0]);
    }
    cur
}

fn scatter_axis(t: &Tensor, axis: usize, n_out: usize, map: &[Vec<(usize, f64)>]) -> Tensor {
    let shape = t.shape();
    let n_in = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out_shape = shape.to_vec();
    out_shape[axis] = n_out;
    let mut out = Tensor::complex_zeros(&out_shape);
    let (sre, sim) = (t.data(), t.imag().unwrap());
    let mut ore = out.data().to_vec();
    let mut oim = out.imag().unwrap().to_vec();
    for o in 0..outer {
        for (j, targets) in map.iter().enumerate() {
            let src = (o * n_in + j) * inner;
            for &(dst_j, w) in targets {
                let dst = (o * n_out + dst_j) * inner;
                for i in 0..inner {
                    ore[dst + i] += w * sre[src + i];
                    oim[dst + i] += w * sim[src + i];
                }
            }
        }
    }
    out.data_mut().copy_from_slice(&ore);
    out.imag_mut().unwrap().copy_from_slice(&oim);
    out
}

fn gather_axis(t: &Tensor, axis: usize, n_in: usize, map: &[Vec<(usize, f64)>]) -> Tensor {
    let shape = t.shape();
    let n_out = shape[axis];
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut in_shape = shape.to_vec();
    in_shape[axis] = n_in;
    let (gre, gim) = (t.data(), t.imag().unwrap());
    let total = outer * n_in * inner;
    let mut re = vec![0.0; total];
    let mut im = vec![0.0; total];
    for o in 0..outer {
        for (j, targets) in map.iter().enumerate() {
            let dst = (o * n_in + j) * inner;
            for &(src_j, w) in targets {
                let src = (o * n_out + src_j) * inner;
                for i in 0..inner {
                    re[dst + i] += w * gre[src + i];
                    im[dst + i] += w * gim[src + i];
                }
            }
        }
    }
    Tensor::from_parts(in_shape, re, Some(im))
}

/// Evaluates a spectrum at `out_sizes` equispaced points per axis, with
/// missing high modes taken as zero. No normalization factor.
pub fn idft(c: &Tensor, axes: &[usize], out_sizes: &[usize]) -> Result<Tensor> {
    check_axes(c.shape(), axes)?;
    if axes.len() != out_sizes.len() {
        return Err(shape_err!("{} axes but {} output sizes", axes.len(), out_sizes.len()));
    }
    for (&a, &m) in axes.iter().zip(out_sizes) {
        check_pow2(m)?;
        if m < c.shape()[a] {
            return Err(shape_err!("output size {m} below spectral extent {} on axis {a}", c.shape()[a]));
        }
    }
    let padded = resize_spectrum(c, axes, out_sizes)?;
    fft_axes(&padded, axes, true, false)
}

/// Keeps modes `|k| <= k_max` on each axis, returning extent `2 k_max + 1`
/// in FFT order.
pub fn truncate_modes(c: &Tensor, axes: &[usize], k_max: usize) -> Result<Tensor> {
    let m = 2 * k_max + 1;
    for &a in axes {
        if c.shape().get(a).is_none_or(|&n| n < m) {
            return Err(Error::Undersampled { resolution: c.shape().get(a).copied().unwrap_or(0), k_max });
        }
    }
    let sizes = vec![m; axes.len()];
    resize_spectrum(c, axes, &sizes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn direct_dft(re: &[f64], im: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = re.len();
        let mut or = vec![0.0; n];
        let mut oi = vec![0.0; n];
        for k in 0..n {
            for j in 0..n {
                let a = -math::TAU * (k * j) as f64 / n as f64;
                or[k] += re[j] * math::cos(a) - im[j] * math::sin(a);
                oi[k] += re[j] * math::sin(a) + im[j] * math::cos(a);
            }
            or[k] /= n as f64;
            oi[k] /= n as f64;
        }
        (or, oi)
    }

    #[test]
    fn matches_direct_dft() {
        let mut rng = Rng::new(11);
        for n in [1usize, 2, 4, 8, 32] {
            let re: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let im: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let (er, ei) = direct_dft(&re, &im);
            let t = Tensor::complex(&[n], re, im).unwrap();
            let c = dft(&t, &[0]).unwrap();
            for k in 0..n {
                assert!((c.data()[k] - er[k]).abs() < 1e-12);
                assert!((c.imag().unwrap()[k] - ei[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        let t = Tensor::zeros(&[12]);
        assert_eq!(dft(&t, &[0]), Err(Error::UnsupportedSize(12)));
    }

    #[test]
    fn nyquist_split_keeps_real_interpolant() {
        // cos(π n x) sampled on n points is (-1)^j; interpolated to 2n it must stay real.
        let n = 8;
        let t = Tensor::new(&[n], (0..n).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect()).unwrap();
        let c = dft(&t, &[0]).unwrap();
        let up = idft(&c, &[0], &[2 * n]).unwrap();
        assert!(up.imag().unwrap().iter().all(|x| x.abs() < 1e-12));
        for j in 0..n {
            assert!((up.data()[2 * j] - t.data()[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn truncate_then_pad_keeps_low_modes() {
        let n = 16;
        let mut rng = Rng::new(5);
        let t = Tensor::new(&[n], (0..n).map(|_| rng.normal()).collect()).unwrap();
        let c = dft(&t, &[0]).unwrap();
        let low = truncate_modes(&c, &[0], 3).unwrap();
        assert_eq!(low.shape(), &[7]);
        for j in 0..7 {
            let k = math::wavenumber(j, 7);
            let src = if k >= 0 { k as usize } else { (n as i64 + k) as usize };
            assert_eq!(low.data()[j], c.data()[src]);
        }
        assert!(matches!(truncate_modes(&c, &[0], 8), Err(Error::Undersampled { .. })));
    }
}
