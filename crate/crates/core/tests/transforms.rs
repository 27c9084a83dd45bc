use neurop_core::fft::{dft, idft};
use neurop_core::math::{self, wavenumber};
use neurop_core::rng::Rng;
use neurop_core::{Error, Tensor};
use proptest::prelude::*;

fn random(n: usize, seed: u64) -> Tensor {
    let mut r = Rng::new(seed);
    Tensor::new(&[n], (0..n).map(|_| r.normal()).collect()).unwrap()
}

#[test]
fn constant_has_only_mode_zero() {
    let c = dft(&Tensor::full(&[16], 2.5), &[0]).unwrap();
    assert!((c.data()[0] - 2.5).abs() < 1e-12);
    for k in 1..16 {
        assert!(c.data()[k].abs() < 1e-12 && c.imag().unwrap()[k].abs() < 1e-12);
    }
}

#[test]
fn single_exponential_hits_its_mode() {
    let n = 16;
    let arg = |j: usize| math::TAU * 3.0 * j as f64 / n as f64;
    let t = Tensor::complex(&[n], (0..n).map(|j| math::cos(arg(j))).collect(), (0..n).map(|j| math::sin(arg(j))).collect()).unwrap();
    let c = dft(&t, &[0]).unwrap();
    for k in 0..n {
        let expect = if k == 3 { 1.0 } else { 0.0 };
        assert!((c.data()[k] - expect).abs() < 1e-12);
        assert!(c.imag().unwrap()[k].abs() < 1e-12);
    }
}

#[test]
fn parseval_against_direct_dft() {
    let n = 32;
    let t = random(n, 3);
    // direct O(N^2) coefficients
    let mut direct = 0.0;
    for k in 0..n {
        let (mut re, mut im) = (0.0, 0.0);
        for j in 0..n {
            let a = -math::TAU * (k * j) as f64 / n as f64;
            re += t.data()[j] * math::cos(a) / n as f64;
            im += t.data()[j] * math::sin(a) / n as f64;
        }
        direct += re * re + im * im;
    }
    let mean_sq = t.norm_sq() / n as f64;
    let fast = dft(&t, &[0]).unwrap().norm_sq();
    assert!((direct - mean_sq).abs() / mean_sq < 1e-10);
    assert!((fast - mean_sq).abs() / mean_sq < 1e-10);
}

#[test]
fn round_trip_and_band_limited_consistency() {
    let t = random(64, 4);
    let back = idft(&dft(&t, &[0]).unwrap(), &[0], &[64]).unwrap();
    assert!(back.real_part().max_abs_diff(&t).unwrap() / t.max_abs() < 1e-10);

    let mut c = Tensor::complex_zeros(&[3]);
    c.data_mut()[1] = 0.7;
    c.imag_mut().unwrap()[1] = -0.2;
    let a = idft(&c, &[0], &[8]).unwrap();
    let b = idft(&c, &[0], &[16]).unwrap();
    for j in 0..8 {
        assert!((a.data()[j] - b.data()[2 * j]).abs() < 1e-12);
        assert!((a.imag().unwrap()[j] - b.imag().unwrap()[2 * j]).abs() < 1e-12);
    }
    assert!(matches!(idft(&c, &[0], &[2]), Err(Error::Shape(_))));
    assert!(matches!(idft(&c, &[0], &[12]), Err(Error::UnsupportedSize(12))));
}

#[test]
fn super_evaluation_matches_trigonometric_sum() {
    let mut r = Rng::new(5);
    let m = 8;
    let c = Tensor::complex(&[m], (0..m).map(|_| r.normal()).collect(), (0..m).map(|_| r.normal()).collect()).unwrap();
    let out = idft(&c, &[0], &[32]).unwrap();
    for j in 0..32 {
        let x = j as f64 / 32.0;
        let (mut re, mut im) = (0.0, 0.0);
        for i in 0..m {
            let k = wavenumber(i, m) as f64;
            let (cr, ci) = (c.data()[i], c.imag().unwrap()[i]);
            // the Nyquist coefficient of an even spectrum is split across ±m/2
            let terms: Vec<(f64, f64)> = if 2 * i == m { vec![(k, 0.5), (-k, 0.5)] } else { vec![(k, 1.0)] };
            for (kk, w) in terms {
                let a = math::TAU * kk * x;
                re += w * (cr * math::cos(a) - ci * math::sin(a));
                im += w * (cr * math::sin(a) + ci * math::cos(a));
            }
        }
        assert!((out.data()[j] - re).abs() < 1e-12);
        assert!((out.imag().unwrap()[j] - im).abs() < 1e-12);
    }
}

#[test]
fn two_dimensional_round_trip() {
    let mut r = Rng::new(6);
    let t = Tensor::new(&[8, 16], (0..128).map(|_| r.normal()).collect()).unwrap();
    let c = dft(&t, &[0, 1]).unwrap();
    assert!(((c.norm_sq() - t.norm_sq() / 128.0) / c.norm_sq()).abs() < 1e-12);
    let back = idft(&c, &[0, 1], &[8, 16]).unwrap();
    assert!(back.real_part().max_abs_diff(&t).unwrap() < 1e-12);
}

proptest! {
    #[test]
    fn dft_is_linear(seed in 0u64..1000, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let a = random(16, seed);
        let b = random(16, seed + 7919);
        let comb = Tensor::new(&[16], a.data().iter().zip(b.data()).map(|(x, y)| alpha * x + beta * y).collect()).unwrap();
        let lhs = dft(&comb, &[0]).unwrap();
        let rhs = dft(&a, &[0]).unwrap().scale(alpha).add(&dft(&b, &[0]).unwrap().scale(beta)).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
    }

    #[test]
    fn idft_inverts_dft(seed in 0u64..1000, log_n in 0u32..8) {
        let n = 1usize << log_n;
        let t = random(n, seed);
        let back = idft(&dft(&t, &[0]).unwrap(), &[0], &[n]).unwrap();
        prop_assert!(back.real_part().max_abs_diff(&t).unwrap() <= 1e-10 * t.max_abs().max(1.0));
    }

    #[test]
    fn parseval(seed in 0u64..1000) {
        let t = random(32, seed);
        let c = dft(&t, &[0]).unwrap();
        let mean_sq = t.norm_sq() / 32.0;
        prop_assert!((c.norm_sq() - mean_sq).abs() <= 1e-10 * mean_sq);
    }
}
