//! Seed plumbing. Every random draw in the crate comes from a stream derived here.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::Real;

pub type SimRng = ChaCha8Rng;

/// Mixes a master seed with a stream index (splitmix64 finalizer).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_from(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

pub fn stream(master: u64, index: u64) -> SimRng {
    rng_from(derive_seed(master, index))
}

/// Circularly-symmetric complex Gaussian sample with total variance `var`.
pub fn complex_gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex<T> {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(T::of(re * s), T::of(im * s))
}

pub fn complex_gaussian_vec<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize, var: f64) -> Vec<Complex<T>> {
    (0..n).map(|_| complex_gaussian(rng, var)).collect()
}

/// Random phase on [0, 2π) with magnitude drawn uniformly from [0, 1).
pub fn uniform_disc_polar<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Complex<T> {
    let a: f64 = rng.random();
    let p: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    Complex::new(T::of(a * p.cos()), T::of(a * p.sin()))
}

pub fn uniform_disc_polar_vec<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<Complex<T>> {
    (0..n).map(|_| uniform_disc_polar(rng)).collect()
}
