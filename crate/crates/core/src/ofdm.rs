//! Shifted DFT conventions, OFDM symbol grids, Zadoff-Chu phases and cyclic prefixes.
//!
//! Subcarrier index `k` sits at baseband frequency `(k - L/2)·Δf`; for odd `L` the
//! centre `L/2` is a half-integer and is used as such.

use std::sync::Arc;

use num_complex::Complex;
use num_traits::Zero;
use rustfft::{Fft, FftPlanner};

use crate::error::{invalid, Result};
use crate::scalar::{cis, Real};

/// Reusable plan for the shifted transform pair of one length.
pub struct ShiftedDft<T: Real> {
    len: usize,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

impl<T: Real> ShiftedDft<T> {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { len, fwd: planner.plan_fft_forward(len), inv: planner.plan_fft_inverse(len) }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In place: `S[k] = Σ s[n]·e^{-j2π(k-L/2)n/L}`.
    ///
    /// The centre shift contributes `e^{jπn} = (-1)^n` for any `L`, so it is applied exactly.
    pub fn forward(&self, buf: &mut [Complex<T>]) {
        assert_eq!(buf.len(), self.len);
        alternate_sign(buf);
        self.fwd.process(buf);
    }

    /// In place: `s[n] = (1/L)·Σ S[k]·e^{+j2π(k-L/2)n/L}`.
    pub fn inverse(&self, buf: &mut [Complex<T>]) {
        assert_eq!(buf.len(), self.len);
        self.inv.process(buf);
        alternate_sign(buf);
        let scale = T::one() / T::of(self.len as f64);
        for v in buf.iter_mut() {
            *v = *v * scale;
        }
    }
}

fn alternate_sign<T: Real>(buf: &mut [Complex<T>]) {
    for v in buf.iter_mut().skip(1).step_by(2) {
        *v = -*v;
    }
}

pub fn dft_shifted<T: Real>(samples: &[Complex<T>]) -> Vec<Complex<T>> {
    let mut out = samples.to_vec();
    if !out.is_empty() {
        ShiftedDft::new(out.len()).forward(&mut out);
    }
    out
}

pub fn idft_shifted<T: Real>(symbols: &[Complex<T>]) -> Vec<Complex<T>> {
    let mut out = symbols.to_vec();
    if !out.is_empty() {
        ShiftedDft::new(out.len()).inverse(&mut out);
    }
    out
}

/// Frequency-domain OFDM symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmGrid<T> {
    pub subcarrier_spacing: f64,
    pub symbols: Vec<Complex<T>>,
}

impl<T: Real> OfdmGrid<T> {
    pub fn new(symbols: Vec<Complex<T>>, subcarrier_spacing: f64) -> Result<Self> {
        if symbols.is_empty() || subcarrier_spacing <= 0.0 {
            return invalid("grid needs at least one subcarrier and positive spacing");
        }
        Ok(Self { subcarrier_spacing, symbols })
    }

    pub fn from_samples(samples: &[Complex<T>], sample_rate: f64) -> Result<Self> {
        Self::new(dft_shifted(samples), sample_rate / samples.len() as f64)
    }

    pub fn fft_size(&self) -> usize {
        self.symbols.len()
    }

    pub fn bandwidth(&self) -> f64 {
        self.fft_size() as f64 * self.subcarrier_spacing
    }

    pub fn period(&self) -> f64 {
        1.0 / self.subcarrier_spacing
    }

    /// Baseband frequency of subcarrier `k`.
    pub fn frequency(&self, k: usize) -> f64 {
        (k as f64 - self.fft_size() as f64 / 2.0) * self.subcarrier_spacing
    }

    /// One period of time samples at rate `B`.
    pub fn to_samples(&self) -> Vec<Complex<T>> {
        idft_shifted(&self.symbols)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZcPhaseSequence<T> {
    pub phases: Vec<T>,
}

impl<T: Real> ZcPhaseSequence<T> {
    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    /// `e^{jφ[m]}`, evaluated from the phase reduced modulo 2π for accuracy at large `m`.
    pub fn phasors(&self) -> Vec<Complex<T>> {
        let len = self.len() as u64;
        let cf = len % 2;
        (0..len)
            .map(|m| {
                let q = (m * (m + cf)) % (2 * len);
                cis(-std::f64::consts::PI * q as f64 / len as f64)
            })
            .collect()
    }
}

/// `φ[m] = -π·m(m + c_f)/M` with `c_f = M mod 2`.
pub fn zc_phase_sequence<T: Real>(len: usize) -> ZcPhaseSequence<T> {
    let cf = (len % 2) as f64;
    let m_len = len as f64;
    ZcPhaseSequence {
        phases: (0..len)
            .map(|m| {
                let m = m as f64;
                T::of(-std::f64::consts::PI * m * (m + cf) / m_len)
            })
            .collect(),
    }
}

pub fn attach_cyclic_prefix<T: Real>(samples: &[Complex<T>], prefix_len: usize) -> Result<Vec<Complex<T>>> {
    if prefix_len > samples.len() {
        return invalid(format!("prefix {prefix_len} longer than symbol {}", samples.len()));
    }
    let mut out = Vec::with_capacity(samples.len() + prefix_len);
    out.extend_from_slice(&samples[samples.len() - prefix_len..]);
    out.extend_from_slice(samples);
    Ok(out)
}

pub fn remove_cyclic_prefix<T: Real>(samples: &[Complex<T>], prefix_len: usize) -> Result<Vec<Complex<T>>> {
    if samples.len() <= prefix_len {
        return invalid(format!("{} samples cannot carry a prefix of {prefix_len}", samples.len()));
    }
    Ok(samples[prefix_len..].to_vec())
}

/// Linear convolution of two symbol vectors by definition, `O(L1·L2)`.
pub fn linear_convolution<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Vec<Complex<T>> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![Complex::zero(); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] = out[i + j] + x * y;
        }
    }
    out
}

/// `(rmse, bits)` after scaling both vectors by `normalization`; `bits = -log2(rmse/2)`.
///
/// An exact match yields `bits = +∞`.
pub fn rmse_and_bits<T: Real>(
    estimate: &[Complex<T>],
    truth: &[Complex<T>],
    normalization: f64,
) -> Result<(f64, f64)> {
    if estimate.len() != truth.len() || estimate.is_empty() {
        return invalid(format!("length mismatch {} vs {}", estimate.len(), truth.len()));
    }
    let mse = estimate
        .iter()
        .zip(truth)
        .map(|(e, t)| (*e - *t).norm_sqr().as_f64())
        .sum::<f64>()
        / estimate.len() as f64;
    let rmse = mse.sqrt() * normalization;
    Ok((rmse, bits_from_rmse(rmse)))
}

pub fn bits_from_rmse(rmse: f64) -> f64 {
    if rmse == 0.0 {
        f64::INFINITY
    } else {
        -(rmse / 2.0).log2()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn odd_length_centre_is_half_integer() {
        let s = [c(1.0, 0.5), c(-0.3, 2.0), c(0.7, -1.1)];
        let got = dft_shifted(&s);
        let y0 = s[0] + s[1] * Complex::from_polar(1.0, std::f64::consts::PI / 3.0)
            + s[2] * Complex::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
        assert!((got[1] - y0).norm() < 1e-12);
    }

    #[test]
    fn zc_small_values() {
        let z = zc_phase_sequence::<f64>(10);
        assert_eq!(z.phases[0], 0.0);
        assert!((z.phases[1] + std::f64::consts::PI / 10.0).abs() < 1e-15);
        let z3 = zc_phase_sequence::<f64>(3);
        assert!((z3.phases[2] + 2.0 * std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn prefix_round_trip() {
        let s: Vec<_> = (0..4).map(|i| c(i as f64, 0.0)).collect();
        let p = attach_cyclic_prefix(&s, 2).unwrap();
        assert_eq!(p, vec![s[2], s[3], s[0], s[1], s[2], s[3]]);
        assert_eq!(remove_cyclic_prefix(&p, 2).unwrap(), s);
        assert!(attach_cyclic_prefix(&s, 5).is_err());
        assert!(remove_cyclic_prefix(&s, 4).is_err());
    }

    #[test]
    fn bits_saturate() {
        let v = [c(1.0, 1.0)];
        let (r, b) = rmse_and_bits(&v, &v, 1.0).unwrap();
        assert_eq!(r, 0.0);
        assert!(b.is_infinite());
    }
}
