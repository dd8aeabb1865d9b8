//! Repeated-half preamble: timing by normalized autocorrelation, CFO from the lag-`L_pre` phase.

use num_complex::Complex;
use num_traits::Zero;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::rng::rng_from;
use crate::scalar::Real;

pub const DEFAULT_THRESHOLD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct Preamble<T> {
    pub base_length: usize,
    pub downsample_ratio: usize,
    pub amplitude: f64,
    pub phases: Vec<f64>,
    pub samples: Vec<Complex<T>>,
}

impl<T: Real> Preamble<T> {
    /// One half of the preamble.
    pub fn half(&self) -> &[Complex<T>] {
        &self.samples[..self.samples.len() / 2]
    }
}

/// Two identical halves of `N·L_pre` constant-amplitude samples with uniform random phases.
pub fn generate_preamble<T: Real>(n_ratio: usize, l_pre: usize, amplitude: f64, seed: u64) -> Result<Preamble<T>> {
    if l_pre < 2 || n_ratio == 0 || !(amplitude > 0.0 && amplitude <= 1.0) {
        return invalid("preamble needs L_pre >= 2, N >= 1 and amplitude in (0, 1]");
    }
    let mut rng = rng_from(seed);
    let half = n_ratio * l_pre;
    let phases: Vec<f64> = (0..half).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
    let first: Vec<Complex<T>> = phases
        .iter()
        .map(|&p| Complex::new(T::of(amplitude * p.cos()), T::of(amplitude * p.sin())))
        .collect();
    let mut samples = first.clone();
    samples.extend_from_slice(&first);
    Ok(Preamble { base_length: l_pre, downsample_ratio: n_ratio, amplitude, phases, samples })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncResult {
    pub start_index: usize,
    pub peak_metric: f64,
    pub cfo_estimate: f64,
}

/// Autocorrelation metric of every `2·L_pre` window.
///
/// `R[d] = |Σ r[d+n]·conj(r[d+n+L])| / sqrt(Σ|r[d+n]|² · Σ|r[d+n+L]|²)`, which lies in `[0, 1]`.
pub fn autocorrelation_metric<T: Real>(received: &[Complex<T>], l_pre: usize) -> Vec<(f64, Complex<f64>)> {
    if received.len() < 2 * l_pre || l_pre == 0 {
        return Vec::new();
    }
    let r: Vec<Complex<f64>> = received.iter().map(|v| Complex::new(v.re.as_f64(), v.im.as_f64())).collect();
    let windows = r.len() - 2 * l_pre + 1;
    let mut out = Vec::with_capacity(windows);
    // running sums, updated per step
    let mut corr = Complex::<f64>::zero();
    let mut e1 = 0.0;
    let mut e2 = 0.0;
    for n in 0..l_pre {
        corr += r[n].conj() * r[n + l_pre];
        e1 += r[n].norm_sqr();
        e2 += r[n + l_pre].norm_sqr();
    }
    for d in 0..windows {
        if d > 0 {
            let (a_out, b_out) = (r[d - 1], r[d - 1 + l_pre]);
            let (a_in, b_in) = (r[d - 1 + l_pre], r[d - 1 + 2 * l_pre]);
            corr += a_in.conj() * b_in - a_out.conj() * b_out;
            e1 += a_in.norm_sqr() - a_out.norm_sqr();
            e2 += b_in.norm_sqr() - b_out.norm_sqr();
        }
        let den = (e1.max(0.0) * e2.max(0.0)).sqrt();
        let metric = if den > 0.0 { (corr.norm() / den).min(1.0) } else { 0.0 };
        out.push((metric, corr));
    }
    out
}

/// Finds the first window whose metric exceeds `threshold`, takes the local maximum within
/// `L_pre/4` samples after it, and estimates CFO from that window.
///
/// `received` is at the low rate `sample_rate / n_ratio`; `sample_rate` is the transmit rate.
/// A positive CFO means the received signal rotates as `e^{+j2πΔF t}`.
pub fn detect_preamble_and_cfo<T: Real>(
    received: &[Complex<T>],
    l_pre: usize,
    n_ratio: usize,
    sample_rate: f64,
    threshold: f64,
) -> Result<SyncResult> {
    if l_pre == 0 || received.len() < 2 * l_pre {
        return invalid(format!("need at least {} samples, have {}", 2 * l_pre, received.len()));
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return invalid("threshold must lie in (0, 1)");
    }
    let metric = autocorrelation_metric(received, l_pre);
    let cross = metric.iter().position(|(m, _)| *m > threshold).ok_or(Error::NotFound)?;
    let end = (cross + l_pre / 4).min(metric.len() - 1);
    let mut best = cross;
    for d in cross..=end {
        if metric[d].0 > metric[best].0 {
            best = d;
        }
    }
    let (peak, corr) = metric[best];
    let lag_time = (n_ratio * l_pre) as f64 / sample_rate;
    Ok(SyncResult { start_index: best, peak_metric: peak, cfo_estimate: corr.arg() / (std::f64::consts::TAU * lag_time) })
}

/// Sharpens a coarse start estimate by cross-correlating with the known low-rate preamble
/// over `coarse ± search`.
pub fn refine_timing<T: Real>(received: &[Complex<T>], known: &[Complex<T>], coarse: usize, search: usize) -> usize {
    let lo = coarse.saturating_sub(search);
    let hi = (coarse + search).min(received.len().saturating_sub(known.len()));
    let mut best = (coarse.min(hi), -1.0);
    for d in lo..=hi {
        let c: Complex<f64> = known
            .iter()
            .zip(&received[d..])
            .map(|(k, r)| {
                let p = *r * k.conj();
                Complex::new(p.re.as_f64(), p.im.as_f64())
            })
            .sum();
        if c.norm() > best.1 {
            best = (d, c.norm());
        }
    }
    best.0
}

/// Removes a frequency offset `cfo` (Hz) from samples taken at `rate`, referenced to sample 0.
pub fn derotate<T: Real>(samples: &mut [Complex<T>], cfo: f64, rate: f64) {
    for (n, v) in samples.iter_mut().enumerate() {
        let ph = -std::f64::consts::TAU * cfo * n as f64 / rate;
        *v = *v * crate::scalar::cis::<T>(ph);
    }
}
