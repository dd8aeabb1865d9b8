//! Waveform-level radio models: DAC reconstruction, I/Q (de)modulation, mixers, filtering,
//! reduced-rate capture, calibrated noise and PAPR.

use num_complex::Complex;
use num_traits::Zero;
use rustfft::FftPlanner;

use crate::error::{invalid, Error, Result};
use crate::rng::{complex_gaussian, rng_from};
use crate::scalar::{cis, power, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct IqWaveform<T> {
    pub samples: Vec<Complex<T>>,
    pub sample_rate: f64,
}

impl<T: Real> IqWaveform<T> {
    pub fn new(samples: Vec<Complex<T>>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate > 0.0) {
            return invalid("sample rate must be positive");
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassbandWaveform<T> {
    pub samples: Vec<T>,
    pub sample_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixerModel {
    IdealBaseband,
    DiodeSignPassband,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DacKernel {
    FourierIdeal,
    ZeroOrderHold,
}

/// Low-pass requirement: flat to `cutoff`, at least `stopband_db` down past `(1+transition_fraction)·cutoff`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowpassSpec {
    pub cutoff: f64,
    pub transition_fraction: f64,
    pub stopband_db: f64,
}

pub const DEFAULT_TRANSITION_FRACTION: f64 = 0.1;
pub const DEFAULT_STOPBAND_DB: f64 = 50.0;

/// Extra attenuation designed in beyond the requested stopband, which also keeps the passband
/// ripple of the Kaiser design below 1e-3.
const DESIGN_MARGIN_DB: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FrontendConfig {
    pub bandwidth: f64,
    pub carrier_w: f64,
    pub carrier_x: f64,
    pub carrier_y: f64,
    pub sim_rate: f64,
    pub oversample: usize,
    pub mixer: MixerModel,
    pub dac: DacKernel,
    pub transition_fraction: f64,
    pub stopband_db: f64,
}

impl FrontendConfig {
    /// Scaled carrier plan: `F_w = 8B`, `F_x = 12B`, `F_y = 4B + Δf/2`, `f_sim = 64B`.
    pub fn scaled(bandwidth: f64, subcarrier_spacing: f64) -> Self {
        Self {
            bandwidth,
            carrier_w: 8.0 * bandwidth,
            carrier_x: 12.0 * bandwidth,
            carrier_y: 4.0 * bandwidth + subcarrier_spacing / 2.0,
            sim_rate: 64.0 * bandwidth,
            oversample: 4,
            mixer: MixerModel::IdealBaseband,
            dac: DacKernel::FourierIdeal,
            transition_fraction: DEFAULT_TRANSITION_FRACTION,
            stopband_db: DEFAULT_STOPBAND_DB,
        }
    }

    pub fn validate(&self, subcarrier_spacing: f64) -> Result<()> {
        let expect = self.carrier_x - self.carrier_w + subcarrier_spacing / 2.0;
        if (self.carrier_y - expect).abs() > 1e-9 * self.carrier_x.abs().max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "carrier_y {} must equal carrier_x - carrier_w + Δf/2 = {expect}",
                self.carrier_y
            )));
        }
        if self.oversample == 0 {
            return Err(Error::InvalidConfig("oversample factor must be >= 1".into()));
        }
        let top = self.carrier_w.max(self.carrier_x) + self.bandwidth / 2.0;
        if self.mixer == MixerModel::DiodeSignPassband && self.sim_rate < 2.0 * top * 1.25 {
            return Err(Error::InvalidConfig(format!("sim rate {} aliases a carrier at {top}", self.sim_rate)));
        }
        Ok(())
    }
}

/// In-band SNR target. `band = None` measures over the whole Nyquist band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub band: Option<(f64, f64)>,
}

impl NoiseSpec {
    pub fn full_band(snr_db: f64) -> Self {
        Self { snr_db, band: None }
    }

    pub fn noiseless() -> Self {
        Self::full_band(f64::INFINITY)
    }

    pub fn is_noiseless(&self) -> bool {
        self.snr_db == f64::INFINITY
    }

    pub fn snr_linear(&self) -> f64 {
        db_to_linear(self.snr_db)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..500 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Linear-phase Kaiser-windowed-sinc low-pass. Odd length, so the group delay is an integer.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    taps: Vec<f64>,
}

impl FirFilter {
    pub fn design(spec: &LowpassSpec, sample_rate: f64) -> Result<Self> {
        let nyq = sample_rate / 2.0;
        if !(spec.cutoff > 0.0 && spec.cutoff < nyq) {
            return invalid(format!("cutoff {} outside (0, {nyq})", spec.cutoff));
        }
        if !(spec.transition_fraction > 0.0) || !(spec.stopband_db > 0.0) {
            return invalid("transition fraction and stopband attenuation must be positive");
        }
        let f_pass = spec.cutoff;
        let f_stop = (spec.cutoff * (1.0 + spec.transition_fraction)).min(nyq);
        let fc = (f_pass + f_stop) / 2.0 / sample_rate;
        let atten = spec.stopband_db + DESIGN_MARGIN_DB;
        let beta = if atten > 50.0 {
            0.1102 * (atten - 8.7)
        } else if atten >= 21.0 {
            0.5842 * (atten - 21.0).powf(0.4) + 0.07886 * (atten - 21.0)
        } else {
            0.0
        };
        let dw = std::f64::consts::TAU * (f_stop - f_pass) / sample_rate;
        let mut len = ((atten - 7.95) / (2.285 * dw)).ceil() as usize + 1;
        if len % 2 == 0 {
            len += 1;
        }
        let mid = (len / 2) as f64;
        let i0b = bessel_i0(beta);
        let mut taps: Vec<f64> = (0..len)
            .map(|i| {
                let t = i as f64 - mid;
                let sinc = if t == 0.0 {
                    2.0 * fc
                } else {
                    (std::f64::consts::TAU * fc * t).sin() / (std::f64::consts::PI * t)
                };
                let r = if mid > 0.0 { t / mid } else { 0.0 };
                sinc * bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0b
            })
            .collect();
        let dc: f64 = taps.iter().sum();
        for t in taps.iter_mut() {
            *t /= dc;
        }
        Ok(Self { taps })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn group_delay(&self) -> usize {
        self.taps.len() / 2
    }

    /// Zero-phase amplitude response at frequency `f`.
    pub fn response(&self, f: f64, sample_rate: f64) -> f64 {
        let c = self.group_delay() as f64;
        self.taps
            .iter()
            .enumerate()
            .map(|(i, &h)| h * (std::f64::consts::TAU * f * (i as f64 - c) / sample_rate).cos())
            .sum()
    }

    /// Linear filtering with the group delay removed; output has the input length.
    pub fn filter<T: Real>(&self, x: &[Complex<T>]) -> Vec<Complex<T>> {
        if x.is_empty() {
            return Vec::new();
        }
        let n = x.len() + self.taps.len() - 1;
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut a: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v.re.as_f64(), v.im.as_f64())).collect();
        a.resize(n, Complex::zero());
        let mut b: Vec<Complex<f64>> = self.taps.iter().map(|&t| Complex::new(t, 0.0)).collect();
        b.resize(n, Complex::zero());
        fwd.process(&mut a);
        fwd.process(&mut b);
        for (p, q) in a.iter_mut().zip(&b) {
            *p *= *q / n as f64;
        }
        inv.process(&mut a);
        let d = self.group_delay();
        a[d..d + x.len()].iter().map(|v| Complex::new(T::of(v.re), T::of(v.im))).collect()
    }

    /// Steady-state output for a periodic input given by one period `x`, after the input has been
    /// frequency-shifted by `shift` Hz (`x[n]·e^{j2π·shift·n/fs}`). The shift need not be a
    /// multiple of the period's bin spacing.
    ///
    /// Returns the filtered period of the *unshifted* frame; the caller multiplies sample `n`
    /// by `e^{j2π·shift·n/fs}` (see [`FilteredPeriod::at`]).
    pub fn filter_periodic<T: Real>(&self, x: &[Complex<T>], shift: f64, sample_rate: f64) -> FilteredPeriod {
        let p = x.len();
        let c = self.group_delay() as isize;
        let mut folded = vec![Complex::<f64>::zero(); p];
        for (i, &h) in self.taps.iter().enumerate() {
            let t = i as isize - c;
            let g = h * Complex::from_polar(1.0, -std::f64::consts::TAU * shift * t as f64 / sample_rate);
            folded[t.rem_euclid(p as isize) as usize] += g;
        }
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(p);
        let inv = planner.plan_fft_inverse(p);
        let mut a: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v.re.as_f64(), v.im.as_f64())).collect();
        fwd.process(&mut a);
        fwd.process(&mut folded);
        for (u, v) in a.iter_mut().zip(&folded) {
            *u *= *v / p as f64;
        }
        inv.process(&mut a);
        FilteredPeriod { samples: a, shift, sample_rate }
    }
}

/// One period of a circularly filtered signal, readable at any absolute sample index.
#[derive(Debug, Clone)]
pub struct FilteredPeriod {
    samples: Vec<Complex<f64>>,
    shift: f64,
    sample_rate: f64,
}

impl FilteredPeriod {
    pub fn at<T: Real>(&self, n: i64) -> Complex<T> {
        let p = self.samples.len() as i64;
        let v = self.samples[n.rem_euclid(p) as usize];
        let rot = Complex::from_polar(1.0, std::f64::consts::TAU * self.shift * n as f64 / self.sample_rate);
        let out = v * rot;
        Complex::new(T::of(out.re), T::of(out.im))
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub fn lowpass<T: Real>(
    waveform: &IqWaveform<T>,
    cutoff: f64,
    transition_fraction: f64,
    stopband_db: f64,
) -> Result<IqWaveform<T>> {
    let fir = FirFilter::design(&LowpassSpec { cutoff, transition_fraction, stopband_db }, waveform.sample_rate)?;
    Ok(IqWaveform { samples: fir.filter(&waveform.samples), sample_rate: waveform.sample_rate })
}

fn decimation(sample_rate: f64, out_rate: f64) -> Result<usize> {
    let ratio = sample_rate / out_rate;
    let d = ratio.round();
    if !(out_rate > 0.0) || d < 1.0 || (ratio - d).abs() > 1e-9 * ratio {
        return invalid(format!("decimation {sample_rate}/{out_rate} is not an integer"));
    }
    Ok(d as usize)
}

/// Anti-alias low-pass at `out_rate/2`, then keep every `f_s/out_rate`-th sample.
pub fn adc_capture<T: Real>(
    waveform: &IqWaveform<T>,
    out_rate: f64,
    transition_fraction: f64,
    stopband_db: f64,
) -> Result<Vec<Complex<T>>> {
    let d = decimation(waveform.sample_rate, out_rate)?;
    if d == 1 {
        return Ok(waveform.samples.clone());
    }
    let filtered = lowpass(waveform, out_rate / 2.0, transition_fraction, stopband_db)?;
    Ok(filtered.samples.into_iter().step_by(d).collect())
}

/// Capture of a periodic waveform given by one period; filtering is circular, so no edge
/// transients appear.
pub fn adc_capture_periodic<T: Real>(
    period: &IqWaveform<T>,
    out_rate: f64,
    transition_fraction: f64,
    stopband_db: f64,
) -> Result<Vec<Complex<T>>> {
    let d = decimation(period.sample_rate, out_rate)?;
    if d == 1 {
        return Ok(period.samples.clone());
    }
    let spec = LowpassSpec { cutoff: out_rate / 2.0, transition_fraction, stopband_db };
    let fir = FirFilter::design(&spec, period.sample_rate)?;
    let y = fir.filter_periodic(&period.samples, 0.0, period.sample_rate);
    Ok((0..period.samples.len() / d).map(|i| y.at((i * d) as i64)).collect())
}

/// Band-limited periodic interpolation (`FourierIdeal`) or sample repetition (`ZeroOrderHold`).
pub fn dac_upsample<T: Real>(period: &[Complex<T>], factor: usize, kernel: DacKernel) -> Vec<Complex<T>> {
    if factor <= 1 || period.is_empty() {
        return period.to_vec();
    }
    match kernel {
        DacKernel::ZeroOrderHold => period.iter().flat_map(|&v| std::iter::repeat_n(v, factor)).collect(),
        DacKernel::FourierIdeal => {
            let l = period.len();
            let big = l * factor;
            let mut planner = FftPlanner::<T>::new();
            let mut spec = period.to_vec();
            planner.plan_fft_forward(l).process(&mut spec);
            let mut up = vec![Complex::zero(); big];
            // positive bins below l/2; an even-length Nyquist bin is the lowest subcarrier of the
            // shifted grid and stays at -f_s/2
            let half = l.div_ceil(2);
            for (k, &v) in spec.iter().enumerate() {
                if k < half {
                    up[k] = v;
                } else {
                    up[big - (l - k)] = v;
                }
            }
            planner.plan_fft_inverse(big).process(&mut up);
            let scale = T::one() / T::of(l as f64);
            up.into_iter().map(|v| v * scale).collect()
        }
    }
}

/// `r(t) = Re{s(t)·e^{j2πFt}}` sampled at `f_sim`, after DAC reconstruction of the baseband.
///
/// The baseband is treated as one period of a periodic signal.
pub fn iq_modulate<T: Real>(
    baseband: &IqWaveform<T>,
    carrier: f64,
    sim_rate: f64,
    kernel: DacKernel,
) -> Result<PassbandWaveform<T>> {
    if sim_rate < 2.0 * (carrier + baseband.sample_rate / 2.0) * 1.25 {
        return Err(Error::InvalidConfig(format!(
            "sim rate {sim_rate} below 2.5x the top of the band at {}",
            carrier + baseband.sample_rate / 2.0
        )));
    }
    let k = decimation(sim_rate, baseband.sample_rate)?;
    let up = dac_upsample(&baseband.samples, k, kernel);
    let samples = up
        .iter()
        .enumerate()
        .map(|(n, s)| {
            let c: Complex<T> = cis(std::f64::consts::TAU * carrier * n as f64 / sim_rate);
            (*s * c).re
        })
        .collect();
    Ok(PassbandWaveform { samples, sample_rate: sim_rate })
}

/// Complex baseband `2·r(t)·e^{-j2πFt}` before filtering.
pub fn downmix<T: Real>(passband: &PassbandWaveform<T>, carrier: f64) -> Vec<Complex<T>> {
    passband
        .samples
        .iter()
        .enumerate()
        .map(|(n, &r)| {
            let c: Complex<T> = cis(-std::f64::consts::TAU * carrier * n as f64 / passband.sample_rate);
            c * (r + r)
        })
        .collect()
}

/// `s̃(t) = LPF{2·r(t)·e^{-j2πFt}}`, kept at the passband rate.
pub fn iq_demodulate<T: Real>(passband: &PassbandWaveform<T>, carrier: f64, lpf: &LowpassSpec) -> Result<IqWaveform<T>> {
    let fir = FirFilter::design(lpf, passband.sample_rate)?;
    Ok(IqWaveform { samples: fir.filter(&downmix(passband, carrier)), sample_rate: passband.sample_rate })
}

/// Ideal multiplication of baseband waveforms: `rf·conj(lo)` when down-converting, `rf·lo` up.
pub fn mix_ideal<T: Real>(lo: &IqWaveform<T>, rf: &IqWaveform<T>, direction: Direction) -> Result<IqWaveform<T>> {
    if lo.sample_rate != rf.sample_rate || lo.samples.len() != rf.samples.len() {
        return invalid("mixer inputs differ in rate or length");
    }
    let samples = lo
        .samples
        .iter()
        .zip(&rf.samples)
        .map(|(&l, &r)| match direction {
            Direction::Down => r * l.conj(),
            Direction::Up => r * l,
        })
        .collect();
    Ok(IqWaveform { samples, sample_rate: rf.sample_rate })
}

/// Diode-ring switching model: `sgn(r_LO)·r_RF`, sample by sample.
pub fn mix_diode<T: Real>(lo: &PassbandWaveform<T>, rf: &PassbandWaveform<T>) -> Result<PassbandWaveform<T>> {
    if lo.sample_rate != rf.sample_rate || lo.samples.len() != rf.samples.len() {
        return invalid("mixer inputs differ in rate or length");
    }
    let samples = lo
        .samples
        .iter()
        .zip(&rf.samples)
        .map(|(&l, &r)| {
            if l > T::zero() {
                r
            } else if l < T::zero() {
                -r
            } else {
                T::zero()
            }
        })
        .collect();
    Ok(PassbandWaveform { samples, sample_rate: rf.sample_rate })
}

/// Mean signal power inside `band` (Hz, baseband), from the periodogram.
pub fn band_power<T: Real>(waveform: &IqWaveform<T>, band: Option<(f64, f64)>) -> f64 {
    let Some((lo, hi)) = band else {
        return power(&waveform.samples);
    };
    let l = waveform.samples.len();
    let mut spec: Vec<Complex<f64>> =
        waveform.samples.iter().map(|v| Complex::new(v.re.as_f64(), v.im.as_f64())).collect();
    FftPlanner::<f64>::new().plan_fft_forward(l).process(&mut spec);
    let mut total = 0.0;
    for (k, v) in spec.iter().enumerate() {
        let kk = if k <= l / 2 { k as f64 } else { k as f64 - l as f64 };
        let f = kk * waveform.sample_rate / l as f64;
        if f >= lo && f <= hi {
            total += v.norm_sqr();
        }
    }
    total / (l as f64 * l as f64)
}

/// Adds complex white Gaussian noise so the in-band SNR equals `spec.snr_db`.
pub fn add_awgn<T: Real>(waveform: &IqWaveform<T>, spec: &NoiseSpec, seed: u64) -> Result<IqWaveform<T>> {
    if waveform.samples.is_empty() {
        return invalid("cannot add noise to an empty waveform");
    }
    if spec.is_noiseless() {
        return Ok(waveform.clone());
    }
    let fraction = match spec.band {
        None => 1.0,
        Some((lo, hi)) => {
            if !(hi > lo) {
                return invalid("measurement band is empty");
            }
            ((hi - lo) / waveform.sample_rate).min(1.0)
        }
    };
    let var = band_power(waveform, spec.band) / spec.snr_linear() / fraction;
    let mut rng = rng_from(seed);
    let samples = waveform.samples.iter().map(|&s| s + complex_gaussian::<T, _>(&mut rng, var)).collect();
    Ok(IqWaveform { samples, sample_rate: waveform.sample_rate })
}

/// Peak-to-average power ratio in dB.
pub fn papr<T: Real>(samples: &[Complex<T>]) -> Result<f64> {
    let mean = power(samples);
    if samples.is_empty() || mean == 0.0 {
        return Err(Error::Undefined("PAPR of an all-zero or empty signal".into()));
    }
    let peak = samples.iter().map(|v| v.norm_sqr().as_f64()).fold(0.0, f64::max);
    Ok(linear_to_db(peak / mean))
}

/// Scales to mean amplitude `target` and hard-clips magnitudes above one. Returns the gain applied.
pub fn dac_normalize<T: Real>(samples: &mut [Complex<T>], target: f64) -> f64 {
    let mean_amp = samples.iter().map(|v| v.norm().as_f64()).sum::<f64>() / samples.len().max(1) as f64;
    if mean_amp == 0.0 {
        return 1.0;
    }
    let g = target / mean_amp;
    for v in samples.iter_mut() {
        *v = *v * T::of(g);
        let m = v.norm();
        if m > T::one() {
            *v = *v / m;
        }
    }
    g
}
