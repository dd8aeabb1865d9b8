//! Channel models, CSI estimation and the two precoders.
//!
//! CSI is kept in the mixing frame: `H_{m,n}` is the factor the channel applies to the weight
//! that meets input `n` on output row `m`, so a received block computes `y_m = Σ H_{m,n}·V_{m,n}·x_n`.
//! Up-conversion reads `H_{m,n} = S_h[L-1-m-n·M_pad]`; down-conversion transmits the reversed
//! conjugate and reads `conj(S_h[m+n·M_pad])`.

use num_complex::Complex;
use num_traits::Zero;

use crate::error::{invalid, Error, Result};
use crate::frontend::{Direction, IqWaveform, NoiseSpec};
use crate::lstsq::solve_least_squares;
use crate::matrix::CMatrix;
use crate::mvm::{fold_inverse_transform, probe_outputs, MvmPlan, RunOptions, Scheme};
use crate::ofdm::ShiftedDft;
use crate::rng::{complex_gaussian, rng_from};
use crate::scalar::{cis, Real};

#[derive(Debug, Clone, PartialEq)]
pub enum ChannelResponse<T> {
    Flat(Complex<T>),
    /// Tap delays in samples at `sample_rate`.
    Taps { sample_rate: f64, taps: Vec<(f64, Complex<T>)> },
    /// Response at ascending baseband frequencies covering `[-band/2, band/2]`.
    Tabulated { band: f64, frequencies: Vec<f64>, values: Vec<Complex<T>> },
}

impl<T: Real> ChannelResponse<T> {
    pub fn flat(gain: Complex<T>) -> Self {
        ChannelResponse::Flat(gain)
    }

    pub fn taps(sample_rate: f64, taps: Vec<(f64, Complex<T>)>) -> Self {
        ChannelResponse::Taps { sample_rate, taps }
    }

    /// A unit line-of-sight tap followed by `count - 1` taps, one sample apart, with magnitudes
    /// uniform in `[lo, hi]` and uniform phases.
    pub fn random_multipath(count: usize, lo: f64, hi: f64, sample_rate: f64, seed: u64) -> Self {
        let mut rng = rng_from(seed);
        let mut taps = vec![(0.0, Complex::new(T::one(), T::zero()))];
        for d in 1..count {
            let mag = lo + (hi - lo) * rand::Rng::random::<f64>(&mut rng);
            let phase = std::f64::consts::TAU * rand::Rng::random::<f64>(&mut rng);
            taps.push((d as f64, cis::<T>(phase) * T::of(mag)));
        }
        ChannelResponse::Taps { sample_rate, taps }
    }

    /// Tabulated response on an `L`-subcarrier grid spanning `band`.
    pub fn tabulated(values: Vec<Complex<T>>, band: f64) -> Self {
        let l = values.len();
        let frequencies = (0..l).map(|k| (k as f64 - l as f64 / 2.0) * band / l as f64).collect();
        ChannelResponse::Tabulated { band, frequencies, values }
    }

    /// `h(f)` at baseband frequency `f` relative to the carrier.
    pub fn response(&self, f: f64) -> Result<Complex<T>> {
        match self {
            ChannelResponse::Flat(g) => Ok(*g),
            ChannelResponse::Taps { sample_rate, taps } => Ok(taps
                .iter()
                .map(|&(d, g)| g * cis::<T>(-std::f64::consts::TAU * f * d / sample_rate))
                .fold(Complex::zero(), |a, b| a + b)),
            ChannelResponse::Tabulated { band, frequencies, values } => {
                if f < -band / 2.0 - 1e-9 * band || f > band / 2.0 + 1e-9 * band {
                    return Err(Error::InvalidConfig(format!("frequency {f} outside the tabulated band {band}")));
                }
                Ok(interpolate_at(frequencies, values, f))
            }
        }
    }

    /// `S_h[k] = h((k - L/2)·Δf)`.
    pub fn subcarrier_response(&self, l: usize, spacing: f64) -> Result<Vec<Complex<T>>> {
        (0..l).map(|k| self.response((k as f64 - l as f64 / 2.0) * spacing)).collect()
    }

    /// Longest tap delay in seconds (zero for non-tap channels).
    pub fn max_delay(&self) -> f64 {
        match self {
            ChannelResponse::Taps { sample_rate, taps } => taps.iter().map(|t| t.0).fold(0.0, f64::max) / sample_rate,
            _ => 0.0,
        }
    }
}

/// Per-subcarrier multiplication `S_RX[k] = S_TX[k]·S_h[k]`.
pub fn apply_channel_symbols<T: Real>(symbols: &[Complex<T>], channel: &ChannelResponse<T>, spacing: f64) -> Result<Vec<Complex<T>>> {
    let sh = channel.subcarrier_response(symbols.len(), spacing)?;
    Ok(symbols.iter().zip(&sh).map(|(&a, &b)| a * b).collect())
}

/// Time-domain channel: linear tap-delay convolution, or per-bin multiplication of the waveform
/// treated as one period for tabulated responses.
pub fn apply_channel_waveform<T: Real>(waveform: &IqWaveform<T>, channel: &ChannelResponse<T>) -> Result<IqWaveform<T>> {
    let samples = match channel {
        ChannelResponse::Flat(g) => waveform.samples.iter().map(|&v| v * *g).collect(),
        ChannelResponse::Taps { sample_rate, taps } => {
            let mut out = vec![Complex::zero(); waveform.samples.len()];
            for &(d, g) in taps {
                let shift = d * waveform.sample_rate / sample_rate;
                let s = shift.round();
                if (shift - s).abs() > 1e-9 || s < 0.0 {
                    return invalid(format!("tap delay {d} is not a whole number of samples at this rate"));
                }
                let s = s as usize;
                for n in s..out.len() {
                    out[n] = out[n] + waveform.samples[n - s] * g;
                }
            }
            out
        }
        ChannelResponse::Tabulated { .. } => {
            let l = waveform.samples.len();
            let spec = crate::ofdm::dft_shifted(&waveform.samples);
            let rx = apply_channel_symbols(&spec, channel, waveform.sample_rate / l as f64)?;
            crate::ofdm::idft_shifted(&rx)
        }
    };
    IqWaveform::new(samples, waveform.sample_rate)
}

fn unwrap_phases(values: &[Complex<f64>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut prev = 0.0;
    for (i, v) in values.iter().enumerate() {
        let mut p = v.arg();
        if i > 0 {
            let two_pi = std::f64::consts::TAU;
            p += two_pi * ((prev - p) / two_pi).round();
        }
        out.push(p);
        prev = p;
    }
    out
}

/// Nearest-neighbour amplitude, linearly interpolated (and edge-extrapolated) unwrapped phase.
fn interpolate_at<T: Real>(freqs: &[f64], values: &[Complex<T>], f: f64) -> Complex<T> {
    interpolate_many(freqs, values, &[f])[0]
}

fn interpolate_many<T: Real>(freqs: &[f64], values: &[Complex<T>], targets: &[f64]) -> Vec<Complex<T>> {
    let v64: Vec<Complex<f64>> = values.iter().map(|v| Complex::new(v.re.as_f64(), v.im.as_f64())).collect();
    if v64.len() == 1 {
        return vec![values[0]; targets.len()];
    }
    let phases = unwrap_phases(&v64);
    targets
        .iter()
        .map(|&f| {
            // segment [i, i+1] containing f, clamped to the end segments for extrapolation
            let i = match freqs.partition_point(|&g| g <= f) {
                0 => 0,
                p => (p - 1).min(freqs.len() - 2),
            };
            let (f0, f1) = (freqs[i], freqs[i + 1]);
            let t = (f - f0) / (f1 - f0);
            let phase = phases[i] + t * (phases[i + 1] - phases[i]);
            let nearest = if t < 0.5 { i } else { i + 1 };
            let amp = v64[nearest].norm();
            Complex::new(T::of(amp * phase.cos()), T::of(amp * phase.sin()))
        })
        .collect()
}

/// Resamples a response measured on an `L1`-subcarrier grid over `band_from` onto an
/// `L2`-subcarrier grid over `band_to`.
pub fn interpolate_csi<T: Real>(values: &[Complex<T>], band_from: f64, l_to: usize, band_to: f64) -> Result<Vec<Complex<T>>> {
    if values.is_empty() || l_to == 0 {
        return invalid("empty grid");
    }
    if band_to > band_from * (1.0 + 1e-12) {
        return invalid(format!("target band {band_to} extends beyond the measured band {band_from}"));
    }
    let l1 = values.len();
    if l1 == l_to && band_to == band_from {
        return Ok(values.to_vec());
    }
    let freqs: Vec<f64> = (0..l1).map(|k| (k as f64 - l1 as f64 / 2.0) * band_from / l1 as f64).collect();
    let targets: Vec<f64> = (0..l_to).map(|k| (k as f64 - l_to as f64 / 2.0) * band_to / l_to as f64).collect();
    Ok(interpolate_many(&freqs, values, &targets))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsiEstimate<T> {
    /// `M_pad × N` matrix in the mixing frame.
    pub h_matrix: CMatrix<T>,
    /// Column average over the useful rows.
    pub h_vector: Vec<Complex<T>>,
    pub residual: f64,
    pub probe_count: usize,
}

impl<T: Real> CsiEstimate<T> {
    /// Reshapes a per-subcarrier response of the plan's transmit grid.
    pub fn from_response(sh: &[Complex<T>], plan: &MvmPlan, direction: Direction) -> Result<Self> {
        let (mp, n) = (plan.capture_len(), plan.padded_input());
        let l = plan.tx_fft_size();
        if sh.len() != l {
            return invalid(format!("response has {} subcarriers, plan needs {l}", sh.len()));
        }
        let h = CMatrix::from_fn(mp, n, |m, j| match direction {
            Direction::Up => sh[l - 1 - m - j * mp],
            Direction::Down => sh[m + j * mp].conj(),
        });
        Ok(Self::from_matrix(h, plan, 0.0, 1))
    }

    pub fn from_channel(channel: &ChannelResponse<T>, plan: &MvmPlan, direction: Direction) -> Result<Self> {
        let sh = channel.subcarrier_response(plan.tx_fft_size(), plan.subcarrier_spacing())?;
        Self::from_response(&sh, plan, direction)
    }

    pub fn from_matrix(h_matrix: CMatrix<T>, plan: &MvmPlan, residual: f64, probe_count: usize) -> Self {
        let rows = plan.useful_rows();
        let count = T::of(rows.len() as f64);
        let h_vector = (0..h_matrix.cols())
            .map(|n| rows.clone().map(|m| h_matrix[(m, n)]).fold(Complex::zero(), |a, b| a + b) / count)
            .collect();
        Self { h_matrix, h_vector, residual, probe_count }
    }

    /// Column-vector estimate broadcast over every row (x-precoding form).
    pub fn from_vector(h_vector: Vec<Complex<T>>, rows: usize, residual: f64, probe_count: usize) -> Self {
        let h_matrix = CMatrix::from_fn(rows, h_vector.len(), |_, n| h_vector[n]);
        Self { h_matrix, h_vector, residual, probe_count }
    }
}

/// One observation used for estimation.
#[derive(Debug, Clone, PartialEq)]
pub enum Probe<T> {
    /// Known symbols on every subcarrier and what arrived.
    Sounding { sent: Vec<Complex<T>>, received: Vec<Complex<T>> },
    /// A full MVM: weights `V` (`M_pad × N`), input-grid symbols `x`, outputs for all `M_pad` rows.
    Mvm { v: CMatrix<T>, x: Vec<Complex<T>>, y: Vec<Complex<T>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimationMode {
    WPrecode,
    XPrecode,
    Sounding,
}

/// Least-squares CSI from probes.
///
/// `WPrecode` solves each row of `H` from `y_m = Σ_n H_{m,n}·V_{m,n}·x_n` (needs `N` probes);
/// `XPrecode` solves the shared column vector from all rows at once (needs `N/M_pad` probes);
/// `Sounding` averages `received/sent` per subcarrier over the probes.
pub fn estimate_csi<T: Real>(
    probes: &[Probe<T>],
    mode: EstimationMode,
    plan: &MvmPlan,
    direction: Direction,
    ridge: f64,
) -> Result<CsiEstimate<T>> {
    if probes.is_empty() {
        return Err(Error::UnderDetermined("no probes".into()));
    }
    let (mp, n) = (plan.capture_len(), plan.padded_input());
    match mode {
        EstimationMode::Sounding => {
            let l = plan.tx_fft_size();
            let mut acc = vec![Complex::<T>::zero(); l];
            let mut residual = 0.0;
            for p in probes {
                let Probe::Sounding { sent, received } = p else {
                    return invalid("sounding estimation needs sounding probes");
                };
                if sent.len() != l || received.len() != l {
                    return invalid(format!("sounding probe must cover all {l} subcarriers"));
                }
                for k in 0..l {
                    if sent[k].norm_sqr() == T::zero() {
                        return Err(Error::UnderDetermined(format!("subcarrier {k} carries no probe energy")));
                    }
                    acc[k] = acc[k] + received[k] / sent[k];
                }
            }
            let count = T::of(probes.len() as f64);
            let sh: Vec<_> = acc.into_iter().map(|v| v / count).collect();
            for p in probes {
                if let Probe::Sounding { sent, received } = p {
                    residual += sent
                        .iter()
                        .zip(received)
                        .zip(&sh)
                        .map(|((s, r), h)| (*r - *s * *h).norm_sqr().as_f64())
                        .sum::<f64>()
                        / l as f64;
                }
            }
            let mut est = CsiEstimate::from_response(&sh, plan, direction)?;
            est.residual = residual / probes.len() as f64;
            est.probe_count = probes.len();
            Ok(est)
        }
        EstimationMode::WPrecode => {
            let mut h = CMatrix::zeros(mp, n);
            let mut residual = 0.0;
            for m in 0..mp {
                let mut a = CMatrix::zeros(probes.len(), n);
                let mut b = Vec::with_capacity(probes.len());
                for (i, p) in probes.iter().enumerate() {
                    let (v, x, y) = mvm_probe(p, mp, n)?;
                    for j in 0..n {
                        a[(i, j)] = v[(m, j)] * x[j];
                    }
                    b.push(y[m]);
                }
                let sol = solve_least_squares(&a, &b, ridge)?;
                residual += sol.residual;
                h.row_mut(m).copy_from_slice(&sol.x);
            }
            Ok(CsiEstimate::from_matrix(h, plan, residual / mp as f64, probes.len()))
        }
        EstimationMode::XPrecode => {
            let mut a = CMatrix::zeros(probes.len() * mp, n);
            let mut b = Vec::with_capacity(probes.len() * mp);
            for (i, p) in probes.iter().enumerate() {
                let (v, x, y) = mvm_probe(p, mp, n)?;
                for m in 0..mp {
                    for j in 0..n {
                        a[(i * mp + m, j)] = v[(m, j)] * x[j];
                    }
                    b.push(y[m]);
                }
            }
            let sol = solve_least_squares(&a, &b, ridge)?;
            Ok(CsiEstimate::from_vector(sol.x, mp, sol.residual, probes.len()))
        }
    }
}

fn mvm_probe<T: Real>(p: &Probe<T>, mp: usize, n: usize) -> Result<(&CMatrix<T>, &[Complex<T>], &[Complex<T>])> {
    match p {
        Probe::Mvm { v, x, y } if v.rows() == mp && v.cols() == n && x.len() == n && y.len() == mp => Ok((v, x, y)),
        Probe::Mvm { .. } => invalid(format!("MVM probe must be {mp}x{n} with matching vectors")),
        _ => invalid("least-squares estimation needs MVM probes"),
    }
}

/// Simulated full-band sounding: unit-modulus random-phase symbols on every subcarrier through
/// `channel`, with complex noise at `probe_snr_db` relative to the mean received power.
pub fn sound_channel<T: Real>(
    channel: &ChannelResponse<T>,
    plan: &MvmPlan,
    direction: Direction,
    probe_snr_db: f64,
    seed: u64,
) -> Result<CsiEstimate<T>> {
    let l = plan.tx_fft_size();
    let mut rng = rng_from(seed);
    let sent: Vec<Complex<T>> = (0..l)
        .map(|_| {
            let u: f64 = rand::Rng::random(&mut rng);
            cis(u * std::f64::consts::TAU)
        })
        .collect();
    let clean = apply_channel_symbols(&sent, channel, plan.subcarrier_spacing())?;
    let received = if probe_snr_db.is_finite() {
        let var = crate::scalar::power(&clean) / crate::frontend::db_to_linear(probe_snr_db);
        clean.iter().map(|&v| v + complex_gaussian::<T, _>(&mut rng, var)).collect()
    } else {
        clean
    };
    estimate_csi(&[Probe::Sounding { sent, received }], EstimationMode::Sounding, plan, direction, 0.0)
}

/// `count` probe MVMs with random unit-modulus weights and inputs, measured through `channel`
/// with output noise at `probe_snr_db`.
pub fn collect_mvm_probes<T: Real>(
    channel: &ChannelResponse<T>,
    plan: &MvmPlan,
    direction: Direction,
    count: usize,
    probe_snr_db: f64,
    seed: u64,
) -> Result<Vec<Probe<T>>> {
    let (mp, n) = (plan.capture_len(), plan.padded_input());
    let mut rng = rng_from(seed);
    let phasor = |rng: &mut crate::rng::SimRng| -> Complex<T> { cis(rand::Rng::random::<f64>(rng) * std::f64::consts::TAU) };
    let mut opts = RunOptions::ideal(Scheme::Basic);
    opts.channel = channel.clone();
    opts.direction = direction;
    opts.noise = NoiseSpec::full_band(probe_snr_db);
    (0..count)
        .map(|i| {
            let v = CMatrix::from_fn(mp, n, |_, _| phasor(&mut rng));
            let x: Vec<_> = (0..n).map(|_| phasor(&mut rng)).collect();
            opts.seed = crate::rng::derive_seed(seed, i as u64 + 1);
            let y = probe_outputs(&v, &x, plan, &opts)?;
            Ok(Probe::Mvm { v, x, y })
        })
        .collect()
}

/// Entry-wise mean of several clients' estimates.
pub fn average_csi<T: Real>(estimates: &[CsiEstimate<T>]) -> Result<CsiEstimate<T>> {
    let first = estimates.first().ok_or_else(|| Error::InvalidArgument("no estimates to average".into()))?;
    let (r, c) = (first.h_matrix.rows(), first.h_matrix.cols());
    if estimates.iter().any(|e| e.h_matrix.rows() != r || e.h_matrix.cols() != c) {
        return invalid("estimates differ in shape");
    }
    let k = T::of(estimates.len() as f64);
    let h = CMatrix::from_fn(r, c, |i, j| estimates.iter().map(|e| e.h_matrix[(i, j)]).fold(Complex::zero(), |a, b| a + b) / k);
    let hv = (0..first.h_vector.len())
        .map(|j| estimates.iter().map(|e| e.h_vector[j]).fold(Complex::zero(), |a, b| a + b) / k)
        .collect();
    Ok(CsiEstimate {
        h_matrix: h,
        h_vector: hv,
        residual: estimates.iter().map(|e| e.residual).sum::<f64>() / estimates.len() as f64,
        probe_count: estimates.iter().map(|e| e.probe_count).sum(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Precoded<V> {
    pub values: V,
    /// Entries whose channel magnitude fell below the floor and were clamped to it.
    pub clamped: usize,
}

impl<V> Precoded<V> {
    /// The precoded values, or a singular-channel error if any entry had to be clamped.
    pub fn strict(self) -> Result<V> {
        if self.clamped > 0 {
            return Err(Error::SingularChannel { count: self.clamped });
        }
        Ok(self.values)
    }
}

fn floor_of<T: Real>(values: &[Complex<T>]) -> f64 {
    let mut mags: Vec<f64> = values.iter().map(|v| v.norm().as_f64()).collect();
    mags.sort_by(|a, b| a.total_cmp(b));
    if mags.is_empty() {
        return 0.0;
    }
    1e-6 * mags[mags.len() / 2]
}

fn safe_divide<T: Real>(num: Complex<T>, den: Complex<T>, floor: f64, clamped: &mut usize) -> Complex<T> {
    let mag = den.norm().as_f64();
    if mag < floor || mag == 0.0 {
        *clamped += 1;
        let phase = if mag > 0.0 { den / den.norm() } else { Complex::new(T::one(), T::zero()) };
        num / (phase * T::of(floor.max(f64::MIN_POSITIVE)))
    } else {
        num / den
    }
}

/// `V = W ⊘ Ĥ` for an `M_pad × N` block. With `time_encoding`, `W` is first multiplied by the
/// shifted inverse-DFT matrix (scaled by `1/M_pad`) so the client can send raw repeated `x`.
pub fn precode_weights<T: Real>(w: &CMatrix<T>, csi: &CsiEstimate<T>, time_encoding: bool) -> Result<Precoded<CMatrix<T>>> {
    let (mp, n) = (csi.h_matrix.rows(), csi.h_matrix.cols());
    if w.rows() != mp || w.cols() != n {
        return invalid(format!("weights {}x{} do not match CSI {mp}x{n}", w.rows(), w.cols()));
    }
    let base = if time_encoding {
        let dft = ShiftedDft::new(n);
        let mut out = CMatrix::zeros(mp, n);
        for r in 0..mp {
            let folded = fold_inverse_transform(w.row(r), mp, &dft);
            out.row_mut(r).copy_from_slice(&folded);
        }
        out
    } else {
        w.clone()
    };
    let floor = floor_of(csi.h_matrix.as_slice());
    let mut clamped = 0;
    let v = CMatrix::from_fn(mp, n, |r, c| safe_divide(base[(r, c)], csi.h_matrix[(r, c)], floor, &mut clamped));
    Ok(Precoded { values: v, clamped })
}

/// `v = x ⊘ ĥ`. Costs the client `4N` extra real multiply-accumulates.
pub fn precode_input<T: Real>(x: &[Complex<T>], csi: &CsiEstimate<T>) -> Result<Precoded<Vec<Complex<T>>>> {
    if x.len() != csi.h_vector.len() {
        return invalid(format!("input of length {} against CSI of length {}", x.len(), csi.h_vector.len()));
    }
    let floor = floor_of(&csi.h_vector);
    let mut clamped = 0;
    let v = x.iter().zip(&csi.h_vector).map(|(&a, &h)| safe_divide(a, h, floor, &mut clamped)).collect();
    Ok(Precoded { values: v, clamped })
}

/// Real multiply-accumulates the client spends on input precoding.
pub fn precode_input_macs(n: usize) -> usize {
    4 * n
}
