//! Frequency-encoded MVM: subcarrier mapping, mixing, reduced-rate capture and decoding.
//!
//! Row `m` (zero-padded index) of a block and input element `n` meet on subcarrier
//! `L-1-m-n·M_pad` of the mixer output, where `M_pad = M'+2ΔM` and `L = N·M_pad`. A receiver
//! sampling at `M_pad·Δf` sees exactly the `M_pad` subcarriers that carry one block's outputs.

use num_complex::Complex;
use num_traits::Zero;

use crate::channel::{ChannelResponse, CsiEstimate};
use crate::error::{invalid, Error, Result};
use crate::frontend::{
    dac_normalize, dac_upsample, downmix, iq_modulate, mix_diode, Direction, FirFilter, FrontendConfig, IqWaveform,
    LowpassSpec, MixerModel, NoiseSpec,
};
use crate::matrix::CMatrix;
use crate::ofdm::{attach_cyclic_prefix, dft_shifted, idft_shifted, remove_cyclic_prefix, ShiftedDft};
use crate::rng::{complex_gaussian, derive_seed, stream};
use crate::scalar::{cis, power, Real};
use crate::sync::{derotate, detect_preamble_and_cfo, generate_preamble, refine_timing, DEFAULT_THRESHOLD};

/// Mean baseband amplitude the DAC model normalizes every transmitted block to.
pub const DAC_MEAN_AMPLITUDE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Vanilla,
    Basic,
    WPrecode,
    XPrecode,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Vanilla, Scheme::Basic, Scheme::WPrecode, Scheme::XPrecode];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Vanilla => "vanilla",
            Scheme::Basic => "basic",
            Scheme::WPrecode => "w-precode",
            Scheme::XPrecode => "x-precode",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }

    /// Input encoding the client uses under this scheme.
    pub fn encoding(&self) -> InputEncoding {
        match self {
            Scheme::Vanilla => InputEncoding::Vanilla,
            Scheme::Basic | Scheme::XPrecode => InputEncoding::Basic,
            Scheme::WPrecode => InputEncoding::TimeEncoded,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputEncoding {
    /// Full `N·M_pad`-point inverse transform.
    Vanilla,
    /// One `N`-point inverse transform, repeated.
    Basic,
    /// Raw `x` repeated; the transform is folded into the weights.
    TimeEncoded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fidelity {
    Symbolic,
    Waveform,
}

impl Fidelity {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "symbolic" => Some(Fidelity::Symbolic),
            "waveform" => Some(Fidelity::Waveform),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Fidelity::Symbolic => "symbolic",
            Fidelity::Waveform => "waveform",
        }
    }
}

/// Dimensioning of one decomposed MVM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvmPlan {
    pub input_size: usize,
    pub output_size: usize,
    pub block_output: usize,
    pub zero_pad: usize,
    pub cp_len: usize,
    pub bandwidth: f64,
}

pub fn plan_mvm(n: usize, m: usize, m_block: usize, zero_pad: usize, cp_len: usize, bandwidth: f64) -> Result<MvmPlan> {
    if n == 0 || m == 0 || m_block == 0 {
        return invalid("N, M and M' must be positive");
    }
    if m % m_block != 0 {
        return invalid(format!("M={m} is not a multiple of M'={m_block}; pad M with zero rows"));
    }
    if !(bandwidth > 0.0) {
        return invalid("bandwidth must be positive");
    }
    let plan = MvmPlan { input_size: n, output_size: m, block_output: m_block, zero_pad, cp_len, bandwidth };
    if cp_len > plan.capture_len() {
        return invalid(format!("cyclic prefix {cp_len} longer than capture window {}", plan.capture_len()));
    }
    Ok(plan)
}

impl MvmPlan {
    /// Plan for `m` outputs, rounding `M` up to a multiple of `M'`.
    pub fn covering(n: usize, m: usize, m_block: usize, zero_pad: usize, cp_len: usize, bandwidth: f64) -> Result<Self> {
        let m_block = m_block.max(1);
        plan_mvm(n, m.div_ceil(m_block) * m_block, m_block, zero_pad, cp_len, bandwidth)
    }

    /// `N` rounded up to even. An odd input gets one zero element so that the repeated input
    /// waveform stays on the subcarrier grid.
    pub fn padded_input(&self) -> usize {
        self.input_size + self.input_size % 2
    }

    /// `M_pad = (1+α)·M'`.
    pub fn capture_len(&self) -> usize {
        self.block_output + 2 * self.zero_pad
    }

    pub fn alpha(&self) -> f64 {
        2.0 * self.zero_pad as f64 / self.block_output as f64
    }

    pub fn beta(&self) -> f64 {
        self.cp_len as f64 / self.capture_len() as f64
    }

    pub fn block_count(&self) -> usize {
        self.output_size / self.block_output
    }

    /// Transmit transform size including the zero subcarriers, `N·M_pad`.
    pub fn tx_fft_size(&self) -> usize {
        self.padded_input() * self.capture_len()
    }

    pub fn subcarrier_spacing(&self) -> f64 {
        self.bandwidth / self.tx_fft_size() as f64
    }

    pub fn capture_rate(&self) -> f64 {
        self.capture_len() as f64 * self.subcarrier_spacing()
    }

    pub fn tx_prefix_len(&self) -> usize {
        self.padded_input() * self.cp_len
    }

    /// Air time of all blocks, `(1+α)(1+β)·N·M/B`.
    pub fn waveform_time(&self) -> f64 {
        (self.block_count() * (self.capture_len() + self.cp_len) * self.padded_input()) as f64 / self.bandwidth
    }

    /// Subcarrier carrying padded row `m`, column `n`.
    pub fn weight_subcarrier(&self, m: usize, n: usize) -> usize {
        self.tx_fft_size() - 1 - m - n * self.capture_len()
    }

    /// Padded row indices holding real outputs.
    pub fn useful_rows(&self) -> std::ops::Range<usize> {
        self.zero_pad..self.zero_pad + self.block_output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightBlockSymbols<T> {
    pub block_index: usize,
    pub symbols: Vec<Complex<T>>,
    pub flipped: bool,
}

/// Low-rate samples of one block: `ΔL` prefix samples followed by `M_pad` window samples.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureBuffer<T> {
    pub block_index: usize,
    pub samples: Vec<Complex<T>>,
}

/// `M_pad × N_eff` block with `ΔM` zero rows on each side. Accepts `M'` or `M_pad` rows.
pub fn padded_block<T: Real>(block: &CMatrix<T>, plan: &MvmPlan) -> Result<CMatrix<T>> {
    let (mp, n_eff) = (plan.capture_len(), plan.padded_input());
    if block.cols() != plan.input_size && block.cols() != n_eff {
        return invalid(format!("block has {} columns, plan expects {}", block.cols(), plan.input_size));
    }
    let offset = if block.rows() == plan.block_output {
        plan.zero_pad
    } else if block.rows() == mp {
        0
    } else {
        return invalid(format!("block has {} rows, plan expects {} or {mp}", block.rows(), plan.block_output));
    };
    Ok(CMatrix::from_fn(mp, n_eff, |r, c| {
        if r >= offset && r - offset < block.rows() && c < block.cols() {
            block[(r - offset, c)]
        } else {
            Complex::zero()
        }
    }))
}

/// Places `W_{m,n}` on subcarrier `L-1-m-n·M_pad`; down-conversion reverses the vector.
pub fn encode_weights_block<T: Real>(
    block: &CMatrix<T>,
    plan: &MvmPlan,
    direction: Direction,
    block_index: usize,
) -> Result<WeightBlockSymbols<T>> {
    let padded = padded_block(block, plan)?;
    let mut symbols = vec![Complex::zero(); plan.tx_fft_size()];
    for m in 0..padded.rows() {
        for n in 0..padded.cols() {
            symbols[plan.weight_subcarrier(m, n)] = padded[(m, n)];
        }
    }
    let flipped = direction == Direction::Down;
    if flipped {
        symbols.reverse();
    }
    Ok(WeightBlockSymbols { block_index, symbols, flipped })
}

/// Symbols the central radio transmits so that the mixer multiplies by `V` itself.
///
/// Down-conversion conjugates the LO-port waveform; conjugating and reversing before
/// transmission undoes it up to a one-subcarrier shift that the receiver tunes out.
pub fn transmit_symbols<T: Real>(v: &CMatrix<T>, plan: &MvmPlan, direction: Direction, block_index: usize) -> Result<Vec<Complex<T>>> {
    let v = match direction {
        Direction::Down => v.conj(),
        Direction::Up => v.clone(),
    };
    Ok(encode_weights_block(&v, plan, direction, block_index)?.symbols)
}

/// Symbols that enter the mixer's convolution after the channel, in the up-conversion frame.
pub fn effective_symbols<T: Real>(received: &[Complex<T>], direction: Direction) -> Vec<Complex<T>> {
    match direction {
        Direction::Up => received.to_vec(),
        Direction::Down => received.iter().rev().map(|v| v.conj()).collect(),
    }
}

fn pad_input<T: Real>(x: &[Complex<T>], plan: &MvmPlan) -> Result<Vec<Complex<T>>> {
    if x.len() != plan.input_size && x.len() != plan.padded_input() {
        return invalid(format!("input has length {}, plan expects {}", x.len(), plan.input_size));
    }
    let mut v = x.to_vec();
    v.resize(plan.padded_input(), Complex::zero());
    Ok(v)
}

/// One period (no prefix) of the client waveform at rate `B`.
pub fn input_period<T: Real>(x: &[Complex<T>], plan: &MvmPlan, encoding: InputEncoding) -> Result<Vec<Complex<T>>> {
    let x = pad_input(x, plan)?;
    let mp = plan.capture_len();
    Ok(match encoding {
        InputEncoding::Vanilla => {
            let mut s = vec![Complex::zero(); plan.tx_fft_size()];
            for (n, &v) in x.iter().enumerate() {
                s[n * mp] = v;
            }
            idft_shifted(&s)
        }
        InputEncoding::Basic => {
            let scale = T::one() / T::of(mp as f64);
            let base: Vec<_> = idft_shifted(&x).into_iter().map(|v| v * scale).collect();
            base.iter().copied().cycle().take(plan.tx_fft_size()).collect()
        }
        InputEncoding::TimeEncoded => x.iter().copied().cycle().take(plan.tx_fft_size()).collect(),
    })
}

/// Client waveform with its `N·ΔL`-sample cyclic prefix.
pub fn encode_input<T: Real>(x: &[Complex<T>], plan: &MvmPlan, encoding: InputEncoding) -> Result<IqWaveform<T>> {
    let period = input_period(x, plan, encoding)?;
    IqWaveform::new(attach_cyclic_prefix(&period, plan.tx_prefix_len())?, plan.bandwidth)
}

/// Values the input waveform carries on subcarriers `n·M_pad`.
pub fn input_grid_symbols<T: Real>(x: &[Complex<T>], plan: &MvmPlan, encoding: InputEncoding) -> Result<Vec<Complex<T>>> {
    let x = pad_input(x, plan)?;
    Ok(match encoding {
        InputEncoding::Vanilla | InputEncoding::Basic => x,
        InputEncoding::TimeEncoded => {
            let g = T::of(plan.capture_len() as f64);
            dft_shifted(&x).into_iter().map(|v| v * g).collect()
        }
    })
}

/// Captured part of the linear convolution: entry `m` is `S_y[L-1-m]` for padded row `m`.
pub fn convolve_captured<T: Real>(effective: &[Complex<T>], grid: &[Complex<T>], plan: &MvmPlan) -> Vec<Complex<T>> {
    let l = plan.tx_fft_size();
    let mp = plan.capture_len();
    (0..mp)
        .map(|m| {
            let mut acc = Complex::zero();
            for (n, &xv) in grid.iter().enumerate() {
                let k = l as isize - 1 - m as isize - (n * mp) as isize;
                if k >= 0 {
                    acc = acc + xv * effective[k as usize];
                }
            }
            acc
        })
        .collect()
}

/// Spectrum of the mixer output for two symbol vectors of length `L`, computed from the
/// time-domain product.
///
/// Both waveforms `Σ S[k]·e^{j2π(k-L/2)Δf·t}` are evaluated at `2L-1` instants per period,
/// multiplied together with the `e^{jπΔf·t}` offset, and read back with a `(2L-1)`-point shifted
/// DFT. The result is the linear convolution of the two symbol vectors.
pub fn hybrid_product_spectrum<T: Real>(s1: &[Complex<T>], s2: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
    if s1.len() != s2.len() || s1.is_empty() {
        return invalid("symbol vectors must have equal, non-zero length");
    }
    let l = s1.len();
    let p = 2 * l - 1;
    let a = synthesize(s1, p);
    let b = synthesize(s2, p);
    let prod: Vec<Complex<T>> = a
        .iter()
        .zip(&b)
        .enumerate()
        .map(|(n, (&u, &v))| u * v * cis::<T>(std::f64::consts::PI * n as f64 / p as f64))
        .collect();
    let scale = T::one() / T::of(p as f64);
    Ok(dft_shifted(&prod).into_iter().map(|v| v * scale).collect())
}

/// Continuous waveform `Σ S[k]·e^{j2π(k-L/2)t/T}` sampled at `t = nT/P`, `P ≥ L`.
fn synthesize<T: Real>(symbols: &[Complex<T>], p: usize) -> Vec<Complex<T>> {
    let l = symbols.len();
    let mut buf = symbols.to_vec();
    buf.resize(p, Complex::zero());
    rustfft::FftPlanner::<T>::new().plan_fft_inverse(p).process(&mut buf);
    buf.iter()
        .enumerate()
        .map(|(n, &v)| {
            let ph = -std::f64::consts::PI * ((l * n) % (2 * p)) as f64 / p as f64;
            v * cis::<T>(ph)
        })
        .collect()
}

/// Removes the prefix, takes the `M_pad`-point shifted DFT and returns the `M'` useful outputs
/// in row order (`y_m = S[M_pad-1-m]`).
pub fn decode_block<T: Real>(capture: &CaptureBuffer<T>, plan: &MvmPlan) -> Result<Vec<Complex<T>>> {
    let mp = plan.capture_len();
    if capture.samples.len() != mp + plan.cp_len {
        return invalid(format!("capture has {} samples, plan expects {}", capture.samples.len(), mp + plan.cp_len));
    }
    let window = remove_cyclic_prefix(&capture.samples, plan.cp_len)?;
    if mp == 3 && plan.block_output == 1 {
        // y0 = S[1] = s0 + s1·e^{jπ/3} + s2·e^{j2π/3}
        let h = T::of(0.5);
        let r = T::of(3f64.sqrt() / 2.0);
        let (s0, s1, s2) = (window[0], window[1], window[2]);
        let re = s0.re + h * s1.re - r * s1.im - h * s2.re - r * s2.im;
        let im = s0.im + h * s1.im + r * s1.re - h * s2.im + r * s2.re;
        return Ok(vec![Complex::new(re, im)]);
    }
    let bins = dft_shifted(&window);
    Ok(plan.useful_rows().map(|m| bins[mp - 1 - m]).collect())
}

/// Undoes the linear phase left on decoded bins by reading the window `early` samples before
/// the end of the prefix.
pub fn correct_timing_phase<T: Real>(bins: &mut [Complex<T>], early: isize, plan: &MvmPlan) {
    let mp = plan.capture_len() as f64;
    for (i, v) in bins.iter_mut().enumerate() {
        let k = (plan.capture_len() - 1 - (plan.zero_pad + i)) as f64;
        *v = *v * cis::<T>(std::f64::consts::TAU * (k - mp / 2.0) * early as f64 / mp);
    }
}

/// Where the MVM gets its channel knowledge from.
#[derive(Debug, Clone, PartialEq)]
pub enum CsiSource<T> {
    /// Precoders use the true channel.
    Perfect,
    Estimated(CsiEstimate<T>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncOptions {
    pub enabled: bool,
    pub preamble_len: usize,
    pub timing_offset: usize,
    pub cfo: f64,
    pub threshold: f64,
}

impl Default for SyncOptions {
    fn default() -> Self {
        Self { enabled: false, preamble_len: 31, timing_offset: 0, cfo: 0.0, threshold: DEFAULT_THRESHOLD }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions<T> {
    pub scheme: Scheme,
    pub fidelity: Fidelity,
    pub direction: Direction,
    pub channel: ChannelResponse<T>,
    pub csi: CsiSource<T>,
    pub noise: NoiseSpec,
    /// Waveform fidelity only; `None` selects the scaled default plan.
    pub frontend: Option<FrontendConfig>,
    pub sync: SyncOptions,
    pub seed: u64,
}

impl<T: Real> RunOptions<T> {
    pub fn ideal(scheme: Scheme) -> Self {
        Self {
            scheme,
            fidelity: Fidelity::Symbolic,
            direction: Direction::Down,
            channel: ChannelResponse::flat(Complex::new(T::one(), T::zero())),
            csi: CsiSource::Perfect,
            noise: NoiseSpec::noiseless(),
            frontend: None,
            sync: SyncOptions::default(),
            seed: 0,
        }
    }
}

struct Prepared<T> {
    tx: Vec<Vec<Complex<T>>>,
    grid: Vec<Complex<T>>,
    x_period: Vec<Complex<T>>,
}

fn prepare<T: Real>(w: &CMatrix<T>, x: &[Complex<T>], plan: &MvmPlan, opts: &RunOptions<T>) -> Result<Prepared<T>> {
    if w.cols() != plan.input_size || x.len() != plan.input_size {
        return invalid(format!(
            "W is {}x{}, x has {} entries, plan is for N={}",
            w.rows(),
            w.cols(),
            x.len(),
            plan.input_size
        ));
    }
    if w.rows() > plan.output_size {
        return invalid(format!("W has {} rows, plan covers {}", w.rows(), plan.output_size));
    }
    let csi = match opts.scheme {
        Scheme::WPrecode | Scheme::XPrecode => Some(match &opts.csi {
            CsiSource::Perfect => CsiEstimate::from_channel(&opts.channel, plan, opts.direction)?,
            CsiSource::Estimated(e) => {
                if e.h_matrix.rows() != plan.capture_len() || e.h_matrix.cols() != plan.padded_input() {
                    return invalid("CSI estimate was made for a different plan");
                }
                e.clone()
            }
        }),
        _ => None,
    };
    let encoding = opts.scheme.encoding();
    let x_used = match (&csi, opts.scheme) {
        (Some(c), Scheme::XPrecode) => crate::channel::precode_input(&pad_input(x, plan)?, c)?.values,
        _ => pad_input(x, plan)?,
    };
    let grid = input_grid_symbols(&x_used, plan, encoding)?;
    let x_period = input_period(&x_used, plan, encoding)?;
    let mut tx = Vec::with_capacity(plan.block_count());
    for b in 0..plan.block_count() {
        let block = padded_block(&w.row_block(b * plan.block_output, plan.block_output), plan)?;
        let v = match (&csi, opts.scheme) {
            (Some(c), Scheme::WPrecode) => crate::channel::precode_weights(&block, c, true)?.values,
            _ => block,
        };
        tx.push(transmit_symbols(&v, plan, opts.direction, b)?);
    }
    Ok(Prepared { tx, grid, x_period })
}

/// `y = W·x` through the simulated radio pipeline. `W` may have fewer rows than the plan; the
/// missing rows are zero and their outputs are dropped.
pub fn run_mvm<T: Real>(w: &CMatrix<T>, x: &[Complex<T>], plan: &MvmPlan, opts: &RunOptions<T>) -> Result<Vec<Complex<T>>> {
    let prep = prepare(w, x, plan, opts)?;
    let mut y = match opts.fidelity {
        Fidelity::Symbolic => {
            let clean = symbolic_outputs(&prep, plan, opts)?;
            add_output_noise(&clean, &opts.noise, derive_seed(opts.seed, 1))
        }
        Fidelity::Waveform => waveform_outputs(&prep, plan, opts)?,
    };
    y.truncate(w.rows());
    Ok(y)
}

/// Inner product `Σ a_n·conj(b_n)`, with `b` broadcast as the single weight row.
pub fn run_ip<T: Real>(a: &[Complex<T>], b: &[Complex<T>], plan: &MvmPlan, opts: &RunOptions<T>) -> Result<Complex<T>> {
    if a.len() != b.len() {
        return invalid("inner product of vectors with different lengths");
    }
    if plan.block_output != 1 || plan.output_size != 1 {
        return invalid("inner products need a plan with M = M' = 1");
    }
    let w = CMatrix::from_vec(1, b.len(), b.iter().map(|v| v.conj()).collect())?;
    Ok(run_mvm(&w, a, plan, opts)?[0])
}

fn symbolic_outputs<T: Real>(prep: &Prepared<T>, plan: &MvmPlan, opts: &RunOptions<T>) -> Result<Vec<Complex<T>>> {
    let sh = opts.channel.subcarrier_response(plan.tx_fft_size(), plan.subcarrier_spacing())?;
    let mut y = Vec::with_capacity(plan.output_size);
    for tx in &prep.tx {
        let rx: Vec<_> = tx.iter().zip(&sh).map(|(&a, &b)| a * b).collect();
        let e = effective_symbols(&rx, opts.direction);
        let bins = convolve_captured(&e, &prep.grid, plan);
        y.extend(plan.useful_rows().map(|m| bins[m]));
    }
    Ok(y)
}

/// Every captured row of one block, padding rows included, for a full `M_pad × N` weight
/// block `v` and an input sent with the basic encoding. Used to collect least-squares probes.
pub fn probe_outputs<T: Real>(v: &CMatrix<T>, x: &[Complex<T>], plan: &MvmPlan, opts: &RunOptions<T>) -> Result<Vec<Complex<T>>> {
    if v.rows() != plan.capture_len() {
        return invalid(format!("probe block has {} rows, plan captures {}", v.rows(), plan.capture_len()));
    }
    let tx = transmit_symbols(&padded_block(v, plan)?, plan, opts.direction, 0)?;
    let rx = crate::channel::apply_channel_symbols(&tx, &opts.channel, plan.subcarrier_spacing())?;
    let grid = input_grid_symbols(x, plan, InputEncoding::Basic)?;
    let clean = convolve_captured(&effective_symbols(&rx, opts.direction), &grid, plan);
    Ok(add_output_noise(&clean, &opts.noise, derive_seed(opts.seed, 1)))
}

/// Adds independent complex Gaussian noise to each output with variance `mean|y|²/SNR`.
pub fn add_output_noise<T: Real>(clean: &[Complex<T>], noise: &NoiseSpec, seed: u64) -> Vec<Complex<T>> {
    if noise.is_noiseless() || clean.is_empty() {
        return clean.to_vec();
    }
    let var = power(clean) / noise.snr_linear();
    let mut rng = crate::rng::rng_from(seed);
    clean.iter().map(|&v| v + complex_gaussian::<T, _>(&mut rng, var)).collect()
}

/// High-rate product of one block, one period long, in the frame where `y_m` sits at `-m·Δf`
/// (down) or `-(m+1)·Δf` (up) relative to the carrier difference.
struct BlockProduct<T> {
    samples: Vec<Complex<T>>,
    rate: f64,
    gain: f64,
}

fn block_product<T: Real>(
    tx: &[Complex<T>],
    x_period: &[Complex<T>],
    plan: &MvmPlan,
    opts: &RunOptions<T>,
    fe: &FrontendConfig,
) -> Result<BlockProduct<T>> {
    let sh = opts.channel.subcarrier_response(plan.tx_fft_size(), plan.subcarrier_spacing())?;
    let rx: Vec<_> = tx.iter().zip(&sh).map(|(&a, &b)| a * b).collect();
    let mut w = idft_shifted(&rx);
    let mut x = x_period.to_vec();
    let gw = dac_normalize(&mut w, DAC_MEAN_AMPLITUDE);
    let gx = dac_normalize(&mut x, DAC_MEAN_AMPLITUDE);
    match fe.mixer {
        MixerModel::IdealBaseband => {
            let k = fe.oversample.max(2);
            let wu = dac_upsample(&w, k, fe.dac);
            let xu = dac_upsample(&x, k, fe.dac);
            let samples = wu
                .iter()
                .zip(&xu)
                .map(|(&a, &b)| match opts.direction {
                    Direction::Down => b * a.conj(),
                    Direction::Up => b * a,
                })
                .collect();
            Ok(BlockProduct { samples, rate: plan.bandwidth * k as f64, gain: gw * gx })
        }
        MixerModel::DiodeSignPassband => {
            if opts.direction != Direction::Down {
                return Err(Error::InvalidConfig("the diode model is simulated for down-conversion only".into()));
            }
            let rw = iq_modulate(&IqWaveform::new(w, plan.bandwidth)?, fe.carrier_w, fe.sim_rate, fe.dac)?;
            let rx = iq_modulate(&IqWaveform::new(x, plan.bandwidth)?, fe.carrier_x, fe.sim_rate, fe.dac)?;
            let out = mix_diode(&rw, &rx)?;
            // sgn(cos) has fundamental 4/π; the real product keeps half after I/Q demodulation,
            // and the LO magnitude is replaced by its mean
            let df = (2.0 / std::f64::consts::PI) / DAC_MEAN_AMPLITUDE;
            Ok(BlockProduct {
                samples: downmix(&out, fe.carrier_x - fe.carrier_w),
                rate: fe.sim_rate,
                gain: gw * gx * df,
            })
        }
    }
}

fn waveform_outputs<T: Real>(prep: &Prepared<T>, plan: &MvmPlan, opts: &RunOptions<T>) -> Result<Vec<Complex<T>>> {
    let df = plan.subcarrier_spacing();
    let fe = opts.frontend.clone().unwrap_or_else(|| FrontendConfig::scaled(plan.bandwidth, df));
    fe.validate(df)?;
    let mp = plan.capture_len();
    let l = plan.tx_fft_size() as f64;
    let shift = match opts.direction {
        Direction::Down => (mp as f64 / 2.0 - 1.0) * df,
        Direction::Up => mp as f64 / 2.0 * df,
    };
    let lpf = LowpassSpec {
        cutoff: plan.capture_rate() / 2.0,
        transition_fraction: fe.transition_fraction,
        stopband_db: fe.stopband_db,
    };

    let mut stream_samples: Vec<Complex<T>> = Vec::new();
    let mut gains = Vec::with_capacity(prep.tx.len());
    let mut fir: Option<(f64, FirFilter)> = None;
    for tx in &prep.tx {
        let prod = block_product(tx, &prep.x_period, plan, opts, &fe)?;
        let f = match &fir {
            Some((rate, f)) if *rate == prod.rate => f.clone(),
            _ => {
                let f = FirFilter::design(&lpf, prod.rate)?;
                fir = Some((prod.rate, f.clone()));
                f
            }
        };
        let decim = (prod.rate / plan.capture_rate()).round() as i64;
        let period = f.filter_periodic(&prod.samples, shift, prod.rate);
        for i in -(plan.cp_len as i64)..mp as i64 {
            stream_samples.push(period.at(i * decim));
        }
        // bins are m_pad·L⁻²·(convolution), scaled by the DAC gains and the filter response
        let resp: Vec<f64> = (0..mp).map(|j| f.response((j as f64 - mp as f64 / 2.0) * df, prod.rate)).collect();
        gains.push((prod.gain * mp as f64 / (l * l), resp));
    }

    let block_len = mp + plan.cp_len;
    let decode_stream = |s: &[Complex<T>]| -> Result<Vec<Complex<T>>> {
        let mut out = Vec::with_capacity(plan.output_size);
        for (b, (g, resp)) in gains.iter().enumerate() {
            let cap = CaptureBuffer { block_index: b, samples: s[b * block_len..(b + 1) * block_len].to_vec() };
            let raw = decode_block(&cap, plan)?;
            for (i, v) in raw.into_iter().enumerate() {
                let j = mp - 1 - (plan.zero_pad + i);
                out.push(v * T::of(1.0 / (g * resp[j])));
            }
        }
        Ok(out)
    };

    // noise level follows the clean decoded power per useful output
    let clean = decode_stream(&stream_samples)?;
    let mut rx_stream = stream_samples;
    let mut preamble_low = Vec::new();
    if opts.sync.enabled {
        let pre = low_rate_preamble::<T>(plan, opts, &fe, power(&rx_stream))?;
        let mut s = vec![Complex::zero(); opts.sync.timing_offset];
        s.extend_from_slice(&pre);
        s.extend_from_slice(&rx_stream);
        s.extend(std::iter::repeat_n(Complex::zero(), plan.cp_len + 1));
        rx_stream = s;
        preamble_low = pre;
        if opts.sync.cfo != 0.0 {
            let rate = plan.capture_rate();
            for (n, v) in rx_stream.iter_mut().enumerate() {
                *v = *v * cis::<T>(std::f64::consts::TAU * opts.sync.cfo * n as f64 / rate);
            }
        }
    }
    if !opts.noise.is_noiseless() {
        let mean_gain2 = gains.iter().map(|(g, _)| g * g).sum::<f64>() / gains.len() as f64;
        let raw_power = power(&clean) * mean_gain2;
        let var = raw_power / opts.noise.snr_linear() / mp as f64;
        let mut rng = stream(opts.seed, 1);
        for v in rx_stream.iter_mut() {
            *v = *v + complex_gaussian::<T, _>(&mut rng, var);
        }
    }
    if !opts.sync.enabled {
        return decode_stream(&rx_stream);
    }
    let l_pre = opts.sync.preamble_len;
    let found = detect_preamble_and_cfo(&rx_stream, l_pre, plan.padded_input(), plan.bandwidth, opts.sync.threshold)
        .map_err(|e| Error::SyncFailure(e.to_string()))?;
    derotate(&mut rx_stream, found.cfo_estimate, plan.capture_rate());
    let start = refine_timing(&rx_stream, &preamble_low, found.start_index, (l_pre / 4).max(1));
    let data = start + 2 * l_pre;
    let need = data + plan.block_count() * block_len;
    if need > rx_stream.len() {
        return Err(Error::SyncFailure(format!("preamble found at {start}, leaving too few samples")));
    }
    decode_stream(&rx_stream[data..need])
}

/// Two identical low-rate halves: a random-phase client preamble mixed with an unmodulated LO and
/// captured like a data block, scaled to `target_power`.
fn low_rate_preamble<T: Real>(plan: &MvmPlan, opts: &RunOptions<T>, fe: &FrontendConfig, target_power: f64) -> Result<Vec<Complex<T>>> {
    let n_eff = plan.padded_input();
    let l_pre = opts.sync.preamble_len;
    let pre = generate_preamble::<T>(n_eff, l_pre, 1.0, derive_seed(opts.seed, 2))?;
    let k = fe.oversample.max(1);
    let up = dac_upsample(pre.half(), k, fe.dac);
    let rate = plan.bandwidth * k as f64;
    let lpf = LowpassSpec {
        cutoff: plan.capture_rate() / 2.0,
        transition_fraction: fe.transition_fraction,
        stopband_db: fe.stopband_db,
    };
    let f = FirFilter::design(&lpf, rate)?;
    let period = f.filter_periodic(&up, 0.0, rate);
    let decim = (n_eff * k) as i64;
    let half: Vec<Complex<T>> = (0..l_pre as i64).map(|i| period.at(i * decim)).collect();
    let p = power(&half);
    let g = if p > 0.0 { T::of((target_power / p).sqrt()) } else { T::one() };
    let half: Vec<_> = half.into_iter().map(|v| v * g).collect();
    let mut out = half.clone();
    out.extend_from_slice(&half);
    Ok(out)
}

/// Low-rate preamble as the receiver knows it (same seed and plan).
pub fn known_preamble<T: Real>(plan: &MvmPlan, opts: &RunOptions<T>) -> Result<Vec<Complex<T>>> {
    let fe = opts.frontend.clone().unwrap_or_else(|| FrontendConfig::scaled(plan.bandwidth, plan.subcarrier_spacing()));
    low_rate_preamble(plan, opts, &fe, 1.0)
}

/// Plan-level transform helper reused by precoding: `(1/(M_pad·N))·Σ_n w_n·e^{j2π(k-N/2)n/N}`.
pub(crate) fn fold_inverse_transform<T: Real>(row: &[Complex<T>], mp: usize, dft: &ShiftedDft<T>) -> Vec<Complex<T>> {
    let mut buf: Vec<_> = row.iter().map(|v| v.conj()).collect();
    dft.forward(&mut buf);
    let scale = T::one() / T::of((mp * row.len()) as f64);
    buf.into_iter().map(|v| v.conj() * scale).collect()
}
