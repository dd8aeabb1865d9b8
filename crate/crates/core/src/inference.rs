//! Fully connected complex-valued networks, evaluated digitally or through the radio MVM.

use num_complex::Complex;

use crate::channel::sound_channel;
use crate::containers::{decode_vectors, decode_weights, encode_vectors, encode_weights, VectorRecord, VectorSet};
use crate::error::{invalid, Result};
use crate::matrix::CMatrix;
use crate::mvm::{run_mvm, CsiSource, MvmPlan, RunOptions};
use crate::ofdm::zc_phase_sequence;
use crate::rng::{complex_gaussian_vec, derive_seed, rng_from, uniform_disc_polar_vec};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexFcModel<T> {
    layers: Vec<CMatrix<T>>,
}

impl<T: Real> ComplexFcModel<T> {
    /// Layer `l` maps `N_l` inputs to `M_l` outputs, so `M_l` must equal `N_{l+1}`.
    pub fn new(layers: Vec<CMatrix<T>>) -> Result<Self> {
        if layers.is_empty() {
            return invalid("a model needs at least one layer");
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].rows() != pair[1].cols() {
                return invalid(format!(
                    "layer {i} has {} outputs but layer {} takes {} inputs",
                    pair[0].rows(),
                    i + 1,
                    pair[1].cols()
                ));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[CMatrix<T>] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].rows()
    }

    /// `(N_l, M_l)` per layer.
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.cols(), l.rows())).collect()
    }
}

/// Hidden layers keep the magnitude and take the Zadoff-Chu phase of their position; the last
/// layer returns magnitudes as real scores.
pub fn activation_zc<T: Real>(y: &[Complex<T>], last: bool) -> Vec<Complex<T>> {
    if last {
        return y.iter().map(|v| Complex::new(v.norm(), T::zero())).collect();
    }
    let zc = zc_phase_sequence::<T>(y.len()).phasors();
    y.iter().zip(zc).map(|(v, p)| p * v.norm()).collect()
}

fn forward_with<T: Real>(
    model: &ComplexFcModel<T>,
    x: &[Complex<T>],
    mut mvm: impl FnMut(usize, &CMatrix<T>, &[Complex<T>]) -> Result<Vec<Complex<T>>>,
) -> Result<Vec<T>> {
    if x.len() != model.input_dim() {
        return invalid(format!("input has {} entries, model expects {}", x.len(), model.input_dim()));
    }
    let last = model.layers.len() - 1;
    let mut h = x.to_vec();
    for (i, w) in model.layers.iter().enumerate() {
        let y = mvm(i, w, &h)?;
        h = activation_zc(&y, i == last);
    }
    Ok(h.into_iter().map(|v| v.re).collect())
}

pub fn forward_digital<T: Real>(model: &ComplexFcModel<T>, x: &[Complex<T>]) -> Result<Vec<T>> {
    forward_with(model, x, |_, w, h| w.matvec(h))
}

/// Settings for running every layer through [`run_mvm`].
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogConfig<T> {
    pub block_output: usize,
    pub zero_pad: usize,
    pub cp_len: usize,
    pub bandwidth: f64,
    /// Template for every layer; `seed` is the master seed.
    pub options: RunOptions<T>,
    /// Sound the channel per layer at this SNR instead of using `options.csi`.
    pub probe_snr_db: Option<f64>,
}

pub fn forward_analog<T: Real>(model: &ComplexFcModel<T>, x: &[Complex<T>], cfg: &AnalogConfig<T>) -> Result<Vec<T>> {
    forward_with(model, x, |i, w, h| {
        let plan = MvmPlan::covering(w.cols(), w.rows(), cfg.block_output, cfg.zero_pad, cfg.cp_len, cfg.bandwidth)?;
        let mut opts = cfg.options.clone();
        opts.seed = derive_seed(cfg.options.seed, i as u64);
        if let Some(snr) = cfg.probe_snr_db {
            let est = sound_channel(&opts.channel, &plan, opts.direction, snr, derive_seed(opts.seed, 7))?;
            opts.csi = CsiSource::Estimated(est);
        }
        run_mvm(w, h, &plan, &opts)
    })
}

/// Index of the largest score; ties go to the lowest index, NaN never wins.
pub fn classify<T: Real>(scores: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &s) in scores.iter().enumerate() {
        if s.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((i, s)),
        }
    }
    best.map(|(i, _)| i)
}

/// Random `dims[0]–dims[1]–…` model and `count` unit-disc inputs, both rounded to 32-bit floats.
///
/// Labels are the digital decisions except for the last `mislabelled` records, which are shifted
/// by one class.
pub fn synthetic_fixture(dims: &[usize], count: usize, mislabelled: usize, seed: u64) -> Result<(ComplexFcModel<f64>, VectorSet<f64>)> {
    if dims.len() < 2 || mislabelled > count {
        return invalid("a fixture needs two or more dimensions and at most `count` mislabelled records");
    }
    let mut rng = rng_from(seed);
    let layers: Vec<CMatrix<f64>> = dims
        .windows(2)
        .map(|d| CMatrix::from_vec(d[1], d[0], complex_gaussian_vec(&mut rng, d[0] * d[1], 1.0 / d[0] as f64)))
        .collect::<Result<_>>()?;
    let model = ComplexFcModel::new(decode_weights(&encode_weights(&layers)?)?)?;
    let raw: VectorSet<f64> = VectorSet {
        dim: dims[0],
        records: (0..count).map(|_| VectorRecord { label: 0, values: uniform_disc_polar_vec(&mut rng, dims[0]) }).collect(),
    };
    let mut set: VectorSet<f64> = decode_vectors(&encode_vectors(&raw)?)?;
    let classes = model.output_dim();
    for (i, rec) in set.records.iter_mut().enumerate() {
        let guess = classify(&forward_digital(&model, &rec.values)?).unwrap_or(0);
        let shift = usize::from(i >= count - mislabelled);
        rec.label = ((guess + shift) % classes) as u8;
    }
    Ok((model, set))
}
