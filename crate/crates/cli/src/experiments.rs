//! One runner per subcommand. Trials run on a rayon pool; results are gathered in trial order
//! and reduced sequentially, so reports do not depend on the thread count.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

use rfmvm::channel::{sound_channel, ChannelResponse};
use rfmvm::containers::{read_vectors, read_weights};
use rfmvm::energy::{energy_breakdown, Decomposition, HardwareProfile};
use rfmvm::frontend::{db_to_linear, Direction, FrontendConfig, NoiseSpec};
use rfmvm::inference::{classify, forward_analog, forward_digital, AnalogConfig};
use rfmvm::matrix::CMatrix;
use rfmvm::mnist::load_mnist;
use rfmvm::mvm::{plan_mvm, run_ip, run_mvm, CsiSource, Fidelity, MvmPlan, RunOptions};
use rfmvm::ofdm::{bits_from_rmse, rmse_and_bits};
use rfmvm::rng::{complex_gaussian_vec, derive_seed, stream, uniform_disc_polar_vec};
use rfmvm::sync::{derotate, detect_preamble_and_cfo, generate_preamble, refine_timing, DEFAULT_THRESHOLD};
use rfmvm::{Channel, Dataset, Error, Model};

use crate::config::{ChannelSpec, Command, ExperimentConfig, ProfileKind};
use crate::error::{CliError, CliResult};

const CHANNEL_STREAM: u64 = 101;
const PROBE_STREAM: u64 = 102;
const NOISE_STREAM: u64 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub summary: Map<String, Value>,
}

pub const IP_HEADER: [&str; 5] = ["scheme", "n", "snr_db", "rmse", "bits"];
pub const MVM_HEADER: [&str; 11] = ["scheme", "fidelity", "mixer", "channel", "n", "m", "m_block", "snr_db", "trials", "rmse", "bits"];
pub const CLASSIFY_HEADER: [&str; 8] = ["scheme", "fidelity", "channel", "snr_db", "samples", "accuracy", "digital_accuracy", "agreement"];
pub const ENERGY_HEADER: [&str; 12] =
    ["scheme", "n", "m", "m_block", "alpha", "beta", "snr_db", "e1", "e2", "e3", "e_mvm", "tops_per_watt"];
pub const SYNC_HEADER: [&str; 8] =
    ["snr_db", "trials", "detected", "detection_rate", "timing_within_1", "max_timing_error", "cfo_rms_over_df", "cfo_max_over_df"];

pub fn run(cfg: &ExperimentConfig) -> CliResult<Report> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::Config(format!("threads: {e}")))?;
    pool.install(|| match cfg.command {
        Command::IpBench => ip_bench(cfg),
        Command::MvmBench => mvm_bench(cfg),
        Command::Classify => classify_run(cfg),
        Command::Energy => energy_sweep(cfg),
        Command::SyncBench => sync_bench(cfg),
    })
}

/// Shortest round-trip text; scientific outside `[1e-4, 1e6)`.
pub fn fmt(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e6).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn channel_label(cfg: &ExperimentConfig) -> String {
    match cfg.channel {
        ChannelSpec::Flat => "flat".into(),
        ChannelSpec::Multipath { taps, .. } => format!("multipath-{taps}"),
    }
}

fn make_channel(cfg: &ExperimentConfig, trial_seed: u64) -> Channel {
    match cfg.channel {
        ChannelSpec::Flat => ChannelResponse::flat(Complex64::new(1.0, 0.0)),
        ChannelSpec::Multipath { taps, lo, hi } => {
            ChannelResponse::random_multipath(taps, lo, hi, cfg.bandwidth, derive_seed(trial_seed, CHANNEL_STREAM))
        }
    }
}

/// Options for one trial. Channel, CSI and the noise draw depend only on the trial, so every SNR
/// point sees the same realizations scaled to its level.
pub fn trial_options(cfg: &ExperimentConfig, plan: &MvmPlan, trial_seed: u64, snr_db: f64) -> CliResult<RunOptions<f64>> {
    let mut o = RunOptions::ideal(cfg.scheme);
    o.fidelity = cfg.fidelity;
    o.noise = NoiseSpec::full_band(snr_db);
    o.seed = derive_seed(trial_seed, NOISE_STREAM);
    if cfg.fidelity == Fidelity::Waveform {
        let mut fe = FrontendConfig::scaled(cfg.bandwidth, plan.subcarrier_spacing());
        fe.mixer = cfg.mixer;
        fe.stopband_db = cfg.stopband_db;
        o.frontend = Some(fe);
    }
    o.channel = make_channel(cfg, trial_seed);
    if let Some(probe) = cfg.probe_snr_db {
        let est = sound_channel(&o.channel, plan, Direction::Down, probe, derive_seed(trial_seed, PROBE_STREAM))?;
        o.csi = CsiSource::Estimated(est);
    }
    Ok(o)
}

/// Least-squares slope of SNR (dB) against bits over the finite points.
pub fn fit_db_per_bit(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().copied().filter(|(s, b)| s.is_finite() && b.is_finite()).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mb, ms) = (pts.iter().map(|p| p.1).sum::<f64>() / n, pts.iter().map(|p| p.0).sum::<f64>() / n);
    let cov: f64 = pts.iter().map(|(s, b)| (b - mb) * (s - ms)).sum();
    let var: f64 = pts.iter().map(|(_, b)| (b - mb).powi(2)).sum();
    (var > 0.0).then(|| cov / var)
}

fn sum_in_order(v: Vec<f64>) -> f64 {
    v.into_iter().fold(0.0, |a, b| a + b)
}

fn ip_bench(cfg: &ExperimentConfig) -> CliResult<Report> {
    let plan = plan_mvm(cfg.n, 1, 1, cfg.zero_pad, cfg.cp_len, cfg.bandwidth)?;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &snr in &cfg.snr_db {
        let errs = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let trial_seed = derive_seed(cfg.seed, t as u64);
                let mut rng = stream(trial_seed, 0);
                let a = uniform_disc_polar_vec::<f64, _>(&mut rng, cfg.n);
                let b = uniform_disc_polar_vec::<f64, _>(&mut rng, cfg.n);
                let truth: Complex64 = a.iter().zip(&b).map(|(x, y)| x * y.conj()).sum();
                let c = run_ip(&a, &b, &plan, &trial_options(cfg, &plan, trial_seed, snr)?)?;
                Ok((c - truth).norm_sqr())
            })
            .collect::<CliResult<Vec<f64>>>()?;
        let rmse = (sum_in_order(errs) / cfg.trials as f64).sqrt() / (cfg.n as f64).sqrt();
        let bits = bits_from_rmse(rmse);
        points.push((snr, bits));
        rows.push(vec![cfg.scheme.name().into(), cfg.n.to_string(), fmt(snr), fmt(rmse), fmt(bits)]);
    }
    let mut summary = Map::new();
    summary.insert("slope_db_per_bit".into(), fit_db_per_bit(&points).map_or(Value::Null, |s| json!(s)));
    Ok(Report { header: IP_HEADER.to_vec(), rows, summary })
}

fn mvm_bench(cfg: &ExperimentConfig) -> CliResult<Report> {
    let plan = MvmPlan::covering(cfg.n, cfg.m, cfg.m_block, cfg.zero_pad, cfg.cp_len, cfg.bandwidth)?;
    let norm = 1.0 / (cfg.n as f64).sqrt();
    let mixer = if cfg.mixer == rfmvm::frontend::MixerModel::IdealBaseband { "ideal" } else { "diode" };
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &snr in &cfg.snr_db {
        let errs = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let trial_seed = derive_seed(cfg.seed, t as u64);
                let mut rng = stream(trial_seed, 0);
                let w = CMatrix::from_vec(cfg.m, cfg.n, uniform_disc_polar_vec(&mut rng, cfg.m * cfg.n))?;
                let x = uniform_disc_polar_vec::<f64, _>(&mut rng, cfg.n);
                let truth = w.matvec(&x)?;
                let y = run_mvm(&w, &x, &plan, &trial_options(cfg, &plan, trial_seed, snr)?)?;
                Ok(rmse_and_bits(&y, &truth, 1.0)?.0.powi(2))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        let rmse = (sum_in_order(errs) / cfg.trials as f64).sqrt() * norm;
        let bits = bits_from_rmse(rmse);
        points.push((snr, bits));
        rows.push(vec![
            cfg.scheme.name().into(),
            cfg.fidelity.name().into(),
            mixer.into(),
            channel_label(cfg),
            cfg.n.to_string(),
            cfg.m.to_string(),
            cfg.m_block.to_string(),
            fmt(snr),
            cfg.trials.to_string(),
            fmt(rmse),
            fmt(bits),
        ]);
    }
    let mut summary = Map::new();
    summary.insert("slope_db_per_bit".into(), fit_db_per_bit(&points).map_or(Value::Null, |s| json!(s)));
    Ok(Report { header: MVM_HEADER.to_vec(), rows, summary })
}

fn load_dataset(cfg: &ExperimentConfig) -> CliResult<(Model, Dataset)> {
    let model_path = cfg.model.as_ref().ok_or_else(|| CliError::Config("model: required for classify".into()))?;
    let vec_path = cfg.vectors.as_ref().ok_or_else(|| CliError::Config("vectors: required for classify".into()))?;
    let model = Model::new(read_weights(model_path)?)?;
    let data = match vec_path.extension().and_then(|e| e.to_str()) {
        Some("vec") => read_vectors(vec_path)?,
        // IDX images; labels sit beside them with the standard name
        _ => {
            let name = vec_path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            let labels = vec_path.with_file_name(name.replace("images-idx3", "labels-idx1"));
            load_mnist(vec_path, &labels)?
        }
    };
    if data.dim != model.input_dim() {
        return Err(CliError::Config(format!("vectors have dimension {}, model expects {}", data.dim, model.input_dim())));
    }
    Ok((model, data))
}

fn classify_run(cfg: &ExperimentConfig) -> CliResult<Report> {
    let (model, data) = load_dataset(cfg)?;
    let digital = data
        .records
        .par_iter()
        .map(|r| Ok(classify(&forward_digital(&model, &r.values)?)))
        .collect::<CliResult<Vec<Option<usize>>>>()?;
    let total = data.records.len().max(1) as f64;
    let digital_correct = data.records.iter().zip(&digital).filter(|(r, d)| **d == Some(r.label as usize)).count();
    let mut rows = Vec::new();
    for &snr in &cfg.snr_db {
        let analog = data
            .records
            .par_iter()
            .enumerate()
            .map(|(i, r)| {
                let trial_seed = derive_seed(cfg.seed, i as u64);
                // plan only fixes the sounding grid; every layer is replanned
                let first = model.layers()[0].rows();
                let plan = MvmPlan::covering(model.input_dim(), first, cfg.m_block, cfg.zero_pad, cfg.cp_len, cfg.bandwidth)?;
                let mut opts = trial_options(cfg, &plan, trial_seed, snr)?;
                opts.csi = CsiSource::Perfect;
                let acfg = AnalogConfig {
                    block_output: cfg.m_block,
                    zero_pad: cfg.zero_pad,
                    cp_len: cfg.cp_len,
                    bandwidth: cfg.bandwidth,
                    options: opts,
                    probe_snr_db: cfg.probe_snr_db,
                };
                Ok(classify(&forward_analog(&model, &r.values, &acfg)?))
            })
            .collect::<CliResult<Vec<Option<usize>>>>()?;
        let correct = data.records.iter().zip(&analog).filter(|(r, a)| **a == Some(r.label as usize)).count();
        let agree = analog.iter().zip(&digital).filter(|(a, d)| a == d).count();
        rows.push(vec![
            cfg.scheme.name().into(),
            cfg.fidelity.name().into(),
            channel_label(cfg),
            fmt(snr),
            data.records.len().to_string(),
            fmt(correct as f64 / total),
            fmt(digital_correct as f64 / total),
            fmt(agree as f64 / total),
        ]);
    }
    let mut summary = Map::new();
    summary.insert("digital_accuracy".into(), json!(digital_correct as f64 / total));
    summary.insert("layers".into(), json!(model.shapes()));
    Ok(Report { header: CLASSIFY_HEADER.to_vec(), rows, summary })
}

/// `ΔM` and `ΔL` of the config as an energy decomposition; `M' = 1` uses the three-point decode.
pub fn decomposition(cfg: &ExperimentConfig) -> Decomposition {
    let alpha = 2.0 * cfg.zero_pad as f64 / cfg.m_block as f64;
    let beta = cfg.cp_len as f64 / cfg.capture_len() as f64;
    if cfg.m_block == 1 {
        Decomposition::Ip { alpha, beta }
    } else {
        Decomposition::Blocks { m_block: cfg.m_block, alpha, beta }
    }
}

fn energy_sweep(cfg: &ExperimentConfig) -> CliResult<Report> {
    let d = decomposition(cfg);
    let (alpha, beta) = d.overheads();
    let mut rows = Vec::new();
    for &snr in &cfg.snr_db {
        if !snr.is_finite() {
            return Err(CliError::Config("energy: snr_db must be finite".into()));
        }
        let profile = match cfg.profile {
            ProfileKind::Measured => HardwareProfile::measured(db_to_linear(snr)),
            ProfileKind::Ideal => HardwareProfile::ideal(db_to_linear(snr)),
        };
        for &n in &cfg.sizes {
            let b = energy_breakdown(cfg.scheme, d, n, cfg.m, &profile);
            rows.push(vec![
                cfg.scheme.name().into(),
                n.to_string(),
                cfg.m.to_string(),
                cfg.m_block.to_string(),
                fmt(alpha),
                fmt(beta),
                fmt(snr),
                fmt(b.e1),
                fmt(b.e2),
                fmt(b.e3),
                fmt(b.total),
                fmt(b.tops_per_watt()),
            ]);
        }
    }
    Ok(Report { header: ENERGY_HEADER.to_vec(), rows, summary: Map::new() })
}

/// One sync trial: `(detected, timing error, CFO error in subcarrier spacings)`.
fn sync_trial(cfg: &ExperimentConfig, trial_seed: u64, snr_db: f64) -> CliResult<(bool, i64, f64)> {
    let n_eff = cfg.n + cfg.n % 2;
    let low_rate = cfg.bandwidth / n_eff as f64;
    let df = low_rate / cfg.capture_len() as f64;
    let l_pre = cfg.preamble_len;
    let mut rng = stream(trial_seed, 0);
    let offset = rng.random_range(0..=cfg.max_offset);
    let cfo = (2.0 * rng.random::<f64>() - 1.0) * cfg.cfo_max * df;
    let pre = generate_preamble::<f64>(1, l_pre, 1.0, derive_seed(trial_seed, 5))?.samples;
    let mut rx = vec![Complex64::new(0.0, 0.0); offset];
    rx.extend_from_slice(&pre);
    rx.extend(complex_gaussian_vec::<f64, _>(&mut rng, 4 * l_pre, 1.0));
    for (k, v) in rx.iter_mut().enumerate() {
        *v *= Complex64::from_polar(1.0, std::f64::consts::TAU * cfo * k as f64 / low_rate);
    }
    if snr_db.is_finite() {
        let mut noise_rng = stream(trial_seed, NOISE_STREAM);
        let noise = complex_gaussian_vec::<f64, _>(&mut noise_rng, rx.len(), 1.0 / db_to_linear(snr_db));
        rx.iter_mut().zip(noise).for_each(|(v, n)| *v += n);
    }
    let found = match detect_preamble_and_cfo(&rx, l_pre, n_eff, cfg.bandwidth, DEFAULT_THRESHOLD) {
        Ok(f) => f,
        Err(Error::NotFound) => return Ok((false, 0, 0.0)),
        Err(e) => return Err(e.into()),
    };
    derotate(&mut rx, found.cfo_estimate, low_rate);
    let start = refine_timing(&rx, &pre[..l_pre], found.start_index, (l_pre / 4).max(1));
    Ok((true, start as i64 - offset as i64, (found.cfo_estimate - cfo) / df))
}

fn sync_bench(cfg: &ExperimentConfig) -> CliResult<Report> {
    let mut rows = Vec::new();
    let mut worst_rate: f64 = 1.0;
    for &snr in &cfg.snr_db {
        let res = (0..cfg.trials)
            .into_par_iter()
            .map(|t| sync_trial(cfg, derive_seed(cfg.seed, t as u64), snr))
            .collect::<CliResult<Vec<_>>>()?;
        let hits: Vec<&(bool, i64, f64)> = res.iter().filter(|r| r.0).collect();
        let detected = hits.len();
        let within = hits.iter().filter(|r| r.1.abs() <= 1).count();
        let max_t = hits.iter().map(|r| r.1.abs()).max().unwrap_or(0);
        let cfo_rms = if detected > 0 { (sum_in_order(hits.iter().map(|r| r.2 * r.2).collect()) / detected as f64).sqrt() } else { f64::NAN };
        let cfo_max = hits.iter().map(|r| r.2.abs()).fold(0.0, f64::max);
        let rate = detected as f64 / cfg.trials as f64;
        worst_rate = worst_rate.min(rate);
        rows.push(vec![
            fmt(snr),
            cfg.trials.to_string(),
            detected.to_string(),
            fmt(rate),
            within.to_string(),
            max_t.to_string(),
            fmt(cfo_rms),
            fmt(cfo_max),
        ]);
    }
    let mut summary = Map::new();
    summary.insert("min_detection_rate".into(), json!(worst_rate));
    Ok(Report { header: SYNC_HEADER.to_vec(), rows, summary })
}
