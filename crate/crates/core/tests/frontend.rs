use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use proptest::prelude::*;
use rfmvm::frontend::{
    adc_capture, adc_capture_periodic, add_awgn, band_power, dac_normalize, dac_upsample, db_to_linear, iq_demodulate,
    iq_modulate, linear_to_db, lowpass, mix_diode, mix_ideal, papr, DacKernel, Direction, FirFilter, FrontendConfig,
    IqWaveform, LowpassSpec, MixerModel, NoiseSpec, PassbandWaveform,
};
use rfmvm::ofdm::{dft_shifted, idft_shifted};
use rfmvm::rng::{complex_gaussian_vec, rng_from, uniform_disc_polar_vec};
use rfmvm::{Error, Waveform};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn tone(f: f64, fs: f64, n: usize) -> Waveform {
    IqWaveform::new((0..n).map(|i| Complex64::from_polar(1.0, TAU * f * i as f64 / fs)).collect(), fs).unwrap()
}

fn mid_power(x: &[Complex64], skip: usize) -> f64 {
    let s = &x[skip..x.len() - skip];
    s.iter().map(|v| v.norm_sqr()).sum::<f64>() / s.len() as f64
}

#[test]
fn modulation_arms() {
    let fs = 1.0;
    let (f, sim) = (4.0, 16.0);
    let one = IqWaveform::new(vec![c(1.0, 0.0); 8], fs).unwrap();
    let r = iq_modulate(&one, f, sim, DacKernel::FourierIdeal).unwrap();
    for (n, v) in r.samples.iter().enumerate() {
        assert!((v - (TAU * f * n as f64 / sim).cos()).abs() < 1e-12);
    }
    let mj = IqWaveform::new(vec![c(0.0, -1.0); 8], fs).unwrap();
    let r = iq_modulate(&mj, f, sim, DacKernel::ZeroOrderHold).unwrap();
    for (n, v) in r.samples.iter().enumerate() {
        assert!((v - (TAU * f * n as f64 / sim).sin()).abs() < 1e-12);
    }
    assert!(matches!(iq_modulate(&one, 7.0, 16.0, DacKernel::FourierIdeal), Err(Error::InvalidConfig(_))));
}

fn loopback(carrier: f64) -> Vec<Complex64> {
    let mut rng = rng_from(1);
    // band-limited periodic baseband: 32 samples at 1 Hz, outer subcarriers empty
    let mut sym = complex_gaussian_vec::<f64, _>(&mut rng, 32, 1.0);
    for k in (0..4).chain(28..32) {
        sym[k] = c(0.0, 0.0);
    }
    let period = idft_shifted(&sym);
    let reps: Vec<_> = period.iter().copied().cycle().take(32 * 12).collect();
    let bb = IqWaveform::new(reps, 1.0).unwrap();
    let pb = iq_modulate(&bb, carrier, 32.0, DacKernel::FourierIdeal).unwrap();
    let spec = LowpassSpec { cutoff: 0.5, transition_fraction: 0.5, stopband_db: 130.0 };
    let out = iq_demodulate(&pb, carrier, &spec).unwrap();
    let up = dac_upsample(&period, 32, DacKernel::FourierIdeal);
    // compare one settled period in the middle
    let start = 32 * 32 * 6;
    (0..32 * 32).map(|i| out.samples[start + i] - up[i]).collect()
}

#[test]
fn iq_loopback_recovers_baseband() {
    let err = loopback(6.0).iter().map(|v| v.norm()).fold(0.0, f64::max);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn translation_invariance_of_the_loopback() {
    let a = loopback(6.0);
    let b = loopback(9.0);
    let d = a.iter().zip(&b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    assert!(d < 1e-6);
}

#[test]
fn demodulated_tone_at_carrier_is_constant() {
    let fs = 64.0;
    let r = PassbandWaveform { samples: (0..4096).map(|n| (TAU * 8.0 * n as f64 / fs).cos()).collect(), sample_rate: fs };
    let spec = LowpassSpec { cutoff: 1.0, transition_fraction: 0.5, stopband_db: 60.0 };
    let out = iq_demodulate(&r, 8.0, &spec).unwrap();
    for v in &out.samples[1000..3000] {
        assert!((v - c(1.0, 0.0)).norm() < 2e-3);
    }
    // tone two cutoffs away from the carrier
    let r = PassbandWaveform { samples: (0..4096).map(|n| (TAU * 10.0 * n as f64 / fs).cos()).collect(), sample_rate: fs };
    let out = iq_demodulate(&r, 8.0, &spec).unwrap();
    assert!(linear_to_db(mid_power(&out.samples, 600)) < -60.0);
}

#[test]
fn lowpass_meets_the_mask() {
    let (fs, fc) = (100.0, 10.0);
    let f = FirFilter::design(&LowpassSpec { cutoff: fc, transition_fraction: 0.1, stopband_db: 50.0 }, fs).unwrap();
    assert!(f.taps().len() % 2 == 1);
    assert!(20.0 * f.response(0.0, fs).log10().abs() < 0.01);
    for i in 0..=90 {
        let g = f.response(fc * i as f64 / 100.0, fs);
        assert!(20.0 * g.abs().log10() > -0.3, "passband at {i}%");
    }
    for i in 0..200 {
        let fr = fc * 1.1 + (fs / 2.0 - fc * 1.1) * i as f64 / 199.0;
        assert!(20.0 * f.response(fr, fs).abs().log10() <= -50.0, "stopband at {fr}");
    }
    // and on actual signals
    let n = 8000;
    let dc = lowpass(&IqWaveform::new(vec![c(1.0, 0.0); n], fs).unwrap(), fc, 0.1, 50.0).unwrap();
    assert!(linear_to_db(mid_power(&dc.samples, 1000)).abs() < 0.01 * 2.0);
    let half = lowpass(&tone(0.5 * fc, fs, n), fc, 0.1, 50.0).unwrap();
    assert!(linear_to_db(mid_power(&half.samples, 1000)) > -0.3);
    let out = lowpass(&tone(1.5 * fc, fs, n), fc, 0.1, 50.0).unwrap();
    assert!(linear_to_db(mid_power(&out.samples, 1000)) <= -50.0);
    assert!(FirFilter::design(&LowpassSpec { cutoff: 60.0, transition_fraction: 0.1, stopband_db: 50.0 }, fs).is_err());
}

#[test]
fn capture_keeps_band_limited_bins() {
    let mut rng = rng_from(2);
    let l = 256;
    let d = 4;
    // occupy only the central 48 of the 64 bins that survive decimation
    let mut sym = vec![c(0.0, 0.0); l];
    for k in l / 2 - 24..l / 2 + 24 {
        sym[k] = complex_gaussian_vec::<f64, _>(&mut rng, 1, 1.0)[0];
    }
    let w = IqWaveform::new(idft_shifted(&sym), 1.0).unwrap();
    let low = adc_capture_periodic(&w, 0.25, 0.1, 50.0).unwrap();
    assert_eq!(low.len(), l / d);
    let s_low = dft_shifted(&low);
    let m = l / d;
    let scale = sym.iter().map(|v| v.norm()).fold(0.0, f64::max);
    for j in 0..m {
        // full-rate bin, scaled by the decimation
        let full = sym[j + (l - m) / 2] / d as f64;
        assert!((s_low[j] - full).norm() <= 1e-3 * scale / d as f64, "bin {j}");
    }
    assert_eq!(adc_capture(&w, 1.0, 0.1, 50.0).unwrap(), w.samples);
    assert!(adc_capture(&w, 0.3, 0.1, 50.0).is_err());
}

#[test]
fn capture_suppresses_out_of_band_tone() {
    let fs = 64.0;
    let w = tone(20.0, fs, 64 * 64);
    let low = adc_capture(&w, 8.0, 0.1, 50.0).unwrap();
    assert!(linear_to_db(mid_power(&low, 100)) <= -50.0);
}

#[test]
fn ideal_mixer_conjugates_the_lo() {
    let lo = IqWaveform::new(vec![c(0.0, 1.0)], 1.0).unwrap();
    let rf = IqWaveform::new(vec![c(2.0, 0.0)], 1.0).unwrap();
    assert_eq!(mix_ideal(&lo, &rf, Direction::Down).unwrap().samples, vec![c(0.0, -2.0)]);
    assert_eq!(mix_ideal(&lo, &rf, Direction::Up).unwrap().samples, vec![c(0.0, 2.0)]);
    let other = IqWaveform::new(vec![c(0.0, 1.0)], 2.0).unwrap();
    assert!(mix_ideal(&other, &rf, Direction::Down).is_err());
}

#[test]
fn diode_mixer_follows_lo_sign() {
    let fs = 1000.0;
    let rf = PassbandWaveform { samples: (0..1000).map(|n| (n as f64 * 0.37).sin()).collect(), sample_rate: fs };
    let lo = PassbandWaveform { samples: vec![0.3; 1000], sample_rate: fs };
    assert_eq!(mix_diode(&lo, &rf).unwrap(), rf);
    // sgn(cos) = (4/π)(cos − cos3/3 + …): the difference tone carries (4/π)·½
    let (f1, f2, n) = (61.8, 91.8, 50_000);
    let lo = PassbandWaveform { samples: (0..n).map(|i| (TAU * f1 * i as f64 / fs).cos()).collect(), sample_rate: fs };
    let rf = PassbandWaveform { samples: (0..n).map(|i| (TAU * f2 * i as f64 / fs).cos()).collect(), sample_rate: fs };
    let out = mix_diode(&lo, &rf).unwrap();
    let amp = out.samples.iter().enumerate().map(|(i, v)| v * (TAU * 30.0 * i as f64 / fs).cos()).sum::<f64>() * 2.0 / n as f64;
    assert!((amp - 2.0 / PI).abs() < 0.01, "{amp}");
}

#[test]
fn papr_examples() {
    assert!(papr(&[c(0.0, 1.0), c(1.0, 0.0), c(-1.0, 0.0)]).unwrap().abs() < 1e-12);
    let p = papr(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
    assert!((p - 10.0 * 4f64.log10()).abs() < 1e-12 && (p - 6.02).abs() < 0.005);
    assert!(matches!(papr(&[c(0.0, 0.0); 3]), Err(Error::Undefined(_))));
    let mean: f64 = (0..20)
        .map(|s| {
            let sym = uniform_disc_polar_vec::<f64, _>(&mut rng_from(s), 1024).iter().map(|v| v / v.norm()).collect::<Vec<_>>();
            papr(&idft_shifted(&sym)).unwrap()
        })
        .sum::<f64>()
        / 20.0;
    assert!((8.0..=14.0).contains(&mean), "{mean}");
}

#[test]
fn awgn_is_calibrated_and_reproducible() {
    let sig = IqWaveform::new(vec![c(1.0, 0.0); 100_000], 1.0).unwrap();
    let spec = NoiseSpec::full_band(20.0);
    let noisy = add_awgn(&sig, &spec, 7).unwrap();
    let noise: Vec<_> = noisy.samples.iter().map(|v| v - c(1.0, 0.0)).collect();
    let p = noise.iter().map(|v| v.norm_sqr()).sum::<f64>() / noise.len() as f64;
    assert!((p - 0.01).abs() <= 0.0005, "{p}");
    assert_eq!(noisy, add_awgn(&sig, &spec, 7).unwrap());
    assert_ne!(noisy, add_awgn(&sig, &spec, 8).unwrap());
    assert_eq!(add_awgn(&sig, &NoiseSpec::noiseless(), 7).unwrap(), sig);
}

#[test]
fn awgn_in_a_measurement_band() {
    // signal confined to a quarter of the band; SNR measured inside it
    let mut rng = rng_from(3);
    let l = 1 << 14;
    let mut sym = vec![c(0.0, 0.0); l];
    for k in l / 2 - l / 8..l / 2 + l / 8 {
        sym[k] = complex_gaussian_vec::<f64, _>(&mut rng, 1, 1.0)[0];
    }
    let sig = IqWaveform::new(idft_shifted(&sym), 1.0).unwrap();
    let band = Some((-0.125, 0.125));
    let noisy = add_awgn(&sig, &NoiseSpec { snr_db: 10.0, band }, 1).unwrap();
    let noise = IqWaveform::new(noisy.samples.iter().zip(&sig.samples).map(|(a, b)| a - b).collect(), 1.0).unwrap();
    let snr = linear_to_db(band_power(&sig, band) / band_power(&noise, band));
    assert!((snr - 10.0).abs() < 0.1, "{snr}");
}

#[test]
fn dac_normalize_sets_mean_amplitude() {
    let mut rng = rng_from(4);
    let mut s = complex_gaussian_vec::<f64, _>(&mut rng, 4096, 3.0);
    dac_normalize(&mut s, 0.2);
    let mean = s.iter().map(|v| v.norm()).sum::<f64>() / s.len() as f64;
    assert!((mean - 0.2).abs() < 1e-3);
    let mut spike = vec![c(0.0, 0.0); 9];
    spike[0] = c(1.0, 0.0);
    dac_normalize(&mut spike, 0.2);
    assert!((spike[0].norm() - 1.0).abs() < 1e-15);
}

#[test]
fn carrier_plan_is_checked() {
    let df = 0.01;
    let fe = FrontendConfig::scaled(1.0, df);
    fe.validate(df).unwrap();
    let mut bad = fe.clone();
    bad.carrier_y += df;
    assert!(matches!(bad.validate(df), Err(Error::InvalidConfig(_))));
    let mut slow = fe;
    slow.mixer = MixerModel::DiodeSignPassband;
    slow.sim_rate = 20.0;
    assert!(slow.validate(df).is_err());
    assert!((db_to_linear(20.0) - 100.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn ideal_mixing_is_bilinear(re in -3.0f64..3.0, im in -3.0f64..3.0, seed in 0u64..1000) {
        let mut rng = rng_from(seed);
        let a = c(re, im);
        let s1 = IqWaveform::new(complex_gaussian_vec::<f64, _>(&mut rng, 16, 1.0), 1.0).unwrap();
        let s2 = IqWaveform::new(complex_gaussian_vec::<f64, _>(&mut rng, 16, 1.0), 1.0).unwrap();
        let scaled = IqWaveform::new(s1.samples.iter().map(|v| v * a).collect(), 1.0).unwrap();
        for dir in [Direction::Down, Direction::Up] {
            let lhs = mix_ideal(&s2, &scaled, dir).unwrap();
            let rhs = mix_ideal(&s2, &s1, dir).unwrap();
            for (p, q) in lhs.samples.iter().zip(&rhs.samples) {
                prop_assert!((p - q * a).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn diode_ignores_positive_lo_scale(scale in 1e-3f64..1e3, seed in 0u64..1000) {
        let mut rng = rng_from(seed);
        let v = complex_gaussian_vec::<f64, _>(&mut rng, 64, 1.0);
        let lo = PassbandWaveform { samples: v.iter().map(|z| z.re).collect(), sample_rate: 1.0 };
        let rf = PassbandWaveform { samples: v.iter().map(|z| z.im).collect(), sample_rate: 1.0 };
        let big = PassbandWaveform { samples: lo.samples.iter().map(|x| x * scale).collect(), sample_rate: 1.0 };
        prop_assert_eq!(mix_diode(&big, &rf).unwrap(), mix_diode(&lo, &rf).unwrap());
    }
}
