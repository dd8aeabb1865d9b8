use std::f64::consts::TAU;

use num_complex::{Complex32, Complex64};
use proptest::prelude::*;
use rfmvm::frontend::{Direction, FrontendConfig, MixerModel, NoiseSpec};
use rfmvm::matrix::CMatrix;
use rfmvm::mvm::{
    correct_timing_phase, decode_block, encode_input, encode_weights_block, hybrid_product_spectrum, input_period,
    plan_mvm, run_ip, run_mvm, CaptureBuffer, Fidelity, InputEncoding, MvmPlan, RunOptions, Scheme, SyncOptions,
};
use rfmvm::ofdm::{idft_shifted, linear_convolution, rmse_and_bits};
use rfmvm::rng::{complex_gaussian_vec, rng_from, uniform_disc_polar_vec};
use rfmvm::{Error, Matrix};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn direct(w: &Matrix, x: &[Complex64]) -> Vec<Complex64> {
    (0..w.rows()).map(|m| (0..w.cols()).map(|n| w[(m, n)] * x[n]).sum()).collect()
}

fn max_rel(a: &[Complex64], b: &[Complex64]) -> f64 {
    let scale = b.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max) / scale
}

fn random_case(seed: u64, n: usize, m: usize) -> (Matrix, Vec<Complex64>) {
    let mut rng = rng_from(seed);
    let w = CMatrix::from_vec(m, n, complex_gaussian_vec(&mut rng, m * n, 1.0)).unwrap();
    (w, complex_gaussian_vec(&mut rng, n, 1.0))
}

fn waveform_opts(scheme: Scheme, plan: &MvmPlan) -> RunOptions<f64> {
    let mut o = RunOptions::ideal(scheme);
    o.fidelity = Fidelity::Waveform;
    let mut fe = FrontendConfig::scaled(plan.bandwidth, plan.subcarrier_spacing());
    fe.stopband_db = 130.0;
    o.frontend = Some(fe);
    o
}

#[test]
fn plan_examples() {
    let p = plan_mvm(784, 300, 6, 1, 2, 25e6).unwrap();
    assert!((p.alpha() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!((p.block_count(), p.capture_len()), (50, 8));
    assert!((p.beta() - 0.25).abs() < 1e-15);
    let t = (1.0 + p.alpha()) * (1.0 + p.beta()) * 784.0 * 300.0 / 25e6;
    assert!((p.waveform_time() - t).abs() < 1e-12 * t);
    assert!((p.capture_rate() - 25e6 / 784.0).abs() < 1e-6);

    let ip = plan_mvm(10, 1, 1, 1, 1, 1.0).unwrap();
    assert_eq!((ip.alpha(), ip.capture_len()), (2.0, 3));
    assert!((ip.beta() - 1.0 / 3.0).abs() < 1e-15);

    let bare = plan_mvm(2, 2, 2, 0, 0, 1.0).unwrap();
    assert_eq!((bare.alpha(), bare.beta(), bare.tx_fft_size()), (0.0, 0.0, 4));

    assert!(matches!(plan_mvm(8, 10, 6, 1, 1, 1.0), Err(Error::InvalidArgument(_))));
    assert_eq!(MvmPlan::covering(8, 10, 6, 1, 1, 1.0).unwrap().output_size, 12);
    assert!(plan_mvm(8, 6, 6, 1, 9, 1.0).is_err());
}

#[test]
fn weight_mapping_two_by_two() {
    let plan = plan_mvm(2, 2, 2, 0, 0, 1.0).unwrap();
    let w = CMatrix::from_vec(2, 2, vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)]).unwrap();
    let s = encode_weights_block(&w, &plan, Direction::Up, 0).unwrap();
    // S[3]=w00, S[2]=w10, S[1]=w01, S[0]=w11
    assert_eq!(s.symbols, vec![c(4.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(1.0, 0.0)]);
    assert!(!s.flipped);
    let d = encode_weights_block(&w, &plan, Direction::Down, 0).unwrap();
    assert!(d.flipped);
    assert_eq!(d.symbols, vec![c(1.0, 0.0), c(3.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)]);
    let z = encode_weights_block(&CMatrix::zeros(2, 2), &plan, Direction::Up, 0).unwrap();
    assert!(z.symbols.iter().all(|v| *v == c(0.0, 0.0)));
    assert!(encode_weights_block(&CMatrix::<f64>::zeros(3, 2), &plan, Direction::Up, 0).is_err());
}

#[test]
fn golden_mapping_n4_m2() {
    let text = include_str!("fixtures/mapping_n4_m2.txt");
    let mut seen = 0;
    for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
        let v: Vec<usize> = line.split_whitespace().map(|t| t.parse().unwrap()).collect();
        let (dm, row, col, k) = (v[0], v[1], v[2], v[3]);
        let plan = plan_mvm(4, 2, 2, dm, 0, 1.0).unwrap();
        let mut w = CMatrix::<f64>::zeros(2, 4);
        w[(row, col)] = c(1.0, 0.0);
        let up = encode_weights_block(&w, &plan, Direction::Up, 0).unwrap().symbols;
        let hot: Vec<usize> = (0..up.len()).filter(|&i| up[i] != c(0.0, 0.0)).collect();
        assert_eq!(hot, vec![k], "{line}");
        assert_eq!(plan.weight_subcarrier(row + dm, col), k);
        let down = encode_weights_block(&w, &plan, Direction::Down, 0).unwrap().symbols;
        assert_eq!(down[plan.tx_fft_size() - 1 - k], c(1.0, 0.0));
        seen += 1;
    }
    assert_eq!(seen, 16);
}

#[test]
fn input_encodings() {
    let plan = plan_mvm(6, 6, 6, 1, 2, 1.0).unwrap();
    let mut rng = rng_from(1);
    let x = complex_gaussian_vec::<f64, _>(&mut rng, 6, 1.0);
    let basic = input_period(&x, &plan, InputEncoding::Basic).unwrap();
    assert_eq!(basic.len(), plan.tx_fft_size());
    for i in 6..basic.len() {
        assert_eq!(basic[i], basic[i - 6]);
    }
    let vanilla = input_period(&x, &plan, InputEncoding::Vanilla).unwrap();
    assert!(max_rel(&vanilla, &basic) < 1e-12);
    let wave = encode_input(&x, &plan, InputEncoding::Basic).unwrap();
    assert_eq!(wave.samples.len(), plan.tx_fft_size() + 6 * 2);
    assert_eq!(&wave.samples[..12], &basic[basic.len() - 12..]);

    let two = plan_mvm(2, 2, 2, 0, 0, 1.0).unwrap();
    let t = input_period(&[c(1.0, 0.0), c(0.0, 2.0)], &two, InputEncoding::TimeEncoded).unwrap();
    assert_eq!(t, vec![c(1.0, 0.0), c(0.0, 2.0), c(1.0, 0.0), c(0.0, 2.0)]);
}

#[test]
fn three_point_decode() {
    let plan = plan_mvm(4, 1, 1, 1, 1, 1.0).unwrap();
    let val = c(0.7, -1.3);
    let window = idft_shifted(&[c(0.0, 0.0), val, c(0.0, 0.0)]);
    let mut samples = vec![window[2]];
    samples.extend_from_slice(&window);
    let y = decode_block(&CaptureBuffer { block_index: 0, samples }, &plan).unwrap();
    assert!((y[0] - val).norm() < 1e-14);
    assert!(decode_block(&CaptureBuffer { block_index: 0, samples: window }, &plan).is_err());
}

#[test]
fn early_window_is_a_linear_phase() {
    let plan = plan_mvm(8, 6, 6, 1, 2, 1.0).unwrap();
    let mp = plan.capture_len();
    let mut rng = rng_from(5);
    let bins = complex_gaussian_vec::<f64, _>(&mut rng, mp, 1.0);
    let window = idft_shifted(&bins);
    // four prefix samples on air, the plan's two-sample prefix read at index 2
    let mut stream: Vec<_> = window[mp - 4..].to_vec();
    stream.extend_from_slice(&window);
    let reference = decode_block(&CaptureBuffer { block_index: 0, samples: stream[2..mp + 4].to_vec() }, &plan).unwrap();
    assert!(max_rel(&reference, &bins[1..7].iter().rev().copied().collect::<Vec<_>>()) < 1e-12);
    for early in 1..=2usize {
        let start = 2 - early;
        let samples = stream[start..start + mp + 2].to_vec();
        let mut y = decode_block(&CaptureBuffer { block_index: 0, samples }, &plan).unwrap();
        assert!(max_rel(&y, &reference) > 1e-3);
        correct_timing_phase(&mut y, early as isize, &plan);
        assert!(max_rel(&y, &reference) < 1e-12);
    }
}

#[test]
fn symbolic_matches_matmul_for_every_scheme() {
    for (i, &(n, m, mb, dm, dl)) in [(16, 8, 2, 1, 1), (7, 6, 6, 1, 2), (5, 4, 1, 1, 1), (32, 12, 6, 0, 0), (9, 3, 1, 1, 1), (16, 8, 8, 2, 2)]
        .iter()
        .enumerate()
    {
        let plan = MvmPlan::covering(n, m, mb, dm, dl, 1.0).unwrap();
        let (w, x) = random_case(i as u64, n, m);
        let truth = direct(&w, &x);
        for scheme in Scheme::ALL {
            for dir in [Direction::Down, Direction::Up] {
                let mut o = RunOptions::ideal(scheme);
                o.direction = dir;
                let y = run_mvm(&w, &x, &plan, &o).unwrap();
                let e = max_rel(&y, &truth);
                assert!(e < 1e-9, "{scheme:?} {dir:?} n={n} m={m} mb={mb}: {e}");
            }
        }
    }
}

#[test]
fn identity_weights_return_the_input() {
    let n = 12;
    let plan = plan_mvm(n, n, 6, 1, 2, 1.0).unwrap();
    let x = uniform_disc_polar_vec::<f64, _>(&mut rng_from(2), n);
    let y = run_mvm(&CMatrix::identity(n), &x, &plan, &RunOptions::ideal(Scheme::Basic)).unwrap();
    assert!(max_rel(&y, &x) < 1e-12);
}

#[test]
fn decomposition_is_neutral() {
    let (w, x) = random_case(8, 20, 12);
    let small = run_mvm(&w, &x, &plan_mvm(20, 12, 6, 1, 2, 1.0).unwrap(), &RunOptions::ideal(Scheme::WPrecode)).unwrap();
    let whole = run_mvm(&w, &x, &plan_mvm(20, 12, 12, 1, 2, 1.0).unwrap(), &RunOptions::ideal(Scheme::WPrecode)).unwrap();
    assert!(max_rel(&small, &whole) < 1e-9);
}

#[test]
fn single_precision_pipeline() {
    let (w, x) = random_case(3, 16, 6);
    let w32 = CMatrix::from_fn(6, 16, |r, k| Complex32::new(w[(r, k)].re as f32, w[(r, k)].im as f32));
    let x32: Vec<Complex32> = x.iter().map(|v| Complex32::new(v.re as f32, v.im as f32)).collect();
    let plan = plan_mvm(16, 6, 6, 1, 2, 1.0).unwrap();
    let y = run_mvm(&w32, &x32, &plan, &RunOptions::ideal(Scheme::Basic)).unwrap();
    let y64: Vec<Complex64> = y.iter().map(|v| c(v.re as f64, v.im as f64)).collect();
    assert!(max_rel(&y64, &direct(&w, &x)) < 1e-4);
}

#[test]
fn inner_product_examples() {
    let n = 64;
    let plan = plan_mvm(n, 1, 1, 1, 1, 1.0).unwrap();
    let o = RunOptions::ideal(Scheme::WPrecode);
    let ones = vec![c(1.0, 0.0); n];
    assert!((run_ip(&ones, &ones, &plan, &o).unwrap() - c(n as f64, 0.0)).norm() < 1e-9);
    let a: Vec<_> = (0..n).map(|i| Complex64::from_polar(1.0, TAU * i as f64 / n as f64)).collect();
    let b: Vec<_> = (0..n).map(|i| Complex64::from_polar(1.0, TAU * 3.0 * i as f64 / n as f64)).collect();
    assert!(run_ip(&a, &b, &plan, &o).unwrap().norm() < 1e-9);
    let mut rng = rng_from(6);
    let a = complex_gaussian_vec::<f64, _>(&mut rng, n, 1.0);
    let b = complex_gaussian_vec::<f64, _>(&mut rng, n, 1.0);
    let want: Complex64 = a.iter().zip(&b).map(|(p, q)| p * q.conj()).sum();
    for scheme in Scheme::ALL {
        let got = run_ip(&a, &b, &plan, &RunOptions::ideal(scheme)).unwrap();
        assert!((got - want).norm() / want.norm() < 1e-9, "{scheme:?}");
    }
    assert!(run_ip(&a, &b[..5], &plan, &o).is_err());
    assert!(run_ip(&a, &b, &plan_mvm(n, 2, 2, 1, 1, 1.0).unwrap(), &o).is_err());
}

#[test]
fn hybrid_product_is_linear_convolution() {
    let mut rng = rng_from(11);
    for l in [1usize, 2, 3, 16, 17, 100, 256] {
        let s1 = complex_gaussian_vec::<f64, _>(&mut rng, l, 1.0);
        let s2 = complex_gaussian_vec::<f64, _>(&mut rng, l, 1.0);
        let e = max_rel(&hybrid_product_spectrum(&s1, &s2).unwrap(), &linear_convolution(&s1, &s2));
        assert!(e < 1e-9, "L={l}: {e}");
    }
}

#[test]
fn mixed_power_is_triangular() {
    let l = 256usize;
    let seeds = 32;
    let mut profile = vec![0.0; 2 * l - 1];
    for s in 0..seeds {
        let mut rng = rng_from(100 + s);
        let s1 = complex_gaussian_vec::<f64, _>(&mut rng, l, 1.0);
        let s2 = complex_gaussian_vec::<f64, _>(&mut rng, l, 1.0);
        for (p, v) in profile.iter_mut().zip(hybrid_product_spectrum(&s1, &s2).unwrap()) {
            *p += v.norm_sqr() / seeds as f64;
        }
    }
    for chunk in (0..2 * l - 1).collect::<Vec<_>>().chunks(32) {
        let got: f64 = chunk.iter().map(|&j| profile[j]).sum();
        let want: f64 = chunk.iter().map(|&j| (j + 1).min(2 * l - 1 - j) as f64).sum();
        assert!((got / want - 1.0).abs() < 0.2, "bins {:?}: {}", chunk[0], got / want);
    }
}

#[test]
fn captured_band_holds_one_nth_of_the_power() {
    let n = 256;
    let plan = plan_mvm(n, 4, 4, 0, 0, 1.0).unwrap();
    let (mut captured_sum, mut total_sum) = (0.0, 0.0);
    let trials = 64;
    for s in 0..trials {
        let mut rng = rng_from(200 + s);
        let w = CMatrix::from_vec(4, n, complex_gaussian_vec(&mut rng, 4 * n, 1.0)).unwrap();
        let x = complex_gaussian_vec::<f64, _>(&mut rng, n, 1.0);
        let tx = encode_weights_block(&w, &plan, Direction::Up, 0).unwrap().symbols;
        let mut grid = vec![c(0.0, 0.0); plan.tx_fft_size()];
        for (i, v) in x.iter().enumerate() {
            grid[i * plan.capture_len()] = *v;
        }
        let full = linear_convolution(&tx, &grid);
        let total: f64 = full.iter().map(|v| v.norm_sqr()).sum();
        let captured: f64 = direct(&w, &x).iter().map(|v| v.norm_sqr()).sum();
        captured_sum += captured;
        total_sum += total;
    }
    let ratio = captured_sum / total_sum;
    assert!((ratio * n as f64 - 1.0).abs() < 0.1, "{}", ratio * n as f64);
}

#[test]
fn waveform_ideal_matches_matmul() {
    for (i, &(n, m, mb, dm, dl)) in [(8, 4, 2, 1, 1), (5, 2, 1, 1, 1), (6, 6, 6, 1, 2)].iter().enumerate() {
        let plan = MvmPlan::covering(n, m, mb, dm, dl, 1.0).unwrap();
        let (w, x) = random_case(10 + i as u64, n, m);
        let truth = direct(&w, &x);
        for scheme in Scheme::ALL {
            let y = run_mvm(&w, &x, &plan, &waveform_opts(scheme, &plan)).unwrap();
            let e = max_rel(&y, &truth);
            assert!(e < 1e-6, "{scheme:?} n={n} m={m}: {e}");
        }
    }
}

#[test]
fn zero_order_hold_distorts_but_decodes() {
    let plan = plan_mvm(8, 6, 6, 1, 2, 1.0).unwrap();
    let (w, x) = random_case(31, 8, 6);
    let mut o = waveform_opts(Scheme::Basic, &plan);
    o.frontend.as_mut().unwrap().dac = rfmvm::frontend::DacKernel::ZeroOrderHold;
    let y = run_mvm(&w, &x, &plan, &o).unwrap();
    let e = max_rel(&y, &direct(&w, &x));
    assert!(e > 1e-6 && e < 1.0, "{e}");
}

#[test]
fn diode_mixer_has_a_floor() {
    let (n, m) = (32, 6);
    let plan = plan_mvm(n, m, 6, 1, 2, 1.0).unwrap();
    let mut rng = rng_from(12);
    let w = CMatrix::from_vec(m, n, uniform_disc_polar_vec(&mut rng, m * n)).unwrap();
    let x = uniform_disc_polar_vec::<f64, _>(&mut rng, n);
    let truth = direct(&w, &x);
    let norm = 1.0 / (n as f64).sqrt();
    let mut o = RunOptions::ideal(Scheme::WPrecode);
    o.fidelity = Fidelity::Waveform;
    let ideal = rmse_and_bits(&run_mvm(&w, &x, &plan, &o).unwrap(), &truth, norm).unwrap().0;
    let mut fe = FrontendConfig::scaled(1.0, plan.subcarrier_spacing());
    fe.mixer = MixerModel::DiodeSignPassband;
    o.frontend = Some(fe);
    let diode = rmse_and_bits(&run_mvm(&w, &x, &plan, &o).unwrap(), &truth, norm).unwrap().0;
    assert!(diode > 10.0 * ideal, "{diode} vs {ideal}");
    o.direction = Direction::Up;
    assert!(matches!(run_mvm(&w, &x, &plan, &o), Err(Error::InvalidConfig(_))));
}

#[test]
fn waveform_sync_recovers_offset_and_cfo() {
    let (n, m) = (32, 12);
    let plan = plan_mvm(n, m, 6, 1, 2, 1.0).unwrap();
    let (w, x) = random_case(13, n, m);
    let truth = direct(&w, &x);
    let norm = 1.0 / (n as f64).sqrt();
    let mut o = waveform_opts(Scheme::Basic, &plan);
    o.noise = NoiseSpec::full_band(30.0);
    let base = rmse_and_bits(&run_mvm(&w, &x, &plan, &o).unwrap(), &truth, norm).unwrap().0;
    for (offset, cfo) in [(0, 0.0), (41, 0.1), (7, -0.1)] {
        o.sync = SyncOptions { enabled: true, timing_offset: offset, cfo: cfo * plan.subcarrier_spacing(), ..Default::default() };
        let r = rmse_and_bits(&run_mvm(&w, &x, &plan, &o).unwrap(), &truth, norm).unwrap().0;
        assert!(r < 2.0 * base, "offset {offset} cfo {cfo}: {r} vs {base}");
    }
    o.noise = NoiseSpec::full_band(-20.0);
    o.sync.threshold = 0.95;
    assert!(matches!(run_mvm(&w, &x, &plan, &o), Err(Error::SyncFailure(_))));
}

#[test]
fn noise_is_reproducible_per_seed() {
    let plan = plan_mvm(16, 6, 6, 1, 2, 1.0).unwrap();
    let (w, x) = random_case(14, 16, 6);
    let mut o = RunOptions::ideal(Scheme::Basic);
    o.noise = NoiseSpec::full_band(10.0);
    o.seed = 99;
    let a = run_mvm(&w, &x, &plan, &o).unwrap();
    assert_eq!(a, run_mvm(&w, &x, &plan, &o).unwrap());
    o.seed = 100;
    assert_ne!(a, run_mvm(&w, &x, &plan, &o).unwrap());
}

#[test]
fn rejects_mismatched_shapes() {
    let plan = plan_mvm(16, 6, 6, 1, 2, 1.0).unwrap();
    let (w, x) = random_case(15, 16, 6);
    let o = RunOptions::ideal(Scheme::Basic);
    assert!(run_mvm(&w, &x[..8], &plan, &o).is_err());
    let (big, _) = random_case(15, 16, 12);
    assert!(run_mvm(&big, &x, &plan, &o).is_err());
    // fewer rows than the plan is fine
    let (short, _) = random_case(15, 16, 4);
    assert_eq!(run_mvm(&short, &x, &plan, &o).unwrap().len(), 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn run_mvm_is_linear(seed in 0u64..10_000, re in -2.0f64..2.0, im in -2.0f64..2.0, scheme in 0usize..4) {
        let scheme = Scheme::ALL[scheme];
        let plan = plan_mvm(10, 6, 2, 1, 1, 1.0).unwrap();
        let (w, x1) = random_case(seed, 10, 6);
        let x2 = complex_gaussian_vec::<f64, _>(&mut rng_from(seed + 1), 10, 1.0);
        let a = c(re, im);
        let o = RunOptions::ideal(scheme);
        let mixed: Vec<_> = x1.iter().zip(&x2).map(|(p, q)| a * p + q).collect();
        let lhs = run_mvm(&w, &mixed, &plan, &o).unwrap();
        let y1 = run_mvm(&w, &x1, &plan, &o).unwrap();
        let y2 = run_mvm(&w, &x2, &plan, &o).unwrap();
        let rhs: Vec<_> = y1.iter().zip(&y2).map(|(p, q)| a * p + q).collect();
        prop_assert!(max_rel(&lhs, &rhs) < 1e-9);
    }

    #[test]
    fn schemes_agree_without_noise(seed in 0u64..10_000, n in 1usize..24, mb in 1usize..4) {
        let plan = MvmPlan::covering(n, 6, mb, 1, 1, 1.0).unwrap();
        let (w, x) = random_case(seed, n, 6);
        let base = run_mvm(&w, &x, &plan, &RunOptions::ideal(Scheme::Vanilla)).unwrap();
        for scheme in [Scheme::Basic, Scheme::WPrecode, Scheme::XPrecode] {
            prop_assert!(max_rel(&run_mvm(&w, &x, &plan, &RunOptions::ideal(scheme)).unwrap(), &base) < 1e-9);
        }
    }
}
