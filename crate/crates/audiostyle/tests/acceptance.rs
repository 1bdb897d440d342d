//! The acceptance gate. Run with `cargo test --release --test acceptance
//! -- --nocapture` to see one line per criterion.

use std::sync::OnceLock;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use audiostyle::audio_io::AudioClip;
use audiostyle::auditory::filterbank::{cochlear_filterbank, modulation_filterbank, Filterbank};
use audiostyle::auditory::{extract_stats, stats_loss, stats_loss_grad, AuditoryConfig};
use audiostyle::optimizer::{
    grad_check, transfer, transfer_with, Model, TransferConfig,
};
use audiostyle::shallow::{forward, gram, style_loss, style_loss_grad, ShallowConfig, ShallowNetParams};
use audiostyle::spectral::{griffin_lim, istft, spectral_distance, stft, PhaseInit, StftConfig};
use audiostyle::test_util::{bandlimit, relative_l2, sine, white_noise};

/// Regression descent settings, frozen from the first passing run.
const SHALLOW_STEP: f64 = 0.05;
const AUDITORY_STEP: f64 = 1e-2;
const AUDITORY_DITHER: f64 = 1e-2;
const TARGET_RATIO: f64 = 0.1;
const MAX_SECS_PER_MODEL: f64 = 300.0;

fn verdict(criterion: usize, label: &str, ok: bool, detail: &str) {
    println!(
        "criterion {criterion} ({label}): {}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion} ({label}) failed: {detail}");
}

fn content_clip() -> AudioClip {
    sine(440.0, 16000, 64000)
}

fn style_clip() -> AudioClip {
    bandlimit(&white_noise(11, 16000, 64000), 500.0, 4000.0)
}

struct RegressionRun {
    output: AudioClip,
    ratio: f64,
    iterations: usize,
    secs: f64,
}

/// Descend until the loss falls to `TARGET_RATIO` of its initial value or
/// the iteration budget runs out, whichever is first.
fn run_regression(model: Model) -> RegressionRun {
    let content = content_clip();
    let style = style_clip();
    let cfg = TransferConfig {
        model,
        max_iterations: 500,
        step_size: Some(match model {
            Model::Shallow => SHALLOW_STEP,
            Model::Auditory => AUDITORY_STEP,
        }),
        init_dither: match model {
            Model::Shallow => 0.0,
            Model::Auditory => AUDITORY_DITHER,
        },
        stop_tolerance: 1e-12,
        log_every: 1,
        ..Default::default()
    };
    use std::cell::Cell;
    let initial = Cell::new(f64::NAN);
    let reached = Cell::new(false);
    let (output, report) = transfer_with(
        &content,
        &style,
        &cfg,
        &mut |_, loss| {
            if initial.get().is_nan() {
                initial.set(loss);
            }
            if loss <= TARGET_RATIO * initial.get() {
                reached.set(true);
            }
        },
        &mut || reached.get(),
    )
    .unwrap();
    let first = report.loss_trace[0];
    let best = report
        .loss_trace
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    RegressionRun {
        output,
        ratio: best / first,
        iterations: report.iterations,
        secs: report.wall_time.as_secs_f64(),
    }
}

fn shallow_regression() -> &'static RegressionRun {
    static RUN: OnceLock<RegressionRun> = OnceLock::new();
    RUN.get_or_init(|| run_regression(Model::Shallow))
}

fn auditory_regression() -> &'static RegressionRun {
    static RUN: OnceLock<RegressionRun> = OnceLock::new();
    RUN.get_or_init(|| run_regression(Model::Auditory))
}

#[test]
fn criterion_1_structural_defaults() {
    let shallow = ShallowConfig::default();
    let auditory = AuditoryConfig::default();
    let ok = shallow.num_filters == 4096
        && auditory.n_cochlear_bands == 30
        && auditory.n_modulation_bands == 20;
    verdict(
        1,
        "structural defaults",
        ok,
        &format!(
            "filters {} cochlear {} modulation {}",
            shallow.num_filters, auditory.n_cochlear_bands, auditory.n_modulation_bands
        ),
    );
}

#[test]
fn criterion_2_gradient_suite() {
    let start = std::time::Instant::now();

    // shallow: 50 random instances away from the ReLU kink
    let mut worst_shallow: f64 = 0.0;
    for inst in 0..50u64 {
        let cfg = ShallowConfig {
            num_filters: 8,
            kernel_width: 3,
            seed: inst,
            normalize_by_k2: true,
        };
        let params = ShallowNetParams::new(cfg, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + inst);
        let spec = Array2::from_shape_fn((24, 6), |_| rng.gen_range(0.5..2.0));
        let other = Array2::from_shape_fn((24, 6), |_| rng.gen_range(0.5..2.0));
        let target = gram(&forward(&other.view(), &params).unwrap());
        let (_, g) = style_loss_grad(&spec.view(), &target, &params).unwrap();
        let point = spec.into_raw_vec_and_offset().0;
        let err = grad_check(
            |x| {
                let view = ndarray::ArrayView2::from_shape((24, 6), x).unwrap();
                style_loss(&view, &target, &params)
            },
            &g.into_raw_vec_and_offset().0,
            &point,
            8,
            1e-6,
            2000 + inst,
        )
        .unwrap();
        worst_shallow = worst_shallow.max(err);
    }

    // auditory: 20 reduced-config instances
    let acfg = AuditoryConfig::reduced();
    let mut worst_auditory: f64 = 0.0;
    for inst in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + inst);
        let clip =
            AudioClip::new((0..1000).map(|_| rng.gen_range(-1.0..1.0)).collect(), 2000).unwrap();
        let other =
            AudioClip::new((0..1000).map(|_| rng.gen_range(-1.0..1.0)).collect(), 2000).unwrap();
        let target = extract_stats(&other, &acfg).unwrap();
        let (_, g) = stats_loss_grad(&clip, &target, &acfg).unwrap();
        let err = grad_check(
            |x| stats_loss(&AudioClip::new(x.to_vec(), 2000)?, &target, &acfg),
            &g,
            &clip.samples,
            8,
            1e-5,
            4000 + inst,
        )
        .unwrap();
        worst_auditory = worst_auditory.max(err);
    }

    let secs = start.elapsed().as_secs_f64();
    let ok = worst_shallow < 1e-5 && worst_auditory < 1e-4 && secs < 120.0;
    verdict(
        2,
        "gradient suite",
        ok,
        &format!("shallow {worst_shallow:.3e} auditory {worst_auditory:.3e} in {secs:.1}s"),
    );
}

#[test]
fn criterion_3_minimizer_fixed_point() {
    let x = white_noise(21, 16000, 16000);

    // the style's own statistics: zero loss, vanishing gradient
    let stft_cfg = StftConfig::default();
    let spec = stft(&x, stft_cfg).unwrap();
    let z = spec.magnitude.mapv(|m| m.ln_1p());
    let params = ShallowNetParams::new(ShallowConfig::default(), stft_cfg.n_bins()).unwrap();
    let target = gram(&forward(&z.view(), &params).unwrap());
    let (sl, sg) = style_loss_grad(&z.view(), &target, &params).unwrap();
    let sg_max = sg.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    let acfg = AuditoryConfig::default();
    let atarget = extract_stats(&x, &acfg).unwrap();
    let (al, ag) = stats_loss_grad(&x, &atarget, &acfg).unwrap();
    let ag_max = ag.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    // transfer(x, x) returns x
    let mut shallow_cfg = TransferConfig {
        model: Model::Shallow,
        ..Default::default()
    };
    shallow_cfg.max_iterations = 50;
    let (s_out, _) = transfer(&x, &x, &shallow_cfg).unwrap();
    let s_dev = relative_l2(&s_out.samples, &x.samples);

    let mut auditory_cfg = TransferConfig {
        model: Model::Auditory,
        ..Default::default()
    };
    auditory_cfg.max_iterations = 50;
    let (a_out, _) = transfer(&x, &x, &auditory_cfg).unwrap();
    let a_dev = relative_l2(&a_out.samples, &x.samples);

    let ok = sl < 1e-12
        && al < 1e-12
        && sg_max < 1e-9
        && ag_max < 1e-9
        && s_dev < 1e-3
        && a_dev < 1e-3;
    verdict(
        3,
        "minimizer fixed point",
        ok,
        &format!(
            "loss {sl:.1e}/{al:.1e} grad {sg_max:.1e}/{ag_max:.1e} deviation {s_dev:.1e}/{a_dev:.1e}"
        ),
    );
}

#[test]
fn criterion_4_descent_regression() {
    let s = shallow_regression();
    let a = auditory_regression();
    let ok = s.ratio <= TARGET_RATIO
        && a.ratio <= TARGET_RATIO
        && s.secs <= MAX_SECS_PER_MODEL
        && a.secs <= MAX_SECS_PER_MODEL
        && s.iterations <= 500
        && a.iterations <= 500;
    verdict(
        4,
        "descent regression",
        ok,
        &format!(
            "shallow ratio {:.4} in {} iters / {:.0}s, auditory ratio {:.4} in {} iters / {:.0}s",
            s.ratio, s.iterations, s.secs, a.ratio, a.iterations, a.secs
        ),
    );
}

fn tiling_error(fb: &Filterbank) -> f64 {
    let n_bins = fb.responses[0].len();
    let hz_per_bin = fb.sample_rate_hz / fb.n_fft as f64;
    let mut worst: f64 = 0.0;
    for k in 0..n_bins {
        let f = k as f64 * hz_per_bin;
        if f <= fb.passband_hz.0 || f >= fb.passband_hz.1 {
            continue;
        }
        let total: f64 = fb.responses.iter().map(|r| r[k] * r[k]).sum();
        worst = worst.max((total - 1.0).abs());
    }
    worst
}

#[test]
fn criterion_5_signal_processing_invariants() {
    // STFT round-trip on the interior
    let clip = sine(311.1, 16000, 16000);
    let cfg = StftConfig::default();
    let spec = stft(&clip, cfg).unwrap();
    let back = istft(&spec).unwrap();
    let lo = cfg.window_size;
    let hi = back.samples.len() - cfg.window_size;
    let roundtrip = clip.samples[lo..hi]
        .iter()
        .zip(&back.samples[lo..hi])
        .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));

    // Griffin-Lim distance is non-increasing in the iteration count
    let noise = white_noise(31, 16000, 8000);
    let mag = stft(&noise, cfg).unwrap();
    let bare = audiostyle::spectral::Spectrogram {
        magnitude: mag.magnitude.clone(),
        phase: None,
        config: cfg,
        sample_rate_hz: 16000,
    };
    let mut prev = f64::INFINITY;
    let mut monotone = true;
    for iters in 0..=60 {
        let wave = griffin_lim(&bare, iters, PhaseInit::Zero).unwrap();
        let d = spectral_distance(&bare.magnitude, &wave, cfg).unwrap();
        if d > prev + 1e-9 {
            monotone = false;
        }
        prev = d;
    }

    // filterbank tiling
    let coch = cochlear_filterbank(30, 20.0, 16000.0, 16384).unwrap();
    let modf = modulation_filterbank(20, 0.5, 400.0, 1600).unwrap();
    let coch_err = tiling_error(&coch);
    let mod_err = tiling_error(&modf);

    let ok = roundtrip <= 1e-10 && monotone && coch_err <= 1e-3 && mod_err <= 1e-3;
    verdict(
        5,
        "signal processing invariants",
        ok,
        &format!(
            "roundtrip {roundtrip:.1e} monotone {monotone} tiling {coch_err:.1e}/{mod_err:.1e}"
        ),
    );
}

#[test]
fn criterion_6_statistic_invariants() {
    // Gram circular shift invariance over frames
    let cfg = ShallowConfig {
        num_filters: 64,
        ..Default::default()
    };
    let params = ShallowNetParams::new(cfg, 33).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let spec = Array2::from_shape_fn((64, 33), |_| rng.gen_range(0.0..2.0));
    let n = spec.nrows();
    let mut shifted = Array2::zeros(spec.dim());
    for t in 0..n {
        shifted.row_mut((t + 17) % n).assign(&spec.row(t));
    }
    // wrap-extend by w-1 frames so valid convolution sees each circular
    // patch exactly once; the patch multiset is then shift-invariant
    let w = params.config.kernel_width;
    let extend = |s: &Array2<f64>| {
        let mut d = Array2::zeros((n + w - 1, s.ncols()));
        for t in 0..n + w - 1 {
            d.row_mut(t).assign(&s.row(t % n));
        }
        d
    };
    let gs = gram(&forward(&extend(&spec).view(), &params).unwrap()).gram;
    let gt = gram(&forward(&extend(&shifted).view(), &params).unwrap()).gram;
    let shift_err = gs
        .iter()
        .zip(gt.iter())
        .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));

    // auditory scale covariance and reversal invariance
    let acfg = AuditoryConfig::default();
    let clip = white_noise(42, 16000, 16000);
    let base = extract_stats(&clip, &acfg).unwrap();
    let c = 1.7;
    let scaled_clip =
        AudioClip::new(clip.samples.iter().map(|v| c * v).collect(), 16000).unwrap();
    let scaled = extract_stats(&scaled_clip, &acfg).unwrap();
    let mut scale_err: f64 = 0.0;
    for (b, (v0, v1)) in base
        .cochlear_variance
        .iter()
        .zip(&scaled.cochlear_variance)
        .enumerate()
    {
        let rel = (v1 - c * c * v0).abs() / v0.abs().max(1e-300);
        scale_err = scale_err.max(rel);
        let _ = b;
    }
    for (p0, p1) in base
        .mod_power
        .iter()
        .flatten()
        .zip(scaled.mod_power.iter().flatten())
    {
        scale_err = scale_err.max((p1 - p0).abs() / p0.abs().max(1e-12));
    }

    let reversed_clip =
        AudioClip::new(clip.samples.iter().rev().cloned().collect(), 16000).unwrap();
    let reversed = extract_stats(&reversed_clip, &acfg).unwrap();
    let mut reversal_err: f64 = 0.0;
    for ((_, a), (_, b)) in base.classes().iter().zip(reversed.classes().iter()) {
        for (x, y) in a.iter().zip(b.iter()) {
            reversal_err = reversal_err.max((x - y).abs());
        }
    }

    let count = acfg.stat_count();
    let flat = base.flat_len();

    let ok = shift_err <= 1e-12
        && scale_err <= 1e-9
        && reversal_err <= 1e-6
        && count == 829
        && flat == 829;
    verdict(
        6,
        "statistic invariants",
        ok,
        &format!(
            "shift {shift_err:.1e} scale {scale_err:.1e} reversal {reversal_err:.1e} count {count}/{flat}"
        ),
    );
}

#[test]
fn criterion_7_cli_determinism() {
    use std::process::Command;
    let bin = env!("CARGO_BIN_EXE_audiostyle");
    let dir = tempfile::tempdir().unwrap();
    let content_path = dir.path().join("content.wav");
    let style_path = dir.path().join("style.wav");
    audiostyle::audio_io::save_wav(
        &sine(440.0, 16000, 16000),
        &content_path,
        audiostyle::audio_io::BitDepth::Float32,
    )
    .unwrap();
    audiostyle::audio_io::save_wav(
        &bandlimit(&white_noise(11, 16000, 16000), 500.0, 4000.0),
        &style_path,
        audiostyle::audio_io::BitDepth::Float32,
    )
    .unwrap();

    let run = |tag: &str| {
        let out = dir.path().join(format!("out_{tag}.wav"));
        let png = dir.path().join(format!("out_{tag}.png"));
        let json = dir.path().join(format!("stats_{tag}.json"));
        let status = Command::new(bin)
            .args([
                "transfer",
                "--content",
                content_path.to_str().unwrap(),
                "--style",
                style_path.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--spectrogram-out",
                png.to_str().unwrap(),
                "--model",
                "shallow",
                "--filters",
                "64",
                "--iterations",
                "3",
                "--seed",
                "9",
                "--log-every",
                "0",
            ])
            .status()
            .unwrap();
        assert!(status.success());
        let status = Command::new(bin)
            .args([
                "analyze",
                "--input",
                style_path.to_str().unwrap(),
                "--model",
                "auditory",
                "--out",
                json.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
        (
            std::fs::read(out).unwrap(),
            std::fs::read(png).unwrap(),
            std::fs::read(json).unwrap(),
        )
    };

    let a = run("a");
    let b = run("b");
    let ok = a == b;
    verdict(
        7,
        "CLI determinism",
        ok,
        &format!(
            "wav {} png {} json {}",
            a.0 == b.0,
            a.1 == b.1,
            a.2 == b.2
        ),
    );
}

/// Mean power spectrum over STFT frames.
fn mean_power(clip: &AudioClip) -> Vec<f64> {
    let spec = stft(clip, StftConfig::default()).unwrap();
    let (n_frames, n_bins) = spec.magnitude.dim();
    let mut p = vec![0.0f64; n_bins];
    for t in 0..n_frames {
        for k in 0..n_bins {
            let m = spec.magnitude[[t, k]];
            p[k] += m * m;
        }
    }
    for v in &mut p {
        *v /= n_frames as f64;
    }
    p
}

fn peak_bin(power: &[f64]) -> usize {
    power
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap()
}

#[test]
fn criterion_8_smoke_check() {
    let content = content_clip();
    let content_power = mean_power(&content);
    let content_peak = peak_bin(&content_power);

    let mut ok = true;
    let mut detail = String::new();
    for (name, run) in [
        ("shallow", shallow_regression()),
        ("auditory", auditory_regression()),
    ] {
        let power = mean_power(&run.output);
        let peak = peak_bin(&power);
        let peak_ok = peak.abs_diff(content_peak) <= 1;

        // broadband energy outside the peak's immediate neighborhood
        let exclude = |k: usize| k.abs_diff(content_peak) <= 1;
        let sum_outside = |p: &[f64]| -> f64 {
            p.iter()
                .enumerate()
                .filter(|(k, _)| !exclude(*k) && *k > 0)
                .map(|(_, v)| v)
                .sum()
        };
        let gain_db = 10.0 * (sum_outside(&power) / sum_outside(&content_power)).log10();
        let broad_ok = gain_db >= 6.0;
        ok &= peak_ok && broad_ok;
        detail.push_str(&format!(
            "{name}: peak {peak} (content {content_peak}) broadband +{gain_db:.1} dB; "
        ));
    }
    verdict(8, "smoke check", ok, &detail);
}
