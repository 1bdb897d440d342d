//! Signal generators and small oracles shared by unit and integration tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::audio_io::AudioClip;

pub fn sine(freq_hz: f64, sample_rate_hz: u32, len: usize) -> AudioClip {
    let w = 2.0 * std::f64::consts::PI * freq_hz / sample_rate_hz as f64;
    let samples = (0..len).map(|n| (w * n as f64).sin()).collect();
    AudioClip::new(samples, sample_rate_hz).unwrap()
}

/// Uniform white noise in [-1, 1).
pub fn white_noise(seed: u64, sample_rate_hz: u32, len: usize) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    AudioClip::new(samples, sample_rate_hz).unwrap()
}

/// White Gaussian noise with unit variance.
pub fn gaussian_noise(seed: u64, sample_rate_hz: u32, len: usize) -> AudioClip {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..len)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    AudioClip::new(samples, sample_rate_hz).unwrap()
}

/// Zeroes all FFT bins of `clip` outside [lo_hz, hi_hz]; used to build
/// band-limited test signals.
pub fn bandlimit(clip: &AudioClip, lo_hz: f64, hi_hz: f64) -> AudioClip {
    let n = clip.len();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex<f64>> = clip.samples.iter().map(|&s| Complex::new(s, 0.0)).collect();
    fft.process(&mut buf);
    let df = clip.sample_rate_hz as f64 / n as f64;
    for k in 0..n {
        let f = if k <= n / 2 { k as f64 * df } else { (n - k) as f64 * df };
        if f < lo_hz || f > hi_hz {
            buf[k] = Complex::new(0.0, 0.0);
        }
    }
    ifft.process(&mut buf);
    let scale = 1.0 / n as f64;
    let samples = buf.iter().map(|c| c.re * scale).collect();
    AudioClip::new(samples, clip.sample_rate_hz).unwrap()
}

/// Frequency of the largest FFT magnitude bin (DC excluded).
pub fn fft_peak_hz(samples: &[f64], sample_rate_hz: u32) -> f64 {
    let n = samples.len();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&s| Complex::new(s, 0.0)).collect();
    fft.process(&mut buf);
    let half = n / 2;
    let mut best = 1;
    for k in 2..=half {
        if buf[k].norm() > buf[best].norm() {
            best = k;
        }
    }
    best as f64 * sample_rate_hz as f64 / n as f64
}

pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den.max(1e-300)).sqrt()
}
