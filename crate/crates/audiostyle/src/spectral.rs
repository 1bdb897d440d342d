//! STFT analysis, weighted overlap-add synthesis, and Griffin-Lim phase
//! reconstruction.
//!
//! Frames start at sample 0 and advance by `hop_size`; no centering or
//! padding is applied, so `n_frames = 1 + (len - window_size) / hop_size`.
//! Synthesis normalizes per sample by the summed squared window, which makes
//! `istft(stft(x))` an identity away from the first and last window (and in
//! practice everywhere except the very first sample, where the Hann window
//! is exactly zero).

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::audio_io::AudioClip;
use crate::error::{Error, Result};

/// STFT framing parameters. The window is always Hann (periodic).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub window_size: usize,
    pub hop_size: usize,
    pub fft_size: usize,
}

impl Default for StftConfig {
    /// 32 ms window, 8 ms hop at 16 kHz.
    fn default() -> Self {
        Self {
            window_size: 512,
            hop_size: 128,
            fft_size: 512,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hop_size == 0
            || self.hop_size > self.window_size
            || self.window_size > self.fft_size
        {
            return Err(Error::InvalidConfig(
                "need 0 < hop_size <= window_size <= fft_size".into(),
            ));
        }
        if self.window_size % self.hop_size != 0 || self.window_size / self.hop_size < 2 {
            return Err(Error::InvalidConfig(
                "window_size must be an integer multiple (>= 2) of hop_size".into(),
            ));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn n_frames(&self, clip_len: usize) -> Result<usize> {
        if clip_len < self.window_size {
            return Err(Error::ClipTooShort {
                len: clip_len,
                min: self.window_size,
            });
        }
        Ok(1 + (clip_len - self.window_size) / self.hop_size)
    }

    /// Periodic Hann window of `window_size` samples.
    pub fn window(&self) -> Vec<f64> {
        let n = self.window_size as f64;
        (0..self.window_size)
            .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n).cos()))
            .collect()
    }
}

/// Time-frequency magnitude (and optionally phase), `[n_frames x n_bins]`.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub magnitude: Array2<f64>,
    pub phase: Option<Array2<f64>>,
    pub config: StftConfig,
    pub sample_rate_hz: u32,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.magnitude.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.magnitude.ncols()
    }
}

/// Short-time Fourier transform with magnitude and phase.
///
/// ```
/// use audiostyle::audio_io::AudioClip;
/// use audiostyle::spectral::{stft, istft, StftConfig};
///
/// let clip = AudioClip::new(vec![0.1; 4096], 16_000).unwrap();
/// let cfg = StftConfig::default(); // 512 window, 128 hop, 512 FFT
/// let spec = stft(&clip, cfg).unwrap();
/// assert_eq!(spec.n_bins(), 257);
///
/// let back = istft(&spec).unwrap();
/// // interior samples round-trip; the last partial frame is dropped
/// assert!((back.samples[1000] - clip.samples[1000]).abs() < 1e-10);
/// ```
pub fn stft(clip: &AudioClip, config: StftConfig) -> Result<Spectrogram> {
    config.validate()?;
    let n_frames = config.n_frames(clip.len())?;
    let n_bins = config.n_bins();
    let window = config.window();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(config.fft_size);
    let mut magnitude = Array2::zeros((n_frames, n_bins));
    let mut phase = Array2::zeros((n_frames, n_bins));
    let mut buf = vec![Complex::new(0.0, 0.0); config.fft_size];
    for t in 0..n_frames {
        let start = t * config.hop_size;
        for i in 0..config.fft_size {
            buf[i] = if i < config.window_size {
                Complex::new(clip.samples[start + i] * window[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for k in 0..n_bins {
            magnitude[[t, k]] = buf[k].norm();
            phase[[t, k]] = buf[k].arg();
        }
    }
    Ok(Spectrogram {
        magnitude,
        phase: Some(phase),
        config,
        sample_rate_hz: clip.sample_rate_hz,
    })
}

/// Weighted overlap-add inverse STFT. Requires phase.
pub fn istft(spec: &Spectrogram) -> Result<AudioClip> {
    let phase = spec.phase.as_ref().ok_or(Error::MissingPhase)?;
    istft_with_phase(&spec.magnitude, phase, spec.config, spec.sample_rate_hz)
}

fn istft_with_phase(
    magnitude: &Array2<f64>,
    phase: &Array2<f64>,
    config: StftConfig,
    sample_rate_hz: u32,
) -> Result<AudioClip> {
    config.validate()?;
    let n_frames = magnitude.nrows();
    let n_bins = config.n_bins();
    if magnitude.ncols() != n_bins || phase.dim() != magnitude.dim() {
        return Err(Error::ShapeMismatch(format!(
            "spectrogram {:?} does not match config bins {}",
            magnitude.dim(),
            n_bins
        )));
    }
    let window = config.window();
    let out_len = config.window_size + (n_frames - 1) * config.hop_size;
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(config.fft_size);
    let mut acc = vec![0.0f64; out_len];
    let mut weight = vec![0.0f64; out_len];
    let mut buf = vec![Complex::new(0.0, 0.0); config.fft_size];
    let scale = 1.0 / config.fft_size as f64;
    for t in 0..n_frames {
        for k in 0..n_bins {
            let (im, re) = phase[[t, k]].sin_cos();
            buf[k] = magnitude[[t, k]] * Complex::new(re, im);
        }
        for k in n_bins..config.fft_size {
            buf[k] = buf[config.fft_size - k].conj();
        }
        ifft.process(&mut buf);
        let start = t * config.hop_size;
        for i in 0..config.window_size {
            acc[start + i] += buf[i].re * scale * window[i];
            weight[start + i] += window[i] * window[i];
        }
    }
    for (a, w) in acc.iter_mut().zip(&weight) {
        if *w > 1e-12 {
            *a /= w;
        } else {
            *a = 0.0;
        }
    }
    AudioClip::new(acc, sample_rate_hz)
}

/// Phase initialization for [`griffin_lim`].
#[derive(Debug, Clone)]
pub enum PhaseInit {
    Zero,
    Random(u64),
    Provided(Array2<f64>),
}

/// Griffin-Lim: alternating projection between the target magnitude and the
/// set of consistent spectrograms. With `PhaseInit::Provided` and zero
/// iterations this reduces to a plain inverse STFT.
pub fn griffin_lim(spec: &Spectrogram, iterations: usize, init: PhaseInit) -> Result<AudioClip> {
    let magnitude = &spec.magnitude;
    let phase = match init {
        PhaseInit::Zero => Array2::zeros(magnitude.dim()),
        PhaseInit::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Array2::from_shape_fn(magnitude.dim(), |_| {
                rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)
            })
        }
        PhaseInit::Provided(p) => {
            if p.dim() != magnitude.dim() {
                return Err(Error::ShapeMismatch(
                    "provided phase does not match magnitude".into(),
                ));
            }
            p
        }
    };
    let mut x = istft_with_phase(magnitude, &phase, spec.config, spec.sample_rate_hz)?;
    for _ in 0..iterations {
        let analyzed = stft(&x, spec.config)?;
        let new_phase = analyzed.phase.expect("stft always produces phase");
        x = istft_with_phase(magnitude, &new_phase, spec.config, spec.sample_rate_hz)?;
    }
    Ok(x)
}

/// Frobenius distance ||M - |STFT(x)|||_F; the quantity Griffin-Lim drives
/// down.
pub fn spectral_distance(magnitude: &Array2<f64>, x: &AudioClip, config: StftConfig) -> Result<f64> {
    let analyzed = stft(x, config)?;
    if analyzed.magnitude.dim() != magnitude.dim() {
        return Err(Error::ShapeMismatch(
            "magnitude shapes differ in spectral_distance".into(),
        ));
    }
    let mut sum = 0.0;
    for (a, b) in magnitude.iter().zip(analyzed.magnitude.iter()) {
        sum += (a - b) * (a - b);
    }
    Ok(sum.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::{sine, white_noise};

    fn cfg() -> StftConfig {
        StftConfig::default()
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        let bad = StftConfig {
            window_size: 512,
            hop_size: 300,
            fft_size: 512,
        };
        assert!(bad.validate().is_err());
        let bad2 = StftConfig {
            window_size: 512,
            hop_size: 512,
            fft_size: 512,
        };
        assert!(bad2.validate().is_err());
    }

    #[test]
    fn zero_clip_gives_zero_magnitude() {
        let clip = AudioClip::new(vec![0.0; 2048], 16000).unwrap();
        let s = stft(&clip, cfg()).unwrap();
        assert!(s.magnitude.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn sine_at_bin_center_peaks_at_that_bin() {
        // bin 16 of a 512-point FFT at 16 kHz: 500 Hz
        let k = 16;
        let freq = k as f64 * 16000.0 / 512.0;
        let clip = sine(freq, 16000, 4096);
        let s = stft(&clip, cfg()).unwrap();
        for t in 0..s.n_frames() {
            let row = s.magnitude.row(t);
            let (best, _) = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap();
            assert_eq!(best, k, "frame {t} peaked at bin {best}");
        }
        // oracle: direct DFT of the first windowed frame at bin k
        let window = cfg().window();
        let mut re = 0.0;
        let mut im = 0.0;
        for n in 0..512 {
            let ang = -2.0 * std::f64::consts::PI * (k * n) as f64 / 512.0;
            let v = clip.samples[n] * window[n];
            re += v * ang.cos();
            im += v * ang.sin();
        }
        let oracle = (re * re + im * im).sqrt();
        assert!((s.magnitude[[0, k]] - oracle).abs() < 1e-9);
    }

    #[test]
    fn exactly_one_window_gives_one_frame() {
        let clip = sine(500.0, 16000, 512);
        let s = stft(&clip, cfg()).unwrap();
        assert_eq!(s.n_frames(), 1);
    }

    #[test]
    fn too_short_clip_is_an_error() {
        let clip = sine(500.0, 16000, 100);
        assert!(matches!(
            stft(&clip, cfg()),
            Err(Error::ClipTooShort { .. })
        ));
    }

    #[test]
    fn round_trip_interior_error() {
        let clip = white_noise(3, 16000, 8192);
        let s = stft(&clip, cfg()).unwrap();
        let back = istft(&s).unwrap();
        assert_eq!(back.len(), clip.len());
        let w = cfg().window_size;
        let max_err = clip.samples[w..clip.len() - w]
            .iter()
            .zip(&back.samples[w..clip.len() - w])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err <= 1e-10, "interior error {max_err}");
    }

    #[test]
    fn round_trip_other_cola_configs() {
        for (win, hop, fft) in [(256, 64, 256), (512, 256, 1024), (128, 32, 128)] {
            let config = StftConfig {
                window_size: win,
                hop_size: hop,
                fft_size: fft,
            };
            let clip = white_noise(5, 16000, 4 * win + 7 * hop);
            let s = stft(&clip, config).unwrap();
            let back = istft(&s).unwrap();
            let max_err = clip.samples[win..back.len() - win]
                .iter()
                .zip(&back.samples[win..back.len() - win])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(max_err <= 1e-10, "({win},{hop},{fft}): {max_err}");
        }
    }

    #[test]
    fn zero_spectrogram_inverts_to_silence() {
        let s = Spectrogram {
            magnitude: Array2::zeros((10, cfg().n_bins())),
            phase: Some(Array2::zeros((10, cfg().n_bins()))),
            config: cfg(),
            sample_rate_hz: 16000,
        };
        let clip = istft(&s).unwrap();
        assert!(clip.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_phase_is_an_error() {
        let mut s = stft(&white_noise(1, 16000, 2048), cfg()).unwrap();
        s.phase = None;
        assert!(matches!(istft(&s), Err(Error::MissingPhase)));
    }

    #[test]
    fn single_frame_matches_hand_overlap_add() {
        let clip = white_noise(8, 16000, 512);
        let s = stft(&clip, cfg()).unwrap();
        assert_eq!(s.n_frames(), 1);
        let back = istft(&s).unwrap();
        // hand oracle: ifft of the single frame is windowed input; WOLA
        // divides by w^2, recovering the input wherever w > 0
        let window = cfg().window();
        for i in 1..512 {
            let expect = clip.samples[i];
            assert!(
                (back.samples[i] - expect).abs() < 1e-9 / window[i].max(1e-4),
                "sample {i}"
            );
        }
        assert_eq!(back.samples[0], 0.0); // hann zero kills sample 0
    }

    #[test]
    fn parseval_per_frame() {
        let clip = white_noise(4, 16000, 2048);
        let config = cfg();
        let s = stft(&clip, config).unwrap();
        let window = config.window();
        let phase = s.phase.as_ref().unwrap();
        for t in 0..s.n_frames() {
            let start = t * config.hop_size;
            let time_energy: f64 = (0..config.window_size)
                .map(|i| {
                    let v = clip.samples[start + i] * window[i];
                    v * v
                })
                .sum();
            // full-spectrum energy from the half spectrum
            let mut spec_energy = 0.0;
            for k in 0..s.n_bins() {
                let m2 = s.magnitude[[t, k]] * s.magnitude[[t, k]];
                let double = k != 0 && !(config.fft_size % 2 == 0 && k == config.fft_size / 2);
                spec_energy += if double { 2.0 * m2 } else { m2 };
            }
            spec_energy /= config.fft_size as f64;
            let _ = phase;
            assert!(
                (time_energy - spec_energy).abs() <= 1e-9 * time_energy.max(1e-30),
                "frame {t}: {time_energy} vs {spec_energy}"
            );
        }
    }

    #[test]
    fn griffin_lim_nonexpansive_from_true_phase() {
        let clip = sine(440.0, 16000, 8192);
        let s = stft(&clip, cfg()).unwrap();
        let d0 = {
            let x0 = griffin_lim(&s, 0, PhaseInit::Provided(s.phase.clone().unwrap())).unwrap();
            spectral_distance(&s.magnitude, &x0, cfg()).unwrap()
        };
        let x = griffin_lim(&s, 5, PhaseInit::Provided(s.phase.clone().unwrap())).unwrap();
        let d5 = spectral_distance(&s.magnitude, &x, cfg()).unwrap();
        assert!(d5 <= d0 + 1e-9, "d5 {d5} > d0 {d0}");
    }

    #[test]
    fn griffin_lim_converges_on_sine() {
        let clip = sine(440.0, 16000, 8192);
        let s = stft(&clip, cfg()).unwrap();
        let x = griffin_lim(&s, 60, PhaseInit::Random(0)).unwrap();
        let d = spectral_distance(&s.magnitude, &x, cfg()).unwrap();
        let norm: f64 = s.magnitude.iter().map(|m| m * m).sum::<f64>().sqrt();
        assert!(d / norm < 0.1, "spectral convergence {}", d / norm);
    }

    #[test]
    fn griffin_lim_monotone_spectral_distance() {
        let clip = white_noise(0, 16000, 8192);
        let s = stft(&clip, cfg()).unwrap();
        // use a magnitude that is NOT consistent (halved high bins) so the
        // iteration has real work to do
        let mut target = s.magnitude.clone();
        for t in 0..target.nrows() {
            for k in target.ncols() / 2..target.ncols() {
                target[[t, k]] *= 0.5;
            }
        }
        let shaped = Spectrogram {
            magnitude: target.clone(),
            phase: None,
            config: cfg(),
            sample_rate_hz: 16000,
        };
        let mut x = griffin_lim(&shaped, 0, PhaseInit::Random(1)).unwrap();
        let mut prev = spectral_distance(&target, &x, cfg()).unwrap();
        for i in 0..60 {
            x = {
                let analyzed = stft(&x, cfg()).unwrap();
                let p = analyzed.phase.unwrap();
                let withp = Spectrogram {
                    magnitude: target.clone(),
                    phase: Some(p),
                    config: cfg(),
                    sample_rate_hz: 16000,
                };
                istft(&withp).unwrap()
            };
            let d = spectral_distance(&target, &x, cfg()).unwrap();
            assert!(d <= prev + 1e-9, "iteration {i}: {d} > {prev}");
            prev = d;
        }
    }

    #[test]
    fn zero_iterations_zero_phase_equals_istft() {
        let clip = white_noise(2, 16000, 4096);
        let s = stft(&clip, cfg()).unwrap();
        let via_gl = griffin_lim(&s, 0, PhaseInit::Zero).unwrap();
        let zero_phase = Spectrogram {
            magnitude: s.magnitude.clone(),
            phase: Some(Array2::zeros(s.magnitude.dim())),
            config: cfg(),
            sample_rate_hz: 16000,
        };
        let direct = istft(&zero_phase).unwrap();
        assert_eq!(via_gl.samples, direct.samples);
    }
}
