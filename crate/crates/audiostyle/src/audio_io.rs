//! WAV decoding/encoding and sample-rate conversion.
//!
//! All audio is held as mono 64-bit float in [`AudioClip`]. Stereo input is
//! averaged down to mono on load; integer PCM is scaled to [-1, 1) by the
//! full-scale code.

use std::path::Path;

use crate::error::{Error, Result};

/// A mono waveform with its sample rate.
///
/// ```
/// use audiostyle::audio_io::AudioClip;
/// let clip = AudioClip::new(vec![0.0, 0.5, -0.5], 16_000).unwrap();
/// assert_eq!(clip.duration_secs(), 3.0 / 16_000.0);
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyClip);
        }
        if sample_rate_hz == 0 {
            return Err(Error::InvalidConfig("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFiniteSample(i));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn rms(&self) -> f64 {
        let sum_sq: f64 = self.samples.iter().map(|s| s * s).sum();
        (sum_sq / self.samples.len() as f64).sqrt()
    }
}

/// Output sample format for [`save_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Pcm16,
    Float32,
}

/// Reads a RIFF/WAVE file (PCM 16/24-bit or IEEE float 32-bit, mono or
/// stereo). Stereo is mixed to mono by channel averaging.
pub fn load_wav(path: &Path) -> Result<AudioClip> {
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(source) => Error::Read {
            path: path.to_path_buf(),
            source,
        },
        other => Error::BadWav {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    let spec = reader.spec();
    if spec.channels == 0 || spec.channels > 2 {
        return Err(Error::UnsupportedChannels(spec.channels));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => decode_int(reader, path, 1 << 15)?,
        (hound::SampleFormat::Int, 24) => decode_int(reader, path, 1 << 23)?,
        (hound::SampleFormat::Float, 32) => {
            let mut out = Vec::new();
            for s in reader.into_samples::<f32>() {
                let v = s.map_err(|e| Error::BadWav {
                    path: path.to_path_buf(),
                    reason: e.to_string(),
                })?;
                out.push(v as f64);
            }
            out
        }
        (_, bits) => return Err(Error::UnsupportedBitDepth(bits)),
    };
    if interleaved.is_empty() {
        return Err(Error::BadWav {
            path: path.to_path_buf(),
            reason: "zero-length data chunk".into(),
        });
    }
    let mono = if spec.channels == 2 {
        interleaved
            .chunks_exact(2)
            .map(|fr| 0.5 * (fr[0] + fr[1]))
            .collect()
    } else {
        interleaved
    };
    AudioClip::new(mono, spec.sample_rate)
}

fn decode_int(
    reader: hound::WavReader<std::io::BufReader<std::fs::File>>,
    path: &Path,
    full_scale: i32,
) -> Result<Vec<f64>> {
    let scale = 1.0 / full_scale as f64;
    let mut out = Vec::new();
    for s in reader.into_samples::<i32>() {
        let v = s.map_err(|e| Error::BadWav {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        out.push(v as f64 * scale);
    }
    Ok(out)
}

/// Writes a clip as 16-bit PCM (clamped and rounded) or 32-bit float
/// (downcast, otherwise verbatim).
pub fn save_wav(clip: &AudioClip, path: &Path, depth: BitDepth) -> Result<()> {
    if clip.samples.is_empty() {
        return Err(Error::EmptyClip);
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate_hz,
        bits_per_sample: match depth {
            BitDepth::Pcm16 => 16,
            BitDepth::Float32 => 32,
        },
        sample_format: match depth {
            BitDepth::Pcm16 => hound::SampleFormat::Int,
            BitDepth::Float32 => hound::SampleFormat::Float,
        },
    };
    let to_io = |e: hound::Error| match e {
        hound::Error::IoError(source) => Error::Write {
            path: path.to_path_buf(),
            source,
        },
        other => Error::BadWav {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_io)?;
    match depth {
        BitDepth::Pcm16 => {
            let max = 1.0 - (-15f64).exp2();
            for &s in &clip.samples {
                let clamped = s.clamp(-1.0, max);
                let code = (clamped * 32768.0).round() as i32;
                writer
                    .write_sample(code.clamp(-32768, 32767) as i16)
                    .map_err(to_io)?;
            }
        }
        BitDepth::Float32 => {
            for &s in &clip.samples {
                writer.write_sample(s as f32).map_err(to_io)?;
            }
        }
    }
    writer.finalize().map_err(to_io)
}

// Kaiser window shape parameter; ~90 dB stopband.
const KAISER_BETA: f64 = 12.0;
const SINC_HALF_WIDTH: f64 = 32.0;

fn bessel_i0(x: f64) -> f64 {
    // power series, converges quickly for the argument range used here
    let mut term = 1.0;
    let mut sum = 1.0;
    let half_x_sq = 0.25 * x * x;
    for k in 1..64 {
        term *= half_x_sq / ((k * k) as f64);
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Windowed-sinc sample-rate conversion.
///
/// Output length is `round(len * target / source)`; a Kaiser-windowed sinc
/// kernel is evaluated directly at each fractional output position, with
/// cutoff at the lower of the two Nyquist frequencies.
pub fn resample(clip: &AudioClip, target_rate_hz: u32) -> Result<AudioClip> {
    if target_rate_hz == 0 {
        return Err(Error::InvalidConfig("target rate must be positive".into()));
    }
    if target_rate_hz == clip.sample_rate_hz {
        return Ok(clip.clone());
    }
    let src = clip.sample_rate_hz as f64;
    let dst = target_rate_hz as f64;
    let out_len = ((clip.len() as f64) * dst / src).round() as usize;
    let out_len = out_len.max(1);
    // cutoff in cycles per input sample, relative to input Nyquist
    let cutoff = (dst / src).min(1.0);
    let half_width = SINC_HALF_WIDTH / cutoff;
    let i0_beta = bessel_i0(KAISER_BETA);
    let x = &clip.samples;
    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len {
        let center = m as f64 * src / dst;
        let n_lo = ((center - half_width).ceil() as isize).max(0) as usize;
        let n_hi = ((center + half_width).floor() as isize).min(x.len() as isize - 1) as usize;
        let mut acc = 0.0;
        for n in n_lo..=n_hi {
            let u = center - n as f64;
            let frac = u / half_width;
            let win = bessel_i0(KAISER_BETA * (1.0 - frac * frac).max(0.0).sqrt()) / i0_beta;
            acc += x[n] * cutoff * sinc(cutoff * u) * win;
        }
        out.push(acc);
    }
    AudioClip::new(out, target_rate_hz)
}
