//! The transfer engine: start from the content representation, descend the
//! style-only loss with adaptive-moment steps, return the stylized clip.
//! Also home to the finite-difference gradient checking harness.

use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio_io::AudioClip;
use crate::auditory::{extract_stats, stats_loss_grad, AuditoryConfig};
use crate::error::{Error, Result};
use crate::shallow::{forward, gram, style_loss_grad, ShallowConfig, ShallowNetParams};
use crate::spectral::{griffin_lim, stft, PhaseInit, Spectrogram, StftConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    Shallow,
    Auditory,
}

impl Model {
    pub fn default_step_size(self) -> f64 {
        match self {
            Model::Shallow => 0.02,
            Model::Auditory => 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TransferConfig {
    pub model: Model,
    pub max_iterations: usize,
    /// Defaults to [`Model::default_step_size`] when `None`.
    pub step_size: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    /// Stop when the relative loss decrease over `stop_window` iterations
    /// falls below this.
    pub stop_tolerance: f64,
    pub stop_window: usize,
    pub seed: u64,
    /// Iterations between progress callbacks; 0 disables them.
    pub log_every: usize,
    /// Relative amplitude of seeded Gaussian noise mixed into the auditory
    /// model's starting point, as a fraction of the content RMS. Tonal or
    /// sparse content leaves many cochlear bands silent; a silent band sits
    /// at a flat spot of the statistics loss, so the optimizer can never
    /// move energy into it. A small dither (1e-2 is -40 dB, inaudible in
    /// the result) keeps every band live. Zero disables it.
    pub init_dither: f64,
    pub stft: StftConfig,
    pub shallow: ShallowConfig,
    pub auditory: AuditoryConfig,
    /// Griffin-Lim iterations for shallow-mode waveform recovery.
    pub phase_iterations: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            model: Model::Shallow,
            max_iterations: 500,
            step_size: None,
            beta1: 0.9,
            beta2: 0.999,
            stop_tolerance: 1e-6,
            stop_window: 10,
            seed: 0,
            log_every: 0,
            init_dither: 0.0,
            stft: StftConfig::default(),
            shallow: ShallowConfig::default(),
            auditory: AuditoryConfig::default(),
            phase_iterations: 100,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
        }
        self.validate_synth()
    }

    /// Like [`validate`](Self::validate) but permits zero iterations
    /// (texture synthesis may just emit the seeded noise).
    pub fn validate_synth(&self) -> Result<()> {
        if self.step_size.is_some_and(|s| s <= 0.0) {
            return Err(Error::InvalidConfig("step size must be > 0".into()));
        }
        if self.stop_tolerance <= 0.0 {
            return Err(Error::InvalidConfig("stop tolerance must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfig("moment decays must be in [0, 1)".into()));
        }
        if !self.init_dither.is_finite() || self.init_dither < 0.0 {
            return Err(Error::InvalidConfig("init dither must be finite and >= 0".into()));
        }
        self.stft.validate()?;
        self.auditory.validate()
    }

    fn step(&self) -> f64 {
        self.step_size.unwrap_or(self.model.default_step_size())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIterations,
    Tolerance,
    UserAbort,
}

#[derive(Debug, Clone)]
pub struct TransferReport {
    /// `trace[0]` is the loss at initialization; one entry per iteration after.
    pub loss_trace: Vec<f64>,
    /// Elapsed milliseconds when each trace entry was recorded.
    pub wall_ms_trace: Vec<f64>,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub wall_time: Duration,
}

#[derive(Default)]
struct Trace {
    loss: Vec<f64>,
    wall_ms: Vec<f64>,
}

impl Trace {
    fn push(&mut self, loss: f64, t0: Instant) {
        self.loss.push(loss);
        self.wall_ms.push(t0.elapsed().as_secs_f64() * 1e3);
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    beta1: f64,
    beta2: f64,
    step_size: f64,
    t: u32,
}

impl Adam {
    fn new(len: usize, cfg: &TransferConfig) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            step_size: cfg.step(),
            t: 0,
        }
    }

    fn step(&mut self, x: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..x.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            x[i] -= self.step_size * mh / (vh.sqrt() + 1e-8);
        }
    }
}

/// Descent loop shared by both models. `f` evaluates loss and gradient at
/// the current point; `progress` receives `(iteration, loss)` at the
/// configured cadence.
fn descend<F>(
    x: &mut [f64],
    cfg: &TransferConfig,
    iterations: usize,
    mut f: F,
    progress: &mut dyn FnMut(usize, f64),
    abort: &mut dyn FnMut() -> bool,
) -> Result<(Trace, StopReason)>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let t0 = Instant::now();
    let mut adam = Adam::new(x.len(), cfg);
    let mut trace = Trace::default();
    let mut reason = StopReason::MaxIterations;
    let mut initial = f64::INFINITY;
    for it in 0..iterations {
        let (loss, grad) = f(x)?;
        check_loss(loss, it, initial)?;
        if it == 0 {
            initial = loss;
        }
        trace.push(loss, t0);
        if cfg.log_every > 0 && it % cfg.log_every == 0 {
            progress(it, loss);
        }
        if stop_by_tolerance(&trace.loss, cfg) {
            reason = StopReason::Tolerance;
            return Ok((trace, reason));
        }
        if abort() {
            reason = StopReason::UserAbort;
            return Ok((trace, reason));
        }
        adam.step(x, &grad);
    }
    let (final_loss, _) = f(x)?;
    check_loss(final_loss, iterations, initial)?;
    trace.push(final_loss, t0);
    Ok((trace, reason))
}

fn check_loss(loss: f64, iteration: usize, initial: f64) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { iteration });
    }
    if loss > 10.0 * initial {
        return Err(Error::Diverged {
            iteration,
            loss,
            initial,
        });
    }
    Ok(())
}

fn stop_by_tolerance(trace: &[f64], cfg: &TransferConfig) -> bool {
    let w = cfg.stop_window;
    if trace.len() <= w {
        return false;
    }
    let past = trace[trace.len() - 1 - w];
    let now = trace[trace.len() - 1];
    past - now < cfg.stop_tolerance * past.abs().max(f64::MIN_POSITIVE)
}

fn check_pair(content: &AudioClip, style: &AudioClip) -> Result<()> {
    if content.sample_rate_hz != style.sample_rate_hz {
        return Err(Error::RateMismatch {
            content: content.sample_rate_hz,
            style: style.sample_rate_hz,
        });
    }
    for clip in [content, style] {
        let min = (clip.sample_rate_hz as usize) / 2;
        if clip.len() < min {
            return Err(Error::ClipTooShort {
                len: clip.len(),
                min,
            });
        }
    }
    Ok(())
}

fn rescale_rms(samples: &mut [f64], target_rms: f64) {
    let n = samples.len() as f64;
    let rms = (samples.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
    if rms > 0.0 && target_rms > 0.0 {
        let s = target_rms / rms;
        for v in samples {
            *v *= s;
        }
    }
}

/// Log-magnitude representation the shallow model optimizes over.
fn log_mag(spec: &Spectrogram) -> Array2<f64> {
    spec.magnitude.mapv(|m| m.ln_1p())
}

/// Transfers the sound texture of `style` onto `content`.
///
/// Transferring a clip onto itself is a fixed point: the loss starts at
/// zero and the tolerance rule stops the run almost immediately.
///
/// ```
/// use audiostyle::audio_io::AudioClip;
/// use audiostyle::optimizer::{transfer, Model, StopReason, TransferConfig};
///
/// // any clip works; a cheap xorshift noise keeps the example self-contained
/// let mut s = 0x9e3779b97f4a7c15u64;
/// let noise: Vec<f64> = (0..8000)
///     .map(|_| {
///         s ^= s << 13;
///         s ^= s >> 7;
///         s ^= s << 17;
///         (s as f64 / u64::MAX as f64) - 0.5
///     })
///     .collect();
/// let x = AudioClip::new(noise, 16_000).unwrap();
/// let cfg = TransferConfig {
///     model: Model::Auditory,
///     max_iterations: 20,
///     ..Default::default()
/// };
/// let (out, report) = transfer(&x, &x, &cfg).unwrap();
/// assert!(report.loss_trace[0] < 1e-12);
/// assert_eq!(report.stop_reason, StopReason::Tolerance);
/// assert_eq!(out.samples.len(), x.samples.len());
/// ```
pub fn transfer(
    content: &AudioClip,
    style: &AudioClip,
    cfg: &TransferConfig,
) -> Result<(AudioClip, TransferReport)> {
    transfer_with(content, style, cfg, &mut |_, _| {}, &mut || false)
}

/// [`transfer`] with a progress callback (`iteration`, `loss`) and an abort
/// poll checked once per iteration.
pub fn transfer_with(
    content: &AudioClip,
    style: &AudioClip,
    cfg: &TransferConfig,
    progress: &mut dyn FnMut(usize, f64),
    abort: &mut dyn FnMut() -> bool,
) -> Result<(AudioClip, TransferReport)> {
    cfg.validate()?;
    check_pair(content, style)?;
    let start = Instant::now();
    let (mut out, trace, reason) = match cfg.model {
        Model::Shallow => shallow_transfer(content, style, cfg, cfg.max_iterations, progress, abort)?,
        Model::Auditory => {
            let target = extract_stats(style, &cfg.auditory)?;
            let mut init = content.samples.clone();
            if cfg.init_dither > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                let amp = cfg.init_dither * content.rms();
                for v in &mut init {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    *v += amp * g;
                }
            }
            auditory_descent(init, content.sample_rate_hz, &target, cfg, cfg.max_iterations, progress, abort)?
        }
    };
    rescale_rms(&mut out.samples, content.rms());
    let report = TransferReport {
        iterations: trace.loss.len().saturating_sub(1),
        loss_trace: trace.loss,
        wall_ms_trace: trace.wall_ms,
        stop_reason: reason,
        wall_time: start.elapsed(),
    };
    Ok((out, report))
}

/// Mirrors `pad` samples around each end (`x[-i] = x[i]`).
fn reflect_pad(samples: &[f64], pad: usize) -> Vec<f64> {
    let n = samples.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        out.push(samples[i.min(n - 1)]);
    }
    out.extend_from_slice(samples);
    for i in (1..=pad).rev() {
        out.push(samples[n - 1 - i.min(n - 1)]);
    }
    out
}

fn shallow_transfer(
    content: &AudioClip,
    style: &AudioClip,
    cfg: &TransferConfig,
    iterations: usize,
    progress: &mut dyn FnMut(usize, f64),
    abort: &mut dyn FnMut() -> bool,
) -> Result<(AudioClip, Trace, StopReason)> {
    // reflect-pad by one window so the partially covered overlap-add edges,
    // where Griffin-Lim's inconsistent magnitudes blow up under the window
    // normalization, land in a margin that is trimmed away afterwards
    let pad = cfg.stft.window_size;
    let orig_len = content.len();
    let content = AudioClip::new(reflect_pad(&content.samples, pad), content.sample_rate_hz)?;
    let content = &content;
    let content_spec = stft(content, cfg.stft)?;
    let style = AudioClip::new(reflect_pad(&style.samples, pad), style.sample_rate_hz)?;
    let style_spec = stft(&style, cfg.stft)?;
    let mut shallow_cfg = cfg.shallow;
    shallow_cfg.seed = cfg.seed;
    let params = ShallowNetParams::new(shallow_cfg, cfg.stft.n_bins())?;
    let target = gram(&forward(&log_mag(&style_spec).view(), &params)?);

    let z0 = log_mag(&content_spec);
    let (n_frames, n_bins) = z0.dim();
    let mut z = z0.into_raw_vec_and_offset().0;
    let (trace, reason) = descend(
        &mut z,
        cfg,
        iterations,
        |zf| {
            let view = ndarray::ArrayView2::from_shape((n_frames, n_bins), zf)
                .expect("descent preserves the variable length");
            let (loss, g) = style_loss_grad(&view, &target, &params)?;
            Ok((loss, g.into_raw_vec_and_offset().0))
        },
        progress,
        abort,
    )?;

    // back to a waveform: exp-map the optimized log-magnitudes, recover
    // phase starting from the content's
    let magnitude =
        Array2::from_shape_vec((n_frames, n_bins), z.iter().map(|v| v.max(0.0).exp_m1()).collect())
            .expect("shape preserved");
    let result_spec = Spectrogram {
        magnitude,
        phase: None,
        config: cfg.stft,
        sample_rate_hz: content.sample_rate_hz,
    };
    let phase = content_spec.phase.clone().expect("stft always yields phase");
    let mut wave = griffin_lim(&result_spec, cfg.phase_iterations, PhaseInit::Provided(phase))?;
    // istft covers only whole frames; the dropped tail and the trimmed
    // margins both fit inside the reflection pad
    if wave.samples.len() < pad + orig_len {
        wave.samples.resize(pad + orig_len, 0.0);
    }
    let samples = wave.samples[pad..pad + orig_len].to_vec();
    Ok((AudioClip::new(samples, wave.sample_rate_hz)?, trace, reason))
}

fn auditory_descent(
    init: Vec<f64>,
    sample_rate_hz: u32,
    target: &crate::auditory::AuditoryStats,
    cfg: &TransferConfig,
    iterations: usize,
    progress: &mut dyn FnMut(usize, f64),
    abort: &mut dyn FnMut() -> bool,
) -> Result<(AudioClip, Trace, StopReason)> {
    let mut x = init;
    let (trace, reason) = descend(
        &mut x,
        cfg,
        iterations,
        |xs| {
            let clip = AudioClip::new(xs.to_vec(), sample_rate_hz)?;
            let (loss, g) = stats_loss_grad(&clip, target, &cfg.auditory)?;
            Ok((loss, g))
        },
        progress,
        abort,
    )?;
    Ok((AudioClip::new(x, sample_rate_hz)?, trace, reason))
}

/// Classic texture synthesis: the style statistics are matched starting
/// from seeded noise instead of a content clip. Zero iterations returns the
/// noise itself (loss trace then holds just the initial loss).
pub fn synth_texture(
    style: &AudioClip,
    cfg: &TransferConfig,
    progress: &mut dyn FnMut(usize, f64),
    abort: &mut dyn FnMut() -> bool,
) -> Result<(AudioClip, TransferReport)> {
    cfg.validate_synth()?;
    check_pair(style, style)?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let style_rms = style.rms();
    let noise: Vec<f64> = (0..style.len())
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g * style_rms
        })
        .collect();
    let noise_clip = AudioClip::new(noise.clone(), style.sample_rate_hz)?;
    let (mut out, trace, reason) = if cfg.max_iterations == 0 {
        let loss = initial_loss(&noise_clip, style, cfg)?;
        let trace = Trace {
            loss: vec![loss],
            wall_ms: vec![start.elapsed().as_secs_f64() * 1e3],
        };
        (noise_clip, trace, StopReason::MaxIterations)
    } else {
        match cfg.model {
            Model::Auditory => {
                let target = extract_stats(style, &cfg.auditory)?;
                auditory_descent(noise, style.sample_rate_hz, &target, cfg, cfg.max_iterations, progress, abort)?
            }
            Model::Shallow => shallow_transfer(&noise_clip, style, cfg, cfg.max_iterations, progress, abort)?,
        }
    };
    if cfg.max_iterations > 0 {
        rescale_rms(&mut out.samples, style_rms);
    }
    let report = TransferReport {
        iterations: trace.loss.len().saturating_sub(1),
        loss_trace: trace.loss,
        wall_ms_trace: trace.wall_ms,
        stop_reason: reason,
        wall_time: start.elapsed(),
    };
    Ok((out, report))
}

/// Style loss of `x` against `style` under the configured model, without
/// taking any step.
fn initial_loss(x: &AudioClip, style: &AudioClip, cfg: &TransferConfig) -> Result<f64> {
    match cfg.model {
        Model::Auditory => {
            let target = extract_stats(style, &cfg.auditory)?;
            crate::auditory::stats_loss(x, &target, &cfg.auditory)
        }
        Model::Shallow => {
            let mut shallow_cfg = cfg.shallow;
            shallow_cfg.seed = cfg.seed;
            let params = ShallowNetParams::new(shallow_cfg, cfg.stft.n_bins())?;
            let target = gram(&forward(&log_mag(&stft(style, cfg.stft)?).view(), &params)?);
            crate::shallow::style_loss(&log_mag(&stft(x, cfg.stft)?).view(), &target, &params)
        }
    }
}

/// Compares an analytic gradient against seeded central finite differences
/// on `n_coords` random coordinates; returns the worst relative error with
/// denominator `max(|analytic|, |numeric|, 1e-12)`.
/// Compares an analytic gradient against central finite differences at
/// `n_coords` seeded coordinates of `point`, returning the worst relative
/// error (denominator `max(|analytic|, |numeric|, 1e-12)`).
///
/// ```
/// use audiostyle::optimizer::grad_check;
///
/// let point = vec![1.5, -2.0, 0.75];
/// let value = |x: &[f64]| Ok(x.iter().map(|v| v * v).sum::<f64>());
/// let analytic: Vec<f64> = point.iter().map(|v| 2.0 * v).collect();
/// let max_rel = grad_check(value, &analytic, &point, 3, 0.5, 7).unwrap();
/// // central differences are exact on quadratics at any step
/// assert!(max_rel < 1e-12);
/// ```
pub fn grad_check<F>(
    mut value: F,
    analytic: &[f64],
    point: &[f64],
    n_coords: usize,
    h: f64,
    seed: u64,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if h <= 0.0 {
        return Err(Error::InvalidConfig("step h must be > 0".into()));
    }
    if analytic.len() != point.len() {
        return Err(Error::ShapeMismatch(format!(
            "gradient length {} vs point length {}",
            analytic.len(),
            point.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = point.to_vec();
    let mut worst = 0.0f64;
    for _ in 0..n_coords {
        let i = rng.gen_range(0..point.len());
        buf[i] = point[i] + h;
        let fp = value(&buf)?;
        buf[i] = point[i] - h;
        let fm = value(&buf)?;
        buf[i] = point[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: 0 });
        }
        let numeric = (fp - fm) / (2.0 * h);
        let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}
