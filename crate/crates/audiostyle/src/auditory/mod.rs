//! Auditory texture model: cochlear filterbank, envelope extraction with
//! compressive nonlinearity, modulation filterbank, the statistics set, the
//! statistics-matching loss, and its analytic gradient with respect to the
//! waveform.
//!
//! All filtering is circular and zero-phase (FFT-based), so every linear
//! stage of the backward pass is either self-adjoint or has the explicit
//! adjoint provided by [`crate::dsp`].

pub mod filterbank;

use crate::audio_io::AudioClip;
use crate::dsp::{apply_analytic_mask, apply_real_response, C64, FftCtx};
use crate::error::{Error, Result};
use filterbank::{cochlear_filterbank, modulation_filterbank, Filterbank};

/// Guard below which the envelope magnitude is treated as zero when forming
/// gradients (|a| appears in a denominator).
const ENV_GUARD: f64 = 1e-9;
/// Added to squared-norm denominators in the per-class loss normalization.
const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeConfig {
    /// Power-law exponent applied to the analytic-signal magnitude.
    pub compression_exponent: f64,
    /// Rate the compressed envelope is downsampled to before modulation
    /// analysis. Moment and correlation statistics stay at the full rate.
    pub downsample_rate_hz: f64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self {
            compression_exponent: 0.3,
            downsample_rate_hz: 400.0,
        }
    }
}

/// Per-statistic-class loss weights (each class is already normalized by its
/// target norm, so these default to 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StatWeights {
    pub cochlear_variance: f64,
    pub env_mean: f64,
    pub env_variance: f64,
    pub env_skewness: f64,
    pub env_correlation: f64,
    pub mod_power: f64,
    pub mod_correlation: f64,
}

impl Default for StatWeights {
    fn default() -> Self {
        Self {
            cochlear_variance: 1.0,
            env_mean: 1.0,
            env_variance: 1.0,
            env_skewness: 1.0,
            env_correlation: 1.0,
            mod_power: 1.0,
            mod_correlation: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditoryConfig {
    pub n_cochlear_bands: usize,
    pub cochlear_lo_hz: f64,
    pub n_modulation_bands: usize,
    pub mod_lo_hz: f64,
    pub envelope: EnvelopeConfig,
    /// Neighbor offsets for envelope cross-band correlations.
    pub corr_offsets: Vec<usize>,
    /// Also match correlations between same-modulation-band outputs of
    /// cochlear-adjacent bands.
    pub include_mod_correlation: bool,
    pub mod_corr_offsets: Vec<usize>,
    pub weights: StatWeights,
}

impl Default for AuditoryConfig {
    fn default() -> Self {
        Self {
            n_cochlear_bands: 30,
            cochlear_lo_hz: 20.0,
            n_modulation_bands: 20,
            mod_lo_hz: 0.5,
            envelope: EnvelopeConfig::default(),
            corr_offsets: vec![1, 2, 3, 5],
            include_mod_correlation: false,
            mod_corr_offsets: vec![1, 2],
            weights: StatWeights::default(),
        }
    }
}

impl AuditoryConfig {
    /// 4-cochlear-band, 4-modulation-band variant for gradient checking.
    pub fn reduced() -> Self {
        Self {
            n_cochlear_bands: 4,
            n_modulation_bands: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.envelope;
        if !(e.compression_exponent > 0.0 && e.compression_exponent <= 1.0) {
            return Err(Error::InvalidConfig(
                "compression exponent must be in (0, 1]".into(),
            ));
        }
        if self.n_cochlear_bands == 0 || self.n_modulation_bands < 2 {
            return Err(Error::InvalidConfig("too few filterbank bands".into()));
        }
        // top modulation center sits at half the envelope rate, which keeps
        // the downsample rate Nyquist-consistent by construction
        if e.downsample_rate_hz < 4.0 * self.mod_lo_hz {
            return Err(Error::InvalidConfig("envelope rate too low".into()));
        }
        Ok(())
    }

    fn corr_pairs(&self) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for &o in &self.corr_offsets {
            for i in 0..self.n_cochlear_bands.saturating_sub(o) {
                pairs.push((i, i + o));
            }
        }
        pairs
    }

    fn mod_corr_pairs(&self) -> Vec<(usize, usize)> {
        if !self.include_mod_correlation {
            return Vec::new();
        }
        let mut pairs = Vec::new();
        for &o in &self.mod_corr_offsets {
            for i in 0..self.n_cochlear_bands.saturating_sub(o) {
                pairs.push((i, i + o));
            }
        }
        pairs
    }

    /// Total number of scalar statistics produced by [`extract_stats`].
    ///
    /// ```
    /// use audiostyle::auditory::AuditoryConfig;
    /// assert_eq!(AuditoryConfig::default().stat_count(), 829);
    /// ```
    pub fn stat_count(&self) -> usize {
        let nb = self.n_cochlear_bands;
        nb + 3 * nb
            + self.corr_pairs().len()
            + nb * self.n_modulation_bands
            + self.mod_corr_pairs().len() * self.n_modulation_bands
    }
}

/// The statistic vector: one entry per scalar the loss matches.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditoryStats {
    pub cochlear_variance: Vec<f64>,
    pub env_mean: Vec<f64>,
    pub env_variance: Vec<f64>,
    pub env_skewness: Vec<f64>,
    /// Ordered by offset, then lower band index.
    pub env_correlation: Vec<f64>,
    /// `[cochlear band][modulation band]`.
    pub mod_power: Vec<Vec<f64>>,
    /// Empty unless `include_mod_correlation`; ordered by offset, lower band,
    /// modulation band.
    pub mod_correlation: Vec<f64>,
}

impl AuditoryStats {
    pub fn flat_len(&self) -> usize {
        self.cochlear_variance.len()
            + self.env_mean.len()
            + self.env_variance.len()
            + self.env_skewness.len()
            + self.env_correlation.len()
            + self.mod_power.iter().map(Vec::len).sum::<usize>()
            + self.mod_correlation.len()
    }

    /// Class name and flattened values, in canonical order.
    pub fn classes(&self) -> Vec<(&'static str, Vec<f64>)> {
        let mut out = vec![
            ("cochlear_variance", self.cochlear_variance.clone()),
            ("env_mean", self.env_mean.clone()),
            ("env_variance", self.env_variance.clone()),
            ("env_skewness", self.env_skewness.clone()),
            ("env_correlation", self.env_correlation.clone()),
            (
                "mod_power",
                self.mod_power.iter().flatten().copied().collect(),
            ),
        ];
        if !self.mod_correlation.is_empty() {
            out.push(("mod_correlation", self.mod_correlation.clone()));
        }
        out
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn central_moments(v: &[f64]) -> (f64, f64, f64) {
    let mu = mean(v);
    let m = v.len() as f64;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    for &x in v {
        let d = x - mu;
        m2 += d * d;
        m3 += d * d * d;
    }
    (mu, m2 / m, m3 / m)
}

fn skewness(m2: f64, m3: f64) -> f64 {
    m3 / (m2 * m2.sqrt() + NORM_EPS)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (mu_a, va, _) = central_moments(a);
    let (mu_b, vb, _) = central_moments(b);
    let m = a.len() as f64;
    let mut cov = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - mu_a) * (y - mu_b);
    }
    cov / m / (va.sqrt() * vb.sqrt() + NORM_EPS)
}

/// Adds `coef * d(pearson)/d(a)` to `g_a` (symmetric in the two arguments;
/// call twice with roles swapped for the full gradient).
fn pearson_grad_into(coef: f64, a: &[f64], b: &[f64], g_a: &mut [f64]) {
    let (mu_a, va, _) = central_moments(a);
    let (mu_b, vb, _) = central_moments(b);
    let sa = va.sqrt();
    let sb = vb.sqrt();
    if sa <= 0.0 {
        return;
    }
    let m = a.len() as f64;
    let mut cov = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - mu_a) * (y - mu_b);
    }
    cov /= m;
    let den = sa * sb + NORM_EPS;
    for i in 0..a.len() {
        let dcov = (b[i] - mu_b) / m;
        let dsa = (a[i] - mu_a) / (m * sa);
        g_a[i] += coef * (dcov * den - cov * sb * dsa) / (den * den);
    }
}

/// Everything the backward pass needs about one cochlear band.
struct BandState {
    analytic: Vec<C64>,
    env: Vec<f64>,
    /// Compressed envelope at the full rate; moment and correlation
    /// statistics are taken here so they are exact time-averages.
    compressed: Vec<f64>,
    c_mean: f64,
    c_var: f64,
    c_m3: f64,
    /// Compressed envelope at the envelope rate, input to modulation analysis.
    down: Vec<f64>,
    d_mean: f64,
    d_var: f64,
    /// `[modulation band][env sample]`
    mod_filtered: Vec<Vec<f64>>,
    /// Mean square of each filtered envelope (before variance normalization).
    mod_q: Vec<f64>,
}

/// Relative floor below which an envelope variance counts as zero.
fn variance_is_zero(var: f64, samples: &[f64]) -> bool {
    let msq = samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64;
    var <= 1e-24 * msq
}

struct Pipeline {
    cfg: AuditoryConfig,
    n: usize,
    m: usize,
    cochlear: Filterbank,
    modulation: Filterbank,
}

impl Pipeline {
    fn new(cfg: &AuditoryConfig, n: usize, sample_rate_hz: f64) -> Result<Self> {
        cfg.validate()?;
        let m = ((n as f64) * cfg.envelope.downsample_rate_hz / sample_rate_hz).round() as usize;
        if m < 64 {
            return Err(Error::ClipTooShort {
                len: n,
                min: (64.0 * sample_rate_hz / cfg.envelope.downsample_rate_hz).ceil() as usize,
            });
        }
        let cochlear = cochlear_filterbank(cfg.n_cochlear_bands, cfg.cochlear_lo_hz, sample_rate_hz, n)?;
        let modulation = modulation_filterbank(
            cfg.n_modulation_bands,
            cfg.mod_lo_hz,
            cfg.envelope.downsample_rate_hz,
            m,
        )?;
        Ok(Self {
            cfg: cfg.clone(),
            n,
            m,
            cochlear,
            modulation,
        })
    }

    fn forward_band(&self, spectrum: &[C64], band: usize, ctx: &mut FftCtx) -> BandState {
        let mut spec = spectrum.to_vec();
        apply_real_response(&mut spec, &self.cochlear.responses[band]);
        apply_analytic_mask(&mut spec);
        ctx.inverse(&mut spec);
        let analytic = spec;
        let env: Vec<f64> = analytic.iter().map(|c| c.norm()).collect();
        let p = self.cfg.envelope.compression_exponent;
        let compressed: Vec<f64> = env.iter().map(|&e| e.powf(p)).collect();
        let (c_mean, c_var, c_m3) = central_moments(&compressed);
        let down = ctx.resample_truncate(&compressed, self.m);
        let (d_mean, d_var, _) = central_moments(&down);
        let dspec = ctx.spectrum_of_real(&down);
        let mut mod_filtered = Vec::with_capacity(self.cfg.n_modulation_bands);
        let mut mod_q = Vec::with_capacity(self.cfg.n_modulation_bands);
        for j in 0..self.cfg.n_modulation_bands {
            let mut buf = dspec.clone();
            apply_real_response(&mut buf, &self.modulation.responses[j]);
            let y = ctx.real_inverse(buf);
            let q = y.iter().map(|v| v * v).sum::<f64>() / self.m as f64;
            mod_filtered.push(y);
            mod_q.push(q);
        }
        BandState {
            analytic,
            env,
            compressed,
            c_mean,
            c_var,
            c_m3,
            down,
            d_mean,
            d_var,
            mod_filtered,
            mod_q,
        }
    }

    fn forward(&self, x: &[f64], ctx: &mut FftCtx) -> (Vec<BandState>, AuditoryStats) {
        let spectrum = ctx.spectrum_of_real(x);
        let bands: Vec<BandState> = (0..self.cfg.n_cochlear_bands)
            .map(|b| self.forward_band(&spectrum, b, ctx))
            .collect();
        let cochlear_variance = bands
            .iter()
            .map(|bs| {
                let s: Vec<f64> = bs.analytic.iter().map(|c| c.re).collect();
                central_moments(&s).1
            })
            .collect();
        let env_mean: Vec<f64> = bands.iter().map(|b| b.c_mean).collect();
        let env_variance: Vec<f64> = bands.iter().map(|b| b.c_var).collect();
        let env_skewness: Vec<f64> = bands.iter().map(|b| skewness(b.c_var, b.c_m3)).collect();
        let env_correlation: Vec<f64> = self
            .cfg
            .corr_pairs()
            .iter()
            .map(|&(i, j)| pearson(&bands[i].compressed, &bands[j].compressed))
            .collect();
        let mod_power: Vec<Vec<f64>> = bands
            .iter()
            .map(|b| {
                let zero = variance_is_zero(b.d_var, &b.down);
                b.mod_q
                    .iter()
                    .map(|&q| if zero { 0.0 } else { q / b.d_var })
                    .collect()
            })
            .collect();
        let mut mod_correlation = Vec::new();
        for (i, j) in self.cfg.mod_corr_pairs() {
            for jm in 0..self.cfg.n_modulation_bands {
                mod_correlation.push(pearson(&bands[i].mod_filtered[jm], &bands[j].mod_filtered[jm]));
            }
        }
        let stats = AuditoryStats {
            cochlear_variance,
            env_mean,
            env_variance,
            env_skewness,
            env_correlation,
            mod_power,
            mod_correlation,
        };
        (bands, stats)
    }
}

/// Splits the waveform into zero-phase cochlear subbands,
/// `[n_bands][clip len]`. Twice-filtered subbands sum back to the input over
/// the tiled passband.
pub fn cochlear_decompose(clip: &AudioClip, fb: &Filterbank) -> Result<Vec<Vec<f64>>> {
    if clip.len() < 2048 {
        return Err(Error::ClipTooShort {
            len: clip.len(),
            min: 2048,
        });
    }
    if fb.n_fft != clip.len() {
        return Err(Error::ShapeMismatch(format!(
            "filterbank built for length {}, clip has {}",
            fb.n_fft,
            clip.len()
        )));
    }
    let mut ctx = FftCtx::new();
    let spectrum = ctx.spectrum_of_real(&clip.samples);
    Ok(fb
        .responses
        .iter()
        .map(|h| {
            let mut spec = spectrum.clone();
            apply_real_response(&mut spec, h);
            ctx.real_inverse(spec)
        })
        .collect())
}

/// Compressed envelope of one subband at the envelope rate: analytic-signal
/// magnitude, power-law compression, ideal-lowpass downsampling.
pub fn envelope(subband: &[f64], cfg: &EnvelopeConfig, sample_rate_hz: f64) -> Vec<f64> {
    let mut ctx = FftCtx::new();
    let a = ctx.analytic(subband);
    let compressed: Vec<f64> = a
        .iter()
        .map(|c| c.norm().powf(cfg.compression_exponent))
        .collect();
    let m = ((subband.len() as f64) * cfg.downsample_rate_hz / sample_rate_hz).round() as usize;
    ctx.resample_truncate(&compressed, m.max(2))
}

/// Power in each modulation band of an envelope, normalized by the envelope
/// variance so the statistic is amplitude-independent.
pub fn modulation_power(env: &[f64], fb: &Filterbank) -> Result<Vec<f64>> {
    if env.len() < 64 {
        return Err(Error::ClipTooShort {
            len: env.len(),
            min: 64,
        });
    }
    if fb.n_fft != env.len() {
        return Err(Error::ShapeMismatch(format!(
            "modulation filterbank built for length {}, envelope has {}",
            fb.n_fft,
            env.len()
        )));
    }
    let (_, var, _) = central_moments(env);
    if variance_is_zero(var, env) {
        return Err(Error::ZeroVarianceEnvelope { band: 0 });
    }
    let mut ctx = FftCtx::new();
    let spec = ctx.spectrum_of_real(env);
    Ok(fb
        .responses
        .iter()
        .map(|h| {
            let mut buf = spec.clone();
            apply_real_response(&mut buf, h);
            let y = ctx.real_inverse(buf);
            y.iter().map(|v| v * v).sum::<f64>() / env.len() as f64 / var
        })
        .collect())
}

fn check_duration(clip: &AudioClip) -> Result<()> {
    let min = (clip.sample_rate_hz as usize) / 2;
    if clip.len() < min {
        return Err(Error::ClipTooShort {
            len: clip.len(),
            min,
        });
    }
    Ok(())
}

/// Computes the full statistic vector of a clip.
pub fn extract_stats(clip: &AudioClip, cfg: &AuditoryConfig) -> Result<AuditoryStats> {
    check_duration(clip)?;
    let pipeline = Pipeline::new(cfg, clip.len(), clip.sample_rate_hz as f64)?;
    let mut ctx = FftCtx::new();
    let (_, stats) = pipeline.forward(&clip.samples, &mut ctx);
    Ok(stats)
}

fn check_target(cfg: &AuditoryConfig, target: &AuditoryStats) -> Result<()> {
    if target.cochlear_variance.len() != cfg.n_cochlear_bands
        || target.env_correlation.len() != cfg.corr_pairs().len()
        || target.mod_power.len() != cfg.n_cochlear_bands
        || target
            .mod_power
            .first()
            .is_some_and(|row| row.len() != cfg.n_modulation_bands)
        || target.mod_correlation.len() != cfg.mod_corr_pairs().len() * cfg.n_modulation_bands
    {
        return Err(Error::ShapeMismatch(
            "target statistics do not match the model config".into(),
        ));
    }
    Ok(())
}

fn class_loss(weight: f64, value: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let denom = target.iter().map(|t| t * t).sum::<f64>() + NORM_EPS;
    let mut loss = 0.0;
    let mut coef = Vec::with_capacity(value.len());
    for (v, t) in value.iter().zip(target) {
        let d = v - t;
        loss += d * d;
        coef.push(2.0 * weight * d / denom);
    }
    (weight * loss / denom, coef)
}

/// Statistics-matching loss, without the gradient.
pub fn stats_loss(clip: &AudioClip, target: &AuditoryStats, cfg: &AuditoryConfig) -> Result<f64> {
    Ok(loss_and_maybe_grad(clip, target, cfg, false)?.0)
}

/// Loss and its exact gradient with respect to every waveform sample.
pub fn stats_loss_grad(
    clip: &AudioClip,
    target: &AuditoryStats,
    cfg: &AuditoryConfig,
) -> Result<(f64, Vec<f64>)> {
    let (loss, grad) = loss_and_maybe_grad(clip, target, cfg, true)?;
    Ok((loss, grad.expect("gradient requested")))
}

fn loss_and_maybe_grad(
    clip: &AudioClip,
    target: &AuditoryStats,
    cfg: &AuditoryConfig,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    check_duration(clip)?;
    check_target(cfg, target)?;
    let pipeline = Pipeline::new(cfg, clip.len(), clip.sample_rate_hz as f64)?;
    let mut ctx = FftCtx::new();
    let (bands, stats) = pipeline.forward(&clip.samples, &mut ctx);
    let w = &cfg.weights;

    let mut total = 0.0;
    let (l, coef_cv) = class_loss(w.cochlear_variance, &stats.cochlear_variance, &target.cochlear_variance);
    total += l;
    let (l, coef_em) = class_loss(w.env_mean, &stats.env_mean, &target.env_mean);
    total += l;
    let (l, coef_ev) = class_loss(w.env_variance, &stats.env_variance, &target.env_variance);
    total += l;
    let (l, coef_es) = class_loss(w.env_skewness, &stats.env_skewness, &target.env_skewness);
    total += l;
    let (l, coef_ec) = class_loss(w.env_correlation, &stats.env_correlation, &target.env_correlation);
    total += l;
    let flat_mp: Vec<f64> = stats.mod_power.iter().flatten().copied().collect();
    let flat_mp_t: Vec<f64> = target.mod_power.iter().flatten().copied().collect();
    let (l, coef_mp) = class_loss(w.mod_power, &flat_mp, &flat_mp_t);
    total += l;
    let coef_mc = if cfg.include_mod_correlation {
        let (l, c) = class_loss(w.mod_correlation, &stats.mod_correlation, &target.mod_correlation);
        total += l;
        c
    } else {
        Vec::new()
    };
    if !want_grad {
        return Ok((total, None));
    }

    let n = pipeline.n;
    let m = pipeline.m;
    let mf = m as f64;
    let nb = cfg.n_cochlear_bands;
    let nm = cfg.n_modulation_bands;
    let p = cfg.envelope.compression_exponent;

    let nf = n as f64;
    // gradient w.r.t. each band's full-rate compressed envelope
    let mut g_comp = vec![vec![0.0f64; n]; nb];
    // gradient w.r.t. each band's downsampled envelope (modulation stats only)
    let mut g_down = vec![vec![0.0f64; m]; nb];
    // gradient w.r.t. each band's filtered-envelope vectors (for mod stats)
    let mut g_mod: Vec<Vec<Vec<f64>>> = vec![Vec::new(); nb];
    for (b, band) in bands.iter().enumerate() {
        // mean
        let c_mean = coef_em[b] / nf;
        // variance: direct term plus the chained term from skewness
        let mut c_var = coef_ev[b];
        // skewness s = m3 / (v^1.5 + eps)
        let den = band.c_var * band.c_var.sqrt() + NORM_EPS;
        let c_skew = coef_es[b];
        c_var -= c_skew * band.c_m3 * 1.5 * band.c_var.sqrt() / (den * den);
        let g = &mut g_comp[b];
        for t in 0..n {
            let dev = band.compressed[t] - band.c_mean;
            let dvar = 2.0 * dev / nf;
            let dm3 = 3.0 * (dev * dev - band.c_var) / nf;
            g[t] += c_mean + c_var * dvar + c_skew * dm3 / den;
        }
        // mod power p_j = q_j / v, with v the downsampled-envelope variance
        if !variance_is_zero(band.d_var, &band.down) {
            let mut c_dvar = 0.0;
            for j in 0..nm {
                c_dvar -= coef_mp[b * nm + j] * band.mod_q[j] / (band.d_var * band.d_var);
            }
            let gd = &mut g_down[b];
            for t in 0..m {
                gd[t] += c_dvar * 2.0 * (band.down[t] - band.d_mean) / mf;
            }
            // q_j term through the (self-adjoint) modulation filter
            let mut g_y = vec![vec![0.0f64; m]; nm];
            for j in 0..nm {
                let c = coef_mp[b * nm + j] / band.d_var * 2.0 / mf;
                for t in 0..m {
                    g_y[j][t] += c * band.mod_filtered[j][t];
                }
            }
            g_mod[b] = g_y;
        } else {
            g_mod[b] = vec![vec![0.0f64; m]; nm];
        }
    }
    // envelope cross-band correlations
    for (idx, &(i, j)) in pipeline.cfg.corr_pairs().iter().enumerate() {
        let coef = coef_ec[idx];
        if coef != 0.0 {
            let (a, bvec) = (&bands[i].compressed, &bands[j].compressed);
            let mut gi = vec![0.0; n];
            let mut gj = vec![0.0; n];
            pearson_grad_into(coef, a, bvec, &mut gi);
            pearson_grad_into(coef, bvec, a, &mut gj);
            for t in 0..n {
                g_comp[i][t] += gi[t];
                g_comp[j][t] += gj[t];
            }
        }
    }
    // modulation cross-band correlations
    for (pidx, (i, j)) in pipeline.cfg.mod_corr_pairs().into_iter().enumerate() {
        for jm in 0..nm {
            let coef = coef_mc[pidx * nm + jm];
            if coef != 0.0 {
                let a = &bands[i].mod_filtered[jm];
                let bvec = &bands[j].mod_filtered[jm];
                pearson_grad_into(coef, a, bvec, &mut g_mod[i][jm]);
                pearson_grad_into(coef, bvec, a, &mut g_mod[j][jm]);
            }
        }
    }

    let mut g_x = vec![0.0f64; n];
    for (b, band) in bands.iter().enumerate() {
        // fold filtered-envelope gradients back through the modulation filters
        let mut g_d = std::mem::take(&mut g_down[b]);
        for (jm, g_y) in g_mod[b].iter().enumerate() {
            if g_y.iter().any(|&v| v != 0.0) {
                let back = ctx.filter_real(g_y, &pipeline.modulation.responses[jm]);
                for t in 0..m {
                    g_d[t] += back[t];
                }
            }
        }
        // through the downsampler, then join the full-rate terms
        let mut g_c = ctx.resample_truncate_adjoint(&g_d, n);
        for t in 0..n {
            g_c[t] += g_comp[b][t];
        }
        // through compression and the analytic magnitude
        let mut q: Vec<C64> = Vec::with_capacity(n);
        let c_cv = coef_cv[b];
        let s_mean = band.analytic.iter().map(|c| c.re).sum::<f64>() / n as f64;
        for t in 0..n {
            let e = band.env[t];
            let upstream = if e > ENV_GUARD {
                g_c[t] * p * e.powf(p - 1.0)
            } else {
                0.0
            };
            let unit = if e > ENV_GUARD {
                band.analytic[t] / e
            } else {
                C64::new(0.0, 0.0)
            };
            let mut qt = upstream * unit;
            // cochlear variance acts on the real part of the analytic signal
            qt.re += c_cv * 2.0 * (band.analytic[t].re - s_mean) / n as f64;
            q.push(qt);
        }
        // adjoint of (analytic of cochlear-filtered): the composite is
        // self-adjoint, so apply the forward operator and take real parts
        let mut buf = q;
        ctx.forward(&mut buf);
        apply_real_response(&mut buf, &pipeline.cochlear.responses[b]);
        apply_analytic_mask(&mut buf);
        ctx.inverse(&mut buf);
        for t in 0..n {
            g_x[t] += buf[t].re;
        }
    }
    Ok((total, Some(g_x)))
}
