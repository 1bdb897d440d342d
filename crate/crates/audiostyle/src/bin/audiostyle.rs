//! Batch front end: ingest WAVs, run texture transfer or analysis, export
//! WAV/PNG/JSON/CSV artifacts. Exit codes: 0 success, 1 usage or bad input,
//! 2 I/O failure, 3 numerical failure.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use audiostyle::audio_io::{load_wav, save_wav, AudioClip, BitDepth};
use audiostyle::auditory::{extract_stats, stats_loss, stats_loss_grad, AuditoryConfig};
use audiostyle::error::Error;
use audiostyle::export::{auditory_stats_json, gram_stats_json, loss_trace_csv};
use audiostyle::optimizer::{
    grad_check, synth_texture, transfer_with, Model, TransferConfig, TransferReport,
};
use audiostyle::render::render_spectrogram;
use audiostyle::shallow::{forward, gram, style_loss, style_loss_grad, ShallowConfig, ShallowNetParams};
use audiostyle::spectral::{stft, StftConfig};

#[derive(Parser)]
#[command(name = "audiostyle", version, about = "Audio style transfer by texture statistics matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transfer the texture of a style clip onto a content clip.
    Transfer(TransferArgs),
    /// Export a clip's texture statistics as JSON.
    Analyze(AnalyzeArgs),
    /// Verify a model's analytic gradient against finite differences.
    Gradcheck(GradcheckArgs),
    /// Synthesize a texture from seeded noise matching a style clip.
    SynthTexture(SynthArgs),
}

/// Numeric knobs shared by every subcommand. Each maps to a `key=value`
/// line in the optional config file; explicit flags win over the file.
#[derive(Args, Clone, Default)]
struct Overrides {
    /// Config file with key=value lines (keys are the long flag names).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Texture model: shallow | auditory.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    tolerance_window: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Seeded noise mixed into the auditory starting point, relative to
    /// the content RMS. Helps tonal content whose cochlear bands start
    /// silent; 0 disables.
    #[arg(long)]
    dither: Option<f64>,
    /// Iterations between `iter,loss` progress lines on stderr; 0 silences.
    #[arg(long)]
    log_every: Option<usize>,
    #[arg(long)]
    window_size: Option<usize>,
    #[arg(long)]
    hop_size: Option<usize>,
    #[arg(long)]
    fft_size: Option<usize>,
    #[arg(long)]
    filters: Option<usize>,
    #[arg(long)]
    kernel_width: Option<usize>,
    #[arg(long)]
    cochlear_bands: Option<usize>,
    #[arg(long)]
    modulation_bands: Option<usize>,
    #[arg(long)]
    compression: Option<f64>,
    #[arg(long)]
    envelope_rate: Option<f64>,
    #[arg(long)]
    phase_iterations: Option<usize>,
}

#[derive(Args)]
struct TransferArgs {
    #[arg(long)]
    content: PathBuf,
    #[arg(long)]
    style: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trace_csv: Option<PathBuf>,
    #[arg(long)]
    spectrogram_content: Option<PathBuf>,
    #[arg(long)]
    spectrogram_style: Option<PathBuf>,
    #[arg(long)]
    spectrogram_out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    input: PathBuf,
    /// JSON destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Coordinates to sample.
    #[arg(long, default_value_t = 25)]
    coords: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    /// Maximum acceptable relative error.
    #[arg(long)]
    max_error: Option<f64>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    style: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trace_csv: Option<PathBuf>,
    #[arg(long)]
    spectrogram_out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

enum CliError {
    Usage(String),
    Io(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Read { .. } | Error::Write { .. } | Error::BadWav { .. } => {
                CliError::Io(format!("error: {e}"))
            }
            Error::NonFiniteLoss { .. } | Error::Diverged { .. } | Error::ZeroVarianceEnvelope { .. } => {
                CliError::Numeric(format!("error: {e}"))
            }
            other => CliError::Usage(format!("error: {other}")),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn parse_config_file(path: &Path) -> CliResult<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("error: cannot read {}: {e}", path.display())))?;
    let mut map = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "error: {}:{}: expected key=value",
                path.display(),
                lineno + 1
            )));
        };
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn from_file<T: std::str::FromStr>(file: &HashMap<String, String>, key: &str) -> CliResult<Option<T>> {
    match file.get(key) {
        None => Ok(None),
        Some(raw) => raw.parse().map(Some).map_err(|_| {
            CliError::Usage(format!("error: invalid value for {key}: {raw}"))
        }),
    }
}

fn resolve<T: std::str::FromStr + Clone>(
    flag: &Option<T>,
    file: &HashMap<String, String>,
    key: &str,
    default: T,
) -> CliResult<T> {
    if let Some(v) = flag {
        return Ok(v.clone());
    }
    Ok(from_file(file, key)?.unwrap_or(default))
}

fn parse_model(s: &str) -> CliResult<Model> {
    match s {
        "shallow" => Ok(Model::Shallow),
        "auditory" => Ok(Model::Auditory),
        other => Err(CliError::Usage(format!(
            "error: unknown model {other:?}, expected shallow or auditory"
        ))),
    }
}

fn build_config(o: &Overrides) -> CliResult<TransferConfig> {
    let file = match &o.config {
        Some(path) => parse_config_file(path)?,
        None => HashMap::new(),
    };
    let defaults = TransferConfig::default();
    let model_name = resolve(&o.model, &file, "model", "shallow".to_string())?;
    let stft_d = StftConfig::default();
    let shallow_d = ShallowConfig::default();
    let auditory_d = AuditoryConfig::default();
    let mut cfg = TransferConfig {
        model: parse_model(&model_name)?,
        max_iterations: resolve(&o.iterations, &file, "iterations", defaults.max_iterations)?,
        step_size: match o.step_size {
            Some(v) => Some(v),
            None => from_file(&file, "step_size")?,
        },
        beta1: resolve(&o.beta1, &file, "beta1", defaults.beta1)?,
        beta2: resolve(&o.beta2, &file, "beta2", defaults.beta2)?,
        stop_tolerance: resolve(&o.tolerance, &file, "tolerance", defaults.stop_tolerance)?,
        stop_window: resolve(&o.tolerance_window, &file, "tolerance_window", defaults.stop_window)?,
        seed: resolve(&o.seed, &file, "seed", defaults.seed)?,
        log_every: resolve(&o.log_every, &file, "log_every", 50)?,
        init_dither: resolve(&o.dither, &file, "dither", defaults.init_dither)?,
        stft: StftConfig {
            window_size: resolve(&o.window_size, &file, "window_size", stft_d.window_size)?,
            hop_size: resolve(&o.hop_size, &file, "hop_size", stft_d.hop_size)?,
            fft_size: resolve(&o.fft_size, &file, "fft_size", stft_d.fft_size)?,
        },
        shallow: ShallowConfig {
            num_filters: resolve(&o.filters, &file, "filters", shallow_d.num_filters)?,
            kernel_width: resolve(&o.kernel_width, &file, "kernel_width", shallow_d.kernel_width)?,
            ..shallow_d
        },
        auditory: AuditoryConfig {
            n_cochlear_bands: resolve(&o.cochlear_bands, &file, "cochlear_bands", auditory_d.n_cochlear_bands)?,
            n_modulation_bands: resolve(
                &o.modulation_bands,
                &file,
                "modulation_bands",
                auditory_d.n_modulation_bands,
            )?,
            ..auditory_d
        },
        phase_iterations: resolve(&o.phase_iterations, &file, "phase_iterations", defaults.phase_iterations)?,
    };
    cfg.auditory.envelope.compression_exponent =
        resolve(&o.compression, &file, "compression", cfg.auditory.envelope.compression_exponent)?;
    cfg.auditory.envelope.downsample_rate_hz =
        resolve(&o.envelope_rate, &file, "envelope_rate", cfg.auditory.envelope.downsample_rate_hz)?;
    cfg.shallow.seed = cfg.seed;
    Ok(cfg)
}

fn read_clip(path: &Path) -> CliResult<AudioClip> {
    Ok(load_wav(path)?)
}

/// All artifacts are staged in memory or written after the whole job
/// succeeds; on any failure every file written so far is removed, so a
/// nonzero exit leaves no outputs behind.
struct OutputStage {
    written: Vec<PathBuf>,
}

impl OutputStage {
    fn new() -> Self {
        Self { written: Vec::new() }
    }

    fn wav(&mut self, clip: &AudioClip, path: &Path) -> CliResult<()> {
        save_wav(clip, path, BitDepth::Pcm16).map_err(|e| self.fail(e.into()))?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    fn text(&mut self, contents: &str, path: &Path) -> CliResult<()> {
        std::fs::write(path, contents)
            .map_err(|e| {
                self.fail(CliError::Io(format!("error: cannot write {}: {e}", path.display())))
            })?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    fn png(&mut self, clip: &AudioClip, stft_cfg: StftConfig, path: &Path) -> CliResult<()> {
        render_spectrogram(clip, stft_cfg, path).map_err(|e| self.fail(e.into()))?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    fn fail(&self, e: CliError) -> CliError {
        for p in &self.written {
            let _ = std::fs::remove_file(p);
        }
        e
    }
}

fn progress_printer() -> impl FnMut(usize, f64) {
    |it, loss| eprintln!("{it},{loss:.6e}")
}

fn run_transfer(args: &TransferArgs) -> CliResult<()> {
    let cfg = build_config(&args.overrides)?;
    let content = read_clip(&args.content)?;
    let style = read_clip(&args.style)?;
    let (out, report) = transfer_with(&content, &style, &cfg, &mut progress_printer(), &mut || false)?;
    eprintln!(
        "done: {} iterations, loss {:.6e} -> {:.6e}, {:.1} s",
        report.iterations,
        report.loss_trace[0],
        report.loss_trace.last().unwrap(),
        report.wall_time.as_secs_f64()
    );
    write_job_outputs(
        &out,
        &report,
        &cfg,
        &args.out,
        args.trace_csv.as_deref(),
        args.spectrogram_out.as_deref(),
        &[
            (&content, args.spectrogram_content.as_deref()),
            (&style, args.spectrogram_style.as_deref()),
        ],
    )
}

fn write_job_outputs(
    out: &AudioClip,
    report: &TransferReport,
    cfg: &TransferConfig,
    out_path: &Path,
    trace_csv: Option<&Path>,
    spectrogram_out: Option<&Path>,
    extra_spectrograms: &[(&AudioClip, Option<&Path>)],
) -> CliResult<()> {
    let mut stage = OutputStage::new();
    stage.wav(out, out_path)?;
    if let Some(path) = trace_csv {
        stage.text(&loss_trace_csv(report), path)?;
    }
    if let Some(path) = spectrogram_out {
        stage.png(out, cfg.stft, path)?;
    }
    for (clip, path) in extra_spectrograms {
        if let Some(path) = path {
            stage.png(clip, cfg.stft, path)?;
        }
    }
    Ok(())
}

fn run_analyze(args: &AnalyzeArgs) -> CliResult<()> {
    let cfg = build_config(&args.overrides)?;
    let clip = read_clip(&args.input)?;
    let json = match cfg.model {
        Model::Auditory => auditory_stats_json(&extract_stats(&clip, &cfg.auditory)?),
        Model::Shallow => {
            let spec = stft(&clip, cfg.stft)?;
            let params = ShallowNetParams::new(cfg.shallow, spec.n_bins())?;
            let log = spec.magnitude.mapv(|m| m.ln_1p());
            let stats = gram(&forward(&log.view(), &params)?);
            gram_stats_json(&stats)
        }
    };
    match &args.out {
        Some(path) => OutputStage::new().text(&json, path),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn run_gradcheck(args: &GradcheckArgs) -> CliResult<()> {
    let cfg = build_config(&args.overrides)?;
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let (err, default_tol) = match cfg.model {
        Model::Shallow => {
            let shallow = ShallowConfig {
                num_filters: 8,
                kernel_width: 3,
                seed: cfg.seed,
                ..cfg.shallow
            };
            let n_bins = 6;
            let params = ShallowNetParams::new(shallow, n_bins).map_err(CliError::from)?;
            let dims = (24usize, n_bins);
            // stay away from the ReLU kink so central differences are smooth
            let spec = ndarray::Array2::from_shape_fn(dims, |_| rng.gen_range(0.5..2.0));
            let other = ndarray::Array2::from_shape_fn(dims, |_| rng.gen_range(0.5..2.0));
            let target = gram(&forward(&other.view(), &params)?);
            let (_, g) = style_loss_grad(&spec.view(), &target, &params)?;
            let point = spec.into_raw_vec_and_offset().0;
            let err = grad_check(
                |x| {
                    let view = ndarray::ArrayView2::from_shape(dims, x)
                        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
                    style_loss(&view, &target, &params)
                },
                &g.into_raw_vec_and_offset().0,
                &point,
                args.coords,
                args.step,
                cfg.seed.wrapping_add(1),
            )?;
            (err, 1e-5)
        }
        Model::Auditory => {
            let acfg = AuditoryConfig::reduced();
            let fs = 2000u32;
            let point: Vec<f64> = (0..1000).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let other: Vec<f64> = (0..1000).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let target = extract_stats(&AudioClip::new(other, fs)?, &acfg)?;
            let clip = AudioClip::new(point.clone(), fs)?;
            let (_, g) = stats_loss_grad(&clip, &target, &acfg)?;
            let err = grad_check(
                |x| stats_loss(&AudioClip::new(x.to_vec(), fs)?, &target, &acfg),
                &g,
                &point,
                args.coords,
                args.step,
                cfg.seed.wrapping_add(1),
            )?;
            (err, 1e-4)
        }
    };
    let tol = args.max_error.unwrap_or(default_tol);
    println!("max_relative_error,{err:.6e}");
    if err > tol {
        return Err(CliError::Numeric(format!(
            "error: gradient check failed: {err:.6e} exceeds {tol:.1e}"
        )));
    }
    Ok(())
}

fn run_synth(args: &SynthArgs) -> CliResult<()> {
    let mut overrides = args.overrides.clone();
    if overrides.model.is_none() {
        overrides.model = Some("auditory".to_string());
    }
    let cfg = build_config(&overrides)?;
    let style = read_clip(&args.style)?;
    let (out, report) = synth_texture(&style, &cfg, &mut progress_printer(), &mut || false)?;
    eprintln!(
        "done: {} iterations, loss {:.6e} -> {:.6e}, {:.1} s",
        report.iterations,
        report.loss_trace[0],
        report.loss_trace.last().unwrap(),
        report.wall_time.as_secs_f64()
    );
    write_job_outputs(
        &out,
        &report,
        &cfg,
        &args.out,
        args.trace_csv.as_deref(),
        args.spectrogram_out.as_deref(),
        &[],
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Transfer(args) => run_transfer(args),
        Command::Analyze(args) => run_analyze(args),
        Command::Gradcheck(args) => run_gradcheck(args),
        Command::SynthTexture(args) => run_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.message());
            ExitCode::from(e.code())
        }
    }
}
