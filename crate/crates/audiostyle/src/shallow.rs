//! Wide-shallow-random texture model: a single convolutional layer of random
//! filters over the spectrogram, Gram-matrix statistics, the style loss and
//! its analytic gradient with respect to the spectrogram.
//!
//! Filters span all frequency bins and slide along time only (valid
//! convolution, ReLU, no bias). The layer is never trained; a fixed seed
//! fully determines the weights.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Configuration for [`ShallowNetParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShallowConfig {
    pub num_filters: usize,
    pub kernel_width: usize,
    pub seed: u64,
    /// Divide the loss by K^2 so step sizes are comparable across filter
    /// counts. Off recovers the raw squared Frobenius distance.
    pub normalize_by_k2: bool,
}

impl Default for ShallowConfig {
    fn default() -> Self {
        Self {
            num_filters: 4096,
            kernel_width: 11,
            seed: 0,
            normalize_by_k2: true,
        }
    }
}

/// The single layer's random filters, `[K x (n_bins * kernel_width)]` with
/// the kernel flattened as `bin * kernel_width + tap`.
#[derive(Debug, Clone)]
pub struct ShallowNetParams {
    pub config: ShallowConfig,
    pub n_bins: usize,
    weights: Array2<f64>,
}

impl ShallowNetParams {
    /// Draws Gaussian filters (mean 0, std `sqrt(2 / (n_bins * w))`) from a
    /// ChaCha8 stream; the same seed always yields bit-identical weights.
    pub fn new(config: ShallowConfig, n_bins: usize) -> Result<Self> {
        if config.num_filters == 0 || config.kernel_width == 0 || n_bins == 0 {
            return Err(Error::InvalidConfig(
                "filters, kernel width and bins must be positive".into(),
            ));
        }
        let cols = n_bins * config.kernel_width;
        let std = (2.0 / cols as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("std is positive");
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let weights = Array2::from_shape_fn((config.num_filters, cols), |_| normal.sample(&mut rng));
        Ok(Self {
            config,
            n_bins,
            weights,
        })
    }

    pub fn num_filters(&self) -> usize {
        self.config.num_filters
    }

    pub fn kernel_width(&self) -> usize {
        self.config.kernel_width
    }

    pub fn weight(&self, filter: usize, bin: usize, tap: usize) -> f64 {
        self.weights[[filter, bin * self.config.kernel_width + tap]]
    }

    fn check_spec(&self, spec: &ArrayView2<f64>) -> Result<()> {
        if spec.ncols() != self.n_bins {
            return Err(Error::ShapeMismatch(format!(
                "spectrogram has {} bins, model expects {}",
                spec.ncols(),
                self.n_bins
            )));
        }
        if spec.nrows() < self.config.kernel_width {
            return Err(Error::ClipTooShort {
                len: spec.nrows(),
                min: self.config.kernel_width,
            });
        }
        Ok(())
    }
}

/// Post-ReLU activations, `[K x T_out]` with `T_out = n_frames - w + 1`.
#[derive(Debug, Clone)]
pub struct FeatureMaps {
    pub activations: Array2<f64>,
}

impl FeatureMaps {
    pub fn t_out(&self) -> usize {
        self.activations.ncols()
    }
}

/// Frame-normalized Gram matrix `G = F F^T / T_out`, `[K x K]`.
#[derive(Debug, Clone)]
pub struct GramStats {
    pub gram: Array2<f64>,
    pub frame_count: usize,
}

/// Gathers sliding kernel-width patches into a `[(n_bins * w) x T_out]`
/// matrix so the convolution becomes one matrix product.
fn patch_matrix(spec: &ArrayView2<f64>, w: usize) -> Array2<f64> {
    let (n_frames, n_bins) = spec.dim();
    let t_out = n_frames - w + 1;
    let mut patches = Array2::zeros((n_bins * w, t_out));
    for b in 0..n_bins {
        for tau in 0..w {
            let row = b * w + tau;
            for t in 0..t_out {
                patches[[row, t]] = spec[[t + tau, b]];
            }
        }
    }
    patches
}

/// Valid temporal convolution followed by ReLU.
///
/// ```
/// use audiostyle::shallow::{forward, gram, ShallowConfig, ShallowNetParams};
/// use ndarray::Array2;
///
/// let cfg = ShallowConfig { num_filters: 32, ..Default::default() };
/// let params = ShallowNetParams::new(cfg, 257).unwrap();
/// let spec = Array2::from_elem((40, 257), 0.25);
/// let features = forward(&spec.view(), &params).unwrap();
/// let stats = gram(&features);
/// assert_eq!(stats.gram.dim(), (32, 32));
/// ```
pub fn forward(spec: &ArrayView2<f64>, params: &ShallowNetParams) -> Result<FeatureMaps> {
    params.check_spec(spec)?;
    let patches = patch_matrix(spec, params.config.kernel_width);
    let mut activations = params.weights.dot(&patches);
    activations.mapv_inplace(|v| v.max(0.0));
    Ok(FeatureMaps { activations })
}

pub fn gram(features: &FeatureMaps) -> GramStats {
    let t_out = features.t_out();
    let mut g = features.activations.dot(&features.activations.t());
    g.mapv_inplace(|v| v / t_out as f64);
    GramStats {
        gram: g,
        frame_count: t_out,
    }
}

fn loss_scale(params: &ShallowNetParams) -> f64 {
    if params.config.normalize_by_k2 {
        let k = params.config.num_filters as f64;
        1.0 / (k * k)
    } else {
        1.0
    }
}

fn check_target(params: &ShallowNetParams, target: &GramStats) -> Result<()> {
    if target.gram.nrows() != params.config.num_filters {
        return Err(Error::ShapeMismatch(format!(
            "target gram is {}x{}, model has {} filters",
            target.gram.nrows(),
            target.gram.ncols(),
            params.config.num_filters
        )));
    }
    Ok(())
}

/// Squared Frobenius distance between the spectrogram's Gram matrix and the
/// target (divided by K^2 when configured).
pub fn style_loss(
    spec: &ArrayView2<f64>,
    target: &GramStats,
    params: &ShallowNetParams,
) -> Result<f64> {
    check_target(params, target)?;
    let g = gram(&forward(spec, params)?);
    let mut sum = 0.0;
    for (a, b) in g.gram.iter().zip(target.gram.iter()) {
        sum += (a - b) * (a - b);
    }
    Ok(sum * loss_scale(params))
}

/// Loss and its exact gradient with respect to every spectrogram entry.
///
/// Chain rule: `dL/dF = (4 / (K^2 T)) (G - G_t) F`, masked by ReLU activity,
/// then the transposed convolution scatters back onto the spectrogram.
pub fn style_loss_grad(
    spec: &ArrayView2<f64>,
    target: &GramStats,
    params: &ShallowNetParams,
) -> Result<(f64, Array2<f64>)> {
    check_target(params, target)?;
    params.check_spec(spec)?;
    let w = params.config.kernel_width;
    let patches = patch_matrix(spec, w);
    let mut features = params.weights.dot(&patches);
    features.mapv_inplace(|v| v.max(0.0));
    let t_out = features.ncols();
    let mut g = features.dot(&features.t());
    g.mapv_inplace(|v| v / t_out as f64);

    let scale = loss_scale(params);
    let mut delta = g;
    delta -= &target.gram;
    let loss = delta.iter().map(|d| d * d).sum::<f64>() * scale;

    // dL/dF = (4 scale / T) * delta . F, zeroed where the unit was inactive
    let mut g_feat = delta.dot(&features);
    let coef = 4.0 * scale / t_out as f64;
    for (gf, f) in g_feat.iter_mut().zip(features.iter()) {
        *gf = if *f > 0.0 { *gf * coef } else { 0.0 };
    }

    // transposed convolution: g_patches = W^T . g_feat, scattered over frames
    let g_patches = params.weights.t().dot(&g_feat);
    let (n_frames, n_bins) = spec.dim();
    let mut g_spec = Array2::zeros((n_frames, n_bins));
    for b in 0..n_bins {
        for tau in 0..w {
            let row = b * w + tau;
            for t in 0..t_out {
                g_spec[[t + tau, b]] += g_patches[[row, t]];
            }
        }
    }
    Ok((loss, g_spec))
}
