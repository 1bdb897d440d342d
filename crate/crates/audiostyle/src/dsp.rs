//! FFT-based building blocks for the auditory model: circular zero-phase
//! filtering, analytic signals, and spectral-truncation resampling, together
//! with the adjoints needed for back-propagation through each stage.
//!
//! Zero-phase filters with real symmetric responses are self-adjoint, and the
//! analytic-signal operator is self-adjoint as a complex-linear map, so most
//! adjoints reuse the forward code.

use rustfft::{num_complex::Complex, FftPlanner};

pub type C64 = Complex<f64>;

/// FFT plan cache; create one per top-level operation and reuse it for every
/// transform inside.
pub struct FftCtx {
    planner: FftPlanner<f64>,
}

impl Default for FftCtx {
    fn default() -> Self {
        Self::new()
    }
}

impl FftCtx {
    pub fn new() -> Self {
        Self {
            planner: FftPlanner::new(),
        }
    }

    pub fn forward(&mut self, buf: &mut [C64]) {
        self.planner.plan_fft_forward(buf.len()).process(buf);
    }

    /// Inverse FFT including the 1/N normalization.
    pub fn inverse(&mut self, buf: &mut [C64]) {
        let n = buf.len();
        self.planner.plan_fft_inverse(n).process(buf);
        let scale = 1.0 / n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    pub fn spectrum_of_real(&mut self, x: &[f64]) -> Vec<C64> {
        let mut buf: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    /// Real part of the inverse FFT of `spec`.
    pub fn real_inverse(&mut self, mut spec: Vec<C64>) -> Vec<f64> {
        self.inverse(&mut spec);
        spec.into_iter().map(|c| c.re).collect()
    }

    /// Analytic signal of a real input: negative frequencies zeroed, positive
    /// doubled. Self-adjoint as a complex-linear operator.
    pub fn analytic(&mut self, x: &[f64]) -> Vec<C64> {
        let mut spec = self.spectrum_of_real(x);
        apply_analytic_mask(&mut spec);
        self.inverse(&mut spec);
        spec
    }

    /// Applies the analytic-signal operator to a complex vector and takes the
    /// real part; this is the adjoint map used in the backward pass.
    pub fn analytic_adjoint(&mut self, mut q: Vec<C64>) -> Vec<f64> {
        self.forward(&mut q);
        apply_analytic_mask(&mut q);
        self.inverse(&mut q);
        q.into_iter().map(|c| c.re).collect()
    }

    /// Circular zero-phase filtering of a real signal. `response` holds the
    /// non-negative real frequency response on bins `0..=n/2`.
    pub fn filter_real(&mut self, x: &[f64], response: &[f64]) -> Vec<f64> {
        let mut spec = self.spectrum_of_real(x);
        apply_real_response(&mut spec, response);
        self.real_inverse(spec)
    }

    /// Ideal-lowpass downsampling of a real signal by spectral truncation to
    /// `out_len` bins. Amplitude-preserving (a DC signal keeps its value).
    pub fn resample_truncate(&mut self, x: &[f64], out_len: usize) -> Vec<f64> {
        assert!(out_len >= 2 && out_len <= x.len());
        let spec = self.spectrum_of_real(x);
        let trunc = truncate_spectrum(&spec, out_len);
        let scale = out_len as f64 / x.len() as f64;
        self.real_inverse(trunc)
            .into_iter()
            .map(|v| v * scale)
            .collect()
    }

    /// Adjoint of [`resample_truncate`]: maps a length-`out_len` gradient back
    /// to a length-`in_len` gradient.
    pub fn resample_truncate_adjoint(&mut self, u: &[f64], in_len: usize) -> Vec<f64> {
        let m = u.len();
        assert!(m >= 2 && m <= in_len);
        // the forward map is (1/N) F_M^H T F_N, so the adjoint is
        // (1/N) F_N^H T^H F_M: all scaling is carried by the inverse FFT
        let uspec = self.spectrum_of_real(u);
        let full = expand_spectrum(&uspec, in_len);
        self.real_inverse(full)
    }
}

/// Zeroes negative frequencies and doubles strictly-positive ones in place.
pub fn apply_analytic_mask(spec: &mut [C64]) {
    let n = spec.len();
    let half = n / 2;
    for (k, v) in spec.iter_mut().enumerate() {
        if k == 0 || (n % 2 == 0 && k == half) {
            // DC and Nyquist untouched
        } else if k < half || (n % 2 == 1 && k == half) {
            *v *= 2.0;
        } else {
            *v = C64::new(0.0, 0.0);
        }
    }
}

/// Multiplies a full spectrum by a real response given on bins `0..=n/2`,
/// mirrored onto the negative frequencies.
pub fn apply_real_response(spec: &mut [C64], response: &[f64]) {
    let n = spec.len();
    assert_eq!(response.len(), n / 2 + 1);
    for (k, v) in spec.iter_mut().enumerate() {
        let idx = if k <= n / 2 { k } else { n - k };
        *v *= response[idx];
    }
}

/// Keeps the lowest `m` bins of an N-point spectrum (splitting the new
/// Nyquist bin between its two aliases when `m` is even).
fn truncate_spectrum(spec: &[C64], m: usize) -> Vec<C64> {
    let n = spec.len();
    let mut out = vec![C64::new(0.0, 0.0); m];
    out[0] = spec[0];
    for k in 1..m.div_ceil(2) {
        out[k] = spec[k];
        out[m - k] = spec[n - k];
    }
    // the new Nyquist bin is dropped rather than folded, so bin magnitudes
    // are preserved exactly under time reversal and circular shifts
    out
}

/// Adjoint of [`truncate_spectrum`]: scatters an m-point spectrum into an
/// n-point one.
fn expand_spectrum(uspec: &[C64], n: usize) -> Vec<C64> {
    let m = uspec.len();
    let mut out = vec![C64::new(0.0, 0.0); n];
    out[0] = uspec[0];
    for k in 1..m.div_ceil(2) {
        out[k] = uspec[k];
        out[n - k] = uspec[m - k];
    }
    out
}
