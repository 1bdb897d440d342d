//! Half-cosine filterbanks with perfect-reconstruction tiling.
//!
//! Banks are built from cutoff points uniformly spaced on a warped frequency
//! scale (ERB-rate for cochlear filters, log-frequency for modulation
//! filters). Band `i` rises from cutoff `i` to a peak at cutoff `i+1` and
//! falls to zero at cutoff `i+2`; with 50% overlap the squared responses of
//! neighboring bands sum to one everywhere between the first and last band
//! centers.

use crate::error::{Error, Result};

/// Hz -> ERB-rate (Glasberg & Moore).
pub fn hz_to_erb(f_hz: f64) -> f64 {
    21.4 * (1.0 + 4.37 * f_hz / 1000.0).log10()
}

/// ERB-rate -> Hz.
pub fn erb_to_hz(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) * 1000.0 / 4.37
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrequencyScale {
    Erb,
    Log,
}

impl FrequencyScale {
    fn warp(self, f_hz: f64) -> f64 {
        match self {
            FrequencyScale::Erb => hz_to_erb(f_hz),
            FrequencyScale::Log => f_hz.log10(),
        }
    }

    fn unwarp(self, s: f64) -> f64 {
        match self {
            FrequencyScale::Erb => erb_to_hz(s),
            FrequencyScale::Log => 10f64.powf(s),
        }
    }
}

/// A bank of zero-phase half-cosine bandpass responses sampled on the
/// non-negative FFT bins of an `n_fft`-point transform.
#[derive(Debug, Clone)]
pub struct Filterbank {
    /// `[n_bands][n_fft/2 + 1]`, real and non-negative.
    pub responses: Vec<Vec<f64>>,
    pub centers_hz: Vec<f64>,
    /// Range over which the squared responses tile to one.
    pub passband_hz: (f64, f64),
    pub n_fft: usize,
    pub sample_rate_hz: f64,
}

impl Filterbank {
    /// Builds `n_bands` filters whose `n_bands + 2` cutoffs are uniform on
    /// `scale` between `lo_cut_hz` and `hi_cut_hz`.
    pub fn from_cutoff_range(
        n_bands: usize,
        lo_cut_hz: f64,
        hi_cut_hz: f64,
        scale: FrequencyScale,
        n_fft: usize,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if n_bands == 0 || lo_cut_hz <= 0.0 || hi_cut_hz <= lo_cut_hz {
            return Err(Error::InvalidConfig(format!(
                "bad filterbank range: {n_bands} bands over [{lo_cut_hz}, {hi_cut_hz}] Hz"
            )));
        }
        let lo = scale.warp(lo_cut_hz);
        let hi = scale.warp(hi_cut_hz);
        let step = (hi - lo) / (n_bands + 1) as f64;
        let cutoffs: Vec<f64> = (0..n_bands + 2).map(|i| lo + step * i as f64).collect();
        Self::from_cutoffs(&cutoffs, scale, n_fft, sample_rate_hz)
    }

    /// Builds filters with band *centers* uniform on `scale` between
    /// `lo_center_hz` and `hi_center_hz`; cutoffs extend half a band step
    /// beyond on each side.
    pub fn from_center_range(
        n_bands: usize,
        lo_center_hz: f64,
        hi_center_hz: f64,
        scale: FrequencyScale,
        n_fft: usize,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if n_bands < 2 || lo_center_hz <= 0.0 || hi_center_hz <= lo_center_hz {
            return Err(Error::InvalidConfig(format!(
                "bad filterbank range: {n_bands} bands over [{lo_center_hz}, {hi_center_hz}] Hz"
            )));
        }
        let lo = scale.warp(lo_center_hz);
        let hi = scale.warp(hi_center_hz);
        let step = (hi - lo) / (n_bands - 1) as f64;
        let cutoffs: Vec<f64> = (0..n_bands + 2)
            .map(|i| lo - step + step * i as f64)
            .collect();
        Self::from_cutoffs(&cutoffs, scale, n_fft, sample_rate_hz)
    }

    fn from_cutoffs(
        cutoffs: &[f64],
        scale: FrequencyScale,
        n_fft: usize,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        let n_bands = cutoffs.len() - 2;
        let n_bins = n_fft / 2 + 1;
        let df = sample_rate_hz / n_fft as f64;
        let mut responses = Vec::with_capacity(n_bands);
        for i in 0..n_bands {
            let (lo, mid, hi) = (cutoffs[i], cutoffs[i + 1], cutoffs[i + 2]);
            let mut h = vec![0.0; n_bins];
            for (k, v) in h.iter_mut().enumerate() {
                let f = k as f64 * df;
                if f <= 0.0 {
                    continue;
                }
                let s = scale.warp(f);
                if s > lo && s < hi {
                    let theta = std::f64::consts::PI * (s - mid) / (hi - lo);
                    *v = theta.cos();
                }
            }
            responses.push(h);
        }
        let centers_hz: Vec<f64> = cutoffs[1..=n_bands]
            .iter()
            .map(|&s| scale.unwarp(s))
            .collect();
        let passband_hz = (centers_hz[0], *centers_hz.last().unwrap());
        Ok(Self {
            responses,
            centers_hz,
            passband_hz,
            n_fft,
            sample_rate_hz,
        })
    }

    pub fn n_bands(&self) -> usize {
        self.responses.len()
    }

    /// Max absolute deviation of the summed squared responses from 1 over
    /// the tiled passband.
    pub fn tiling_error(&self) -> f64 {
        let df = self.sample_rate_hz / self.n_fft as f64;
        let n_bins = self.n_fft / 2 + 1;
        let mut worst = 0.0f64;
        for k in 0..n_bins {
            let f = k as f64 * df;
            if f < self.passband_hz.0 || f > self.passband_hz.1 {
                continue;
            }
            let sum: f64 = self.responses.iter().map(|h| h[k] * h[k]).sum();
            worst = worst.max((sum - 1.0).abs());
        }
        worst
    }
}

/// 30 half-cosine bands on the ERB-rate scale, cutoffs spanning
/// [20 Hz, Nyquist].
pub fn cochlear_filterbank(
    n_bands: usize,
    lo_hz: f64,
    sample_rate_hz: f64,
    n_fft: usize,
) -> Result<Filterbank> {
    Filterbank::from_cutoff_range(
        n_bands,
        lo_hz,
        sample_rate_hz / 2.0,
        FrequencyScale::Erb,
        n_fft,
        sample_rate_hz,
    )
}

/// 20 half-cosine bands log-spaced with centers from `lo_hz` up to half the
/// envelope rate.
pub fn modulation_filterbank(
    n_bands: usize,
    lo_hz: f64,
    env_rate_hz: f64,
    env_len: usize,
) -> Result<Filterbank> {
    Filterbank::from_center_range(
        n_bands,
        lo_hz,
        env_rate_hz / 2.0,
        FrequencyScale::Log,
        env_len,
        env_rate_hz,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erb_round_trip() {
        for f in [20.0, 100.0, 1000.0, 7999.0] {
            let back = erb_to_hz(hz_to_erb(f));
            assert!((back - f).abs() < 1e-9 * f);
        }
    }

    #[test]
    fn cochlear_tiling_within_tolerance() {
        let fb = cochlear_filterbank(30, 20.0, 16000.0, 64000).unwrap();
        assert_eq!(fb.n_bands(), 30);
        assert!(fb.tiling_error() <= 1e-3, "tiling error {}", fb.tiling_error());
    }

    #[test]
    fn modulation_tiling_within_tolerance() {
        let fb = modulation_filterbank(20, 0.5, 400.0, 1600).unwrap();
        assert_eq!(fb.n_bands(), 20);
        assert!((fb.centers_hz[19] - 200.0).abs() < 1e-9);
        assert!(fb.tiling_error() <= 1e-3, "tiling error {}", fb.tiling_error());
    }

    #[test]
    fn responses_are_nonnegative_and_compact() {
        let fb = cochlear_filterbank(30, 20.0, 16000.0, 16384).unwrap();
        for (i, h) in fb.responses.iter().enumerate() {
            assert!(h.iter().all(|&v| (0.0..=1.0).contains(&v)), "band {i}");
            let nonzero = h.iter().filter(|&&v| v > 0.0).count();
            assert!(nonzero > 0 && nonzero < h.len(), "band {i} support");
        }
    }

    #[test]
    fn centers_peak_at_one() {
        let fb = cochlear_filterbank(30, 20.0, 16000.0, 64000).unwrap();
        let df = 16000.0 / 64000.0;
        for (i, &c) in fb.centers_hz.iter().enumerate() {
            let k = (c / df).round() as usize;
            assert!(fb.responses[i][k] > 0.999, "band {i} peak {}", fb.responses[i][k]);
        }
    }
}
