//! Spectrogram rendering for visual inspection: log-magnitude in dB on a
//! viridis-style monotone-luminance colormap.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::audio_io::AudioClip;
use crate::error::{Error, Result};
use crate::spectral::{stft, StftConfig};

const DB_FLOOR: f64 = -80.0;

// monotone-luminance anchors, dark purple to yellow, evenly spaced
const ANCHORS: [[u8; 3]; 11] = [
    [68, 1, 84],
    [71, 39, 117],
    [62, 73, 137],
    [49, 104, 142],
    [38, 130, 142],
    [31, 155, 137],
    [37, 178, 122],
    [72, 197, 98],
    [123, 210, 68],
    [189, 221, 44],
    [253, 231, 37],
];

fn colormap(t: f64) -> Rgb<u8> {
    let t = t.clamp(0.0, 1.0) * (ANCHORS.len() - 1) as f64;
    let i = (t.floor() as usize).min(ANCHORS.len() - 2);
    let f = t - i as f64;
    let mut px = [0u8; 3];
    for c in 0..3 {
        let a = ANCHORS[i][c] as f64;
        let b = ANCHORS[i + 1][c] as f64;
        px[c] = (a + f * (b - a)).round() as u8;
    }
    Rgb(px)
}

/// Renders the clip's spectrogram to an RGB image: time on x, frequency on
/// y with the highest bin at the top row, `n_frames x n_bins` pixels.
pub fn spectrogram_image(clip: &AudioClip, config: StftConfig) -> Result<RgbImage> {
    let spec = stft(clip, config)?;
    let (n_frames, n_bins) = spec.magnitude.dim();
    let db = spec.magnitude.mapv(|m| (20.0 * m.log10()).max(DB_FLOOR));
    let max = db.iter().cloned().fold(DB_FLOOR, f64::max);
    let range = (max - DB_FLOOR).max(1e-12);
    let mut img = RgbImage::new(n_frames as u32, n_bins as u32);
    for t in 0..n_frames {
        for k in 0..n_bins {
            let v = (db[[t, k]] - DB_FLOOR) / range;
            // row 0 is the highest frequency
            img.put_pixel(t as u32, (n_bins - 1 - k) as u32, colormap(v));
        }
    }
    Ok(img)
}

/// Writes the spectrogram PNG described by [`spectrogram_image`].
pub fn render_spectrogram(clip: &AudioClip, config: StftConfig, path: &Path) -> Result<()> {
    let img = spectrogram_image(clip, config)?;
    img.save(path).map_err(|e| Error::Write {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    })
}
