//! Audio style transfer: impose the sound texture of one clip onto another.
//!
//! The optimization variable starts at the content clip and is moved by
//! gradient descent on a style-only texture loss, so the content's coarse
//! structure survives while fine texture comes from the style. Two texture
//! models are available: a shallow random-filter network over log
//! spectrograms ([`shallow`]) and an auditory statistics model over
//! cochlear envelopes ([`auditory`]). [`optimizer::transfer`] ties them
//! together.
//!
//! ```
//! use audiostyle::audio_io::AudioClip;
//! use audiostyle::optimizer::{transfer, Model, TransferConfig};
//!
//! let sr = 16_000;
//! let content: Vec<f64> = (0..sr as usize)
//!     .map(|t| (t as f64 * 440.0 / sr as f64 * std::f64::consts::TAU).sin())
//!     .collect();
//! let content = AudioClip::new(content, sr).unwrap();
//! let style = content.clone(); // stand-in; normally a different recording
//!
//! let cfg = TransferConfig {
//!     model: Model::Shallow,
//!     max_iterations: 2,
//!     shallow: audiostyle::shallow::ShallowConfig {
//!         num_filters: 16,
//!         ..Default::default()
//!     },
//!     phase_iterations: 3,
//!     ..Default::default()
//! };
//! let (out, report) = transfer(&content, &style, &cfg).unwrap();
//! assert_eq!(out.samples.len(), content.samples.len());
//! assert!(report.loss_trace[0] >= *report.loss_trace.last().unwrap());
//! ```

pub mod audio_io;
pub mod auditory;
pub mod dsp;
pub mod error;
pub mod export;
pub mod optimizer;
pub mod render;
pub mod shallow;
pub mod spectral;

#[doc(hidden)]
pub mod test_util;
