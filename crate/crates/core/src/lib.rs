//! Blind dereverberation by long-term complex log-spectral normalization.
//!
//! A room impulse response multiplies the spectrum of everything recorded
//! in the room, so in the complex log-spectral domain it is an additive
//! constant. Averaging log spectra over a reverberant corpus and over an
//! unrelated clean corpus and taking the difference estimates that constant
//! (the normalization vector φ); subtracting φ from a new recording's log
//! spectrum removes the room.
//!
//! ```no_run
//! use dereverb::{corpus, normalize, audio_io};
//!
//! # fn main() -> dereverb::Result<()> {
//! let reverb = corpus::CorpusManifest::load("reverb.json")?;
//! let clean = corpus::CorpusManifest::load("clean.json")?;
//! let n = corpus::choose_n_uniform(&[&reverb, &clean], 32000)?;
//! let eps = dereverb::spectral::DEFAULT_EPSILON;
//! let phi = normalize::estimate_phi(
//!     &corpus::corpus_mean(&reverb, n, eps)?,
//!     &corpus::corpus_mean(&clean, n, eps)?,
//! )?;
//! let o = audio_io::read_wav("test.wav")?;
//! let s_hat = normalize::apply_utterance(&o, &phi)?;
//! # Ok(()) }
//! ```

pub mod audio_io;
pub mod corpus;
pub mod error;
mod fsutil;
pub mod metrics;
pub mod normalize;
pub mod rir;
pub mod spectral;
pub mod synthetic;

pub use audio_io::{AudioBuffer, Codec};
pub use corpus::{CorpusManifest, MeanLogSpectrum};
pub use error::{Error, Result};
pub use metrics::EvalReport;
pub use normalize::{FramePlan, NormalizationVector};
pub use rir::RoomImpulseResponse;
pub use spectral::{ComplexSpectrum, LogSpectrum};
