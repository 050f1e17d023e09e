//! The normalization vector φ and its application.
//!
//! φ is the difference between the mean complex log spectrum of a
//! reverberant corpus and that of a clean corpus. Subtracting it from the
//! log spectrum of a reverberant recording and transforming back removes
//! the room's contribution, either over a whole zero-padded utterance or
//! over 50%-overlapping von Hann frames.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use crate::audio_io::AudioBuffer;
use crate::corpus::MeanLogSpectrum;
use crate::error::{Error, Result};
use crate::fsutil::atomic_write;
use crate::spectral::{forward, inverse, next_pow2, synthesize, to_log_spectrum, LogSpectrum};

pub const PHI_MAGIC: &[u8; 4] = b"PHIV";
pub const PHI_VERSION: u32 = 1;
/// Bytes before the per-bin records.
pub const PHI_HEADER_LEN: usize = 4 + 4 + 4 + 8 + 8 + 8 + 8;

pub const DEFAULT_FRAME_SECS: f64 = 1.5;

/// Trailing samples quieter than this are dropped by [`trim_trailing`].
pub const TRIM_FLOOR_DBFS: f64 = -80.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Provenance {
    pub reverb_count: u64,
    pub clean_count: u64,
}

/// Estimated log spectrum of the room response.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationVector {
    delta_log_mag: Vec<f64>,
    delta_phase: Vec<f64>,
    n_uniform: usize,
    sample_rate: u32,
    epsilon: f64,
    provenance: Provenance,
}

impl NormalizationVector {
    pub fn new(
        delta_log_mag: Vec<f64>,
        delta_phase: Vec<f64>,
        n_uniform: usize,
        sample_rate: u32,
        epsilon: f64,
        provenance: Provenance,
    ) -> Result<Self> {
        if n_uniform < 2 || !n_uniform.is_multiple_of(2) {
            return Err(Error::InvalidParams(format!(
                "transform length must be even and at least 2, got {n_uniform}"
            )));
        }
        let bins = n_uniform / 2 + 1;
        for v in [&delta_log_mag, &delta_phase] {
            if v.len() != bins {
                return Err(Error::LengthMismatch { expected: bins, actual: v.len() });
            }
        }
        if delta_log_mag.iter().chain(&delta_phase).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("normalization vector holds non-finite values".into()));
        }
        if sample_rate == 0 || (epsilon.is_nan() || epsilon <= 0.0) {
            return Err(Error::InvalidParams("sample rate and epsilon must be positive".into()));
        }
        Ok(Self { delta_log_mag, delta_phase, n_uniform, sample_rate, epsilon, provenance })
    }

    /// The all-zero vector, which leaves audio unchanged.
    pub fn zeros(n_uniform: usize, sample_rate: u32, epsilon: f64) -> Result<Self> {
        let bins = n_uniform / 2 + 1;
        Self::new(vec![0.0; bins], vec![0.0; bins], n_uniform, sample_rate, epsilon, Provenance::default())
    }

    /// Uses a known log spectrum (for example of a measured RIR) as φ.
    pub fn from_log_spectrum(ls: &LogSpectrum) -> Self {
        Self {
            delta_log_mag: ls.log_mag().to_vec(),
            delta_phase: ls.phase().to_vec(),
            n_uniform: ls.n_uniform(),
            sample_rate: ls.sample_rate(),
            epsilon: ls.epsilon(),
            provenance: Provenance::default(),
        }
    }

    pub fn delta_log_mag(&self) -> &[f64] {
        &self.delta_log_mag
    }

    pub fn delta_phase(&self) -> &[f64] {
        &self.delta_phase
    }

    pub fn n_uniform(&self) -> usize {
        self.n_uniform
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn num_bins(&self) -> usize {
        self.delta_log_mag.len()
    }

    pub fn is_zero(&self) -> bool {
        self.delta_log_mag.iter().chain(&self.delta_phase).all(|&x| x == 0.0)
    }
}

/// φ = mean reverberant log spectrum − mean clean log spectrum.
pub fn estimate_phi(reverb: &MeanLogSpectrum, clean: &MeanLogSpectrum) -> Result<NormalizationVector> {
    if reverb.n_uniform() != clean.n_uniform()
        || reverb.sample_rate() != clean.sample_rate()
        || reverb.epsilon().to_bits() != clean.epsilon().to_bits()
    {
        return Err(Error::MetadataMismatch(format!(
            "reverberant (N={}, {} Hz, eps={:e}) vs clean (N={}, {} Hz, eps={:e})",
            reverb.n_uniform(),
            reverb.sample_rate(),
            reverb.epsilon(),
            clean.n_uniform(),
            clean.sample_rate(),
            clean.epsilon()
        )));
    }
    let r = reverb.mean()?;
    let c = clean.mean()?;
    let sub = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
    NormalizationVector::new(
        sub(r.log_mag(), c.log_mag()),
        sub(r.phase(), c.phase()),
        reverb.n_uniform(),
        reverb.sample_rate(),
        reverb.epsilon(),
        Provenance { reverb_count: reverb.count(), clean_count: clean.count() },
    )
}

/// Subtracts φ from the log spectrum of `signal` (zero-padded to φ's
/// length) and returns the full-length time signal.
fn normalize_block(signal: &AudioBuffer, phi: &NormalizationVector) -> Result<AudioBuffer> {
    let ls = to_log_spectrum(&forward(signal, phi.n_uniform)?, phi.epsilon)?;
    let log_mag: Vec<f64> = ls.log_mag().iter().zip(&phi.delta_log_mag).map(|(a, b)| a - b).collect();
    let phase: Vec<f64> = ls.phase().iter().zip(&phi.delta_phase).map(|(a, b)| a - b).collect();
    inverse(&synthesize(&log_mag, &phase, phi.n_uniform, phi.sample_rate)?)
}

/// Dereverberates a whole utterance. The output has φ's full transform
/// length.
pub fn apply_utterance(o: &AudioBuffer, phi: &NormalizationVector) -> Result<AudioBuffer> {
    if o.sample_rate() != phi.sample_rate {
        return Err(Error::SampleRateMismatch { expected: phi.sample_rate, actual: o.sample_rate() });
    }
    if o.len() > phi.n_uniform {
        return Err(Error::TooLong { len: o.len(), n_uniform: phi.n_uniform });
    }
    normalize_block(o, phi)
}

/// Drops trailing samples below [`TRIM_FLOOR_DBFS`], keeping at least one.
pub fn trim_trailing(buf: &AudioBuffer) -> AudioBuffer {
    let floor = 10f64.powf(TRIM_FLOOR_DBFS / 20.0);
    let keep = buf
        .samples()
        .iter()
        .rposition(|x| x.abs() >= floor)
        .map_or(1, |i| i + 1);
    AudioBuffer::new(buf.samples()[..keep].to_vec(), buf.sample_rate()).expect("prefix of a valid buffer")
}

/// Periodic von Hann window; shifted copies at half-length hop sum to one.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Framing for frame-wise normalization: von Hann frames at 50% overlap,
/// each zero-padded to `n_uniform_frame` for transformation.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePlan {
    frame_len: usize,
    hop: usize,
    window: Vec<f64>,
    n_uniform_frame: usize,
}

impl FramePlan {
    pub fn new(frame_len: usize, n_uniform_frame: usize) -> Result<Self> {
        if frame_len < 2 || !frame_len.is_multiple_of(2) {
            return Err(Error::InvalidParams(format!("frame length must be even and >= 2, got {frame_len}")));
        }
        if n_uniform_frame < frame_len || !n_uniform_frame.is_multiple_of(2) {
            return Err(Error::InvalidParams(format!(
                "frame transform length {n_uniform_frame} must be even and >= frame length {frame_len}"
            )));
        }
        Ok(Self {
            frame_len,
            hop: frame_len / 2,
            window: hann_window(frame_len),
            n_uniform_frame,
        })
    }

    /// Frame of `frame_secs` (rounded to an even sample count) with the
    /// given overlap, which must be one half. The transform length defaults
    /// to the next power of two.
    pub fn from_seconds(
        frame_secs: f64,
        overlap: f64,
        sample_rate: u32,
        n_uniform_frame: Option<usize>,
    ) -> Result<Self> {
        if !frame_secs.is_finite() || frame_secs <= 0.0 {
            return Err(Error::InvalidParams(format!("frame length must be positive, got {frame_secs} s")));
        }
        if overlap != 0.5 {
            return Err(Error::InvalidParams(format!(
                "only 50% overlap keeps von Hann frames summing to a constant, got {overlap}"
            )));
        }
        let frame_len = 2 * ((frame_secs * sample_rate as f64 / 2.0).round() as usize);
        Self::new(frame_len, n_uniform_frame.unwrap_or_else(|| next_pow2(frame_len)))
    }

    /// 1.5 s frames at 50% overlap.
    pub fn default_for(sample_rate: u32) -> Self {
        Self::from_seconds(DEFAULT_FRAME_SECS, 0.5, sample_rate, None).expect("default frame plan is valid")
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn n_uniform_frame(&self) -> usize {
        self.n_uniform_frame
    }

    /// Sum of overlapped windows at any point covered by two frames.
    pub fn cola_constant(&self) -> f64 {
        self.window[0] + self.window[self.hop]
    }

    /// Number of frames for a signal of `len` samples: one starting at
    /// every multiple of the hop below `len`, so every sample after the
    /// first hop lies under two frames.
    pub fn frame_count(&self, len: usize) -> usize {
        len.div_ceil(self.hop).max(1)
    }

    /// Windowed frames of `o`; the last frames are zero-padded past the end.
    pub fn frames(&self, o: &AudioBuffer) -> Result<Vec<AudioBuffer>> {
        let x = o.samples();
        (0..self.frame_count(x.len()))
            .map(|m| {
                let start = m * self.hop;
                let frame = self
                    .window
                    .iter()
                    .enumerate()
                    .map(|(i, w)| w * x.get(start + i).copied().unwrap_or(0.0))
                    .collect();
                AudioBuffer::new(frame, o.sample_rate())
            })
            .collect()
    }
}

/// Normalizes every windowed frame of `o` with a frame-scale φ. Each output
/// frame is truncated back to the frame length.
pub fn apply_framed(o: &AudioBuffer, phi: &NormalizationVector, plan: &FramePlan) -> Result<Vec<AudioBuffer>> {
    if phi.n_uniform != plan.n_uniform_frame {
        return Err(Error::MetadataMismatch(format!(
            "φ has transform length {} but frames use {}; frame-wise use needs a frame-scale φ",
            phi.n_uniform, plan.n_uniform_frame
        )));
    }
    if o.sample_rate() != phi.sample_rate {
        return Err(Error::SampleRateMismatch { expected: phi.sample_rate, actual: o.sample_rate() });
    }
    plan.frames(o)?
        .iter()
        .map(|frame| {
            let mut out = normalize_block(frame, phi)?.into_samples();
            out.truncate(plan.frame_len);
            AudioBuffer::new(out, o.sample_rate())
        })
        .collect()
}

/// Overlap-adds frames at the plan's hop and divides by the window sum.
/// The first hop of the output sees only one rising window and stays
/// attenuated.
pub fn overlap_add(frames: &[AudioBuffer], plan: &FramePlan) -> Result<AudioBuffer> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidParams("no frames to overlap-add".into()))?;
    let sr = first.sample_rate();
    let mut out = vec![0.0; (frames.len() - 1) * plan.hop + plan.frame_len];
    for (m, frame) in frames.iter().enumerate() {
        if frame.len() != plan.frame_len {
            return Err(Error::LengthMismatch { expected: plan.frame_len, actual: frame.len() });
        }
        if frame.sample_rate() != sr {
            return Err(Error::SampleRateMismatch { expected: sr, actual: frame.sample_rate() });
        }
        for (o, x) in out[m * plan.hop..].iter_mut().zip(frame.samples()) {
            *o += x;
        }
    }
    let c = plan.cola_constant();
    out.iter_mut().for_each(|x| *x /= c);
    AudioBuffer::new(out, sr)
}

pub fn save_phi(phi: &NormalizationVector, path: impl AsRef<Path>) -> Result<()> {
    let mut bytes = Vec::with_capacity(PHI_HEADER_LEN + phi.num_bins() * 16);
    bytes.extend_from_slice(PHI_MAGIC);
    bytes.extend_from_slice(&PHI_VERSION.to_le_bytes());
    bytes.extend_from_slice(&phi.sample_rate.to_le_bytes());
    bytes.extend_from_slice(&(phi.n_uniform as u64).to_le_bytes());
    bytes.extend_from_slice(&phi.epsilon.to_le_bytes());
    bytes.extend_from_slice(&phi.provenance.reverb_count.to_le_bytes());
    bytes.extend_from_slice(&phi.provenance.clean_count.to_le_bytes());
    for (m, p) in phi.delta_log_mag.iter().zip(&phi.delta_phase) {
        bytes.extend_from_slice(&m.to_le_bytes());
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    atomic_write(path.as_ref(), |f| {
        f.write_all(&bytes)?;
        Ok(())
    })
}

fn truncated(what: &str) -> Error {
    Error::Io(std::io::Error::new(
        std::io::ErrorKind::UnexpectedEof,
        format!("normalization vector file truncated in {what}"),
    ))
}

pub fn load_phi(path: impl AsRef<Path>) -> Result<NormalizationVector> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = std::fs::read(path)?;
    if bytes.len() < 4 || &bytes[..4] != PHI_MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < 8 {
        return Err(truncated("header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());

    let version = u32_at(4);
    if version != PHI_VERSION {
        return Err(Error::VersionUnsupported(version));
    }
    if bytes.len() < PHI_HEADER_LEN {
        return Err(truncated("header"));
    }
    let sample_rate = u32_at(8);
    let n_uniform = usize::try_from(u64_at(12))
        .map_err(|_| Error::InvalidParams("transform length does not fit in memory".into()))?;
    let epsilon = f64_at(20);
    let provenance = Provenance { reverb_count: u64_at(28), clean_count: u64_at(36) };
    if n_uniform < 2 || !n_uniform.is_multiple_of(2) {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("invalid transform length {n_uniform}"),
        )));
    }
    let bins = n_uniform / 2 + 1;
    let expected = bins
        .checked_mul(16)
        .and_then(|b| b.checked_add(PHI_HEADER_LEN))
        .ok_or_else(|| Error::InvalidParams("transform length overflows".into()))?;
    if bytes.len() < expected {
        return Err(truncated("records"));
    }
    if bytes.len() > expected {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("{} trailing bytes after records", bytes.len() - expected),
        )));
    }
    let (mut mag, mut phase) = (Vec::with_capacity(bins), Vec::with_capacity(bins));
    for k in 0..bins {
        let o = PHI_HEADER_LEN + 16 * k;
        mag.push(f64_at(o));
        phase.push(f64_at(o + 8));
    }
    NormalizationVector::new(mag, phase, n_uniform, sample_rate, epsilon, provenance)
}
