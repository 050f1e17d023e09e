//! Mono WAV input and output.
//!
//! Only single-channel RIFF/WAVE files are accepted, stored either as
//! 16-bit PCM or IEEE float32. PCM16 codes are scaled by 1/32768 so that the
//! negative full-scale code maps to exactly -1.0.

use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::atomic_write;

const PCM16_SCALE: f64 = 32768.0;

/// Mono sampled waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParams("audio buffer must hold at least one sample".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidParams("sample rate must be positive".into()));
        }
        if let Some(idx) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteSample(idx));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Codec {
    Pcm16,
    Float32,
}

impl std::str::FromStr for Codec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pcm16" => Ok(Codec::Pcm16),
            "float32" | "f32" => Ok(Codec::Float32),
            other => Err(Error::InvalidParams(format!("unknown codec {other:?}"))),
        }
    }
}

/// Header facts about a WAV file, read without decoding its samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavInfo {
    pub len: usize,
    pub sample_rate: u32,
    pub codec: Codec,
}

fn map_hound(err: hound::Error) -> Error {
    match err {
        // hound reports short reads as `Other`
        hound::Error::IoError(e)
            if matches!(e.kind(), std::io::ErrorKind::UnexpectedEof | std::io::ErrorKind::Other) =>
        {
            Error::CorruptHeader(format!("truncated file: {e}"))
        }
        hound::Error::IoError(e) => Error::Io(e),
        hound::Error::FormatError(msg) => Error::CorruptHeader(msg.to_string()),
        hound::Error::Unsupported => Error::UnsupportedFormat("unsupported WAV feature".into()),
        other => Error::UnsupportedFormat(other.to_string()),
    }
}

fn open_reader(path: &Path) -> Result<hound::WavReader<std::io::BufReader<std::fs::File>>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    hound::WavReader::open(path).map_err(map_hound)
}

fn check_spec(spec: &hound::WavSpec) -> Result<Codec> {
    if spec.channels != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "{} channels, only mono is supported",
            spec.channels
        )));
    }
    match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => Ok(Codec::Pcm16),
        (hound::SampleFormat::Float, 32) => Ok(Codec::Float32),
        (fmt, bits) => Err(Error::UnsupportedFormat(format!("{fmt:?} with {bits} bits per sample"))),
    }
}

pub fn probe_wav(path: impl AsRef<Path>) -> Result<WavInfo> {
    let path = path.as_ref();
    let reader = open_reader(path)?;
    let spec = reader.spec();
    let codec = check_spec(&spec)?;
    Ok(WavInfo {
        len: reader.duration() as usize,
        sample_rate: spec.sample_rate,
        codec,
    })
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    let spec = reader.spec();
    let samples: Vec<f64> = match check_spec(&spec)? {
        Codec::Pcm16 => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / PCM16_SCALE))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_hound)?,
        Codec::Float32 => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(map_hound)?,
    };
    if samples.is_empty() {
        return Err(Error::CorruptHeader("file holds no samples".into()));
    }
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Writes `buf` as a mono WAV file, atomically replacing `path`.
///
/// Returns the number of samples clipped by PCM16 quantization (always 0
/// for float32).
pub fn write_wav(path: impl AsRef<Path>, buf: &AudioBuffer, codec: Codec) -> Result<usize> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buf.sample_rate,
        bits_per_sample: match codec {
            Codec::Pcm16 => 16,
            Codec::Float32 => 32,
        },
        sample_format: match codec {
            Codec::Pcm16 => hound::SampleFormat::Int,
            Codec::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut clipped = 0usize;
    atomic_write(path, |file| {
        let mut writer = hound::WavWriter::new(BufWriter::new(file), spec).map_err(map_hound)?;
        for &x in &buf.samples {
            match codec {
                Codec::Float32 => writer.write_sample(x as f32),
                Codec::Pcm16 => {
                    let code = (x * PCM16_SCALE).round();
                    let code = if code > i16::MAX as f64 {
                        clipped += 1;
                        i16::MAX
                    } else if code < i16::MIN as f64 {
                        clipped += 1;
                        i16::MIN
                    } else {
                        code as i16
                    };
                    writer.write_sample(code)
                }
            }
            .map_err(map_hound)?;
        }
        writer.finalize().map_err(map_hound)
    })?;
    if clipped > 0 {
        log::warn!("{}: clipped {clipped} samples to PCM16 full scale", path.display());
    }
    Ok(clipped)
}
