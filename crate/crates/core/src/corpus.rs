//! Corpus manifests and mean log spectra over many utterances.
//!
//! Every utterance is zero-padded to one transform length, transformed, and
//! folded into running per-bin sums of log magnitude and unwrapped phase.
//! Files are processed in fixed-size chunks whose partial sums are merged in
//! manifest order, so the result does not depend on the thread count.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio_io::{probe_wav, read_wav, AudioBuffer};
use crate::error::{Error, Result};
use crate::fsutil::atomic_write;
use crate::normalize::FramePlan;
use crate::spectral::{forward, next_pow2, to_log_spectrum, LogSpectrum};

/// Utterances folded sequentially before partial sums are merged.
const CHUNK: usize = 8;

/// RIR headroom added to the longest utterance when choosing `N`.
pub const DEFAULT_HEADROOM_SECS: f64 = 2.0;

#[derive(Debug, Serialize, Deserialize)]
struct ManifestFile {
    sample_rate: u32,
    files: Vec<PathBuf>,
}

/// Ordered list of audio files sharing one declared sample rate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusManifest {
    files: Vec<PathBuf>,
    sample_rate: u32,
}

impl CorpusManifest {
    pub fn new(files: Vec<PathBuf>, sample_rate: u32) -> Result<Self> {
        if files.is_empty() {
            return Err(Error::Manifest("manifest lists no files".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Manifest("sample rate must be positive".into()));
        }
        let mut seen = HashSet::new();
        for f in &files {
            if !seen.insert(f) {
                return Err(Error::Manifest(format!("duplicate entry {}", f.display())));
            }
        }
        Ok(Self { files, sample_rate })
    }

    /// Parses a JSON manifest. Relative entries resolve against the
    /// manifest's own directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let bytes = std::fs::read(path)?;
        let raw: ManifestFile = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let files = raw.files.into_iter().map(|f| base.join(f)).collect();
        Self::new(files, raw.sample_rate).map_err(|e| e.in_file(path))
    }

    /// Writes the manifest, storing entries relative to its directory where
    /// possible.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let files = self
            .files
            .iter()
            .map(|f| f.strip_prefix(base).map(Path::to_path_buf).unwrap_or_else(|_| f.clone()))
            .collect();
        let raw = ManifestFile { sample_rate: self.sample_rate, files };
        let json = serde_json::to_vec_pretty(&raw).map_err(std::io::Error::from)?;
        atomic_write(path, |f| {
            use std::io::Write;
            f.write_all(&json)?;
            f.write_all(b"\n")?;
            Ok(())
        })
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Length in samples of the longest file, read from headers only.
    pub fn longest(&self) -> Result<(usize, &Path)> {
        let mut best: Option<(usize, &Path)> = None;
        for f in &self.files {
            let info = probe_wav(f).map_err(|e| e.in_file(f))?;
            if best.is_none_or(|(len, _)| info.len > len) {
                best = Some((info.len, f));
            }
        }
        Ok(best.expect("manifest is non-empty"))
    }
}

/// Smallest power of two holding the longest utterance of every manifest
/// plus `headroom` samples.
pub fn choose_n_uniform(manifests: &[&CorpusManifest], headroom: usize) -> Result<usize> {
    let mut longest = 0;
    for m in manifests {
        longest = longest.max(m.longest()?.0);
    }
    Ok(next_pow2(longest + headroom))
}

/// Running per-bin sums of log spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanLogSpectrum {
    sum_log_mag: Vec<f64>,
    sum_phase: Vec<f64>,
    count: u64,
    n_uniform: usize,
    sample_rate: u32,
    epsilon: f64,
}

impl MeanLogSpectrum {
    pub fn new(n_uniform: usize, sample_rate: u32, epsilon: f64) -> Result<Self> {
        if n_uniform < 2 || !n_uniform.is_multiple_of(2) {
            return Err(Error::InvalidParams(format!(
                "transform length must be even and at least 2, got {n_uniform}"
            )));
        }
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::InvalidParams(format!("epsilon must be positive, got {epsilon}")));
        }
        let bins = n_uniform / 2 + 1;
        Ok(Self {
            sum_log_mag: vec![0.0; bins],
            sum_phase: vec![0.0; bins],
            count: 0,
            n_uniform,
            sample_rate,
            epsilon,
        })
    }

    pub fn count(&self) -> u64 {
        self.count
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

    fn check_meta(&self, n_uniform: usize, sample_rate: u32, epsilon: f64) -> Result<()> {
        if n_uniform != self.n_uniform {
            return Err(Error::MetadataMismatch(format!(
                "transform length {n_uniform} vs {}",
                self.n_uniform
            )));
        }
        if sample_rate != self.sample_rate {
            return Err(Error::MetadataMismatch(format!(
                "sample rate {sample_rate} Hz vs {} Hz",
                self.sample_rate
            )));
        }
        if epsilon.to_bits() != self.epsilon.to_bits() {
            return Err(Error::MetadataMismatch(format!("epsilon {epsilon:e} vs {:e}", self.epsilon)));
        }
        Ok(())
    }

    pub fn accumulate(&mut self, ls: &LogSpectrum) -> Result<()> {
        self.check_meta(ls.n_uniform(), ls.sample_rate(), ls.epsilon())?;
        for (s, v) in self.sum_log_mag.iter_mut().zip(ls.log_mag()) {
            *s += v;
        }
        for (s, v) in self.sum_phase.iter_mut().zip(ls.phase()) {
            *s += v;
        }
        self.count += 1;
        Ok(())
    }

    /// Adds another accumulator's sums into this one.
    pub fn merge(&mut self, other: &MeanLogSpectrum) -> Result<()> {
        self.check_meta(other.n_uniform, other.sample_rate, other.epsilon)?;
        for (s, v) in self.sum_log_mag.iter_mut().zip(&other.sum_log_mag) {
            *s += v;
        }
        for (s, v) in self.sum_phase.iter_mut().zip(&other.sum_phase) {
            *s += v;
        }
        self.count += other.count;
        Ok(())
    }

    /// Per-bin means. Phase means are taken over unwrapped phases and are
    /// not re-wrapped.
    pub fn mean(&self) -> Result<LogSpectrum> {
        if self.count == 0 {
            return Err(Error::EmptyAccumulator);
        }
        let c = self.count as f64;
        LogSpectrum::new(
            self.sum_log_mag.iter().map(|s| s / c).collect(),
            self.sum_phase.iter().map(|s| s / c).collect(),
            self.n_uniform,
            self.sample_rate,
            self.epsilon,
        )
    }
}

/// Log spectrum of one utterance zero-padded to `n_uniform`.
pub fn analyze(buf: &AudioBuffer, n_uniform: usize, epsilon: f64) -> Result<LogSpectrum> {
    to_log_spectrum(&forward(buf, n_uniform)?, epsilon)
}

/// Log spectra of the windowed frames of one utterance.
pub fn analyze_framed(buf: &AudioBuffer, plan: &FramePlan, epsilon: f64) -> Result<Vec<LogSpectrum>> {
    plan.frames(buf)?
        .into_iter()
        .map(|frame| analyze(&frame, plan.n_uniform_frame(), epsilon))
        .collect()
}

fn fold_chunked<T, F>(
    items: &[T],
    n_uniform: usize,
    sample_rate: u32,
    epsilon: f64,
    parallel: bool,
    unit: F,
) -> Result<MeanLogSpectrum>
where
    T: Sync,
    F: Fn(&T) -> Result<Vec<LogSpectrum>> + Sync,
{
    let fold = |chunk: &[T]| -> Result<MeanLogSpectrum> {
        let mut acc = MeanLogSpectrum::new(n_uniform, sample_rate, epsilon)?;
        for item in chunk {
            for ls in unit(item)? {
                acc.accumulate(&ls)?;
            }
        }
        Ok(acc)
    };
    let partials: Vec<Result<MeanLogSpectrum>> = if parallel {
        items.par_chunks(CHUNK).map(fold).collect()
    } else {
        items.chunks(CHUNK).map(fold).collect()
    };
    let mut total = MeanLogSpectrum::new(n_uniform, sample_rate, epsilon)?;
    for p in partials {
        total.merge(&p?)?;
    }
    Ok(total)
}

fn load_checked(path: &Path, sample_rate: u32) -> Result<AudioBuffer> {
    let buf = read_wav(path).map_err(|e| e.in_file(path))?;
    if buf.sample_rate() != sample_rate {
        return Err(Error::SampleRateMismatch {
            expected: sample_rate,
            actual: buf.sample_rate(),
        }
        .in_file(path));
    }
    Ok(buf)
}

fn manifest_mean(
    manifest: &CorpusManifest,
    n_uniform: usize,
    epsilon: f64,
    parallel: bool,
) -> Result<MeanLogSpectrum> {
    let sr = manifest.sample_rate;
    fold_chunked(&manifest.files, n_uniform, sr, epsilon, parallel, |path| {
        let buf = load_checked(path, sr)?;
        Ok(vec![analyze(&buf, n_uniform, epsilon).map_err(|e| e.in_file(path))?])
    })
}

/// Mean log spectrum of every file in the manifest at transform length
/// `n_uniform`. Files are analyzed on the current rayon pool.
pub fn corpus_mean(manifest: &CorpusManifest, n_uniform: usize, epsilon: f64) -> Result<MeanLogSpectrum> {
    manifest_mean(manifest, n_uniform, epsilon, true)
}

/// Single-threaded [`corpus_mean`]; produces bit-identical sums.
pub fn corpus_mean_sequential(
    manifest: &CorpusManifest,
    n_uniform: usize,
    epsilon: f64,
) -> Result<MeanLogSpectrum> {
    manifest_mean(manifest, n_uniform, epsilon, false)
}

/// Mean over all windowed frames of all files, for frame-scale φ.
pub fn corpus_mean_framed(manifest: &CorpusManifest, plan: &FramePlan, epsilon: f64) -> Result<MeanLogSpectrum> {
    let sr = manifest.sample_rate;
    fold_chunked(&manifest.files, plan.n_uniform_frame(), sr, epsilon, true, |path| {
        let buf = load_checked(path, sr)?;
        analyze_framed(&buf, plan, epsilon).map_err(|e| e.in_file(path))
    })
}

fn common_rate(bufs: &[AudioBuffer]) -> Result<u32> {
    let sr = bufs
        .first()
        .ok_or_else(|| Error::InvalidParams("no utterances given".into()))?
        .sample_rate();
    if let Some(b) = bufs.iter().find(|b| b.sample_rate() != sr) {
        return Err(Error::SampleRateMismatch { expected: sr, actual: b.sample_rate() });
    }
    Ok(sr)
}

/// In-memory counterpart of [`corpus_mean`].
pub fn buffers_mean(bufs: &[AudioBuffer], n_uniform: usize, epsilon: f64) -> Result<MeanLogSpectrum> {
    let sr = common_rate(bufs)?;
    fold_chunked(bufs, n_uniform, sr, epsilon, true, |b| Ok(vec![analyze(b, n_uniform, epsilon)?]))
}

/// In-memory counterpart of [`corpus_mean_framed`].
pub fn buffers_mean_framed(bufs: &[AudioBuffer], plan: &FramePlan, epsilon: f64) -> Result<MeanLogSpectrum> {
    let sr = common_rate(bufs)?;
    fold_chunked(bufs, plan.n_uniform_frame(), sr, epsilon, true, |b| analyze_framed(b, plan, epsilon))
}
