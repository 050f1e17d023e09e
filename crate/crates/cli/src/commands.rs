use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dereverb::audio_io::{read_wav, write_wav};
use dereverb::corpus::{choose_n_uniform, corpus_mean, corpus_mean_framed, CorpusManifest};
use dereverb::metrics::{aligned_rmse, log_spectral_distance, phi_accuracy};
use dereverb::normalize::{apply_framed, apply_utterance, estimate_phi, load_phi, overlap_add, save_phi, trim_trailing};
use dereverb::rir::{convolve, default_rir_len, load_rir, save_rir, synth_rir};
use dereverb::{AudioBuffer, Codec, EvalReport, FramePlan};
use rayon::prelude::*;

use crate::Command;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] dereverb::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{failed} of {total} files failed")]
    Partial { failed: usize, total: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_validation() => 2,
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::SynthRir { t60, fs, len, delay, seed, out } => synth_rir_cmd(t60, fs, len, delay, seed, &out),
        Command::Convolve { manifest, rir, out_dir, out_manifest, codec } => {
            let out_manifest = out_manifest.unwrap_or_else(|| out_dir.join("manifest.json"));
            convolve_cmd(&manifest, &rir, &out_dir, &out_manifest, codec)
        }
        Command::Estimate {
            reverb_manifest,
            clean_manifest,
            out,
            n_uniform,
            epsilon,
            headroom_sec,
            frame_scale,
            frame_sec,
            overlap,
        } => {
            let frames = frame_scale.then_some((frame_sec, overlap));
            estimate_cmd(&reverb_manifest, &clean_manifest, &out, n_uniform, epsilon, headroom_sec, frames)
        }
        Command::Apply { phi, input, out, trim, codec } => apply_cmd(&phi, &input, &out, trim, codec),
        Command::ApplyFramed { phi, input, out_dir, frame_sec, overlap, n_uniform, reconstruct, codec } => {
            apply_framed_cmd(&phi, &input, &out_dir, frame_sec, overlap, n_uniform, reconstruct, codec)
        }
        Command::Evaluate { reference, est, phi, rir, out, crop, max_lag, lsd_frame_sec } => {
            let truth = phi.zip(rir);
            evaluate_cmd(&reference, &est, truth.as_ref(), out.as_deref(), crop, max_lag, lsd_frame_sec)
        }
    }
}

fn synth_rir_cmd(t60: f64, fs: u32, len: Option<usize>, delay: usize, seed: u64, out: &Path) -> Result<()> {
    if !t60.is_finite() || t60 <= 0.0 {
        return Err(CliError::Usage(format!("--t60 must be positive, got {t60}")));
    }
    if fs == 0 {
        return Err(CliError::Usage("--fs must be positive".into()));
    }
    let len = len.unwrap_or_else(|| default_rir_len(t60, fs));
    let rir = synth_rir(t60, fs, len, delay, seed)?;
    save_rir(out, &rir)?;
    println!("t60={t60} s len={len} samples fs={fs} -> {}", out.display());
    Ok(())
}

/// Output location of `file` under `out_dir`, mirroring its position
/// below the manifest directory.
fn mirrored(file: &Path, manifest_dir: &Path, out_dir: &Path) -> PathBuf {
    match file.strip_prefix(manifest_dir) {
        Ok(rel) => out_dir.join(rel),
        Err(_) => out_dir.join(file.file_name().unwrap_or(file.as_os_str())),
    }
}

fn convolve_cmd(manifest_path: &Path, rir_path: &Path, out_dir: &Path, out_manifest: &Path, codec: Codec) -> Result<()> {
    let manifest = CorpusManifest::load(manifest_path)?;
    let rir = load_rir(rir_path).map_err(|e| e.in_file(rir_path))?;
    if rir.sample_rate() != manifest.sample_rate() {
        return Err(dereverb::Error::SampleRateMismatch {
            expected: manifest.sample_rate(),
            actual: rir.sample_rate(),
        }
        .in_file(rir_path)
        .into());
    }
    let manifest_dir = manifest_path.parent().unwrap_or(Path::new(""));
    let results: Vec<std::result::Result<PathBuf, (PathBuf, CliError)>> = manifest
        .files()
        .par_iter()
        .map(|f| {
            let target = mirrored(f, manifest_dir, out_dir);
            let run = || -> Result<()> {
                let s = read_wav(f)?;
                if s.sample_rate() != manifest.sample_rate() {
                    return Err(dereverb::Error::SampleRateMismatch {
                        expected: manifest.sample_rate(),
                        actual: s.sample_rate(),
                    }
                    .into());
                }
                if let Some(parent) = target.parent() {
                    std::fs::create_dir_all(parent)?;
                }
                write_wav(&target, &convolve(&s, &rir)?, codec)?;
                Ok(())
            };
            run().map(|()| target).map_err(|e| (f.clone(), e))
        })
        .collect();

    let total = results.len();
    let mut outputs = Vec::with_capacity(total);
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(p) => outputs.push(p),
            Err(e) => failed.push(e),
        }
    }
    if !failed.is_empty() {
        eprintln!("failed files:");
        for (path, e) in &failed {
            eprintln!("  {}: {e}", path.display());
        }
        return Err(CliError::Partial { failed: failed.len(), total });
    }
    CorpusManifest::new(outputs, manifest.sample_rate())?.save(out_manifest)?;
    println!("convolved {total} files -> {}", out_manifest.display());
    Ok(())
}

fn estimate_cmd(
    reverb_path: &Path,
    clean_path: &Path,
    out: &Path,
    n_uniform: Option<usize>,
    epsilon: f64,
    headroom_sec: f64,
    frames: Option<(f64, f64)>,
) -> Result<()> {
    let start = Instant::now();
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(CliError::Usage(format!("--epsilon must be positive, got {epsilon}")));
    }
    if !headroom_sec.is_finite() || headroom_sec < 0.0 {
        return Err(CliError::Usage(format!("--headroom-sec must be non-negative, got {headroom_sec}")));
    }
    let reverb = CorpusManifest::load(reverb_path)?;
    let clean = CorpusManifest::load(clean_path)?;
    if reverb.sample_rate() != clean.sample_rate() {
        return Err(dereverb::Error::MetadataMismatch(format!(
            "reverberant manifest is at {} Hz but clean manifest is at {} Hz",
            reverb.sample_rate(),
            clean.sample_rate()
        ))
        .into());
    }
    let sr = reverb.sample_rate();
    let (mr, mc, n) = match frames {
        Some((frame_sec, overlap)) => {
            let plan = FramePlan::from_seconds(frame_sec, overlap, sr, n_uniform)?;
            let mr = corpus_mean_framed(&reverb, &plan, epsilon)?;
            let mc = corpus_mean_framed(&clean, &plan, epsilon)?;
            (mr, mc, plan.n_uniform_frame())
        }
        None => {
            let n = match n_uniform {
                Some(n) => n,
                None => choose_n_uniform(&[&reverb, &clean], (headroom_sec * sr as f64).ceil() as usize)?,
            };
            (corpus_mean(&reverb, n, epsilon)?, corpus_mean(&clean, n, epsilon)?, n)
        }
    };
    let phi = estimate_phi(&mr, &mc)?;
    save_phi(&phi, out)?;
    let scale = if frames.is_some() { "frame" } else { "utterance" };
    println!(
        "n_uniform={n} scale={scale} reverb_count={} clean_count={} elapsed={:.3}s -> {}",
        mr.count(),
        mc.count(),
        start.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(())
}

fn apply_cmd(phi_path: &Path, input: &Path, out: &Path, trim: bool, codec: Codec) -> Result<()> {
    let phi = load_phi(phi_path).map_err(|e| e.in_file(phi_path))?;
    let o = read_wav(input).map_err(|e| e.in_file(input))?;
    let y = match apply_utterance(&o, &phi) {
        Err(dereverb::Error::TooLong { len, n_uniform }) => {
            return Err(CliError::Usage(format!(
                "{} has {len} samples but φ covers only {n_uniform}; \
                 utterance-wise normalization needs a φ estimated without --frame-scale over long enough files",
                input.display()
            )))
        }
        r => r?,
    };
    let y = if trim { trim_trailing(&y) } else { y };
    write_wav(out, &y, codec)?;
    println!("{} samples -> {}", y.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn apply_framed_cmd(
    phi_path: &Path,
    input: &Path,
    out_dir: &Path,
    frame_sec: f64,
    overlap: f64,
    n_uniform: Option<usize>,
    reconstruct: bool,
    codec: Codec,
) -> Result<()> {
    let phi = load_phi(phi_path).map_err(|e| e.in_file(phi_path))?;
    let o = read_wav(input).map_err(|e| e.in_file(input))?;
    let plan = FramePlan::from_seconds(frame_sec, overlap, o.sample_rate(), n_uniform)?;
    if phi.n_uniform() != plan.n_uniform_frame() {
        return Err(CliError::Usage(format!(
            "φ has transform length {} but {frame_sec} s frames use {}; \
             frame-wise normalization needs a φ from `estimate --frame-scale` with the same frame settings",
            phi.n_uniform(),
            plan.n_uniform_frame()
        )));
    }
    let frames = apply_framed(&o, &phi, &plan)?;
    std::fs::create_dir_all(out_dir)?;
    frames
        .par_iter()
        .enumerate()
        .try_for_each(|(m, f)| write_wav(out_dir.join(format!("frame_{m:05}.wav")), f, codec).map(drop))?;
    print!("{} frames of {} samples", frames.len(), plan.frame_len());
    if reconstruct {
        let y = overlap_add(&frames, &plan)?;
        let path = out_dir.join("reconstructed.wav");
        write_wav(&path, &y, codec)?;
        print!(", reconstructed {} samples", y.len());
    }
    println!(" -> {}", out_dir.display());
    Ok(())
}

fn crop_to(buf: AudioBuffer, len: usize) -> Result<AudioBuffer> {
    if buf.len() <= len {
        return Ok(buf);
    }
    let sr = buf.sample_rate();
    let mut x = buf.into_samples();
    x.truncate(len);
    Ok(AudioBuffer::new(x, sr)?)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn evaluate_cmd(
    reference: &Path,
    est: &Path,
    truth: Option<&(PathBuf, PathBuf)>,
    out: Option<&Path>,
    crop: bool,
    max_lag: usize,
    lsd_frame_sec: f64,
) -> Result<()> {
    let r = read_wav(reference).map_err(|e| e.in_file(reference))?;
    let e = read_wav(est).map_err(|e| e.in_file(est))?;
    let e = if crop { crop_to(e, r.len())? } else { e };
    let plan = FramePlan::from_seconds(lsd_frame_sec, 0.5, r.sample_rate(), None)?;
    let phi_mag_err = match truth {
        Some((phi_path, rir_path)) => {
            let phi = load_phi(phi_path).map_err(|e| e.in_file(phi_path))?;
            let h = load_rir(rir_path).map_err(|e| e.in_file(rir_path))?;
            Some(phi_accuracy(&phi, &h)?)
        }
        None => None,
    };
    let report = EvalReport {
        lsd_db: log_spectral_distance(&e, &r, &plan)?,
        time_domain_rmse: aligned_rmse(&r, &e, max_lag)?,
        phi_mag_err,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    println!("{json}");
    if let Some(path) = out {
        write_atomic(path, format!("{json}\n").as_bytes())?;
    }
    Ok(())
}
