//! Room impulse responses: a seeded synthetic generator, WAV loading, and
//! linear convolution used to fabricate reverberant material.
//!
//! The synthetic model is a unit direct-path tap followed by Gaussian noise
//! under an exponential envelope that falls by 60 dB after `t60` seconds.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio_io::{read_wav, write_wav, AudioBuffer, Codec};
use crate::error::{Error, Result};
use crate::fsutil::atomic_write;
use crate::spectral::{irfft, next_pow2, rfft};

/// Above this many multiply-adds `convolve` switches to FFT convolution.
const DIRECT_CONV_LIMIT: usize = 1 << 18;

#[derive(Debug, Clone, PartialEq)]
pub struct RoomImpulseResponse {
    taps: Vec<f64>,
    sample_rate: u32,
    t60: Option<f64>,
    seed: Option<u64>,
    direct_delay: Option<usize>,
}

/// Metadata written next to a synthesized RIR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RirSidecar {
    pub t60: f64,
    pub seed: u64,
    pub direct_delay: usize,
}

impl RoomImpulseResponse {
    /// Wraps measured or hand-built taps; T60 is left unset.
    pub fn from_taps(taps: Vec<f64>, sample_rate: u32) -> Result<Self> {
        let buf = AudioBuffer::new(taps, sample_rate)?;
        Ok(Self {
            taps: buf.into_samples(),
            sample_rate,
            t60: None,
            seed: None,
            direct_delay: None,
        })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn t60(&self) -> Option<f64> {
        self.t60
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn direct_delay(&self) -> Option<usize> {
        self.direct_delay
    }

    pub fn sidecar(&self) -> Option<RirSidecar> {
        Some(RirSidecar {
            t60: self.t60?,
            seed: self.seed?,
            direct_delay: self.direct_delay?,
        })
    }

    pub fn to_audio(&self) -> AudioBuffer {
        AudioBuffer::new(self.taps.clone(), self.sample_rate).expect("taps are validated on construction")
    }
}

/// Amplitude envelope `10^(-3 k / (fs t60))` at `k` samples past the direct
/// path. Power is down 60 dB at `k = fs * t60`.
pub fn decay_envelope(t60: f64, sample_rate: u32, k: usize) -> f64 {
    10f64.powf(-3.0 * k as f64 / (sample_rate as f64 * t60))
}

/// Truncation length used when the caller does not pick one: twice T60.
pub fn default_rir_len(t60: f64, sample_rate: u32) -> usize {
    (2.0 * t60 * sample_rate as f64).ceil() as usize
}

pub fn synth_rir(
    t60: f64,
    sample_rate: u32,
    length: usize,
    direct_delay: usize,
    seed: u64,
) -> Result<RoomImpulseResponse> {
    if !t60.is_finite() || t60 <= 0.0 {
        return Err(Error::InvalidParams(format!("t60 must be positive, got {t60}")));
    }
    if sample_rate == 0 {
        return Err(Error::InvalidParams("sample rate must be positive".into()));
    }
    if length < direct_delay + 1 {
        return Err(Error::InvalidParams(format!(
            "length {length} leaves no room for a direct path at {direct_delay}"
        )));
    }
    let min_len = (t60 * sample_rate as f64).ceil() as usize;
    if length < min_len {
        return Err(Error::InvalidParams(format!(
            "length {length} is shorter than the T60 span of {min_len} samples"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taps = vec![0.0; length];
    taps[direct_delay] = 1.0;
    for (offset, tap) in taps[direct_delay + 1..].iter_mut().enumerate() {
        let g: f64 = StandardNormal.sample(&mut rng);
        *tap = g * decay_envelope(t60, sample_rate, offset + 1);
    }
    Ok(RoomImpulseResponse {
        taps,
        sample_rate,
        t60: Some(t60),
        seed: Some(seed),
        direct_delay: Some(direct_delay),
    })
}

pub fn load_rir(path: impl AsRef<Path>) -> Result<RoomImpulseResponse> {
    let buf = read_wav(path)?;
    let sample_rate = buf.sample_rate();
    RoomImpulseResponse::from_taps(buf.into_samples(), sample_rate)
}

pub fn sidecar_path(wav_path: &Path) -> std::path::PathBuf {
    wav_path.with_extension("json")
}

/// Writes the taps as float32 WAV, plus a JSON sidecar for synthesized RIRs.
pub fn save_rir(path: impl AsRef<Path>, rir: &RoomImpulseResponse) -> Result<()> {
    let path = path.as_ref();
    write_wav(path, &rir.to_audio(), Codec::Float32)?;
    if let Some(meta) = rir.sidecar() {
        let json = serde_json::to_vec_pretty(&meta).map_err(std::io::Error::from)?;
        atomic_write(&sidecar_path(path), |f| {
            use std::io::Write;
            f.write_all(&json)?;
            f.write_all(b"\n")?;
            Ok(())
        })?;
    }
    Ok(())
}

/// Full linear convolution of two sample slices.
pub(crate) fn convolve_slices(a: &[f64], b: &[f64]) -> Vec<f64> {
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 32 || a.len() * b.len() <= DIRECT_CONV_LIMIT {
        let mut out = vec![0.0; out_len];
        for (i, &x) in a.iter().enumerate() {
            for (o, &h) in out[i..].iter_mut().zip(b) {
                *o += x * h;
            }
        }
        return out;
    }
    let n = next_pow2(out_len);
    let fa = rfft(a, n).expect("transform length covers both inputs");
    let fb = rfft(b, n).expect("transform length covers both inputs");
    let prod: Vec<_> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    let mut out = irfft(&prod, n).expect("length matches plan");
    out.truncate(out_len);
    out
}

pub fn convolve(s: &AudioBuffer, h: &RoomImpulseResponse) -> Result<AudioBuffer> {
    if s.sample_rate() != h.sample_rate {
        return Err(Error::SampleRateMismatch {
            expected: s.sample_rate(),
            actual: h.sample_rate,
        });
    }
    AudioBuffer::new(convolve_slices(s.samples(), &h.taps), s.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn direct_conv(a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.len() + b.len() - 1];
        for i in 0..a.len() {
            for j in 0..b.len() {
                out[i + j] += a[i] * b[j];
            }
        }
        out
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn envelope_hits_minus_60_db_at_t60() {
        assert!((decay_envelope(0.5, 16000, 8000) - 1e-3).abs() < 1e-15);
        assert!((decay_envelope(0.7, 16000, 11200) - 1e-3).abs() < 1e-15);
        let rir = synth_rir(0.7, 16000, 16384, 0, 1).unwrap();
        assert_eq!(rir.len(), 16384);
        assert_eq!(rir.taps()[0], 1.0);
    }

    #[test]
    fn synth_is_deterministic_and_delayed() {
        let a = synth_rir(0.3, 16000, 6000, 40, 7).unwrap();
        let b = synth_rir(0.3, 16000, 6000, 40, 7).unwrap();
        let c = synth_rir(0.3, 16000, 6000, 40, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.taps(), c.taps());
        assert!(a.taps()[..40].iter().all(|&x| x == 0.0));
        assert_eq!(a.taps()[40], 1.0);
        assert_eq!(a.sidecar(), Some(RirSidecar { t60: 0.3, seed: 7, direct_delay: 40 }));
    }

    #[test]
    fn synth_rejects_bad_params() {
        assert!(synth_rir(0.0, 16000, 100, 0, 0).is_err());
        assert!(synth_rir(-1.0, 16000, 100, 0, 0).is_err());
        assert!(synth_rir(0.001, 16000, 10, 10, 0).is_err());
        assert!(synth_rir(0.5, 16000, 7999, 0, 0).is_err());
        assert!(synth_rir(0.5, 0, 8000, 0, 0).is_err());
    }

    #[test]
    fn envelope_energy_beyond_t60() {
        let (t60, fs, delay) = (0.25, 16000u32, 10usize);
        let len = default_rir_len(t60, fs) + delay;
        let span = (t60 * fs as f64) as usize;
        let env2: Vec<f64> = (0..len - delay)
            .map(|k| decay_envelope(t60, fs, k).powi(2))
            .collect();
        let total: f64 = env2.iter().sum();
        let tail: f64 = env2[span..].iter().sum();
        assert!(tail / total <= 1e-6, "tail fraction {}", tail / total);
    }

    #[test]
    fn convolve_cases() {
        let x = AudioBuffer::new(vec![0.3, -0.2, 0.9], 8000).unwrap();
        let delta = RoomImpulseResponse::from_taps(vec![1.0], 8000).unwrap();
        assert_eq!(convolve(&x, &delta).unwrap(), x);

        let a = AudioBuffer::new(vec![1.0, 2.0], 8000).unwrap();
        let b = RoomImpulseResponse::from_taps(vec![3.0, 4.0], 8000).unwrap();
        assert_eq!(convolve(&a, &b).unwrap().samples(), &[3.0, 10.0, 8.0]);

        let wrong = RoomImpulseResponse::from_taps(vec![1.0], 16000).unwrap();
        assert!(matches!(convolve(&x, &wrong), Err(Error::SampleRateMismatch { .. })));
    }

    #[test]
    fn convolve_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (ls, lh) in [(50usize, 20usize), (3000, 400), (20000, 3200)] {
            let s: Vec<f64> = (0..ls).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h: Vec<f64> = (0..lh).map(|_| rng.random_range(-1.0..1.0)).collect();
            let got = convolve(
                &AudioBuffer::new(s.clone(), 16000).unwrap(),
                &RoomImpulseResponse::from_taps(h.clone(), 16000).unwrap(),
            )
            .unwrap();
            assert_eq!(got.len(), ls + lh - 1);
            let err = max_abs_diff(got.samples(), &direct_conv(&s, &h));
            assert!(err <= 1e-10, "({ls},{lh}) err={err}");
        }
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rir.wav");
        let rir = synth_rir(0.2, 16000, 3200, 0, 3).unwrap();
        save_rir(&path, &rir).unwrap();
        let loaded = load_rir(&path).unwrap();
        assert_eq!(loaded.t60(), None);
        let as_f32: Vec<f64> = rir.taps().iter().map(|&x| x as f32 as f64).collect();
        assert_eq!(loaded.taps(), &as_f32[..]);
        let meta: RirSidecar =
            serde_json::from_slice(&std::fs::read(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(meta, rir.sidecar().unwrap());

        // Taps representable in f32 survive exactly, and give the same convolution.
        let exact = RoomImpulseResponse::from_taps(as_f32, 16000).unwrap();
        let x = AudioBuffer::new((0..500).map(|i| (i as f64 * 0.1).sin()).collect(), 16000).unwrap();
        assert_eq!(convolve(&x, &exact).unwrap(), convolve(&x, &loaded).unwrap());
    }

    #[test]
    fn stereo_rir_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("st.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(1.0f32).unwrap();
        w.write_sample(1.0f32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(load_rir(&path), Err(Error::UnsupportedFormat(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]
            #[test]
            fn convolution_is_linear(
                x in proptest::collection::vec(-1.0f64..1.0, 1..400),
                seed in any::<u64>(),
                a in -3.0f64..3.0,
                b in -3.0f64..3.0,
            ) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let y: Vec<f64> = (0..x.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let h: Vec<f64> = (0..1 + (seed % 900) as usize).map(|_| rng.random_range(-1.0..1.0)).collect();
                let h = RoomImpulseResponse::from_taps(h, 8000).unwrap();
                let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
                let lhs = convolve(&AudioBuffer::new(mix, 8000).unwrap(), &h).unwrap();
                let cx = convolve(&AudioBuffer::new(x.clone(), 8000).unwrap(), &h).unwrap();
                let cy = convolve(&AudioBuffer::new(y, 8000).unwrap(), &h).unwrap();
                for ((l, p), q) in lhs.samples().iter().zip(cx.samples()).zip(cy.samples()) {
                    prop_assert!((l - (a * p + b * q)).abs() <= 1e-10);
                }
            }
        }
    }
}
