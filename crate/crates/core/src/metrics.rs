//! Objective measures of dereverberation quality and of φ accuracy.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::audio_io::AudioBuffer;
use crate::error::{Error, Result};
use crate::normalize::{FramePlan, NormalizationVector};
use crate::rir::RoomImpulseResponse;
use crate::spectral::{rfft, DEFAULT_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub lsd_db: f64,
    pub time_domain_rmse: f64,
    /// Absent unless both a φ and its ground-truth RIR were supplied.
    pub phi_mag_err: Option<f64>,
}

fn check_rates(a: &AudioBuffer, b: &AudioBuffer) -> Result<()> {
    if a.sample_rate() != b.sample_rate() {
        return Err(Error::SampleRateMismatch { expected: a.sample_rate(), actual: b.sample_rate() });
    }
    Ok(())
}

fn padded(buf: &AudioBuffer, len: usize) -> AudioBuffer {
    let mut x = buf.samples().to_vec();
    x.resize(len, 0.0);
    AudioBuffer::new(x, buf.sample_rate()).expect("padding keeps samples finite")
}

/// Mean over frames of the RMS difference, in dB, between the magnitude
/// spectra of `a` and `b`. The shorter signal is zero-padded.
pub fn log_spectral_distance(a: &AudioBuffer, b: &AudioBuffer, plan: &FramePlan) -> Result<f64> {
    check_rates(a, b)?;
    let len = a.len().max(b.len());
    let fa = plan.frames(&padded(a, len))?;
    let fb = plan.frames(&padded(b, len))?;
    let n = plan.n_uniform_frame();
    let db = |c: realfft::num_complex::Complex64| 20.0 * (c.norm() + DEFAULT_EPSILON).log10();
    let mut total = 0.0;
    for (x, y) in fa.iter().zip(&fb) {
        let sx = rfft(x.samples(), n)?;
        let sy = rfft(y.samples(), n)?;
        let mse = sx.iter().zip(&sy).map(|(p, q)| (db(*p) - db(*q)).powi(2)).sum::<f64>() / sx.len() as f64;
        total += mse.sqrt();
    }
    Ok(total / fa.len() as f64)
}

/// Ground-truth log magnitude of `h` at φ's resolution, with the mask of
/// bins whose magnitude clears ten times φ's floor.
fn rir_log_mag(phi: &NormalizationVector, h: &RoomImpulseResponse) -> Result<(Vec<f64>, Vec<bool>)> {
    if h.sample_rate() != phi.sample_rate() {
        return Err(Error::MetadataMismatch(format!(
            "RIR at {} Hz vs φ at {} Hz",
            h.sample_rate(),
            phi.sample_rate()
        )));
    }
    if h.len() > phi.n_uniform() {
        return Err(Error::MetadataMismatch(format!(
            "RIR of {} taps exceeds φ transform length {}",
            h.len(),
            phi.n_uniform()
        )));
    }
    let spec = rfft(h.taps(), phi.n_uniform())?;
    let floor = 10.0 * phi.epsilon();
    Ok((
        spec.iter().map(|c| c.norm().max(phi.epsilon()).ln()).collect(),
        spec.iter().map(|c| c.norm() > floor).collect(),
    ))
}

/// Mean absolute error (nats) between φ's log magnitude and that of the
/// true RIR, over bins where the RIR clears ten times the floor.
pub fn phi_accuracy(phi: &NormalizationVector, h: &RoomImpulseResponse) -> Result<f64> {
    let (truth, mask) = rir_log_mag(phi, h)?;
    let (sum, count) = phi
        .delta_log_mag()
        .iter()
        .zip(&truth)
        .zip(&mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, c), ((p, t), _)| (s + (p - t).abs(), c + 1));
    if count == 0 {
        return Err(Error::InvalidParams("RIR has no bins above the magnitude floor".into()));
    }
    Ok(sum / count as f64)
}

/// Mean absolute wrapped difference (radians) between φ's phase and the
/// RIR's phase on qualifying bins. Diagnostic only.
pub fn phi_phase_error(phi: &NormalizationVector, h: &RoomImpulseResponse) -> Result<f64> {
    let (_, mask) = rir_log_mag(phi, h)?;
    let spec = rfft(h.taps(), phi.n_uniform())?;
    let (sum, count) = phi
        .delta_phase()
        .iter()
        .zip(&spec)
        .zip(&mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, c), ((p, z), _)| {
            let d = (p - z.arg() + PI).rem_euclid(TAU) - PI;
            (s + d.abs(), c + 1)
        });
    if count == 0 {
        return Err(Error::InvalidParams("RIR has no bins above the magnitude floor".into()));
    }
    Ok(sum / count as f64)
}

/// Minimum RMS error between `reference` and `est` over integer lags in
/// `[-max_lag, max_lag]` and the least-squares gain at each lag. A positive
/// lag compares `reference[n]` with `est[n + lag]`. Both signals are
/// zero-extended to the longer length.
pub fn aligned_rmse(reference: &AudioBuffer, est: &AudioBuffer, max_lag: usize) -> Result<f64> {
    check_rates(reference, est)?;
    let r = reference.samples();
    let e = est.samples();
    let len = r.len().max(e.len());
    let at = |x: &[f64], i: isize| if i >= 0 { x.get(i as usize).copied().unwrap_or(0.0) } else { 0.0 };
    let lag = max_lag as isize;
    let mut best = f64::INFINITY;
    for l in -lag..=lag {
        let (mut re, mut ee) = (0.0, 0.0);
        for n in 0..len as isize {
            let y = at(e, n + l);
            re += at(r, n) * y;
            ee += y * y;
        }
        let g = if ee > 0.0 { re / ee } else { 0.0 };
        let sse: f64 = (0..len as isize)
            .map(|n| (at(r, n) - g * at(e, n + l)).powi(2))
            .sum();
        best = best.min((sse / len as f64).sqrt());
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::analyze;
    use crate::normalize::{estimate_phi, Provenance};
    use crate::corpus::buffers_mean;
    use crate::rir::synth_rir;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_buf(rng: &mut ChaCha8Rng, len: usize) -> AudioBuffer {
        AudioBuffer::new((0..len).map(|_| rng.random_range(-0.5..0.5)).collect(), 8000).unwrap()
    }

    fn scaled(b: &AudioBuffer, g: f64) -> AudioBuffer {
        AudioBuffer::new(b.samples().iter().map(|x| x * g).collect(), b.sample_rate()).unwrap()
    }

    /// Textbook LSD written without the crate's framing or FFT helpers.
    fn reference_lsd(a: &[f64], b: &[f64], frame_len: usize, n: usize) -> f64 {
        let len = a.len().max(b.len());
        let hop = frame_len / 2;
        let frames = len.div_ceil(hop).max(1);
        let w: Vec<f64> = (0..frame_len)
            .map(|i| 0.5 - 0.5 * (TAU * i as f64 / frame_len as f64).cos())
            .collect();
        let spectrum_db = |x: &[f64], start: usize| -> Vec<f64> {
            (0..=n / 2)
                .map(|k| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (i, wi) in w.iter().enumerate() {
                        let v = wi * x.get(start + i).copied().unwrap_or(0.0);
                        let ang = -TAU * (k * i) as f64 / n as f64;
                        re += v * ang.cos();
                        im += v * ang.sin();
                    }
                    20.0 * ((re * re + im * im).sqrt() + 1e-12).log10()
                })
                .collect()
        };
        let mut total = 0.0;
        for m in 0..frames {
            let da = spectrum_db(a, m * hop);
            let db = spectrum_db(b, m * hop);
            let mse: f64 = da.iter().zip(&db).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / da.len() as f64;
            total += mse.sqrt();
        }
        total / frames as f64
    }

    #[test]
    fn lsd_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let plan = FramePlan::new(64, 128).unwrap();
        let a = random_buf(&mut rng, 500);
        assert_eq!(log_spectral_distance(&a, &a, &plan).unwrap(), 0.0);

        let doubled = scaled(&a, 2.0);
        let lsd = log_spectral_distance(&doubled, &a, &plan).unwrap();
        assert!((lsd - 20.0 * 2f64.log10()).abs() < 1e-6, "lsd={lsd}");

        let b = random_buf(&mut rng, 430);
        let got = log_spectral_distance(&a, &b, &plan).unwrap();
        let oracle = reference_lsd(a.samples(), b.samples(), 64, 128);
        assert!((got - oracle).abs() <= 1e-9, "{got} vs {oracle}");
        assert_eq!(got, log_spectral_distance(&b, &a, &plan).unwrap());

        // gain invariance holds wherever neither frame sits on the floor
        let c = random_buf(&mut rng, 500);
        let base = log_spectral_distance(&a, &c, &plan).unwrap();
        let common = log_spectral_distance(&scaled(&a, 3.7), &scaled(&c, 3.7), &plan).unwrap();
        assert!((common - base).abs() < 1e-6);

        let other = AudioBuffer::new(vec![0.0; 10], 16000).unwrap();
        assert!(matches!(log_spectral_distance(&a, &other, &plan), Err(Error::SampleRateMismatch { .. })));
    }

    #[test]
    fn phi_accuracy_cases() {
        let n = 4096;
        let h = synth_rir(0.05, 8000, 400, 0, 3).unwrap();
        let exact = NormalizationVector::from_log_spectrum(&analyze(&h.to_audio(), n, DEFAULT_EPSILON).unwrap());
        assert_eq!(phi_accuracy(&exact, &h).unwrap(), 0.0);
        assert!(phi_phase_error(&exact, &h).unwrap() < 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bufs: Vec<_> = (0..4).map(|_| random_buf(&mut rng, 1000)).collect();
        let m = buffers_mean(&bufs, n, DEFAULT_EPSILON).unwrap();
        let zero = estimate_phi(&m, &m).unwrap();
        let delta = RoomImpulseResponse::from_taps(vec![1.0], 8000).unwrap();
        assert!(phi_accuracy(&zero, &delta).unwrap() <= 1e-9);

        let off = NormalizationVector::new(
            exact.delta_log_mag().iter().map(|v| v + 0.25).collect(),
            exact.delta_phase().to_vec(),
            n,
            8000,
            DEFAULT_EPSILON,
            Provenance::default(),
        )
        .unwrap();
        assert!((phi_accuracy(&off, &h).unwrap() - 0.25).abs() < 1e-12);

        let wrong_rate = RoomImpulseResponse::from_taps(vec![1.0], 16000).unwrap();
        assert!(matches!(phi_accuracy(&zero, &wrong_rate), Err(Error::MetadataMismatch(_))));
    }

    /// For each lag, minimizes squared error over the gain by golden-section
    /// search rather than the closed form.
    fn brute_force_rmse(r: &[f64], e: &[f64], max_lag: isize) -> f64 {
        let len = r.len().max(e.len()) as isize;
        let get = |x: &[f64], i: isize| if i >= 0 && (i as usize) < x.len() { x[i as usize] } else { 0.0 };
        let mut best = f64::INFINITY;
        for l in -max_lag..=max_lag {
            let cost = |g: f64| -> f64 {
                (0..len).map(|n| (get(r, n) - g * get(e, n + l)).powi(2)).sum::<f64>() / len as f64
            };
            let (mut lo, mut hi) = (-100.0f64, 100.0f64);
            let phi = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..200 {
                let a = hi - phi * (hi - lo);
                let b = lo + phi * (hi - lo);
                if cost(a) < cost(b) {
                    hi = b;
                } else {
                    lo = a;
                }
            }
            best = best.min(cost(0.5 * (lo + hi)).sqrt());
        }
        best
    }

    #[test]
    fn aligned_rmse_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = random_buf(&mut rng, 200);
        assert_eq!(aligned_rmse(&r, &r, 5).unwrap(), 0.0);

        let mut delayed = vec![0.0; 3];
        delayed.extend(r.samples().iter().map(|x| 0.5 * x));
        let est = AudioBuffer::new(delayed, 8000).unwrap();
        assert_eq!(aligned_rmse(&r, &est, 5).unwrap(), 0.0);

        let e = random_buf(&mut rng, 180);
        let got = aligned_rmse(&r, &e, 6).unwrap();
        let oracle = brute_force_rmse(r.samples(), e.samples(), 6);
        assert!((got - oracle).abs() <= 1e-9, "{got} vs {oracle}");

        let plain = (r.samples().iter().zip(e.samples().iter().chain(std::iter::repeat(&0.0)))
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / 200.0)
            .sqrt();
        assert!(got <= plain + 1e-15);

        let other = AudioBuffer::new(vec![0.0; 10], 16000).unwrap();
        assert!(aligned_rmse(&r, &other, 1).is_err());
    }

    #[test]
    fn report_json_keys() {
        let rep = EvalReport { lsd_db: 1.0, time_domain_rmse: 0.5, phi_mag_err: Some(0.1) };
        let v: serde_json::Value = serde_json::to_value(rep).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["lsd_db", "phi_mag_err", "time_domain_rmse"]);
    }
}
