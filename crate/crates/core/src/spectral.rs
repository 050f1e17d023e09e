//! Fixed-length Fourier analysis and the complex log spectrum.
//!
//! Signals are zero-padded to a common transform length `N` and only the
//! non-negative frequency bins `0..=N/2` are kept; the negative half of a
//! real signal's spectrum is its conjugate mirror. In the log domain a
//! spectrum is split into log magnitude (nats) and phase unwrapped along
//! frequency, where convolution of two signals becomes addition.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use std::sync::{Arc, Mutex, OnceLock};

pub use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::audio_io::AudioBuffer;
use crate::error::{Error, Result};

/// Default magnitude floor applied before taking logarithms (about -240 dB).
pub const DEFAULT_EPSILON: f64 = 1e-12;

/// Largest log magnitude accepted on synthesis; `exp(700)` is near the top
/// of the f64 range.
pub const MAX_LOG_MAG: f64 = 700.0;

/// Relative bound on the imaginary part of the DC and Nyquist bins.
const SYMMETRY_TOL: f64 = 1e-9;

struct Plans {
    planner: RealFftPlanner<f64>,
    forward: HashMap<usize, Arc<dyn RealToComplex<f64>>>,
    inverse: HashMap<usize, Arc<dyn ComplexToReal<f64>>>,
}

fn plans() -> &'static Mutex<Plans> {
    static PLANS: OnceLock<Mutex<Plans>> = OnceLock::new();
    PLANS.get_or_init(|| {
        Mutex::new(Plans {
            planner: RealFftPlanner::new(),
            forward: HashMap::new(),
            inverse: HashMap::new(),
        })
    })
}

fn forward_plan(n: usize) -> Arc<dyn RealToComplex<f64>> {
    let mut guard = plans().lock().unwrap_or_else(|e| e.into_inner());
    let Plans { planner, forward, .. } = &mut *guard;
    forward.entry(n).or_insert_with(|| planner.plan_fft_forward(n)).clone()
}

fn inverse_plan(n: usize) -> Arc<dyn ComplexToReal<f64>> {
    let mut guard = plans().lock().unwrap_or_else(|e| e.into_inner());
    let Plans { planner, inverse, .. } = &mut *guard;
    inverse.entry(n).or_insert_with(|| planner.plan_fft_inverse(n)).clone()
}

fn check_transform_len(n_uniform: usize) -> Result<()> {
    if n_uniform < 2 || !n_uniform.is_multiple_of(2) {
        return Err(Error::InvalidParams(format!(
            "transform length must be even and at least 2, got {n_uniform}"
        )));
    }
    Ok(())
}

/// Real DFT of a zero-padded slice. `n_uniform` must be even and at least
/// `signal.len()`.
pub(crate) fn rfft(signal: &[f64], n_uniform: usize) -> Result<Vec<Complex64>> {
    check_transform_len(n_uniform)?;
    if signal.len() > n_uniform {
        return Err(Error::TooLong { len: signal.len(), n_uniform });
    }
    let plan = forward_plan(n_uniform);
    let mut input = vec![0.0; n_uniform];
    input[..signal.len()].copy_from_slice(signal);
    let mut output = plan.make_output_vec();
    plan.process(&mut input, &mut output)
        .map_err(|e| Error::InvalidParams(e.to_string()))?;
    output[0].im = 0.0;
    output[n_uniform / 2].im = 0.0;
    Ok(output)
}

/// Inverse of [`rfft`]; DC and Nyquist imaginary parts are ignored.
pub(crate) fn irfft(bins: &[Complex64], n_uniform: usize) -> Result<Vec<f64>> {
    check_transform_len(n_uniform)?;
    if bins.len() != n_uniform / 2 + 1 {
        return Err(Error::LengthMismatch { expected: n_uniform / 2 + 1, actual: bins.len() });
    }
    let plan = inverse_plan(n_uniform);
    let mut input = bins.to_vec();
    input[0].im = 0.0;
    input[n_uniform / 2].im = 0.0;
    let mut output = plan.make_output_vec();
    plan.process(&mut input, &mut output)
        .map_err(|e| Error::InvalidParams(e.to_string()))?;
    let scale = 1.0 / n_uniform as f64;
    output.iter_mut().for_each(|x| *x *= scale);
    Ok(output)
}

pub fn next_pow2(n: usize) -> usize {
    n.max(2).next_power_of_two()
}

/// Non-negative frequency half of a real signal's DFT.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    bins: Vec<Complex64>,
    n_uniform: usize,
    sample_rate: u32,
}

impl ComplexSpectrum {
    pub fn new(bins: Vec<Complex64>, n_uniform: usize, sample_rate: u32) -> Result<Self> {
        check_transform_len(n_uniform)?;
        if bins.len() != n_uniform / 2 + 1 {
            return Err(Error::LengthMismatch { expected: n_uniform / 2 + 1, actual: bins.len() });
        }
        if sample_rate == 0 {
            return Err(Error::InvalidParams("sample rate must be positive".into()));
        }
        Ok(Self { bins, n_uniform, sample_rate })
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    pub fn n_uniform(&self) -> usize {
        self.n_uniform
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_bins(&self) -> usize {
        self.bins.len()
    }
}

/// Per-bin log magnitude and unwrapped phase.
///
/// `log_mag[k] >= ln(epsilon)` and successive phases differ by at most π
/// when produced by [`to_log_spectrum`].
#[derive(Debug, Clone, PartialEq)]
pub struct LogSpectrum {
    log_mag: Vec<f64>,
    phase: Vec<f64>,
    n_uniform: usize,
    sample_rate: u32,
    epsilon: f64,
}

impl LogSpectrum {
    pub fn new(
        log_mag: Vec<f64>,
        phase: Vec<f64>,
        n_uniform: usize,
        sample_rate: u32,
        epsilon: f64,
    ) -> Result<Self> {
        check_transform_len(n_uniform)?;
        let bins = n_uniform / 2 + 1;
        for v in [&log_mag, &phase] {
            if v.len() != bins {
                return Err(Error::LengthMismatch { expected: bins, actual: v.len() });
            }
        }
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::InvalidParams(format!("epsilon must be positive, got {epsilon}")));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidParams("sample rate must be positive".into()));
        }
        if log_mag.iter().chain(&phase).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("log spectrum holds non-finite values".into()));
        }
        Ok(Self { log_mag, phase, n_uniform, sample_rate, epsilon })
    }

    pub fn log_mag(&self) -> &[f64] {
        &self.log_mag
    }

    pub fn phase(&self) -> &[f64] {
        &self.phase
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

    pub fn num_bins(&self) -> usize {
        self.log_mag.len()
    }
}

pub fn zero_pad(buf: &AudioBuffer, n_uniform: usize) -> Result<AudioBuffer> {
    if buf.len() > n_uniform {
        return Err(Error::TooLong { len: buf.len(), n_uniform });
    }
    let mut samples = buf.samples().to_vec();
    samples.resize(n_uniform, 0.0);
    AudioBuffer::new(samples, buf.sample_rate())
}

pub fn forward(buf: &AudioBuffer, n_uniform: usize) -> Result<ComplexSpectrum> {
    let bins = rfft(buf.samples(), n_uniform)?;
    ComplexSpectrum::new(bins, n_uniform, buf.sample_rate())
}

/// Reconstructs the length-`N` real signal from its non-negative bins.
pub fn inverse(spec: &ComplexSpectrum) -> Result<AudioBuffer> {
    let n = spec.n_uniform;
    let scale = spec.bins.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let tol = SYMMETRY_TOL * scale;
    for bin in [0, n / 2] {
        let imag = spec.bins[bin].im;
        if imag.abs() > tol {
            return Err(Error::SymmetryViolation { bin, imag });
        }
    }
    AudioBuffer::new(irfft(&spec.bins, n)?, spec.sample_rate)
}

/// Unwraps a phase sequence so that successive values differ by at most π.
///
/// The first value is kept. Each later value is shifted by the multiple of
/// 2π that lands it within π of its unwrapped predecessor; when both
/// `prev - π` and `prev + π` are reachable the lower one is taken.
pub fn unwrap_phase(p: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(p.len());
    let Some((&first, rest)) = p.split_first() else {
        return out;
    };
    out.push(first);
    let mut prev = first;
    for &x in rest {
        let mut t = ((-PI - (x - prev)) / TAU).ceil();
        let mut y = x + TAU * t;
        while y - prev > PI {
            t -= 1.0;
            y = x + TAU * t;
        }
        while y - prev < -PI {
            t += 1.0;
            y = x + TAU * t;
        }
        if y - prev == PI {
            let lower = x + TAU * (t - 1.0);
            if lower - prev >= -PI {
                y = lower;
            }
        }
        out.push(y);
        prev = y;
    }
    out
}

/// Principal phase of a bin; the DC and Nyquist bins of a real signal are
/// real, so their phase is 0 or π.
fn principal_phase(c: Complex64, edge: bool) -> f64 {
    if edge {
        if c.re >= 0.0 {
            0.0
        } else {
            PI
        }
    } else {
        c.im.atan2(c.re)
    }
}

pub fn to_log_spectrum(spec: &ComplexSpectrum, epsilon: f64) -> Result<LogSpectrum> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidParams(format!("epsilon must be positive, got {epsilon}")));
    }
    let last = spec.bins.len() - 1;
    let log_mag = spec.bins.iter().map(|c| c.norm().max(epsilon).ln()).collect();
    let wrapped: Vec<f64> = spec
        .bins
        .iter()
        .enumerate()
        .map(|(k, &c)| principal_phase(c, k == 0 || k == last))
        .collect();
    Ok(LogSpectrum {
        log_mag,
        phase: unwrap_phase(&wrapped),
        n_uniform: spec.n_uniform,
        sample_rate: spec.sample_rate,
        epsilon,
    })
}

/// Exponentiates log magnitude and phase back into bins, forcing the DC and
/// Nyquist bins real.
pub(crate) fn synthesize(
    log_mag: &[f64],
    phase: &[f64],
    n_uniform: usize,
    sample_rate: u32,
) -> Result<ComplexSpectrum> {
    if let Some((bin, &value)) = log_mag.iter().enumerate().find(|(_, v)| v.is_nan() || **v > MAX_LOG_MAG) {
        return Err(Error::Overflow { bin, value });
    }
    let last = log_mag.len() - 1;
    let bins = log_mag
        .iter()
        .zip(phase)
        .enumerate()
        .map(|(k, (&m, &p))| {
            let c = Complex64::from_polar(m.exp(), p);
            if k == 0 || k == last {
                Complex64::new(c.re, 0.0)
            } else {
                c
            }
        })
        .collect();
    ComplexSpectrum::new(bins, n_uniform, sample_rate)
}

pub fn from_log_spectrum(ls: &LogSpectrum) -> Result<ComplexSpectrum> {
    synthesize(&ls.log_mag, &ls.phase, ls.n_uniform, ls.sample_rate)
}
