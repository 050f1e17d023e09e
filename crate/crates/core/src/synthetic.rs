//! Seeded speech-like test material.
//!
//! Utterances are Gaussian noise shaped by a random two-pole resonance and
//! a spectral tilt, under a syllable-rate amplitude envelope. They carry no
//! linguistic content but have the non-white long-term spectrum and the
//! slow energy modulation that the normalization relies on.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio_io::AudioBuffer;

/// Draws one utterance with a duration uniform in `[min_secs, max_secs]`.
pub fn utterance<R: Rng + ?Sized>(rng: &mut R, sample_rate: u32, min_secs: f64, max_secs: f64) -> AudioBuffer {
    let fs = sample_rate as f64;
    let secs = if max_secs > min_secs { rng.random_range(min_secs..max_secs) } else { min_secs };
    let len = ((secs * fs).round() as usize).max(1);

    // two-pole resonance
    let centre = rng.random_range(300.0..3000.0);
    let radius: f64 = rng.random_range(0.85..0.97);
    let theta = 2.0 * PI * centre / fs;
    let (a1, a2) = (2.0 * radius * theta.cos(), -radius * radius);
    // first-order low-pass tilt
    let tilt: f64 = rng.random_range(0.3..0.7);

    let mut y1 = 0.0;
    let mut y2 = 0.0;
    let mut lp = 0.0;
    let mut x: Vec<f64> = (0..len)
        .map(|_| {
            let w: f64 = StandardNormal.sample(rng);
            let y = w + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            lp = tilt * lp + (1.0 - tilt) * y;
            lp
        })
        .collect();

    // syllable-rate envelope, floored so no stretch is silent
    let rate = rng.random_range(3.0..6.0);
    let phase = rng.random_range(0.0..2.0 * PI);
    let depth = rng.random_range(0.3..0.8);
    for (n, v) in x.iter_mut().enumerate() {
        let t = n as f64 / fs;
        let env = 1.0 - depth * 0.5 * (1.0 + (2.0 * PI * rate * t + phase).cos());
        *v *= env.max(0.05);
    }

    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = rng.random_range(0.2..0.6) / peak.max(f64::MIN_POSITIVE);
    x.iter_mut().for_each(|v| *v *= gain);
    AudioBuffer::new(x, sample_rate).expect("synthesized samples are finite")
}

/// `count` utterances of 1–2 s each.
pub fn corpus<R: Rng + ?Sized>(rng: &mut R, sample_rate: u32, count: usize) -> Vec<AudioBuffer> {
    (0..count).map(|_| utterance(rng, sample_rate, 1.0, 2.0)).collect()
}
