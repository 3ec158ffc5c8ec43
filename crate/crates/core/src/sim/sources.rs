//! Synthetic stand-ins for speech and noise corpora.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dsp::SAMPLE_RATE;

/// Gaussian white noise with unit variance.
pub fn white_noise<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (0..len).map(|_| normal.sample(rng)).collect()
}

/// Voiced bursts separated by pauses: a harmonic source with drifting
/// pitch shaped by three random formants, plus a little aspiration noise.
/// Scaled to an RMS of 0.1 over the whole signal.
pub fn speech_like<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    let fs = SAMPLE_RATE as f64;
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let base_f0 = rng.random_range(90.0..220.0);
    let mut out = vec![0.0; len];
    let mut pos = (rng.random_range(0.0..0.2) * fs) as usize;
    while pos < len {
        let burst = (rng.random_range(0.15..0.45) * fs) as usize;
        let f0_start = base_f0 * rng.random_range(0.85..1.15);
        let f0_end = base_f0 * rng.random_range(0.85..1.15);
        let formants = [
            rng.random_range(300.0..900.0),
            rng.random_range(900.0..2200.0),
            rng.random_range(2200.0..3500.0),
        ];
        let mut phase = 0.0f64;
        for i in 0..burst.min(len - pos) {
            let t = i as f64 / burst as f64;
            let f0 = f0_start + (f0_end - f0_start) * t;
            phase += 2.0 * PI * f0 / fs;
            let env = (PI * t).sin().sqrt();
            let mut v = 0.0;
            let mut h = 1;
            while h as f64 * f0 < 7000.0 {
                let f = h as f64 * f0;
                let weight: f64 = formants
                    .iter()
                    .map(|fc| (-((f - fc) / 200.0).powi(2)).exp())
                    .sum::<f64>()
                    + 0.05;
                v += weight / h as f64 * (h as f64 * phase).sin();
                h += 1;
            }
            out[pos + i] = env * (v + 0.02 * normal.sample(rng));
        }
        pos += burst + (rng.random_range(0.05..0.3) * fs) as usize;
    }
    normalize_rms(&mut out, 0.1);
    out
}

/// Sum of several independent talkers.
pub fn babble<R: Rng>(len: usize, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for _ in 0..6 {
        for (o, v) in out.iter_mut().zip(speech_like(len, rng)) {
            *o += v;
        }
    }
    normalize_rms(&mut out, 0.1);
    out
}

fn normalize_rms(x: &mut [f64], target: f64) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        for v in x.iter_mut() {
            *v *= target / rms;
        }
    }
}
