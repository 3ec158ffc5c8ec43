//! Framing, windowing, STFT analysis/synthesis and WAV I/O.

mod stft;
mod wav;

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub(crate) use stft::expand_one_sided;
pub use stft::{
    istft, sqrt_hann, stft, stft_with_layout, zero_pad_features, FeatureMap, FrameConfig, Layout,
    Spectrogram,
};
pub use wav::{read_wav, write_wav};

/// Sample rate of every signal in the pipeline.
pub const SAMPLE_RATE: u32 = 16_000;

/// Mono 16 kHz signal.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioSignal {
    /// Wraps samples, rejecting NaN and infinities.
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("audio samples"));
        }
        Ok(Self {
            samples,
            sample_rate: SAMPLE_RATE,
        })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate: SAMPLE_RATE,
        }
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

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    pub fn is_silent(&self) -> bool {
        self.samples.iter().all(|&s| s == 0.0)
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Copy truncated (or zero-extended) to `len` samples.
    pub fn resized(&self, len: usize) -> Self {
        let mut samples = self.samples.clone();
        samples.resize(len, 0.0);
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }

    /// Sample-wise sum; lengths must agree.
    pub fn add(&self, other: &AudioSignal) -> Result<Self> {
        check_len("signal sum", self.len(), other.len())?;
        Ok(Self {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
            sample_rate: self.sample_rate,
        })
    }

    /// Sample-wise difference; lengths must agree.
    pub fn sub(&self, other: &AudioSignal) -> Result<Self> {
        check_len("signal difference", self.len(), other.len())?;
        Ok(Self {
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a - b)
                .collect(),
            sample_rate: self.sample_rate,
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Largest sample-wise absolute difference over `range`.
    pub fn max_abs_diff(&self, other: &AudioSignal, range: std::ops::Range<usize>) -> f64 {
        self.samples[range.clone()]
            .iter()
            .zip(&other.samples[range])
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Length {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

/// Forward/inverse DFT pair of a fixed size. The forward transform is
/// unnormalized, the inverse carries the 1/n factor.
#[derive(Clone)]
pub struct Dft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Dft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let scale = 1.0 / self.n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    /// DFT of a real sequence, zero-padded to the transform size.
    pub fn forward_real(&self, samples: &[f64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n];
        for (b, &s) in buf.iter_mut().zip(samples) {
            b.re = s;
        }
        self.forward(&mut buf);
        buf
    }
}

impl fmt::Debug for Dft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dft").field("n", &self.n).finish()
    }
}
