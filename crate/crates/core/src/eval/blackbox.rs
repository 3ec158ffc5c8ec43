//! Black-box component separation by operator replay.
//!
//! Given their recorded parameters both stages are linear per frame: the
//! AEC subtracts `Ŵ_ℓ·X_ℓ` and the postfilter multiplies each bin by a
//! complex gain `G_ℓ(k)`. Replaying the frozen operators on each isolated
//! microphone component yields processed components that sum to the system
//! output.

use num_complex::Complex64;

use crate::aec::{replay_echo_estimate, KalmanConfig};
use crate::dsp::{istft, stft, AudioSignal, FrameConfig, Spectrogram};
use crate::enhance::{check_aligned, mask_gain, OutputMode, MASK_EPSILON};
use crate::error::{Error, Result};
use crate::sim::MixtureBundle;

pub const DEFAULT_GAIN_CAP: f64 = 4.0;
/// `|E|` below which the `OutE` gain is set to zero.
pub const GAIN_FLOOR: f64 = 1e-9;

/// Per-frame linear operators recorded during a full-mixture run.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorTrace {
    /// One-sided echo path snapshots, one per AEC block.
    pub w: Vec<Vec<Complex64>>,
    /// Postfilter gains, one per STFT frame.
    pub g: Vec<Vec<Complex64>>,
    pub mode: OutputMode,
}

/// Processed echo, noise and speech components.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentSet {
    pub d_tilde: AudioSignal,
    pub n_tilde: AudioSignal,
    pub s_tilde: AudioSignal,
}

impl ComponentSet {
    pub fn sum(&self) -> Result<AudioSignal> {
        self.d_tilde.add(&self.n_tilde)?.add(&self.s_tilde)
    }
}

/// Postfilter gain implied by a run: the bounded mask gain for `OutM`,
/// `Ŝ/E` (magnitude capped at `gain_cap`) for `OutE`.
pub fn postfilter_gain_from_run(
    e_spec: &Spectrogram,
    net_out: &Spectrogram,
    mode: OutputMode,
    gain_cap: f64,
) -> Result<Vec<Vec<Complex64>>> {
    check_aligned(e_spec, net_out)?;
    let gains = match mode {
        OutputMode::OutM => net_out
            .frames()
            .iter()
            .map(|m| m.iter().map(|&v| mask_gain(v, MASK_EPSILON)).collect())
            .collect(),
        OutputMode::OutE => e_spec
            .frames()
            .iter()
            .zip(net_out.frames())
            .map(|(e, s)| {
                e.iter()
                    .zip(s)
                    .map(|(&e, &s)| {
                        if e.norm() < GAIN_FLOOR {
                            return Complex64::new(0.0, 0.0);
                        }
                        let g = s / e;
                        let mag = g.norm();
                        if mag > gain_cap {
                            g * (gain_cap / mag)
                        } else {
                            g
                        }
                    })
                    .collect()
            })
            .collect(),
    };
    Ok(gains)
}

/// Multiplies every frame of `spec` by the recorded gains.
pub fn apply_postfilter(gains: &[Vec<Complex64>], spec: &Spectrogram) -> Result<Spectrogram> {
    if gains.len() != spec.n_frames() {
        return Err(Error::Length {
            what: "postfilter gain frames",
            expected: spec.n_frames(),
            got: gains.len(),
        });
    }
    let frames = spec
        .frames()
        .iter()
        .zip(gains)
        .map(|(f, g)| {
            if g.len() != f.len() {
                return Err(Error::Length {
                    what: "postfilter gain bins",
                    expected: f.len(),
                    got: g.len(),
                });
            }
            Ok(f.iter().zip(g).map(|(a, b)| a * b).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    spec.with_frames(frames)
}

fn postfilter_signal(gains: &[Vec<Complex64>], sig: &AudioSignal, frame: &FrameConfig) -> Result<AudioSignal> {
    istft(&apply_postfilter(gains, &stft(sig, frame)?)?)
}

/// Separates the processed output into echo, noise and speech components.
/// The replayed echo estimate is attributed to the echo component.
pub fn blackbox_separate(
    trace: &OperatorTrace,
    components: &MixtureBundle,
    kalman: &KalmanConfig,
    frame: &FrameConfig,
) -> Result<ComponentSet> {
    let d_hat = replay_echo_estimate(&components.x, &trace.w, kalman)?;
    let residual_echo = components.d.sub(&d_hat)?;
    Ok(ComponentSet {
        d_tilde: postfilter_signal(&trace.g, &residual_echo, frame)?,
        n_tilde: postfilter_signal(&trace.g, &components.n_mic, frame)?,
        s_tilde: postfilter_signal(&trace.g, &components.s_mic, frame)?,
    })
}

/// Replays the frozen operators on a microphone signal.
pub fn replay_output(
    trace: &OperatorTrace,
    y: &AudioSignal,
    x: &AudioSignal,
    kalman: &KalmanConfig,
    frame: &FrameConfig,
) -> Result<AudioSignal> {
    let d_hat = replay_echo_estimate(x, &trace.w, kalman)?;
    postfilter_signal(&trace.g, &y.sub(&d_hat)?, frame)
}
