//! Second-stage output application: bounded complex masking (`OutM`) or
//! direct spectral estimates (`OutE`), and the spectral exchange format.

mod exchange;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::Spectrogram;
use crate::error::{Error, Result};

pub use exchange::{ExchangeFile, Stream, StreamLabel, EXCHANGE_MAGIC, EXCHANGE_VERSION};

/// Default magnitude below which a mask is treated as exactly zero.
pub const MASK_EPSILON: f64 = 1e-12;

/// Output switch of the second stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutputMode {
    /// The network estimates the clean spectrum directly.
    OutE,
    /// The network estimates a complex mask applied to the AEC output.
    OutM,
}

impl OutputMode {
    /// Exchange stream label carrying this mode's network output.
    pub fn net_label(self) -> StreamLabel {
        match self {
            OutputMode::OutE => StreamLabel::Shat,
            OutputMode::OutM => StreamLabel::M,
        }
    }
}

impl fmt::Display for OutputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputMode::OutE => "OutE",
            OutputMode::OutM => "OutM",
        })
    }
}

impl FromStr for OutputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "oute" => Ok(OutputMode::OutE),
            "outm" => Ok(OutputMode::OutM),
            _ => Err(Error::Config(format!("unknown output mode {s:?} (OutE or OutM)"))),
        }
    }
}

/// Bounded gain `tanh(|m|)·m/|m|`; zero below `epsilon`.
pub fn mask_gain(m: Complex64, epsilon: f64) -> Complex64 {
    let mag = m.norm();
    if mag < epsilon {
        Complex64::new(0.0, 0.0)
    } else {
        m * (mag.tanh() / mag)
    }
}

/// `Ŝ(k) = E(k)·tanh(|M(k)|)·M(k)/|M(k)|`.
pub fn apply_complex_mask(
    e_frame: &[Complex64],
    mask: &[Complex64],
    epsilon: f64,
) -> Result<Vec<Complex64>> {
    if e_frame.len() != mask.len() {
        return Err(Error::Length {
            what: "mask bins",
            expected: e_frame.len(),
            got: mask.len(),
        });
    }
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("mask epsilon must be > 0, got {epsilon}")));
    }
    if mask.iter().any(|m| !m.re.is_finite() || !m.im.is_finite()) {
        return Err(Error::NonFinite("mask"));
    }
    Ok(e_frame
        .iter()
        .zip(mask)
        .map(|(&e, &m)| bounded_product(e, mask_gain(m, epsilon)))
        .collect())
}

/// `e·g` for `|g| ≤ 1`, nudged down where rounding would leave `|e·g| > |e|`.
fn bounded_product(e: Complex64, g: Complex64) -> Complex64 {
    let mut s = e * g;
    let limit = e.norm();
    while s.norm() > limit {
        s *= 1.0 - f64::EPSILON;
    }
    s
}

pub(crate) fn check_aligned(a: &Spectrogram, b: &Spectrogram) -> Result<()> {
    if a.n_frames() != b.n_frames() {
        return Err(Error::Length {
            what: "spectrogram frames",
            expected: a.n_frames(),
            got: b.n_frames(),
        });
    }
    if a.n_bins() != b.n_bins() {
        return Err(Error::Length {
            what: "spectrogram bins",
            expected: a.n_bins(),
            got: b.n_bins(),
        });
    }
    Ok(())
}

/// Builds the enhanced spectrum from the AEC output `e_spec` and the
/// network output (`Ŝ` for `OutE`, `M` for `OutM`).
pub fn assemble_output(
    mode: OutputMode,
    e_spec: &Spectrogram,
    net_out: &Spectrogram,
) -> Result<Spectrogram> {
    check_aligned(e_spec, net_out)?;
    match mode {
        OutputMode::OutE => e_spec.with_frames(net_out.frames().to_vec()),
        OutputMode::OutM => {
            let frames = e_spec
                .frames()
                .iter()
                .zip(net_out.frames())
                .map(|(e, m)| apply_complex_mask(e, m, MASK_EPSILON))
                .collect::<Result<Vec<_>>>()?;
            e_spec.with_frames(frames)
        }
    }
}
