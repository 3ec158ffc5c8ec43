use serde::{Deserialize, Serialize};

use crate::dsp::AudioSignal;
use crate::error::{Error, Result};

/// Memoryless loudspeaker model: hard clipping, a quadratic soft
/// nonlinearity and an asymmetric sigmoid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonlinearityParams {
    /// Clip threshold relative to the signal's peak magnitude.
    pub clip_fraction: f64,
    pub poly_a1: f64,
    pub poly_a2: f64,
    /// Output gain of the sigmoid.
    pub sig_gain: f64,
    pub sig_slope_pos: f64,
    pub sig_slope_neg: f64,
    pub enabled: bool,
}

impl Default for NonlinearityParams {
    fn default() -> Self {
        Self {
            clip_fraction: 0.8,
            poly_a1: 1.5,
            poly_a2: -0.3,
            sig_gain: 0.2,
            sig_slope_pos: 4.0,
            sig_slope_neg: 0.5,
            enabled: true,
        }
    }
}

impl NonlinearityParams {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clip_fraction > 0.0 && self.clip_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "clip_fraction must lie in (0,1], got {}",
                self.clip_fraction
            )));
        }
        if !(self.sig_gain > 0.0) {
            return Err(Error::Config(format!("sig_gain must be > 0, got {}", self.sig_gain)));
        }
        if !(self.sig_slope_pos > 0.0 && self.sig_slope_neg > 0.0) {
            return Err(Error::Config("sigmoid slopes must be > 0".into()));
        }
        Ok(())
    }

    /// Stage-three sigmoid.
    pub fn sigmoid(&self, b: f64) -> f64 {
        let a = if b > 0.0 {
            self.sig_slope_pos
        } else {
            self.sig_slope_neg
        };
        self.sig_gain * (2.0 / (1.0 + (-a * b).exp()) - 1.0)
    }
}

pub fn loudspeaker_nonlinearity(x: &AudioSignal, nl: &NonlinearityParams) -> Result<AudioSignal> {
    if !nl.enabled {
        return Ok(x.clone());
    }
    nl.validate()?;
    let limit = nl.clip_fraction * x.max_abs();
    let out = x
        .samples()
        .iter()
        .map(|&v| {
            let clipped = v.clamp(-limit, limit);
            let b = nl.poly_a1 * clipped + nl.poly_a2 * clipped * clipped;
            nl.sigmoid(b)
        })
        .collect();
    AudioSignal::new(out)
}
