use serde::{Deserialize, Serialize};

use crate::dsp::{check_len, AudioSignal};
use crate::error::{Error, Result};

/// Reported in place of an infinite ratio.
pub const METRIC_CAP_DB: f64 = 80.0;
/// Echo frames within this range of the loudest frame count as active.
pub const ERLE_ACTIVITY_DB: f64 = 40.0;
const FRAME: usize = 256;

/// A dB value, flagged when it stands in for +∞.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricDb {
    pub db: f64,
    pub capped: bool,
}

impl MetricDb {
    fn from_ratio(num: f64, den: f64) -> Self {
        if den == 0.0 {
            MetricDb {
                db: METRIC_CAP_DB,
                capped: true,
            }
        } else {
            MetricDb {
                db: 10.0 * (num / den).log10(),
                capped: false,
            }
        }
    }
}

/// Echo return loss enhancement `10·log10(Σd²/Σd̃²)` over the frames where
/// the echo `d` lies within `activity_threshold_db` of its loudest frame.
pub fn erle(d: &AudioSignal, d_tilde: &AudioSignal, activity_threshold_db: f64) -> Result<MetricDb> {
    check_len("processed echo", d.len(), d_tilde.len())?;
    if d.is_silent() {
        return Err(Error::Silent("echo signal"));
    }
    let energies: Vec<(f64, f64)> = d
        .samples()
        .chunks(FRAME)
        .zip(d_tilde.samples().chunks(FRAME))
        .map(|(a, b)| (energy(a), energy(b)))
        .collect();
    let peak = energies.iter().map(|e| e.0).fold(0.0, f64::max);
    let threshold = peak * 10f64.powf(-activity_threshold_db / 10.0);
    let (num, den) = energies
        .iter()
        .filter(|(ed, _)| *ed >= threshold)
        .fold((0.0, 0.0), |acc, (ed, et)| (acc.0 + ed, acc.1 + et));
    Ok(MetricDb::from_ratio(num, den))
}

/// Output SNR minus input SNR: `10·log10(Σs̃²/Σñ²) − 10·log10(Σs²/Σn²)`.
pub fn delta_snr(
    s: &AudioSignal,
    n: &AudioSignal,
    s_tilde: &AudioSignal,
    n_tilde: &AudioSignal,
) -> Result<f64> {
    for (name, sig) in [
        ("speech", s),
        ("noise", n),
        ("processed speech", s_tilde),
        ("processed noise", n_tilde),
    ] {
        if sig.is_silent() {
            return Err(Error::Silent(name));
        }
    }
    let out = 10.0 * (s_tilde.energy() / n_tilde.energy()).log10();
    let inp = 10.0 * (s.energy() / n.energy()).log10();
    Ok(out - inp)
}

/// `10·log10(Σn²/Σñ²)`: the SNR improvement of a noise-only input when the
/// speech path is taken as transparent.
pub fn noise_attenuation(n: &AudioSignal, n_tilde: &AudioSignal) -> Result<MetricDb> {
    check_len("processed noise", n.len(), n_tilde.len())?;
    if n.is_silent() {
        return Err(Error::Silent("noise"));
    }
    Ok(MetricDb::from_ratio(n.energy(), n_tilde.energy()))
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}
