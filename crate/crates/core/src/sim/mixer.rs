use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{image_method_rir, loudspeaker_nonlinearity, NonlinearityParams, RoomSpec};
use crate::dsp::{AudioSignal, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Frame length of the speech activity detector.
pub const ACTIVITY_FRAME: usize = 256;
/// Frames more than this many dB below the loudest frame are inactive.
pub const ACTIVITY_RANGE_DB: f64 = 40.0;
/// Mixtures whose microphone peak exceeds this are scaled down as a whole.
pub const PEAK_LIMIT: f64 = 0.99;

/// Everything needed to render one microphone mixture.
#[derive(Clone, Debug)]
pub struct EchoScenario {
    pub far_end: AudioSignal,
    pub near_end: AudioSignal,
    pub noise: AudioSignal,
    pub room: RoomSpec,
    pub nl: NonlinearityParams,
    /// Signal-to-echo ratio; `f64::INFINITY` means no echo.
    pub ser_db: f64,
    /// Signal-to-noise ratio; `f64::INFINITY` means no noise.
    pub snr_db: f64,
    pub seed: u64,
}

/// Which components reach the microphone.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    #[default]
    Full,
    EchoOnly,
    NoiseOnly,
    SpeechOnly,
}

/// Rendered mixture and its additive components.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureBundle {
    /// Microphone signal, `d + s_mic + n_mic`.
    pub y: AudioSignal,
    pub d: AudioSignal,
    pub s_mic: AudioSignal,
    pub n_mic: AudioSignal,
    /// Loudspeaker reference.
    pub x: AudioSignal,
}

impl MixtureBundle {
    /// Builds a bundle whose microphone signal is the sum of the components.
    pub fn from_components(
        x: AudioSignal,
        d: AudioSignal,
        s_mic: AudioSignal,
        n_mic: AudioSignal,
    ) -> Result<Self> {
        let y = d.add(&s_mic)?.add(&n_mic)?;
        Ok(Self {
            y,
            d,
            s_mic,
            n_mic,
            x,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Keeps only the components selected by `condition`; the others are zeroed.
    pub fn restricted(&self, condition: Condition) -> Self {
        let zero = AudioSignal::zeros(self.len());
        let (d, s, n) = match condition {
            Condition::Full => return self.clone(),
            Condition::EchoOnly => (self.d.clone(), zero.clone(), zero),
            Condition::NoiseOnly => (zero.clone(), zero, self.n_mic.clone()),
            Condition::SpeechOnly => (zero.clone(), self.s_mic.clone(), zero),
        };
        Self::from_components(self.x.clone(), d, s, n).expect("equal lengths")
    }
}

impl RoomSpec {
    /// Random shoebox in [3,8]×[3,8]×[2.5,4] m with source and microphone at
    /// least 0.5 m from the walls and from each other.
    pub fn random<R: Rng>(rng: &mut R, t60: f64, rir_len: usize) -> Result<Self> {
        for _ in 0..1000 {
            let dims = [
                rng.random_range(3.0..8.0),
                rng.random_range(3.0..8.0),
                rng.random_range(2.5..4.0),
            ];
            let mut point = || {
                [
                    rng.random_range(0.5..dims[0] - 0.5),
                    rng.random_range(0.5..dims[1] - 0.5),
                    rng.random_range(0.5..dims[2] - 0.5),
                ]
            };
            let room = RoomSpec {
                dimensions: dims,
                source_pos: point(),
                mic_pos: point(),
                t60,
                rir_len,
            };
            if room.source_mic_distance() >= 0.5 && room.sabine_absorption() <= 1.0 {
                room.validate()?;
                return Ok(room);
            }
        }
        Err(Error::Config(format!("no feasible random room for t60 = {t60} s")))
    }
}

/// Per-sample activity of `s`: frames of [`ACTIVITY_FRAME`] samples within
/// [`ACTIVITY_RANGE_DB`] of the loudest frame.
pub fn active_mask(s: &AudioSignal) -> Vec<bool> {
    let energies: Vec<f64> = s
        .samples()
        .chunks(ACTIVITY_FRAME)
        .map(|c| c.iter().map(|v| v * v).sum())
        .collect();
    let peak = energies.iter().cloned().fold(0.0, f64::max);
    let threshold = peak * 10f64.powf(-ACTIVITY_RANGE_DB / 10.0);
    let mut mask = Vec::with_capacity(s.len());
    for (chunk, &e) in s.samples().chunks(ACTIVITY_FRAME).zip(&energies) {
        let active = peak > 0.0 && e >= threshold;
        mask.extend(std::iter::repeat_n(active, chunk.len()));
    }
    mask
}

pub(crate) fn masked_energy(x: &AudioSignal, mask: &[bool]) -> f64 {
    x.samples()
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(v, _)| v * v)
        .sum()
}

/// `10·log10(Σs²/Σother²)` over the speech-active region of `s`.
pub fn level_ratio_db(s: &AudioSignal, other: &AudioSignal) -> f64 {
    let mask = active_mask(s);
    10.0 * (masked_energy(s, &mask) / masked_energy(other, &mask)).log10()
}

/// Linear convolution truncated to the input length.
pub fn convolve_truncated(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (n, o) in out.iter_mut().enumerate() {
        let taps = h.len().min(n + 1);
        let mut acc = 0.0;
        for (i, hv) in h[..taps].iter().enumerate() {
            acc += hv * x[n - i];
        }
        *o = acc;
    }
    out
}

fn level_gain(s_energy: f64, raw_energy: f64, ratio_db: f64) -> f64 {
    (s_energy / (raw_energy * 10f64.powf(ratio_db / 10.0))).sqrt()
}

/// Renders the echo through the loudspeaker model and room, scales echo and
/// noise to the requested SER/SNR and sums the microphone signal.
pub fn mix_scenario(scn: &EchoScenario) -> Result<MixtureBundle> {
    for (name, v) in [("ser_db", scn.ser_db), ("snr_db", scn.snr_db)] {
        if v.is_nan() || v == f64::NEG_INFINITY {
            return Err(Error::Config(format!("{name} must be finite or +inf, got {v}")));
        }
    }
    let echo_on = scn.ser_db.is_finite();
    let noise_on = scn.snr_db.is_finite();
    let mut len = scn.far_end.len().min(scn.near_end.len());
    if noise_on {
        len = len.min(scn.noise.len());
    }
    if len == 0 {
        return Err(Error::TooShort { got: 0, need: 1 });
    }
    let x = scn.far_end.resized(len);
    let s = scn.near_end.resized(len);
    let mask = active_mask(&s);
    let s_energy = masked_energy(&s, &mask);
    if (echo_on || noise_on) && s_energy == 0.0 {
        return Err(Error::Silent("near-end speech"));
    }

    let d = if echo_on {
        let rir = image_method_rir(&scn.room)?;
        let nl_x = loudspeaker_nonlinearity(&x, &scn.nl)?;
        let raw = AudioSignal::new(convolve_truncated(nl_x.samples(), &rir))?;
        let raw_energy = masked_energy(&raw, &mask);
        if raw_energy == 0.0 {
            return Err(Error::Silent("echo in the speech-active region"));
        }
        raw.scaled(level_gain(s_energy, raw_energy, scn.ser_db))
    } else {
        AudioSignal::zeros(len)
    };

    let n = if noise_on {
        let raw = scn.noise.resized(len);
        let raw_energy = masked_energy(&raw, &mask);
        if raw_energy == 0.0 {
            return Err(Error::Silent("noise in the speech-active region"));
        }
        raw.scaled(level_gain(s_energy, raw_energy, scn.snr_db))
    } else {
        AudioSignal::zeros(len)
    };

    let peak = d.add(&s)?.add(&n)?.max_abs();
    let g = if peak > PEAK_LIMIT { PEAK_LIMIT / peak } else { 1.0 };
    let (d, s, n) = if g < 1.0 {
        (d.scaled(g), s.scaled(g), n.scaled(g))
    } else {
        (d, s, n)
    };
    MixtureBundle::from_components(x, d, s, n)
}

/// Duration helper for synthetic sources.
pub fn seconds_to_samples(seconds: f64) -> usize {
    (seconds * SAMPLE_RATE as f64).round() as usize
}
