use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dsp::SAMPLE_RATE;
use crate::error::{Error, Result};

pub const SPEED_OF_SOUND: f64 = 343.0;
/// Half-width of the windowed-sinc fractional delay interpolator.
pub const SINC_HALF_WIDTH: usize = 8;

/// Shoebox room with an omnidirectional source and microphone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    /// Room size in meters.
    pub dimensions: [f64; 3],
    pub source_pos: [f64; 3],
    pub mic_pos: [f64; 3],
    /// Reverberation time in seconds.
    pub t60: f64,
    /// Output length in samples.
    pub rir_len: usize,
}

impl RoomSpec {
    pub fn validate(&self) -> Result<()> {
        for axis in 0..3 {
            let l = self.dimensions[axis];
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("room dimension {axis} must be > 0")));
            }
            for (name, pos) in [("source", self.source_pos), ("microphone", self.mic_pos)] {
                if !(pos[axis] > 0.0 && pos[axis] < l) {
                    return Err(Error::Config(format!(
                        "{name} position {:?} not strictly inside room {:?}",
                        pos, self.dimensions
                    )));
                }
            }
        }
        if !(self.t60 > 0.0 && self.t60.is_finite()) {
            return Err(Error::Config(format!("t60 must be > 0, got {}", self.t60)));
        }
        if self.rir_len == 0 {
            return Err(Error::Config("rir_len must be >= 1".into()));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.dimensions.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dimensions;
        2.0 * (x * y + x * z + y * z)
    }

    /// Uniform wall absorption from Sabine's formula.
    pub fn sabine_absorption(&self) -> f64 {
        0.1611 * self.volume() / (self.t60 * self.surface())
    }

    pub fn source_mic_distance(&self) -> f64 {
        distance(self.source_pos, self.mic_pos)
    }

    /// Propagation delay of the direct path in samples.
    pub fn direct_delay(&self) -> f64 {
        self.source_mic_distance() * SAMPLE_RATE as f64 / SPEED_OF_SOUND
    }
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

/// Image-method room impulse response, peak-normalized to 1.
///
/// Wall absorption follows Sabine's formula; combinations where it would
/// exceed one are rejected.
pub fn image_method_rir(room: &RoomSpec) -> Result<Vec<f64>> {
    room.validate()?;
    let alpha = room.sabine_absorption();
    if alpha > 1.0 {
        return Err(Error::Config(format!(
            "t60 = {} s is infeasible for a {:?} m room (Sabine absorption {alpha:.3} > 1)",
            room.t60, room.dimensions
        )));
    }
    Ok(render(room, (1.0 - alpha).sqrt()))
}

/// Image-method RIR with an explicit wall absorption coefficient in (0, 1].
pub fn image_method_rir_with_absorption(room: &RoomSpec, absorption: f64) -> Result<Vec<f64>> {
    room.validate()?;
    if !(absorption > 0.0 && absorption <= 1.0) {
        return Err(Error::Config(format!(
            "absorption must lie in (0,1], got {absorption}"
        )));
    }
    Ok(render(room, (1.0 - absorption).sqrt()))
}

fn render(room: &RoomSpec, reflection: f64) -> Vec<f64> {
    let mut h = image_sum(room, reflection);
    allen_berkley_highpass(&mut h);
    let peak = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        for v in &mut h {
            *v /= peak;
        }
    }
    h
}

/// Superposition of all image pulses arriving within `rir_len` samples.
fn image_sum(room: &RoomSpec, reflection: f64) -> Vec<f64> {
    let fs = SAMPLE_RATE as f64;
    let len = room.rir_len;
    let half = SINC_HALF_WIDTH as f64;
    let max_dist = (len as f64 + half) * SPEED_OF_SOUND / fs;
    let orders: Vec<i64> = room
        .dimensions
        .iter()
        .map(|l| (max_dist / (2.0 * l)).ceil() as i64 + 1)
        .collect();

    let mut h = vec![0.0; len];
    for u in 0..2i64 {
        for v in 0..2i64 {
            for w in 0..2i64 {
                let parity = [u, v, w];
                for nx in -orders[0]..=orders[0] {
                    for ny in -orders[1]..=orders[1] {
                        for nz in -orders[2]..=orders[2] {
                            let n = [nx, ny, nz];
                            let mut d2 = 0.0;
                            let mut reflections = 0i32;
                            for a in 0..3 {
                                let sign = 1.0 - 2.0 * parity[a] as f64;
                                let img = sign * room.source_pos[a]
                                    + 2.0 * n[a] as f64 * room.dimensions[a];
                                d2 += (img - room.mic_pos[a]).powi(2);
                                reflections += ((n[a] - parity[a]).abs() + n[a].abs()) as i32;
                            }
                            let dist = d2.sqrt();
                            let delay = dist * fs / SPEED_OF_SOUND;
                            if delay - half >= len as f64 {
                                continue;
                            }
                            let amp = reflection.powi(reflections) / (4.0 * PI * dist);
                            if amp == 0.0 {
                                continue;
                            }
                            add_fractional_impulse(&mut h, delay, amp);
                        }
                    }
                }
            }
        }
    }
    h
}

/// Second-order 100 Hz high-pass of the original image method. Removes
/// the DC build-up of the all-positive image pulses.
fn allen_berkley_highpass(h: &mut [f64]) {
    let w = 2.0 * PI * 100.0 / SAMPLE_RATE as f64;
    let r1 = (-w).exp();
    let b1 = 2.0 * r1 * w.cos();
    let b2 = -r1 * r1;
    let a1 = -(1.0 + r1);
    let mut y = [0.0; 3];
    for v in h.iter_mut() {
        y[2] = y[1];
        y[1] = y[0];
        y[0] = b1 * y[1] + b2 * y[2] + *v;
        *v = y[0] + a1 * y[1] + r1 * y[2];
    }
}

/// Adds a Hann-windowed sinc pulse centred at fractional position `delay`.
fn add_fractional_impulse(h: &mut [f64], delay: f64, amp: f64) {
    let half = SINC_HALF_WIDTH as f64;
    let first = (delay - half).ceil().max(0.0) as usize;
    let last = (delay + half).floor();
    if last < 0.0 {
        return;
    }
    let last = (last as usize).min(h.len().saturating_sub(1));
    for (t, v) in h.iter_mut().enumerate().take(last + 1).skip(first) {
        let x = t as f64 - delay;
        let window = 0.5 * (1.0 + (PI * x / half).cos());
        *v += amp * window * sinc(x);
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}
