//! Frequency-domain adaptive Kalman filter (FDAKF) echo canceller.
//!
//! Overlap-save structure: each step shifts `shift` new reference samples
//! into a `dft_size` buffer, filters it with the current per-bin echo path
//! estimate, keeps the last `shift` output samples as the echo estimate and
//! updates the path with a diagonal Kalman gain.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{check_len, expand_one_sided, AudioSignal, Dft};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanConfig {
    pub dft_size: usize,
    pub shift: usize,
    /// Markov forgetting factor `A` of the echo path model.
    pub forgetting_factor: f64,
    /// Overestimation of the measurement noise PSD in the gain denominator.
    pub overestimation: f64,
    /// Recursive smoothing of the measurement noise PSD.
    pub psd_smoothing: f64,
    pub init_cov: f64,
    pub psd_floor: f64,
    /// Time-domain filter length; taps at or beyond this index are zeroed.
    pub filter_support: usize,
    /// Scale the noise term by `dft_size / shift` to account for the
    /// zero-padded error frame.
    pub block_power_compensation: bool,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            dft_size: 1024,
            shift: 256,
            forgetting_factor: 0.998,
            overestimation: 1.5,
            psd_smoothing: 0.5,
            init_cov: 1.0,
            psd_floor: 1e-8,
            filter_support: 768,
            block_power_compensation: true,
        }
    }
}

impl KalmanConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.dft_size < 2 || !self.dft_size.is_multiple_of(2) {
            return fail(format!("dft_size must be even, got {}", self.dft_size));
        }
        if self.shift == 0 || self.shift >= self.dft_size {
            return fail(format!(
                "shift must be in 1..dft_size, got {} (dft_size {})",
                self.shift, self.dft_size
            ));
        }
        if !(self.forgetting_factor > 0.0 && self.forgetting_factor < 1.0) {
            return fail(format!(
                "forgetting_factor must lie in (0,1), got {}",
                self.forgetting_factor
            ));
        }
        if !(self.overestimation >= 1.0) {
            return fail(format!("overestimation must be >= 1, got {}", self.overestimation));
        }
        if !(0.0..1.0).contains(&self.psd_smoothing) {
            return fail(format!("psd_smoothing must lie in [0,1), got {}", self.psd_smoothing));
        }
        if !(self.init_cov > 0.0 && self.init_cov.is_finite()) {
            return fail(format!("init_cov must be > 0, got {}", self.init_cov));
        }
        if !(self.psd_floor > 0.0 && self.psd_floor.is_finite()) {
            return fail(format!("psd_floor must be > 0, got {}", self.psd_floor));
        }
        if self.filter_support == 0 || self.filter_support > self.dft_size - self.shift {
            return fail(format!(
                "filter_support must be in 1..={}, got {}",
                self.dft_size - self.shift,
                self.filter_support
            ));
        }
        Ok(())
    }

    fn noise_scale(&self) -> f64 {
        let comp = if self.block_power_compensation {
            self.dft_size as f64 / self.shift as f64
        } else {
            1.0
        };
        self.overestimation * comp
    }

    pub fn n_bins(&self) -> usize {
        self.dft_size / 2 + 1
    }
}

/// Result of one filter iteration.
#[derive(Clone, Debug)]
pub struct AecFrameOutput {
    pub e_block: Vec<f64>,
    pub d_hat_block: Vec<f64>,
    /// DFT of the zero-padded error block.
    pub e_frame: Vec<Complex64>,
    pub d_hat_frame: Vec<Complex64>,
    /// One-sided echo path estimate that produced `d_hat_block`.
    pub w_snapshot: Vec<Complex64>,
}

/// Per-bin FDAKF state.
#[derive(Clone, Debug)]
pub struct KalmanState {
    config: KalmanConfig,
    dft: Dft,
    w_hat: Vec<Complex64>,
    p: Vec<f64>,
    psi_ss: Vec<f64>,
    x_buffer: Vec<f64>,
    gain_product: Vec<Complex64>,
}

impl KalmanState {
    pub fn new(config: KalmanConfig) -> Result<Self> {
        config.validate()?;
        let n = config.dft_size;
        Ok(Self {
            dft: Dft::new(n),
            w_hat: vec![Complex64::new(0.0, 0.0); n],
            p: vec![config.init_cov; n],
            psi_ss: vec![config.psd_floor; n],
            x_buffer: vec![0.0; n],
            gain_product: vec![Complex64::new(0.0, 0.0); n],
            config,
        })
    }

    pub fn config(&self) -> &KalmanConfig {
        &self.config
    }

    /// Two-sided echo path estimate.
    pub fn w_hat(&self) -> &[Complex64] {
        &self.w_hat
    }

    pub fn state_covariance(&self) -> &[f64] {
        &self.p
    }

    pub fn state_covariance_mut(&mut self) -> &mut [f64] {
        &mut self.p
    }

    pub fn noise_psd(&self) -> &[f64] {
        &self.psi_ss
    }

    pub fn x_buffer(&self) -> &[f64] {
        &self.x_buffer
    }

    /// `K(k) X(k)` of the most recent update, per bin.
    pub fn last_gain_product(&self) -> &[Complex64] {
        &self.gain_product
    }

    /// Time-domain taps of the current echo path estimate.
    pub fn time_domain_filter(&self) -> Vec<f64> {
        let mut buf = self.w_hat.clone();
        self.dft.inverse(&mut buf);
        buf.iter().map(|c| c.re).collect()
    }

    /// Runs one overlap-save iteration on `shift` new samples.
    pub fn step(&mut self, x_block: &[f64], y_block: &[f64]) -> Result<AecFrameOutput> {
        let n = self.config.dft_size;
        let r = self.config.shift;
        check_len("reference block", r, x_block.len())?;
        check_len("microphone block", r, y_block.len())?;
        if x_block.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("reference block"));
        }
        if y_block.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("microphone block"));
        }

        shift_in(&mut self.x_buffer, x_block);
        let w_snapshot = self.w_hat[..self.config.n_bins()].to_vec();
        let (x_spec, d_hat_frame, d_hat_block) = echo_block(&self.dft, &self.w_hat, &self.x_buffer, r);

        let e_block: Vec<f64> = y_block.iter().zip(&d_hat_block).map(|(y, d)| y - d).collect();
        let mut padded = vec![0.0; n];
        padded[n - r..].copy_from_slice(&e_block);
        let e_frame = self.dft.forward_real(&padded);

        let a = self.config.forgetting_factor;
        let beta = self.config.psd_smoothing;
        let noise_scale = self.config.noise_scale();
        let mut w_next = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..n {
            let psi = (beta * self.psi_ss[k] + (1.0 - beta) * e_frame[k].norm_sqr())
                .max(self.config.psd_floor);
            self.psi_ss[k] = psi;
            let x = x_spec[k];
            let denom = self.p[k] * x.norm_sqr() + noise_scale * psi;
            let gain = x.conj() * (self.p[k] / denom);
            let kx = gain * x;
            self.gain_product[k] = kx;
            w_next[k] = (self.w_hat[k] + gain * e_frame[k]) * a;
            self.p[k] *= a * a * (1.0 - kx.re);
        }

        self.constrain(&mut w_next);
        for (p, w) in self.p.iter_mut().zip(&w_next) {
            *p = (*p + (1.0 - a * a) * w.norm_sqr()).max(0.0);
        }
        self.w_hat = w_next;

        Ok(AecFrameOutput {
            e_block,
            d_hat_block,
            e_frame,
            d_hat_frame,
            w_snapshot,
        })
    }

    /// Zeroes time-domain taps at or beyond the filter support and restores
    /// exact conjugate symmetry.
    fn constrain(&self, w: &mut Vec<Complex64>) {
        let n = self.config.dft_size;
        self.dft.inverse(w);
        let mut taps: Vec<f64> = w.iter().map(|c| c.re).collect();
        taps[self.config.filter_support..].fill(0.0);
        let spec = self.dft.forward_real(&taps);
        *w = expand_one_sided(&spec[..n / 2 + 1], n);
    }
}

fn shift_in(buffer: &mut [f64], block: &[f64]) {
    let n = buffer.len();
    let r = block.len();
    buffer.copy_within(r.., 0);
    buffer[n - r..].copy_from_slice(block);
}

/// Reference spectrum, echo spectrum and the valid overlap-save output block.
fn echo_block(
    dft: &Dft,
    w_hat: &[Complex64],
    x_buffer: &[f64],
    shift: usize,
) -> (Vec<Complex64>, Vec<Complex64>, Vec<f64>) {
    let n = x_buffer.len();
    let x_spec = dft.forward_real(x_buffer);
    let d_spec: Vec<Complex64> = w_hat.iter().zip(&x_spec).map(|(w, x)| w * x).collect();
    let mut buf = d_spec.clone();
    dft.inverse(&mut buf);
    let block = buf[n - shift..].iter().map(|c| c.re).collect();
    (x_spec, d_spec, block)
}

/// Full-signal AEC result.
#[derive(Clone, Debug)]
pub struct AecOutput {
    pub e: AudioSignal,
    pub d_hat: AudioSignal,
    /// One one-sided echo path snapshot per processed block.
    pub trace: Vec<Vec<Complex64>>,
}

/// Runs the canceller over whole signals. A final partial block is
/// zero-padded and the outputs are trimmed back to the input length.
pub fn process_aec(x: &AudioSignal, y: &AudioSignal, config: &KalmanConfig) -> Result<AecOutput> {
    check_len("reference vs microphone", x.len(), y.len())?;
    let mut state = KalmanState::new(config.clone())?;
    let r = config.shift;
    let len = x.len();
    let n_blocks = len.div_ceil(r);
    let mut e = Vec::with_capacity(n_blocks * r);
    let mut d_hat = Vec::with_capacity(n_blocks * r);
    let mut trace = Vec::with_capacity(n_blocks);
    let mut xb = vec![0.0; r];
    let mut yb = vec![0.0; r];
    for b in 0..n_blocks {
        let range = b * r..((b + 1) * r).min(len);
        xb.fill(0.0);
        yb.fill(0.0);
        xb[..range.len()].copy_from_slice(&x.samples()[range.clone()]);
        yb[..range.len()].copy_from_slice(&y.samples()[range]);
        let out = state.step(&xb, &yb)?;
        e.extend_from_slice(&out.e_block);
        d_hat.extend_from_slice(&out.d_hat_block);
        trace.push(out.w_snapshot);
    }
    e.truncate(len);
    d_hat.truncate(len);
    Ok(AecOutput {
        e: AudioSignal::new(e)?,
        d_hat: AudioSignal::new(d_hat)?,
        trace,
    })
}

/// Recomputes the echo estimate from recorded path snapshots against a
/// reference signal, without adapting.
pub fn replay_echo_estimate(
    x: &AudioSignal,
    trace: &[Vec<Complex64>],
    config: &KalmanConfig,
) -> Result<AudioSignal> {
    config.validate()?;
    let r = config.shift;
    let n = config.dft_size;
    let len = x.len();
    let n_blocks = len.div_ceil(r);
    check_len("operator trace frames", n_blocks, trace.len())?;
    let dft = Dft::new(n);
    let mut buffer = vec![0.0; n];
    let mut xb = vec![0.0; r];
    let mut out = Vec::with_capacity(n_blocks * r);
    for (b, snapshot) in trace.iter().enumerate() {
        check_len("echo path snapshot bins", config.n_bins(), snapshot.len())?;
        let range = b * r..((b + 1) * r).min(len);
        xb.fill(0.0);
        xb[..range.len()].copy_from_slice(&x.samples()[range]);
        shift_in(&mut buffer, &xb);
        let w = expand_one_sided(snapshot, n);
        let (_, _, block) = echo_block(&dft, &w, &buffer, r);
        out.extend_from_slice(&block);
    }
    out.truncate(len);
    AudioSignal::new(out)
}
