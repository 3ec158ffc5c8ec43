use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{AudioSignal, Dft};
use crate::error::{Error, Result};

/// Periodic square-root Hann window.
///
/// With 50% overlap the squared window sums to one, so using it for both
/// analysis and synthesis gives perfect reconstruction.
pub fn sqrt_hann(length: usize) -> Result<Vec<f64>> {
    if length < 2 || !length.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "square-root Hann length must be even and >= 2, got {length}"
        )));
    }
    Ok((0..length)
        .map(|i| (0.5 - 0.5 * (2.0 * PI * i as f64 / length as f64).cos()).sqrt())
        .collect())
}

/// Framing parameters of an STFT.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameConfig {
    frame_len: usize,
    shift: usize,
    dft_size: usize,
    window: Vec<f64>,
}

impl FrameConfig {
    /// Square-root Hann framing with the given frame length, shift and DFT size.
    pub fn new(frame_len: usize, shift: usize, dft_size: usize) -> Result<Self> {
        let window = sqrt_hann(frame_len)?;
        Self::with_window(frame_len, shift, dft_size, window)
    }

    pub fn with_window(
        frame_len: usize,
        shift: usize,
        dft_size: usize,
        window: Vec<f64>,
    ) -> Result<Self> {
        if shift == 0 || !frame_len.is_multiple_of(shift) {
            return Err(Error::Config(format!(
                "shift {shift} must divide frame length {frame_len}"
            )));
        }
        if dft_size < frame_len {
            return Err(Error::Config(format!(
                "DFT size {dft_size} smaller than frame length {frame_len}"
            )));
        }
        if window.len() != frame_len {
            return Err(Error::Config(format!(
                "window length {} differs from frame length {frame_len}",
                window.len()
            )));
        }
        Ok(Self {
            frame_len,
            shift,
            dft_size,
            window,
        })
    }

    /// 512-sample frames, 256-sample shift, 512-point DFT.
    pub fn enhancement() -> Self {
        Self::new(512, 256, 512).expect("static framing is valid")
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn shift(&self) -> usize {
        self.shift
    }

    pub fn dft_size(&self) -> usize {
        self.dft_size
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn one_sided_bins(&self) -> usize {
        self.dft_size / 2 + 1
    }

    /// Number of frames produced for a signal of `len` samples (tail zero-padded).
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.frame_len {
            return 0;
        }
        (len - self.frame_len).div_ceil(self.shift) + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    /// Bins `0..=dft_size/2` of a real signal.
    OneSided,
    /// All `dft_size` bins.
    TwoSided,
}

impl Layout {
    pub fn n_bins(self, dft_size: usize) -> usize {
        match self {
            Layout::OneSided => dft_size / 2 + 1,
            Layout::TwoSided => dft_size,
        }
    }
}

/// Complex DFT frames plus the framing they were produced with.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    frames: Vec<Vec<Complex64>>,
    config: FrameConfig,
    layout: Layout,
    signal_len: usize,
}

impl Spectrogram {
    /// Builds a spectrogram from raw frames. The synthesized length defaults
    /// to the full overlap-add extent of the frames.
    pub fn new(frames: Vec<Vec<Complex64>>, config: FrameConfig, layout: Layout) -> Result<Self> {
        let n_bins = layout.n_bins(config.dft_size);
        if let Some(bad) = frames.iter().find(|f| f.len() != n_bins) {
            return Err(Error::Length {
                what: "spectrogram frame bins",
                expected: n_bins,
                got: bad.len(),
            });
        }
        let signal_len = match frames.len() {
            0 => 0,
            n => (n - 1) * config.shift + config.frame_len,
        };
        Ok(Self {
            frames,
            config,
            layout,
            signal_len,
        })
    }

    /// Overrides the number of samples `istft` returns.
    pub fn with_signal_len(mut self, len: usize) -> Self {
        self.signal_len = len;
        self
    }

    pub fn frames(&self) -> &[Vec<Complex64>] {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut [Vec<Complex64>] {
        &mut self.frames
    }

    pub fn into_frames(self) -> Vec<Vec<Complex64>> {
        self.frames
    }

    pub fn config(&self) -> &FrameConfig {
        &self.config
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn n_bins(&self) -> usize {
        self.layout.n_bins(self.config.dft_size)
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    /// Same framing and length, different frame contents.
    pub fn with_frames(&self, frames: Vec<Vec<Complex64>>) -> Result<Self> {
        Ok(Spectrogram::new(frames, self.config.clone(), self.layout)?
            .with_signal_len(self.signal_len))
    }

    /// Expands a one-sided spectrogram using conjugate symmetry.
    pub fn to_two_sided(&self) -> Spectrogram {
        match self.layout {
            Layout::TwoSided => self.clone(),
            Layout::OneSided => Spectrogram {
                frames: self
                    .frames
                    .iter()
                    .map(|f| expand_one_sided(f, self.config.dft_size))
                    .collect(),
                config: self.config.clone(),
                layout: Layout::TwoSided,
                signal_len: self.signal_len,
            },
        }
    }
}

pub(crate) fn expand_one_sided(half: &[Complex64], dft_size: usize) -> Vec<Complex64> {
    let mut full = Vec::with_capacity(dft_size);
    full.extend_from_slice(half);
    for k in half.len()..dft_size {
        full.push(half[dft_size - k].conj());
    }
    full
}

/// One-sided STFT.
pub fn stft(signal: &AudioSignal, config: &FrameConfig) -> Result<Spectrogram> {
    stft_with_layout(signal, config, Layout::OneSided)
}

/// STFT with an explicit bin layout. A final partial frame is zero-padded.
pub fn stft_with_layout(
    signal: &AudioSignal,
    config: &FrameConfig,
    layout: Layout,
) -> Result<Spectrogram> {
    let x = signal.samples();
    if x.len() < config.frame_len {
        return Err(Error::TooShort {
            got: x.len(),
            need: config.frame_len,
        });
    }
    let dft = Dft::new(config.dft_size);
    let n_bins = layout.n_bins(config.dft_size);
    let n_frames = config.frame_count(x.len());
    let mut frames = Vec::with_capacity(n_frames);
    let mut buf = vec![Complex64::new(0.0, 0.0); config.dft_size];
    for l in 0..n_frames {
        let start = l * config.shift;
        buf.fill(Complex64::new(0.0, 0.0));
        for (i, w) in config.window.iter().enumerate() {
            if let Some(&s) = x.get(start + i) {
                buf[i].re = w * s;
            }
        }
        dft.forward(&mut buf);
        frames.push(buf[..n_bins].to_vec());
    }
    Ok(Spectrogram {
        frames,
        config: config.clone(),
        layout,
        signal_len: x.len(),
    })
}

/// Inverse STFT: inverse DFT per frame, square-root Hann synthesis window,
/// overlap-add. Expects 50% overlap.
pub fn istft(spec: &Spectrogram) -> Result<AudioSignal> {
    let cfg = &spec.config;
    if spec.frames.is_empty() {
        return Err(Error::Config("cannot synthesize an empty spectrogram".into()));
    }
    if cfg.shift * 2 != cfg.frame_len {
        return Err(Error::Config(format!(
            "overlap-add synthesis needs shift = frame_len / 2, got {} / {}",
            cfg.shift, cfg.frame_len
        )));
    }
    let n_bins = spec.n_bins();
    if let Some(bad) = spec.frames.iter().find(|f| f.len() != n_bins) {
        return Err(Error::Length {
            what: "spectrogram frame bins",
            expected: n_bins,
            got: bad.len(),
        });
    }
    let dft = Dft::new(cfg.dft_size);
    let full_len = (spec.frames.len() - 1) * cfg.shift + cfg.frame_len;
    let mut out = vec![0.0; full_len.max(spec.signal_len)];
    for (l, frame) in spec.frames.iter().enumerate() {
        let mut buf = match spec.layout {
            Layout::OneSided => expand_one_sided(frame, cfg.dft_size),
            Layout::TwoSided => frame.clone(),
        };
        dft.inverse(&mut buf);
        let start = l * cfg.shift;
        for (i, w) in cfg.window.iter().enumerate() {
            out[start + i] += w * buf[i].re;
        }
    }
    out.truncate(spec.signal_len);
    AudioSignal::new(out)
}

/// Real/imaginary feature planes of one frame, zero-padded to a fixed height.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    /// Channel 0 holds real parts, channel 1 imaginary parts.
    pub channels: [Vec<f64>; 2],
}

impl FeatureMap {
    pub fn height(&self) -> usize {
        self.channels[0].len()
    }
}

/// Splits a frame into real and imaginary channels of height `target_height`,
/// appending zero rows after the last bin.
pub fn zero_pad_features(frame: &[Complex64], target_height: usize) -> Result<FeatureMap> {
    if frame.len() > target_height {
        return Err(Error::Config(format!(
            "{} bins do not fit into feature height {target_height}",
            frame.len()
        )));
    }
    let mut re = vec![0.0; target_height];
    let mut im = vec![0.0; target_height];
    for (k, c) in frame.iter().enumerate() {
        re[k] = c.re;
        im[k] = c.im;
    }
    Ok(FeatureMap { channels: [re, im] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> AudioSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioSignal::new((0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn sqrt_hann_four_points() {
        let w = sqrt_hann(4).unwrap();
        let expected = [0.0, 0.5f64.sqrt(), 1.0, 0.5f64.sqrt()];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn sqrt_hann_power_complementary() {
        let w = sqrt_hann(512).unwrap();
        for i in 0..256 {
            assert!((w[i] * w[i] + w[i + 256] * w[i + 256] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sqrt_hann_rejects_odd() {
        assert!(sqrt_hann(3).is_err());
        assert!(sqrt_hann(0).is_err());
    }

    #[test]
    fn zero_signal_gives_zero_frames() {
        let spec = stft(&AudioSignal::zeros(2000), &FrameConfig::enhancement()).unwrap();
        assert!(spec.frames().iter().flatten().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn impulse_has_flat_magnitude() {
        let cfg = FrameConfig::enhancement();
        let mut x = vec![0.0; 1024];
        x[300] = 1.0;
        let spec = stft(&AudioSignal::new(x).unwrap(), &cfg).unwrap();
        let w300 = cfg.window()[300];
        for c in &spec.frames()[0] {
            assert!((c.norm() - w300).abs() < 1e-12);
        }
        let w44 = cfg.window()[44];
        for c in &spec.frames()[1] {
            assert!((c.norm() - w44).abs() < 1e-12);
        }
    }

    /// Geometric-series closed form of `sum_i sin(pi i / n) e^{-j 2 pi m i / n}`.
    fn sine_window_dft(n: usize, m: i64) -> Complex64 {
        let nf = n as f64;
        let j = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        let a = (j * PI * (1.0 - 2.0 * m as f64) / nf).exp();
        let b = (-j * PI * (1.0 + 2.0 * m as f64) / nf).exp();
        (2.0 / (one - a) - 2.0 / (one - b)) / (2.0 * j)
    }

    #[test]
    fn bin_centred_sinusoid_matches_closed_form() {
        let cfg = FrameConfig::enhancement();
        let f = 16000.0 * 32.0 / 512.0;
        let x: Vec<f64> = (0..512)
            .map(|n| (2.0 * PI * f * n as f64 / 16000.0).cos())
            .collect();
        let spec = stft_with_layout(&AudioSignal::new(x).unwrap(), &cfg, Layout::TwoSided).unwrap();
        let frame = &spec.frames()[0];
        for (k, got) in frame.iter().enumerate() {
            let k = k as i64;
            let expected = 0.5 * (sine_window_dft(512, k - 32) + sine_window_dft(512, k + 32));
            assert!((got - expected).norm() < 1e-9, "bin {k}");
        }
        let peak = frame[32].norm();
        assert!((frame[480].norm() - peak).abs() < 1e-9);
        // Leakage falls off as 1/(4m^2 - 1): about -31 dB three bins away.
        let rel_db = |k: usize| 20.0 * (frame[k].norm() / peak).log10();
        assert!(rel_db(35) < -30.0 && rel_db(35) > -32.0);
        assert!(rel_db(32 + 30) < -65.0);
    }

    #[test]
    fn reconstruction_interior_exact() {
        let cfg = FrameConfig::enhancement();
        let x = noise(16000, 7);
        let y = istft(&stft(&x, &cfg).unwrap()).unwrap();
        assert_eq!(y.len(), x.len());
        let dev = x.max_abs_diff(&y, 512..16000 - 512);
        assert!(dev < 1e-10, "{dev}");
    }

    #[test]
    fn reconstruction_two_sided() {
        let cfg = FrameConfig::enhancement();
        let x = noise(5000, 8);
        let y = istft(&stft_with_layout(&x, &cfg, Layout::TwoSided).unwrap()).unwrap();
        assert!(x.max_abs_diff(&y, 512..5000 - 512) < 1e-10);
    }

    #[test]
    fn short_signal_rejected() {
        assert!(stft(&AudioSignal::zeros(511), &FrameConfig::enhancement()).is_err());
    }

    #[test]
    fn empty_spectrogram_rejected() {
        let spec = Spectrogram::new(vec![], FrameConfig::enhancement(), Layout::OneSided).unwrap();
        assert!(istft(&spec).is_err());
    }

    #[test]
    fn single_zero_frame_gives_zero_frame_len() {
        let spec = Spectrogram::new(
            vec![vec![Complex64::new(0.0, 0.0); 257]],
            FrameConfig::enhancement(),
            Layout::OneSided,
        )
        .unwrap();
        let y = istft(&spec).unwrap();
        assert_eq!(y.len(), 512);
        assert!(y.is_silent());
    }

    #[test]
    fn inconsistent_frames_rejected() {
        let r = Spectrogram::new(
            vec![vec![Complex64::new(0.0, 0.0); 257], vec![Complex64::new(0.0, 0.0); 256]],
            FrameConfig::enhancement(),
            Layout::OneSided,
        );
        assert!(r.is_err());
    }

    #[test]
    fn frame_count_pads_tail() {
        let cfg = FrameConfig::enhancement();
        assert_eq!(cfg.frame_count(512), 1);
        assert_eq!(cfg.frame_count(768), 2);
        assert_eq!(cfg.frame_count(769), 3);
        let spec = stft(&noise(769, 1), &cfg).unwrap();
        assert_eq!(spec.n_frames(), 3);
        assert_eq!(istft(&spec).unwrap().len(), 769);
    }

    #[test]
    fn parseval_two_sided() {
        let cfg = FrameConfig::enhancement();
        let x = noise(2048, 3);
        let spec = stft_with_layout(&x, &cfg, Layout::TwoSided).unwrap();
        for (l, frame) in spec.frames().iter().enumerate() {
            let time: f64 = (0..512)
                .map(|i| (cfg.window()[i] * x.samples()[l * 256 + i]).powi(2))
                .sum();
            let freq: f64 = frame.iter().map(|c| c.norm_sqr()).sum();
            assert!((freq - 512.0 * time).abs() / freq < 1e-9);
        }
    }

    #[test]
    fn feature_padding() {
        let frame = vec![Complex64::new(1.0, 1.0); 257];
        let fm = zero_pad_features(&frame, 260).unwrap();
        assert_eq!(fm.height(), 260);
        for ch in &fm.channels {
            assert!(ch[..257].iter().all(|&v| v == 1.0));
            assert!(ch[257..].iter().all(|&v| v == 0.0));
        }
        assert!(zero_pad_features(&vec![Complex64::new(0.0, 0.0); 300], 260).is_err());
    }

    #[test]
    fn frame_config_validation() {
        assert!(FrameConfig::new(512, 200, 512).is_err());
        assert!(FrameConfig::new(512, 256, 256).is_err());
        assert!(FrameConfig::new(512, 256, 1024).is_ok());
    }
}
