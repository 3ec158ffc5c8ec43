//! Stage wiring shared by the command-line front end: configuration, input
//! sets for the second stage, feature export, output assembly, oracle
//! network outputs and per-utterance evaluation.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::aec::KalmanConfig;
use crate::dsp::{istft, stft, AudioSignal, FrameConfig, Spectrogram};
use crate::enhance::{assemble_output, ExchangeFile, OutputMode, StreamLabel};
use crate::error::{Error, Result};
use crate::eval::{
    blackbox_separate, delta_snr, erle, noise_attenuation, pesq_adapter, postfilter_gain_from_run,
    OperatorTrace, PesqScore, UtteranceMetrics, DEFAULT_GAIN_CAP, ERLE_ACTIVITY_DB,
};
use crate::sim::{Condition, MixtureBundle};

/// Candidate second-stage inputs in canonical order.
pub const INPUT_CANDIDATES: [StreamLabel; 4] =
    [StreamLabel::Y, StreamLabel::X, StreamLabel::Dhat, StreamLabel::E];

/// Maximum deviation tolerated between the separated component sum and the
/// system output.
pub const COMPONENT_SUM_TOLERANCE: f64 = 1e-6;

/// Subset of `{Y, X, Dhat, E}` that always contains `E`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct InputSet {
    members: [bool; 4],
}

impl InputSet {
    pub fn new(labels: &[StreamLabel]) -> Result<Self> {
        let mut members = [false; 4];
        for l in labels {
            let i = INPUT_CANDIDATES
                .iter()
                .position(|c| c == l)
                .ok_or_else(|| Error::Config(format!("{l} is not a second-stage input")))?;
            members[i] = true;
        }
        if !members[3] {
            return Err(Error::Config("input set must contain E".into()));
        }
        Ok(Self { members })
    }

    pub fn e_only() -> Self {
        Self {
            members: [false, false, false, true],
        }
    }

    /// Labels in canonical order.
    pub fn labels(&self) -> Vec<StreamLabel> {
        INPUT_CANDIDATES
            .iter()
            .zip(self.members)
            .filter(|(_, m)| *m)
            .map(|(l, _)| *l)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|m| **m).count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, label: StreamLabel) -> bool {
        self.labels().contains(&label)
    }

    /// Every set containing `E`: `{E}` first, then by size, then in
    /// canonical order.
    pub fn all_e_sets() -> Vec<InputSet> {
        let mut sets: Vec<InputSet> = (0..8u8)
            .map(|bits| Self {
                members: [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0, true],
            })
            .collect();
        sets.sort_by_key(|s| {
            let order: Vec<bool> = s.members[..3].iter().map(|m| !m).collect();
            (s.len(), order)
        });
        sets
    }
}

impl Default for InputSet {
    fn default() -> Self {
        Self::e_only()
    }
}

impl fmt::Display for InputSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.labels().iter().map(|l| l.as_str()).collect();
        f.write_str(&names.join(","))
    }
}

impl FromStr for InputSet {
    type Err = Error;

    /// Parses `Y,Dhat,E` (also `+`-separated, case-insensitive).
    fn from_str(s: &str) -> Result<Self> {
        let labels = s
            .split([',', '+'])
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                INPUT_CANDIDATES
                    .into_iter()
                    .find(|c| c.as_str().eq_ignore_ascii_case(t))
                    .ok_or_else(|| Error::Config(format!("unknown input {t:?} (Y, X, Dhat, E)")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(&labels)
    }
}

impl Serialize for InputSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for InputSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Serializable framing of the second stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameSpec {
    pub frame_len: usize,
    pub shift: usize,
    pub dft_size: usize,
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self {
            frame_len: 512,
            shift: 256,
            dft_size: 512,
        }
    }
}

impl FrameSpec {
    pub fn to_config(self) -> Result<FrameConfig> {
        FrameConfig::new(self.frame_len, self.shift, self.dft_size)
    }
}

/// Run configuration; every field defaults and can be overridden from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub kalman: KalmanConfig,
    pub frame: FrameSpec,
    pub mode: OutputMode,
    pub input_set: InputSet,
    /// Magnitude cap of the `OutE` postfilter gain used for separation.
    pub gain_cap: f64,
    pub pesq_tool: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            kalman: KalmanConfig::default(),
            frame: FrameSpec::default(),
            mode: OutputMode::OutM,
            input_set: InputSet::e_only(),
            gain_cap: DEFAULT_GAIN_CAP,
            pesq_tool: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.kalman.validate()?;
        let frame = self.frame_config()?;
        if frame.shift() * 2 != frame.frame_len() {
            return Err(Error::Config("frame shift must be half the frame length".into()));
        }
        if !(self.gain_cap > 0.0) {
            return Err(Error::Config(format!("gain_cap must be > 0, got {}", self.gain_cap)));
        }
        Ok(())
    }

    pub fn frame_config(&self) -> Result<FrameConfig> {
        self.frame.to_config()
    }
}

/// Spectra of the selected inputs, one stream per input in canonical order.
pub fn export_features(
    y: &AudioSignal,
    x: &AudioSignal,
    d_hat: &AudioSignal,
    e: &AudioSignal,
    set: InputSet,
    frame: &FrameConfig,
) -> Result<ExchangeFile> {
    let specs = set
        .labels()
        .into_iter()
        .map(|l| {
            let sig = match l {
                StreamLabel::Y => y,
                StreamLabel::X => x,
                StreamLabel::Dhat => d_hat,
                _ => e,
            };
            Ok((l, stft(sig, frame)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<(StreamLabel, &Spectrogram)> = specs.iter().map(|(l, s)| (*l, s)).collect();
    ExchangeFile::from_spectrograms(&refs)
}

/// Reads the network output for `mode` from an exchange file, checking its
/// shape against the AEC output spectrum.
pub fn net_output(net: &ExchangeFile, mode: OutputMode, e_spec: &Spectrogram) -> Result<Spectrogram> {
    net.expect_labels(&[mode.net_label()])?;
    if net.layout != e_spec.layout() || net.n_bins != e_spec.n_bins() || net.n_frames != e_spec.n_frames() {
        return Err(Error::Format(format!(
            "network output is {} frames × {} bins, expected {} × {}",
            net.n_frames,
            net.n_bins,
            e_spec.n_frames(),
            e_spec.n_bins()
        )));
    }
    net.spectrogram(mode.net_label(), e_spec.config(), e_spec.signal_len())
}

/// Second stage: enhanced signal from the AEC output and the network output.
pub fn enhance_signal(e: &AudioSignal, net: &Spectrogram, mode: OutputMode, frame: &FrameConfig) -> Result<AudioSignal> {
    let e_spec = stft(e, frame)?;
    istft(&assemble_output(mode, &e_spec, net)?)
}

/// Stand-in network outputs that need no trained model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleKind {
    /// Removes everything.
    Zero,
    /// Passes the AEC output through (saturated mask for `OutM`).
    Identity,
    /// Per-bin gain `S/E` from the known near-end speech, magnitude clipped.
    Wiener,
}

impl FromStr for OracleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zero" => Ok(OracleKind::Zero),
            "identity" => Ok(OracleKind::Identity),
            "wiener" => Ok(OracleKind::Wiener),
            _ => Err(Error::Config(format!("unknown oracle {s:?} (zero, identity, wiener)"))),
        }
    }
}

/// Mask magnitude whose bounded gain rounds to exactly one.
pub const IDENTITY_MASK_MAGNITUDE: f64 = 40.0;
/// Upper bound on the Wiener-like oracle gain.
pub const WIENER_GAIN_MAX: f64 = 0.999;

/// Oracle network output for `mode`. `s` is the near-end speech at the
/// microphone and is only read by [`OracleKind::Wiener`].
pub fn oracle_net_output(
    kind: OracleKind,
    mode: OutputMode,
    e: &AudioSignal,
    s: &AudioSignal,
    frame: &FrameConfig,
) -> Result<Spectrogram> {
    let e_spec = stft(e, frame)?;
    let zero = Complex64::new(0.0, 0.0);
    let frames: Vec<Vec<Complex64>> = match kind {
        OracleKind::Zero => vec![vec![zero; e_spec.n_bins()]; e_spec.n_frames()],
        OracleKind::Identity => match mode {
            OutputMode::OutE => e_spec.frames().to_vec(),
            OutputMode::OutM => {
                vec![vec![Complex64::new(IDENTITY_MASK_MAGNITUDE, 0.0); e_spec.n_bins()]; e_spec.n_frames()]
            }
        },
        OracleKind::Wiener => {
            let s_spec = stft(s, frame)?;
            if s_spec.n_frames() != e_spec.n_frames() {
                return Err(Error::Length {
                    what: "speech frames",
                    expected: e_spec.n_frames(),
                    got: s_spec.n_frames(),
                });
            }
            e_spec
                .frames()
                .iter()
                .zip(s_spec.frames())
                .map(|(ef, sf)| {
                    ef.iter()
                        .zip(sf)
                        .map(|(&e, &s)| {
                            let g = wiener_gain(e, s);
                            match mode {
                                OutputMode::OutE => e * g,
                                OutputMode::OutM => {
                                    let mag = g.norm();
                                    if mag == 0.0 {
                                        zero
                                    } else {
                                        g * (mag.atanh() / mag)
                                    }
                                }
                            }
                        })
                        .collect()
                })
                .collect()
        }
    };
    e_spec.with_frames(frames)
}

fn wiener_gain(e: Complex64, s: Complex64) -> Complex64 {
    if e.norm() < 1e-12 {
        return Complex64::new(0.0, 0.0);
    }
    let g = s / e;
    let mag = g.norm();
    if mag > WIENER_GAIN_MAX {
        g * (WIENER_GAIN_MAX / mag)
    } else {
        g
    }
}

/// Everything recorded from one full run of the system on a mixture.
#[derive(Clone, Copy, Debug)]
pub struct SystemRun<'a> {
    /// AEC output.
    pub e: &'a AudioSignal,
    /// Echo path snapshots of the AEC.
    pub w_trace: &'a [Vec<Complex64>],
    /// Network output (`Ŝ` or `M`).
    pub net: &'a Spectrogram,
    /// Enhanced output.
    pub output: &'a AudioSignal,
}

/// Measures one utterance. Full mixtures get black-box metrics; echo-only,
/// noise-only and speech-only mixtures get the single-component metric of
/// their condition. Metrics that are undefined for the mixture (e.g. ΔSNR
/// without noise) are left empty and reported as warnings.
pub fn evaluate_utterance(
    id: &str,
    condition: Condition,
    bundle: &MixtureBundle,
    run: SystemRun<'_>,
    cfg: &PipelineConfig,
) -> Result<(UtteranceMetrics, Vec<String>)> {
    let frame = cfg.frame_config()?;
    let e_spec = stft(run.e, &frame)?;
    let trace = OperatorTrace {
        w: run.w_trace.to_vec(),
        g: postfilter_gain_from_run(&e_spec, run.net, cfg.mode, cfg.gain_cap)?,
        mode: cfg.mode,
    };
    let comps = blackbox_separate(&trace, bundle, &cfg.kalman, &frame)?;
    let sum = comps.sum()?;
    let dev = sum.max_abs_diff(run.output, 0..run.output.len().min(sum.len()));

    let mut warnings = Vec::new();
    let mut pesq_warnings = Vec::new();
    let mut m = UtteranceMetrics {
        id: id.to_string(),
        condition,
        component_sum_max_dev: Some(dev),
        ..Default::default()
    };
    let mut note = |what: &str, r: Result<()>| {
        if let Err(e) = r {
            warnings.push(format!("{id}: {what}: {e}"));
        }
    };
    let tool = cfg.pesq_tool.as_deref();
    let mut pesq = |reference: &AudioSignal, degraded: &AudioSignal| -> PesqScore {
        let (score, warn) = pesq_adapter(reference, degraded, tool);
        pesq_warnings.extend(warn.map(|w| format!("{id}: PESQ: {w}")));
        score
    };
    match condition {
        Condition::Full => {
            m.pesq_full = Some(pesq(&bundle.s_mic, run.output));
            m.pesq_bb = Some(pesq(&bundle.s_mic, &comps.s_tilde));
            note(
                "ERLE_BB",
                erle(&bundle.d, &comps.d_tilde, ERLE_ACTIVITY_DB).map(|v| m.erle_bb = Some(v)),
            );
            note(
                "dSNR_BB",
                delta_snr(&bundle.s_mic, &bundle.n_mic, &comps.s_tilde, &comps.n_tilde)
                    .map(|v| m.dsnr_bb = Some(v)),
            );
        }
        Condition::EchoOnly => note(
            "ERLE",
            erle(&bundle.d, run.output, ERLE_ACTIVITY_DB).map(|v| m.erle_echo_only = Some(v)),
        ),
        Condition::NoiseOnly => note(
            "dSNR",
            noise_attenuation(&bundle.n_mic, run.output).map(|v| m.dsnr_noise_only = Some(v.db)),
        ),
        Condition::SpeechOnly => m.pesq_speech_only = Some(pesq(&bundle.s_mic, run.output)),
    }
    warnings.extend(pesq_warnings);
    if !(dev < COMPONENT_SUM_TOLERANCE) {
        m.error = Some(format!(
            "component sum deviates from the output by {dev:.3e} (tolerance {COMPONENT_SUM_TOLERANCE:e})"
        ));
    }
    Ok((m, warnings))
}
