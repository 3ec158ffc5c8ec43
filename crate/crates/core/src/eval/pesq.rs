//! Adapter for an external wideband PESQ executable.
//!
//! The tool is invoked as `<tool> +16000 +wb <reference.wav> <degraded.wav>`
//! (the calling convention of the ITU-T P.862 reference implementation) and
//! the last number on the first output line mentioning "MOS" or
//! "Prediction" is taken as the MOS-LQO.

use std::fmt;
use std::path::Path;
use std::process::Command;

use hound::{SampleFormat, WavSpec, WavWriter};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dsp::AudioSignal;

/// Environment variable naming the PESQ executable.
pub const PESQ_ENV: &str = "HSE_PESQ";

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PesqScore {
    Mos(f64),
    Unavailable,
}

impl PesqScore {
    pub fn mos(self) -> Option<f64> {
        match self {
            PesqScore::Mos(v) => Some(v),
            PesqScore::Unavailable => None,
        }
    }
}

impl fmt::Display for PesqScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PesqScore::Mos(v) => write!(f, "{v:.2}"),
            PesqScore::Unavailable => f.write_str("unavailable"),
        }
    }
}

impl Serialize for PesqScore {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            PesqScore::Mos(v) => s.serialize_f64(*v),
            PesqScore::Unavailable => s.serialize_str("unavailable"),
        }
    }
}

impl<'de> Deserialize<'de> for PesqScore {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Num(v) => PesqScore::Mos(v),
            Raw::Text(t) if t == "unavailable" => PesqScore::Unavailable,
            Raw::Text(t) => {
                return Err(serde::de::Error::custom(format!("invalid PESQ score {t:?}")))
            }
        })
    }
}

/// Extracts the MOS from the tool's standard output.
pub fn parse_mos(stdout: &str) -> Option<f64> {
    let line = stdout
        .lines()
        .find(|l| l.contains("MOS") || l.contains("Prediction"))?;
    line.split(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-'))
        .filter_map(|tok| tok.parse::<f64>().ok())
        .next_back()
}

fn write_pcm16(path: &Path, signal: &AudioSignal) -> std::io::Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).map_err(std::io::Error::other)?;
    for &s in signal.samples() {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v).map_err(std::io::Error::other)?;
    }
    w.finalize().map_err(std::io::Error::other)
}

/// Scores `degraded` against `reference`. Returns `Unavailable` when no
/// tool is configured; tool failures come back as a warning alongside
/// `Unavailable`.
pub fn pesq_adapter(
    reference: &AudioSignal,
    degraded: &AudioSignal,
    tool: Option<&Path>,
) -> (PesqScore, Option<String>) {
    let Some(tool) = tool else {
        return (PesqScore::Unavailable, None);
    };
    let run = || -> Result<f64, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let ref_path = dir.path().join("ref.wav");
        let deg_path = dir.path().join("deg.wav");
        write_pcm16(&ref_path, reference).map_err(|e| e.to_string())?;
        write_pcm16(&deg_path, degraded).map_err(|e| e.to_string())?;
        let out = Command::new(tool)
            .arg("+16000")
            .arg("+wb")
            .arg(&ref_path)
            .arg(&deg_path)
            .current_dir(dir.path())
            .output()
            .map_err(|e| format!("cannot run {}: {e}", tool.display()))?;
        let stdout = String::from_utf8_lossy(&out.stdout);
        if !out.status.success() {
            return Err(format!("{} exited with {}", tool.display(), out.status));
        }
        parse_mos(&stdout).ok_or_else(|| format!("no MOS in output of {}", tool.display()))
    };
    match run() {
        Ok(mos) => (PesqScore::Mos(mos), None),
        Err(warning) => (PesqScore::Unavailable, Some(warning)),
    }
}
