use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioSignal, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Reads a 16 kHz mono WAV file (16-bit PCM or 32-bit float), normalized to [-1, 1].
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioSignal> {
    let path = path.as_ref();
    read_wav_inner(path).map_err(|e| e.at(path))
}

fn read_wav_inner(path: &Path) -> Result<AudioSignal> {
    let reader = WavReader::open(path)?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE || spec.channels != 1 {
        return Err(Error::Config(format!(
            "expected 16 kHz mono, found {} Hz with {} channels",
            spec.sample_rate, spec.channels
        )));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::Config(format!(
                "unsupported sample format {fmt:?} with {bits} bits"
            )))
        }
    };
    AudioSignal::new(samples)
}

/// Writes a 32-bit float mono WAV file.
pub fn write_wav(path: impl AsRef<Path>, signal: &AudioSignal) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate(),
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let write = || -> Result<()> {
        let mut writer = WavWriter::create(path, spec)?;
        for &s in signal.samples() {
            writer.write_sample(s as f32)?;
        }
        writer.finalize()?;
        Ok(())
    };
    write().map_err(|e| e.at(path))
}
