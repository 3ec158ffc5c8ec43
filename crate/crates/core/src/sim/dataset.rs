//! JSON-lines manifests and on-disk mixture bundles.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mixer::{level_ratio_db, mix_scenario, seconds_to_samples, Condition, EchoScenario, MixtureBundle};
use super::sources::{babble, speech_like, white_noise};
use super::{NonlinearityParams, RoomSpec};
use crate::dsp::{read_wav, write_wav, AudioSignal};
use crate::error::{Error, Result};

pub const SER_CHOICES_DB: [f64; 6] = [-6.0, -3.0, 0.0, 3.0, 6.0, f64::INFINITY];
pub const SNR_CHOICES_DB: [f64; 5] = [8.0, 10.0, 12.0, 14.0, f64::INFINITY];

/// A level in dB, `"inf"` for an absent component, or `"random"` to draw
/// from the standard SER/SNR grids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Level {
    Db(f64),
    Named(String),
}

impl Level {
    pub fn from_db(v: f64) -> Self {
        if v.is_infinite() {
            Level::Named("inf".into())
        } else {
            Level::Db(v)
        }
    }

    fn resolve<R: Rng>(&self, rng: &mut R, choices: &[f64]) -> Result<f64> {
        match self {
            Level::Db(v) if v.is_finite() => Ok(*v),
            Level::Named(s) if s == "inf" => Ok(f64::INFINITY),
            Level::Named(s) if s == "random" => Ok(choices[rng.random_range(0..choices.len())]),
            other => Err(Error::Config(format!(
                "level must be a number, \"inf\" or \"random\", got {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    White,
    Speech,
    Babble,
}

/// Audio source: a WAV path (relative to the manifest) or a seeded
/// synthetic generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SourceSpec {
    Path(PathBuf),
    Synth { synth: SynthKind, seconds: f64 },
}

impl SourceSpec {
    fn load<R: Rng>(&self, base_dir: &Path, rng: &mut R) -> Result<AudioSignal> {
        match self {
            SourceSpec::Path(p) => read_wav(base_dir.join(p)),
            SourceSpec::Synth { synth, seconds } => {
                if !(*seconds > 0.0) {
                    return Err(Error::Config(format!("source duration must be > 0, got {seconds}")));
                }
                let len = seconds_to_samples(*seconds);
                let samples = match synth {
                    SynthKind::White => white_noise(len, rng).into_iter().map(|v| 0.1 * v).collect(),
                    SynthKind::Speech => speech_like(len, rng),
                    SynthKind::Babble => babble(len, rng),
                };
                AudioSignal::new(samples)
            }
        }
    }
}

/// Explicit room geometry; drawn at random when absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomGeometry {
    pub dimensions: [f64; 3],
    pub source_pos: [f64; 3],
    pub mic_pos: [f64; 3],
}

fn default_t60() -> f64 {
    0.2
}

fn default_rir_len() -> usize {
    512
}

/// One manifest line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    #[serde(default)]
    pub id: Option<String>,
    pub far_end: SourceSpec,
    pub near_end: SourceSpec,
    #[serde(default)]
    pub noise: Option<SourceSpec>,
    pub ser_db: Level,
    pub snr_db: Level,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_t60")]
    pub t60: f64,
    #[serde(default = "default_rir_len")]
    pub rir_len: usize,
    #[serde(default)]
    pub room: Option<RoomGeometry>,
    #[serde(default)]
    pub nonlinearity: NonlinearityParams,
    #[serde(default)]
    pub condition: Condition,
}

impl ManifestEntry {
    pub fn id_or(&self, index: usize) -> String {
        self.id.clone().unwrap_or_else(|| format!("mix{index:05}"))
    }
}

/// Parses a JSON-lines manifest; blank lines are skipped. Errors name the
/// 1-based line number.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(line)
            .map_err(|e| Error::Config(format!("manifest line {}: {e}", i + 1)))?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Metadata written next to each rendered mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureMeta {
    pub id: String,
    pub seed: u64,
    pub condition: Condition,
    pub ser_db: Level,
    pub snr_db: Level,
    /// Realized levels over the speech-active region; absent when infinite.
    pub realized_ser_db: Option<f64>,
    pub realized_snr_db: Option<f64>,
    pub room: RoomSpec,
    pub nonlinearity: NonlinearityParams,
    pub n_samples: usize,
    pub far_end: SourceSpec,
    pub near_end: SourceSpec,
    pub noise: Option<SourceSpec>,
}

pub const META_FILE: &str = "meta.json";
pub const COMPONENT_FILES: [&str; 5] = ["x.wav", "y.wav", "d.wav", "s.wav", "n.wav"];

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Renders one manifest entry into `out_dir/<id>/`.
pub fn render_entry(
    entry: &ManifestEntry,
    index: usize,
    default_seed: u64,
    base_dir: &Path,
    out_dir: &Path,
) -> Result<MixtureMeta> {
    let id = entry.id_or(index);
    let seed = entry.seed.unwrap_or(default_seed.wrapping_add(index as u64));
    let far_end = entry.far_end.load(base_dir, &mut stream_rng(seed, 0))?;
    let near_end = entry.near_end.load(base_dir, &mut stream_rng(seed, 1))?;
    let noise = match &entry.noise {
        Some(spec) => spec.load(base_dir, &mut stream_rng(seed, 2))?,
        None => AudioSignal::zeros(0),
    };
    let room = match &entry.room {
        Some(g) => {
            let room = RoomSpec {
                dimensions: g.dimensions,
                source_pos: g.source_pos,
                mic_pos: g.mic_pos,
                t60: entry.t60,
                rir_len: entry.rir_len,
            };
            room.validate()?;
            room
        }
        None => RoomSpec::random(&mut stream_rng(seed, 3), entry.t60, entry.rir_len)?,
    };
    let mut level_rng = stream_rng(seed, 4);
    let ser_db = entry.ser_db.resolve(&mut level_rng, &SER_CHOICES_DB)?;
    let snr_db = entry.snr_db.resolve(&mut level_rng, &SNR_CHOICES_DB)?;
    if snr_db.is_finite() && entry.noise.is_none() {
        return Err(Error::Config(format!("{id}: finite snr_db requires a noise source")));
    }

    let scenario = EchoScenario {
        far_end,
        near_end,
        noise,
        room: room.clone(),
        nl: entry.nonlinearity.clone(),
        ser_db,
        snr_db,
        seed,
    };
    let full = mix_scenario(&scenario)?;
    let realized = |level: f64, comp: &AudioSignal| {
        level.is_finite().then(|| level_ratio_db(&full.s_mic, comp))
    };
    let meta = MixtureMeta {
        id: id.clone(),
        seed,
        condition: entry.condition,
        ser_db: Level::from_db(ser_db),
        snr_db: Level::from_db(snr_db),
        realized_ser_db: realized(ser_db, &full.d),
        realized_snr_db: realized(snr_db, &full.n_mic),
        room,
        nonlinearity: entry.nonlinearity.clone(),
        n_samples: full.len(),
        far_end: entry.far_end.clone(),
        near_end: entry.near_end.clone(),
        noise: entry.noise.clone(),
    };
    let bundle = full.restricted(entry.condition);
    write_mixture(&out_dir.join(&id), &bundle, &meta)?;
    Ok(meta)
}

pub fn write_mixture(dir: &Path, bundle: &MixtureBundle, meta: &MixtureMeta) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).at(dir))?;
    let signals = [&bundle.x, &bundle.y, &bundle.d, &bundle.s_mic, &bundle.n_mic];
    for (name, sig) in COMPONENT_FILES.iter().zip(signals) {
        write_wav(dir.join(name), sig)?;
    }
    let path = dir.join(META_FILE);
    let json = serde_json::to_string_pretty(meta)?;
    fs::write(&path, json + "\n").map_err(|e| Error::from(e).at(&path))?;
    Ok(())
}

/// Reads `x, y, d, s, n` back from a mixture directory.
pub fn load_mixture(dir: &Path) -> Result<MixtureBundle> {
    let [x, y, d, s, n] = COMPONENT_FILES.map(|name| read_wav(dir.join(name)));
    Ok(MixtureBundle {
        x: x?,
        y: y?,
        d: d?,
        s_mic: s?,
        n_mic: n?,
    })
}

pub fn load_meta(dir: &Path) -> Result<MixtureMeta> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::from(e).at(&path))?;
    serde_json::from_str(&text).map_err(|e| Error::from(e).at(&path))
}

#[derive(Clone, Debug, Default)]
pub struct DatasetSummary {
    pub written: Vec<MixtureMeta>,
    /// `(id, error message)` of entries that could not be rendered.
    pub failures: Vec<(String, String)>,
}

/// Renders every entry sequentially; failing entries are recorded and the
/// batch continues.
pub fn build_dataset(
    entries: &[ManifestEntry],
    default_seed: u64,
    base_dir: &Path,
    out_dir: &Path,
) -> DatasetSummary {
    let mut summary = DatasetSummary::default();
    for (i, entry) in entries.iter().enumerate() {
        match render_entry(entry, i, default_seed, base_dir, out_dir) {
            Ok(meta) => summary.written.push(meta),
            Err(e) => summary.failures.push((entry.id_or(i), e.to_string())),
        }
    }
    summary
}
