//! `SPXC` spectral exchange files.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic      4 bytes  "SPXC"
//! version    u16
//! layout     u8       0 = one-sided, 1 = two-sided
//! n_bins     u32
//! n_frames   u32
//! n_streams  u16
//! labels     n_streams × (u8 length, ASCII bytes)
//! payload    frame-major, stream-major, bin-major (re, im) f32 pairs
//! ```

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use num_complex::{Complex32, Complex64};

use crate::dsp::{FrameConfig, Layout, Spectrogram};
use crate::error::{Error, Result};

pub const EXCHANGE_MAGIC: &[u8; 4] = b"SPXC";
pub const EXCHANGE_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StreamLabel {
    Y,
    X,
    Dhat,
    E,
    M,
    Shat,
    W,
}

impl StreamLabel {
    pub const ALL: [StreamLabel; 7] = [
        StreamLabel::Y,
        StreamLabel::X,
        StreamLabel::Dhat,
        StreamLabel::E,
        StreamLabel::M,
        StreamLabel::Shat,
        StreamLabel::W,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StreamLabel::Y => "Y",
            StreamLabel::X => "X",
            StreamLabel::Dhat => "Dhat",
            StreamLabel::E => "E",
            StreamLabel::M => "M",
            StreamLabel::Shat => "Shat",
            StreamLabel::W => "W",
        }
    }
}

impl fmt::Display for StreamLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StreamLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StreamLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Format(format!("unknown stream label {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stream {
    pub label: StreamLabel,
    /// `n_frames × n_bins` values.
    pub frames: Vec<Vec<Complex32>>,
}

/// In-memory image of an exchange file.
#[derive(Clone, Debug, PartialEq)]
pub struct ExchangeFile {
    pub layout: Layout,
    pub n_bins: usize,
    pub n_frames: usize,
    pub streams: Vec<Stream>,
}

impl ExchangeFile {
    pub fn new(layout: Layout, n_bins: usize, n_frames: usize, streams: Vec<Stream>) -> Result<Self> {
        if streams.len() > u16::MAX as usize {
            return Err(Error::Format("too many streams".into()));
        }
        for s in &streams {
            if s.frames.len() != n_frames || s.frames.iter().any(|f| f.len() != n_bins) {
                return Err(Error::Format(format!(
                    "stream {} does not match {n_frames} frames × {n_bins} bins",
                    s.label
                )));
            }
        }
        Ok(Self {
            layout,
            n_bins,
            n_frames,
            streams,
        })
    }

    /// Packs spectrograms with identical shape into one file.
    pub fn from_spectrograms(streams: &[(StreamLabel, &Spectrogram)]) -> Result<Self> {
        let first = streams
            .first()
            .ok_or_else(|| Error::Format("no streams given".into()))?
            .1;
        let packed = streams
            .iter()
            .map(|(label, spec)| Stream {
                label: *label,
                frames: spec
                    .frames()
                    .iter()
                    .map(|f| f.iter().map(|c| Complex32::new(c.re as f32, c.im as f32)).collect())
                    .collect(),
            })
            .collect();
        Self::new(first.layout(), first.n_bins(), first.n_frames(), packed)
    }

    /// Packs raw frame sequences (e.g. one-sided filter snapshots).
    pub fn from_frames(layout: Layout, label: StreamLabel, frames: &[Vec<Complex64>]) -> Result<Self> {
        let n_bins = frames.first().map_or(0, Vec::len);
        let stream = Stream {
            label,
            frames: frames
                .iter()
                .map(|f| f.iter().map(|c| Complex32::new(c.re as f32, c.im as f32)).collect())
                .collect(),
        };
        Self::new(layout, n_bins, frames.len(), vec![stream])
    }

    pub fn labels(&self) -> Vec<StreamLabel> {
        self.streams.iter().map(|s| s.label).collect()
    }

    pub fn stream(&self, label: StreamLabel) -> Option<&Stream> {
        self.streams.iter().find(|s| s.label == label)
    }

    /// Fails unless the streams carry exactly `expected`, in order.
    pub fn expect_labels(&self, expected: &[StreamLabel]) -> Result<()> {
        let found = self.labels();
        if found != expected {
            return Err(Error::Labels {
                expected: expected.iter().map(|l| l.to_string()).collect(),
                found: found.iter().map(|l| l.to_string()).collect(),
            });
        }
        Ok(())
    }

    /// Frames of one stream widened to f64.
    pub fn frames64(&self, label: StreamLabel) -> Result<Vec<Vec<Complex64>>> {
        let stream = self.stream(label).ok_or_else(|| Error::Labels {
            expected: vec![label.to_string()],
            found: self.labels().iter().map(|l| l.to_string()).collect(),
        })?;
        Ok(stream
            .frames
            .iter()
            .map(|f| f.iter().map(|c| Complex64::new(c.re as f64, c.im as f64)).collect())
            .collect())
    }

    /// One stream as a spectrogram with the given framing and signal length.
    pub fn spectrogram(
        &self,
        label: StreamLabel,
        config: &FrameConfig,
        signal_len: usize,
    ) -> Result<Spectrogram> {
        Ok(Spectrogram::new(self.frames64(label)?, config.clone(), self.layout)?
            .with_signal_len(signal_len))
    }

    pub fn header_len(&self) -> usize {
        4 + 2 + 1 + 4 + 4 + 2 + self.streams.iter().map(|s| 1 + s.label.as_str().len()).sum::<usize>()
    }

    pub fn payload_len(&self) -> usize {
        self.n_frames * self.streams.len() * self.n_bins * 2 * 4
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.header_len() + self.payload_len());
        out.extend_from_slice(EXCHANGE_MAGIC);
        out.extend_from_slice(&EXCHANGE_VERSION.to_le_bytes());
        out.push(match self.layout {
            Layout::OneSided => 0,
            Layout::TwoSided => 1,
        });
        out.extend_from_slice(&(self.n_bins as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_frames as u32).to_le_bytes());
        out.extend_from_slice(&(self.streams.len() as u16).to_le_bytes());
        for s in &self.streams {
            let name = s.label.as_str();
            out.push(name.len() as u8);
            out.extend_from_slice(name.as_bytes());
        }
        for l in 0..self.n_frames {
            for s in &self.streams {
                for c in &s.frames[l] {
                    out.extend_from_slice(&c.re.to_le_bytes());
                    out.extend_from_slice(&c.im.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != EXCHANGE_MAGIC {
            return Err(Error::Format("bad magic, not an SPXC file".into()));
        }
        let version = r.u16()?;
        if version != EXCHANGE_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let layout = match r.take(1)?[0] {
            0 => Layout::OneSided,
            1 => Layout::TwoSided,
            v => return Err(Error::Format(format!("bad layout flag {v}"))),
        };
        let n_bins = r.u32()? as usize;
        let n_frames = r.u32()? as usize;
        let n_streams = r.u16()? as usize;
        let mut labels = Vec::with_capacity(n_streams);
        for _ in 0..n_streams {
            let len = r.take(1)?[0] as usize;
            let raw = r.take(len)?;
            let name = std::str::from_utf8(raw)
                .map_err(|_| Error::Format("non-ASCII stream label".into()))?;
            labels.push(name.parse::<StreamLabel>()?);
        }
        let expected = (r.pos + n_frames * n_streams * n_bins * 8) as u64;
        if (bytes.len() as u64) < expected {
            return Err(Error::Truncated {
                offset: bytes.len() as u64,
                expected,
            });
        }
        if (bytes.len() as u64) > expected {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                bytes.len() as u64 - expected
            )));
        }
        let mut streams: Vec<Stream> = labels
            .into_iter()
            .map(|label| Stream {
                label,
                frames: Vec::with_capacity(n_frames),
            })
            .collect();
        for _ in 0..n_frames {
            for s in streams.iter_mut() {
                let mut frame = Vec::with_capacity(n_bins);
                for _ in 0..n_bins {
                    let re = r.f32()?;
                    let im = r.f32()?;
                    frame.push(Complex32::new(re, im));
                }
                s.frames.push(frame);
            }
        }
        Self::new(layout, n_bins, n_frames, streams)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::from(e).at(path))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::from(e).at(path))?;
        Self::from_bytes(&bytes).map_err(|e| e.at(path))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated {
                offset: self.bytes.len() as u64,
                expected: (self.pos + n) as u64,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
