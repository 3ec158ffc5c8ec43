//! Hybrid two-stage speech enhancement toolkit.
//!
//! The first stage is a frequency-domain adaptive Kalman filter echo
//! canceller ([`aec`]); the second stage is a spectral postfilter whose
//! outputs (complex masks or direct spectra) are applied by [`enhance`].
//! [`sim`] renders synthetic echo scenarios and [`eval`] measures ERLE and
//! ΔSNR on the full output as well as on black-box separated components.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aec;
pub mod dsp;
pub mod enhance;
mod error;
pub mod eval;
pub mod pipeline;
pub mod sim;

pub use aec::{process_aec, AecFrameOutput, AecOutput, KalmanConfig, KalmanState};
pub use dsp::{istft, sqrt_hann, stft, zero_pad_features, AudioSignal, FrameConfig, Layout, Spectrogram, SAMPLE_RATE};
pub use enhance::{apply_complex_mask, assemble_output, ExchangeFile, OutputMode, StreamLabel};
pub use error::{Error, Result};
pub use eval::{
    blackbox_separate, delta_snr, erle, ComponentSet, MetricsReport, OperatorTrace,
    UtteranceMetrics,
};
pub use pipeline::{InputSet, PipelineConfig};
pub use sim::{EchoScenario, MixtureBundle, NonlinearityParams, RoomSpec};
