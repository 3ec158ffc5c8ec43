//! Per-utterance and corpus-level metric reports.

use serde::{Deserialize, Serialize};

use super::metrics::MetricDb;
use super::pesq::PesqScore;
use crate::sim::Condition;

/// Metrics of one utterance. Fields that do not apply to the utterance's
/// condition, or that could not be computed, are `None`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UtteranceMetrics {
    pub id: String,
    pub condition: Condition,
    /// Set when the utterance could not be evaluated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub pesq_full: Option<PesqScore>,
    pub erle_bb: Option<MetricDb>,
    pub dsnr_bb: Option<f64>,
    pub pesq_bb: Option<PesqScore>,
    pub erle_echo_only: Option<MetricDb>,
    pub dsnr_noise_only: Option<f64>,
    pub pesq_speech_only: Option<PesqScore>,
    /// Largest `|d̃ + ñ + s̃ − ŝ|` over the signal.
    pub component_sum_max_dev: Option<f64>,
}

impl UtteranceMetrics {
    pub fn failed(id: impl Into<String>, condition: Condition, error: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            condition,
            error: Some(error.into()),
            ..Self::default()
        }
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Means over the utterances for which each metric is available.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub utterances: usize,
    pub failed: usize,
    pub pesq_full: Option<f64>,
    pub erle_bb: Option<f64>,
    pub dsnr_bb: Option<f64>,
    pub pesq_bb: Option<f64>,
    pub erle_echo_only: Option<f64>,
    pub dsnr_noise_only: Option<f64>,
    pub pesq_speech_only: Option<f64>,
    /// Number of ERLE values that stand in for +∞.
    pub capped_erle: usize,
}

/// Mean of the available values, `None` if there are none.
pub fn mean_of<I: IntoIterator<Item = Option<f64>>>(values: I) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl CorpusSummary {
    pub fn from_utterances(items: &[UtteranceMetrics]) -> Self {
        let pesq = |f: fn(&UtteranceMetrics) -> Option<PesqScore>| {
            mean_of(items.iter().map(|u| f(u).and_then(PesqScore::mos)))
        };
        let erle = |f: fn(&UtteranceMetrics) -> Option<MetricDb>| {
            mean_of(items.iter().map(|u| f(u).map(|m| m.db)))
        };
        Self {
            utterances: items.len(),
            failed: items.iter().filter(|u| !u.is_ok()).count(),
            pesq_full: pesq(|u| u.pesq_full),
            erle_bb: erle(|u| u.erle_bb),
            dsnr_bb: mean_of(items.iter().map(|u| u.dsnr_bb)),
            pesq_bb: pesq(|u| u.pesq_bb),
            erle_echo_only: erle(|u| u.erle_echo_only),
            dsnr_noise_only: mean_of(items.iter().map(|u| u.dsnr_noise_only)),
            pesq_speech_only: pesq(|u| u.pesq_speech_only),
            capped_erle: items
                .iter()
                .flat_map(|u| [u.erle_bb, u.erle_echo_only])
                .flatten()
                .filter(|m| m.capped)
                .count(),
        }
    }
}

/// Evaluation output for one system configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: String,
    pub input_set: String,
    pub summary: CorpusSummary,
    pub utterances: Vec<UtteranceMetrics>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn new(mode: String, input_set: String, utterances: Vec<UtteranceMetrics>, warnings: Vec<String>) -> Self {
        Self {
            mode,
            input_set,
            summary: CorpusSummary::from_utterances(&utterances),
            utterances,
            warnings,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
