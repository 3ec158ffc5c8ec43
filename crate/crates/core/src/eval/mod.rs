//! ERLE and ΔSNR, black-box component separation and the PESQ adapter.

mod blackbox;
mod metrics;
mod pesq;
mod report;

pub use blackbox::{
    apply_postfilter, blackbox_separate, postfilter_gain_from_run, replay_output, ComponentSet,
    OperatorTrace, DEFAULT_GAIN_CAP, GAIN_FLOOR,
};
pub use metrics::{
    delta_snr, erle, noise_attenuation, MetricDb, ERLE_ACTIVITY_DB, METRIC_CAP_DB,
};
pub use pesq::{pesq_adapter, parse_mos, PesqScore, PESQ_ENV};
pub use report::{mean_of, CorpusSummary, MetricsReport, UtteranceMetrics};
