//! Synthetic echo scenarios: image-method room impulse responses,
//! loudspeaker nonlinearity, SER/SNR-controlled mixing and dataset rendering.

mod dataset;
mod mixer;
mod nonlinearity;
mod rir;
pub mod sources;

pub use dataset::{
    build_dataset, load_meta, load_mixture, parse_manifest, render_entry, write_mixture,
    DatasetSummary, Level, ManifestEntry, MixtureMeta, RoomGeometry, SourceSpec, SynthKind,
    COMPONENT_FILES, META_FILE, SER_CHOICES_DB, SNR_CHOICES_DB,
};
pub use mixer::{
    active_mask, convolve_truncated, level_ratio_db, mix_scenario, seconds_to_samples, Condition,
    EchoScenario, MixtureBundle, ACTIVITY_FRAME, ACTIVITY_RANGE_DB, PEAK_LIMIT,
};
pub use nonlinearity::{loudspeaker_nonlinearity, NonlinearityParams};
pub use rir::{
    image_method_rir, image_method_rir_with_absorption, RoomSpec, SINC_HALF_WIDTH, SPEED_OF_SOUND,
};
