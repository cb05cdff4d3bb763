//! Campaign orchestration: configuration, the search loop, baselines,
//! artifacts, suites and the external-evaluator driver.

pub mod artifacts;
pub mod campaign;
pub mod config;
pub mod external;
pub mod modality;

pub use artifacts::{
    AggregateRow, Manifest, RunSummary, SuiteSummary, aggregate, generate_ground_truth,
    read_records_csv, run_single, run_suite, validation_for, write_run,
};
pub use campaign::{CampaignObserver, CampaignOutcome, NoObserver, derive_seed, run_campaign};
pub use config::{Algorithm, CampaignConfig, LocalSampler, ObjectiveConfig, PRESETS};
pub use external::run_external;
pub use modality::{ModalityHits, modalities_hit, report_modality_coverage};
