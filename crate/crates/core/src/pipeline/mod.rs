//! End-to-end orchestration: configuration, reusable stages and the full
//! run with its manifest.

mod config;
mod run;
pub mod stages;

pub use config::{
    ExplainConfig, ImputeConfig, InputConfig, InputFormat, ModelChoice, ModelConfig, PipelineConfig, SelectConfig,
};
pub use run::{
    rows_digest, run_pipeline, sha256_hex, LeakageCheck, ModelSummary, OutputFile, RunManifest, StageRecord,
    MANIFEST_FILE,
};
