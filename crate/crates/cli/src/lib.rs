//! Pipeline runner for `ghm-core`: configuration, stage orchestration,
//! report files and strip figures.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod figure;
pub mod pipeline;

pub use config::RunConfig;
pub use figure::{emit_strip_polygons, StripPolygons};
pub use pipeline::{cache_roundtrip, run_pipeline, PipelineOutput, RunManifest, Stage, Verdict};

use ghm_core::GhmError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: GhmError,
        manifest: Box<RunManifest>,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Stage { .. } => 3,
        }
    }
}
