//! Configuration and the command implementations behind the `histostack`
//! binary. Each command returns an [`Outcome`]; warnings map to exit code 2.

mod commands;
mod config;

pub use commands::{
    cmd_evaluate, cmd_map_template, cmd_phantom, cmd_reconstruct, cmd_segment_import, EvaluationReport, Outcome,
    ReconSummary, StackOutput, TemplateReport, SUMMARY_FILE,
};
pub use config::{Paths, PipelineConfig};
