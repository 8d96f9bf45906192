//! End-to-end runs, reports and certificate replay.

mod config;
mod replay;
mod report;
mod run;

pub use config::{LqrStage, LyapunovStage, PipelineConfig, RoaStage};
pub use replay::{replay, replay_certificate, Against, ReplayOptions, ReplayReport};
pub use report::{AttractionSummary, CertificateReport, LqrSummary, Timings, REPORT_SCHEMA, TOOL_VERSION};
pub use run::{manifest, run_from_model, run_pipeline};

/// Process exit code for a finished run.
pub fn exit_code(report: &CertificateReport) -> i32 {
    if report.certified {
        0
    } else {
        2
    }
}
