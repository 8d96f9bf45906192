use crate::lqr::LqrSolution;
use crate::roa::{AttractionReport, LevelSetResult};
use crate::verifier::FalsifyReport;
use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub dynamics_s: f64,
    pub lyapunov_s: f64,
    pub replay_s: f64,
    pub roa_s: f64,
    pub total_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LqrSummary {
    pub k: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub closed_loop_eigenvalues: Vec<(f64, f64)>,
    pub residual: f64,
}

impl LqrSummary {
    pub fn new(sol: &LqrSolution) -> Self {
        let rows = |m: &nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> {
            m.row_iter().map(|r| r.iter().copied().collect()).collect()
        };
        LqrSummary {
            k: rows(&sol.k),
            p: rows(&sol.p),
            closed_loop_eigenvalues: sol.closed_loop_eigenvalues.clone(),
            residual: sol.residual,
        }
    }
}

/// Attraction statistics without the per-probe records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttractionSummary {
    pub probes: usize,
    pub converged: usize,
    pub fraction: f64,
    pub monotone: bool,
    pub max_increase: f64,
    pub max_increase_outside: f64,
    pub integration_failures: usize,
}

impl From<&AttractionReport> for AttractionSummary {
    fn from(a: &AttractionReport) -> Self {
        AttractionSummary {
            probes: a.probes,
            converged: a.converged,
            fraction: a.fraction,
            monotone: a.monotone,
            max_increase: a.max_increase,
            max_increase_outside: a.max_increase_outside,
            integration_failures: a.integration_failures,
        }
    }
}

/// Outcome of one pipeline run, in the layout of the published parameter
/// tables plus verdicts and provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub schema: u32,
    pub tool_version: String,
    pub system: String,
    pub config_hash: String,
    pub k_f: f64,
    pub k_phi: f64,
    pub sample_gap: f64,
    pub alpha: f64,
    /// `K_f δ + α + K_φ δ`.
    pub generalization_bound: f64,
    /// Bound on `‖∂V/∂x‖₂`.
    pub m: f64,
    pub m_certified: bool,
    pub beta: f64,
    pub eps: f64,
    pub precision: f64,
    /// `β > M (K_f δ + α + K_φ δ)`.
    pub beta_chain: bool,
    pub certified: bool,
    pub rounds: usize,
    pub learned_check: Option<FalsifyReport>,
    pub true_check: Option<FalsifyReport>,
    pub lqr: Option<LqrSummary>,
    pub level: Option<LevelSetResult>,
    pub attraction: Option<AttractionSummary>,
    /// Set when a stage failed; the fields after it are then absent.
    pub error: Option<String>,
    pub timings: Timings,
}

impl CertificateReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }
}
