use super::report::{REPORT_SCHEMA, TOOL_VERSION};
use crate::certificate::{CertificateDir, TableRow};
use crate::dynamics::{by_name, close_loop, unicycle_with_speed, VectorField};
use crate::error::{Error, Result};
use crate::lyapunov::{lyapunov_query, LearnedLoop};
use crate::verifier::{FalsifyConfig, FalsifyReport};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

/// Which vector field a certificate is checked against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Against {
    /// The stored model `φ` with the certificate's controller.
    Learned,
    /// The benchmark's own equations.
    True,
}

impl FromStr for Against {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(Against::Learned),
            "true" => Ok(Against::True),
            _ => Err(Error::Config(format!("expected `learned` or `true`, got `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayOptions {
    /// Defaults to the certificate table's `ε`.
    pub eps: Option<f64>,
    /// Defaults to 0 against the true dynamics and the table's `β` against
    /// the model.
    pub beta: Option<f64>,
    pub falsify: FalsifyConfig,
    /// Unicycle forward speed.
    pub speed: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReplayReport {
    pub schema: u32,
    pub tool_version: String,
    pub system: String,
    pub against: Against,
    pub eps: f64,
    pub beta: f64,
    pub table: Option<TableRow>,
    /// `K_f δ + α + K_φ δ < β/M` from the certificate table.
    pub beta_chain: Option<bool>,
    pub origin_residual: f64,
    pub check: FalsifyReport,
    pub seconds: f64,
}

pub fn replay(dir: &Path, system: &str, against: Against, opts: &ReplayOptions) -> Result<ReplayReport> {
    let cert = CertificateDir::load(dir).map_err(|e| e.in_stage("load certificate"))?;
    replay_certificate(&cert, system, against, opts)
}

/// Runs the falsifier on a loaded certificate.
pub fn replay_certificate(
    cert: &CertificateDir,
    system: &str,
    against: Against,
    opts: &ReplayOptions,
) -> Result<ReplayReport> {
    let start = Instant::now();
    let sys = match (system, opts.speed) {
        ("unicycle", Some(v)) => unicycle_with_speed(v),
        (_, Some(_)) => return Err(Error::Config("only the unicycle has a speed".into())),
        _ => by_name(system)?,
    };
    let eps = opts
        .eps
        .or(cert.table.map(|t| t.eps))
        .ok_or_else(|| Error::Config("no ε given and the certificate has no table".into()))?;
    let beta = match (opts.beta, against) {
        (Some(b), _) => b,
        (None, Against::True) => 0.0,
        (None, Against::Learned) => cert
            .table
            .map(|t| t.beta)
            .ok_or_else(|| Error::Config("no β given and the certificate has no table".into()))?,
    };
    let (field, residual): (Box<dyn VectorField>, f64) = match against {
        Against::True => {
            let f = close_loop(sys.clone(), cert.controller.clone())?;
            let r = f.origin_residual();
            (Box::new(f), r)
        }
        Against::Learned => {
            let model = cert
                .model
                .clone()
                .ok_or_else(|| Error::Config("the certificate has no model.nnet".into()))?;
            let f = LearnedLoop::new(model, cert.controller.clone(), sys.equilibrium_shift.clone())?;
            let r = f
                .eval(&vec![0.0; sys.state_dim])?
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            (Box::new(f), r)
        }
    };
    let query = lyapunov_query(&cert.v, field.as_ref(), &sys.domain, eps, beta)?;
    let check = query.falsify(&opts.falsify);
    Ok(ReplayReport {
        schema: REPORT_SCHEMA,
        tool_version: TOOL_VERSION.into(),
        system: sys.name.clone(),
        against,
        eps,
        beta,
        table: cert.table,
        beta_chain: cert.table.map(|t| t.chain_holds()),
        origin_residual: residual,
        check,
        seconds: start.elapsed().as_secs_f64(),
    })
}
