use super::config::PipelineConfig;
use super::report::{AttractionSummary, CertificateReport, LqrSummary, Timings, REPORT_SCHEMA, TOOL_VERSION};
use crate::certificate::{table_to_string, TableRow};
use crate::dynamics::{by_name, close_loop};
use crate::error::Result;
use crate::lqr::{linearize, solve_care};
use crate::lyapunov::{learn_lyapunov_with, lyapunov_query, ErrorBound, LyapResult, RoundInfo};
use crate::network::{controller_to_string, net_to_string, OneHiddenNet};
use crate::roa::{empirical_attraction, export_grid, largest_level, AttractionReport};
use crate::sysid::learn_dynamics;
use crate::verifier::{FalsifyConfig, Verdict};
use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

/// Files produced by a run, written together at the end.
#[derive(Default)]
struct Artifacts {
    files: Vec<(String, String)>,
}

impl Artifacts {
    fn add(&mut self, name: &str, content: String) {
        self.files.push((name.into(), content));
    }

    fn write(&self, dir: &Path, report: &CertificateReport) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut all: Vec<(&str, &str)> = self.files.iter().map(|(n, c)| (n.as_str(), c.as_str())).collect();
        let json = report.to_json();
        all.push(("report.json", &json));
        for (name, content) in &all {
            std::fs::write(dir.join(name), content)?;
        }
        std::fs::write(dir.join("manifest.json"), manifest(&report.config_hash, &all))?;
        Ok(())
    }
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    path: &'a str,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool_version: &'a str,
    config_hash: &'a str,
    files: Vec<ManifestEntry<'a>>,
}

/// JSON list of files with their sizes and SHA-256 digests, sorted by name.
pub fn manifest(config_hash: &str, files: &[(&str, &str)]) -> String {
    let mut entries: Vec<ManifestEntry<'_>> = files
        .iter()
        .map(|(path, content)| ManifestEntry {
            path,
            bytes: content.len(),
            sha256: hex::encode(Sha256::digest(content.as_bytes())),
        })
        .collect();
    entries.sort_by(|a, b| a.path.cmp(b.path));
    serde_json::to_string_pretty(&Manifest {
        tool_version: TOOL_VERSION,
        config_hash,
        files: entries,
    })
    .expect("manifests always serialize")
}

fn staged<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(stage))
}

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(v))
}

fn blank_report(cfg: &PipelineConfig, k_f: f64) -> CertificateReport {
    CertificateReport {
        schema: REPORT_SCHEMA,
        tool_version: TOOL_VERSION.into(),
        system: cfg.system.clone(),
        config_hash: cfg.hash(),
        k_f,
        k_phi: f64::NAN,
        sample_gap: f64::NAN,
        alpha: f64::NAN,
        generalization_bound: f64::NAN,
        m: f64::NAN,
        m_certified: false,
        beta: cfg.beta,
        eps: cfg.eps,
        precision: cfg.precision,
        beta_chain: false,
        certified: false,
        rounds: 0,
        learned_check: None,
        true_check: None,
        lqr: None,
        level: None,
        attraction: None,
        error: None,
        timings: Timings::default(),
    }
}

/// Runs every stage for `cfg`: identification, LQR initialization, the
/// counterexample-guided Lyapunov loop, and on success the replay against
/// the true dynamics and the level-set analysis. Artifacts go to `out` when
/// given, including a partial report when a stage fails.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    out: Option<&Path>,
    progress: &mut dyn FnMut(&str),
) -> Result<CertificateReport> {
    let start = Instant::now();
    cfg.validate()?;
    let sys = by_name(&cfg.system)?;
    let mut report = blank_report(cfg, sys.jacobian_bound);
    let mut artifacts = Artifacts::default();
    artifacts.add("config.toml", cfg.to_toml());
    let result = identify(cfg, &sys, &mut report, &mut artifacts, progress)
        .and_then(|(model, bound)| stages(cfg, &sys, &model, &bound, &mut report, &mut artifacts, progress));
    finish(report, artifacts, result, start, out)
}

/// The stages after identification, for a model `φ` trained elsewhere with
/// error-bound quantities `bound`.
pub fn run_from_model(
    cfg: &PipelineConfig,
    model: &OneHiddenNet,
    bound: &ErrorBound,
    out: Option<&Path>,
    progress: &mut dyn FnMut(&str),
) -> Result<CertificateReport> {
    let start = Instant::now();
    cfg.validate()?;
    let sys = by_name(&cfg.system)?;
    let mut report = blank_report(cfg, bound.k_f);
    report.k_phi = bound.k_phi;
    report.sample_gap = bound.sample_gap;
    report.alpha = bound.alpha;
    report.generalization_bound = bound.value();
    let mut artifacts = Artifacts::default();
    artifacts.add("config.toml", cfg.to_toml());
    artifacts.add("model.nnet", net_to_string(model));
    let result = stages(cfg, &sys, model, bound, &mut report, &mut artifacts, progress);
    finish(report, artifacts, result, start, out)
}

fn finish(
    mut report: CertificateReport,
    artifacts: Artifacts,
    result: Result<()>,
    start: Instant,
    out: Option<&Path>,
) -> Result<CertificateReport> {
    report.timings.total_s = start.elapsed().as_secs_f64();
    if let Err(e) = &result {
        report.error = Some(e.to_string());
    }
    if let Some(dir) = out {
        artifacts.write(dir, &report)?;
    }
    result.map(|()| report)
}

fn identify(
    cfg: &PipelineConfig,
    sys: &crate::dynamics::ControlSystem,
    report: &mut CertificateReport,
    artifacts: &mut Artifacts,
    progress: &mut dyn FnMut(&str),
) -> Result<(OneHiddenNet, ErrorBound)> {
    progress("learning dynamics");
    let t = Instant::now();
    let id = staged("learn-dynamics", learn_dynamics(sys, &cfg.dynamics))?;
    report.timings.dynamics_s = t.elapsed().as_secs_f64();
    report.k_phi = id.k_phi;
    report.sample_gap = id.sample_gap;
    report.alpha = id.alpha;
    let bound = ErrorBound {
        k_f: sys.jacobian_bound,
        k_phi: id.k_phi,
        sample_gap: id.sample_gap,
        alpha: id.alpha,
    };
    report.generalization_bound = bound.value();
    artifacts.add("model.nnet", net_to_string(&id.model));
    artifacts.add(
        "sysid.json",
        serde_json::to_string_pretty(&id.report(&cfg.system, &cfg.dynamics))?,
    );
    progress(&format!(
        "alpha {:.3e}, sample gap {:.3e}, K_phi {:.4}, bound {:.4e}",
        id.alpha, id.sample_gap, id.k_phi, report.generalization_bound
    ));
    Ok((id.model, bound))
}

fn stages(
    cfg: &PipelineConfig,
    sys: &crate::dynamics::ControlSystem,
    model: &OneHiddenNet,
    bound: &ErrorBound,
    report: &mut CertificateReport,
    artifacts: &mut Artifacts,
    progress: &mut dyn FnMut(&str),
) -> Result<()> {
    let k_init = if sys.input_dim > 0 {
        let lin = staged("lqr", linearize(sys))?;
        let sol = staged("lqr", solve_care(&lin, &diag(&cfg.lqr.q), &diag(&cfg.lqr.r)))?;
        report.lqr = Some(LqrSummary::new(&sol));
        Some(sol.k)
    } else {
        None
    };

    progress("learning Lyapunov function");
    let t = Instant::now();
    let mut rounds_csv = String::from("round,beta,verdict,new_counterexamples\n");
    let mut observer = |info: &RoundInfo<'_>| {
        let verdict = match info.verdict {
            Verdict::Unsat { .. } => "unsat",
            Verdict::DeltaSat { .. } => "delta_sat",
            Verdict::Unknown { .. } => "unknown",
        };
        writeln!(
            rounds_csv,
            "{},{},{},{}",
            info.round,
            info.beta,
            verdict,
            info.new_counterexamples.len()
        )
        .expect("writing to a String");
        progress(&format!("round {}: beta {:.4e}, {verdict}", info.round, info.beta));
    };
    let lr: LyapResult = staged(
        "learn-lyapunov",
        learn_lyapunov_with(model, sys, bound, k_init.as_ref(), &cfg.learn_config(), &mut observer),
    )?;
    report.timings.lyapunov_s = t.elapsed().as_secs_f64();
    artifacts.add("rounds.csv", rounds_csv);
    let mut risk_csv = String::from("epoch,risk\n");
    for (i, r) in lr.risk_history.iter().enumerate() {
        writeln!(risk_csv, "{i},{r}").expect("writing to a String");
    }
    artifacts.add("risk.csv", risk_csv);
    artifacts.add("v.nnet", net_to_string(&lr.v));
    if let Some(c) = &lr.controller {
        artifacts.add("controller.ctl", controller_to_string(c));
    }
    report.m = lr.m;
    report.m_certified = lr.m_bound.is_some();
    report.beta = lr.beta;
    report.rounds = lr.rounds;
    report.learned_check = lr.last_check.clone();
    report.beta_chain = report.m_certified && lr.beta > lr.m * report.generalization_bound;
    artifacts.add(
        "table.toml",
        table_to_string(&TableRow {
            k_f: bound.k_f,
            k_phi: bound.k_phi,
            sample_gap: bound.sample_gap,
            alpha: bound.alpha,
            grad_bound: lr.m,
            beta: lr.beta,
            eps: cfg.eps,
        }),
    );
    if !lr.certified {
        progress("not certified");
        return Ok(());
    }

    progress("replaying against the true dynamics");
    let t = Instant::now();
    let field = staged("replay", close_loop(sys.clone(), lr.controller.clone()))?;
    let query = staged("replay", lyapunov_query(&lr.v, &field, &sys.domain, cfg.eps, 0.0))?;
    let check = query.falsify(&FalsifyConfig {
        precision: cfg.precision,
        budget: cfg.lyapunov.falsify_budget,
        workers: None,
    });
    let true_ok = check.verdict.is_unsat();
    report.true_check = Some(check);
    report.timings.replay_s = t.elapsed().as_secs_f64();
    report.certified = report.beta_chain && true_ok;

    progress("extracting the region of attraction");
    let t = Instant::now();
    let level = largest_level(&lr.v, &sys.domain, &cfg.level_config());
    if !level.degenerate && cfg.roa.probes > 0 {
        let a: AttractionReport = staged(
            "roa",
            empirical_attraction(&field, &lr.v, &sys.domain, &level, &cfg.attraction_config()),
        )?;
        let mut probes = String::from("x1,x2,final_norm,converged,max_increase\n");
        let mut rows: Vec<_> = a.outcomes.iter().collect();
        rows.sort_by(|p, q| p.x0.partial_cmp(&q.x0).unwrap_or(std::cmp::Ordering::Equal));
        for o in rows {
            let coords: Vec<String> = o.x0.iter().map(|v| v.to_string()).collect();
            writeln!(
                probes,
                "{},{},{},{}",
                coords.join(","),
                o.final_norm,
                o.converged,
                o.max_increase
            )
            .expect("writing to a String");
        }
        if sys.state_dim == 2 {
            artifacts.add("probes.csv", probes);
        }
        report.attraction = Some(AttractionSummary::from(&a));
    }
    if sys.state_dim == 2 {
        artifacts.add("grid.csv", staged("roa", export_grid(&lr.v, &field, &sys.domain, 200))?);
    }
    report.level = Some(level);
    report.timings.roa_s = t.elapsed().as_secs_f64();
    Ok(())
}
