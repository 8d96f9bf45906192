//! Command-line front end for `lyapcert`.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use lyapcert::certificate::{shipped, table_to_string, CertificateDir};
use lyapcert::dynamics::{by_name, close_loop};
use lyapcert::lqr::{linearize, lqr_roa, solve_care, LqrRoaConfig};
use lyapcert::lyapunov::ErrorBound;
use lyapcert::network::{load_net, net_to_string};
use lyapcert::pipeline::{
    exit_code, manifest, replay_certificate, run_from_model, run_pipeline, Against, LqrSummary, PipelineConfig,
    ReplayOptions, ReplayReport,
};
use lyapcert::roa::{empirical_attraction, export_grid, largest_level, AttractionConfig, LevelConfig};
use lyapcert::sysid::{learn_dynamics, SysIdReport, TrainConfig};
use lyapcert::verifier::FalsifyConfig;
use nalgebra::{DMatrix, DVector};
use serde_json::json;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "lyapcert", version, about = "Learn and certify neural Lyapunov functions")]
struct Cli {
    /// Worker threads for sampling, verification and simulation.
    #[arg(long, global = true, env = "LYAPCERT_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the dynamics surrogate and measure its error bound.
    LearnDynamics(LearnDynamicsArgs),
    /// Learn V and the controller for a trained surrogate, then certify.
    LearnLyapunov(LearnLyapunovArgs),
    /// Falsify the Lyapunov conditions of a certificate.
    Verify(VerifyArgs),
    /// Solve the LQR problem at the origin and estimate its ellipse.
    Lqr(LqrArgs),
    /// Certified level set, area, attraction probes and plot grid.
    Roa(RoaArgs),
    /// The whole pipeline from a config file.
    Run(RunArgs),
    /// Re-check a certificate against the true dynamics with its own ε.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct LearnDynamicsArgs {
    #[arg(long)]
    system: String,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    eval_samples: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LearnLyapunovArgs {
    /// A `model.nnet`; its `sysid.json` is read from the same directory.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    system: String,
    /// Pipeline config; its dynamics section is ignored.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    max_rounds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CertSource {
    /// Certificate directory.
    #[arg(long, conflicts_with = "shipped")]
    cert: Option<PathBuf>,
    /// Use the certificate shipped for `--system`.
    #[arg(long)]
    shipped: bool,
}

impl CertSource {
    fn load(&self, system: &str) -> Result<CertificateDir> {
        if self.shipped {
            let c = shipped(system)?;
            return Ok(CertificateDir {
                v: c.v,
                controller: c.controller,
                model: None,
                table: Some(c.table),
            });
        }
        let dir = self.cert.as_ref().context("give --cert DIR or --shipped")?;
        CertificateDir::load(dir).with_context(|| format!("loading {}", dir.display()))
    }
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    source: CertSource,
    #[arg(long)]
    system: String,
    #[arg(long, default_value = "true")]
    against: String,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 0.01)]
    precision: f64,
    #[arg(long, default_value_t = FalsifyConfig::default().budget)]
    budget: u64,
    /// Unicycle forward speed.
    #[arg(long)]
    speed: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LqrArgs {
    #[arg(long)]
    system: String,
    /// Diagonal of Q: one value for every state, or a comma list.
    #[arg(long, default_value = "1", value_delimiter = ',')]
    q: Vec<f64>,
    #[arg(long, default_value = "1", value_delimiter = ',')]
    r: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RoaArgs {
    #[command(flatten)]
    source: CertSource,
    #[arg(long)]
    system: String,
    #[arg(long, default_value_t = 400)]
    grid: usize,
    #[arg(long, default_value_t = 1000)]
    probes: usize,
    /// Radius for the inclusion-chain check; defaults to the table's ε.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 1_000_000)]
    area_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Config file; without one the system's defaults are used.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    system: Option<String>,
    /// Write the materialized config and stop.
    #[arg(long)]
    print_config: bool,
    #[arg(long, required_unless_present = "print_config")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    source: CertSource,
    #[arg(long)]
    system: String,
    #[arg(long, default_value = "true")]
    against: String,
    #[arg(long)]
    speed: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
    let code = match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    std::process::exit(code);
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::LearnDynamics(a) => learn_dynamics_cmd(a),
        Command::LearnLyapunov(a) => learn_lyapunov_cmd(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Lqr(a) => lqr_cmd(a),
        Command::Roa(a) => roa_cmd(a),
        Command::Run(a) => run_cmd(a),
        Command::Replay(a) => replay_cmd(a),
    }
}

/// Writes `files` and a manifest into `dir`.
fn write_outputs(dir: &Path, config_hash: &str, files: &[(&str, String)]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, content) in files {
        std::fs::write(dir.join(name), content).with_context(|| format!("writing {name}"))?;
    }
    let list: Vec<(&str, &str)> = files.iter().map(|(n, c)| (*n, c.as_str())).collect();
    std::fs::write(dir.join("manifest.json"), manifest(config_hash, &list))?;
    Ok(())
}

fn hash_of(value: &impl serde::Serialize) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(serde_json::to_vec(value).expect("serializable")))
}

fn learn_dynamics_cmd(a: LearnDynamicsArgs) -> Result<i32> {
    let sys = by_name(&a.system)?;
    let mut cfg = TrainConfig::default();
    if let Some(v) = a.samples {
        cfg.samples = v;
    }
    if let Some(v) = a.eval_samples {
        cfg.eval_samples = v;
    }
    if let Some(v) = a.hidden {
        cfg.hidden = v;
    }
    if let Some(v) = a.epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let r = learn_dynamics(&sys, &cfg)?;
    let report = r.report(&a.system, &cfg);
    eprintln!(
        "alpha {:.4e}  sample gap {:.4e}  K_phi {:.4}  final mse {:.3e}",
        report.alpha, report.sample_gap, report.k_phi, report.final_mse
    );
    let json = serde_json::to_string_pretty(&report)?;
    write_outputs(
        &a.out,
        &hash_of(&cfg),
        &[("model.nnet", net_to_string(&r.model)), ("sysid.json", json)],
    )?;
    Ok(0)
}

fn learn_lyapunov_cmd(a: LearnLyapunovArgs) -> Result<i32> {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::from_toml(&std::fs::read_to_string(p)?)?,
        None => PipelineConfig::for_system(&a.system)?,
    };
    if cfg.system != a.system {
        bail!("config is for `{}`, not `{}`", cfg.system, a.system);
    }
    if let Some(v) = a.eps {
        cfg.eps = v;
    }
    if let Some(v) = a.beta {
        cfg.beta = v;
    }
    if let Some(v) = a.max_rounds {
        cfg.lyapunov.max_rounds = v;
    }
    if let Some(v) = a.seed {
        cfg.lyapunov.seed = v;
    }
    let model = load_net(&a.model)?;
    let sysid_path = a.model.with_file_name("sysid.json");
    let id: SysIdReport = serde_json::from_str(
        &std::fs::read_to_string(&sysid_path).with_context(|| format!("reading {}", sysid_path.display()))?,
    )?;
    let bound = ErrorBound {
        k_f: by_name(&a.system)?.jacobian_bound,
        k_phi: id.k_phi,
        sample_gap: id.sample_gap,
        alpha: id.alpha,
    };
    let report = run_from_model(&cfg, &model, &bound, Some(&a.out), &mut |m| eprintln!("{m}"))?;
    Ok(exit_code(&report))
}

fn replay_report(source: &CertSource, system: &str, against: &str, opts: &ReplayOptions) -> Result<ReplayReport> {
    let cert = source.load(system)?;
    Ok(replay_certificate(&cert, system, against.parse::<Against>()?, opts)?)
}

fn verdict_code(r: &ReplayReport) -> i32 {
    if r.check.verdict.is_unsat() {
        0
    } else {
        2
    }
}

fn verify_cmd(a: VerifyArgs) -> Result<i32> {
    let opts = ReplayOptions {
        eps: a.eps,
        beta: a.beta,
        falsify: FalsifyConfig {
            precision: a.precision,
            budget: a.budget,
            workers: None,
        },
        speed: a.speed,
    };
    let r = replay_report(&a.source, &a.system, &a.against, &opts)?;
    eprintln!("{:?} in {:.2}s", r.check.verdict, r.seconds);
    let json = serde_json::to_string_pretty(&r)?;
    write_outputs(&a.out, &hash_of(&opts), &[("verdict.json", json)])?;
    Ok(verdict_code(&r))
}

fn replay_cmd(a: ReplayArgs) -> Result<i32> {
    let opts = ReplayOptions {
        speed: a.speed,
        ..ReplayOptions::default()
    };
    let r = replay_report(&a.source, &a.system, &a.against, &opts)?;
    let json = serde_json::to_string_pretty(&r)?;
    println!("{json}");
    if let Some(out) = &a.out {
        write_outputs(out, &hash_of(&opts), &[("replay.json", json)])?;
    }
    Ok(verdict_code(&r))
}

fn lqr_cmd(a: LqrArgs) -> Result<i32> {
    let sys = by_name(&a.system)?;
    let widen = |v: &[f64], n: usize| -> Result<DMatrix<f64>> {
        let d = match v.len() {
            1 => vec![v[0]; n],
            k if k == n => v.to_vec(),
            k => bail!("expected 1 or {n} weights, got {k}"),
        };
        Ok(DMatrix::from_diagonal(&DVector::from_vec(d)))
    };
    let q = widen(&a.q, sys.state_dim)?;
    let r = if sys.input_dim == 0 {
        DMatrix::zeros(0, 0)
    } else {
        widen(&a.r, sys.input_dim)?
    };
    let sol = solve_care(&linearize(&sys)?, &q, &r)?;
    let roa = lqr_roa(&sol, &sys, &LqrRoaConfig::for_system(&a.system));
    let mut ellipse = String::from("x1,x2\n");
    for p in &roa.ellipse {
        writeln!(ellipse, "{},{}", p[0], p[1])?;
    }
    let report = json!({
        "system": a.system,
        "q": a.q,
        "r": a.r,
        "solution": LqrSummary::new(&sol),
        "roa": {
            "c_star": roa.c_star,
            "c_limit": roa.c_limit,
            "domain_limited": roa.domain_limited,
            "area": roa.area,
        },
    });
    eprintln!("K = {}  c* = {:.5}  area {:.4}", sol.k, roa.c_star, roa.area);
    write_outputs(
        &a.out,
        &hash_of(&report["q"]),
        &[
            ("lqr.json", serde_json::to_string_pretty(&report)?),
            ("ellipse.csv", ellipse),
        ],
    )?;
    Ok(0)
}

fn roa_cmd(a: RoaArgs) -> Result<i32> {
    let cert = a.source.load(&a.system)?;
    let sys = by_name(&a.system)?;
    let eps = a.eps.or(cert.table.map(|t| t.eps)).unwrap_or(0.0);
    let level = largest_level(
        &cert.v,
        &sys.domain,
        &LevelConfig {
            eps,
            area_samples: a.area_samples,
            seed: a.seed,
            ..LevelConfig::default()
        },
    );
    eprintln!(
        "c* = {:.6}  area {:.4} ± {:.4}  c1 {:.4} c2 {:.4}",
        level.c_star, level.area, level.area_stderr, level.c1, level.c2
    );
    let field = close_loop(sys.clone(), cert.controller.clone())?;
    let mut files = vec![("level.json", serde_json::to_string_pretty(&level)?)];
    if a.probes > 0 && !level.degenerate {
        let mut acfg = AttractionConfig::for_system(&a.system);
        acfg.probes = a.probes;
        acfg.seed = a.seed;
        acfg.eps = eps;
        let att = empirical_attraction(&field, &cert.v, &sys.domain, &level, &acfg)?;
        eprintln!(
            "converged {}/{}  max V rise {:.2e} ({:.2e} outside eps)",
            att.converged, att.probes, att.max_increase, att.max_increase_outside
        );
        let mut rows: Vec<_> = att.outcomes.iter().collect();
        rows.sort_by(|p, q| p.x0.partial_cmp(&q.x0).unwrap_or(std::cmp::Ordering::Equal));
        let mut csv = String::from("x1,x2,final_norm,converged,max_increase\n");
        for o in rows {
            writeln!(
                csv,
                "{},{},{},{},{}",
                o.x0[0], o.x0[1], o.final_norm, o.converged, o.max_increase
            )?;
        }
        files.push(("probes.csv", csv));
        files.push((
            "attraction.json",
            serde_json::to_string_pretty(&lyapcert::pipeline::AttractionSummary::from(&att))?,
        ));
    }
    if a.grid > 0 {
        files.push(("grid.csv", export_grid(&cert.v, &field, &sys.domain, a.grid)?));
    }
    if let Some(t) = cert.table {
        files.push(("table.toml", table_to_string(&t)));
    }
    write_outputs(&a.out, &hash_of(&(a.grid, a.probes, eps, a.seed)), &files)?;
    Ok(if level.degenerate { 2 } else { 0 })
}

fn run_cmd(a: RunArgs) -> Result<i32> {
    let cfg = match (&a.config, &a.system) {
        (Some(p), _) => {
            PipelineConfig::from_toml(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?
        }
        (None, Some(s)) => PipelineConfig::for_system(s)?,
        (None, None) => bail!("give --config or --system"),
    };
    if a.print_config {
        print!("{}", cfg.to_toml());
        return Ok(0);
    }
    let out = a.out.context("--out is required")?;
    let report = run_pipeline(&cfg, Some(&out), &mut |m| eprintln!("{m}"))?;
    eprintln!(
        "{}: certified {}  rounds {}  beta {:.4e}  M {:.4}",
        report.system, report.certified, report.rounds, report.beta, report.m
    );
    Ok(exit_code(&report))
}
