use std::path::Path;
use std::process::{Command, Output};

fn lyapcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lyapcert"))
        .args(args)
        .env("LYAPCERT_WORKERS", "1")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY: &str = r#"
system = "pendulum"
[dynamics]
hidden = 6
samples = 2000
eval_samples = 2000
max_epochs = 2
[lyapunov]
max_rounds = 0
[roa]
probes = 0
"#;

#[test]
fn replay_shipped_exit_codes() {
    let o = lyapcert(&["replay", "--shipped", "--system", "pendulum"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["check"]["verdict"]["verdict"], "unsat");
    assert_eq!(r["beta"], 0.0);

    let o = lyapcert(&["replay", "--shipped", "--system", "vanderpol"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn verify_directory_and_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let cert = dir.path().join("cert");
    lyapcert::certificate::export_shipped("unicycle", &cert).unwrap();
    let out = dir.path().join("out");
    let o = lyapcert(&[
        "verify",
        "--cert",
        path(&cert),
        "--system",
        "unicycle",
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(&out.join("verdict.json"))["check"]["verdict"]["verdict"], "unsat");
    assert!(out.join("manifest.json").exists());

    let text = std::fs::read_to_string(cert.join("v.nnet")).unwrap();
    let (head, tail) = text.split_at(text.len() / 2);
    let digit = tail.find(|c: char| c.is_ascii_digit()).unwrap();
    let mut tampered = tail.to_string();
    let d = tampered.as_bytes()[digit];
    tampered.replace_range(digit..digit + 1, if d == b'9' { "1" } else { "9" });
    std::fs::write(cert.join("v.nnet"), format!("{head}{tampered}")).unwrap();
    let o = lyapcert(&[
        "verify",
        "--cert",
        path(&cert),
        "--system",
        "unicycle",
        "--out",
        path(&out),
    ]);
    assert_ne!(code(&o), 0);
}

#[test]
fn missing_certificate_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = lyapcert(&["replay", "--cert", path(dir.path()), "--system", "pendulum"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("v.nnet"));
}

#[test]
fn lqr_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = lyapcert(&["lqr", "--system", "pendulum", "--out", path(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let l = json(&dir.path().join("lqr.json"));
    assert!(l["solution"]["residual"].as_f64().unwrap() < 1e-8);
    let csv = std::fs::read_to_string(dir.path().join("ellipse.csv")).unwrap();
    assert!(csv.starts_with("x1,x2\n"));
    assert!(csv.lines().count() > 10);
    assert!(dir.path().join("manifest.json").exists());

    let o = lyapcert(&["lqr", "--system", "pendulum", "--q", "1,2,3", "--out", path(dir.path())]);
    assert_eq!(code(&o), 1);
}

#[test]
fn roa_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = lyapcert(&[
        "roa",
        "--shipped",
        "--system",
        "unicycle",
        "--grid",
        "20",
        "--probes",
        "10",
        "--area-samples",
        "1000",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let grid = std::fs::read_to_string(dir.path().join("grid.csv")).unwrap();
    assert_eq!(grid.lines().next(), Some("x1,x2,V,lie"));
    assert_eq!(grid.lines().count(), 401);
    let level = json(&dir.path().join("level.json"));
    assert!(level["c_star"].as_f64().unwrap() > 0.0);
    assert_eq!(json(&dir.path().join("attraction.json"))["probes"], 10);
}

#[test]
fn run_writes_a_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let out = dir.path().join("out");
    let o = lyapcert(&["run", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out.join("report.json"));
    assert_eq!(r["certified"], false);
    assert_eq!(r["rounds"], 0);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["config_hash"], r["config_hash"]);

    std::fs::write(&cfg, format!("{TINY}\n[extra]\nkey = 1\n")).unwrap();
    let o = lyapcert(&["run", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn print_config_round_trips() {
    let o = lyapcert(&["run", "--system", "unicycle", "--print-config"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let cfg = lyapcert::pipeline::PipelineConfig::from_toml(&text).unwrap();
    assert_eq!(cfg.system, "unicycle");
}

#[test]
fn staged_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let dyn_dir = dir.path().join("dyn");
    let o = lyapcert(&[
        "learn-dynamics",
        "--system",
        "vanderpol",
        "--samples",
        "2000",
        "--eval-samples",
        "2000",
        "--hidden",
        "6",
        "--epochs",
        "2",
        "--out",
        path(&dyn_dir),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(json(&dyn_dir.join("sysid.json"))["alpha"].as_f64().unwrap() > 0.0);

    let out = dir.path().join("lyap");
    let o = lyapcert(&[
        "learn-lyapunov",
        "--model",
        path(&dyn_dir.join("model.nnet")),
        "--system",
        "vanderpol",
        "--max-rounds",
        "0",
        "--out",
        path(&out),
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("v.nnet").exists() && out.join("report.json").exists());
}
