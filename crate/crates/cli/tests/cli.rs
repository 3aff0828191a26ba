use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use impulse_core::control::ControlledRun;
use impulse_core::diffusion::SamplePath;

fn impulse(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_impulse"))
        .args(args)
        .current_dir(dir)
        .env("IMPULSE_THREADS", "1")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout_kv(out: &Output) -> HashMap<String, String> {
    String::from_utf8_lossy(&out.stdout)
        .split_whitespace()
        .filter_map(|tok| tok.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect()
}

fn num(kv: &HashMap<String, String>, key: &str) -> f64 {
    kv.get(key).unwrap_or_else(|| panic!("missing {key} in {kv:?}")).parse().unwrap()
}

fn stderr_line(out: &Output) -> String {
    let s = String::from_utf8_lossy(&out.stderr);
    s.lines().find(|l| l.starts_with("error ")).unwrap_or_default().to_string()
}

const OU_TOML: &str = r#"
name = "ou_file"
drift = "linear"
drift_params = [0.0, -1.0]
sigma = "constant"
sigma_params = [1.0]
class_C = 1.0
class_A = 1.0
class_gamma = 0.5
sigma_lower = 1.0
sigma_upper = 1.0
reward = "capped_linear"
reward_params = [0.5]
y0 = 0.0
y1 = 0.5
beta = 1.5
"#;

#[test]
fn solve_prints_phi_and_writes_profile() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ou.toml"), OU_TOML).unwrap();
    let out = impulse(&["solve", "--problem", "ou.toml"], dir.path());
    assert!(out.status.success(), "{}", stderr_line(&out));
    let first = String::from_utf8_lossy(&out.stdout).lines().next().unwrap().to_string();
    assert!(first.starts_with("phi=") && first.contains(" y_star="), "{first}");
    let kv = stdout_kv(&out);
    assert!((num(&kv, "phi") - 0.12440606638055994).abs() < 1e-9);
    assert!((num(&kv, "y_star") - 0.9540117416829745).abs() < 1e-12);

    let csv = fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    let mut lines = csv.lines();
    let echo = lines.next().unwrap();
    assert!(echo.starts_with("# {") && echo.contains("ou_file"));
    assert_eq!(lines.next().unwrap(), "y,g,xi,g_over_xi");
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 512);
    let best = rows.iter().map(|r| r[3]).fold(f64::MIN, f64::max);
    assert!((best - num(&kv, "phi")).abs() < 1e-12);
}

#[test]
fn control_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = impulse(
            &["control", "--problem", "catalog:ou", "--T", "10000", "--seed", "7", "--output", name],
            dir.path(),
        );
        assert!(out.status.success(), "{}", stderr_line(&out));
        (String::from_utf8_lossy(&out.stdout).replace(name, ""), fs::read(dir.path().join(name)).unwrap())
    };
    let (s1, j1) = run("a.json");
    let (s2, j2) = run("b.json");
    assert_eq!(s1, s2);
    assert_eq!(j1, j2);

    let parsed: ControlledRun = serde_json::from_slice(&j1).unwrap();
    parsed.check_admissible().unwrap();
    parsed.check_threshold_freezing().unwrap();
    assert_eq!(parsed.run_meta.seed, 7);
    assert_eq!(parsed.run_meta.horizon, 10000.0);
}

#[test]
fn estimate_recovers_threshold_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let grid = "64";
    let out = impulse(&["solve", "--problem", "catalog:ou", "--grid-n", grid], dir.path());
    let kv = stdout_kv(&out);
    let y_star = num(&kv, "y_star");
    let cell = 1.0 / 63.0;

    let out = impulse(
        &["simulate", "--problem", "catalog:ou", "--T", "20000", "--dt", "0.002", "--seed", "11", "--output", "p.bin"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr_line(&out));
    assert!(dir.path().join("p.bin.meta.toml").exists());
    let out = impulse(&["estimate", "--path", "p.bin", "--problem", "catalog:ou", "--grid-n", grid], dir.path());
    assert!(out.status.success(), "{}", stderr_line(&out));
    let kv = stdout_kv(&out);
    let y_hat = num(&kv, "y_hat");
    assert!((y_hat - y_star).abs() <= cell + 1e-12, "y_hat {y_hat} y* {y_star}");
    assert!(num(&kv, "regret") >= -1e-9);

    let csv = fs::read_to_string(dir.path().join("estimate.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# "));
    assert_eq!(lines.next().unwrap(), "x,rho_hat,xi_hat,g_over_xi");
    assert_eq!(lines.count(), 64);
}

#[test]
fn simulate_outputs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["p.bin", "p.csv"] {
        let out = impulse(
            &["simulate", "--problem", "catalog:tanh", "--T", "5", "--dt", "0.01", "--seed", "3", "--output", name],
            dir.path(),
        );
        assert!(out.status.success(), "{}", stderr_line(&out));
    }
    let bin = SamplePath::load(&dir.path().join("p.bin")).unwrap();
    let csv = SamplePath::load(&dir.path().join("p.csv")).unwrap();
    assert_eq!(bin.len(), 501);
    assert_eq!(bin.dt, csv.dt);
    assert_eq!(bin.values, csv.values);
}

#[test]
fn bench_writes_report_with_echoed_plan() {
    let dir = tempfile::tempdir().unwrap();
    let plan = r#"
problem = "catalog:ou"
pipeline = "oracle_check"
horizons = [200.0, 400.0, 800.0]
replications = 3
master_seed = 5
output = "rep"
"#;
    fs::write(dir.path().join("plan.toml"), plan).unwrap();
    let out = impulse(&["bench", "--plan", "plan.toml"], dir.path());
    assert!(out.status.success(), "{}", stderr_line(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("T=")).count(), 3);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("rep.json")).unwrap()).unwrap();
    assert_eq!(json["plan"]["master_seed"], 5);
    assert!(dir.path().join("rep.csv").exists());
}

#[test]
fn exit_codes_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let help = impulse(&["--help"], dir.path());
    assert_eq!(help.status.code(), Some(0));

    let usage = impulse(&["solve"], dir.path());
    assert_eq!(usage.status.code(), Some(1));
    assert!(stderr_line(&usage).starts_with("error code=1 kind=usage"));

    let neg = impulse(&["simulate", "--problem", "catalog:ou", "--T", "-4", "--output", "x.bin"], dir.path());
    assert_eq!(neg.status.code(), Some(1));

    fs::write(dir.path().join("bad.toml"), format!("{OU_TOML}\nsurprise = 1\n")).unwrap();
    let unknown = impulse(&["solve", "--problem", "bad.toml"], dir.path());
    assert_eq!(unknown.status.code(), Some(1));

    let invalid = OU_TOML.replace("beta = 1.5", "beta = 0.2");
    fs::write(dir.path().join("inv.toml"), invalid).unwrap();
    let v = impulse(&["solve", "--problem", "inv.toml"], dir.path());
    assert_eq!(v.status.code(), Some(2));
    let line = stderr_line(&v);
    assert!(line.starts_with("error code=2 "), "{line}");
    assert_eq!(String::from_utf8_lossy(&v.stderr).lines().count(), 1);

    let off = impulse(
        &["control", "--problem", "catalog:ou", "--T", "10", "--strategy", "threshold", "--y-cut", "4"],
        dir.path(),
    );
    assert_eq!(off.status.code(), Some(2));

    // constant outward drift is not recurrent
    let transient = OU_TOML.replace("drift_params = [0.0, -1.0]", "drift_params = [5.0, 0.0]");
    fs::write(dir.path().join("tr.toml"), transient).unwrap();
    let r = impulse(&["control", "--problem", "tr.toml", "--T", "10"], dir.path());
    assert_eq!(r.status.code(), Some(2));
}
