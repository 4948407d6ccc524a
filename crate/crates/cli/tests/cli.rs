use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn agesirs(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agesirs"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn r0_with_table3_preset() {
    let dir = tempfile::tempdir().unwrap();
    let o = agesirs(&["r0", "--preset", "table3"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("r0.csv")).unwrap();
    let row = csv.lines().find(|l| l.starts_with("with-control,")).unwrap();
    let r0: f64 = row.split(',').nth(4).unwrap().parse().unwrap();
    assert!((r0 - 0.98).abs() <= 0.01, "r0 = {r0}");
    let summary = fs::read_to_string(dir.path().join("r0_summary.json")).unwrap();
    assert!(summary.contains("\"command\": \"r0\""));
}

#[test]
fn zero_horizon_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = agesirs(&["simulate", "--preset", "table2", "--T", "0"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--T"), "{}", stderr(&o));
    assert!(!dir.path().join("simulate_trajectory.csv").exists());
}

#[test]
fn short_simulation_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let o = agesirs(&["simulate", "--T", "1", "--steps", "500"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("simulate_trajectory.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,S1,I1,R1,S2,I2,R2");
    assert_eq!(csv.lines().count(), 502);
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS feasible"));
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[params]\nmu = -1.0\n").unwrap();
    let o = agesirs(&["r0", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("params.mu"), "{}", stderr(&o));

    fs::write(&cfg, "[params]\nmuu = 1.0\n").unwrap();
    let o = agesirs(&["r0", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(stderr(&o).contains("params.muu"), "{}", stderr(&o));
}

#[test]
fn config_file_and_preset_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 7\n[grid]\nt_end = 1.0\nn_steps = 100\n").unwrap();
    let o = agesirs(&["r0", "--config", cfg.to_str().unwrap(), "--preset", "table4"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(dir.path().join("r0_summary.json")).unwrap();
    assert!(summary.contains("\"seed\": 7"));
    assert!(summary.contains("\"preset\": \"table4\""), "{summary}");
}

#[test]
fn unknown_choices_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!agesirs(&["r0", "--preset", "table9"], dir.path()).status.success());
    assert!(!agesirs(&["optcontrol", "--strategy", "all"], dir.path()).status.success());
    assert!(!agesirs(&["plot"], dir.path()).status.success());
}

#[test]
fn replicate_paper_alias_is_accepted() {
    let o = Command::new(env!("CARGO_BIN_EXE_agesirs"))
        .args(["replicate-paper", "--help"])
        .output()
        .unwrap();
    assert!(o.status.success());
}

#[test]
fn optcontrol_strategy_flag() {
    let dir = tempfile::tempdir().unwrap();
    let o = agesirs(&["optcontrol", "--strategy", "u12", "--T", "2"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("optcontrol_u12_only.csv").exists());
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS converged"));
}
