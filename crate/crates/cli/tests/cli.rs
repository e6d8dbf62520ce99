use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn viswf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_viswf")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const MINIMAL: &str = "\
# one short trial of one estimator
duration = 1.0
trials = 1
seed = 3
estimator = grouped preint exact
";

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("scenario.cfg");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn help_succeeds_and_unknown_commands_are_usage_errors() {
    assert_eq!(code(&viswf(&["--help"])), 0);
    assert_eq!(code(&viswf(&["frobnicate"])), 1);
    assert_eq!(code(&viswf(&["simulate", "--trials", "many"])), 1);
}

#[test]
fn minimal_simulation_writes_summary_and_one_trial() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let out = dir.path().join("out");
    let o = viswf(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("preint/grouped/exact"));
    assert!(out.join("summary.txt").is_file());
    assert!(out.join("summary.csv").is_file());
    assert!(out.join("preint_grouped_exact.csv").is_file());
    let trials: Vec<_> = fs::read_dir(out.join("preint_grouped_exact")).unwrap().collect();
    assert_eq!(trials.len(), 1);
    let csv = fs::read_to_string(out.join("preint_grouped_exact/trial_000.csv")).unwrap();
    assert!(csv.starts_with("t,nees_total,nees_yaw,nees_pos,rmse_total,rmse_yaw_deg,rmse_pos_m\n"));
    assert_eq!(csv.lines().count(), 1 + 11);
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(files(&p));
        } else {
            out.push((p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()));
        }
    }
    out.sort();
    out
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &MINIMAL.replace("trials = 1", "trials = 2"));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = viswf(&["simulate", "--config", &cfg, "--seed", "9", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
        let o = viswf(&["audit", "--config", &cfg, "--seed", "9", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.len(), 7);
    assert_eq!(fa, fb);
}

#[test]
fn trials_override_applies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let out = dir.path().join("out");
    let o = viswf(&["simulate", "--config", &cfg, "--trials", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_dir(out.join("preint_grouped_exact")).unwrap().count(), 2);
}

#[test]
fn single_combination_audit_is_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), MINIMAL);
    let o = viswf(&["audit", "--config", &cfg]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("preint/grouped/exact"));
    assert_eq!(lines[1].matches("PASS").count(), 4);
}

#[test]
fn expected_pass_that_fails_is_a_consistency_violation() {
    let dir = tempfile::tempdir().unwrap();
    // Published as passing the same-point check, but it does not here.
    let cfg = write_config(dir.path(), &MINIMAL.replace("grouped preint exact", "separate direct approx"));
    assert_eq!(code(&viswf(&["audit", "--config", &cfg])), 3);
    // Failing where failure is expected is not a violation.
    let cfg = write_config(dir.path(), &MINIMAL.replace("grouped preint exact", "grouped direct exact"));
    assert_eq!(code(&viswf(&["audit", "--config", &cfg])), 0);
}

#[test]
fn corrupted_config_is_reported_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "duration = 1.0\nwindow.size = ten\n");
    let o = viswf(&["simulate", "--config", &cfg]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    assert_eq!(code(&viswf(&["audit", "--config", "/nonexistent/scenario.cfg"])), 1);
}

#[test]
fn selftest_passes_quickly() {
    let start = Instant::now();
    let o = viswf(&["selftest"]);
    assert!(start.elapsed() < Duration::from_secs(60));
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.lines().count() >= 10);
    assert!(text.lines().all(|l| l.starts_with("PASS ")));
}
