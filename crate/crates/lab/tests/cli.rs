mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::ccl_config;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccl-lab")).args(args).output().unwrap()
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn train_succeeds_and_writes_one_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &ccl_config().to_json());
    let out = dir.path().join("runs");
    let o = lab(&["train", "--config", &config, "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let runs: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1);
    for file in ["report.json", "metrics.csv", "final_metrics.csv", "final_metrics.json", "centers.csv", "checkpoint.ccl", "config.json"] {
        assert!(runs[0].join(file).is_file(), "{file}");
    }
    assert!(String::from_utf8_lossy(&o.stdout).contains("recall@1"));
}

#[test]
fn overrides_change_the_run_directory() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &ccl_config().to_json());
    let out = dir.path().join("runs");
    let out = out.to_str().unwrap();
    assert!(lab(&["train", "--config", &config, "--out-dir", out]).status.success());
    assert!(lab(&["train", "--config", &config, "--out-dir", out, "--seed", "3", "--lambda", "0.5", "--m", "0.2"]).status.success());
    let mut names: Vec<String> = fs::read_dir(out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names.len(), 2);
    assert!(names.iter().any(|n| n.ends_with("-seed3")));
}

#[test]
fn invalid_configs_exit_with_one_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ccl_config();
    cfg.mu = Some(0.5);
    let config = write_config(dir.path(), &cfg.to_json());
    let o = lab(&["train", "--config", &config, "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mu"));

    let config = write_config(dir.path(), r#"{"loss": "ccl", "bogus": 1}"#);
    assert_eq!(lab(&["train", "--config", &config]).status.code(), Some(1));
    assert_eq!(lab(&["train", "--config", "/nonexistent/config.json"]).status.code(), Some(1));
    assert_eq!(lab(&["train"]).status.code(), Some(1));
    assert_eq!(lab(&["no-such-command"]).status.code(), Some(1));
}

#[test]
fn runtime_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &ccl_config().to_json());
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let o = lab(&["train", "--config", &config, "--out-dir", blocker.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_prints_a_passing_table() {
    let o = lab(&["gradcheck", "--trials", "1", "--seed", "4"]);
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.matches("PASS").count(), 8, "{stdout}");
    assert!(stdout.lines().all(|l| !l.contains("FAIL")));
    assert_eq!(lab(&["gradcheck", "--trials", "0"]).status.code(), Some(2));
}

#[test]
fn sweep_and_noise_study_print_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &ccl_config().to_json());
    let out = dir.path().join("runs");
    let out = out.to_str().unwrap();
    let o = lab(&["sweep", "--config", &config, "--out-dir", out, "--lambdas", "0,1", "--ms", "0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().filter(|l| l.starts_with("0,") || l.starts_with("1,")).count(), 2);

    let o = lab(&["noise-study", "--config", &config, "--out-dir", out, "--rates", "0.2", "--losses", "ccl,nsoftmax"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("ccl,symmetric,0.2,"));
    assert!(stdout.contains("nsoftmax,none,0,"));
}

#[test]
fn mnist2d_with_a_corrupt_file_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.idx");
    fs::write(&bad, [0u8, 0, 8, 1, 0, 0, 0, 0]).unwrap();
    let bad = bad.to_str().unwrap();
    let o = lab(&["mnist2d", "--images", bad, "--labels", bad, "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).to_lowercase().contains("magic"));
}
