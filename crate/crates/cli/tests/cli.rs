use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn specs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs")
}

fn lvcoex(spec: &Path, command: &str, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lvcoex"))
        .arg("--spec")
        .arg(spec)
        .args(["--command", command])
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn write_spec(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn eigen_reports_discrete_lambda() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lvcoex(&specs_dir().join("unit_interval.toml"), "eigen", tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("lambda_1 = 9.86"), "{stdout}");
    let r = report(tmp.path());
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["command"], "eigen");
    assert!(tmp.path().join("eigen.csv").exists());
}

#[test]
fn solve_writes_solution_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lvcoex(
        &specs_dir().join("canonical.toml"),
        "solve",
        tmp.path(),
        &["--grid-n", "60"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("solution.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.contains("u1") && header.contains("u2"), "{header}");
    assert_eq!(csv.lines().count(), 61);
    assert_eq!(report(tmp.path())["grid"]["counts"][0], 60);
}

#[test]
fn failing_certification_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lvcoex(
        &specs_dir().join("strong.toml"),
        "certify",
        tmp.path(),
        &["--grid-n", "40", "--starts", "4"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("certification failed"));
    assert!(tmp.path().join("report.json").exists());
}

#[test]
fn parse_error_reports_location() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write_spec(
        tmp.path(),
        "bad.toml",
        "[domain]\nkind = \"interval\"\nlengths = [1.0\ncounts = [10]\n",
    );
    let out = lvcoex(&spec, "eigen", &tmp.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bad.toml:"), "{stderr}");
    let loc: Vec<&str> = stderr.split("bad.toml:").nth(1).unwrap().splitn(3, ':').collect();
    assert!(
        loc[0].parse::<usize>().is_ok() && loc[1].parse::<usize>().is_ok(),
        "{stderr}"
    );
}

#[test]
fn missing_file_is_a_parse_class_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lvcoex(&tmp.path().join("nope.toml"), "eigen", tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn invalid_values_exit_three() {
    let tmp = tempfile::tempdir().unwrap();
    let neg = write_spec(
        tmp.path(),
        "neg.toml",
        "[domain]\nkind = \"interval\"\nlengths = [-1.0]\ncounts = [10]\n",
    );
    assert_eq!(lvcoex(&neg, "eigen", tmp.path(), &[]).status.code(), Some(3));

    let gap = write_spec(
        tmp.path(),
        "gap.toml",
        "[domain]\nkind = \"interval\"\nlengths = [1.0]\ncounts = [10]\n\
         [species.1]\nh = { family = \"affine\", params = [12.0, 1.0] }\ng = { family = \"linear\", coeffs = [0.1] }\n\
         [species.3]\nh = { family = \"affine\", params = [12.0, 1.0] }\ng = { family = \"linear\", coeffs = [0.1] }\n",
    );
    assert_eq!(lvcoex(&gap, "solve", tmp.path(), &[]).status.code(), Some(3));

    let domain_only = specs_dir().join("unit_interval.toml");
    assert_eq!(lvcoex(&domain_only, "solve", tmp.path(), &[]).status.code(), Some(3));
}

#[test]
fn seed_override_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let out = lvcoex(
        &specs_dir().join("canonical.toml"),
        "uniqueness",
        tmp.path(),
        &["--grid-n", "50", "--starts", "5", "--seed", "77"],
    );
    assert_eq!(out.status.code(), Some(0));
    let r = report(tmp.path());
    assert_eq!(r["solver"]["seed"], 77);
    assert_eq!(r["solver"]["starts"], 5);
    assert!(tmp.path().join("clusters.csv").exists());
}
