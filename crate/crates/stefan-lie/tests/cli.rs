//! End-to-end tests of the command-line binary: exit codes, artifact
//! formats, and byte-stable summaries.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fixture(name: &str) -> String {
    format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stefan-lie"))
        .env_remove("STEFAN_LIE_OUTDIR")
        .args(args)
        .args(["--out-dir", dir.to_str().unwrap()])
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path) -> Value {
    let text = fs::read_to_string(dir.join("summary.json")).expect("summary.json exists");
    serde_json::from_str(&text).expect("summary.json is valid JSON")
}

#[test]
fn pipeline_on_the_wave_fixture_reports_the_oracle_and_validates() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &["pipeline", &fixture("wave_constant.json")]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let s = summary(dir.path());
    assert_eq!(s["schema_version"], 1);
    assert_eq!(s["tool"]["name"], "stefan-lie");
    assert!(!s["tool"]["version"].as_str().unwrap().is_empty());
    assert_eq!(s["config"]["subcommand"], "pipeline");
    assert_eq!(s["failure"], Value::Null);

    // Constant diffusivity pair: the classification declines, admission
    // still finds the wave family.
    assert_eq!(s["classification"]["linear_pair"], true);
    let vals = &s["solutions"][0]["values"];
    assert!((vals[0].as_f64().unwrap() - 1.0).abs() < 1e-9, "{vals}");
    assert!((vals[1].as_f64().unwrap() - 1.25f64.ln()).abs() < 1e-9, "{vals}");
    assert_eq!(s["validations"][0]["report"]["passed"], true);

    // Every listed artifact is a file in the output directory.
    let artifacts = s["artifacts"].as_array().unwrap();
    assert!(!artifacts.is_empty());
    for name in artifacts {
        assert!(dir.path().join(name.as_str().unwrap()).is_file(), "{name}");
    }
}

#[test]
fn physical_input_is_substituted_to_the_same_oracle() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &["pipeline", &fixture("physical_constant.json")]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let s = summary(dir.path());
    assert_eq!(s["problem"]["source"], "physical");
    assert_eq!(s["problem"]["transformed"], true);
    let vals = &s["solutions"][0]["values"];
    assert!((vals[0].as_f64().unwrap() - 1.0).abs() < 1e-9, "{vals}");
    assert!((vals[1].as_f64().unwrap() - 1.25f64.ln()).abs() < 1e-9, "{vals}");
}

#[test]
fn similarity_pipeline_is_byte_deterministic_and_writes_front_artifacts() {
    let dir = TempDir::new().unwrap();
    let args = ["pipeline", &fixture("similarity_erf.json")];
    let out = run_in(dir.path(), &args);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let first_summary = fs::read(dir.path().join("summary.json")).unwrap();
    let first_profile = fs::read(dir.path().join("profile_similarity_liquid.csv")).unwrap();
    let first_front = fs::read(dir.path().join("front_similarity.csv")).unwrap();

    let s = summary(dir.path());
    let vals = &s["solutions"][0]["values"];
    assert!((vals[0].as_f64().unwrap() - 0.4).abs() < 1e-9, "{vals}");
    assert!((vals[1].as_f64().unwrap() - 1.1).abs() < 1e-9, "{vals}");
    assert!(dir.path().join("validation_similarity.json").is_file());
    let front_text = String::from_utf8(first_front.clone()).unwrap();
    assert!(front_text.starts_with("t,s1,s2,s2_over_sqrt_t\n"), "{front_text}");

    // Identical invocation, identical bytes.
    let out = run_in(dir.path(), &args);
    assert!(out.status.success());
    assert_eq!(first_summary, fs::read(dir.path().join("summary.json")).unwrap());
    assert_eq!(first_profile, fs::read(dir.path().join("profile_similarity_liquid.csv")).unwrap());
    assert_eq!(first_front, fs::read(dir.path().join("front_similarity.csv")).unwrap());
}

#[test]
fn classify_reports_the_exponential_row() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &["classify", &fixture("exp_exp.json")]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let s = summary(dir.path());
    assert_eq!(s["classification"]["table_row"], 3);
    assert_eq!(s["classification"]["dim"], 4);
    let basis: Vec<&str> = s["classification"]["basis"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert!(basis.contains(&"x d_x + 2 d_u + 2 d_v"), "{basis:?}");
}

#[test]
fn check_admits_the_dilation_on_the_similarity_fixture() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &["check", &fixture("similarity_erf.json")]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("admitted"), "{stdout}");

    let s = summary(dir.path());
    assert_eq!(s["admission"]["admitted"][0]["form"], "X2");
}

#[test]
fn check_exits_two_when_nothing_is_admitted() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &["check", &fixture("no_symmetry.json")]);
    assert_eq!(out.status.code(), Some(2));

    let s = summary(dir.path());
    assert_eq!(s["failure"]["code"], "no_admitted_symmetry");
    assert!(s["admission"]["admitted"].as_array().unwrap().is_empty());
    assert!(!s["admission"]["rejected"].as_array().unwrap().is_empty());
}

#[test]
fn missing_problem_file_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("does_not_exist.json");
    let out = run_in(dir.path(), &["classify", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error ["), "{stderr}");

    let s = summary(dir.path());
    assert_eq!(s["failure"]["code"], "io_error");
}

#[test]
fn solve_writes_lf_csv_profiles_with_headers() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &["solve", &fixture("wave_constant.json")]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let s = summary(dir.path());
    assert_eq!(s["config"]["rows"], 201);

    let text = fs::read_to_string(dir.path().join("profile_wave_liquid.csv")).unwrap();
    assert!(!text.contains('\r'), "CSV must use LF endings");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "xi,u,flux");
    assert_eq!(lines.len(), 202, "header plus one line per sample row");
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 3, "{line}");
        for f in fields {
            f.parse::<f64>().unwrap_or_else(|_| panic!("not a decimal field: {f}"));
        }
    }
}

#[test]
fn env_var_sets_the_default_output_directory() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_stefan-lie"))
        .env("STEFAN_LIE_OUTDIR", dir.path())
        .args(["classify", &fixture("exp_exp.json")])
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("summary.json").is_file());
}

#[test]
fn usage_errors_exit_one() {
    let out = Command::new(env!("CARGO_BIN_EXE_stefan-lie"))
        .arg("frobnicate")
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(1));
}
