use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn tclose(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tclose"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).expect("valid JSON")
}

#[test]
#[allow(clippy::approx_constant)]
fn bound_dp_to_t() {
    let dir = tempfile::tempdir().unwrap();
    let out = tclose(
        &[
            "bound",
            "--dp-to-t",
            "--n",
            "12",
            "--classes",
            "4,4,4",
            "--epsilon",
            "0.6931",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let cert = json(&out.stdout);
    let t = cert["t"].as_f64().unwrap();
    assert!((t - (4.0 + 8.0 * 0.6931f64.exp()) / 12.0).abs() < 1e-15);
    assert!((t - 1.6667).abs() < 1e-4);
    assert_eq!(cert["direction"], "dp_to_t");
    assert_eq!(cert["binding_class"], 0);
}

#[test]
fn bound_t_to_eps() {
    let dir = tempfile::tempdir().unwrap();
    let out = tclose(&["bound", "--t-to-eps", "--t", "1.5"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let eps = json(&out.stdout)["epsilon"].as_f64().unwrap();
    assert!((eps - 0.81093).abs() < 1e-5);
    let bad = tclose(&["bound", "--t-to-eps", "--t", "0.5"], dir.path());
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn check_reports_twelve_record_layout() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, schema) = (fixture("three_classes.csv"), fixture("buckets.schema"));
    let out = tclose(
        &["check", "--input", &csv, "--schema", &schema, "--t", "1.5"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out.stdout);
    assert_eq!(report["satisfied"], true);
    assert_eq!(report["achieved_t"], 1.5);

    let strict = tclose(
        &["check", "--input", &csv, "--schema", &schema, "--t", "1.2"],
        dir.path(),
    );
    assert_eq!(strict.status.code(), Some(1));
    assert_eq!(json(&strict.stdout)["achieved_t"], 1.5);
}

#[test]
fn check_infinite_distance_serializes_as_string() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("gap.csv");
    fs::write(&csv, "class,bucket\nE1,B1\nE1,B2\nE2,B1\nE2,B1\n").unwrap();
    let schema = fixture("buckets.schema");
    let out = tclose(
        &[
            "check",
            "--input",
            csv.to_str().unwrap(),
            "--schema",
            &schema,
            "--t",
            "100",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out.stdout)["achieved_t"], "inf");
}

#[test]
fn anonymize_tclose_writes_release_and_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let out = tclose(
        &[
            "anonymize-tclose",
            "--input",
            &fixture("employees.csv"),
            "--schema",
            &fixture("employees.schema"),
            "--output",
            "release.csv",
            "--column",
            "salary",
            "--t",
            "2",
            "--l",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let sidecar = json(&fs::read(dir.path().join("release.json")).unwrap());
    assert_eq!(sidecar["certificate"]["achieved_t"], 1.5);
    assert_eq!(sidecar["k"], 4);
    assert_eq!(sidecar["provenance"].as_array().unwrap().len(), 12);

    // The release and its schema load back and check out at t = 2.
    let check = tclose(
        &[
            "check",
            "--input",
            "release.csv",
            "--schema",
            "release.schema",
            "--t",
            "2",
        ],
        dir.path(),
    );
    assert_eq!(check.status.code(), Some(0));
    assert_eq!(json(&check.stdout)["achieved_t"], 1.5);
}

#[test]
fn anonymize_dp_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let out = tclose(
        &[
            "anonymize-dp",
            "--input",
            &fixture("employees.csv"),
            "--schema",
            &fixture("employees.schema"),
            "--output",
            "dp.csv",
            "--k",
            "4",
            "--epsilon",
            "0.6931471805599453",
            "--seed",
            "5",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let sidecar = json(&fs::read(dir.path().join("dp.json")).unwrap());
    let t = sidecar["certificate"]["t"].as_f64().unwrap();
    assert!((t - 5.0 / 3.0).abs() < 1e-12);
    assert_eq!(sidecar["certificate"]["class_sizes"], serde_json::json!([4, 4, 4]));
    let scale = sidecar["mechanisms"][0]["mechanism"]["scale"].as_f64().unwrap();
    assert!((scale - 55000.0 / std::f64::consts::LN_2).abs() < 1e-6);
}

#[test]
fn usage_and_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tclose(&["bound"], dir.path()).status.code(), Some(2));
    assert_eq!(tclose(&["check", "--t", "1"], dir.path()).status.code(), Some(2));
    let missing = tclose(
        &[
            "check",
            "--input",
            "nope.csv",
            "--schema",
            &fixture("buckets.schema"),
            "--t",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(missing.status.code(), Some(2));
    assert!(!missing.stderr.is_empty());
    let small = tclose(
        &[
            "anonymize-tclose",
            "--input",
            &fixture("employees.csv"),
            "--schema",
            &fixture("employees.schema"),
            "--output",
            "x.csv",
            "--column",
            "salary",
            "--t",
            "3",
        ],
        dir.path(),
    );
    assert_eq!(small.status.code(), Some(2));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn verify_appends_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let config: PathBuf = dir.path().join("small.toml");
    fs::write(
        &config,
        "seed = 1\ngrid_resolution = 1001\nvalue_range = [0.0, 10.0]\nepsilons = [1.0]\n\n\
         [[layout]]\nname = \"equal\"\ngroup_sizes = [3, 3]\n\n\
         [[construction]]\nn = 9\nt = 2\nl = 1\ntrials = 3\n",
    )
    .unwrap();
    let args = [
        "verify",
        "--config",
        config.to_str().unwrap(),
        "--output",
        "log.jsonl",
        "--jobs",
        "2",
    ];
    assert_eq!(tclose(&args, dir.path()).status.code(), Some(0));
    assert_eq!(tclose(&args, dir.path()).status.code(), Some(0));
    let log = fs::read_to_string(dir.path().join("log.jsonl")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], lines[2]);
    let first = json(lines[0].as_bytes());
    assert_eq!(first["claim"], "dp_to_t");
    assert!(first.get("runtime_secs").is_none());
    assert_eq!(json(lines[1].as_bytes())["claim"], "t_construction");
}

#[test]
fn inputs_are_not_modified() {
    let dir = tempfile::tempdir().unwrap();
    let before = fs::read(fixture("employees.csv")).unwrap();
    tclose(
        &[
            "anonymize-dp",
            "--input",
            &fixture("employees.csv"),
            "--schema",
            &fixture("employees.schema"),
            "--output",
            "dp.csv",
            "--k",
            "3",
            "--epsilon",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(fs::read(fixture("employees.csv")).unwrap(), before);
}
