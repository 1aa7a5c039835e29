use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rsvm::harness::output::CSV_HEADER;
use rsvm::harness::ExperimentSpec;

fn rsvm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsvm")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

const SMALL_SPEC: &str = r#"{
  "spec_version": 1,
  "p": 4,
  "q": 5,
  "r": 1,
  "m_ratio": 0.8,
  "smnr_db": 25,
  "mode": "completion",
  "t1": 2,
  "t2": 2,
  "master_seed": 3,
  "estimators": [
    {"kind": "rsvm", "penalty": "schatten", "sided": "left"},
    {"kind": "nuclear_norm"},
    {"kind": "zero", "name": "null"}
  ]
}"#;

#[test]
fn every_figure_config_runs_at_one_trial() {
    let mut names: Vec<PathBuf> = std::fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    names.sort();
    assert!(names.len() >= 4, "{names:?}");
    for path in names {
        let spec = ExperimentSpec::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
        spec.validate().unwrap();
        let sweep = spec.sweep.as_ref().expect("figure configs carry a sweep block");
        for &v in &sweep.values {
            spec.with_param(sweep.param, v).unwrap().validate().unwrap();
        }

        let dir = tempfile::tempdir().unwrap();
        let out = rsvm(&[
            "simulate",
            path.to_str().unwrap(),
            "--t1",
            "1",
            "--t2",
            "1",
            "--out-dir",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        let csv = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + spec.estimators.len());
    }
}

#[test]
fn simulate_and_sweep_write_results() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, SMALL_SPEC).unwrap();
    let out_dir = dir.path().join("out");

    let out = rsvm(&["simulate", spec.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with(CSV_HEADER));
    assert!(stdout.contains("\nnull,none,NA,1,"));
    assert_eq!(std::fs::read_to_string(out_dir.join("results.csv")).unwrap(), stdout);

    let seeded = rsvm(&["simulate", spec.to_str().unwrap(), "--seed", "4", "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(code(&seeded), 0);
    assert_ne!(String::from_utf8(seeded.stdout).unwrap(), stdout);

    let out = rsvm(&[
        "sweep",
        spec.to_str().unwrap(),
        "--param",
        "smnr_db",
        "--values",
        "10,30",
        "--threads",
        "2",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(csv.contains("rsvm-sn-left,smnr_db,30,"));
    assert!(out_dir.join("plot.svg").exists());

    // No sweep block and no --param.
    let out = rsvm(&["sweep", spec.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn spec_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    for text in [
        SMALL_SPEC.replace("\"p\": 4", "\"p\": 4, \"colour\": 1"),
        SMALL_SPEC.replace("\"r\": 1", "\"r\": 9"),
        SMALL_SPEC.replace("\"m_ratio\": 0.8", "\"m_ratio\": 1.5"),
        SMALL_SPEC.replace("\"spec_version\": 1", "\"spec_version\": 2"),
        "{ not json".to_string(),
    ] {
        std::fs::write(&bad, &text).unwrap();
        let out = rsvm(&["simulate", bad.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
        assert_eq!(code(&out), 2, "{text}");
    }
    let out = rsvm(&["simulate", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

fn write_problem(dir: &Path, a: &str, y: &str) -> (PathBuf, PathBuf) {
    let (pa, py) = (dir.join("A.csv"), dir.join("y.csv"));
    std::fs::write(&pa, a).unwrap();
    std::fs::write(&py, y).unwrap();
    (pa, py)
}

#[test]
fn reconstruct_recovers_an_observed_rank_one_matrix() {
    // X = u v^T with u = (1, 2), v = (1, -1, 3); every entry observed once, column-major.
    let x = [1.0, 2.0, -1.0, -2.0, 3.0, 6.0];
    let mut a = String::new();
    for i in 0..6 {
        let row: Vec<&str> = (0..6).map(|j| if i == j { "1" } else { "0" }).collect();
        a.push_str(&row.join(","));
        a.push('\n');
    }
    let y: String = x.iter().map(|v| format!("{v}\n")).collect();
    let dir = tempfile::tempdir().unwrap();
    let (pa, py) = write_problem(dir.path(), &a, &y);
    let out = rsvm(&[
        "reconstruct",
        "--A",
        pa.to_str().unwrap(),
        "--y",
        py.to_str().unwrap(),
        "--p",
        "2",
        "--q",
        "3",
        "--penalty",
        "log-det",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("singular values:"));
    let xhat = rsvm::io::read_matrix_csv(&dir.path().join("xhat.csv")).unwrap();
    assert_eq!(xhat.shape(), (2, 3));
    let truth = rsvm::linalg::unvec(&x, 2, 3).unwrap();
    assert!((&xhat - &truth).norm() < 0.05 * truth.norm(), "{xhat}");
}

#[test]
fn reconstruct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let base = |pa: &Path, py: &Path, q: &str| -> Output {
        rsvm(&[
            "reconstruct",
            "--A",
            pa.to_str().unwrap(),
            "--y",
            py.to_str().unwrap(),
            "--p",
            "1",
            "--q",
            q,
            "--out-dir",
            dir.path().to_str().unwrap(),
        ])
    };

    let (pa, py) = write_problem(dir.path(), "1,0\n0,1\n", "1\n2\n");
    assert_eq!(code(&base(&pa, &py, "3")), 2, "shape mismatch is a spec error");
    let out = rsvm(&["reconstruct", "--A", pa.to_str().unwrap(), "--y", py.to_str().unwrap(), "--p", "1", "--q", "2", "--s", "1.5"]);
    assert_eq!(code(&out), 2, "out-of-range penalty parameter");

    let (pa, py) = write_problem(dir.path(), "1,0\nx,1\n", "1\n2\n");
    assert_eq!(code(&base(&pa, &py, "2")), 2, "unparsable CSV");

    let (pa, py) = write_problem(dir.path(), "1e200,1e200\n1e200,1e200\n", "1\n2\n");
    let out = base(&pa, &py, "2");
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}
