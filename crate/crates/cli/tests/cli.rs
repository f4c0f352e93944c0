use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn crnid(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crnid"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

const SMALL: &str = r#"
output = "out"
[protocol]
experiments = 4
duration = 2.0
step = 0.01
x0_range = [0.0, 1.0]
seed = 5
[noise]
sigma2 = 1e-3
model = "equation"
"#;

#[test]
fn exact_pipeline_succeeds_with_one_realization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "exact.toml", "[estimator]\nmethod = \"exact\"\n");
    let out = crnid(dir.path(), &["--config", &cfg, "pipeline"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["realizations"], 1);
    assert_eq!(report["dense_edges"], 6);
    assert_eq!(report["schema"], 1);
    assert!(dir.path().join("out/dense.dot").exists());
}

#[test]
fn infeasible_exclusions_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "x.toml",
        "exclusions = [\"C5->C1\"]\n[estimator]\nmethod = \"exact\"\n",
    );
    let out = crnid(dir.path(), &["--config", &cfg, "dense"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn configuration_errors_exit_with_4() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "bogus = 1\n");
    assert_eq!(crnid(dir.path(), &["--config", &bad, "pipeline"]).status.code(), Some(4));
    let step = write(dir.path(), "step.toml", &SMALL.replace("step = 0.01", "step = 5.0"));
    assert_eq!(crnid(dir.path(), &["--config", &step, "simulate"]).status.code(), Some(4));
    assert_eq!(crnid(dir.path(), &["--config", "missing.toml", "pipeline"]).status.code(), Some(4));
    assert_eq!(crnid(dir.path(), &["frobnicate"]).status.code(), Some(4));
}

#[test]
fn simulate_then_estimate_from_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let out = crnid(dir.path(), &["--config", &cfg, "simulate"]);
    assert_eq!(out.status.code(), Some(0));
    let data = dir.path().join("out/data");
    assert!(data.join("manifest.json").exists());
    assert_eq!(fs::read_dir(&data).unwrap().count(), 5);
    let header = fs::read_to_string(data.join("exp_000.csv")).unwrap();
    assert!(header.starts_with("t,x1,x2,x3,x4,x5"));

    let from_files = write(dir.path(), "files.toml", &format!("data = \"out/data/manifest.json\"\n{SMALL}"));
    let out = crnid(dir.path(), &["--config", &from_files, "estimate"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let est: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/estimate.json")).unwrap()).unwrap();
    assert_eq!(est["m_hat"].as_array().unwrap().len(), 5);
}

#[test]
fn seed_flag_changes_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let read = |seed: &str, out: &str| {
        let o = crnid(dir.path(), &["--config", &cfg, "--seed", seed, "--out", out, "simulate"]);
        assert_eq!(o.status.code(), Some(0));
        fs::read(dir.path().join(out).join("data/exp_000.csv")).unwrap()
    };
    assert_eq!(read("1", "a"), read("1", "b"));
    assert_ne!(read("1", "a"), read("2", "c"));
}

#[test]
fn export_dot_and_program_dump() {
    let dir = tempfile::tempdir().unwrap();
    let model = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models/benchmark.json");
    let out = crnid(dir.path(), &["export-dot", "--model", model.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let dot = String::from_utf8(out.stdout).unwrap();
    assert_eq!(dot.matches("->").count(), 6);
    assert!(dot.contains("0.3386"));

    let cfg = write(dir.path(), "exact.toml", "[estimator]\nmethod = \"exact\"\n");
    let out = crnid(dir.path(), &["--config", &cfg, "--dump-program", "prog.json", "--threads", "2", "enumerate"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("prog.json").exists());
    assert!(dir.path().join("out/realizations.json").exists());
}
