use std::path::Path;
use std::process::{Command, Output};

fn obbq(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_obbq")).args(args).current_dir(cwd).output().unwrap()
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap()
}

#[test]
fn config_prints_parseable_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = obbq(&["config"], dir.path());
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["grid"]["cells"], 64);
    assert_eq!(v["solver"]["relaxation"], 0.7);
}

#[test]
fn zero_data_solve_verifies_and_exports() {
    let dir = tempfile::tempdir().unwrap();
    let run = ["solve", "--set", "data.amplitude=0", "--set", "grid.radius=3", "--set", "grid.cells=8", "--out", "run"];
    let out = obbq(&run, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run_dir = dir.path().join("run");
    for f in ["run.json", "log.csv", "energy.json", "u.obbq", "theta.obbq", "v.obbq", "psi.obbq", "p.obbq"] {
        assert!(run_dir.join(f).exists(), "{f}");
    }

    let out = obbq(&["verify", "--in", "run"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run_dir.join("report.json")).unwrap()).unwrap();
    assert!(report.to_string().contains("ssr_residual"));

    let out = obbq(&["export", "--in", "run", "--field", "theta", "--plane", "z=0"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,value"));
    assert_eq!(lines.count(), 64);

    let out = obbq(&["export", "--in", "run", "--field", "u", "--component", "2", "--line", "x:y=0,z=0", "--out", "line.csv"], dir.path());
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("line.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("x,value"));
    assert_eq!(text.lines().count(), 9);
}

#[test]
fn vector_export_requires_a_component() {
    let dir = tempfile::tempdir().unwrap();
    let out = obbq(&["solve", "--set", "data.amplitude=0", "--set", "grid.radius=3", "--set", "grid.cells=8", "--out", "run"], dir.path());
    assert!(out.status.success());
    let out = obbq(&["export", "--in", "run", "--field", "u", "--plane", "z=0"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "InvalidInput");
}

#[test]
fn bad_configuration_exits_with_status_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("neg.json"), r#"{"solver":{"tolerance":-1}}"#).unwrap();
    let out = obbq(&["solve", "--config", "neg.json"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["exit_code"], 3);

    std::fs::write(dir.path().join("unknown.json"), r#"{"grid":{"radius":4,"spacing":0.1}}"#).unwrap();
    let out = obbq(&["solve", "--config", "unknown.json"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("spacing"));

    let out = obbq(&["solve", "--set", "grid.volume=2"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn missing_run_directory_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = obbq(&["verify", "--in", "nowhere"], dir.path());
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn malformed_command_lines_exit_with_usage_status() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(obbq(&["frobnicate"], dir.path()).status.code(), Some(64));
    assert_eq!(obbq(&["export", "--field"], dir.path()).status.code(), Some(64));
    assert!(obbq(&["--help"], dir.path()).status.success());
}

#[test]
fn large_data_stalls_with_a_structured_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = obbq(
        &[
            "solve",
            "--set",
            r#"data.velocity=[{"swirl":1}]"#,
            "--set",
            "data.temperature=[]",
            "--set",
            "data.amplitude=40",
            "--set",
            "grid.radius=4",
            "--set",
            "grid.cells=16",
            "--out",
            "run",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(6));
    let e = stderr_json(&out);
    assert_eq!(e["error"], "ContinuationStalled");
    let lambda = e["lambda"].as_f64().unwrap();
    assert!((0.0..1.0).contains(&lambda));
    assert!(!e["history"].as_array().unwrap().is_empty());
    assert!(!dir.path().join("run/run.json").exists());
}

#[test]
fn shipped_configurations_run_at_small_size() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = tempfile::tempdir().unwrap();
    for name in ["radial.json", "swirl.json"] {
        let cfg = root.join(name);
        let out = obbq(&["solve", "--config", cfg.to_str().unwrap(), "--set", "grid.radius=3", "--set", "grid.cells=8", "--out", name], dir.path());
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let cfg = root.join("sweep.json");
    let out = obbq(&["sweep", "--config", cfg.to_str().unwrap(), "--set", "sweep.radii=[4,6]", "--out", "sweep"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("sweep/diagnostics.csv").exists());
    assert!(obbq(&["verify", "--in", "sweep"], dir.path()).status.success());
}
