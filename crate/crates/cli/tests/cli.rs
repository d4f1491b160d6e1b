use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bohmlab(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bohmlab"))
        .args(args)
        .env("BOHMLAB_OUT", out_root)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn list_shows_catalog() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bohmlab(&["list"], tmp.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.lines().count() >= 12);
    for name in ["verify_appendix", "equivariance_free_packet", "born_rule_two_branch", "waveguide_sweep"] {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn describe_prints_description_and_config() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bohmlab(&["describe", "plane_wave_momentum"], tmp.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("pipeline: verify"));
    assert!(text.contains("\"plane_wave_momentum\""));
    assert_eq!(bohmlab(&["describe", "nope"], tmp.path()).status.code(), Some(2));
}

#[test]
fn verify_run_passes_and_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bohmlab(&["run", "verify-appendix.json"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = tmp.path().join("verify_appendix");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["checks"].as_array().unwrap().len(), 6);
    assert!(dir.join("metadata.json").exists());
    assert_eq!(stdout(&o).matches("PASS").count(), 6);
}

#[test]
fn waveguide_run_writes_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("wg");
    let o = bohmlab(&["run", "waveguide_sweep", "--out", out.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("delta,regime,"));
    assert!(stdout(&o).contains("continuity"));
}

#[test]
fn malformed_config_exits_2_without_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"name": "bad", "pipeline": "evolve", "state": {"type": "ho_ground", "omega": 1.0}}"#).unwrap();
    let out = tmp.path().join("out");
    let o = bohmlab(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`grid`"));
    assert!(!out.exists());

    let o = bohmlab(&["run", "no_such_scenario"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failing_checks_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("strict.json");
    let mut v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(find_config("free_packet_evolve")).unwrap()).unwrap();
    v["tolerances"]["continuity"] = serde_json::json!(1e-12);
    fs::write(&cfg, v.to_string()).unwrap();
    let o = bohmlab(&["run", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL"));
    assert!(tmp.path().join("free_packet_evolve/report.json").exists());
}

#[test]
fn runtime_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("node.json");
    // valid config, but the requested point sits where the density underflows
    fs::write(
        &cfg,
        r#"{"name": "node", "pipeline": "actual_values",
            "grid": {"axes": [{"min": -40, "max": 40, "points": 512}], "boundary": "periodic"},
            "state": {"type": "ho_ground", "omega": 1.0},
            "observables": [{"kind": "momentum"}],
            "actual_values": {"points": [[30.0]]}}"#,
    )
    .unwrap();
    let o = bohmlab(&["run", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("actual_values"));
}

#[test]
fn thread_count_does_not_change_report() {
    let tmp = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for threads in ["1", "2", "8"] {
        let out = tmp.path().join(format!("t{threads}"));
        let o = bohmlab(
            &["run", "free_packet_trajectories", "--threads", threads, "--out", out.to_str().unwrap()],
            tmp.path(),
        );
        assert_eq!(o.status.code(), Some(0));
        reports.push(fs::read(out.join("report.json")).unwrap());
        let meta: serde_json::Value = serde_json::from_slice(&fs::read(out.join("metadata.json")).unwrap()).unwrap();
        assert_eq!(meta["threads"].to_string(), threads);
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2]);
}

fn find_config(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/scenarios").join(format!("{name}.json"))
}
