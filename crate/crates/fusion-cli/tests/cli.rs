use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn fusion(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fusion"))
        .args(args)
        .env_remove("FUSION_SEED")
        .output()
        .expect("run fusion")
}

fn model(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../models")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn validate_reports_alignment_through_the_exit_code() {
    let ok = fusion(&["validate", &model("ub-full.json")]);
    assert_eq!(ok.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&stdout(&ok)).unwrap();
    assert_eq!(report["aligned"], true);

    let bad = fusion(&["validate", &model("ub-misaligned.json"), "--strong"]);
    assert_eq!(bad.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_str(&stdout(&bad)).unwrap();
    assert_eq!(report["aligned"], false);
}

#[test]
fn malformed_input_exits_64() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    fs::write(&path, "{\"ideal\": ").unwrap();
    let out = fusion(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(64));
    assert!(!out.stderr.is_empty());

    assert_eq!(fusion(&["no-such-command"]).status.code(), Some(64));
    assert_eq!(fusion(&["validate", "/nonexistent/model.json"]).status.code(), Some(64));
    assert_eq!(fusion(&["--help"]).status.code(), Some(0));
}

#[test]
fn figure_writes_one_row_per_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("are.csv");
    let out = fusion(&["figure", "--dgp", "appendix-c", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "p_s1,var_iiia,var_ii,var_iiib,are_ii,are_iiib");
    assert_eq!(lines.len(), 20);
    for line in &lines[1..] {
        let values: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(values.len(), 6);
        assert!(values[4] >= 1.0 && values[5] >= 1.0);
    }
    // Nothing but the target file is left behind.
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn simulate_is_reproducible_and_honours_fusion_seed() {
    let run = |seed: &str, env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_fusion"));
        cmd.args([
            "simulate",
            "--framework",
            "transport-iiia",
            "--dgp",
            "appendix-c",
            "--n",
            "200",
            "--reps",
            "100",
            "--seed",
            seed,
            "--threads",
            "2",
        ]);
        cmd.env_remove("FUSION_SEED");
        if let Some(e) = env {
            cmd.env("FUSION_SEED", e);
        }
        let out = cmd.output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        stdout(&out)
    };
    let a = run("7", None);
    assert_eq!(a, run("7", None));
    assert_ne!(a, run("8", None));
    assert_eq!(run("8", Some("7")), a);
    let header = a.lines().next().unwrap();
    assert!(header.starts_with("n,reps,failures,truth,mean_estimate"));
    assert_eq!(header.split(',').count(), 16);
}

#[test]
fn decompose_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let psi = dir.path().join("psi.json");
    fs::write(&psi, "[1,0,0,0,0,0,0,0,0]").unwrap();
    let out = fusion(&["decompose", &model("ub-full.json"), "--psi", psi.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["status"], "FAIL");

    let ok = fusion(&[
        "decompose",
        &model("ub-full.json"),
        "--psi",
        &model("ub-target-if.json"),
    ]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).starts_with("cell,m1_1,m1_2,m2_1,m2_2"));
}

#[test]
fn framework_identification_matches_target() {
    let out = fusion(&["framework", "ub-full", &model("ub-full.json"), "--compute", "phi"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(report["difference"].as_f64().unwrap().abs() < 1e-10);
}
