//! End-to-end tests of the `lapmatch` binary: the synth/match/eval
//! round trip, byte-level determinism, and the documented exit codes.

use std::path::Path;
use std::process::Command;

fn lapmatch() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lapmatch"))
}

fn synth_chain(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let voxels = dir.join("chain.txt");
    let truth = dir.join("chain.gt");
    let status = lapmatch()
        .args(["synth", "--model", "chain", "--sampling", "1.0"])
        .arg("--out")
        .arg(&voxels)
        .arg("--truth")
        .arg(&truth)
        .status()
        .unwrap();
    assert!(status.success());
    (voxels, truth)
}

#[test]
fn self_match_round_trip_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (voxels, truth) = synth_chain(dir.path());

    let run = |csv: &Path| {
        let status = lapmatch()
            .args(["match", "--seed", "1"])
            .arg("--input-x")
            .arg(&voxels)
            .arg("--input-y")
            .arg(&voxels)
            .arg("--out")
            .arg(csv)
            .status()
            .unwrap();
        assert!(status.success());
    };
    let csv_a = dir.path().join("a.csv");
    let csv_b = dir.path().join("b.csv");
    run(&csv_a);
    run(&csv_b);
    assert_eq!(
        std::fs::read(&csv_a).unwrap(),
        std::fs::read(&csv_b).unwrap(),
        "identical inputs and seed must give byte-identical output"
    );

    let output = lapmatch()
        .arg("eval")
        .arg("--records")
        .arg(&csv_a)
        .arg("--voxels-x")
        .arg(&voxels)
        .arg("--voxels-y")
        .arg(&voxels)
        .arg("--truth-x")
        .arg(&truth)
        .arg("--truth-y")
        .arg(&truth)
        .output()
        .unwrap();
    assert!(output.status.success());
    let metrics: serde_json::Value =
        serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(metrics["accuracy"], 1.0);
    assert_eq!(metrics["outliers"], 0);
}

#[test]
fn missing_input_exits_2() {
    let status = lapmatch()
        .args([
            "embed",
            "--input",
            "/nonexistent/voxels.txt",
            "--k",
            "5",
            "--out",
            "/dev/null",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn no_retained_pairs_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let (voxels, _) = synth_chain(dir.path());
    let config = dir.path().join("strict.cfg");
    std::fs::write(&config, "retain_threshold = -1.0\n").unwrap();
    let status = lapmatch()
        .arg("--config")
        .arg(&config)
        .arg("match")
        .arg("--input-x")
        .arg(&voxels)
        .arg("--input-y")
        .arg(&voxels)
        .arg("--out")
        .arg(dir.path().join("m.csv"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(4));
}

#[test]
fn bad_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.cfg");
    std::fs::write(&config, "no_such_key = 1\n").unwrap();
    let status = lapmatch()
        .arg("--config")
        .arg(&config)
        .args(["synth", "--model", "chain"])
        .arg("--out")
        .arg(dir.path().join("v.txt"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
