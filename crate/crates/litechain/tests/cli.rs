//! Black-box tests of the command-line interface: exit codes, output
//! files, and ledger verification on corrupted exports.

use std::path::Path;
use std::process::Command;

fn litechain() -> Command {
    Command::new(env!("CARGO_BIN_EXE_litechain"))
}

fn write_scenario(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("scenario.toml");
    std::fs::write(
        &path,
        r#"
seed = 21
scheme = "litechain"

[network]
devices = 10
reliability_range = [0.9, 0.99]

[data]
train_samples = 400
test_samples = 200
verify_samples = 100
blob_noise = 2.5

[fl]
learning_rate = 0.05
local_steps = 5
batch_size = 32

[protocol]
update_every = 4
reliability_floor = 0.5

[stop]
target_accuracy = 0.6
max_rounds = 12
"#,
    )
    .unwrap();
    path
}

#[test]
fn missing_config_exits_2() {
    let status = litechain()
        .args(["run", "--config", "/nonexistent/nope.toml"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));
}

#[test]
fn malformed_config_exits_2_with_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[network]\ndevices = 2\n").unwrap();
    let out = litechain()
        .args(["run", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("network.devices"), "{stderr}");
}

#[test]
fn run_writes_metrics_summary_and_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scenario(dir.path());
    let out_dir = dir.path().join("out");
    let out = litechain()
        .args([
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{:?}", out);
    assert!(out_dir.join("metrics.csv").exists());
    assert!(out_dir.join("summary.json").exists());
    assert!(out_dir.join("ledger.jsonl").exists());

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["devices"], 10);

    // The exported ledger re-verifies.
    let verify = litechain()
        .args([
            "verify-ledger",
            "--file",
            out_dir.join("ledger.jsonl").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(verify.status.code(), Some(0));
}

#[test]
fn corrupted_ledger_fails_verification_naming_the_height() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scenario(dir.path());
    let out_dir = dir.path().join("out");
    litechain()
        .args([
            "run",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    let ledger_path = out_dir.join("ledger.jsonl");
    let text = std::fs::read_to_string(&ledger_path).unwrap();

    // Flip one byte inside a numeric field of the second block.
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines.len() >= 2);
    let corrupted_line = lines[1].replacen("\"round\":", "\"round\":4", 1);
    let target_height: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
    let mut corrupted: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
    corrupted[1] = corrupted_line;
    std::fs::write(&ledger_path, corrupted.join("\n")).unwrap();

    let verify = litechain()
        .args(["verify-ledger", "--file", ledger_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(verify.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&verify.stderr);
    let height = target_height["height"].as_u64().unwrap();
    assert!(
        stderr.contains(&format!("block {height}")) || stderr.contains(&height.to_string()),
        "diagnostic must name the failing height: {stderr}"
    );
}

#[test]
fn sweep_varies_a_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_scenario(dir.path());
    let out_dir = dir.path().join("sweep");
    let out = litechain()
        .args([
            "sweep",
            "--config",
            config.to_str().unwrap(),
            "--field",
            "seed",
            "--values",
            "1,2",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{:?}", out);
    let sweep = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);
    assert!(out_dir.join("seed-1/metrics.csv").exists());
    assert!(out_dir.join("seed-2/metrics.csv").exists());
}

#[test]
fn security_report_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = litechain()
        .args([
            "security",
            "--trials",
            "3",
            "--devices",
            "8",
            "--range",
            "high",
            "--scheme",
            "flc_hash",
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{:?}", out);
    let csv = std::fs::read_to_string(dir.path().join("security.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}
