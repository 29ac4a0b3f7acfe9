//! End-to-end CLI smoke test: the full subcommand chain on a miniature
//! configuration, exercising every external interface the binary exposes.

use std::path::{Path, PathBuf};
use std::process::Command;

fn spikectl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spikectl"))
}

fn write_tiny_config(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.toml");
    let text = r#"
[run]
seed = 11

[dataset]
round0_minutes = 0.8
round1_minutes = 0.4
round2_minutes = 0.4
episode_seconds = 12.0
test_fraction = 0.26

[training.estimator]
epochs = 2
seq_len = 400
hidden = [24, 24]
batch_size = 4

[training.estimator.init]
ff_gain = 0.5
integrator_tail = 8

[training.integrator]
epochs = 2
seq_len = 400
hidden = [6]
frozen_integrators = 6
batch_size = 4

[training.controller]
epochs = 2
seq_len = 400
hidden = [20]
frozen_integrators = 6
batch_size = 4

[compose]
target_widths = [20, 18, 16]

[eval]
n_runs = 2
max_shift = 10
bench_steps = 3000
"#;
    std::fs::write(&path, text).unwrap();
    path
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn spikectl");
    let stdout = String::from_utf8_lossy(&out.stdout).to_string();
    let stderr = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(
        out.status.success(),
        "command failed ({:?}):\nstdout:\n{stdout}\nstderr:\n{stderr}",
        out.status.code()
    );
    stdout
}

#[test]
fn full_pipeline_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path());
    let run_dir = tmp.path().join("run");
    let base = |c: &mut Command| {
        c.arg("--config")
            .arg(&cfg)
            .arg("--run-dir")
            .arg(&run_dir);
    };

    let mut c = spikectl();
    base(&mut c);
    run_ok(c.args(["gen-data", "--round", "expert"]));
    assert!(run_dir.join("episodes/expert").is_dir());

    let mut c = spikectl();
    base(&mut c);
    run_ok(c.args(["gen-data", "--round", "disturbed"]));

    let mut c = spikectl();
    base(&mut c);
    run_ok(c.args(["train-est"]));
    let est = run_dir.join("checkpoints/estimator.ckpt.json");
    assert!(est.is_file());

    let mut c = spikectl();
    base(&mut c);
    run_ok(c.args(["train-integrator"]));
    let integ = run_dir.join("checkpoints/integrator.ckpt.json");
    assert!(integ.is_file());

    let mut c = spikectl();
    base(&mut c);
    run_ok(c.args([
        "train-ctl",
        "--integrator",
        integ.to_str().unwrap(),
        "--shift",
        "0",
        "--name",
        "controller-base",
    ]));
    let ctl_base = run_dir.join("checkpoints/controller-base.ckpt.json");

    // Round 1: the trained pipeline flies while the expert is logged.
    let mut c = spikectl();
    base(&mut c);
    run_ok(c.args([
        "gen-data",
        "--round",
        "snn",
        "--est",
        est.to_str().unwrap(),
        "--ctl",
        ctl_base.to_str().unwrap(),
    ]));

    let mut c = spikectl();
    base(&mut c);
    run_ok(c.args([
        "train-ctl",
        "--rounds",
        "expert,snn,disturbed",
        "--integrator",
        integ.to_str().unwrap(),
        "--name",
        "controller-full",
    ]));
    let ctl_full = run_dir.join("checkpoints/controller-full.ckpt.json");

    let mut c = spikectl();
    base(&mut c);
    run_ok(c.args([
        "merge",
        "--est",
        est.to_str().unwrap(),
        "--ctl",
        ctl_full.to_str().unwrap(),
    ]));
    let merged = run_dir.join("checkpoints/merged.ckpt.json");
    assert!(merged.is_file());

    let mut c = spikectl();
    base(&mut c);
    run_ok(c.args([
        "prune",
        "--net",
        merged.to_str().unwrap(),
        "--widths",
        "20,18,16",
    ]));
    let pruned = run_dir.join("checkpoints/pruned.ckpt.json");
    assert!(pruned.is_file());
    assert!(run_dir.join("reports/pruned.prune.json").is_file());

    let mut c = spikectl();
    base(&mut c);
    let out = run_ok(c.args(["eval", "--net", merged.to_str().unwrap(), "--shift", "6"]));
    assert!(out.contains("peak shift"), "eval output: {out}");
    assert!(run_dir.join("reports/eval-merged.ckpt.corr_vs_shift.csv").is_file());

    let mut c = spikectl();
    base(&mut c);
    run_ok(c.args(["closed-loop", "--controller", "expert", "--n-runs", "2"]));
    let mut c = spikectl();
    base(&mut c);
    run_ok(c.args([
        "closed-loop",
        "--controller",
        pruned.to_str().unwrap(),
        "--n-runs",
        "2",
    ]));

    let mut c = spikectl();
    base(&mut c);
    run_ok(c.args(["export", "--net", pruned.to_str().unwrap()]));
    let blob = run_dir.join("export/pruned.ckpt.snnx");
    assert!(blob.is_file());

    let mut c = spikectl();
    base(&mut c);
    let out = run_ok(c.args(["bench", "--export", blob.to_str().unwrap(), "--steps", "2000"]));
    assert!(out.contains("p99"), "bench output: {out}");

    let mut c = spikectl();
    base(&mut c);
    run_ok(c.args(["verify"]));

    // Tampering with an artifact must fail verification with a non-zero,
    // invariant-rejection exit code.
    let stats_dir = run_dir.join("stats");
    let some_stats = std::fs::read_dir(&stats_dir)
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let mut bytes = std::fs::read(&some_stats).unwrap();
    bytes.push(b' ');
    std::fs::write(&some_stats, bytes).unwrap();
    let mut c = spikectl();
    base(&mut c);
    let out = c.arg("verify").output().unwrap();
    assert!(!out.status.success());
    assert_eq!(out.status.code(), Some(5), "invariant-rejection exit code");
}

#[test]
fn gen_data_is_deterministic_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_tiny_config(tmp.path());
    let mut hashes = Vec::new();
    for sub in ["a", "b"] {
        let run_dir = tmp.path().join(sub);
        let mut c = spikectl();
        c.arg("--config")
            .arg(&cfg)
            .arg("--run-dir")
            .arg(&run_dir);
        run_ok(c.args(["gen-data", "--round", "expert"]));
        let manifest: serde_json::Value =
            serde_json::from_slice(&std::fs::read(run_dir.join("manifest.json")).unwrap()).unwrap();
        hashes.push(manifest["entries"].clone());
    }
    assert_eq!(hashes[0], hashes[1], "same seed must give identical episode hashes");
}

#[test]
fn config_errors_name_the_key_and_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[run]\nsede = 3\n").unwrap();
    let out = spikectl()
        .arg("--config")
        .arg(&bad)
        .arg("--run-dir")
        .arg(tmp.path().join("r"))
        .arg("verify")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert_eq!(out.status.code(), Some(2), "config error exit code");
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sede"), "error should name the unknown key: {err}");
}
