//! End-to-end checks of the `kia` binary: the full simulate → train →
//! evaluate → report pipeline on a miniature configuration, plus exit-code
//! and determinism contracts.

use std::fs;
use std::path::Path;
use std::process::Command;

fn kia() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kia"))
}

fn write_quick_config(path: &Path) {
    let config = r#"{
  "experiment": "pendulum",
  "variant": "KIA",
  "seed": 11,
  "pendulum": { "theta0": 0.8, "n_points": 400, "t_end": 40.0, "embed_dim": 8 },
  "split": [200, 120, 80],
  "model": { "latent_dim": 4, "encoder_hidden": [16] },
  "train": { "k_steps": 3, "max_epochs": 4 },
  "eval": { "horizon": 40, "n_inits": 5 }
}
"#;
    fs::write(path, config).unwrap();
}

#[test]
fn pipeline_runs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    write_quick_config(&config);

    for run in ["a", "b"] {
        let base = dir.path().join(run);
        let status = kia()
            .args(["simulate", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(base.join("data"))
            .status()
            .unwrap();
        assert!(status.success());

        let status = kia()
            .args(["train", "--config"])
            .arg(&config)
            .arg("--dataset")
            .arg(base.join("data/dataset.bin"))
            .arg("--out")
            .arg(base.join("run"))
            .status()
            .unwrap();
        assert!(status.success());

        let status = kia()
            .args(["evaluate", "--config"])
            .arg(&config)
            .arg("--checkpoint")
            .arg(base.join("run/checkpoint.bin"))
            .arg("--dataset")
            .arg(base.join("data/dataset.bin"))
            .arg("--out")
            .arg(base.join("eval"))
            .status()
            .unwrap();
        assert!(status.success());
    }

    // byte-identical artifacts across the two runs
    for file in [
        "data/dataset.bin",
        "run/checkpoint.bin",
        "run/history.csv",
        "eval/report.csv",
        "eval/summary.json",
    ] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "artifact {file} differs between identical runs");
    }

    // combine the two runs into one report
    let status = kia()
        .arg("report")
        .arg(dir.path().join("a/eval"))
        .arg(dir.path().join("b/eval"))
        .arg("--out")
        .arg(dir.path().join("combined"))
        .arg("--log-scale")
        .status()
        .unwrap();
    assert!(status.success());
    let svg = fs::read_to_string(dir.path().join("combined/errors.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    let comparison = fs::read_to_string(dir.path().join("combined/comparison.csv")).unwrap();
    assert_eq!(comparison.lines().count(), 3, "header plus two runs");
}

#[test]
fn divergence_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    // enormous learning rate forces non-finite losses
    let text = r#"{
  "experiment": "pendulum",
  "variant": "KIA",
  "seed": 1,
  "pendulum": { "theta0": 0.8, "n_points": 400, "t_end": 40.0, "embed_dim": 8 },
  "split": [200, 120, 80],
  "model": { "latent_dim": 4, "encoder_hidden": [16] },
  "train": { "k_steps": 3, "max_epochs": 10, "learning_rate": 1e200 }
}
"#;
    fs::write(&config, text).unwrap();

    let out = dir.path().join("data");
    assert!(kia()
        .args(["simulate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());

    let status = kia()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--dataset")
        .arg(out.join("dataset.bin"))
        .arg("--out")
        .arg(dir.path().join("run"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2), "divergence must use exit code 2");
}

#[test]
fn flags_override_config_and_are_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    write_quick_config(&config);
    let out = dir.path().join("data");
    let status = kia()
        .args(["simulate", "--config"])
        .arg(&config)
        .args(["--theta0", "2.4", "--seed", "99"])
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let metadata = fs::read_to_string(out.join("metadata.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&metadata).unwrap();
    assert_eq!(parsed["config"]["pendulum"]["theta0"], 2.4);
    assert_eq!(parsed["config"]["seed"], 99);
    assert_eq!(parsed["seed"], 99);
}

#[test]
fn unwritable_output_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    write_quick_config(&config);
    let blocker = dir.path().join("blocked");
    fs::write(&blocker, "not a directory").unwrap();
    let status = kia()
        .args(["simulate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(blocker.join("sub"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}
