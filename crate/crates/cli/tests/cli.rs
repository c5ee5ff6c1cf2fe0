//! Black-box CLI tests: exit codes, file outputs, and determinism.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_ter-tsf")
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        r#"
[data.synthetic]
windows = 20
seed = 1

[pipeline]
rounds = 1
candidates_per_sample = 2
mode = "tsf_ter_r12"
backend = "toy"
seed = 7

[pipeline.window]
lookback = 24
horizons = [6]
stride = 30

[pipeline.dpo]
learning_rate = 0.3
steps_per_round = 10

[pipeline.forecaster]
patch_len = 8
stride = 8
model_dim = 8
encoder_layers = 1
attention_heads = 2
head_hidden = 16

[pipeline.train]
steps = 20
batch_size = 8
eval_every = 10
patience = 2
"#,
    )
    .unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("TER_GEN_ENDPOINT")
        .env_remove("TER_GEN_TOKEN")
        .output()
        .unwrap()
}

#[test]
fn run_produces_deterministic_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let output = run(&[
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "run",
        ]);
        assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    }
    for name in ["report.json", "metrics.csv", "rewards.csv", "pairs.jsonl"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    assert!(out_a.join("forecaster_h6.json").exists());
    assert!(out_a.join("policy_h6.json").exists());
}

#[test]
fn serialize_renders_four_section_prompt() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let output = run(&["--config", config.to_str().unwrap(), "serialize"]);
    assert!(output.status.success());
    let prompt = String::from_utf8(output.stdout).unwrap();
    assert_eq!(prompt.trim_end().split("\n\n").count(), 4);
    assert!(prompt.contains("Mean: "));
    assert!(prompt.ends_with("Making predictions based on the information above.\n"));
    let first_token = prompt.split_whitespace().next().unwrap();
    let (_, frac) = first_token.split_once('.').unwrap();
    assert_eq!(frac.len(), 4);
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let series = dir.path().join("bad.csv");
    std::fs::write(&series, "timestamp,value\n2020-01-01,1\n2020-01-02,NaN\n").unwrap();
    let texts = dir.path().join("t.jsonl");
    std::fs::write(&texts, "{\"start\":\"2020-01-01\",\"end\":\"2020-01-02\",\"body\":\"x\"}\n").unwrap();
    let output = run(&[
        "ingest",
        "--series",
        series.to_str().unwrap(),
        "--texts",
        texts.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("line 3"));
}

#[test]
fn config_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(
        &config,
        "[data.synthetic]\nwindows = 20\n\n[pipeline]\nrounds = 0\n",
    )
    .unwrap();
    let output = run(&["--config", config.to_str().unwrap(), "run"]);
    assert_eq!(output.status.code(), Some(1));

    // Remote backend without TER_GEN_ENDPOINT is a config error too.
    let good = write_config(dir.path());
    let output = run(&[
        "--config",
        good.to_str().unwrap(),
        "--backend",
        "remote",
        "generate",
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("TER_GEN_ENDPOINT"));
}

#[test]
fn backend_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let output = Command::new(bin())
        .args(["--config", config.to_str().unwrap(), "--backend", "remote", "generate"])
        .env("TER_GEN_ENDPOINT", "http://127.0.0.1:1/generate")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn score_without_checkpoint_requires_relevance_only() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let candidates = dir.path().join("cands.jsonl");
    std::fs::write(&candidates, "{\"body\":\"a sharp peak\"}\n").unwrap();
    // Default w1 = 1.0 needs a checkpoint.
    let output = run(&[
        "--config",
        config.to_str().unwrap(),
        "score",
        "--candidates",
        candidates.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
}
