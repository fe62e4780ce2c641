use std::path::Path;
use std::process::{Command, Output};

fn mmpo(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mmpo"));
    cmd.args(args).env_remove("MMPO_OUTPUT_DIR");
    if let Some(dir) = env_out {
        cmd.env("MMPO_OUTPUT_DIR", dir);
    }
    cmd.output().expect("spawn mmpo")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn unknown_subcommand_exits_2_with_usage() {
    let out = mmpo(&["frobnicate"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn bad_config_exits_2_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"loss": {"gamma": -1}}"#).unwrap();
    let out = mmpo(&["curve", "--config", p(&cfg), "--out", p(dir.path())], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));

    std::fs::write(&cfg, r#"{"trainer": {"epochs": 3}}"#).unwrap();
    let out = mmpo(&["curve", "--config", p(&cfg)], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochs"));
}

#[test]
fn missing_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mmpo(&["train", "--train", "/definitely/not/here.jsonl", "--out", p(dir.path())], None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not/here.jsonl"));
}

#[test]
fn malformed_records_are_all_reported() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.jsonl");
    std::fs::write(
        &data,
        concat!(
            r#"{"prompt_id":"p","response_a":"a","response_b":"b","score_a":1,"score_b":0}"#,
            "\nnot json\n",
            r#"{"prompt_id":"p","response_a":"a"}"#,
            "\n"
        ),
    )
    .unwrap();
    let out = mmpo(&["train", "--train", p(&data), "--scorer", "tabular-policy", "--out", p(dir.path())], None);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("line 3"), "{err}");
}

#[test]
fn output_dir_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = mmpo(&["curve", "--gammas", "1,2", "--mmax", "1"], Some(dir.path()));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert!(csv.starts_with("gamma,margin,probability\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    // no partial files left behind
    assert!(std::fs::read_dir(dir.path()).unwrap().all(|e| !e
        .unwrap()
        .file_name()
        .to_string_lossy()
        .ends_with(".partial")));
}

#[test]
fn flags_override_preset_and_file_in_echo() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"loss": {"gamma": 0.7}, "trainer": {"lr": 0.5}}"#).unwrap();
    let data = dir.path().join("d");
    assert_eq!(mmpo(&["synth", "--prompts", "30", "--out", p(&data)], None).status.code(), Some(0));
    let run = dir.path().join("r");
    let out = mmpo(
        &[
            "train",
            "--preset",
            "judge-2b",
            "--config",
            p(&cfg),
            "--lr",
            "0.02",
            "--train",
            p(&data.join("train.jsonl")),
            "--out",
            p(&run),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let echo: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["preset"], "judge-2b");
    assert_eq!(echo["loss"]["gamma"], 0.7);
    assert_eq!(echo["loss"]["beta"], 0.01);
    assert_eq!(echo["trainer"]["lr"], 0.02);
    assert!(run.join("checkpoint.json").exists() && run.join("metrics.jsonl").exists());
}

#[test]
fn loss_and_scorer_must_agree() {
    let dir = tempfile::tempdir().unwrap();
    let out = mmpo(
        &["train", "--loss", "rm-soft", "--scorer", "log-linear-policy", "--train", "x", "--out", p(dir.path())],
        None,
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sample_and_estimate_margins() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    assert_eq!(mmpo(&["synth", "--prompts", "100", "--out", p(&data)], None).status.code(), Some(0));
    let s = dir.path().join("s");
    let out =
        mmpo(&["sample", "--data", p(&data.join("train.jsonl")), "--target", "40", "--cap", "2", "--out", p(&s)], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(s.join("sample_report.json")).unwrap()).unwrap();
    assert_eq!(report["sampled"], 40);
    assert_eq!(report["per_quartile"], serde_json::json!([10, 10, 10, 10]));

    let too_many =
        mmpo(&["sample", "--data", p(&data.join("train.jsonl")), "--target", "100000", "--out", p(&s)], None);
    assert_eq!(too_many.status.code(), Some(1));

    let m = dir.path().join("m");
    let out = mmpo(
        &[
            "estimate-margins",
            "--fit",
            p(&data.join("train.jsonl")),
            "--data",
            p(&data.join("test.jsonl")),
            "--out",
            p(&m),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(m.join("similarity_fit.json")).unwrap()).unwrap();
    // synthetic embeddings lose similarity as the reward gap grows
    assert!(fit["pearson_r"].as_f64().unwrap() < -0.8, "{fit}");
}

#[test]
fn bestof_over_synthetic_pools() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    let synth =
        mmpo(&["synth", "--prompts", "60", "--responses", "8", "--pairs-per-prompt", "4", "--out", p(&data)], None);
    assert_eq!(synth.status.code(), Some(0));
    let run = dir.path().join("r");
    let train = mmpo(
        &[
            "train",
            "--loss",
            "rm-soft",
            "--scorer",
            "linear-reward",
            "--gamma",
            "1",
            "--epochs",
            "20",
            "--lr",
            "0.05",
            "--train",
            p(&data.join("train.jsonl")),
            "--out",
            p(&run),
        ],
        None,
    );
    assert_eq!(train.status.code(), Some(0), "{}", String::from_utf8_lossy(&train.stderr));
    let b = dir.path().join("b");
    let out = mmpo(
        &[
            "bestof",
            "--checkpoint",
            p(&run.join("checkpoint.json")),
            "--candidates",
            p(&data.join("candidates.jsonl")),
            "--n",
            "1,8",
            "--out",
            p(&b),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(b.join("bestofn.csv")).unwrap();
    let q: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(q[1] > q[0], "{csv}");

    let too_big = mmpo(
        &[
            "bestof",
            "--checkpoint",
            p(&run.join("checkpoint.json")),
            "--candidates",
            p(&data.join("candidates.jsonl")),
            "--n",
            "9",
            "--out",
            p(&b),
        ],
        None,
    );
    assert_eq!(too_big.status.code(), Some(1));
}

#[test]
fn eval_output_does_not_depend_on_workers() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    assert_eq!(mmpo(&["synth", "--prompts", "80", "--out", p(&data)], None).status.code(), Some(0));
    let run = dir.path().join("r");
    let train = mmpo(
        &["train", "--train", p(&data.join("train.jsonl")), "--test", p(&data.join("test.jsonl")), "--out", p(&run)],
        None,
    );
    assert_eq!(train.status.code(), Some(0), "{}", String::from_utf8_lossy(&train.stderr));
    let reports: Vec<String> = ["1", "3"]
        .iter()
        .map(|w| {
            let e = dir.path().join(format!("e{w}"));
            let out = mmpo(
                &[
                    "eval",
                    "--checkpoint",
                    p(&run.join("checkpoint.json")),
                    "--data",
                    p(&data.join("test.jsonl")),
                    "--workers",
                    w,
                    "--out",
                    p(&e),
                ],
                None,
            );
            assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
            std::fs::read_to_string(e.join("report.json")).unwrap()
        })
        .collect();
    assert_eq!(reports[0], reports[1]);
}
