use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tvg-anchor"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SIT_DOWN: &str = "<think>The person walks in <timestamp>8.6s to 18.5s</timestamp> \
    and sits <timestamp>11.3s to 16.2s</timestamp></think>\n<answer>11.3s to 16.2s</answer>";

#[test]
fn eval_prints_two_prediction_report() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = write(
        dir.path(),
        "pairs.jsonl",
        "{\"pred_start\":11.3,\"pred_end\":16.2,\"gt_start\":11.3,\"gt_end\":16.6}\n\
         {\"pred_start\":13.0,\"pred_end\":19.0,\"gt_start\":11.3,\"gt_end\":16.6}\n",
    );
    let out = run(&["eval", "--input", &pairs]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("mIoU    69.6"), "{text}");
    let machine = text.lines().find(|l| l.starts_with("EVAL ")).unwrap();
    let miou: f64 = machine
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("miou="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((miou - 0.696).abs() < 1e-3);
    assert!(machine.contains("r1@0.5=0.5"));
}

#[test]
fn filter_rejects_total_of_exactly_six_point_four() {
    let dir = tempfile::tempdir().unwrap();
    // Anchors (0, 5.1) and (0, 7.1), answer (0, 4.7) against (0, 10): total 6.4.
    let boundary = serde_json::json!({
        "raw_text": "<think>a <timestamp>0.0 to 5.1</timestamp> b <timestamp>0.0 to 7.1</timestamp></think>\n<answer>0.0 to 4.7</answer>",
        "gt_start": 0.0, "gt_end": 10.0, "video_id": "edge",
    });
    let good = serde_json::json!({
        "raw_text": SIT_DOWN, "gt_start": 11.3, "gt_end": 16.6, "video_id": "sitdown",
    });
    let corpus = write(dir.path(), "corpus.jsonl", &format!("{boundary}\n{good}\n"));
    let kept = dir.path().join("kept.jsonl");
    let out = run(&[
        "filter",
        "--input",
        &corpus,
        "--output",
        kept.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&kept).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.contains("sitdown"));

    let scored = run(&["score", "--input", &corpus]);
    let first: serde_json::Value =
        serde_json::from_str(stdout(&scored).lines().next().unwrap()).unwrap();
    assert_eq!(first["breakdown"]["total"], 6.4);
    assert_eq!(first["reject_reason"], "total-reward");
}

#[test]
fn export_writes_canonical_targets() {
    let dir = tempfile::tempdir().unwrap();
    let good = serde_json::json!({
        "raw_text": SIT_DOWN, "gt_start": 11.3, "gt_end": 16.6, "video_id": "sitdown", "query": "sits down",
    });
    let corpus = write(dir.path(), "corpus.jsonl", &format!("{good}\nnot json\n"));
    let sft = dir.path().join("sft.jsonl");
    let out = run(&[
        "export",
        "--input",
        &corpus,
        "--output",
        sft.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let line: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(&sft).unwrap().trim()).unwrap();
    assert_eq!(line["query"], "sits down");
    assert!(line["target_text"]
        .as_str()
        .unwrap()
        .contains("<timestamp>11.3s to 16.2s</timestamp>"));
}

#[test]
fn train_sim_with_zero_steps_writes_empty_log() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    let plot = dir.path().join("plot.tsv");
    let out = run(&[
        "train-sim",
        "--steps",
        "0",
        "--log",
        log.to_str().unwrap(),
        "--plot",
        plot.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&log).unwrap(), "");
    assert_eq!(std::fs::read_to_string(&plot).unwrap().lines().count(), 1);
}

#[test]
fn train_sim_is_deterministic_given_seed() {
    let dir = tempfile::tempdir().unwrap();
    let go = |name: &str, seed: &str| {
        let log = dir.path().join(name);
        let out = run(&[
            "train-sim",
            "--steps",
            "40",
            "--seed",
            seed,
            "--log",
            log.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        std::fs::read_to_string(log).unwrap()
    };
    let a = go("a.jsonl", "5");
    assert_eq!(a.lines().count(), 40);
    assert_eq!(a, go("b.jsonl", "5"));
    assert_ne!(a, go("c.jsonl", "6"));
}

#[test]
fn synth_round_trips_through_train_sim() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = dir.path().join("tasks.jsonl");
    let out = run(&[
        "synth",
        "-n",
        "3",
        "--seed",
        "1",
        "--output",
        tasks.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(&tasks).unwrap().lines().count(), 3);
    let log = dir.path().join("log.jsonl");
    let out = run(&[
        "train-sim",
        "--tasks",
        tasks.to_str().unwrap(),
        "--steps",
        "6",
        "--log",
        log.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(log).unwrap();
    assert!(text.contains("synth-00002"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["eval"]).status.code(), Some(1));
    assert_eq!(run(&["bogus"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let missing = dir.path().join("missing.jsonl");
    assert_eq!(
        run(&["eval", "--input", missing.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    let bad = write(
        dir.path(),
        "bad.jsonl",
        "{\"pred_start\":3,\"pred_end\":1,\"gt_start\":0,\"gt_end\":1}\n",
    );
    let out = run(&["eval", "--input", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.jsonl:1"));
    let empty = write(dir.path(), "empty.jsonl", "");
    assert_eq!(run(&["eval", "--input", &empty]).status.code(), Some(2));
    let log = dir.path().join("log.jsonl");
    let out = run(&[
        "train-sim",
        "--group-size",
        "1",
        "--log",
        log.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!log.exists());
}

#[test]
fn failed_output_leaves_no_file() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("nested/missing/out.jsonl");
    let corpus = write(dir.path(), "c.jsonl", "");
    let out = run(&[
        "filter",
        "--input",
        &corpus,
        "--output",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_path.exists());
}
