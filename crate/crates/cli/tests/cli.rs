use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

const BENCH: &str = env!("CARGO_BIN_EXE_hwime-bench");
const AGENT: &str = env!("CARGO_BIN_EXE_hwime-agent");

fn bench(dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(BENCH)
        .current_dir(dir)
        .args(args)
        .output()
        .expect("run hwime-bench");
    assert!(
        out.status.success(),
        "hwime-bench {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Starts an agent on an ephemeral port and returns it with its address.
fn start_agent(dir: &Path, args: &[&str]) -> (std::process::Child, String) {
    let mut child = Command::new(AGENT)
        .current_dir(dir)
        .args(["--listen", "127.0.0.1:0", "--sessions", "1"])
        .args(args)
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn hwime-agent");
    let stderr = BufReader::new(child.stderr.take().expect("stderr"));
    let addr = stderr
        .lines()
        .map_while(Result::ok)
        .find_map(|line| line.strip_prefix("listening on ").map(str::to_owned));
    match addr {
        Some(addr) => (child, addr),
        None => {
            let status = child.wait();
            panic!("agent exited before listening: {status:?}");
        }
    }
}

#[test]
fn oracle_pipeline_scores_full_marks() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    bench(
        dir,
        &["synth", "--out", "digits.hws", "--per-class", "4", "--seed", "3"],
    );
    let listed = bench(
        dir,
        &[
            "build-set",
            "--pool",
            "digits.hws",
            "--name",
            "Digits",
            "--size",
            "20",
            "--replicas",
            "2",
            "--seed",
            "7",
            "--out",
            "sets",
        ],
    );
    let listed = String::from_utf8(listed.stdout).unwrap();
    assert_eq!(listed.lines().count(), 2);
    assert!(dir.join("sets/Digits_1.hwrl").is_file());

    bench(
        dir,
        &[
            "labels",
            "--pool",
            "digits.hws",
            "--replica",
            "sets/Digits_1.hwrl",
            "--out",
            "labels.tsv",
        ],
    );
    let (mut agent, addr) = start_agent(dir, &["--recognizer", "oracle", "--oracle-labels", "labels.tsv"]);
    let run = bench(
        dir,
        &[
            "run",
            "--pool",
            "digits.hws",
            "--replica",
            "sets/Digits_1.hwrl",
            "--agent",
            &addr,
            "--time-scale",
            "0.01",
            "--report",
            "reports",
            "--system",
            "oracle",
        ],
    );
    assert!(agent.wait().unwrap().success());
    let table = String::from_utf8(run.stdout).unwrap();
    assert!(table.contains("100.00"), "{table}");

    let summary = dir.join("reports/oracle_Digits_1/summary.json");
    let merged = bench(dir, &["report", "--merge", summary.to_str().unwrap()]);
    assert_eq!(String::from_utf8(merged.stdout).unwrap(), table);
    assert_eq!(
        std::fs::read_to_string(dir.join("reports/oracle_Digits_1/records.jsonl"))
            .unwrap()
            .lines()
            .count(),
        20
    );
}

#[test]
fn nearest_neighbor_agent_answers_every_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    bench(dir, &["synth", "--out", "train.hws", "--per-class", "3", "--seed", "1"]);
    bench(dir, &["synth", "--out", "test.hws", "--per-class", "2", "--seed", "2"]);
    let (mut agent, addr) = start_agent(
        dir,
        &["--recognizer", "nn", "--templates", "train.hws", "--log", "agent.jsonl"],
    );
    let run = bench(
        dir,
        &[
            "run",
            "--pool",
            "test.hws",
            "--size",
            "20",
            "--seed",
            "5",
            "--agent",
            &addr,
            "--time-scale",
            "0.01",
            "--report",
            "out",
        ],
    );
    assert!(agent.wait().unwrap().success());
    assert!(String::from_utf8(run.stdout).unwrap().starts_with("Adhoc"));
    let log = std::fs::read_to_string(dir.join("agent.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 20);
}

#[test]
fn run_rejects_short_result_wait() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    bench(dir, &["synth", "--out", "d.hws", "--per-class", "1"]);
    let out = Command::new(BENCH)
        .current_dir(dir)
        .args([
            "run",
            "--pool",
            "d.hws",
            "--size",
            "5",
            "--agent",
            "127.0.0.1:9",
            "--t2-ms",
            "300",
            "--report",
            "r",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("t2"));
}
