use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rag-orchestra"));
    c.env("RUST_LOG", "error");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn fixture(case: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(case)
}

/// A tiny world and schedule so training finishes in well under a second.
const SMALL: [&str; 18] = [
    "--set", "env.entities=12",
    "--set", "env.single=4",
    "--set", "env.serial=4",
    "--set", "env.parallel=4",
    "--set", "env.eval_single=2",
    "--set", "env.eval_serial=2",
    "--set", "env.eval_parallel=2",
    "--set", "rl.batch_size=8",
    "--set", "rl.eval_interval=1",
];

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn infer_case2_prints_answer() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture("case2");
    let trace = dir.path().join("trace.jsonl");
    let o = run(
        dir.path(),
        &[
            "infer",
            "--question",
            "when did canada become fully independent from britain?",
            "--corpus",
            f.join("corpus.tsv").to_str().unwrap(),
            "--script",
            f.join("script.json").to_str().unwrap(),
            "--gold",
            "1982",
            "--trace",
            trace.to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).trim(), "1982");
    let lines = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(lines.lines().count(), 5);
    let summary: serde_json::Value = serde_json::from_str(lines.lines().last().unwrap()).unwrap();
    assert_eq!(summary["f1"], 1.0);
    assert_eq!(summary["rounds"], 1);
}

#[test]
fn infer_case1_prints_answer() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixture("case1");
    let o = run(
        dir.path(),
        &[
            "infer",
            "--question",
            "Something's Gotta Give was first performed by an actor of what heritage?",
            "--corpus",
            f.join("corpus.tsv").to_str().unwrap(),
            "--script",
            f.join("script.json").to_str().unwrap(),
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).trim(), "American");
}

#[test]
fn infer_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = run(dir.path(), &["infer", "--question", "q", "--corpus", "does/not/exist.tsv"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(!missing.stderr.is_empty());

    let f = fixture("case2");
    let corpus = f.join("corpus.tsv");
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    drop(listener);
    let remote = run(
        dir.path(),
        &[
            "--set",
            "backend.remote.retries=0",
            "infer",
            "--question",
            "q",
            "--corpus",
            corpus.to_str().unwrap(),
            "--backend",
            "remote",
            "--endpoint-url",
            &url,
        ],
    );
    assert_eq!(remote.status.code(), Some(3), "{}", String::from_utf8_lossy(&remote.stderr));

    let bad_key = run(dir.path(), &["--set", "reward.gamma=1", "dump-config"]);
    assert_eq!(bad_key.status.code(), Some(2));
}

#[test]
fn dump_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--seed", "9", "--set", "reward.alpha=0.25", "dump-config"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let path = dir.path().join("run.toml");
    std::fs::write(&path, &text).unwrap();
    let again = run(dir.path(), &["--config", path.to_str().unwrap(), "dump-config"]);
    assert_eq!(stdout(&again), text);
    let parsed: toml::Table = toml::from_str(&text).unwrap();
    assert_eq!(parsed["seed"].as_integer(), Some(9));
    assert_eq!(parsed["reward"]["alpha"].as_float(), Some(0.25));
}

#[test]
fn generate_then_train_and_eval_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = run(p, &["--seed", "4", "generate", "--out-dir", "data", "--single", "3", "--serial", "3", "--parallel", "3", "--entities", "12"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["corpus.tsv", "tasks.jsonl", "eval_tasks.jsonl"] {
        assert!(p.join("data").join(f).exists(), "{f}");
    }
    assert_eq!(std::fs::read_to_string(p.join("data/tasks.jsonl")).unwrap().lines().count(), 9);

    let data = ["--corpus", "data/corpus.tsv", "--tasks", "data/tasks.jsonl", "--eval-tasks", "data/eval_tasks.jsonl"];
    let mut args = vec!["--set", "rl.batch_size=8", "train", "--iterations", "2", "--metrics-out", "m.csv", "--weights-out", "w.bin"];
    args.extend(data);
    let o = run(p, &args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(p.join("m.csv")).unwrap();
    assert!(csv.starts_with("step,f1,mean_rounds,mean_retrievals,ds_ratio,gold_rate,wf_ag,"));
    assert!(stdout(&o).contains("mean_rounds"));

    let mut args = vec!["eval", "--weights", "w.bin"];
    args.extend(data);
    let o = run(p, &args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let o = run(p, &["train", "--corpus", "data/corpus.tsv"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(p, &["eval", "--weights", "missing.bin"]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn zero_learning_rate_writes_initial_weights() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = SMALL.to_vec();
    args.extend(["train", "--iterations", "2", "--lr", "0", "--weights-out", "w.bin", "--metrics-out", "m.csv"]);
    let o = run(dir.path(), &args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (policy, value) = rag_orchestra::weights::load(dir.path().join("w.bin")).unwrap();
    assert!(policy.weights().iter().all(|w| w.to_bits() == 0));
    assert!(value.weights.iter().all(|w| w.to_bits() == 0) && value.bias == 0.0);
}

#[test]
fn sweep_grid() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = SMALL.to_vec();
    args.extend(["sweep", "--alphas", "0,0.5", "--betas", "0", "--iterations", "1", "--metrics-out", "s.csv"]);
    let o = run(dir.path(), &args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("alpha,beta,step,"));
    let points: std::collections::BTreeSet<String> =
        lines.map(|l| l.split(',').take(2).collect::<Vec<_>>().join(",")).collect();
    assert_eq!(points.len(), 2);

    let empty = run(dir.path(), &["sweep", "--alphas", "", "--betas", "0"]);
    assert_eq!(empty.status.code(), Some(2));
}
