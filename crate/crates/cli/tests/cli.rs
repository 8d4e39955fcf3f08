use std::path::Path;
use std::process::{Command, Output};

use wavetune::policy::{encode_policy, BehaviorPolicy, Dense, PolicyNet};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavetune")).args(args).output().expect("spawn wavetune")
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn reference_suite(dir: &Path) -> std::path::PathBuf {
    let out = dir.join("ref.json");
    assert_eq!(code(&["gen-suite", "--preset", "reference", "--out", s(&out)]), 0);
    out
}

#[test]
fn gen_suite_is_deterministic_and_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let a = reference_suite(dir.path());
    let b = dir.path().join("again.json");
    assert_eq!(code(&["gen-suite", "--preset", "reference", "--out", s(&b)]), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(dir.path().join("ref.json.manifest.json").exists());

    let other = dir.path().join("seed7.json");
    assert_eq!(code(&["gen-suite", "--preset", "reference", "--seed", "7", "--out", s(&other)]), 0);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&other).unwrap());
}

#[test]
fn usage_and_input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = dir.path().join("out");
    assert_eq!(code(&["eval", "--suite", s(&missing), "--policy", s(&missing), "--out-dir", s(&out)]), 2);
    assert_eq!(code(&["gen-suite", "--out", s(&out)]), 2);
    assert_eq!(code(&["frobnicate"]), 2);

    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"benchmarks": 0}"#).unwrap();
    assert_eq!(code(&["gen-suite", "--spec", s(&spec), "--out", s(&dir.path().join("empty.json"))]), 2);

    let truncated = dir.path().join("truncated.gbxp");
    let bytes = encode_policy(&BehaviorPolicy::freeze(&PolicyNet::init(1), 1, 0));
    std::fs::write(&truncated, &bytes[..bytes.len() / 2]).unwrap();
    assert_eq!(code(&["inspect", s(&truncated)]), 2);
}

#[test]
fn wrong_width_policy_is_incompatible() {
    let dir = tempfile::tempdir().unwrap();
    let suite = reference_suite(dir.path());
    let net = PolicyNet::<f32>::from_layers(vec![Dense::zeros(43, 8), Dense::zeros(8, 2)]).unwrap();
    let policy = dir.path().join("narrow.gbxp");
    std::fs::write(&policy, encode_policy(&BehaviorPolicy::freeze(&net, 1, 0))).unwrap();
    let out = dir.path().join("eval");
    assert_eq!(code(&["eval", "--suite", s(&suite), "--policy", s(&policy), "--out-dir", s(&out)]), 3);
}

#[test]
fn divergent_training_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let suite = reference_suite(dir.path());
    let config = dir.path().join("hot.json");
    std::fs::write(&config, r#"{"iterations": 1, "train": {"learning_rate": 1e38, "epochs": 5}}"#).unwrap();
    let out = dir.path().join("train");
    assert_eq!(code(&["train", "--suite", s(&suite), "--config", s(&config), "--out-dir", s(&out)]), 4);
}

#[test]
fn train_inspect_and_zero_horizon_stability() {
    let dir = tempfile::tempdir().unwrap();
    let suite = reference_suite(dir.path());
    let config = dir.path().join("short.json");
    std::fs::write(&config, r#"{"iterations": 3}"#).unwrap();
    let train = dir.path().join("train");
    assert_eq!(code(&["train", "--suite", s(&suite), "--config", s(&config), "--out-dir", s(&train)]), 0);

    let table = train.join("qtable.txt");
    let summary = String::from_utf8(run(&["inspect", s(&table)]).stdout).unwrap();
    let entries: usize = summary
        .lines()
        .find_map(|l| l.strip_prefix("entries: "))
        .expect("entries line")
        .parse()
        .unwrap();
    let lines = std::fs::read_to_string(&table).unwrap().lines().filter(|l| !l.trim().is_empty()).count();
    assert!(entries > 0 && entries <= lines);
    let logs = std::fs::read_to_string(train.join("logs.csv")).unwrap();
    assert_eq!(logs.lines().count(), 1 + 3);

    let policy = train.join("policy.gbxp");
    let summary = String::from_utf8(run(&["inspect", s(&policy)]).stdout).unwrap();
    assert!(summary.contains("layers: 44 -> 64 -> 32 -> 2"), "{summary}");

    let sweep = dir.path().join("sweep");
    let args = ["stability", "--suite", s(&suite), "--policy", s(&policy), "--horizon", "0", "--out-dir", s(&sweep)];
    assert_eq!(code(&args), 0);
    let csv = std::fs::read_to_string(sweep.join("stability.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let t = header.iter().position(|&h| h == "t").expect("t column");
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(t) == Some("0")));
    assert!(csv.lines().count() > 1);
}

#[test]
fn replay_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let suite = reference_suite(dir.path());
    let config = dir.path().join("short.json");
    std::fs::write(&config, r#"{"iterations": 2}"#).unwrap();
    let train = dir.path().join("train");
    assert_eq!(code(&["--jobs", "2", "train", "--suite", s(&suite), "--config", s(&config), "--out-dir", s(&train)]), 0);
    let again = dir.path().join("again");
    assert_eq!(code(&["replay", s(&train.join("manifest.json")), "--out-dir", s(&again)]), 0);
    for f in ["policy.gbxp", "qtable.txt", "logs.csv"] {
        assert_eq!(std::fs::read(train.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }
    assert_eq!(code(&["--jobs", "0", "inspect", s(&suite)]), 2);
}
