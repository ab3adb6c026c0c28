use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fogsched(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fogsched")).args(args).env("FOGSCHED_OUT", out).output().unwrap()
}

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.toml");
    fs::write(
        &p,
        "updates = 3\ncalibration_decisions = 32\n[ppo]\nhorizon = 8\nepochs = 2\n[nsga2]\npopulation = 10\ngenerations = 3\n[eval]\nblocks = 2\n",
    )
    .unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn train_then_eval_writes_run_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = fogsched(&["train", "--config", &cfg, "--seed", "2", "--algo", "qlearning"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("qlearning/seed-2");
    for f in ["metrics.csv", "timing.csv", "episodes.jsonl", "checkpoint.txt"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let metrics = fs::read_to_string(run.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 4);
    let ck = run.join("checkpoint.txt");
    let o = fogsched(&["eval", "--config", &cfg, "--seed", "2", "--checkpoint", ck.to_str().unwrap()], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(run.join("eval_metrics.csv").exists());
}

#[test]
fn compare_and_overhead_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = fogsched(&["compare", "--config", &cfg, "--seeds", "1,2", "--algo", "ppo,nsga2", "--objective", "lb"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(dir.path().join("compare.csv")).unwrap().lines().count(), 5);
    let o = fogsched(&["overhead", "--config", &cfg, "--rounds", "30"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("overhead.csv")).unwrap();
    assert!(csv.contains("\nppo,30,") && csv.contains("\nnsga2,30,"), "{csv}");
}

#[test]
fn check_prints_json_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = fogsched(&["check", "--seed", "3"], dir.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().last().unwrap().contains("\"passed\":true"), "{text}");
}

#[test]
fn bad_input_exits_with_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[weights]\nw1 = 0.7\nw2 = 0.7\n").unwrap();
    let o = fogsched(&["train", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("C6"));
    let o = fogsched(&["train", "--algo", "sarsa"], dir.path());
    assert!(!o.status.success());
    let o = fogsched(&["overhead", "--rounds", "5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
