use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn maskshare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maskshare")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn size_report_for_thirty_agents() {
    let o = maskshare(&["size-report", "--agents", "10,10,10", "--clusters", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("strategy,params,relative_size\n"));
    for (name, rel) in [("NoPS", "30"), ("SePS", "3"), ("FuPS", "1"), ("AdaPS", "1")] {
        let row = text.lines().find(|l| l.starts_with(&format!("{name},"))).unwrap();
        assert!(row.ends_with(&format!(",{rel}")), "{row}");
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let o = maskshare(&["size-report", "--config", path.to_str().unwrap()]);
        assert!(o.status.success(), "{}: {}", path.display(), String::from_utf8_lossy(&o.stderr));
        seen += 1;
    }
    assert!(seen >= 3);
}

#[test]
fn tiny_training_run_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = maskshare(&[
        "train", "--agents", "1,1", "--strategy", "FuPS,NoPS", "--seeds", "0", "--steps", "200", "--out", out,
        "--set", "hidden=8", "--set", "num_envs=2", "--set", "eval_interval=100", "--set", "eval_episodes=1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("\nNoPS,1,"));
    assert!(dir.path().join("report.csv").exists());
    assert!(dir.path().join("nops/seed_0/metrics.csv").exists());

    let o = maskshare(&[
        "evaluate", "--agents", "1,1", "--strategy", "NoPS", "--seeds", "0", "--out", out, "--set", "hidden=8", "--episodes", "2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("strategy,seed,mean_return\nNoPS,0,"));
}

#[test]
fn errors_name_their_stage() {
    let o = maskshare(&["size-report", "--set", "lambda=2"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("config"));

    let o = maskshare(&["size-report", "--set", "colour=blue"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}
