use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use dynres::{sim, trace_io, ScenarioConfig};

fn dynres(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynres"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

#[test]
fn run_writes_reloadable_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dynres(
        &[
            "run",
            "--horizon",
            "2000",
            "--seed",
            "5",
            "--policy",
            "wfpa-dynamic",
            "--out",
            "a",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let a = dir.path().join("a");
    let cfg = ScenarioConfig::from_toml_str(&fs::read_to_string(a.join("scenario.toml")).unwrap())
        .unwrap();
    assert_eq!((cfg.horizon, cfg.seed), (2000, 5));

    let trace = trace_io::read_trace(a.join("trace.csv"), cfg.traffic.buffer_cap).unwrap();
    sim::replay_check(&trace, &cfg).unwrap();
    let summary = trace_io::read_summary(a.join("summary.json")).unwrap();
    assert_eq!(summary, sim::summarize(&trace, &cfg).unwrap());

    // write -> read -> write is byte-identical
    let rewritten = dir.path().join("again.csv");
    trace_io::write_trace(&trace, &rewritten).unwrap();
    assert_eq!(
        fs::read(a.join("trace.csv")).unwrap(),
        fs::read(rewritten).unwrap()
    );

    // the saved scenario reproduces the run
    let out = dynres(
        &["run", "--config", "a/scenario.toml", "--out", "b"],
        dir.path(),
    );
    assert!(out.status.success());
    assert_eq!(
        fs::read(a.join("trace.csv")).unwrap(),
        fs::read(dir.path().join("b/trace.csv")).unwrap()
    );
}

#[test]
fn config_errors_exit_with_code_one() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[control]\nomega = -1.0\n").unwrap();
    let out = dynres(&["run", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("omega"));

    fs::write(dir.path().join("typo.toml"), "[control]\nomgea = 1.0\n").unwrap();
    assert_eq!(
        dynres(&["run", "--config", "typo.toml"], dir.path())
            .status
            .code(),
        Some(1)
    );
    assert!(!dir.path().join("out").exists());
}

#[test]
fn partial_sweep_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("sweep.toml"),
        "parameter = \"pmax\"\nvalues = [20.0, 60.0]\npolicies = [\"proposed\", \"cpa-static\"]\n",
    )
    .unwrap();
    let out = dynres(
        &[
            "sweep",
            "--spec",
            "sweep.toml",
            "--horizon",
            "500",
            "--out",
            "s",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    let long = fs::read_to_string(dir.path().join("s/sweep_long.csv")).unwrap();
    assert_eq!(long.lines().count(), 1 + 4);
}

#[test]
fn plotdata_fig3_covers_one_period() {
    let dir = tempfile::tempdir().unwrap();
    let out = dynres(
        &[
            "plotdata",
            "--figure",
            "fig3",
            "--window-start",
            "1000",
            "--out",
            "p",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(dir.path().join("p/fig3.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 2 + 3 * 5);
    assert!(lines.next().unwrap().starts_with("1000,"));
    assert_eq!(text.lines().count(), 1 + 30_000);

    let bad = dynres(&["plotdata", "--figure", "fig9"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dynres(&["selftest"], dir.path());
    assert!(out.status.success());
    assert_eq!(
        String::from_utf8_lossy(&out.stdout)
            .lines()
            .filter(|l| l.starts_with("PASS"))
            .count(),
        6
    );
}
