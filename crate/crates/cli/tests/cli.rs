use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_cocoa-abm");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_writes_day_series() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("run.csv");
    let log = dir.path().join("contacts.csv");
    ok(&[
        "simulate",
        "--seed",
        "4",
        "--beta",
        "0.0125",
        "--app",
        "60,40,100",
        "--out",
        p(&csv),
        "--contact-log",
        p(&log),
    ]);
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "seed,p1,p2,p3,day,S,E,I,R,D,n_ip,new_infections,notifications_issued,hospitalized"
    );
    assert_eq!(lines.count(), 45);
    assert!(fs::read_to_string(&log)
        .unwrap()
        .starts_with("day,step,infector_id,other_id,notified\n"));

    let stdout = ok(&["simulate", "--seed", "4", "--beta", "0.0125", "--app", "60,40,100"]).stdout;
    assert_eq!(String::from_utf8(stdout).unwrap(), text);
}

#[test]
fn bad_config_path_fails_with_one_line() {
    let out = run(&["simulate", "--config", "/nonexistent/config.json"]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: loading config /nonexistent/config.json"));
}

#[test]
fn invalid_values_are_rejected() {
    assert!(!run(&["simulate", "--beta", "150"]).status.success());
    assert!(!run(&["simulate", "--app", "50,50"]).status.success());
    assert!(!run(&["sweep", "--seeds", "9..2", "--out", "/tmp/never"])
        .status
        .success());
}

#[test]
fn sweep_analyze_render_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let mut file = cocoa_abm::ConfigFile::default();
    file.max_days = 15;
    fs::write(&cfg, file.to_json_pretty()).unwrap();
    let results = dir.path().join("results");
    let analysis = dir.path().join("analysis");
    let figures = dir.path().join("figures");

    let sweep = [
        "sweep",
        "--config",
        p(&cfg),
        "--beta",
        "0.0125",
        "--seeds",
        "1..3",
        "--grid-p1",
        "0,100",
        "--grid-p2",
        "0,100",
        "--grid-p3",
        "0,100",
        "--out",
        p(&results),
    ];
    let out = Command::new(BIN)
        .args(sweep)
        .env("COCOA_ABM_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("on 2 threads"));

    // The flag override is what gets recorded.
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(results.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["beta"], serde_json::json!(0.000125));
    assert_eq!(manifest["config"]["max_days"], serde_json::json!(15));

    // Second invocation has nothing left to do.
    let again = ok(&sweep);
    assert!(String::from_utf8_lossy(&again.stderr).contains("0 runs executed, 24 already present"));

    ok(&["analyze", "--results", p(&results), "--out", p(&analysis)]);
    for name in [
        "summary.csv",
        "w.csv",
        "manifest.json",
        "heatmap_p3_0.csv",
        "heatmap_p3_100.csv",
    ] {
        assert!(analysis.join(name).exists(), "{name}");
    }
    let summary = fs::read_to_string(analysis.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 9);
    assert!(summary.starts_with("p1,p2,p3,mean_total_infected,std_total_infected,mean_w,label,n_seeds\n"));

    ok(&["render", "--summary", p(&analysis), "--out", p(&figures)]);
    let first = fs::read(figures.join("heatmap_p3_100.svg")).unwrap();
    assert!(figures.join("w_p1_100.svg").exists());
    ok(&["render", "--summary", p(&analysis), "--out", p(&figures)]);
    assert_eq!(fs::read(figures.join("heatmap_p3_100.svg")).unwrap(), first);
}

#[test]
fn analyze_reports_missing_runs() {
    let dir = tempfile::tempdir().unwrap();
    let results = dir.path().join("results");
    let mut file = cocoa_abm::ConfigFile::default();
    file.max_days = 5;
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, file.to_json_pretty()).unwrap();
    ok(&[
        "sweep",
        "--config",
        p(&cfg),
        "--seeds",
        "1..2",
        "--grid-p1",
        "0,50",
        "--grid-p2",
        "0",
        "--grid-p3",
        "0",
        "--out",
        p(&results),
    ]);
    fs::remove_file(results.join("runs/p1_0.5000_p2_0.0000_p3_0.0000.csv")).unwrap();
    let out = run(&["analyze", "--results", p(&results), "--out", p(&dir.path().join("a"))]);
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("2 of 4 runs missing"), "{err}");
    assert!(err.contains("(0.5, 0, 0) seed 1"), "{err}");
}

#[test]
fn calibrate_reports_unreachable_band() {
    let out = run(&["calibrate", "--seeds", "1..2", "--range", "0,0", "--band", "5,10"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unreachable"));
}
