use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(rel)
}

fn labscene(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_labscene"))
        .args(args)
        .output()
        .unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(
        o.status.success(),
        "{:?}\n{}",
        o.status,
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

#[test]
fn navcheck_reports_full_reachability() {
    let o = ok(labscene(&[
        "navcheck",
        "--layout",
        arg(&fixture("layouts/goal_pairs_case.json")),
        "--protocol",
        arg(&fixture("protocols/goal_pairs_case.json")),
        "--assets",
        arg(&fixture("assets.json")),
    ]));
    assert!(stdout(&o).lines().any(|l| l == "f_reach=1"), "{}", stdout(&o));
}

#[test]
fn navcheck_fails_on_a_blocked_corridor() {
    let o = labscene(&[
        "navcheck",
        "--layout",
        arg(&fixture("layouts/blocked_corridor.json")),
        "--protocol",
        arg(&fixture("protocols/two_stop.json")),
        "--assets",
        arg(&fixture("assets.json")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("f_reach=0"));
}

#[test]
fn stats_prints_the_table() {
    let o = ok(labscene(&["stats", "--protocols", arg(&fixture("corpus"))]));
    let out = stdout(&o);
    assert!(out.starts_with("Category"));
    assert!(out.contains("Steps           10.23      3     18     4.52"), "{out}");
    assert_eq!(out.lines().count(), 5);
}

#[test]
fn pipeline_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    ok(labscene(&[
        "pipeline",
        "--protocol",
        arg(&fixture("protocols/deprotection_tfa.json")),
        "--assets",
        arg(&fixture("assets.json")),
        "--out",
        arg(&out),
    ]));
    for name in labscene_core::pipeline::OUTPUT_FILES {
        assert!(out.join(name).is_file(), "{name}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let overall = report["overall"].as_f64().unwrap();
    assert!((0.0..=100.0).contains(&overall));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = labscene(&["teleport"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn missing_file_is_an_operational_error() {
    let o = labscene(&["validate-assets", "--assets", "/nonexistent/assets.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_protocol_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut p: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fixture("protocols/two_stop.json")).unwrap()).unwrap();
    p["steps"][0]["assets_used"] = serde_json::json!(["PhlogistonCondenser"]);
    let path = dir.path().join("bad.json");
    fs::write(&path, p.to_string()).unwrap();
    let o = labscene(&[
        "validate-protocol",
        "--protocol",
        arg(&path),
        "--assets",
        arg(&fixture("assets.json")),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn validate_commands_accept_the_fixtures() {
    ok(labscene(&["validate-assets", "--assets", arg(&fixture("assets.json"))]));
    ok(labscene(&[
        "validate-protocol",
        "--protocol",
        arg(&fixture("protocols/deprotection_tfa.json")),
        "--assets",
        arg(&fixture("assets.json")),
    ]));
}

#[test]
fn staged_run_matches_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let protocol = fixture("protocols/deprotection_tfa.json");
    let assets = fixture("assets.json");
    let common = ["--protocol", arg(&protocol), "--assets", arg(&assets), "--seed", "3"];
    let with = |head: &[&str], tail: &[&str]| {
        let mut v: Vec<&str> = head.to_vec();
        v.extend(common);
        v.extend(tail);
        ok(labscene(&v));
    };
    let (init, opt, refined, report) = (
        d.join("init.json"),
        d.join("opt.json"),
        d.join("ref.json"),
        d.join("r.json"),
    );
    with(&["generate", "--out", arg(&init)], &[]);
    with(&["optimize", "--layout", arg(&init), "--out", arg(&opt)], &[]);
    with(&["refine", "--layout", arg(&opt), "--out", arg(&refined)], &[]);
    with(&["evaluate", "--layout", arg(&refined), "--out", arg(&report)], &[]);
    let full = d.join("full");
    with(&["pipeline", "--out", arg(&full)], &[]);
    assert_eq!(
        fs::read_to_string(&report).unwrap(),
        fs::read_to_string(full.join("report.json")).unwrap()
    );
    assert_eq!(
        fs::read_to_string(&refined).unwrap(),
        fs::read_to_string(full.join("layout.json")).unwrap()
    );
}

#[test]
fn batch_evaluate_is_thread_count_independent() {
    let dir = tempfile::tempdir().unwrap();
    let layouts = ["cluttered_bench", "cluttered_bench"].map(|n| fixture(&format!("layouts/{n}.json")));
    let run = |jobs: &str, name: &str| {
        let csv = dir.path().join(name);
        ok(labscene(&[
            "--jobs",
            jobs,
            "evaluate",
            "--layout",
            arg(&layouts[0]),
            arg(&layouts[1]),
            "--protocol",
            arg(&fixture("protocols/hotplate_ethanol.json")),
            "--assets",
            arg(&fixture("assets.json")),
            "--csv",
            arg(&csv),
        ]));
        fs::read_to_string(csv).unwrap()
    };
    let one = run("1", "a.csv");
    assert_eq!(one, run("4", "b.csv"));
    assert_eq!(one.lines().count(), 3);
}

#[test]
fn render_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let draw = |name: &str| {
        let out = dir.path().join(name);
        ok(labscene(&[
            "render",
            "--layout",
            arg(&fixture("layouts/goal_pairs_case.json")),
            "--assets",
            arg(&fixture("assets.json")),
            "--protocol",
            arg(&fixture("protocols/goal_pairs_case.json")),
            "--grid",
            "--out",
            arg(&out),
        ]));
        fs::read(out).unwrap()
    };
    let a = draw("a.svg");
    assert_eq!(a, draw("b.svg"));
    assert!(String::from_utf8_lossy(&a).starts_with("<svg"));
}
