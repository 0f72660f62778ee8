use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hpf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hpf")).args(args).output().unwrap()
}

fn scenario(name: &str) -> String {
    let p: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../scenarios/{name}.json"));
    p.to_string_lossy().into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(p: &Path) -> usize {
    csv::Reader::from_path(p).unwrap().records().count()
}

#[test]
fn run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("straight");
    let o = hpf(&["run", &scenario("straight"), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let log: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("run.json")).unwrap()).unwrap();
    let steps = log["steps"].as_array().unwrap().len();
    assert_eq!(log["status"], "completed");
    for f in ["truth_leader.csv", "robot.csv", "estimates.csv"] {
        assert_eq!(csv_rows(&out.join(f)), steps, "{f}");
    }
    let spline: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("spline.json")).unwrap()).unwrap();
    assert!(spline["segments"].as_array().is_some_and(|a| !a.is_empty()));
    let metrics: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["steps"], steps);
}

#[test]
fn metrics_and_plotdata_reproduce_from_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(hpf(&["run", &scenario("s_curve"), "--out", s(&out)]).status.code(), Some(0));

    let o = hpf(&["metrics", s(&out.join("run.json"))]);
    assert_eq!(o.status.code(), Some(0));
    let printed: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let stored: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(printed, stored);

    let again = dir.path().join("plots");
    assert_eq!(hpf(&["plotdata", s(&out.join("run.json")), "--out", s(&again)]).status.code(), Some(0));
    for f in ["truth_leader.csv", "robot.csv", "estimates.csv", "spline.json"] {
        assert_eq!(std::fs::read(out.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_and_override_flags_apply() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let args = |out: &Path, seed: &str| {
        hpf(&[
            "run",
            &scenario("straight"),
            "--out",
            s(out),
            "--seed",
            seed,
            "--override",
            "control.v_nominal=0.7",
            "--override",
            "duration=12",
        ])
    };
    assert_eq!(args(&a, "5").status.code(), Some(0));
    assert_eq!(args(&b, "6").status.code(), Some(0));
    let log: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("run.json")).unwrap()).unwrap();
    assert_eq!(log["scenario"]["seed"], 5);
    assert_eq!(log["scenario"]["control"]["v_nominal"], 0.7);
    assert_eq!(log["steps"].as_array().unwrap().len(), 240);
    assert_ne!(std::fs::read(a.join("run.json")).unwrap(), std::fs::read(b.join("run.json")).unwrap());
}

#[test]
fn fault_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fault");
    let o = hpf(&["run", &scenario("straight"), "--out", s(&out), "--override", "tracker.fault_limit=1e-6"]);
    assert_eq!(o.status.code(), Some(2));
    let log: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(log["status"], "fault");
    let last = &log["steps"].as_array().unwrap().last().unwrap()["command"];
    assert_eq!((last["v"].as_f64(), last["omega"].as_f64()), (Some(0.0), Some(0.0)));
}

#[test]
fn usage_and_schema_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"name": "bad", "duration": 5.0, "dt": -0.1, "agents": []}"#).unwrap();
    let unknown = dir.path().join("unknown.json");
    std::fs::write(&unknown, r#"{"name": "u", "duration": 5.0, "speed": 2}"#).unwrap();

    let cases: Vec<Vec<&str>> = vec![
        vec![],
        vec!["run"],
        vec!["run", s(&bad)],
        vec!["frobnicate"],
        vec!["run", s(&bad), "--out", s(&out)],
        vec!["run", s(&unknown), "--out", s(&out)],
        vec!["run", "/nonexistent/scenario.json", "--out", s(&out)],
        vec!["metrics", s(&bad)],
        vec!["plotdata", "/nonexistent/run.json", "--out", s(&out)],
    ];
    for args in &cases {
        assert_eq!(hpf(args).status.code(), Some(1), "{args:?}");
    }
    let scn = scenario("straight");
    for o in ["tracker.no_such_field=1", "control.a_max=-1", "missing_equals"] {
        let r = hpf(&["run", &scn, "--out", s(&out), "--override", o]);
        assert_eq!(r.status.code(), Some(1), "{o}");
        assert!(!r.stderr.is_empty());
    }
}
