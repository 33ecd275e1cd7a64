use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn invkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_invkit"))
        .args(args)
        .env_remove("INVKIT_WORKERS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn inner_simulate_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("poly4.json");
    let inner = dir.path().join("inner");
    let o = invkit(&["inner", "--config", s(&cfg), "--out", s(&inner)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("inner NONEMPTY"));
    for f in ["paving.csv", "paving.json", "controller.json", "run.json"] {
        assert!(inner.join(f).exists(), "{f}");
    }
    let run = fs::read_to_string(inner.join("run.json")).unwrap();
    assert!(run.contains("\"outcome\": \"NONEMPTY\""));
    assert!(run.contains("\"certified\": true"));

    let ctl = inner.join("controller.json");
    let sim = dir.path().join("sim");
    let o = invkit(&[
        "simulate", "--config", s(&cfg), "--controller", s(&ctl), "--out", s(&sim), "--steps", "50",
        "--policy", "random", "--seed", "3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("exits=0"));
    let trace = fs::read_to_string(sim.join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("k,x1,x2,mode,in_omega"));
    assert_eq!(lines.count(), 51);

    let abs = dir.path().join("abs");
    let o = invkit(&["export-abstraction", "--config", s(&cfg), "--controller", s(&ctl), "--out", s(&abs)]);
    assert!(o.status.success());
    let csv = fs::read_to_string(abs.join("abstraction.csv")).unwrap();
    assert!(csv.starts_with("i,mode,j\n") && csv.lines().count() > 1);
}

#[test]
fn negative_initial_state_and_infeasible_start() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("poly4.json");
    let inner = dir.path().join("inner");
    assert!(invkit(&["inner", "--config", s(&cfg), "--out", s(&inner)]).status.success());
    let ctl = inner.join("controller.json");
    let o = invkit(&[
        "simulate", "--config", s(&cfg), "--controller", s(&ctl), "--out", s(&dir.path().join("a")),
        "--x0", "0.208,-1.06", "--steps", "10",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = invkit(&[
        "simulate", "--config", s(&cfg), "--controller", s(&ctl), "--out", s(&dir.path().join("b")),
        "--x0", "-5,-5",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn empty_result_and_margin() {
    let dir = tempfile::tempdir().unwrap();
    let o = invkit(&["inner", "--config", s(&config("rotation.json")), "--out", s(&dir.path().join("r"))]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("inner EMPTY"));
    assert!(!dir.path().join("r/controller.json").exists());

    let o = invkit(&[
        "margin", "--config", s(&config("lti_margin.json")), "--out", s(&dir.path().join("m")),
        "--eps0", "0.064", "--eps-min", "5e-4",
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("eps=0.032"), "{}", stdout(&o));
}

#[test]
fn epsilon_override_and_workers_give_identical_pavings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("lti.json");
    let mut outputs = Vec::new();
    for workers in ["1", "3"] {
        let out = dir.path().join(workers);
        let o = invkit(&["outer", "--config", s(&cfg), "--out", s(&out), "--epsilon", "0.05", "--workers", workers]);
        assert!(o.status.success());
        assert!(stdout(&o).contains("eps=0.05"));
        outputs.push(fs::read(out.join("paving.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn bad_inputs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = invkit(&["outer", "--config", s(&dir.path().join("nope.json"))]);
    assert_eq!(missing.status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"name":"x","dimension":1,"modes":[{"name":"m","update":["x2"]}],"omega":[[0,1]],"epsilon":0.1}"#)
        .unwrap();
    let o = invkit(&["outer", "--config", s(&bad), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("modes[0].update[0]"));

    let o = invkit(&["outer", "--config", s(&config("lti.json")), "--epsilon", "-1", "--out", s(&dir.path().join("n"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn iteration_budget_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(config("lti.json")).unwrap();
    let capped = text.replacen("\"seed\": 0", "\"seed\": 0,\n  \"max_iterations\": 1", 1);
    let path = dir.path().join("capped.json");
    fs::write(&path, capped).unwrap();
    let o = invkit(&["outer", "--config", s(&path), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("BUDGET_EXCEEDED"));
    assert!(dir.path().join("o/paving.csv").exists());
}

#[test]
fn bench_writes_a_summary_table() {
    let dir = tempfile::tempdir().unwrap();
    let configs = dir.path().join("configs");
    fs::create_dir(&configs).unwrap();
    for name in ["poly4.json", "rotation.json"] {
        fs::copy(config(name), configs.join(name)).unwrap();
    }
    let out = dir.path().join("out");
    let o = invkit(&["bench", "--configs", s(&configs), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("bench.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(table.lines().any(|l| l.starts_with("rotation,inner,EMPTY")));
    assert!(table.lines().any(|l| l.starts_with("poly4,inner,NONEMPTY")));
}
