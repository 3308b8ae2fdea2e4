mod common;

use std::path::Path;
use std::process::{Command, Output};

use mcq_entropy::simulator::{ResponderScript, ScriptEntry};

use common::{fixture, toy_set};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcq-entropy"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_script(dir: &Path) -> String {
    let set = toy_set();
    let script = ResponderScript::for_questions(&set, |q| {
        let mut probs = [0.05; 5];
        probs[q.correct.index()] = 0.75;
        ScriptEntry::new(probs, 0.05)
    })
    .unwrap();
    let path = dir.join("script.jsonl");
    std::fs::write(&path, script.to_jsonl()).unwrap();
    path.display().to_string()
}

fn dataset() -> String {
    fixture("toy_mlphys.jsonl").display().to_string()
}

#[test]
fn run_rerun_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(dir.path());
    let store = dir.path().join("s.jsonl").display().to_string();
    let ds = dataset();
    let run = ["run", "--dataset", &ds, "--store", &store, "--mock-script", &script];

    let first = bin(&run);
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));
    assert!(stdout(&first).starts_with("500 new samples"));
    assert_eq!(std::fs::read_to_string(&store).unwrap().lines().count(), 500);
    assert!(Path::new(&format!("{store}.stats.csv")).exists());
    assert!(Path::new(&format!("{store}.manifest.json")).exists());

    let mut again = run.to_vec();
    again.push("--resume");
    let second = bin(&again);
    assert_eq!(code(&second), 0);
    assert!(stdout(&second).starts_with("0 new samples"));

    let out = dir.path().join("report").display().to_string();
    let report = bin(&["report", "--dataset", &ds, "--store", &store, "--out", &out, "--bins", "10"]);
    assert_eq!(code(&report), 0, "{}", String::from_utf8_lossy(&report.stderr));
    for cat in ["D", "F", "C", "S", "M"] {
        assert!(Path::new(&out).join(format!("category_{cat}.csv")).exists());
    }
    let svgs = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg"))
        .count();
    assert!(svgs >= 4);
    let hist = std::fs::read_to_string(Path::new(&out).join("entropy_hist.csv")).unwrap();
    assert_eq!(hist.lines().count(), 11);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let script = write_script(dir.path());
    let store = dir.path().join("s.jsonl").display().to_string();
    let config = dir.path().join("cfg.json");
    let body = serde_json::json!({
        "dataset": dataset(),
        "store": store,
        "mock-script": script,
        "repetitions": 2,
    });
    std::fs::write(&config, body.to_string()).unwrap();
    let cfg = config.display().to_string();

    let out = bin(&["run", "--config", &cfg]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).starts_with("50 new samples"));
    let out = bin(&["run", "--config", &cfg, "--repetitions", "3"]);
    assert!(stdout(&out).starts_with("25 new samples"));
}

#[test]
fn unreachable_endpoint_exits_incomplete() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("s.jsonl").display().to_string();
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let ds = dataset();
    let out = bin(&[
        "run", "--dataset", &ds, "--store", &store, "--endpoint", &url, "--model", "m",
        "--max-retries", "0", "--repetitions", "2",
    ]);
    assert_eq!(code(&out), 2);
    let text = stdout(&out);
    assert_eq!(text.lines().filter(|l| l.starts_with("missing ")).count(), 50);
    assert!(text.contains("missing q0001#0"));

    let report = bin(&["report", "--dataset", &ds, "--store", &store]);
    assert_eq!(code(&report), 65);
}

#[test]
fn bad_input_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken.jsonl");
    std::fs::write(&broken, "{\"question\": \"x\"}\n").unwrap();
    let out = bin(&["validate-dataset", "--dataset", &broken.display().to_string()]);
    assert_eq!(code(&out), 65);

    assert_eq!(code(&bin(&["run", "--no-such-flag"])), 64);
    assert_eq!(code(&bin(&["run", "--dataset", &dataset()])), 64);
    assert_eq!(code(&bin(&["curves", "--order", "9"])), 64);
}

#[test]
fn validate_and_parse_check() {
    let out = bin(&["validate-dataset", "--dataset", &dataset()]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("25"));
    let out = bin(&["parse-check"]);
    assert_eq!(code(&out), 0);
}

#[test]
fn curves_csv_output() {
    let out = bin(&["curves", "--order", "3", "--masses", "0.1", "--masses", "0.3", "--grid", "11"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.starts_with("order,"));
    // 0.1 is feasible from e = 0.1 (10 points), 0.3 from e = 0.3 (8 points).
    assert_eq!(text.lines().count(), 1 + 10 + 8);
}
