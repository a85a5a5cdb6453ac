mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use catlab::bankio::write_bank;
use catlab::sessionlog::read_log;
use common::{content_bank, MockServer, Reply};

fn catlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_catlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes an 80-item content bank and returns its path.
fn setup(dir: &Path) -> std::path::PathBuf {
    let bank = dir.join("bank.csv");
    write_bank(&bank, &content_bank(80)).unwrap();
    bank
}

fn write_script(path: &Path, ids: &[String]) {
    let mut text = String::from("item_id,score\n");
    for (i, id) in ids.iter().enumerate() {
        text.push_str(&format!("{id},{}\n", (i * 7 % 3 != 0) as u8));
    }
    fs::write(path, text).unwrap();
}

fn run_args<'a>(bank: &'a str, spec: &'a str) -> Vec<&'a str> {
    vec![
        "run",
        "--bank",
        bank,
        "--respondent",
        spec,
        "--rule",
        "length:25",
        "--seed",
        "6",
        "--name",
        "m",
    ]
}

#[test]
fn interrupted_scripted_session_resumes_to_the_same_log() {
    let dir = tempfile::tempdir().unwrap();
    let bank = setup(dir.path());
    let ids: Vec<String> = (0..80).map(|i| format!("q{i:03}")).collect();
    let full_script = dir.path().join("full.csv");
    write_script(&full_script, &ids);
    let full_spec = format!("script:{}", s(&full_script));

    let reference = dir.path().join("reference.jsonl");
    let mut args = run_args(s(&bank), &full_spec);
    args.extend(["--log", s(&reference)]);
    let uninterrupted = catlab(&args);
    assert!(uninterrupted.status.success());
    let ref_log = read_log(&reference).unwrap();
    assert_eq!(ref_log.items.len(), 25);

    // a script that knows only the first 10 administered items fails on the 11th
    let first: Vec<String> = ref_log.items[..10].iter().map(|it| it.item_id.clone()).collect();
    let partial_script = dir.path().join("partial.csv");
    let mut text = String::from("item_id,score\n");
    for it in &ref_log.items[..10] {
        text.push_str(&format!("{},{}\n", it.item_id, it.score));
    }
    fs::write(&partial_script, text).unwrap();
    assert_eq!(first.len(), 10);

    let log = dir.path().join("session.jsonl");
    let partial_spec = format!("script:{}", s(&partial_script));
    let mut args = run_args(s(&bank), &partial_spec);
    args.extend(["--log", s(&log)]);
    let failed = catlab(&args);
    assert_eq!(failed.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&failed.stderr);
    assert!(stderr.contains("--resume"), "{stderr}");
    let mid = read_log(&log).unwrap();
    assert_eq!(mid.items.len(), 10);
    assert!(mid.footer.is_none());

    // tear the last line as a crash mid-write would
    let mut bytes = fs::read(&log).unwrap();
    bytes.extend_from_slice(b"{\"kind\":\"item\",\"seq\":11,\"item_");
    fs::write(&log, &bytes).unwrap();

    let resumed = catlab(&[
        "run",
        "--bank",
        s(&bank),
        "--respondent",
        &full_spec,
        "--name",
        "m",
        "--resume",
        s(&log),
    ]);
    assert!(resumed.status.success(), "{}", String::from_utf8_lossy(&resumed.stderr));
    assert_eq!(fs::read(&log).unwrap(), fs::read(&reference).unwrap());
    assert_eq!(resumed.stdout, uninterrupted.stdout);
}

#[test]
fn resume_into_a_new_log_copies_the_recorded_items() {
    let dir = tempfile::tempdir().unwrap();
    let bank = setup(dir.path());
    let ids: Vec<String> = (0..80).map(|i| format!("q{i:03}")).collect();
    let script = dir.path().join("s.csv");
    write_script(&script, &ids);
    let spec = format!("script:{}", s(&script));
    let reference = dir.path().join("ref.jsonl");
    let mut args = run_args(s(&bank), &spec);
    args.extend(["--log", s(&reference)]);
    assert!(catlab(&args).status.success());

    // keep the header and 5 items
    let text = fs::read_to_string(&reference).unwrap();
    let cut: String = text.lines().take(6).map(|l| format!("{l}\n")).collect();
    let old = dir.path().join("old.jsonl");
    fs::write(&old, cut).unwrap();
    let new = dir.path().join("new.jsonl");
    let out = catlab(&[
        "run",
        "--bank",
        s(&bank),
        "--respondent",
        &spec,
        "--name",
        "m",
        "--resume",
        s(&old),
        "--log",
        s(&new),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(&new).unwrap(), fs::read(&reference).unwrap());
}

#[test]
fn resume_against_another_bank_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let bank = setup(dir.path());
    let log = dir.path().join("l.jsonl");
    let out = catlab(&[
        "run",
        "--bank",
        s(&bank),
        "--respondent",
        "sim:0",
        "--rule",
        "length:5",
        "--log",
        s(&log),
    ]);
    assert!(out.status.success());
    let other = dir.path().join("other.csv");
    write_bank(&other, &content_bank(81)).unwrap();
    let out = catlab(&["run", "--bank", s(&other), "--respondent", "sim:0", "--resume", s(&log)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("different bank"));
}

#[test]
fn llm_session_resumes_without_re_asking() {
    let dir = tempfile::tempdir().unwrap();
    let bank = setup(dir.path());
    let healthy = Arc::new(AtomicBool::new(true));
    let flag = Arc::clone(&healthy);
    let server = MockServer::start(move |req, i| {
        if !flag.load(Ordering::SeqCst) || i >= 8 {
            flag.store(false, Ordering::SeqCst);
            return Reply::status(500, "down");
        }
        let prompt = req.json()["messages"][0]["content"].as_str().unwrap().len();
        Reply::chat(["A", "B", "C", "D", "E"][prompt % 5], 90, 1)
    });
    let log = dir.path().join("llm.jsonl");
    let base = [
        "run",
        "--bank",
        s(&bank),
        "--respondent",
        "llm",
        "--model",
        "mock",
        "--max-retries",
        "1",
        "--retry-backoff",
        "0.001",
        "--endpoint",
        &server.base_url,
    ];
    let mut args = base.to_vec();
    args.extend(["--rule", "length:20", "--seed", "2", "--log", s(&log)]);
    let failed = catlab(&args);
    assert_eq!(failed.status.code(), Some(1));
    assert_eq!(read_log(&log).unwrap().items.len(), 8);
    let before = server.requests().len();

    let server2 = MockServer::start(|req, _| {
        let prompt = req.json()["messages"][0]["content"].as_str().unwrap().len();
        Reply::chat(["A", "B", "C", "D", "E"][prompt % 5], 90, 1)
    });
    let mut args: Vec<&str> = base[..base.len() - 1].to_vec();
    args.extend([server2.base_url.as_str(), "--resume", s(&log)]);
    let resumed = catlab(&args);
    assert!(resumed.status.success(), "{}", String::from_utf8_lossy(&resumed.stderr));
    // only the 12 outstanding items hit the new endpoint
    assert_eq!(server2.requests().len(), 12);
    assert!(before >= 9);
    let done = read_log(&log).unwrap();
    assert_eq!(done.items.len(), 20);
    let footer = done.footer.unwrap();
    let tokens: u64 = done.items.iter().map(|i| i.tokens_prompt + i.tokens_completion).sum();
    assert_eq!(footer.summary.tokens, tokens);
    assert_eq!(footer.summary.length, 20);
}
