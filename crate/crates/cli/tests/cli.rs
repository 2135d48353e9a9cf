use std::fs;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aquanomaly"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A seeded surrogate input with some gaps.
fn input(dir: &Path, rows: usize) -> PathBuf {
    let out = dir.join("synth");
    ok(&[
        "synth",
        "--out",
        p(&out),
        "--rows",
        &rows.to_string(),
        "--seed",
        "0",
        "--missing-rate",
        "0.01",
    ]);
    out.join("synth.csv")
}

#[test]
fn clean_is_idempotent_and_fills_every_gap() {
    let dir = tempfile::tempdir().unwrap();
    let raw = input(dir.path(), 2000);
    let once = dir.path().join("once");
    let twice = dir.path().join("twice");
    ok(&["clean", "--input", p(&raw), "--out", p(&once)]);
    ok(&["clean", "--input", p(&once.join("cleaned.csv")), "--out", p(&twice)]);
    let a = fs::read(once.join("cleaned.csv")).unwrap();
    assert_eq!(a, fs::read(twice.join("cleaned.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert!(!text.lines().skip(1).any(|l| l.contains(",,") || l.ends_with(',')));
}

#[test]
fn sidecar_records_config_and_hashes() {
    let dir = tempfile::tempdir().unwrap();
    let raw = input(dir.path(), 2000);
    let out = dir.path().join("mi");
    ok(&["mi", "--input", p(&raw), "--out", p(&out)]);
    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(sidecar["subcommand"], "mi");
    assert_eq!(sidecar["config_digest"].as_str().unwrap().len(), 64);
    let mi = fs::read(out.join("mi.csv")).unwrap();
    let digest: String = sha2_hex(&mi);
    assert_eq!(sidecar["artifacts"]["mi.csv"], digest.as_str());
    assert_eq!(sidecar["input_sha256"], sha2_hex(&fs::read(&raw).unwrap()).as_str());
    let text = String::from_utf8(mi).unwrap();
    assert_eq!(text.lines().count(), 10);
    assert!(text.starts_with("channel,score\n"));
}

fn sha2_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    assert_eq!(run(&["bogus"]).status.code(), Some(2));
    assert_eq!(run(&["adf", "--out", p(&out)]).status.code(), Some(2));
    assert_eq!(
        run(&["adf", "--input", "/does/not/exist.csv", "--out", p(&out)])
            .status
            .code(),
        Some(3)
    );

    let garbage = dir.path().join("garbage.csv");
    fs::write(&garbage, "Time,Tp\nyesterday,1\n").unwrap();
    assert_eq!(
        run(&["clean", "--input", p(&garbage), "--out", p(&out)]).status.code(),
        Some(3)
    );

    let raw = input(dir.path(), 600);
    assert_eq!(
        run(&["evaluate", "--input", p(&raw), "--out", p(&out), "--model", "tree"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["evaluate", "--input", p(&raw), "--out", p(&out), "--folds", "1"])
            .status
            .code(),
        Some(2)
    );

    // A constant channel makes the ADF regression singular.
    let flat = dir.path().join("flat.csv");
    let mut text = String::from("Time,Tp,Cl,pH,Redox,Leit,Trueb,Cl_2,Fm,Fm_2,EVENT\n");
    for i in 0..200 {
        text.push_str(&format!(
            "2017-08-01 {:02}:{:02}:00,1,1,1,1,1,1,1,1,1,{}\n",
            i / 60,
            i % 60,
            i % 7 == 0
        ));
    }
    fs::write(&flat, text).unwrap();
    let out = run(&["adf", "--input", p(&flat), "--out", p(&dir.path().join("flat"))]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_file_is_layered_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let raw = input(dir.path(), 3000);
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"model": "logistic", "folds": 2, "repeats": 1, "seed": 9}"#).unwrap();
    let out = dir.path().join("e");
    ok(&[
        "evaluate",
        "--config",
        p(&cfg),
        "--input",
        p(&raw),
        "--out",
        p(&out),
        "--repeats",
        "2",
    ]);
    let sidecar: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(sidecar["config"]["cv"]["k"], 2);
    assert_eq!(sidecar["config"]["cv"]["repeats"], 2);
    assert_eq!(sidecar["config"]["seed"], 9);
    assert_eq!(sidecar["config"]["models"][0]["learner"]["kind"], "logistic");
    let folds = fs::read_to_string(out.join("evaluate_folds.csv")).unwrap();
    // 4 splits and 5 metrics, plus 5 summary rows and the header.
    assert_eq!(folds.lines().count(), 1 + 20 + 5);

    fs::write(&cfg, r#"{"listen": "0.0.0.0:1"}"#).unwrap();
    let bad = run(&["evaluate", "--config", p(&cfg), "--input", p(&raw), "--out", p(&out)]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("listen"));
}

#[test]
fn train_score_and_replay_agree() {
    let dir = tempfile::tempdir().unwrap();
    let raw = input(dir.path(), 4000);
    let t = dir.path().join("t");
    ok(&[
        "train",
        "--input",
        p(&raw),
        "--out",
        p(&t),
        "--model",
        "forest",
        "--trees",
        "15",
        "--seed",
        "3",
    ]);
    let model = t.join("model.json");
    let s = dir.path().join("s");
    ok(&["score", "--input", p(&raw), "--out", p(&s), "--model-file", p(&model)]);
    let r = dir.path().join("r");
    ok(&["replay", "--input", p(&raw), "--out", p(&r), "--model-file", p(&model)]);
    let offline = fs::read_to_string(s.join("alerts.jsonl")).unwrap();
    assert!(!offline.is_empty());
    assert_eq!(offline, fs::read_to_string(r.join("alerts.jsonl")).unwrap());

    let windows = fs::read_to_string(r.join("windows.csv")).unwrap();
    let counts: Vec<usize> = windows
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    // 4000 one-minute rows close 35 windows on a 2h cadence; sizes grow by 120 until the 5d span fills.
    assert_eq!(counts.len(), 35);
    assert_eq!(counts[..4], [1, 121, 241, 361]);
    let latest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(r.join("latest_batch.json")).unwrap()).unwrap();
    assert_eq!(
        latest["series"][0]["values"].as_array().unwrap().len(),
        *counts.last().unwrap()
    );
}

#[test]
fn rfe_and_resample_eval_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let raw = input(dir.path(), 3000);
    let out = dir.path().join("rfe");
    ok(&[
        "rfe",
        "--input",
        p(&raw),
        "--out",
        p(&out),
        "--model",
        "logistic",
        "--folds",
        "2",
        "--repeats",
        "1",
    ]);
    let ranking = fs::read_to_string(out.join("rfe_ranking.csv")).unwrap();
    assert_eq!(ranking.lines().count(), 10);
    let scan = fs::read_to_string(out.join("rfe_scan.csv")).unwrap();
    assert_eq!(scan.lines().count(), 1 + 9 * 2);

    let keep = dir.path().join("keep");
    ok(&[
        "rfe",
        "--input",
        p(&raw),
        "--out",
        p(&keep),
        "--model",
        "logistic",
        "--rfe",
        "4",
    ]);
    assert!(!keep.join("rfe_scan.csv").exists());
    let selected = fs::read_to_string(keep.join("rfe_ranking.csv")).unwrap();
    assert_eq!(selected.lines().filter(|l| l.ends_with(",true")).count(), 4);

    let out = dir.path().join("res");
    ok(&[
        "resample-eval",
        "--input",
        p(&raw),
        "--out",
        p(&out),
        "--model",
        "logistic",
        "--folds",
        "2",
        "--repeats",
        "1",
    ]);
    let summary = fs::read_to_string(out.join("resample_summary.csv")).unwrap();
    let labels: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["none", "ros", "smote", "blsmote", "svmsmote", "adasyn"]);
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn http(port: u16, method: &str, path: &str, body: &str) -> (u16, String) {
    let mut s = TcpStream::connect(("127.0.0.1", port)).unwrap();
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut resp = String::new();
    s.read_to_string(&mut resp).unwrap();
    let status = resp.split_whitespace().nth(1).unwrap().parse().unwrap();
    let body = resp
        .split_once("\r\n\r\n")
        .map(|(_, b)| b.to_string())
        .unwrap_or_default();
    (status, body)
}

#[test]
fn serve_speaks_http() {
    let port = free_port();
    let addr = format!("127.0.0.1:{port}");
    let mut child = bin()
        .args(["serve", "--listen", &addr, "--every", "1h", "--period", "2h"])
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    while TcpStream::connect(&addr).is_err() {
        assert!(Instant::now() < deadline, "server did not start");
        std::thread::sleep(Duration::from_millis(50));
    }
    let result = std::panic::catch_unwind(|| {
        assert_eq!(http(port, "GET", "/batch", ""), (404, r#"{"series":[]}"#.to_string()));
        let mut body = String::new();
        for m in 0..90i64 {
            body.push_str(&format!(
                "water Tp={m},Cl=0.1 {}\n",
                1_455_494_400_000_000_000 + m * 60_000_000_000
            ));
        }
        assert_eq!(http(port, "POST", "/write?db=plant", &body).0, 204);
        let (status, doc) = http(port, "GET", "/batch", "");
        assert_eq!(status, 200);
        let doc: serde_json::Value = serde_json::from_str(&doc).unwrap();
        assert_eq!(doc["series"][0]["values"].as_array().unwrap().len(), 61);
        assert_eq!(http(port, "POST", "/write?db=plant", "water Tp=x 1").0, 400);
        assert_eq!(http(port, "PUT", "/batch", "").0, 405);
    });
    child.kill().unwrap();
    child.wait().unwrap();
    result.unwrap();
}
