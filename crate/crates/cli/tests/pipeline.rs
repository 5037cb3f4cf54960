use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

fn homonym(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_homonym"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "homonym {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    write!(s, "GET {path} HTTP/1.1\r\nhost: localhost\r\nconnection: close\r\n\r\n").ok()?;
    let mut resp = String::new();
    s.read_to_string(&mut resp).ok()?;
    Some(resp)
}

#[test]
fn synthetic_run_through_every_command() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    homonym(&["synth", "--out-dir", &p(d, "corpus"), "--persons", "400", "--homonym-pairs", "40", "--seed", "3"]);
    let pubs = p(d, "corpus/pubs.jsonl");
    let profiles = p(d, "corpus/profiles.jsonl");
    let events = p(d, "corpus/events.jsonl");

    let snap = p(d, "snap.bin");
    let out = homonym(&["ingest", "--pubs", &pubs, "--profiles", &profiles, "--out", &snap]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("0 malformed"));
    // the JSON Lines form loads to the same data
    homonym(&["ingest", "--pubs", &pubs, "--profiles", &profiles, "--out", &p(d, "snap.jsonl")]);

    let emb = p(d, "titles.vec");
    homonym(&[
        "train-embeddings", "--snapshot", &snap, "--seed", "1", "--out", &emb,
        "--dimensions", "16", "--iterations", "1", "--epochs", "2",
    ]);

    let labels = p(d, "labels.tsv");
    let out = homonym(&[
        "build-gold", "--snapshot", &snap, "--events", &events, "--t1", "2014-01-01", "--t2", "2018-01-01",
        "--out", &labels, "--split-out", &p(d, "split.json"),
    ]);
    let report = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(report.contains("prevalence"), "{report}");
    assert!(report.contains("outside"), "{report}");
    let label_text = std::fs::read_to_string(&labels).unwrap();
    assert!(label_text.lines().any(|l| l.contains("\thomonym\tsplit")));
    let truth = std::fs::read_to_string(p(d, "corpus/homonyms.txt")).unwrap();
    for line in label_text.lines().filter(|l| l.contains("\thomonym\t")) {
        let pid = line.split('\t').next().unwrap();
        assert!(truth.lines().any(|t| t == pid), "{pid} labeled homonym but not planted");
    }

    let feats = p(d, "features.jsonl");
    homonym(&[
        "vectorize", "--snapshot", &p(d, "snap.jsonl"), "--embeddings", &emb, "--groups", "BCTVY",
        "--labels", &labels, "--out", &feats,
    ]);
    let first: Value = serde_json::from_str(std::fs::read_to_string(&feats).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["groups"], "BCTVY");
    assert_eq!(first["x"].as_array().unwrap().len(), 39);

    let model_dir = p(d, "model");
    let out = homonym(&[
        "train", "--features", &feats, "--labels", &labels, "--groups", "BCTVY", "--seeds", "3",
        "--epochs", "8", "--split", &p(d, "split.json"), "--out-dir", &model_dir,
    ]);
    let table = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(table.contains("BCTVY") && table.contains('±'), "{table}");
    let results: Value = serde_json::from_str(&std::fs::read_to_string(p(d, "model/results.json")).unwrap()).unwrap();
    assert_eq!(results["runs"].as_array().unwrap().len(), 3);

    let model = p(d, "model/model.json");
    let out = homonym(&[
        "evaluate", "--model", &model, "--features", &feats, "--labels", &labels, "--split", &p(d, "split.json"),
    ]);
    let eval: Value = serde_json::from_slice(&out.stdout).unwrap();
    let auroc = eval["metrics"]["auroc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auroc));
    // seed 0 of the ensemble is the saved model, so its test metrics agree
    let seed0 = &results["runs"][0]["metrics"];
    assert!((seed0["auroc"].as_f64().unwrap() - auroc).abs() < 1e-12);
    assert!((seed0["mcc"].as_f64().unwrap() - eval["metrics"]["mcc"].as_f64().unwrap()).abs() < 1e-12);

    let store = p(d, "triage.sqlite");
    let out = homonym(&["rank", "--snapshot", &snap, "--model", &model, "--embeddings", &emb, "--store", &store]);
    let top = String::from_utf8_lossy(&out.stdout).to_string();
    let first_pid = top.split_whitespace().nth(2).unwrap().to_string();
    assert!(top.lines().next().unwrap().trim_start().starts_with("1 "));

    let out = homonym(&["cluster", "--snapshot", &snap, "--pid", &first_pid]);
    let c: Value = serde_json::from_slice(&out.stdout).unwrap();
    let sizes: Vec<u64> = c["sizes"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    assert_eq!(c["k"].as_u64().unwrap() as usize, sizes.len());
    assert!(sizes.windows(2).all(|w| w[0] >= w[1]));

    // pick a free port, then serve the store on it
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut server = Command::new(env!("CARGO_BIN_EXE_homonym"))
        .args(["serve", "--store", &store, "--port", &port.to_string()])
        .env("RUST_LOG", "warn")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let resp = loop {
        if let Some(r) = http_get(port, "/api/ranking?limit=3") {
            break r;
        }
        assert!(Instant::now() < deadline, "server did not come up");
        std::thread::sleep(Duration::from_millis(50));
    };
    let detail = http_get(port, &format!("/api/profile/{first_pid}")).unwrap_or_default();
    server.kill().ok();
    server.wait().ok();
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    let body = resp.split("\r\n\r\n").nth(1).unwrap();
    let cases: Value = serde_json::from_str(body).unwrap();
    assert_eq!(cases.as_array().unwrap().len(), 3);
    assert_eq!(cases[0]["pid"].as_str().unwrap(), first_pid);
    assert_eq!(cases[0]["status"], "open");
    assert!(detail.starts_with("HTTP/1.1 200"), "{detail}");
}

#[test]
fn bad_arguments_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_homonym"))
            .args(args)
            .output()
            .unwrap()
    };
    let out = run(&["vectorize", "--snapshot", "x", "--embeddings", "y", "--groups", "BQ", "--out", "z"]);
    assert!(!out.status.success());
    let out = run(&["ingest", "--pubs", &p(tmp.path(), "missing.jsonl"), "--out", &p(tmp.path(), "s.bin")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.jsonl"));
    let out = run(&["serve", "--store", &p(tmp.path(), "none.sqlite")]);
    assert!(!out.status.success());
}

#[test]
fn strict_ingest_rejects_malformed_records() {
    let tmp = tempfile::tempdir().unwrap();
    let pubs = tmp.path().join("pubs.jsonl");
    std::fs::write(
        &pubs,
        concat!(
            r#"{"id":"1","title":"a b","year":2000,"venue":"v","authors":[{"pid":"a","name":"A"}]}"#,
            "\n",
            r#"{"id":"2","title":"broken"#,
            "\n"
        ),
    )
    .unwrap();
    let pubs = pubs.display().to_string();
    let out_path = p(tmp.path(), "s.jsonl");
    let lenient = Command::new(env!("CARGO_BIN_EXE_homonym"))
        .args(["ingest", "--pubs", &pubs, "--out", &out_path])
        .output()
        .unwrap();
    assert!(lenient.status.success());
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("1 malformed"));
    let strict = Command::new(env!("CARGO_BIN_EXE_homonym"))
        .args(["ingest", "--pubs", &pubs, "--strict", "--out", &out_path])
        .output()
        .unwrap();
    assert!(!strict.status.success());
}
