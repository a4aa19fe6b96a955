use std::io::Read;
use std::net::TcpStream;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use graphshot_core::experiment::read_csv;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_graphshot"))
}

#[test]
fn repeats_produce_rounds_plus_one_rows_each() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["--dataset", "sbm:n=150,classes=3", "--model", "gpn", "--sampler", "medoid", "--setting", "unbalanced"])
        .args(["--repeats", "3", "--rounds", "3", "--max-epochs", "40", "--no-timing", "--out"])
        .arg(out.path())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
    let records = read_csv(std::fs::File::open(out.path().join("records.csv")).unwrap()).unwrap();
    assert_eq!(records.len(), 3 * (3 + 1));
    assert!(out.path().join("summary.json").exists());

    let replay = tempfile::tempdir().unwrap();
    let status = bin()
        .arg("--config")
        .arg(out.path().join("config.json"))
        .arg("--out")
        .arg(replay.path())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(
        std::fs::read(out.path().join("records.csv")).unwrap(),
        std::fs::read(replay.path().join("records.csv")).unwrap()
    );
}

#[test]
fn unknown_sampler_exits_2_with_choices() {
    let out = bin().args(["--sampler", "greedy"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in ["random", "entropy", "pagerank", "medoid", "featprop"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn missing_dataset_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().args(["--dataset", "cora", "--data-dir"]).arg(dir.path()).env_remove("GRAPHSHOT_DATA").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cora"));
}

struct Kill(std::process::Child);

impl Drop for Kill {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn serve_reports_idle_state() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let _child = Kill(
        bin()
            .args(["--serve", "--port", &port.to_string()])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let start = Instant::now();
    let mut stream = loop {
        match TcpStream::connect(("127.0.0.1", port)) {
            Ok(s) => break s,
            Err(_) if start.elapsed() < Duration::from_secs(20) => std::thread::sleep(Duration::from_millis(50)),
            Err(e) => panic!("server did not start: {e}"),
        }
    };
    use std::io::Write;
    write!(stream, "GET /state HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("\"status\":\"idle\""), "{response}");
}
