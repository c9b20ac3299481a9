use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Command, Output, Stdio};

fn guestnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_guestnet"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn run_writes_a_trace_that_checks_clean() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("f4.trace");
    let t = trace.to_str().unwrap();
    let out = guestnet(&["run", "figure4", "--trace", t]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
    let report = stdout(&out);
    assert!(report.contains("g1+g3 total 650"));
    assert!(report.contains("g2 total 700"));
    let check = guestnet(&["check", t]);
    assert_eq!(check.status.code(), Some(0));
    assert_eq!(stdout(&check).lines().filter(|l| l.starts_with("PASS ")).count(), 8);
    let digest = guestnet(&["digest", t]);
    let hex = stdout(&digest).trim().to_owned();
    assert_eq!(hex.len(), 64);
    assert!(report.contains(&format!("digest {hex}")));
}

#[test]
fn seed_42_runs_are_reproducible() {
    let digest_of = |args: &[&str]| {
        let out = guestnet(args);
        assert_eq!(out.status.code(), Some(0));
        stdout(&out)
            .lines()
            .find_map(|l| l.strip_prefix("digest ").map(str::to_owned))
            .unwrap()
    };
    for name in ["figure4", "bypass", "timeout", "race-lastroom", "random-40"] {
        let a = digest_of(&["run", name, "--seed", "42"]);
        let b = digest_of(&["run", name, "--seed", "42"]);
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn a_shown_scenario_runs_like_the_bundled_one() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("copy.scenario");
    std::fs::write(&file, stdout(&guestnet(&["show", "bypass"]))).unwrap();
    let from_file = stdout(&guestnet(&["run", file.to_str().unwrap()]));
    let bundled = stdout(&guestnet(&["run", "bypass"]));
    assert_eq!(from_file, bundled);
}

#[test]
fn planted_violation_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t");
    let t = trace.to_str().unwrap();
    guestnet(&["run", "figure4", "--trace", t]);
    let text = std::fs::read_to_string(&trace).unwrap();
    let tell = text
        .lines()
        .find(|l| l.contains(r#""performative":"tell""#) && l.contains(r#""sender":"ga:g2""#))
        .unwrap();
    let dup = tell.replacen(r#""msg_id":"m"#, r#""msg_id":"d"#, 1);
    std::fs::write(&trace, format!("{text}{dup}\n")).unwrap();
    let out = guestnet(&["check", t]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("FAIL exclusivity"));
}

#[test]
fn errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let garbage = dir.path().join("g");
    std::fs::write(&garbage, "{\"event\":\"end\"}\nnot json\n").unwrap();
    let out = guestnet(&["check", garbage.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let bad = dir.path().join("bad.scenario");
    std::fs::write(
        &bad,
        r#"{"version":1,"name":"bad","seed":1,"horizon":10,
"topology":{"zones":[]},
"events":[
{"type":"submit","at":0,"user":"ghost","ref":"r","request":{"persons":1,"interval":{"arrival":"2025-07-01","departure":"2025-07-02"},"rooms":{"single":1,"double":0,"triple":0}}}
]}"#,
    )
    .unwrap();
    let out = guestnet(&["run", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 4"), "{err}");
    assert_eq!(guestnet(&["run", "missing-thing"]).status.code(), Some(2));
    assert_eq!(guestnet(&["digest", "/nonexistent/trace"]).status.code(), Some(2));
}

#[test]
fn empty_scenario_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("empty.scenario");
    std::fs::write(
        &file,
        r#"{"version":1,"name":"empty","seed":0,"horizon":10,"topology":{"zones":[]}}"#,
    )
    .unwrap();
    let out = guestnet(&["run", file.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("0 envelopes"));
}

#[test]
fn text_channel_over_stdio() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_guestnet"))
        .args(["text", "figure4", "--user", "u1", "--unit-ms", "2"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"REQ persons=2 from=2025-07-01 to=2025-07-08 rooms=0,1,0 fac=parking\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("OK "), "{text}");
    assert!(lines[1].starts_with("OFFERS ") && lines[1].ends_with(" 2"), "{text}");
    assert!(
        lines[2].contains(" 650 g1:2025-07-01..2025-07-05 g3:2025-07-05..2025-07-08"),
        "{text}"
    );
    assert!(lines[3].contains(" 700 g2:2025-07-01..2025-07-08"), "{text}");
}

#[test]
fn serve_answers_http() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_guestnet"))
        .args(["serve", "bypass", "--addr", "127.0.0.1:0", "--unit-ms", "2"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stderr = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    stderr.read_line(&mut line).unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on http://")
        .unwrap_or_else(|| panic!("{line}"))
        .to_owned();
    let mut conn = TcpStream::connect(&addr).unwrap();
    write!(
        conn,
        "GET /api/zones HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut response = String::new();
    conn.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.ends_with(r#"["z1","z2"]"#), "{response}");
}
