use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Output, Stdio};

const BIN: &str = env!("CARGO_BIN_EXE_diacritic");

fn run(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(BIN)
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_config(dir: &Path, dataset: &str, transport: &str, extra: &str) -> std::path::PathBuf {
    std::fs::write(dir.join("data.txt"), dataset).unwrap();
    let cfg = format!(
        r#"{{"dataset":"data.txt","output_dir":"out","budgets":[0,1,2],
            "optimizer":{{"population_size":8,"iterations":3}},
            "task":{{"kind":"generate","metric":"levenshtein"}},
            "adapter":{{"transport":{transport},
                        "input":{{"mode":"image","canvas_width":32,"max_canvases":2}}{extra}}}}}"#
    );
    let path = dir.join("config.json");
    std::fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn sanitize_lines_and_detect() {
    let o = run(&["sanitize"], "a\u{301}bc\ncafe\u{300}\n");
    assert!(o.status.success());
    assert_eq!(stdout(&o), "abc\ncafe\n");
    let o = run(&["sanitize", "--detect"], "a\u{300}\u{301}\nplain\n");
    assert_eq!(stdout(&o), "2\ta\u{300}\u{301}\n0\tplain\n");
    let o = run(&["sanitize", "--mode", "decompose-strip-recompose"], "\u{e9}t\u{e9}\n");
    assert_eq!(stdout(&o), "ete\n");
}

#[test]
fn chunk_prints_plan() {
    let o = run(&["chunk", "--width", "10", "uncharted backwaters of the"], "");
    assert!(o.status.success());
    let plan: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(plan["chunks"], serde_json::json!(["uncharted", "backwaters", "of the"]));
}

#[test]
fn render_ascii_and_files() {
    let o = run(&["render", "--width", "4", "Hi"], "");
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "canvas 0: \"Hi\"");
    assert_eq!(lines.len(), 1 + 14);
    assert!(lines[1..].iter().all(|l| l.len() == 32));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("img");
    let o = run(&["render", "--width", "6", "--format", "pgm", "--out", out.to_str().unwrap()], "hello world\n");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("canvas_000.pgm").exists() && out.join("canvas_001.pgm").exists());
    assert!(std::fs::read(out.join("canvas_000.pgm")).unwrap().starts_with(b"P5"));
    // files need a directory
    assert_eq!(run(&["render", "--format", "pbm", "x"], "").status.code(), Some(1));
}

#[test]
fn serve_toy_over_stdio() {
    let o = run(
        &["serve-toy", "--model", "translate"],
        "{\"id\":1,\"task\":\"generate\",\"text\":\"hello world\"}\n\nnot json\n",
    );
    assert!(o.status.success());
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["output"], "bonjour monde");
    assert!(lines[1]["error"].is_string());
}

#[test]
fn attack_report_round_trip_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a cat\nthe dog runs\n", r#"{"type":"toy","model":"ocr"}"#, "");
    let o = run(&["attack", "--config", cfg.to_str().unwrap()], "");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    let records = std::fs::read_to_string(out.join("records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 6);
    let o = run(&["report", out.to_str().unwrap(), "--write"], "");
    assert!(o.status.success());
    let table = stdout(&o);
    assert!(table.starts_with("budget,value,normalized\n0,0.000000,\n"), "{table}");
    assert_eq!(std::fs::read_to_string(out.join("report.csv")).unwrap(), table);

    // overrides
    let other = dir.path().join("other");
    let o = run(
        &["attack", "--config", cfg.to_str().unwrap(), "--budgets", "3,0", "--seed", "9", "--out", other.to_str().unwrap()],
        "",
    );
    assert!(o.status.success());
    let budgets: Vec<u64> = std::fs::read_to_string(other.join("records.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["budget"].as_u64().unwrap())
        .collect();
    assert_eq!(budgets, [0, 3, 0, 3]);
}

#[test]
fn attack_through_subprocess_model() {
    let dir = tempfile::tempdir().unwrap();
    let transport = format!(r#"{{"type":"command","argv":["{BIN}","serve-toy","--model","ocr"]}}"#);
    let cfg = write_config(dir.path(), "hello there\n", &transport, "");
    let o = run(&["attack", "--config", cfg.to_str().unwrap()], "");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let first = std::fs::read_to_string(dir.path().join("out/records.jsonl")).unwrap();

    // same results as the in-process toy
    let dir2 = tempfile::tempdir().unwrap();
    let cfg2 = write_config(dir2.path(), "hello there\n", r#"{"type":"toy","model":"ocr"}"#, "");
    assert!(run(&["attack", "--config", cfg2.to_str().unwrap()], "").status.success());
    assert_eq!(std::fs::read_to_string(dir2.path().join("out/records.jsonl")).unwrap(), first);
}

#[test]
fn attack_over_http() {
    let mut server = Command::new(BIN)
        .args(["serve-toy", "--model", "ocr", "--canvas-width", "32", "--http", "127.0.0.1:0"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut banner = String::new();
    BufReader::new(server.stderr.take().unwrap()).read_line(&mut banner).unwrap();
    let url = banner.trim().strip_prefix("listening on ").unwrap().to_owned();

    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "hello there\n", &format!(r#"{{"type":"http","url":"{url}"}}"#), "");
    let o = run(&["attack", "--config", cfg.to_str().unwrap(), "--budgets", "0,1"], "");
    server.kill().unwrap();
    let _ = server.wait();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = std::fs::read_to_string(dir.path().join("out/records.jsonl")).unwrap();
    assert!(records.lines().all(|l| l.contains("\"status\":\"ok\"")));
}

#[test]
fn exit_codes() {
    // usage
    assert_eq!(run(&["attack"], "").status.code(), Some(1));
    assert_eq!(run(&["no-such-command"], "").status.code(), Some(1));
    assert_eq!(run(&["--help"], "").status.code(), Some(0));

    // dataset error, with the line number
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{\"input\":\"ok\"}\n{\"input\": 5}\n", r#"{"type":"toy","model":"ocr"}"#, "");
    let o = run(&["attack", "--config", cfg.to_str().unwrap()], "");
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    // the model process cannot start
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "x\n", r#"{"type":"command","argv":["/nonexistent/model"]}"#, "");
    assert_eq!(run(&["attack", "--config", cfg.to_str().unwrap()], "").status.code(), Some(2));

    // the model process exits: every record fails, the campaign still finishes
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "x\ny\n", r#"{"type":"command","argv":["true"]}"#, "");
    let o = run(&["attack", "--config", cfg.to_str().unwrap()], "");
    assert_eq!(o.status.code(), Some(2));
    let records = std::fs::read_to_string(dir.path().join("out/records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 6);
    assert!(records.lines().all(|l| l.contains("\"status\":\"failed\"")));
}
