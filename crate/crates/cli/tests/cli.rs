use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn forcejs(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forcejs")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn gen_analyze_report() {
    let d = tempfile::tempdir().unwrap();
    let spec = d.path().join("spec.json");
    std::fs::write(&spec, r#"{"categories": ["dom", "generic_bot"], "transforms": [], "benign": 2}"#).unwrap();
    let o = forcejs(&["gen-corpus", "--spec", "spec.json", "--seed", "3", "--out", "corpus"], d.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d.path().join("corpus/corpus.json").is_file());

    let o = forcejs(&["analyze", "corpus", "--baseline", "--out", "runs"], d.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("synthetic"));
    assert!(text.contains("return-first"));
    let runs: Vec<_> = std::fs::read_dir(d.path().join("runs")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1);
    assert!(runs[0].join("samples/return-first/log.jsonl").is_file());

    let o = forcejs(&["report", runs[0].to_str().unwrap()], d.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), text);
}

#[test]
fn analyze_single_script() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("a.js"), "if (navigator.webdriver) { eval('1'); }\n").unwrap();
    let o = forcejs(&["analyze", "a.js", "--out", "runs", "--threshold", "1"], d.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("generic_bot"));
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("bad.js"), "var = ;\n").unwrap();
    let o = forcejs(&["analyze", "bad.js", "--kind", "script", "--out", "runs"], d.path());
    assert_eq!(o.status.code(), Some(2));

    let o = forcejs(&["analyze", "missing.js", "--out", "runs"], d.path());
    assert_eq!(o.status.code(), Some(1));
    std::fs::create_dir(d.path().join("ext")).unwrap();
    let o = forcejs(&["analyze", "ext", "--kind", "extension", "--out", "runs"], d.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("manifest.json"));
}

#[test]
fn cluster_stdin() {
    let d = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_forcejs"))
        .args(["cluster", "--eps", "0.5", "--min-pts", "2", "--metric", "hamming"])
        .current_dir(d.path())
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"{\"id\":\"a\",\"bits\":[1,1,0,0]}\n{\"id\":\"b\",\"bits\":[1,1,0,1]}\n{\"id\":\"c\",\"bits\":[0,0,1,1]}\n")
        .unwrap();
    let o = child.wait_with_output().unwrap();
    assert!(o.status.success());
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["label"], 0);
    assert_eq!(lines[1]["label"], 0);
    assert!(lines[2]["label"].is_null());

    let o = forcejs(&["cluster", "--metric", "cosine"], d.path());
    assert_eq!(o.status.code(), Some(1));
}
