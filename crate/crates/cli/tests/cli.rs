use std::process::{Command, Output};

fn s2aas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_s2aas")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn bundled_run_exits_zero_with_json_report() {
    let out = s2aas(&["run", "atomic_exchange"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["chain"]["confirmed_txs"], 2);
}

#[test]
fn malformed_file_exits_two_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"name\": \"bad\",\n  \"horizon_s\" 10\n}").unwrap();
    let out = s2aas(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn unknown_flag_and_missing_file_exit_two() {
    assert_eq!(s2aas(&["run", "atomic_exchange", "--bogus"]).status.code(), Some(2));
    assert_eq!(s2aas(&["run", "/no/such/scenario.json"]).status.code(), Some(2));
    assert_eq!(s2aas(&["dump-chain", "/no/such/chain.jsonl"]).status.code(), Some(2));
}

#[test]
fn failing_assertion_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fail.json");
    std::fs::write(
        &path,
        r#"{ "name": "fail", "horizon_s": 600,
             "actors": [ { "name": "a", "funds": [100] } ],
             "assertions": [ { "check": "balance", "id": "a", "expect": { "final": 99 } } ] }"#,
    )
    .unwrap();
    let out = s2aas(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAILED balance a"));
}

#[test]
fn seed_override_and_report_file() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let out = s2aas(&["run", "atomic_exchange", "--seed", "42", "--report", p.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
        assert!(out.stdout.is_empty());
    }
    let ra: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&a).unwrap()).unwrap();
    assert_eq!(ra["seed"], 42);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn chain_and_registry_dumps_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let chain = dir.path().join("chain.jsonl");
    let registry = dir.path().join("registry.json");
    let out = s2aas(&[
        "run",
        "registry_collision",
        "--report",
        dir.path().join("r.json").to_str().unwrap(),
        "--dump-chain",
        chain.to_str().unwrap(),
        "--dump-registry",
        registry.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));

    let redump = s2aas(&["dump-chain", chain.to_str().unwrap()]);
    assert_eq!(redump.status.code(), Some(0));
    assert_eq!(stdout(&redump), std::fs::read_to_string(&chain).unwrap());

    let reg = s2aas(&["dump-registry", chain.to_str().unwrap()]);
    assert_eq!(stdout(&reg).trim_end(), std::fs::read_to_string(&registry).unwrap());
    let rows: serde_json::Value = serde_json::from_str(&stdout(&reg)).unwrap();
    let names: Vec<&str> = rows.as_array().unwrap().iter().map(|r| r["name"].as_str().unwrap()).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
}

#[test]
fn list_and_run_all() {
    let list = stdout(&s2aas(&["list-scenarios"]));
    assert_eq!(list.lines().count(), 7);
    assert!(list.lines().any(|l| l.starts_with("tampered_datastore\t")));
    let all = s2aas(&["run-all"]);
    assert_eq!(all.status.code(), Some(0));
    assert_eq!(stdout(&all).lines().filter(|l| l.starts_with("PASS ")).count(), 7);
}
