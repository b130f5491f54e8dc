use super::*;

#[test]
fn bundled_scenarios_pass() {
    for (name, _) in BUNDLED {
        let out = run(&bundled(name).unwrap(), None).unwrap();
        let failed: Vec<_> = out.report.failed_assertions().collect();
        assert!(failed.is_empty(), "{name}: {failed:#?}\nsteps: {:#?}", out.report.steps);
        assert_eq!(out.exit_code(), EXIT_PASS);
    }
}

#[test]
fn parse_error_has_position() {
    let err = parse_scenario("{\n  \"name\": \"x\",\n  \"horizon_s\": ,\n}").unwrap_err();
    let ScenarioError::Parse { line, column, .. } = err else { panic!("{err:?}") };
    assert_eq!((line, column), (3, 16));
    assert_eq!(err.exit_code(), EXIT_USAGE);
}

fn minimal(steps: &str, assertions: &str) -> String {
    format!(
        r#"{{ "name": "t", "horizon_s": 3600,
            "actors": [ {{ "name": "a", "funds": [10000] }},
                        {{ "name": "s", "funds": [10000],
                           "sensor": {{ "name": "s1", "data_type": "t", "price": 10, "source": {{ "constant": "1" }} }} }} ],
            "steps": [{steps}], "assertions": [{assertions}] }}"#
    )
}

#[test]
fn references_are_checked() {
    let cases = [
        (r#"{ "at": 0, "action": "purchase", "requester": "zed", "sensor": "s" }"#, "undeclared actor"),
        (r#"{ "at": 0, "action": "purchase", "requester": "a", "sensor": "a" }"#, "no sensor section"),
        (r#"{ "at": 0, "action": "close_channel", "channel": "c" }"#, "no earlier open_channel"),
        (
            r#"{ "at": 5, "action": "register", "actor": "s" }, { "at": 1, "action": "register", "actor": "s" }"#,
            "non-decreasing",
        ),
        (
            r#"{ "at": 0, "action": "open_channel", "requester": "a", "sensor": "s", "deposit": 1, "expiry_blocks": 1 }"#,
            "needs an id",
        ),
    ];
    for (steps, want) in cases {
        let err = parse_scenario(&minimal(steps, "")).unwrap_err();
        assert!(matches!(&err, ScenarioError::Invalid(m) if m.contains(want)), "{want}: {err}");
    }
    let err = parse_scenario(&minimal("", r#"{ "check": "channel", "expect": {} }"#)).unwrap_err();
    assert!(matches!(err, ScenarioError::Invalid(m) if m.contains("needs an id")));
    let err = parse_scenario(&minimal(
        r#"{ "at": 0, "action": "purchase", "requester": "a", "sensor": "s", "bogus": 1 }"#,
        "",
    ))
    .unwrap_err();
    assert!(matches!(err, ScenarioError::Parse { .. }), "{err:?}");
}

#[test]
fn failing_assertion_sets_exit_code() {
    let text = minimal(
        r#"{ "at": 0, "id": "p", "action": "purchase", "requester": "a", "sensor": "s" }"#,
        r#"{ "check": "chain", "expect": { "confirmed_txs": 99 } },
           { "check": "exchange", "id": "p", "expect": { "amount": { "min": 10, "max": 10 } } }"#,
    );
    let out = run(&parse_scenario(&text).unwrap(), None).unwrap();
    assert!(!out.report.assertions[0].passed);
    assert!(out.report.assertions[0].detail.contains("expected 99"));
    assert!(out.report.assertions[1].passed);
    assert_eq!(out.exit_code(), EXIT_ASSERTION_FAILED);
}

#[test]
fn same_seed_same_digest() {
    let s = bundled("atomic_exchange").unwrap();
    let a = run(&s, None).unwrap().report;
    let b = run(&s, None).unwrap().report;
    assert_eq!(a.digest, b.digest);
    assert_eq!(a.digest, Some(a.compute_digest()));
    let c = run(&s, Some(s.seed + 1)).unwrap().report;
    assert_ne!(a.trace_digest, c.trace_digest);
    assert!(c.passed);
}

#[test]
fn underpayment_is_flagged_not_served() {
    let text = minimal(
        r#"{ "at": 0, "id": "p", "action": "purchase", "requester": "a", "sensor": "s", "amount": 9 }"#,
        r#"{ "check": "exchange", "id": "p", "expect": { "outcome": "underpaid", "chain_txs": 1 } },
           { "check": "flags", "expect": { "underpaid": 1 } }"#,
    );
    let out = run(&parse_scenario(&text).unwrap(), None).unwrap();
    assert!(out.report.passed, "{:#?}", out.report.assertions);
}

#[test]
fn chain_dump_round_trips() {
    let out = run(&bundled("registry_collision").unwrap(), None).unwrap();
    let text = dump_chain(out.blocks());
    let parsed = parse_chain_dump(&text).unwrap();
    assert_eq!(parsed.as_slice(), out.blocks());
    assert_eq!(dump_chain(&parsed), text);

    let registry: serde_json::Value = serde_json::from_str(&dump_registry(&parsed)).unwrap();
    assert_eq!(registry[0]["name"], "berlin/temp/1");

    let mut lines: Vec<&str> = text.lines().collect();
    lines.swap(1, 2);
    assert!(matches!(parse_chain_dump(&lines.join("\n")), Err(ScenarioError::Parse { line: 2, .. })));
}

#[test]
fn empty_chain_dump_is_genesis_only() {
    let net = Network::new(SimConfig::default(), vec![], KeyPair::from_label("p").key_digest()).unwrap();
    let text = dump_chain(net.producer().chain.blocks());
    assert_eq!(text.lines().count(), 1);
    assert_eq!(dump_registry(&parse_chain_dump(&text).unwrap()), "[]");
    assert!(matches!(load_chain_dump("/nonexistent/chain.jsonl"), Err(ScenarioError::NoSnapshot(_))));
}
