use qnetsec_core::engine::{run, ConnState, RunOutput, SessionStatus};
use qnetsec_core::events::EVENT_LOG_COLUMNS;
use qnetsec_core::scenario::Scenario;
use qnetsec_core::state::PairOrigin;

fn chain(km: f64, demand: &str, extra: &str) -> Scenario {
    let text = format!(
        r#"{{
        "seed": 3,
        "nodes": [
            {{"id": "A", "kind": "ENode"}},
            {{"id": "R", "kind": "RNode", "hijacked": true}},
            {{"id": "B", "kind": "ENode"}}
        ],
        "links": [
            {{"id": "A-R", "a": "A", "b": "R", "length_km": {km}}},
            {{"id": "R-B", "a": "R", "b": "B", "length_km": {km}}}
        ],
        "demands": [{demand}]
        {extra}
    }}"#
    );
    Scenario::from_json(&text).unwrap()
}

const PAIRS_100: &str = r#"{"id": "ab", "src": "A", "dst": "B", "target_pairs": 100}"#;

fn csv(sc: &Scenario, out: &RunOutput) -> String {
    out.log.to_csv(&sc.topology)
}

#[test]
fn honest_two_hop_delivers_target_with_clear_ledger() {
    let sc = chain(10.0, PAIRS_100, "");
    let out = run(&sc, 1);
    let c = &out.connections[0];
    assert_eq!(c.state, ConnState::Done);
    assert_eq!(c.delivered, 100);
    assert_eq!(out.ledger.availability.delivered_pairs, 100);
    assert!(out.ledger.all_clear(), "{:?}", out.ledger);
    assert!(out.accounting.identity_holds);
    assert_eq!(out.accounting.live_at_end, 0);
    // one swap per delivered or sacrificed end-to-end pair
    let swaps = out.accounting.counters.created.get(&PairOrigin::Swap).copied().unwrap_or(0);
    assert_eq!(swaps, c.delivered + c.sacrificed);
}

#[test]
fn same_seed_gives_byte_identical_logs() {
    let sc = chain(10.0, PAIRS_100, "");
    let a = csv(&sc, &run(&sc, 9));
    let b = csv(&sc, &run(&sc, 9));
    assert_eq!(a, b);
    assert_ne!(a, csv(&sc, &run(&sc, 10)));
}

#[test]
fn event_log_rows_have_the_fixed_columns() {
    let sc = chain(10.0, PAIRS_100, r#", "attacks": [{"attacker": "e", "kind": "intercept_resend", "target": "A-R"}]"#);
    let text = csv(&sc, &run(&sc, 1));
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), EVENT_LOG_COLUMNS.join(","));
    for line in lines {
        assert_eq!(line.split(',').count(), EVENT_LOG_COLUMNS.len(), "{line}");
    }
}

#[test]
fn empty_attack_list_matches_honest_baseline() {
    let honest = chain(10.0, PAIRS_100, "");
    let empty = chain(10.0, PAIRS_100, r#", "attacks": []"#);
    assert_eq!(csv(&honest, &run(&honest, 4)), csv(&empty, &run(&empty, 4)));
}

#[test]
fn doubling_link_length_lowers_the_delivery_rate() {
    let demand = r#"{"id": "ab", "src": "A", "dst": "B", "target_pairs": 500}"#;
    let (short, long) = (chain(10.0, demand, ""), chain(20.0, demand, ""));
    for seed in 1..=5 {
        let r1 = run(&short, seed).ledger.availability.delivered_rate_hz;
        let r2 = run(&long, seed).ledger.availability.delivered_rate_hz;
        assert!(r2 < r1, "seed {seed}: {r2} !< {r1}");
    }
}

#[test]
fn bbm92_on_perfect_links_yields_identical_keys() {
    let text = r#"{
        "nodes": [{"id": "A", "kind": "ENode"}, {"id": "R", "kind": "RNode"}, {"id": "B", "kind": "ENode"}],
        "links": [
            {"id": "A-R", "a": "A", "b": "R", "length_km": 1, "base_fidelity": 1.0},
            {"id": "R-B", "a": "R", "b": "B", "length_km": 1, "base_fidelity": 1.0}
        ],
        "demands": [{"id": "k", "src": "A", "dst": "B", "application": "bbm92", "key_length": 500}]
    }"#;
    let sc = Scenario::from_json(text).unwrap();
    let out = run(&sc, 2);
    let s = &out.key_sessions[0];
    assert_eq!(s.status, SessionStatus::Completed);
    assert_eq!(s.check_errors, 0);
    assert_eq!(s.keys_identical, Some(true));
    assert_eq!(s.key_bits_emitted, 500);
    assert_eq!(s.key_digest_a, s.key_digest_b);
}

#[test]
fn above_threshold_qber_emits_no_key() {
    let sc = chain(
        5.0,
        r#"{"id": "k", "src": "A", "dst": "B", "application": "bbm92", "key_length": 500}"#,
        r#", "attacks": [{"attacker": "e", "kind": "intercept_resend", "target": "A-R"}], "protocol": {"horizon_s": 30}"#,
    );
    for seed in 1..=3 {
        let s = &run(&sc, seed).key_sessions[0];
        assert_eq!(s.status, SessionStatus::Aborted);
        assert_eq!(s.key_bits_emitted, 0);
        assert!(s.key_digest_a.is_none() && s.key_digest_b.is_none());
    }
}

#[test]
fn authenticated_frames_resist_modification_without_keys() {
    let attack = r#", "attacks": [{"attacker": "m", "kind": "modify_messages", "target": ["R", "B"]}]"#;
    let sc = chain(10.0, PAIRS_100, attack);
    let out = run(&sc, 5);
    assert_eq!(out.ledger.integrity.wrong_frames_applied, 0);
    assert!(out.ledger.integrity.tamper_detected > 0);
    let unauth = format!(r#", "classical": {{"authenticated": false}}{attack}"#);
    let out = run(&chain(10.0, PAIRS_100, &unauth), 5);
    assert!(out.ledger.integrity.wrong_frames_applied > 0);
    assert_eq!(out.ledger.integrity.tamper_detected, 0);
}

#[test]
fn sampling_prediction_leaks_without_detection() {
    let demand = r#"{"id": "ab", "src": "A", "dst": "B", "target_pairs": 300, "sacrifice_fraction": 0.3}"#;
    let attack = r#", "attacks": [{"attacker": "e", "kind": "intercept_resend", "target": "A-R",
        "params": {"predicts_sampling": true}}]"#;
    let sc = chain(10.0, demand, attack);
    for seed in 1..=5 {
        let out = run(&sc, seed);
        assert!(out.ledger.detection.iter().all(|d| d.detection_latency_s.is_none()));
        assert_eq!(out.ledger.confidentiality.leaked_pairs, out.ledger.availability.delivered_pairs);
        assert!(out.ledger.confidentiality.leaked_pairs > 0);
    }
}

#[test]
fn classical_dos_raises_latency_and_lowers_throughput() {
    let demand = r#"{"id": "ab", "src": "A", "dst": "B", "target_pairs": 300}"#;
    let base = chain(10.0, demand, "");
    let dos = chain(
        10.0,
        demand,
        r#", "attacks": [{"attacker": "m", "kind": "classical_dos", "target": ["R", "B"],
            "params": {"delay_s": 0.0005}, "window": {"start_s": 0.005}}]"#,
    );
    let (b, d) = (run(&base, 1), run(&dos, 1));
    let (cb, cd) = (&b.connections[0], &d.connections[0]);
    assert!(cd.mean_latency_s.unwrap() > cb.mean_latency_s.unwrap());
    assert!(cd.throughput_hz < cb.throughput_hz);
    // generation keeps going
    assert!(cd.link_attempts >= cb.link_attempts);
}

#[test]
fn higher_sacrifice_fraction_detects_sooner() {
    let attack = r#", "attacks": [{"attacker": "e", "kind": "intercept_resend", "target": "A-R"}]"#;
    let mean_latency = |s: f64| {
        let demand = format!(r#"{{"id": "ab", "src": "A", "dst": "B", "target_pairs": 3000, "sacrifice_fraction": {s}}}"#);
        let sc = chain(10.0, &demand, attack);
        let lat: Vec<f64> = (1..=20)
            .map(|seed| run(&sc, seed).ledger.detection[0].detection_latency_s.expect("detected"))
            .collect();
        lat.iter().sum::<f64>() / lat.len() as f64
    };
    let (low, high) = (mean_latency(0.1), mean_latency(0.5));
    assert!(high < low, "{high} !< {low}");
}

#[test]
fn attack_effects_only_come_from_scripted_assets() {
    let sc = chain(10.0, PAIRS_100, r#", "attacks": [{"attacker": "e", "kind": "intercept_resend", "target": "A-R"}]"#);
    let out = run(&sc, 1);
    let link = sc.topology.link_id("A-R").unwrap();
    for e in out.log.events().iter().filter(|e| e.action.is_some()) {
        if let Some(l) = e.link {
            assert_eq!(l, link);
        }
    }
    assert!(out.ledger.is_consistent());
}
