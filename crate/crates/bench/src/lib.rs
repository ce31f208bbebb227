//! Fixtures shared by the benchmarks.

use qnetsec_core::scenario::Scenario;

/// End-to-end chain of `hops` links with one pair demand across it.
pub fn chain(hops: usize, target_pairs: u64) -> Scenario {
    assert!(hops >= 1);
    let name = |i: usize| match i {
        0 => "A".to_string(),
        i if i == hops => "B".to_string(),
        i => format!("R{i}"),
    };
    let nodes: Vec<String> = (0..=hops)
        .map(|i| {
            let kind = if i == 0 || i == hops { "ENode" } else { "RNode" };
            format!(r#"{{"id": "{}", "kind": "{kind}"}}"#, name(i))
        })
        .collect();
    let links: Vec<String> = (0..hops)
        .map(|i| format!(r#"{{"id": "l{i}", "a": "{}", "b": "{}", "length_km": 10}}"#, name(i), name(i + 1)))
        .collect();
    let text = format!(
        r#"{{"nodes": [{}], "links": [{}],
            "demands": [{{"id": "ab", "src": "A", "dst": "B", "target_pairs": {target_pairs}}}]}}"#,
        nodes.join(","),
        links.join(",")
    );
    Scenario::from_json(&text).expect("chain fixture is valid")
}

#[cfg(test)]
mod tests {
    #[test]
    fn chain_fixture_loads() {
        let sc = super::chain(4, 10);
        assert_eq!(sc.topology.links().len(), 4);
    }
}
