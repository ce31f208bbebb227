//! Run reports, report diffs and seed-sweep aggregates.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::engine::{Accounting, AttackEffects, ConnectionReport, KeySession, RunOutput};
use crate::monitor::{CIALedger, CertReport, DetectionRecord, ReputationPolicy, Verdict};
use crate::scenario::Scenario;

pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const AGGREGATE_FORMAT_VERSION: u32 = 1;
pub const DIFF_FORMAT_VERSION: u32 = 1;

/// JSON schema every `report.json` validates against.
pub const REPORT_SCHEMA: &str = include_str!("../schema/report.schema.json");

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959963984540054;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReputationView {
    pub policy: ReputationPolicy,
    pub k: u32,
    pub accusations_received: u64,
    pub accusations_rejected: u64,
    pub accusers: BTreeMap<String, Vec<String>>,
    pub link_verdicts: BTreeMap<String, Verdict>,
    pub corroborated: Vec<String>,
    pub isolated: Vec<String>,
    pub isolated_at_s: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub format_version: u32,
    pub scenario: Option<String>,
    pub fingerprint: String,
    pub seed: u64,
    pub end_time_s: f64,
    pub cia_ledger: CIALedger,
    pub connections: Vec<ConnectionReport>,
    pub certification: Vec<CertReport>,
    pub reputation: ReputationView,
    pub detection: Vec<DetectionRecord>,
    pub attacks_effects: Vec<AttackEffects>,
    pub key_sessions: Vec<KeySession>,
    pub accounting: Accounting,
    pub event_count: u64,
    /// SHA-256 of `events.csv`.
    pub event_log_digest: String,
    pub wall_clock_s: f64,
}

/// Report plus the rendered event log.
pub struct RenderedRun {
    pub report: RunReport,
    pub events_csv: String,
}

pub fn build_report(scenario: &Scenario, out: RunOutput, wall_clock_s: f64) -> RenderedRun {
    let topo = &scenario.topology;
    let events_csv = out.log.to_csv(topo);
    let names = |ns: &mut dyn Iterator<Item = crate::ids::NodeId>| -> Vec<String> {
        ns.map(|n| topo.node_name(n).to_string()).collect()
    };
    let rep = &out.reputation;
    let reputation = ReputationView {
        policy: rep.policy,
        k: rep.k,
        accusations_received: rep.accusations_received,
        accusations_rejected: rep.accusations_rejected,
        accusers: rep
            .accusers
            .iter()
            .map(|(n, s)| (topo.node_name(*n).to_string(), names(&mut s.iter().copied())))
            .collect(),
        link_verdicts: rep.link_verdicts.iter().map(|(l, v)| (topo.link_name(*l).to_string(), *v)).collect(),
        corroborated: names(&mut rep.corroborated.iter().copied()),
        isolated: names(&mut rep.isolated.iter().copied()),
        isolated_at_s: rep.isolated_at.iter().map(|(n, t)| (topo.node_name(*n).to_string(), *t)).collect(),
    };
    let detection = out.ledger.detection.clone();
    let report = RunReport {
        format_version: REPORT_FORMAT_VERSION,
        scenario: scenario.name.clone(),
        fingerprint: scenario.fingerprint(),
        seed: out.seed,
        end_time_s: out.end_time_s,
        cia_ledger: out.ledger,
        connections: out.connections,
        certification: out.certification,
        reputation,
        detection,
        attacks_effects: out.attack_effects,
        key_sessions: out.key_sessions,
        accounting: out.accounting,
        event_count: out.log.len() as u64,
        event_log_digest: hex::encode(Sha256::digest(events_csv.as_bytes())),
        wall_clock_s,
    };
    RenderedRun { report, events_csv }
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Fill the availability comparison against an honest baseline report.
    pub fn set_baseline(&mut self, baseline: &Value) -> Result<(), String> {
        let fp = baseline.get("fingerprint").and_then(Value::as_str).ok_or("baseline report has no fingerprint")?;
        let rate = baseline
            .pointer("/cia_ledger/availability/delivered_rate_hz")
            .and_then(Value::as_f64)
            .ok_or("baseline report has no delivered rate")?;
        let a = &mut self.cia_ledger.availability;
        a.baseline_fingerprint = Some(fp.to_string());
        a.baseline_rate_hz = Some(rate);
        a.rate_ratio = (rate > 0.0).then(|| a.delivered_rate_hz / rate);
        Ok(())
    }

    /// Broken bookkeeping the engine should never produce.
    pub fn contradictions(&self) -> Vec<String> {
        let mut out = Vec::new();
        let acc = &self.accounting;
        if !acc.identity_holds {
            out.push(format!(
                "pair accounting: created {} != retired {} + live {}",
                acc.created_total, acc.retired_total, acc.live_at_end
            ));
        }
        if !self.cia_ledger.is_consistent() {
            out.push("ledger: leaked + bad_delivered exceeds delivered + sacrificed".into());
        }
        let delivered: u64 = self.connections.iter().map(|c| c.delivered).sum();
        if delivered < self.cia_ledger.availability.delivered_pairs {
            out.push("ledger: more deliveries than the connections report".into());
        }
        out
    }
}

// ---------------------------------------------------------------------- diff

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldDelta {
    pub path: String,
    pub a: Value,
    pub b: Value,
    /// `b − a` for numeric fields.
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportDiff {
    pub format_version: u32,
    pub fingerprint_a: String,
    pub fingerprint_b: String,
    pub same_scenario: bool,
    pub ledger: Vec<FieldDelta>,
    /// Keyed by demand id, or `injected:<id>` for attacker requests.
    pub connections: Vec<FieldDelta>,
}

impl ReportDiff {
    pub fn is_empty(&self) -> bool {
        self.ledger.is_empty() && self.connections.is_empty()
    }
}

#[derive(Debug, PartialEq)]
pub enum DiffError {
    NotAReport(&'static str),
    FingerprintMismatch { a: String, b: String },
}

impl std::fmt::Display for DiffError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DiffError::NotAReport(which) => write!(f, "report {which} is not a run report"),
            DiffError::FingerprintMismatch { a, b } => {
                write!(f, "scenario fingerprints differ ({a} vs {b}); pass --force to compare anyway")
            }
        }
    }
}

impl std::error::Error for DiffError {}

const CONNECTION_FIELDS: [&str; 8] = [
    "state",
    "delivered",
    "sacrificed",
    "link_attempts",
    "throughput_hz",
    "mean_fidelity",
    "mean_latency_s",
    "verdict",
];

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, Value>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                flatten(&format!("{prefix}/{k}"), x, out);
            }
        }
        _ => {
            out.insert(prefix.to_string(), v.clone());
        }
    }
}

fn deltas(a: &BTreeMap<String, Value>, b: &BTreeMap<String, Value>, out: &mut Vec<FieldDelta>) {
    let keys: std::collections::BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    for k in keys {
        let (x, y) = (a.get(k).unwrap_or(&Value::Null), b.get(k).unwrap_or(&Value::Null));
        if x != y {
            let delta = match (x.as_f64(), y.as_f64()) {
                (Some(p), Some(q)) => Some(q - p),
                _ => None,
            };
            out.push(FieldDelta { path: k.clone(), a: x.clone(), b: y.clone(), delta });
        }
    }
}

fn connection_fields(report: &Value) -> BTreeMap<String, Value> {
    let mut out = BTreeMap::new();
    for c in report.get("connections").and_then(Value::as_array).into_iter().flatten() {
        let key = match (c.get("demand").and_then(Value::as_str), c.get("id")) {
            (Some(d), _) => d.to_string(),
            (None, Some(id)) => format!("injected:{id}"),
            (None, None) => continue,
        };
        for f in CONNECTION_FIELDS {
            out.insert(format!("/connections/{key}/{f}"), c.get(f).cloned().unwrap_or(Value::Null));
        }
    }
    out
}

/// Ledger and per-connection deltas from `a` to `b`.
pub fn diff_reports(a: &Value, b: &Value, force: bool) -> Result<ReportDiff, DiffError> {
    let fa = a.get("fingerprint").and_then(Value::as_str).ok_or(DiffError::NotAReport("a"))?;
    let fb = b.get("fingerprint").and_then(Value::as_str).ok_or(DiffError::NotAReport("b"))?;
    let la = a.get("cia_ledger").ok_or(DiffError::NotAReport("a"))?;
    let lb = b.get("cia_ledger").ok_or(DiffError::NotAReport("b"))?;
    if fa != fb && !force {
        return Err(DiffError::FingerprintMismatch { a: fa.into(), b: fb.into() });
    }
    let (mut ma, mut mb) = (BTreeMap::new(), BTreeMap::new());
    flatten("/cia_ledger", la, &mut ma);
    flatten("/cia_ledger", lb, &mut mb);
    let mut ledger = Vec::new();
    deltas(&ma, &mb, &mut ledger);
    let mut connections = Vec::new();
    deltas(&connection_fields(a), &connection_fields(b), &mut connections);
    Ok(ReportDiff {
        format_version: DIFF_FORMAT_VERSION,
        fingerprint_a: fa.into(),
        fingerprint_b: fb.into(),
        same_scenario: fa == fb,
        ledger,
        connections,
    })
}

// ----------------------------------------------------------------- aggregate

/// Mean with a 95% normal-approximation interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub n: u64,
    pub mean: Option<f64>,
    pub std_dev: Option<f64>,
    pub ci95: Option<[f64; 2]>,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Summary {
        let n = xs.len();
        if n == 0 {
            return Summary { n: 0, mean: None, std_dev: None, ci95: None };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Summary { n: 1, mean: Some(mean), std_dev: None, ci95: None };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        let half = Z95 * sd / (n as f64).sqrt();
        Summary { n: n as u64, mean: Some(mean), std_dev: Some(sd), ci95: Some([mean - half, mean + half]) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DetectionSummary {
    pub action: u32,
    pub attacker: String,
    pub kind: String,
    pub runs: u64,
    pub detected_runs: u64,
    /// Over the runs that detected the attack.
    pub latency_s: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub format_version: u32,
    pub fingerprint: String,
    pub seeds: Vec<u64>,
    pub throughput_hz: Summary,
    pub connection_throughput_hz: BTreeMap<String, Summary>,
    pub delivered_pairs: Summary,
    pub leaked_pairs: Summary,
    pub bad_delivered: Summary,
    pub detection: Vec<DetectionSummary>,
}

pub fn aggregate(reports: &[RunReport]) -> Aggregate {
    let col = |f: &dyn Fn(&RunReport) -> f64| -> Summary { Summary::of(&reports.iter().map(f).collect::<Vec<_>>()) };
    let mut per_conn: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in reports {
        for c in &r.connections {
            if let Some(d) = &c.demand {
                per_conn.entry(d.clone()).or_default().push(c.throughput_hz);
            }
        }
    }
    let mut det: BTreeMap<u32, (DetectionRecord, u64, Vec<f64>)> = BTreeMap::new();
    for r in reports {
        for d in &r.detection {
            let e = det.entry(d.action.0).or_insert_with(|| (d.clone(), 0, Vec::new()));
            e.1 += 1;
            e.2.extend(d.detection_latency_s);
        }
    }
    Aggregate {
        format_version: AGGREGATE_FORMAT_VERSION,
        fingerprint: reports.first().map(|r| r.fingerprint.clone()).unwrap_or_default(),
        seeds: reports.iter().map(|r| r.seed).collect(),
        throughput_hz: col(&|r| r.cia_ledger.availability.delivered_rate_hz),
        connection_throughput_hz: per_conn.into_iter().map(|(k, v)| (k, Summary::of(&v))).collect(),
        delivered_pairs: col(&|r| r.cia_ledger.availability.delivered_pairs as f64),
        leaked_pairs: col(&|r| r.cia_ledger.confidentiality.leaked_pairs as f64),
        bad_delivered: col(&|r| r.cia_ledger.integrity.bad_delivered as f64),
        detection: det
            .into_iter()
            .map(|(action, (d, runs, lat))| DetectionSummary {
                action,
                attacker: d.attacker,
                kind: d.kind,
                runs,
                detected_runs: lat.len() as u64,
                latency_s: Summary::of(&lat),
            })
            .collect(),
    }
}

/// `report.json` with the wall-clock field blanked, for byte comparisons.
pub fn without_wall_clock(report_json: &str) -> String {
    let mut v: Value = serde_json::from_str(report_json).expect("valid JSON");
    if let Some(m) = v.as_object_mut() {
        m.insert("wall_clock_s".into(), Value::from(0.0));
    }
    serde_json::to_string_pretty(&v).expect("re-serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_matches_hand_arithmetic() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, Some(2.5));
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((s.std_dev.unwrap() - sd).abs() < 1e-12);
        let [lo, hi] = s.ci95.unwrap();
        assert!((hi - lo - 2.0 * 1.959963984540054 * sd / 2.0).abs() < 1e-12);
        assert_eq!(Summary::of(&[]).mean, None);
        assert_eq!(Summary::of(&[7.0]).ci95, None);
    }

    #[test]
    fn diff_of_a_report_with_itself_is_empty() {
        let r = serde_json::json!({
            "fingerprint": "f",
            "cia_ledger": {"confidentiality": {"leaked_pairs": 3}},
            "connections": [{"id": 0, "demand": "d", "delivered": 5, "throughput_hz": 1.5}],
        });
        assert!(diff_reports(&r, &r, false).unwrap().is_empty());
        let mut s = r.clone();
        s["cia_ledger"]["confidentiality"]["leaked_pairs"] = 10.into();
        s["connections"][0]["throughput_hz"] = 1.0.into();
        let d = diff_reports(&r, &s, false).unwrap();
        assert_eq!(d.ledger.len(), 1);
        assert_eq!(d.ledger[0].path, "/cia_ledger/confidentiality/leaked_pairs");
        assert_eq!(d.ledger[0].delta, Some(7.0));
        assert_eq!(d.connections[0].path, "/connections/d/throughput_hz");
        assert_eq!(d.connections[0].delta, Some(-0.5));
    }

    #[test]
    fn fingerprint_mismatch_needs_force() {
        let a = serde_json::json!({"fingerprint": "x", "cia_ledger": {}});
        let b = serde_json::json!({"fingerprint": "y", "cia_ledger": {}});
        assert!(matches!(diff_reports(&a, &b, false), Err(DiffError::FingerprintMismatch { .. })));
        assert!(!diff_reports(&a, &b, true).unwrap().same_scenario);
        assert_eq!(diff_reports(&a, &serde_json::json!({}), true), Err(DiffError::NotAReport("b")));
    }
}
