use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{self, SimRng};
use crate::state::{BasisLabel, MeasurementBasis, TSIRELSON_BOUND};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertScope {
    Link,
    #[default]
    E2e,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Inconclusive,
    Clean,
    Degraded,
    AttackSuspected,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Inconclusive => "inconclusive",
            Verdict::Clean => "clean",
            Verdict::Degraded => "degraded",
            Verdict::AttackSuspected => "attack_suspected",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub fidelity_floor: f64,
    pub qber_ceiling: f64,
    pub delta: f64,
    pub min_samples: u64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { fidelity_floor: 0.85, qber_ceiling: 0.11, delta: 0.01, min_samples: 50 }
    }
}

/// Two-sided Hoeffding half-width for the mean of `n` samples in [0, 1] at
/// confidence `1 − delta`.
pub fn hoeffding_half_width(n: u64, delta: f64) -> f64 {
    if n == 0 {
        return f64::INFINITY;
    }
    ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt()
}

/// Fidelity implied by a matched-basis error rate under the Werner model.
pub fn fidelity_from_qber(qber: f64) -> f64 {
    1.0 - 1.5 * qber
}

/// Which test a sacrificed pair goes to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestChoice {
    Qber(BasisLabel),
    /// Indices into the A and B CHSH settings.
    Chsh(u8, u8),
}

impl TestChoice {
    pub fn bases(self) -> (MeasurementBasis, MeasurementBasis) {
        match self {
            TestChoice::Qber(label) => {
                let b = MeasurementBasis::from_label(label);
                (b, b)
            }
            TestChoice::Chsh(a, b) => (
                if a == 0 { MeasurementBasis::CHSH_A0 } else { MeasurementBasis::CHSH_A1 },
                if b == 0 { MeasurementBasis::CHSH_B0 } else { MeasurementBasis::CHSH_B1 },
            ),
        }
    }
}

/// The certification sampling stream. It is owned by the monitor and is
/// deliberately neither `Clone` nor an `RngCore`, so it cannot be handed to
/// attacker code in place of a generator.
///
/// ```compile_fail
/// let s = qnetsec_core::monitor::SecretSampler::new(1, "e2e", 0, 0.1, 0.25);
/// let copy = s.clone();
/// ```
///
/// ```compile_fail
/// use rand::RngCore;
/// let mut s = qnetsec_core::monitor::SecretSampler::new(1, "e2e", 0, 0.1, 0.25);
/// s.next_u64();
/// ```
pub struct SecretSampler {
    rng: SimRng,
    sacrifice_fraction: f64,
    chsh_fraction: f64,
}

impl SecretSampler {
    pub fn new(seed: u64, scope: &str, index: u64, sacrifice_fraction: f64, chsh_fraction: f64) -> Self {
        let domain = format!("cert-secret/{scope}");
        SecretSampler { rng: rng::stream(seed, &domain, index), sacrifice_fraction, chsh_fraction }
    }

    /// Decide whether the next pair is sacrificed, and for which test.
    pub fn decide(&mut self) -> Option<TestChoice> {
        // Always draw the same number of values so later decisions do not
        // depend on earlier outcomes.
        let u: f64 = self.rng.random();
        let v: f64 = self.rng.random();
        let w: u8 = self.rng.random_range(0..4);
        if u >= self.sacrifice_fraction {
            return None;
        }
        Some(if v < self.chsh_fraction {
            TestChoice::Chsh(w >> 1, w & 1)
        } else if w & 1 == 0 {
            TestChoice::Qber(BasisLabel::Z)
        } else {
            TestChoice::Qber(BasisLabel::X)
        })
    }
}

/// Running tallies of certification outcomes for one scope.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CertAccumulator {
    pub z_n: u64,
    pub z_err: u64,
    pub x_n: u64,
    pub x_err: u64,
    pub chsh_n: [u64; 4],
    pub chsh_sum: [i64; 4],
}

impl CertAccumulator {
    pub fn record(&mut self, test: TestChoice, a: bool, b: bool) {
        match test {
            TestChoice::Qber(BasisLabel::X) => {
                self.x_n += 1;
                self.x_err += u64::from(a != b);
            }
            TestChoice::Qber(_) => {
                self.z_n += 1;
                self.z_err += u64::from(a != b);
            }
            TestChoice::Chsh(i, j) => {
                let k = (i * 2 + j) as usize;
                self.chsh_n[k] += 1;
                self.chsh_sum[k] += if a == b { 1 } else { -1 };
            }
        }
    }

    pub fn qber_samples(&self) -> u64 {
        self.z_n + self.x_n
    }

    pub fn samples(&self) -> u64 {
        self.qber_samples() + self.chsh_n.iter().sum::<u64>()
    }

    pub fn report(&self, subject: impl Into<String>, scope: &str, th: &Thresholds) -> CertReport {
        let n = self.qber_samples();
        let rate = |err: u64, n: u64| if n == 0 { 0.0 } else { err as f64 / n as f64 };
        let qber = rate(self.z_err + self.x_err, n);
        let t = hoeffding_half_width(n, th.delta);
        let qber_interval = [(qber - t).max(0.0), (qber + t).min(1.0)];
        let f = fidelity_from_qber(qber).clamp(0.0, 1.0);
        let fidelity_interval = [
            fidelity_from_qber(qber_interval[1]).clamp(0.0, 1.0),
            fidelity_from_qber(qber_interval[0]).clamp(0.0, 1.0),
        ];
        let chsh_estimate = if self.chsh_n.iter().all(|n| *n > 0) {
            let e = |k: usize| self.chsh_sum[k] as f64 / self.chsh_n[k] as f64;
            // Finite samples can overshoot the quantum bound.
            Some((e(0) + e(1) + e(2) - e(3)).clamp(-TSIRELSON_BOUND, TSIRELSON_BOUND))
        } else {
            None
        };
        let mut r = CertReport {
            subject: subject.into(),
            scope: scope.to_string(),
            n_samples: self.samples(),
            n_qber: n,
            qber_z: rate(self.z_err, self.z_n),
            qber_x: rate(self.x_err, self.x_n),
            qber,
            qber_interval,
            chsh_estimate,
            fidelity_estimate: f,
            fidelity_interval,
            verdict: Verdict::Inconclusive,
        };
        r.verdict = detect(&r, th);
        r
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertReport {
    /// Link name, connection id, or key session the samples belong to.
    pub subject: String,
    pub scope: String,
    pub n_samples: u64,
    pub n_qber: u64,
    pub qber_z: f64,
    pub qber_x: f64,
    pub qber: f64,
    pub qber_interval: [f64; 2],
    pub chsh_estimate: Option<f64>,
    pub fidelity_estimate: f64,
    pub fidelity_interval: [f64; 2],
    pub verdict: Verdict,
}

pub fn detect(report: &CertReport, th: &Thresholds) -> Verdict {
    if report.n_qber < th.min_samples {
        return Verdict::Inconclusive;
    }
    let [f_lo, f_hi] = report.fidelity_interval;
    let [q_lo, q_hi] = report.qber_interval;
    if f_hi < th.fidelity_floor || q_lo > th.qber_ceiling {
        Verdict::AttackSuspected
    } else if f_lo >= th.fidelity_floor && q_hi <= th.qber_ceiling {
        Verdict::Clean
    } else {
        Verdict::Degraded
    }
}
