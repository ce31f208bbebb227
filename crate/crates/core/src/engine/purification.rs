use rand::Rng;
use serde::Serialize;

use crate::state::{check_fidelity, purify, purify_werner, StateError};

/// Result of pumping a supply of identical Werner pairs toward a target.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PurifyRun {
    /// Recurrence levels climbed by the output pair.
    pub rounds: u32,
    pub pairs_consumed: u64,
    pub f_out: f64,
    pub reached: bool,
}

/// Fidelity after each round of symmetric recurrence, starting at `f`,
/// until `target` is met, the recurrence stops improving, or `max_rounds`.
pub fn recurrence_trajectory(f: f64, target: f64, max_rounds: u32) -> Result<Vec<f64>, StateError> {
    let mut out = vec![check_fidelity(f)?];
    while out.len() as u32 <= max_rounds {
        let last = *out.last().expect("non-empty");
        if last >= target {
            break;
        }
        let next = purify_werner(last, last)?.f_out;
        if next <= last {
            break;
        }
        out.push(next);
    }
    Ok(out)
}

struct Pump<'a, R: Rng + ?Sized> {
    base: f64,
    budget: u64,
    used: u64,
    rng: &'a mut R,
}

impl<R: Rng + ?Sized> Pump<'_, R> {
    /// Produce one pair at `level`, or `None` once the budget runs out.
    fn produce(&mut self, level: u32) -> Result<Option<f64>, StateError> {
        if level == 0 {
            if self.used >= self.budget {
                return Ok(None);
            }
            self.used += 1;
            return Ok(Some(self.base));
        }
        loop {
            let Some(a) = self.produce(level - 1)? else { return Ok(None) };
            let Some(b) = self.produce(level - 1)? else { return Ok(None) };
            let out = purify(a, b, self.rng)?;
            if out.success {
                return Ok(Some(out.f_out));
            }
        }
    }
}

/// Greedy symmetric pumping from pairs of fidelity `f_base` until one pair
/// reaches `f_target` or `budget` pairs have been consumed.
pub fn purify_until<R: Rng + ?Sized>(
    f_base: f64,
    f_target: f64,
    budget: u64,
    rng: &mut R,
) -> Result<PurifyRun, StateError> {
    let base = check_fidelity(f_base)?;
    if base >= f_target {
        return Ok(PurifyRun { rounds: 0, pairs_consumed: 0, f_out: base, reached: true });
    }
    let trajectory = recurrence_trajectory(base, f_target, 64)?;
    let reachable = *trajectory.last().expect("non-empty") >= f_target;
    let mut pump = Pump { base, budget, used: 0, rng };
    if reachable {
        let rounds = trajectory.len() as u32 - 1;
        return Ok(match pump.produce(rounds)? {
            Some(f) => PurifyRun { rounds, pairs_consumed: pump.used, f_out: f, reached: true },
            None => PurifyRun { rounds: 0, pairs_consumed: pump.used, f_out: base, reached: false },
        });
    }
    // Unreachable: keep climbing levels until the budget is spent.
    let mut best = (0, base);
    let mut level = 1;
    while let Some(f) = pump.produce(level)? {
        best = (level, f);
        level += 1;
    }
    Ok(PurifyRun { rounds: best.0, pairs_consumed: pump.used, f_out: best.1, reached: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{oracle_purify, TwoQubitState};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn target_below_base_needs_no_rounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = purify_until(0.9, 0.85, 100, &mut rng).unwrap();
        assert_eq!((r.rounds, r.pairs_consumed, r.reached), (0, 0, true));
    }

    #[test]
    fn rounds_follow_the_oracle_recurrence() {
        // Independent trajectory through the density-matrix circuit.
        let mut f = 0.8;
        let mut oracle_rounds = 0;
        while f < 0.9 {
            let s = TwoQubitState::werner(f).unwrap();
            let (_, post) = oracle_purify(&s, &s).unwrap();
            f = post.fidelity();
            oracle_rounds += 1;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = purify_until(0.8, 0.9, 10_000, &mut rng).unwrap();
        assert!(r.reached);
        assert_eq!(r.rounds, oracle_rounds);
        assert!((r.f_out - f).abs() < 1e-12);
        assert!(r.pairs_consumed >= 1 << oracle_rounds);
    }

    #[test]
    fn below_half_never_improves() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = purify_until(0.45, 0.5, 64, &mut rng).unwrap();
        assert!(!r.reached);
        assert_eq!(r.pairs_consumed, 64);
        assert!(r.f_out <= 0.45);
    }
}
