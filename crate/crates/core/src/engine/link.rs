use rand::Rng;
use rand_distr::{Distribution, Geometric};

use crate::network::{LinkArchitecture, LinkSpec};

/// Fiber transmissivity `10^(−αL/10)`.
pub fn transmissivity(length_km: f64, attenuation_db_per_km: f64) -> f64 {
    10f64.powf(-attenuation_db_per_km * length_km / 10.0)
}

/// Heralded success probability of one generation attempt.
pub fn success_probability(link: &LinkSpec) -> f64 {
    let a = link.attenuation_db_per_km;
    match link.architecture {
        LinkArchitecture::MemoryToMemory => transmissivity(link.length_km, a),
        LinkArchitecture::MemoriesAndBSA => {
            transmissivity(link.length_km / 2.0, a).powi(2) * link.bsa_success_cap
        }
        LinkArchitecture::MemoriesAndEPPS => transmissivity(link.length_km / 2.0, a).powi(2),
    }
}

/// One generation attempt.
pub fn attempt_link<R: Rng + ?Sized>(link: &LinkSpec, rng: &mut R) -> bool {
    rng.random::<f64>() < success_probability(link)
}

/// Attempts up to and including the first success, or `None` when success
/// is impossible.
pub fn attempts_until_success<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Option<u64> {
    if p <= 0.0 {
        return None;
    }
    if p >= 1.0 {
        return Some(1);
    }
    let geo = Geometric::new(p).expect("p in (0, 1)");
    Some(geo.sample(rng).saturating_add(1))
}
