//! The protocol engine: connection setup, link generation, swapping,
//! purification, certification and delivery under attack.

mod bbm92;
mod link;
mod purification;
mod sim;

pub use bbm92::{
    check_and_split, key_digest, run_session, CheckedKey, KeyAccumulator, KeySession, SessionParams, SessionStatus,
    Sifted,
};
pub use link::{attempt_link, attempts_until_success, success_probability, transmissivity};
pub use purification::{purify_until, recurrence_trajectory, PurifyRun};
pub use sim::{AbortReason, Accounting, AttackEffects, ConnState, ConnectionReport, RunOutput};

use crate::scenario::Scenario;

/// Execute `scenario` with `seed`, which overrides the document seed.
pub fn run(scenario: &Scenario, seed: u64) -> RunOutput {
    sim::Simulator::new(scenario, seed).run()
}
