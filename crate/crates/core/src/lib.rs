//! Deterministic discrete-event simulation of entanglement-swapping quantum
//! repeater networks under attack, scored on confidentiality, integrity and
//! availability.

pub mod adversary;
pub mod engine;
pub mod events;
pub mod ids;
pub mod monitor;
pub mod network;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod state;
