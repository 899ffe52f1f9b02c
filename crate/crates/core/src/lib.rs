//! Statistical machinery for tie-level social-contagion analyses on
//! longitudinal network panels, together with the counter-analyses that
//! probe it: mechanism simulators, model self-consistency oracles, graph
//! permutation tests and confidence-interval audits.

pub mod audit;
pub mod consistency;
pub mod gee;
pub mod generators;
pub mod modelspec;
pub mod netpanel;
pub mod permnet;
pub mod plot;
pub mod rng;
pub mod stats;
