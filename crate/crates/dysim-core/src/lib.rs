//! Symbolic simulator for protocol runs with several competing Dolev-Yao
//! attackers.

pub mod checks;
pub mod classify;
pub mod engine;
pub mod explorer;
pub mod knowledge;
pub mod network;
pub mod report;
pub mod rules;
pub mod scenario;
pub mod strategies;
pub mod tables;
pub mod term;
