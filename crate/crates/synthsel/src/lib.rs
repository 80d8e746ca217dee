//! Solver selection for syntax-guided synthesis: the online pipeline over
//! a corpus, external SMT checking, chat backends and persistence.
//!
//! The algorithms live in `synthsel-core`; this crate adds time, files,
//! processes and the network.

pub mod backend;
pub mod clock;
pub mod config;
pub mod orchestrator;
pub mod smt;
pub mod store;

pub use synthsel_core as core;
