//! Core of the synthsel solver-selection framework: SyGuS query model,
//! featurization, the k-NN bandit selector, exponential budget allocation,
//! A* grammar enumeration, candidate checking, and LLM prompt logic.
//!
//! The crate is `no_std` with `alloc`; IO lives in the `synthsel` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bandit;
pub mod budget;
pub mod deadline;
pub mod enumerator;
pub mod eval;
pub mod featurize;
pub mod grammar;
pub mod llm;
pub mod query;
pub mod sexpr;
pub mod symbolic;
pub mod term;
pub mod value;
pub mod verify;
