//! Asynchronous majority dynamics on trees and small general graphs.
//!
//! The crate is organised around the life of a run:
//!
//! - [`graphgen`] builds the graph families (preferential attachment trees,
//!   balanced M-ary trees, baselines) and the structural quantities used to
//!   reason about them.
//! - [`dynamics`] executes the asynchronous process step by step and records
//!   a complete event trace.
//! - [`trace_analysis`] recomputes critical times, chain witnesses, safety and
//!   finalization from a recorded trace.
//! - [`oracle`] gives exact answers on tiny instances.
//! - [`harness`] runs seeded Monte Carlo experiments and writes results.
//! - [`acceptance`] bundles the end-to-end acceptance criteria; [`cli`] wires
//!   everything to the `majority-lab` binary.

pub mod acceptance;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod graphgen;
pub mod harness;
pub mod oracle;
pub mod rng;
pub mod stats;
pub mod trace_analysis;

pub use error::{Error, Result};
