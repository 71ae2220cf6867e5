//! Delay-aware downlink resource management for a train moving along a
//! cellular rail corridor.
//!
//! Each slot the base station picks a transmit power and splits the resulting
//! link capacity among several services' packet queues. Virtual queues turn
//! the average-delay and average-power budgets into stability conditions, and
//! a per-slot solver minimises the resulting drift bound. The crate also
//! ships static and capped baselines, a slotted simulator, parameter sweeps
//! and plot-ready exports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod error;
pub mod plotdata;
pub mod policy;
pub mod queues;
pub mod selftest;
pub mod sim;
pub mod solver;
pub mod sweep;
pub mod trace_io;

pub use config::{load_config, ScenarioConfig};
pub use error::{Error, Result};
pub use policy::{Policy, PolicyKind};
pub use sim::{run, run_summary, summarize, SimSummary, SlotTrace};
