//! Frame-based scheduling of uplink refreshes and downlink request service at
//! a caching base station.
//!
//! The crate models a base station that, once per frame of `N` slots, decides
//! which source messages to re-upload (resetting their age of information) and
//! which queued user requests to serve. It provides:
//!
//! - [`model`]: static configuration, slot-cost formulas, channel and arrival
//!   processes.
//! - [`state`]: the scheduler-visible state and its update laws.
//! - [`region`]: inner/outer approximations of the set of supportable arrival
//!   matrices, the uniform slack `epsilon`, and their volumes.
//! - [`knapsack`]: the exact per-frame bounded/0-1 knapsack solver.
//! - [`policies`]: the randomized reservation policy, the mixed-order
//!   drift-plus-penalty scheduler and a fixed-window FCFS baseline.
//! - [`bounds`]: closed-form performance bounds of the drift-plus-penalty
//!   scheduler.
//! - [`simulator`]: the frame loop and metric estimators.
//! - [`cli`]: the `mec-sched` command-line front end.

pub mod bounds;
pub mod cli;
pub mod config;
mod error;
pub mod knapsack;
pub mod model;
pub mod policies;
pub mod region;
pub mod simulator;
pub mod state;
pub mod validate;

pub use error::{Error, Result};
