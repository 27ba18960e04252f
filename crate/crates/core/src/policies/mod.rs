//! Scheduling policies: state feedback maps from `(x, Q, kappa)` to an allocation.

mod dpp;
mod fixed_window;
mod stochastic;

use std::fmt;
use std::str::FromStr;

pub use dpp::{build_instance, decision_from_solution, p3_objective, DppPolicy};
pub use fixed_window::{default_thresholds, FixedWindowPolicy};
pub use stochastic::StochasticPolicy;

use crate::bounds::resolve_drift_weight;
use crate::model::{current_khat, ArrivalBatch, SystemConfig, UplinkCosts};
use crate::simulator::SimRng;
use crate::state::{AllocationDecision, NetworkState};
use crate::{Error, Result};

pub trait Policy: Send {
    fn name(&self) -> &'static str;

    /// Human-readable parameter snapshot, e.g. `V=10;V0=4.2`.
    fn parameters(&self) -> String;

    fn decide(&mut self, state: &NetworkState, costs: &UplinkCosts, rng: &mut SimRng) -> AllocationDecision;

    /// Called once per frame, after the decision, with that frame's arrivals.
    fn observe_arrivals(&mut self, _frame: u64, _arrivals: &ArrivalBatch) {}
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn name(&self) -> &'static str {
        (**self).name()
    }

    fn parameters(&self) -> String {
        (**self).parameters()
    }

    fn decide(&mut self, state: &NetworkState, costs: &UplinkCosts, rng: &mut SimRng) -> AllocationDecision {
        (**self).decide(state, costs, rng)
    }

    fn observe_arrivals(&mut self, frame: u64, arrivals: &ArrivalBatch) {
        (**self).observe_arrivals(frame, arrivals)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PolicyKind {
    Stochastic,
    Dpp,
    FixedWindow,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Stochastic, PolicyKind::Dpp, PolicyKind::FixedWindow];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Stochastic => "stochastic",
            PolicyKind::Dpp => "dpp",
            PolicyKind::FixedWindow => "fixed_window",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stochastic" => Ok(PolicyKind::Stochastic),
            "dpp" => Ok(PolicyKind::Dpp),
            "fixed_window" => Ok(PolicyKind::FixedWindow),
            other => Err(Error::Config(format!(
                "unknown policy {other:?}; expected stochastic, dpp or fixed_window"
            ))),
        }
    }
}

/// Construct a policy for `config`. The stochastic policy fails with
/// [`Error::Infeasible`] when its slot layout does not fit a frame.
pub fn build_policy(
    kind: PolicyKind,
    config: &SystemConfig,
    window_thresholds: Option<&[u64]>,
) -> Result<Box<dyn Policy>> {
    let khat = current_khat(config)?;
    Ok(match kind {
        PolicyKind::Stochastic => Box::new(StochasticPolicy::new(&config.arrivals, config.slots, khat)?),
        PolicyKind::Dpp => Box::new(DppPolicy::new(
            config.arrivals.clone(),
            config.tradeoff,
            resolve_drift_weight(config, khat)?,
            config.slots,
        )?),
        PolicyKind::FixedWindow => {
            let thresholds = match window_thresholds {
                Some(t) => t.to_vec(),
                None => default_thresholds(&config.arrivals),
            };
            Box::new(FixedWindowPolicy::new(thresholds, config.max_downlink_cost, config.slots)?)
        }
    })
}
