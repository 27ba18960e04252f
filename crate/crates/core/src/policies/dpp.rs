use super::Policy;
use crate::knapsack::{solve_dp, ItemKind, KnapsackItem, KnapsackSolution, Solver};
use crate::model::UplinkCosts;
use crate::region::ArrivalMatrix;
use crate::simulator::SimRng;
use crate::state::{AllocationDecision, NetworkState};
use crate::{Error, Result};

/// Per-frame packing instance of the drift-plus-penalty objective.
///
/// Downlink items come first in row-major `(m, k)` order, then one uplink item
/// per message. Serving a cost-`k` request of message `m` is worth
/// `lambda[m,k] * q[m,k] - V (x_m + 1)`; refreshing message `m` is worth `V V0 x_m`.
pub fn build_instance(
    state: &NetworkState,
    costs: &UplinkCosts,
    lambda: &ArrivalMatrix,
    tradeoff: f64,
    drift_weight: f64,
    slots: usize,
) -> Vec<KnapsackItem> {
    let (sources, max_cost) = state.queues.dim();
    let mut items = Vec::with_capacity(sources * (max_cost + 1));
    for m in 0..sources {
        let age_penalty = tradeoff * (state.aoi[m] + 1) as f64;
        for j in 0..max_cost {
            let k = j + 1;
            let q = state.queues[[m, j]];
            items.push(KnapsackItem {
                kind: ItemKind::Downlink { source: m, cost: k },
                unit_value: lambda.as_array()[[m, j]] * q as f64 - age_penalty,
                weight: k,
                max_count: q.min((slots / k) as u64),
            });
        }
    }
    for m in 0..sources {
        items.push(KnapsackItem {
            kind: ItemKind::Uplink { source: m },
            unit_value: tradeoff * drift_weight * state.aoi[m] as f64,
            weight: costs.costs[m] as usize,
            max_count: 1,
        });
    }
    items
}

pub fn decision_from_solution(
    items: &[KnapsackItem],
    solution: &KnapsackSolution,
    sources: usize,
    max_cost: usize,
) -> AllocationDecision {
    let mut decision = AllocationDecision::zeros(sources, max_cost);
    for (item, &count) in items.iter().zip(&solution.counts) {
        match item.kind {
            ItemKind::Downlink { source, cost } => decision.downlink[[source, cost - 1]] = count,
            ItemKind::Uplink { source } => decision.uplink[source] = count > 0,
        }
    }
    decision
}

/// Value of `decision` under the per-frame objective the scheduler maximizes.
pub fn p3_objective(
    decision: &AllocationDecision,
    state: &NetworkState,
    lambda: &ArrivalMatrix,
    tradeoff: f64,
    drift_weight: f64,
) -> f64 {
    let mut value = 0.0;
    for ((m, j), &a) in decision.downlink.indexed_iter() {
        let unit = lambda.as_array()[[m, j]] * state.queues[[m, j]] as f64 - tradeoff * (state.aoi[m] + 1) as f64;
        value += a as f64 * unit;
    }
    for (m, &up) in decision.uplink.iter().enumerate() {
        if up {
            value += tradeoff * drift_weight * state.aoi[m] as f64;
        }
    }
    value
}

/// Mixed-order drift-plus-penalty scheduler: solves one packing instance per frame.
#[derive(Debug, Clone)]
pub struct DppPolicy {
    lambda: ArrivalMatrix,
    tradeoff: f64,
    drift_weight: f64,
    slots: usize,
    solver: Solver,
}

impl DppPolicy {
    pub fn new(lambda: ArrivalMatrix, tradeoff: f64, drift_weight: f64, slots: usize) -> Result<Self> {
        if !(tradeoff.is_finite() && tradeoff >= 0.0) {
            return Err(Error::Parameter(format!("V must be nonnegative, got {tradeoff}")));
        }
        if !(drift_weight.is_finite() && drift_weight > 0.0) {
            return Err(Error::Parameter(format!("V0 must be positive, got {drift_weight}")));
        }
        Ok(Self {
            lambda,
            tradeoff,
            drift_weight,
            slots,
            solver: solve_dp,
        })
    }

    /// Replace the packing solver; used by the self-check to inject faults.
    pub fn with_solver(mut self, solver: Solver) -> Self {
        self.solver = solver;
        self
    }

    pub fn drift_weight(&self) -> f64 {
        self.drift_weight
    }
}

impl Policy for DppPolicy {
    fn name(&self) -> &'static str {
        "dpp"
    }

    fn parameters(&self) -> String {
        format!("V={};V0={}", self.tradeoff, self.drift_weight)
    }

    fn decide(&mut self, state: &NetworkState, costs: &UplinkCosts, _rng: &mut SimRng) -> AllocationDecision {
        let items = build_instance(state, costs, &self.lambda, self.tradeoff, self.drift_weight, self.slots);
        let solution = (self.solver)(&items, self.slots);
        decision_from_solution(&items, &solution, state.sources(), state.max_cost())
    }
}
