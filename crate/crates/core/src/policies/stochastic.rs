use ndarray::Array2;
use rand::Rng;

use super::Policy;
use crate::model::UplinkCosts;
use crate::region::{in_subset, reserved_slots, ArrivalMatrix};
use crate::simulator::SimRng;
use crate::state::{AllocationDecision, NetworkState};
use crate::{Error, Result};

/// Randomized reservation policy.
///
/// Every frame reserves `Khat` slots for one upload (message chosen uniformly)
/// and `ceil(lambda_k)` service sets of `k` slots for each cost `k`. Each set
/// picks queue `(m, k)` with probability `lambda[m,k] / ceil(lambda_k)` and stays
/// idle otherwise, or when the picked queue is empty.
#[derive(Debug, Clone)]
pub struct StochasticPolicy {
    means: Array2<f64>,
    /// `ceil(lambda_k)` per cost column.
    sets: Vec<u64>,
    khat: u32,
    reserved: f64,
    offered: Array2<u64>,
}

impl StochasticPolicy {
    pub fn new(lambda: &ArrivalMatrix, slots: usize, khat: u32) -> Result<Self> {
        if !in_subset(lambda, slots, khat) {
            return Err(Error::Infeasible(format!(
                "stochastic layout needs {} slots per frame but N = {slots}",
                reserved_slots(lambda, khat)
            )));
        }
        let sets = lambda
            .cost_totals()
            .iter()
            .map(|&t| crate::model::ceil_snapped(t) as u64)
            .collect();
        Ok(Self {
            means: lambda.as_array().clone(),
            sets,
            khat,
            reserved: reserved_slots(lambda, khat),
            offered: Array2::zeros(lambda.as_array().dim()),
        })
    }

    /// Slots claimed by the layout: `Khat + sum_k k * ceil(lambda_k)`.
    pub fn reserved_slots(&self) -> f64 {
        self.reserved
    }

    /// How often each queue has been picked by a service set so far, whether
    /// or not it had a request to serve.
    pub fn offered(&self) -> &Array2<u64> {
        &self.offered
    }
}

impl Policy for StochasticPolicy {
    fn name(&self) -> &'static str {
        "stochastic"
    }

    fn parameters(&self) -> String {
        format!("Khat={};reserved={}", self.khat, self.reserved)
    }

    fn decide(&mut self, state: &NetworkState, _costs: &UplinkCosts, rng: &mut SimRng) -> AllocationDecision {
        let (sources, max_cost) = self.means.dim();
        let mut decision = AllocationDecision::zeros(sources, max_cost);
        decision.uplink[rng.random_range(0..sources)] = true;

        for (j, &sets) in self.sets.iter().enumerate() {
            for _ in 0..sets {
                let u = rng.random::<f64>() * sets as f64;
                let mut cumulative = 0.0;
                let picked = (0..sources).find(|&m| {
                    cumulative += self.means[[m, j]];
                    u < cumulative
                });
                if let Some(m) = picked {
                    self.offered[[m, j]] += 1;
                    if decision.downlink[[m, j]] < state.queues[[m, j]] {
                        decision.downlink[[m, j]] += 1;
                    }
                }
            }
        }
        decision
    }
}
