use std::collections::VecDeque;

use ndarray::Array2;

use super::Policy;
use crate::model::{ArrivalBatch, UplinkCosts};
use crate::region::ArrivalMatrix;
use crate::simulator::SimRng;
use crate::state::{AllocationDecision, NetworkState};
use crate::{Error, Result};

/// `ceil(sqrt(2M / sum_k lambda[m,k]))`, at least 1; never refresh a message nobody requests.
pub fn default_thresholds(lambda: &ArrivalMatrix) -> Vec<u64> {
    let m = lambda.sources() as f64;
    lambda
        .as_array()
        .rows()
        .into_iter()
        .map(|row| {
            let rate = row.sum();
            if rate > 0.0 {
                ((2.0 * m / rate).sqrt().ceil() as u64).max(1)
            } else {
                u64::MAX
            }
        })
        .collect()
}

/// Threshold refresh plus strict first-come-first-serve delivery.
///
/// Messages whose age reached their threshold are uploaded in index order while
/// they fit. The remaining slots then serve the oldest pending requests; when the
/// oldest one does not fit, nothing behind it is served either.
#[derive(Debug, Clone)]
pub struct FixedWindowPolicy {
    thresholds: Vec<u64>,
    slots: usize,
    /// Pending requests in arrival order as `(source, cost column, count)` runs.
    ledger: VecDeque<(usize, usize, u64)>,
    max_cost: usize,
}

impl FixedWindowPolicy {
    pub fn new(thresholds: Vec<u64>, max_cost: usize, slots: usize) -> Result<Self> {
        if thresholds.is_empty() || thresholds.contains(&0) {
            return Err(Error::Config("window_thresholds must be positive, one per message".into()));
        }
        Ok(Self {
            thresholds,
            slots,
            ledger: VecDeque::new(),
            max_cost,
        })
    }

    pub fn thresholds(&self) -> &[u64] {
        &self.thresholds
    }

    pub fn pending(&self) -> u64 {
        self.ledger.iter().map(|r| r.2).sum()
    }

    /// Replace the ledger with the contents of `queues`, queued in row-major order.
    pub fn sync_ledger(&mut self, queues: &Array2<u64>) {
        self.ledger.clear();
        for ((m, j), &q) in queues.indexed_iter() {
            if q > 0 {
                self.ledger.push_back((m, j, q));
            }
        }
    }
}

impl Policy for FixedWindowPolicy {
    fn name(&self) -> &'static str {
        "fixed_window"
    }

    fn parameters(&self) -> String {
        let w: Vec<String> = self.thresholds.iter().map(u64::to_string).collect();
        format!("w={}", w.join("|"))
    }

    fn decide(&mut self, state: &NetworkState, costs: &UplinkCosts, _rng: &mut SimRng) -> AllocationDecision {
        let mut decision = AllocationDecision::zeros(state.sources(), state.max_cost());
        let mut remaining = self.slots as u64;
        for m in 0..state.sources() {
            let cost = u64::from(costs.costs[m]);
            if state.aoi[m] >= self.thresholds[m] && remaining >= cost {
                decision.uplink[m] = true;
                remaining -= cost;
            }
        }
        while let Some(head) = self.ledger.front_mut() {
            let (m, j, count) = *head;
            let cost = (j + 1) as u64;
            let fit = (remaining / cost).min(count);
            debug_assert!(decision.downlink[[m, j]] + fit <= state.queues[[m, j]]);
            decision.downlink[[m, j]] += fit;
            remaining -= fit * cost;
            if fit < count {
                head.2 -= fit;
                break;
            }
            self.ledger.pop_front();
        }
        decision
    }

    fn observe_arrivals(&mut self, _frame: u64, arrivals: &ArrivalBatch) {
        debug_assert_eq!(arrivals.counts.ncols(), self.max_cost);
        for ((m, j), &c) in arrivals.counts.indexed_iter() {
            if c > 0 {
                self.ledger.push_back((m, j, c));
            }
        }
    }
}
