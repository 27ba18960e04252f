//! Self-checks run by `mec-sched validate`: solver equivalence, per-frame
//! optimality of the drift-plus-penalty decision, and the state update laws.

use std::fmt;

use ndarray::Array2;
use rand::Rng;

use crate::knapsack::{solve_bruteforce, Solver};
use crate::model::UplinkCosts;
use crate::policies::{build_instance, p3_objective, DppPolicy, Policy};
use crate::region::ArrivalMatrix;
use crate::simulator::{stream_rng, RngStream, SimRng};
use crate::state::{
    apply_aoi_update, apply_queue_update, slots_used, validate_allocation, AllocationDecision, AllocationError,
    NetworkState,
};

/// Outcome of one check family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckReport {
    pub name: &'static str,
    pub cases: u64,
    pub failures: u64,
    /// First failing case, if any.
    pub first_failure: Option<String>,
}

impl CheckReport {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            cases: 0,
            failures: 0,
            first_failure: None,
        }
    }

    fn record(&mut self, outcome: Result<(), String>) {
        self.cases += 1;
        if let Err(msg) = outcome {
            self.failures += 1;
            self.first_failure.get_or_insert(msg);
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {}/{} passed",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases - self.failures,
            self.cases
        )?;
        if let Some(msg) = &self.first_failure {
            write!(f, " (first failure: {msg})")?;
        }
        Ok(())
    }
}

/// A random small system state with its packing parameters.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub state: NetworkState,
    pub costs: UplinkCosts,
    pub lambda: ArrivalMatrix,
    pub tradeoff: f64,
    pub drift_weight: f64,
    pub slots: usize,
}

/// Draw a state with `M <= max_sources`, `Kbar <= max_cost`, `N <= max_slots`, `q <= max_queue`.
pub fn random_instance<R: Rng + ?Sized>(
    rng: &mut R,
    max_sources: usize,
    max_cost: usize,
    max_slots: usize,
    max_queue: u64,
) -> RandomInstance {
    let sources = rng.random_range(1..=max_sources);
    let kbar = rng.random_range(1..=max_cost);
    let slots = rng.random_range(1..=max_slots);
    let mut state = NetworkState::initial(sources, kbar);
    state.aoi = (0..sources).map(|_| rng.random_range(1..=10)).collect();
    state.queues = Array2::from_shape_simple_fn((sources, kbar), || rng.random_range(0..=max_queue));
    let costs = (0..sources).map(|_| rng.random_range(1..=slots as u32)).collect::<Vec<_>>();
    let khat = costs.iter().copied().max().unwrap_or(1);
    let lambda = ArrivalMatrix::new(Array2::from_shape_simple_fn((sources, kbar), || rng.random::<f64>())).expect("nonnegative");
    RandomInstance {
        state,
        costs: UplinkCosts::new(costs, khat),
        lambda,
        tradeoff: rng.random_range(0.0..5.0),
        drift_weight: rng.random_range(0.1..5.0),
        slots,
    }
}

/// `solver` against exhaustive enumeration on random packing instances.
pub fn knapsack_campaign(instances: u64, seed: u64, solver: Solver) -> CheckReport {
    let mut rng = stream_rng(seed, RngStream::Policy);
    let mut report = CheckReport::new("knapsack solver vs exhaustive enumeration");
    for i in 0..instances {
        let inst = random_instance(&mut rng, 3, 3, 12, 5);
        let items = build_instance(&inst.state, &inst.costs, &inst.lambda, inst.tradeoff, inst.drift_weight, inst.slots);
        let outcome = match solve_bruteforce(&items, inst.slots) {
            Err(e) => Err(format!("instance {i}: oracle refused: {e}")),
            Ok(reference) => {
                let got = solver(&items, inst.slots);
                if !got.is_feasible(&items, inst.slots) {
                    Err(format!("instance {i}: infeasible counts {:?}", got.counts))
                } else if (got.total_value - reference.total_value).abs() > 1e-9 {
                    Err(format!(
                        "instance {i}: value {} vs optimum {}",
                        got.total_value, reference.total_value
                    ))
                } else {
                    Ok(())
                }
            }
        };
        report.record(outcome);
    }
    report
}

/// Every allocation that satisfies the queue and frame constraints.
pub fn enumerate_allocations(queues: &Array2<u64>, uplink_costs: &[u32], slots: usize) -> Vec<AllocationDecision> {
    let (sources, kbar) = queues.dim();
    let cells = sources * kbar;
    let mut out = Vec::new();
    let mut current = AllocationDecision::zeros(sources, kbar);

    fn walk(
        idx: usize,
        cells: usize,
        kbar: usize,
        room: u64,
        queues: &Array2<u64>,
        uplink_costs: &[u32],
        current: &mut AllocationDecision,
        out: &mut Vec<AllocationDecision>,
    ) {
        if idx == cells + uplink_costs.len() {
            out.push(current.clone());
            return;
        }
        if idx < cells {
            let (m, j) = (idx / kbar, idx % kbar);
            let cost = (j + 1) as u64;
            let mut a = 0;
            while a <= queues[[m, j]] && a * cost <= room {
                current.downlink[[m, j]] = a;
                walk(idx + 1, cells, kbar, room - a * cost, queues, uplink_costs, current, out);
                a += 1;
            }
            current.downlink[[m, j]] = 0;
        } else {
            let m = idx - cells;
            current.uplink[m] = false;
            walk(idx + 1, cells, kbar, room, queues, uplink_costs, current, out);
            let cost = u64::from(uplink_costs[m]);
            if cost <= room {
                current.uplink[m] = true;
                walk(idx + 1, cells, kbar, room - cost, queues, uplink_costs, current, out);
                current.uplink[m] = false;
            }
        }
    }

    walk(0, cells, kbar, slots as u64, queues, uplink_costs, &mut current, &mut out);
    out
}

/// Drift-plus-penalty decisions against the best allocation found by enumeration.
pub fn decision_optimality_check(instances: u64, seed: u64, solver: Solver) -> CheckReport {
    let mut rng = stream_rng(seed.wrapping_add(1), RngStream::Policy);
    let mut report = CheckReport::new("per-frame decision vs exhaustive allocation search");
    for i in 0..instances {
        let inst = random_instance(&mut rng, 2, 2, 6, 4);
        let mut policy = DppPolicy::new(inst.lambda.clone(), inst.tradeoff, inst.drift_weight, inst.slots)
            .expect("valid weights")
            .with_solver(solver);
        let decision = policy.decide(&inst.state, &inst.costs, &mut rng);
        let outcome = if let Err(e) = validate_allocation(&decision, &inst.state.queues, &inst.costs.costs, inst.slots) {
            Err(format!("instance {i}: invalid decision: {e}"))
        } else {
            let value = |d: &AllocationDecision| p3_objective(d, &inst.state, &inst.lambda, inst.tradeoff, inst.drift_weight);
            let best = enumerate_allocations(&inst.state.queues, &inst.costs.costs, inst.slots)
                .iter()
                .map(value)
                .fold(f64::NEG_INFINITY, f64::max);
            let got = value(&decision);
            if (got - best).abs() > 1e-9 * best.abs().max(1.0) {
                Err(format!("instance {i}: objective {got} vs optimum {best}"))
            } else {
                Ok(())
            }
        };
        report.record(outcome);
    }
    report
}

/// Conservation, age floor and validator consistency on random `(x, Q, A, c)`.
pub fn update_law_suite(cases: u64, seed: u64) -> CheckReport {
    let mut rng: SimRng = stream_rng(seed.wrapping_add(2), RngStream::Policy);
    let mut report = CheckReport::new("state update laws");
    for i in 0..cases {
        report.record(check_update_case(&mut rng).map_err(|e| format!("case {i}: {e}")));
    }
    report
}

fn check_update_case<R: Rng + ?Sized>(rng: &mut R) -> Result<(), String> {
    let sources = rng.random_range(1..=4);
    let kbar = rng.random_range(1..=3);
    let slots = rng.random_range(1..=20usize);
    let aoi: Vec<u64> = (0..sources).map(|_| rng.random_range(1..=50)).collect();
    let queues = Array2::from_shape_simple_fn((sources, kbar), || rng.random_range(0..=6u64));
    let arrivals = Array2::from_shape_simple_fn((sources, kbar), || rng.random_range(0..=4u64));
    let costs: Vec<u32> = (0..sources).map(|_| rng.random_range(1..=slots as u32)).collect();
    // allocations straddle both constraints so both outcomes are exercised
    let decision = AllocationDecision {
        downlink: Array2::from_shape_simple_fn((sources, kbar), || rng.random_range(0..=7u64)),
        uplink: (0..sources).map(|_| rng.random_bool(0.5)).collect(),
    };

    let within_queues = decision.downlink.iter().zip(queues.iter()).all(|(a, q)| a <= q);
    let used = slots_used(&decision, &costs);
    let expected_ok = within_queues && used <= slots as u64;
    match validate_allocation(&decision, &queues, &costs, slots) {
        Ok(()) if !expected_ok => return Err("validator accepted a violating allocation".into()),
        Err(e) if expected_ok => return Err(format!("validator rejected a feasible allocation: {e}")),
        Err(AllocationError::QueueExceeded { .. }) if within_queues => {
            return Err("queue violation reported for a queue-feasible allocation".into())
        }
        Err(AllocationError::FrameExceeded { .. }) if !within_queues => {
            return Err("frame violation reported before a queue violation".into())
        }
        _ => {}
    }

    let next_q = apply_queue_update(&queues, &decision, &arrivals);
    for ((idx, &q), &q_next) in queues.indexed_iter().zip(next_q.iter()) {
        let a = decision.downlink[idx];
        if q_next - arrivals[idx] + a.min(q) != q {
            return Err(format!("queue {idx:?} not conserved"));
        }
    }
    let next_x = apply_aoi_update(&aoi, &decision);
    if next_x.iter().any(|&x| x < 1) {
        return Err("age dropped below 1".into());
    }
    if next_q != apply_queue_update(&queues, &decision, &arrivals) || next_x != apply_aoi_update(&aoi, &decision) {
        return Err("update is not deterministic".into());
    }
    Ok(())
}

/// The three check families with their default sizes.
pub fn run_all(seed: u64, solver: Solver) -> Vec<CheckReport> {
    vec![
        knapsack_campaign(500, seed, solver),
        decision_optimality_check(500, seed, solver),
        update_law_suite(100_000, seed),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knapsack::{solve_dp, KnapsackItem, KnapsackSolution};

    fn drop_last(items: &[KnapsackItem], capacity: usize) -> KnapsackSolution {
        let mut s = solve_dp(&items[..items.len().saturating_sub(1)], capacity);
        s.counts.push(0);
        s
    }

    #[test]
    fn enumeration_counts() {
        // q = [[1]], one uplink of cost 1, N = 1: {0,0}, {1,0}, {0,1}
        let all = enumerate_allocations(&ndarray::array![[1]], &[1], 1);
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn sound_solver_passes() {
        assert!(knapsack_campaign(100, 3, solve_dp).passed());
        assert!(decision_optimality_check(100, 3, solve_dp).passed());
        assert!(update_law_suite(2_000, 3).passed());
    }

    #[test]
    fn broken_solver_is_caught() {
        assert!(!knapsack_campaign(200, 3, drop_last).passed());
        assert!(!decision_optimality_check(200, 3, drop_last).passed());
    }
}
