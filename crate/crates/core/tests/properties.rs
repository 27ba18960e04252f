use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mec_sched::model::{ArrivalBatch, UplinkCosts};
use mec_sched::policies::{default_thresholds, DppPolicy, FixedWindowPolicy, Policy, StochasticPolicy};
use mec_sched::region::{epsilon_of_lambda, in_subset, in_superset, ArrivalMatrix, DEFAULT_EPSILON_TOL};
use mec_sched::state::{validate_allocation, AllocationDecision, NetworkState};

fn lambda_strategy() -> impl Strategy<Value = (ArrivalMatrix, usize, u32)> {
    (1usize..=3, 1usize..=3, 1u32..=4, 1usize..=30).prop_flat_map(|(m, k, khat, n)| {
        prop::collection::vec(0.0f64..3.0, m * k).prop_map(move |v| {
            let lambda = ArrivalMatrix::new(Array2::from_shape_vec((m, k), v).unwrap()).unwrap();
            (lambda, n, khat)
        })
    })
}

fn state_strategy() -> impl Strategy<Value = (NetworkState, AllocationDecision, Array2<u64>)> {
    (1usize..=4, 1usize..=3).prop_flat_map(|(m, k)| {
        (
            prop::collection::vec(1u64..100, m),
            prop::collection::vec(0u64..20, m * k),
            prop::collection::vec(0u64..20, m * k),
            prop::collection::vec(0u64..5, m * k),
            prop::collection::vec(any::<bool>(), m),
        )
            .prop_map(move |(aoi, q, a, c, up)| {
                let mut state = NetworkState::initial(m, k);
                state.aoi = aoi;
                state.queues = Array2::from_shape_vec((m, k), q).unwrap();
                let decision = AllocationDecision {
                    downlink: Array2::from_shape_vec((m, k), a).unwrap(),
                    uplink: up,
                };
                (state, decision, Array2::from_shape_vec((m, k), c).unwrap())
            })
    })
}

proptest! {
    #[test]
    fn advance_follows_update_laws((state, decision, arrivals) in state_strategy()) {
        let next = state.advance(&decision, &ArrivalBatch { counts: arrivals.clone() });
        prop_assert_eq!(next.frame, state.frame + 1);
        for m in 0..state.sources() {
            let expected = if decision.uplink[m] { 1 } else { state.aoi[m] + 1 };
            prop_assert_eq!(next.aoi[m], expected);
            prop_assert!(next.aoi[m] >= 1);
        }
        for (idx, &q) in state.queues.indexed_iter() {
            let served = decision.downlink[idx].min(q);
            prop_assert_eq!(next.queues[idx], q - served + arrivals[idx]);
        }
    }

    #[test]
    fn inner_region_sits_inside_outer_region((lambda, n, khat) in lambda_strategy()) {
        if in_subset(&lambda, n, khat) {
            prop_assert!(in_superset(&lambda, n));
        }
    }

    #[test]
    fn regions_are_downward_closed((lambda, n, khat) in lambda_strategy(), factor in 0.0f64..=1.0) {
        let smaller = lambda.scaled(factor);
        if in_superset(&lambda, n) {
            prop_assert!(in_superset(&smaller, n));
        }
        if in_subset(&lambda, n, khat) {
            prop_assert!(in_subset(&smaller, n, khat));
        }
    }

    #[test]
    fn epsilon_is_the_membership_boundary((lambda, n, khat) in lambda_strategy()) {
        match epsilon_of_lambda(&lambda, n, khat, DEFAULT_EPSILON_TOL) {
            Ok(eps) => {
                prop_assert!(eps >= 0.0);
                prop_assert!(in_subset(&lambda.inflated(eps), n, khat));
                prop_assert!(!in_subset(&lambda.inflated(eps + 10.0 * DEFAULT_EPSILON_TOL), n, khat));
            }
            Err(_) => prop_assert!(!in_subset(&lambda, n, khat)),
        }
    }
}

/// Random states far from any trajectory; every policy must still return a feasible allocation.
#[test]
fn policies_emit_feasible_allocations_on_random_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut policy_rng = ChaCha8Rng::seed_from_u64(32);
    let mut checked = 0u64;
    while checked < 100_000 {
        let m = rng.random_range(1..=4usize);
        let k = rng.random_range(1..=3usize);
        let n = rng.random_range(1..=24usize);
        let khat = rng.random_range(1..=n as u32);
        let raw = ArrivalMatrix::new(Array2::from_shape_simple_fn((m, k), || rng.random::<f64>())).unwrap();
        let lambda = raw.scaled(rng.random::<f64>() * n as f64 / raw.slot_load().max(1e-9));

        let mut state = NetworkState::initial(m, k);
        state.aoi = (0..m).map(|_| rng.random_range(1..=200)).collect();
        state.queues = Array2::from_shape_simple_fn((m, k), || rng.random_range(0..=30));
        let costs = UplinkCosts::new((0..m).map(|_| rng.random_range(1..=khat)).collect(), khat);

        let mut policies: Vec<Box<dyn Policy>> = vec![Box::new(
            DppPolicy::new(lambda.clone(), rng.random_range(0.0..50.0), rng.random_range(0.1..20.0), n).unwrap(),
        )];
        let mut window = FixedWindowPolicy::new(default_thresholds(&lambda), k, n).unwrap();
        window.sync_ledger(&state.queues);
        policies.push(Box::new(window));
        if in_subset(&lambda, n, khat) {
            policies.push(Box::new(StochasticPolicy::new(&lambda, n, khat).unwrap()));
        }

        for policy in &mut policies {
            let decision = policy.decide(&state, &costs, &mut policy_rng);
            if let Err(e) = validate_allocation(&decision, &state.queues, &costs.costs, n) {
                panic!("{} produced {decision} on queues {:?}: {e}", policy.name(), state.queues);
            }
            checked += 1;
        }
    }
}
