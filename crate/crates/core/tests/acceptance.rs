//! Acceptance suite: one test per criterion, each printing a single
//! `criterion NN: PASS|FAIL ...` line before asserting.
//!
//! Run with `cargo test -p mec-sched --test acceptance -- --nocapture` to see the lines.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use mec_sched::bounds::{aoi_upper_bound, constant_c, default_v0, delay_upper_bound, poisson_second_moments};
use mec_sched::cli::{sample_base_lambda, scale_to_load};
use mec_sched::knapsack::solve_dp;
use mec_sched::model::{AgeDriftWeight, SystemConfig};
use mec_sched::policies::{build_policy, DppPolicy, PolicyKind, StochasticPolicy};
use mec_sched::region::{
    epsilon_of_lambda, in_subset, in_superset, superset_volume_analytic, volume_mc_partitioned, ArrivalMatrix,
    RegionKind, DEFAULT_EPSILON_TOL,
};
use mec_sched::simulator::{run, MetricsReport, RunConfig};
use mec_sched::validate::{knapsack_campaign, update_law_suite};
use mec_sched::Error;

struct Verdict {
    id: u32,
    checks: Vec<(String, bool)>,
}

impl Verdict {
    fn new(id: u32) -> Self {
        Self { id, checks: Vec::new() }
    }

    fn check(&mut self, label: impl Into<String>, ok: bool) {
        self.checks.push((label.into(), ok));
    }

    fn finish(self) {
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.1).map(|c| c.0.as_str()).collect();
        if failed.is_empty() {
            println!("criterion {:02}: PASS ({} checks)", self.id, self.checks.len());
        } else {
            println!("criterion {:02}: FAIL ({} of {} checks failed)", self.id, failed.len(), self.checks.len());
        }
        for (label, ok) in &self.checks {
            println!("    [{}] {label}", if *ok { " ok " } else { "FAIL" });
        }
        assert!(failed.is_empty(), "criterion {} failed: {failed:?}", self.id);
    }
}

// ---------------------------------------------------------------- scenarios

const SMALL_SLOTS: usize = 12;
const UPLINK_PMF: [f64; 2] = [0.5, 0.5];

/// M = 2, Kbar = 2, Khat = 2, N = 12; per-cost totals (3.5, 2.5) leave epsilon = 0.25.
fn small_lambda() -> ArrivalMatrix {
    ArrivalMatrix::from_rows(&[vec![2.0, 1.5], vec![1.5, 1.0]]).unwrap()
}

fn small_system(tradeoff: f64) -> SystemConfig {
    SystemConfig::direct(SMALL_SLOTS, UPLINK_PMF.to_vec(), small_lambda(), tradeoff).unwrap()
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b
}

fn is_stable(report: &MetricsReport, total_rate: f64) -> bool {
    report.growth_slope.abs() < 0.01 * total_rate
}

struct StochasticRun {
    report: MetricsReport,
    offered: ndarray::Array2<u64>,
    elapsed: Duration,
}

const CRITERION3_FRAMES: u64 = 100_000;
const CRITERION3_SEED: u64 = 7;

fn criterion3_once() -> StochasticRun {
    let start = Instant::now();
    let config = small_system(1.0);
    let mut policy = StochasticPolicy::new(&config.arrivals, SMALL_SLOTS, 2).unwrap();
    let rc = RunConfig {
        frames: CRITERION3_FRAMES,
        warmup: 0,
        seed: CRITERION3_SEED,
        trace: false,
    };
    let out = run(&config, &rc, &mut policy).unwrap();
    StochasticRun {
        report: out.report,
        offered: policy.offered().clone(),
        elapsed: start.elapsed(),
    }
}

fn criterion3_run() -> &'static StochasticRun {
    static RUN: OnceLock<StochasticRun> = OnceLock::new();
    RUN.get_or_init(criterion3_once)
}

const CRITERION5_V: [f64; 3] = [1.0, 10.0, 100.0];
const CRITERION5_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct BoundRuns {
    /// (V, seed, report)
    runs: Vec<(f64, u64, MetricsReport)>,
    elapsed: Duration,
}

fn criterion5_runs() -> &'static BoundRuns {
    static RUNS: OnceLock<BoundRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let start = Instant::now();
        let grid: Vec<(f64, u64)> = CRITERION5_V
            .iter()
            .flat_map(|&v| CRITERION5_SEEDS.iter().map(move |&s| (v, s)))
            .collect();
        let runs = grid
            .par_iter()
            .map(|&(v, seed)| {
                let config = small_system(v);
                let mut policy = build_policy(PolicyKind::Dpp, &config, None).unwrap();
                let report = run(&config, &RunConfig::new(200_000, seed), &mut policy).unwrap().report;
                (v, seed, report)
            })
            .collect();
        BoundRuns {
            runs,
            elapsed: start.elapsed(),
        }
    })
}

const FRONTIER_SEED: u64 = 2024;
const FRONTIER_FRAMES: u64 = 20_000;

struct FrontierRuns {
    /// (target load, policy, report or None when the policy cannot be built)
    runs: Vec<(f64, PolicyKind, Option<MetricsReport>)>,
    lambda_light: ArrivalMatrix,
    lambda_heavy: ArrivalMatrix,
    elapsed: Duration,
}

fn frontier_system(lambda: ArrivalMatrix) -> SystemConfig {
    SystemConfig::direct(40, UPLINK_PMF.to_vec(), lambda, 1.0).unwrap()
}

fn criterion8_runs() -> &'static FrontierRuns {
    static RUNS: OnceLock<FrontierRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let start = Instant::now();
        let base = sample_base_lambda(10, 3, FRONTIER_SEED);
        let light = scale_to_load(&base, 15.0).unwrap();
        let heavy = scale_to_load(&base, 45.0).unwrap();
        let plan = vec![
            (15.0, PolicyKind::Dpp, light.clone()),
            (45.0, PolicyKind::Stochastic, heavy.clone()),
            (45.0, PolicyKind::Dpp, heavy.clone()),
            (45.0, PolicyKind::FixedWindow, heavy.clone()),
        ];
        let runs = plan
            .into_par_iter()
            .map(|(load, kind, lambda)| {
                let config = frontier_system(lambda);
                let report = match build_policy(kind, &config, None) {
                    Err(Error::Infeasible(_)) => None,
                    Err(e) => panic!("{e}"),
                    Ok(mut policy) => {
                        Some(run(&config, &RunConfig::new(FRONTIER_FRAMES, FRONTIER_SEED), &mut policy).unwrap().report)
                    }
                };
                (load, kind, report)
            })
            .collect();
        FrontierRuns {
            runs,
            lambda_light: light,
            lambda_heavy: heavy,
            elapsed: start.elapsed(),
        }
    })
}

// ---------------------------------------------------------------- criteria

#[test]
fn criterion_01_knapsack_matches_exhaustive_search() {
    let mut v = Verdict::new(1);
    let start = Instant::now();
    let report = knapsack_campaign(500, 1, solve_dp);
    let elapsed = start.elapsed();
    v.check(format!("{report}"), report.passed() && report.cases == 500);
    v.check(format!("runtime {elapsed:?} < 30 s"), elapsed < Duration::from_secs(30));
    v.finish();
}

#[test]
fn criterion_02_update_laws_hold_on_fuzzed_tuples() {
    let mut v = Verdict::new(2);
    let start = Instant::now();
    let report = update_law_suite(100_000, 2);
    let elapsed = start.elapsed();
    v.check(format!("{report}"), report.passed() && report.cases == 100_000);
    v.check(format!("runtime {elapsed:?} < 10 s"), elapsed < Duration::from_secs(10));
    v.finish();
}

#[test]
fn criterion_03_stochastic_policy_serves_at_arrival_rates() {
    let mut v = Verdict::new(3);
    let lambda = small_lambda();
    let eps = epsilon_of_lambda(&lambda, SMALL_SLOTS, 2, DEFAULT_EPSILON_TOL).unwrap();
    v.check(format!("lambda inside inner region with epsilon {eps} > 0"), in_subset(&lambda, SMALL_SLOTS, 2) && eps > 0.0);

    let result = criterion3_run();
    let frames = CRITERION3_FRAMES as f64;
    let totals = lambda.cost_totals();
    for ((m, j), &offered) in result.offered.indexed_iter() {
        let rate = lambda.as_array()[[m, j]];
        let sets = totals[j].ceil();
        let p = rate / sets;
        let sigma = (sets * p * (1.0 - p) / frames).sqrt();
        let empirical = offered as f64 / frames;
        v.check(
            format!(
                "queue ({},{}) service rate {empirical:.5} vs {rate} (3 sigma = {:.5}; realized departures {:.5}/frame)",
                m + 1,
                j + 1,
                3.0 * sigma,
                result.report.service_rates[[m, j]]
            ),
            (empirical - rate).abs() < 3.0 * sigma,
        );
    }
    let limit = 0.01 * lambda.total();
    v.check(
        format!("|growth slope| {:.5} < {limit}", result.report.growth_slope),
        result.report.growth_slope.abs() < limit,
    );
    v.check(format!("runtime {:?} < 60 s", result.elapsed), result.elapsed < Duration::from_secs(60));
    v.finish();
}

#[test]
fn criterion_04_epsilon_matches_fine_grid_search() {
    let mut v = Verdict::new(4);
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = Vec::new();
    let mut evaluated = 0;
    while evaluated < 200 {
        let sources = rng.random_range(1..=3);
        let kbar = rng.random_range(1..=3);
        let khat = rng.random_range(1..=3u32);
        let slots = rng.random_range(khat as usize + 1..=30);
        let scale = rng.random::<f64>() * (slots - khat as usize) as f64 / (sources * kbar * kbar) as f64;
        let rows: Vec<Vec<f64>> = (0..sources)
            .map(|_| (0..kbar).map(|_| rng.random::<f64>() * scale).collect())
            .collect();
        let lambda = ArrivalMatrix::from_rows(&rows).unwrap();
        if !in_subset(&lambda, slots, khat) {
            continue;
        }
        evaluated += 1;

        let member = |steps: u64| in_subset(&lambda.inflated(steps as f64 * 1e-6), slots, khat);
        // coarse pass in 1e-3 steps, then 1e-6 steps inside the last coarse cell
        let mut coarse = 0u64;
        while member(coarse + 1000) {
            coarse += 1000;
        }
        let mut fine = coarse;
        while fine < coarse + 1000 && member(fine + 1) {
            fine += 1;
        }
        let grid = fine as f64 * 1e-6;
        let eps = epsilon_of_lambda(&lambda, slots, khat, DEFAULT_EPSILON_TOL).unwrap();
        let same_cell = eps >= grid - 1e-12 && eps < grid + 1e-6;
        let consistent = in_subset(&lambda.inflated(eps), slots, khat)
            && !in_subset(&lambda.inflated(eps + 10.0 * DEFAULT_EPSILON_TOL), slots, khat);
        if !(same_cell && consistent) {
            mismatches.push(format!("{rows:?} N={slots} Khat={khat}: bisection {eps}, grid {grid}"));
        }
    }
    let elapsed = start.elapsed();
    v.check(
        format!("200 random lambdas, {} mismatches {:?}", mismatches.len(), mismatches.first()),
        mismatches.is_empty(),
    );
    v.check(format!("runtime {elapsed:?} < 30 s"), elapsed < Duration::from_secs(30));
    v.finish();
}

#[test]
fn criterion_05_simulated_averages_respect_bounds() {
    let mut v = Verdict::new(5);
    let lambda = small_lambda();
    let eps = epsilon_of_lambda(&lambda, SMALL_SLOTS, 2, DEFAULT_EPSILON_TOL).unwrap();
    let c = constant_c(&lambda, &poisson_second_moments(&lambda), SMALL_SLOTS).unwrap();
    let v0 = default_v0(&lambda, eps);
    v.check(format!("auto V0 = {v0}"), (v0 - 9.0).abs() < 1e-9 && small_system(1.0).drift_weight == AgeDriftWeight::Auto);

    let runs = criterion5_runs();
    for (tradeoff, seed, report) in &runs.runs {
        let aoi_bound = aoi_upper_bound(&lambda, eps, c, *tradeoff).unwrap();
        let delay_bound = delay_upper_bound(&lambda, eps, c, *tradeoff).unwrap();
        let aoi = report.avg_aoi.unwrap();
        let delay = report.avg_delay_formula.unwrap();
        v.check(format!("V={tradeoff} seed={seed}: AoI {aoi:.4} <= {aoi_bound:.4}"), aoi <= aoi_bound);
        v.check(
            format!("V={tradeoff} seed={seed}: delay {delay:.4} <= {delay_bound:.4}"),
            delay <= delay_bound,
        );
    }
    v.check(format!("runtime {:?} < 10 min", runs.elapsed), runs.elapsed < Duration::from_secs(600));
    v.finish();
}

#[test]
fn criterion_06_tradeoff_shape_in_v() {
    let mut v = Verdict::new(6);
    let grid: Vec<f64> = (0..8).map(|p| f64::from(1u32 << p)).collect();
    let seeds = [11u64, 12, 13, 14, 15];
    let cells: Vec<(usize, u64)> = (0..grid.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    let reports: Vec<(usize, MetricsReport)> = cells
        .par_iter()
        .map(|&(i, seed)| {
            let config = small_system(grid[i]);
            let mut policy = build_policy(PolicyKind::Dpp, &config, None).unwrap();
            (i, run(&config, &RunConfig::new(100_000, seed), &mut policy).unwrap().report)
        })
        .collect();
    let mean = |i: usize, f: &dyn Fn(&MetricsReport) -> f64| {
        let xs: Vec<f64> = reports.iter().filter(|r| r.0 == i).map(|r| f(&r.1)).collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    let delay: Vec<f64> = (0..grid.len()).map(|i| mean(i, &|r| r.avg_delay_formula.unwrap())).collect();
    let aoi: Vec<f64> = (0..grid.len()).map(|i| mean(i, &|r| r.avg_aoi.unwrap())).collect();
    for i in 1..grid.len() {
        v.check(
            format!("delay V={} -> V={}: {:.4} -> {:.4}", grid[i - 1], grid[i], delay[i - 1], delay[i]),
            delay[i] >= delay[i - 1] * 0.98,
        );
        v.check(
            format!("AoI V={} -> V={}: {:.4} -> {:.4}", grid[i - 1], grid[i], aoi[i - 1], aoi[i]),
            aoi[i] <= aoi[i - 1] * 1.02,
        );
    }
    let n = grid.len() as f64;
    let mx = grid.iter().sum::<f64>() / n;
    let my = delay.iter().sum::<f64>() / n;
    let sxy: f64 = grid.iter().zip(&delay).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = grid.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = delay.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = sxy * sxy / (sxx * syy);
    v.check(format!("delay-on-V slope {slope:.4} > 0"), slope > 0.0);
    v.check(format!("R^2 {r2:.4} > 0.8"), r2 > 0.8);
    v.finish();
}

#[test]
fn criterion_07_region_volumes() {
    let mut v = Verdict::new(7);
    let start = Instant::now();
    let shapes = [(1usize, 2usize), (1, 3), (2, 1)];
    for (i, &(m, k)) in shapes.iter().enumerate() {
        let analytic = superset_volume_analytic(m, k, 10);
        let est = volume_mc_partitioned(RegionKind::Superset, m, k, 10, 1_000_000, 70 + i as u64, 4).unwrap();
        v.check(
            format!("superset M={m} Kbar={k} N=10: MC {:.4} +- {:.4} vs {analytic:.4}", est.estimate, est.half_width),
            (est.estimate - analytic).abs() < 3.0 * est.half_width,
        );
        let mut ratios = Vec::new();
        for (j, &n) in [10usize, 40, 160].iter().enumerate() {
            let sub = volume_mc_partitioned(RegionKind::Subset { khat: 1 }, m, k, n, 1_000_000, 700 + 10 * i as u64 + j as u64, 4)
                .unwrap();
            ratios.push(sub.estimate / superset_volume_analytic(m, k, n));
        }
        v.check(
            format!("subset/superset ratio M={m} Kbar={k} over N=10,40,160: {ratios:.4?}"),
            ratios.windows(2).all(|w| w[1] > w[0]),
        );
    }
    let elapsed = start.elapsed();
    v.check(format!("runtime {elapsed:?} < 2 min"), elapsed < Duration::from_secs(120));
    v.finish();
}

#[test]
fn criterion_08_stability_frontier() {
    let mut v = Verdict::new(8);
    let runs = criterion8_runs();
    v.check(
        "load 45 lies outside the outer region",
        !in_superset(&runs.lambda_heavy, 40) && in_superset(&runs.lambda_light, 40),
    );
    for (load, kind, report) in &runs.runs {
        let lambda = if *load < 40.0 { &runs.lambda_light } else { &runs.lambda_heavy };
        let total = lambda.total();
        match report {
            None => v.check(
                format!("load {load}: {kind} cannot be built (layout exceeds the frame), skipped"),
                *kind == PolicyKind::Stochastic && !in_subset(lambda, 40, 2),
            ),
            Some(r) if *load < 40.0 => v.check(
                format!("load {load}: {kind} slope {:.4} < {:.4}", r.growth_slope, 0.01 * total),
                r.growth_slope < 0.01 * total,
            ),
            Some(r) => {
                let mean_cost = load / total;
                let floor = 0.5 * (load - 40.0) / mean_cost;
                v.check(
                    format!("load {load}: {kind} slope {:.4} > {floor:.4}", r.growth_slope),
                    r.growth_slope > floor,
                );
            }
        }
    }
    v.check(format!("runtime {:?} < 5 min", runs.elapsed), runs.elapsed < Duration::from_secs(300));
    v.finish();
}

#[test]
fn criterion_09_delay_estimators_agree_on_stable_runs() {
    let mut v = Verdict::new(9);
    let mut stable: Vec<(String, &MetricsReport)> = Vec::new();
    let small_total = small_lambda().total();
    let r3 = &criterion3_run().report;
    if is_stable(r3, small_total) {
        stable.push(("stochastic".into(), r3));
    }
    for (tradeoff, seed, r) in &criterion5_runs().runs {
        if is_stable(r, small_total) {
            stable.push((format!("dpp V={tradeoff} seed={seed}"), r));
        }
    }
    let frontier = criterion8_runs();
    for (load, kind, r) in &frontier.runs {
        let total = if *load < 40.0 { frontier.lambda_light.total() } else { frontier.lambda_heavy.total() };
        if let Some(r) = r {
            if is_stable(r, total) {
                stable.push((format!("{kind} load {load}"), r));
            }
        }
    }
    v.check(format!("{} stable runs found", stable.len()), !stable.is_empty());
    for (label, r) in stable {
        let formula = r.avg_delay_formula.unwrap();
        let direct = r.avg_delay_direct.unwrap();
        let gap = relative_gap(formula, direct);
        v.check(
            format!(
                "{label}: formula {formula:.4} vs direct {direct:.4} (gap {:.2}%, rate-free Little form {:.4})",
                100.0 * gap,
                r.avg_delay_little.unwrap()
            ),
            gap < 0.05,
        );
    }
    v.finish();
}

#[test]
fn criterion_10_repeated_run_is_byte_identical() {
    let mut v = Verdict::new(10);
    let first = criterion3_run().report.to_csv();
    let second = criterion3_once().report.to_csv();
    v.check(format!("report CSV {} bytes, identical", first.len()), first.as_bytes() == second.as_bytes());
    // a DPP run with its own seed as well
    let config = small_system(10.0);
    let make = || DppPolicy::new(config.arrivals.clone(), 10.0, 9.0, SMALL_SLOTS).unwrap();
    let a = run(&config, &RunConfig::new(20_000, 99), &mut make()).unwrap().report.to_csv();
    let b = run(&config, &RunConfig::new(20_000, 99), &mut make()).unwrap().report.to_csv();
    v.check("dpp report CSV identical", a == b);
    v.finish();
}
