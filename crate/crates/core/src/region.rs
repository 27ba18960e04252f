//! Inner and outer approximations of the set of supportable arrival matrices.
//!
//! A mean arrival matrix `lambda` can be supported only if its slot demand fits
//! in a frame (the outer set):
//!
//! ```text
//! sum_{m,k} k * lambda[m,k] <= N
//! ```
//!
//! and it is guaranteed supportable (by the randomized reservation policy)
//! whenever the inner condition holds:
//!
//! ```text
//! Khat + sum_k k * ceil(lambda_k) <= N,    lambda_k = sum_m lambda[m,k]
//! ```
//!
//! The inner condition is a sufficient test for the existence of a policy with
//! finite cost; failing it proves nothing.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::model::ceil_snapped;
use crate::{Error, Result};

/// Default absolute tolerance of the `epsilon` bisection.
pub const DEFAULT_EPSILON_TOL: f64 = 1e-9;

/// Exact enumeration refuses beyond this many lattice cells.
pub const EXACT_CELL_LIMIT: f64 = 1e7;

/// Mean arrivals per frame, `M x Kbar`; column `k - 1` holds cost-`k` requests.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalMatrix {
    means: Array2<f64>,
}

impl ArrivalMatrix {
    pub fn new(means: Array2<f64>) -> Result<Self> {
        if means.nrows() == 0 || means.ncols() == 0 {
            return Err(Error::Parameter("arrival matrix must be at least 1x1".into()));
        }
        if let Some(v) = means.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Parameter(format!("arrival means must be nonnegative, got {v}")));
        }
        Ok(Self { means })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(Error::Parameter("arrival matrix rows have different lengths".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let means = Array2::from_shape_vec((rows.len(), ncols), flat)
            .map_err(|e| Error::Parameter(e.to_string()))?;
        Self::new(means)
    }

    pub fn zeros(sources: usize, max_cost: usize) -> Self {
        Self {
            means: Array2::zeros((sources, max_cost)),
        }
    }

    pub fn sources(&self) -> usize {
        self.means.nrows()
    }

    pub fn max_cost(&self) -> usize {
        self.means.ncols()
    }

    /// Mean of queue `(source, cost)`; `source` is 0-based, `cost` is 1-based.
    pub fn get(&self, source: usize, cost: usize) -> f64 {
        self.means[[source, cost - 1]]
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.means
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.means.rows().into_iter().map(|r| r.to_vec()).collect()
    }

    /// Per-cost totals `lambda_k = sum_m lambda[m,k]`.
    pub fn cost_totals(&self) -> Vec<f64> {
        self.means.columns().into_iter().map(|c| c.sum()).collect()
    }

    /// Total request rate `sum_{m,k} lambda[m,k]`.
    pub fn total(&self) -> f64 {
        self.means.sum()
    }

    /// Slot demand per frame `sum_{m,k} k * lambda[m,k]`, the "sum arrival rate".
    pub fn slot_load(&self) -> f64 {
        self.means
            .indexed_iter()
            .map(|((_, j), &l)| (j + 1) as f64 * l)
            .sum()
    }

    pub fn max_entry(&self) -> f64 {
        self.means.iter().copied().fold(0.0, f64::max)
    }

    /// `lambda + eps` in every entry.
    pub fn inflated(&self, eps: f64) -> Self {
        Self {
            means: self.means.mapv(|l| l + eps),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            means: self.means.mapv(|l| l * factor),
        }
    }
}

/// `N - sum k * lambda[m,k]`; nonnegative iff inside the outer set.
pub fn superset_slack(lambda: &ArrivalMatrix, slots: usize) -> f64 {
    slots as f64 - lambda.slot_load()
}

pub fn in_superset(lambda: &ArrivalMatrix, slots: usize) -> bool {
    superset_slack(lambda, slots) >= 0.0
}

/// Slots reserved by the reservation layout: `Khat + sum_k k * ceil(lambda_k)`.
pub fn reserved_slots(lambda: &ArrivalMatrix, khat: u32) -> f64 {
    f64::from(khat)
        + lambda
            .cost_totals()
            .iter()
            .enumerate()
            .map(|(j, &l)| (j + 1) as f64 * ceil_snapped(l))
            .sum::<f64>()
}

/// `N - (Khat + sum_k k * ceil(lambda_k))`; nonnegative iff inside the inner set.
pub fn subset_slack(lambda: &ArrivalMatrix, slots: usize, khat: u32) -> f64 {
    slots as f64 - reserved_slots(lambda, khat)
}

pub fn in_subset(lambda: &ArrivalMatrix, slots: usize, khat: u32) -> bool {
    subset_slack(lambda, slots, khat) >= 0.0
}

/// Sufficient condition for a finite-cost policy to exist. `false` is inconclusive.
pub fn solution_exists(lambda: &ArrivalMatrix, slots: usize, khat: u32) -> bool {
    in_subset(lambda, slots, khat)
}

/// Largest `eps >= 0` such that `lambda + eps` (every entry) stays in the inner set.
///
/// Bisects on the membership predicate to within `tol`, then snaps to the ceiling
/// breakpoint that bounds the constant piece containing the bisection result.
pub fn epsilon_of_lambda(lambda: &ArrivalMatrix, slots: usize, khat: u32, tol: f64) -> Result<f64> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::Parameter(format!("bisection tolerance must be positive, got {tol}")));
    }
    if !in_subset(lambda, slots, khat) {
        return Err(Error::Domain(format!(
            "lambda needs {} reserved slots but the frame has {slots}",
            reserved_slots(lambda, khat)
        )));
    }
    let member = |eps: f64| in_subset(&lambda.inflated(eps), slots, khat);

    let mut lo = 0.0;
    let mut hi = 1.0;
    while member(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e15 {
            return Err(Error::Domain("epsilon bracket diverged".into()));
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if member(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    // The reserved-slot count is constant on (b_prev, b]; the next breakpoint at
    // or after `lo` is where the first per-cost ceiling would step up.
    let sources = lambda.sources() as f64;
    let breakpoint = lambda
        .cost_totals()
        .iter()
        .map(|&l| (ceil_snapped(l + sources * lo) - l) / sources)
        .fold(f64::INFINITY, f64::min);
    if breakpoint.is_finite() && breakpoint >= 0.0 && lo - breakpoint <= tol && member(breakpoint) {
        Ok(breakpoint)
    } else {
        Ok(lo)
    }
}

/// Volume of the outer set: `(1/(M*Kbar)!) * prod_{m,k} N/k`.
pub fn superset_volume_analytic(sources: usize, max_cost: usize, slots: usize) -> f64 {
    let dims = sources * max_cost;
    let mut volume = 1.0;
    let mut i = 0;
    for _ in 0..sources {
        for k in 1..=max_cost {
            i += 1;
            // interleave the factorial to keep the running product in range
            volume *= slots as f64 / k as f64 / i as f64;
        }
    }
    debug_assert_eq!(i, dims);
    volume
}

/// Exact volume of the inner set by enumerating the ceiling cells.
///
/// For fixed `n_k = ceil(lambda_k) >= 1` the cell `{lambda_k in (n_k - 1, n_k]}`
/// over `M` nonnegative entries has volume `(n_k^M - (n_k - 1)^M) / M!`.
pub fn subset_volume_exact(sources: usize, max_cost: usize, slots: usize, khat: u32) -> Result<f64> {
    if sources == 0 || max_cost == 0 {
        return Err(Error::Parameter("M and Kbar must be at least 1".into()));
    }
    if khat as usize > slots {
        return Ok(0.0);
    }
    let budget = slots - khat as usize;
    let cells: f64 = (1..=max_cost).map(|k| (budget / k).max(1) as f64).product();
    if cells > EXACT_CELL_LIMIT {
        return Err(Error::SearchSpace {
            size: cells,
            limit: EXACT_CELL_LIMIT,
        });
    }
    let factorial: f64 = (1..=sources).map(|i| i as f64).product();
    let cell_volume = |n: usize| ((n as f64).powi(sources as i32) - ((n - 1) as f64).powi(sources as i32)) / factorial;

    fn walk(k: usize, max_cost: usize, budget: usize, acc: f64, cell: &dyn Fn(usize) -> f64) -> f64 {
        if k > max_cost {
            return acc;
        }
        // every remaining cost needs at least one unit
        let reserve: usize = ((k + 1)..=max_cost).sum();
        if budget < k + reserve {
            return 0.0;
        }
        let mut total = 0.0;
        let mut n = 1;
        while n * k + reserve <= budget {
            total += walk(k + 1, max_cost, budget - n * k, acc * cell(n), cell);
            n += 1;
        }
        total
    }
    Ok(walk(1, max_cost, budget, 1.0, &cell_volume))
}

/// Which set a Monte-Carlo volume estimate targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    Superset,
    Subset { khat: u32 },
}

/// Monte-Carlo volume with a 95% normal-approximation half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeEstimate {
    pub estimate: f64,
    pub half_width: f64,
    pub hits: u64,
    pub samples: u64,
}

impl VolumeEstimate {
    fn from_hits(hits: u64, samples: u64, box_volume: f64) -> Self {
        let p = hits as f64 / samples as f64;
        Self {
            estimate: box_volume * p,
            half_width: 1.96 * box_volume * (p * (1.0 - p) / samples as f64).sqrt(),
            hits,
            samples,
        }
    }
}

fn box_volume(sources: usize, max_cost: usize, slots: usize) -> f64 {
    (1..=max_cost)
        .map(|k| slots as f64 / k as f64)
        .product::<f64>()
        .powi(sources as i32)
}

fn count_hits<R: Rng + ?Sized>(
    kind: RegionKind,
    sources: usize,
    max_cost: usize,
    slots: usize,
    samples: u64,
    rng: &mut R,
) -> u64 {
    let n = slots as f64;
    let mut totals = vec![0.0; max_cost];
    let mut hits = 0;
    for _ in 0..samples {
        totals.iter_mut().for_each(|t| *t = 0.0);
        let mut load = 0.0;
        for _ in 0..sources {
            for (j, total) in totals.iter_mut().enumerate() {
                let k = (j + 1) as f64;
                let lambda = rng.random::<f64>() * n / k;
                *total += lambda;
                load += k * lambda;
            }
        }
        let inside = match kind {
            RegionKind::Superset => load <= n,
            RegionKind::Subset { khat } => {
                let reserved: f64 = totals
                    .iter()
                    .enumerate()
                    .map(|(j, &t)| (j + 1) as f64 * ceil_snapped(t))
                    .sum();
                f64::from(khat) + reserved <= n
            }
        };
        hits += u64::from(inside);
    }
    hits
}

/// Rejection-sampling volume over the box `prod_{m,k} [0, N/k]`.
pub fn volume_mc<R: Rng + ?Sized>(
    kind: RegionKind,
    sources: usize,
    max_cost: usize,
    slots: usize,
    samples: u64,
    rng: &mut R,
) -> Result<VolumeEstimate> {
    if samples == 0 {
        return Err(Error::Parameter("need at least one sample".into()));
    }
    let bx = box_volume(sources, max_cost, slots);
    if let RegionKind::Subset { khat } = kind {
        if khat as usize > slots {
            return Ok(VolumeEstimate::from_hits(0, samples, bx));
        }
    }
    let hits = count_hits(kind, sources, max_cost, slots, samples, rng);
    Ok(VolumeEstimate::from_hits(hits, samples, bx))
}

/// Volume of the inner set by rejection sampling.
pub fn subset_volume_mc<R: Rng + ?Sized>(
    sources: usize,
    max_cost: usize,
    slots: usize,
    khat: u32,
    samples: u64,
    rng: &mut R,
) -> Result<VolumeEstimate> {
    volume_mc(RegionKind::Subset { khat }, sources, max_cost, slots, samples, rng)
}

/// Same estimator split over `partitions` independently seeded streams.
///
/// The result depends only on `(seed, partitions)`, not on thread scheduling.
pub fn volume_mc_partitioned(
    kind: RegionKind,
    sources: usize,
    max_cost: usize,
    slots: usize,
    samples: u64,
    seed: u64,
    partitions: usize,
) -> Result<VolumeEstimate> {
    if samples == 0 || partitions == 0 {
        return Err(Error::Parameter("need at least one sample and one partition".into()));
    }
    let bx = box_volume(sources, max_cost, slots);
    if let RegionKind::Subset { khat } = kind {
        if khat as usize > slots {
            return Ok(VolumeEstimate::from_hits(0, samples, bx));
        }
    }
    let parts = partitions as u64;
    let hits: u64 = (0..parts)
        .into_par_iter()
        .map(|i| {
            let share = samples / parts + u64::from(i < samples % parts);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i);
            count_hits(kind, sources, max_cost, slots, share, &mut rng)
        })
        .sum();
    Ok(VolumeEstimate::from_hits(hits, samples, bx))
}

/// Membership answers for one arrival matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionVerdict {
    pub in_superset: bool,
    pub in_subset: bool,
    /// Present only inside the inner set.
    pub epsilon: Option<f64>,
    pub superset_slack: f64,
    pub subset_slack: f64,
}

impl RegionVerdict {
    pub const CSV_HEADER: &'static str = "in_superset,in_subset,epsilon,superset_slack,subset_slack";

    pub fn evaluate(lambda: &ArrivalMatrix, slots: usize, khat: u32) -> Self {
        let in_subset = in_subset(lambda, slots, khat);
        Self {
            in_superset: in_superset(lambda, slots),
            in_subset,
            epsilon: in_subset
                .then(|| epsilon_of_lambda(lambda, slots, khat, DEFAULT_EPSILON_TOL).ok())
                .flatten(),
            superset_slack: superset_slack(lambda, slots),
            subset_slack: subset_slack(lambda, slots, khat),
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.in_superset,
            self.in_subset,
            self.epsilon.map(|e| e.to_string()).unwrap_or_default(),
            self.superset_slack,
            self.subset_slack
        )
    }
}
