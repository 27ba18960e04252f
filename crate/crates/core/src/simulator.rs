//! Frame loop and run metrics.
//!
//! Each frame `t`:
//!
//! 1. observe the uplink costs,
//! 2. ask the policy for an allocation and validate it,
//! 3. accumulate statistics on the pre-decision state (after warmup),
//! 4. draw arrivals, update the per-request ledger,
//! 5. apply the AoI and queue updates, advance the channel.
//!
//! A request that arrives in frame `t` joins the queue seen at `t + 1`; if it is
//! served in frame `s` its delay is `s - t + 1`.

use std::collections::VecDeque;
use std::io::Write;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{ArrivalSampler, SystemConfig, UplinkCostSource};
use crate::policies::Policy;
use crate::state::{served_aoi_sum, slots_used, validate_allocation, NetworkState};
use crate::{Error, Result};

/// Generator used for every random stream of a run.
pub type SimRng = ChaCha8Rng;

/// Independent streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RngStream {
    Arrivals = 1,
    Channel = 2,
    Policy = 3,
    /// Sampling of arrival matrices in sweeps.
    Lambda = 4,
}

pub fn stream_rng(seed: u64, stream: RngStream) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    pub frames: u64,
    /// Frames `1..=warmup` are excluded from every average.
    pub warmup: u64,
    pub seed: u64,
    pub trace: bool,
}

impl RunConfig {
    /// `frames` long with the default 10% warmup and no trace.
    pub fn new(frames: u64, seed: u64) -> Self {
        Self {
            frames,
            warmup: frames / 10,
            seed,
            trace: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.warmup >= self.frames {
            return Err(Error::Parameter(format!(
                "need 0 <= warmup < frames, got warmup {} and frames {}",
                self.warmup, self.frames
            )));
        }
        Ok(())
    }
}

/// Post-warmup running totals.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulators {
    pub frames: u64,
    /// `sum a[m,k] (x_m + 1)`.
    pub served_aoi: u64,
    pub served: u64,
    pub arrivals: u64,
    /// `sum lambda[m,k] q[m,k]` over frames.
    pub weighted_backlog: f64,
    /// `sum q[m,k]` over frames.
    pub backlog: u64,
    pub slots_used: u64,
    /// Sum of per-request delays for requests served after warmup.
    pub delay_sum: u64,
    pub delay_count: u64,
    pub served_per_queue: Array2<u64>,
    pub arrivals_per_queue: Array2<u64>,
}

impl Accumulators {
    pub fn new(sources: usize, max_cost: usize) -> Self {
        Self {
            frames: 0,
            served_aoi: 0,
            served: 0,
            arrivals: 0,
            weighted_backlog: 0.0,
            backlog: 0,
            slots_used: 0,
            delay_sum: 0,
            delay_count: 0,
            served_per_queue: Array2::zeros((sources, max_cost)),
            arrivals_per_queue: Array2::zeros((sources, max_cost)),
        }
    }
}

/// Served age over arrivals; absent without arrivals.
pub fn avg_aoi(acc: &Accumulators) -> Option<f64> {
    (acc.arrivals > 0).then(|| acc.served_aoi as f64 / acc.arrivals as f64)
}

/// Mean `x + 1` over served requests.
pub fn avg_aoi_served(acc: &Accumulators) -> Option<f64> {
    (acc.served > 0).then(|| acc.served_aoi as f64 / acc.served as f64)
}

/// `(1 / sum lambda) * timeavg sum lambda[m,k] q[m,k] + 1`.
pub fn avg_delay_formula(acc: &Accumulators, total_rate: f64) -> Option<f64> {
    (acc.frames > 0 && total_rate > 0.0).then(|| acc.weighted_backlog / acc.frames as f64 / total_rate + 1.0)
}

/// Little's-law delay: `timeavg sum q / sum lambda + 1`.
pub fn avg_delay_little(acc: &Accumulators, total_rate: f64) -> Option<f64> {
    (acc.frames > 0 && total_rate > 0.0).then(|| acc.backlog as f64 / acc.frames as f64 / total_rate + 1.0)
}

/// Mean of `departure - arrival + 1` over served requests.
pub fn avg_delay_direct(acc: &Accumulators) -> Option<f64> {
    (acc.delay_count > 0).then(|| acc.delay_sum as f64 / acc.delay_count as f64)
}

/// `timeavg sum (V a (x + 1) + lambda q)`.
pub fn objective_value(acc: &Accumulators, tradeoff: f64) -> f64 {
    if acc.frames == 0 {
        return 0.0;
    }
    (tradeoff * acc.served_aoi as f64 + acc.weighted_backlog) / acc.frames as f64
}

pub fn slot_utility(acc: &Accumulators, slots: usize) -> f64 {
    if acc.frames == 0 {
        return 0.0;
    }
    acc.slots_used as f64 / (slots as f64 * acc.frames as f64)
}

/// Least-squares slope of the total backlog over the last half of the series.
pub fn growth_slope(totals: &[u64]) -> f64 {
    let tail = &totals[totals.len() / 2..];
    let n = tail.len() as f64;
    if tail.len() < 2 {
        return 0.0;
    }
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = tail.iter().map(|&y| y as f64).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &y) in tail.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (y as f64 - mean_y);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// One `(frame, source, cost)` line of the trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRow {
    pub t: u64,
    /// 1-based.
    pub m: usize,
    /// 1-based.
    pub k: usize,
    pub x_m: u64,
    pub q_mk: u64,
    pub a_mk: u64,
    pub c_mk: u64,
    pub uplink_m: bool,
    pub slots_used: u64,
}

pub const TRACE_HEADER: &str = "t,m,k,x_m,q_mk,a_mk,c_mk,uplink_m,slots_used";

pub fn write_trace<W: Write>(rows: &[TraceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.t,
            r.m,
            r.k,
            r.x_m,
            r.q_mk,
            r.a_mk,
            r.c_mk,
            u8::from(r.uplink_m),
            r.slots_used
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub policy: String,
    pub seed: u64,
    pub frames: u64,
    pub tradeoff: f64,
    /// `sum k lambda[m,k]`, slots demanded per frame.
    pub sum_arrival_rate: f64,
    pub avg_aoi: Option<f64>,
    pub avg_aoi_served: Option<f64>,
    pub avg_delay_formula: Option<f64>,
    pub avg_delay_direct: Option<f64>,
    pub avg_delay_little: Option<f64>,
    pub objective: f64,
    pub slot_utility: f64,
    pub growth_slope: f64,
    pub arrivals: u64,
    pub served: u64,
    /// Requests served per post-warmup frame, per queue.
    pub service_rates: Array2<f64>,
    /// Total backlog at the start of every frame, warmup included.
    pub backlog_series: Vec<u64>,
    pub accumulators: Accumulators,
}

pub const REPORT_HEADER: &str =
    "policy,seed,T,V,sum_arrival_rate,avg_aoi,avg_delay_formula,avg_delay_direct,objective,slot_utility,growth_slope";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.policy,
            self.seed,
            self.frames,
            self.tradeoff,
            self.sum_arrival_rate,
            opt(self.avg_aoi),
            opt(self.avg_delay_formula),
            opt(self.avg_delay_direct),
            self.objective,
            self.slot_utility,
            self.growth_slope
        )
    }

    /// Header plus this row.
    pub fn to_csv(&self) -> String {
        format!("{REPORT_HEADER}\n{}\n", self.csv_row())
    }
}

/// Placeholder row for a `(policy, seed)` that could not run.
pub fn empty_report_row(policy: &str, seed: u64, frames: u64, tradeoff: f64, sum_arrival_rate: f64) -> String {
    format!("{policy},{seed},{frames},{tradeoff},{sum_arrival_rate},,,,,,")
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub trace: Option<Vec<TraceRow>>,
    pub final_state: NetworkState,
}

/// Simulate `run.frames` frames of `config` under `policy`.
pub fn run<P: Policy + ?Sized>(config: &SystemConfig, run: &RunConfig, policy: &mut P) -> Result<RunOutput> {
    config.validate()?;
    run.validate()?;
    let (sources, max_cost) = (config.sources, config.max_downlink_cost);
    let lambda = config.arrivals.as_array();

    let mut arrival_rng = stream_rng(run.seed, RngStream::Arrivals);
    let mut channel_rng = stream_rng(run.seed, RngStream::Channel);
    let mut policy_rng = stream_rng(run.seed, RngStream::Policy);
    let mut uplink = UplinkCostSource::new(config)?;
    let sampler = ArrivalSampler::new(&config.arrivals);

    let mut state = NetworkState::initial(sources, max_cost);
    let mut acc = Accumulators::new(sources, max_cost);
    // pending requests per queue as (arrival frame, count) runs, oldest first
    let mut ledger: Vec<VecDeque<(u64, u64)>> = vec![VecDeque::new(); sources * max_cost];
    let mut backlog_series = Vec::with_capacity(run.frames as usize);
    let mut trace = run.trace.then(Vec::new);

    for t in 1..=run.frames {
        backlog_series.push(state.total_queued());
        let costs = uplink.observe(&mut channel_rng);
        let decision = policy.decide(&state, &costs, &mut policy_rng);
        validate_allocation(&decision, &state.queues, &costs.costs, config.slots)
            .map_err(|violation| Error::Allocation { frame: t, violation })?;
        let used = slots_used(&decision, &costs.costs);
        let counted = t > run.warmup;

        if counted {
            acc.frames += 1;
            acc.served_aoi += served_aoi_sum(&state.aoi, &decision);
            acc.served += decision.served();
            acc.slots_used += used;
            acc.served_per_queue += &decision.downlink;
            for ((m, j), &q) in state.queues.indexed_iter() {
                acc.weighted_backlog += lambda[[m, j]] * q as f64;
                acc.backlog += q;
            }
        }

        let arrivals = sampler.sample(&mut arrival_rng);
        if counted {
            acc.arrivals += arrivals.total();
            acc.arrivals_per_queue += &arrivals.counts;
        }

        for ((m, j), &a) in decision.downlink.indexed_iter() {
            let queue = &mut ledger[m * max_cost + j];
            let mut left = a;
            while left > 0 {
                let front = queue.front_mut().expect("ledger matches queue lengths");
                let take = left.min(front.1);
                if counted {
                    acc.delay_sum += take * (t - front.0 + 1);
                    acc.delay_count += take;
                }
                front.1 -= take;
                left -= take;
                if front.1 == 0 {
                    queue.pop_front();
                }
            }
        }
        for ((m, j), &c) in arrivals.counts.indexed_iter() {
            if c > 0 {
                ledger[m * max_cost + j].push_back((t, c));
            }
        }
        policy.observe_arrivals(t, &arrivals);

        if let Some(rows) = trace.as_mut() {
            for ((m, j), &q) in state.queues.indexed_iter() {
                rows.push(TraceRow {
                    t,
                    m: m + 1,
                    k: j + 1,
                    x_m: state.aoi[m],
                    q_mk: q,
                    a_mk: decision.downlink[[m, j]],
                    c_mk: arrivals.counts[[m, j]],
                    uplink_m: decision.uplink[m],
                    slots_used: used,
                });
            }
        }

        state = state.advance(&decision, &arrivals);
        uplink.advance(&mut channel_rng);
    }

    let total_rate = config.arrivals.total();
    let counted_frames = acc.frames.max(1) as f64;
    let report = MetricsReport {
        policy: policy.name().to_string(),
        seed: run.seed,
        frames: run.frames,
        tradeoff: config.tradeoff,
        sum_arrival_rate: config.arrivals.slot_load(),
        avg_aoi: avg_aoi(&acc),
        avg_aoi_served: avg_aoi_served(&acc),
        avg_delay_formula: avg_delay_formula(&acc, total_rate),
        avg_delay_direct: avg_delay_direct(&acc),
        avg_delay_little: avg_delay_little(&acc, total_rate),
        objective: objective_value(&acc, config.tradeoff),
        slot_utility: slot_utility(&acc, config.slots),
        growth_slope: growth_slope(&backlog_series),
        arrivals: acc.arrivals,
        served: acc.served,
        service_rates: acc.served_per_queue.mapv(|s| s as f64 / counted_frames),
        backlog_series,
        accumulators: acc,
    };
    Ok(RunOutput {
        report,
        trace,
        final_state: state,
    })
}
