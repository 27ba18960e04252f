//! Static system configuration and the random processes that drive a run.
//!
//! Slot costs follow the Shannon-rate ceiling
//!
//! ```text
//! kappa = ceil( L / (B * log2(1 + P*g/N0) * dT) )
//! ```
//!
//! for both directions. Uplink costs vary per frame, either through a Markov
//! chain over channel power gains (`physical` mode) or by direct i.i.d. sampling
//! from a user-given pmf over `{1, .., N}` (`direct` mode). Downlink costs are not
//! simulated per user: requests arrive already bucketed into `(source, cost)`
//! queues with Poisson counts.

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Poisson;

use crate::region::ArrivalMatrix;
use crate::{Error, Result};

/// Ratios within this distance of an integer are snapped before taking the ceiling.
pub const CEIL_SNAP: f64 = 1e-9;

/// Ceiling that absorbs floating-point noise around integers.
pub fn ceil_snapped(x: f64) -> f64 {
    let nearest = x.round();
    if (x - nearest).abs() <= CEIL_SNAP {
        nearest
    } else {
        x.ceil()
    }
}

/// Physical-layer constants shared by every link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkBudget {
    /// Bandwidth in Hz.
    pub bandwidth: f64,
    /// Slot duration in seconds.
    pub slot_duration: f64,
    /// Source-node transmit power in W.
    pub power_sn: f64,
    /// Base-station transmit power in W.
    pub power_bs: f64,
    /// Noise power at the base station in W.
    pub noise_bs: f64,
    /// Noise power at a mobile user in W.
    pub noise_mu: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            bandwidth: 1e6,
            slot_duration: 1e-3,
            power_sn: 1.0,
            power_bs: 1.0,
            noise_bs: 1.0,
            noise_mu: 1.0,
        }
    }
}

impl LinkBudget {
    fn validate(&self) -> Result<()> {
        let fields = [
            ("bandwidth", self.bandwidth),
            ("slot_duration", self.slot_duration),
            ("power_sn", self.power_sn),
            ("power_bs", self.power_bs),
            ("noise_bs", self.noise_bs),
            ("noise_mu", self.noise_mu),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        Ok(())
    }
}

/// Bits deliverable in one slot: `B * log2(1 + P*g/N0) * dT`.
pub fn bits_per_slot(bandwidth: f64, power: f64, gain: f64, noise: f64, slot_duration: f64) -> f64 {
    bandwidth * (power * gain / noise).ln_1p() / std::f64::consts::LN_2 * slot_duration
}

fn slot_cost(
    length: f64,
    bandwidth: f64,
    power: f64,
    gain: f64,
    noise: f64,
    slot_duration: f64,
) -> Result<u32> {
    let inputs = [
        ("length", length),
        ("bandwidth", bandwidth),
        ("power", power),
        ("gain", gain),
        ("noise", noise),
        ("slot_duration", slot_duration),
    ];
    for (name, value) in inputs {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Parameter(format!("{name} must be positive and finite, got {value}")));
        }
    }
    let rate = bits_per_slot(bandwidth, power, gain, noise, slot_duration);
    if !(rate > 0.0) {
        return Err(Error::Parameter(format!("per-slot rate underflows to {rate}")));
    }
    let slots = ceil_snapped(length / rate);
    if slots > f64::from(u32::MAX) {
        return Err(Error::Parameter(format!("slot cost {slots} does not fit in u32")));
    }
    Ok((slots as u32).max(1))
}

/// Number of slots needed to upload a message of `length` bits from a source node.
pub fn uplink_slot_cost(
    length: f64,
    bandwidth: f64,
    power_sn: f64,
    gain: f64,
    noise_bs: f64,
    slot_duration: f64,
) -> Result<u32> {
    slot_cost(length, bandwidth, power_sn, gain, noise_bs, slot_duration)
}

/// Number of slots needed to send a cached message of `length` bits to a user.
pub fn downlink_slot_cost(
    length: f64,
    bandwidth: f64,
    power_bs: f64,
    gain: f64,
    noise_mu: f64,
    slot_duration: f64,
) -> Result<u32> {
    slot_cost(length, bandwidth, power_bs, gain, noise_mu, slot_duration)
}

/// Finite-state Markov chain over uplink channel power gains.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    pub gains: Vec<f64>,
    /// Row-stochastic transition matrix, `transition[from][to]`.
    pub transition: Vec<Vec<f64>>,
}

impl ChannelModel {
    pub fn new(gains: Vec<f64>, transition: Vec<Vec<f64>>) -> Result<Self> {
        if gains.is_empty() {
            return Err(Error::Config("channel_states must not be empty".into()));
        }
        if let Some(g) = gains.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::Config(format!("channel gains must be positive, got {g}")));
        }
        if transition.len() != gains.len() {
            return Err(Error::Config(format!(
                "channel_transition has {} rows for {} states",
                transition.len(),
                gains.len()
            )));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != gains.len() {
                return Err(Error::Config(format!("channel_transition row {i} has {} entries", row.len())));
            }
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::Config(format!("channel_transition row {i} has a negative entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::Config(format!("channel_transition row {i} sums to {total}")));
            }
        }
        Ok(Self { gains, transition })
    }
}

/// Per-source channel state driven by a shared [`ChannelModel`].
#[derive(Debug, Clone)]
pub struct ChannelProcess {
    model: ChannelModel,
    rows: Vec<WeightedIndex<f64>>,
    state: Vec<usize>,
}

impl ChannelProcess {
    /// Every source starts in `initial_state`.
    pub fn new(model: ChannelModel, sources: usize, initial_state: usize) -> Result<Self> {
        if initial_state >= model.gains.len() {
            return Err(Error::Config(format!("initial channel state {initial_state} out of range")));
        }
        let rows = model
            .transition
            .iter()
            .map(|row| WeightedIndex::new(row.iter().copied()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::Config(format!("channel_transition: {e}")))?;
        Ok(Self {
            model,
            rows,
            state: vec![initial_state; sources],
        })
    }

    pub fn states(&self) -> &[usize] {
        &self.state
    }

    pub fn gain(&self, source: usize) -> f64 {
        self.model.gains[self.state[source]]
    }

    pub fn model(&self) -> &ChannelModel {
        &self.model
    }
}

/// Advance every source's channel by one frame and return the new states.
pub fn step_channel<'a, R: Rng + ?Sized>(process: &'a mut ChannelProcess, rng: &mut R) -> &'a [usize] {
    for s in process.state.iter_mut() {
        *s = process.rows[*s].sample(rng);
    }
    &process.state
}

/// How uplink slot costs are produced each frame.
#[derive(Debug, Clone, PartialEq)]
pub enum UplinkModel {
    /// Costs computed from a Markov gain process via the rate formula.
    Physical { channel: ChannelModel },
    /// Costs drawn i.i.d. per source and frame; `pmf[i]` is `P(cost = i + 1)`.
    Direct { pmf: Vec<f64> },
}

/// The uplink slot costs observed in one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UplinkCosts {
    /// Slots needed to upload each message this frame.
    pub costs: Vec<u32>,
    /// Largest cost any source can ever need (`K̂`).
    pub khat: u32,
}

impl UplinkCosts {
    pub fn new(costs: Vec<u32>, khat: u32) -> Self {
        debug_assert!(costs.iter().all(|&c| c >= 1 && c <= khat));
        Self { costs, khat }
    }

    pub fn uniform(sources: usize, cost: u32) -> Self {
        Self {
            costs: vec![cost; sources],
            khat: cost,
        }
    }
}

/// Weight of the linear age drift relative to the penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgeDriftWeight {
    /// `M * Kbar * max(lambda + epsilon(lambda))`, the value under which the
    /// performance bounds hold.
    Auto,
    Fixed(f64),
}

/// All static parameters of one system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Number of source nodes / cached messages.
    pub sources: usize,
    /// Slots per frame.
    pub slots: usize,
    /// Largest downlink slot cost; request queues are indexed by cost `1..=max_downlink_cost`.
    pub max_downlink_cost: usize,
    /// Message lengths in bits, one per source.
    pub message_lengths: Vec<f64>,
    pub link: LinkBudget,
    /// Weight of the served-AoI penalty against the delay term.
    pub tradeoff: f64,
    pub drift_weight: AgeDriftWeight,
    pub uplink: UplinkModel,
    /// Mean arrivals per frame for each `(source, cost)` queue.
    pub arrivals: ArrivalMatrix,
}

impl SystemConfig {
    /// Small direct-mode configuration; handy for tests and examples.
    pub fn direct(slots: usize, uplink_pmf: Vec<f64>, arrivals: ArrivalMatrix, tradeoff: f64) -> Result<Self> {
        let config = Self {
            sources: arrivals.sources(),
            slots,
            max_downlink_cost: arrivals.max_cost(),
            message_lengths: vec![1000.0; arrivals.sources()],
            link: LinkBudget::default(),
            tradeoff,
            drift_weight: AgeDriftWeight::Auto,
            uplink: UplinkModel::Direct { pmf: uplink_pmf },
            arrivals,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sources == 0 || self.slots == 0 || self.max_downlink_cost == 0 {
            return Err(Error::Config("M, N and Kbar must all be at least 1".into()));
        }
        if self.message_lengths.len() != self.sources {
            return Err(Error::Config(format!(
                "expected {} message lengths, got {}",
                self.sources,
                self.message_lengths.len()
            )));
        }
        if let Some(l) = self.message_lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::Config(format!("message lengths must be positive, got {l}")));
        }
        self.link.validate()?;
        if !(self.tradeoff.is_finite() && self.tradeoff >= 0.0) {
            return Err(Error::Config(format!("V must be nonnegative, got {}", self.tradeoff)));
        }
        if let AgeDriftWeight::Fixed(w) = self.drift_weight {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Config(format!("V0 must be positive, got {w}")));
            }
        }
        if self.arrivals.sources() != self.sources || self.arrivals.max_cost() != self.max_downlink_cost {
            return Err(Error::Config(format!(
                "lambda is {}x{}, expected {}x{}",
                self.arrivals.sources(),
                self.arrivals.max_cost(),
                self.sources,
                self.max_downlink_cost
            )));
        }
        if let UplinkModel::Direct { pmf } = &self.uplink {
            if pmf.is_empty() || pmf.len() > self.slots {
                return Err(Error::Config(format!(
                    "uplink_kappa_pmf must have between 1 and N={} entries, got {}",
                    self.slots,
                    pmf.len()
                )));
            }
            if pmf.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::Config("uplink_kappa_pmf entries must be nonnegative".into()));
            }
            let total: f64 = pmf.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("uplink_kappa_pmf sums to {total}")));
            }
        }
        current_khat(self).map(|_| ())
    }
}

/// Largest uplink slot cost over every source and every reachable channel state.
pub fn current_khat(config: &SystemConfig) -> Result<u32> {
    let khat = match &config.uplink {
        UplinkModel::Direct { pmf } => pmf
            .iter()
            .rposition(|p| *p > 0.0)
            .map(|i| i as u32 + 1)
            .ok_or_else(|| Error::Config("uplink_kappa_pmf has no positive entry".into()))?,
        UplinkModel::Physical { channel } => {
            let mut worst = 0;
            for &length in &config.message_lengths {
                for &gain in &channel.gains {
                    let cost = uplink_slot_cost(
                        length,
                        config.link.bandwidth,
                        config.link.power_sn,
                        gain,
                        config.link.noise_bs,
                        config.link.slot_duration,
                    )?;
                    worst = worst.max(cost);
                }
            }
            worst
        }
    };
    if khat as usize > config.slots {
        return Err(Error::Config(format!(
            "largest uplink cost {khat} exceeds the frame size N={}",
            config.slots
        )));
    }
    Ok(khat)
}

/// Produces the per-frame uplink costs of a run.
#[derive(Debug, Clone)]
pub struct UplinkCostSource {
    kind: CostSourceKind,
    sources: usize,
    khat: u32,
}

#[derive(Debug, Clone)]
enum CostSourceKind {
    Direct(WeightedIndex<f64>),
    Physical {
        process: ChannelProcess,
        /// `table[source][state]` slot cost.
        table: Vec<Vec<u32>>,
    },
}

impl UplinkCostSource {
    pub fn new(config: &SystemConfig) -> Result<Self> {
        let khat = current_khat(config)?;
        let kind = match &config.uplink {
            UplinkModel::Direct { pmf } => CostSourceKind::Direct(
                WeightedIndex::new(pmf.iter().copied())
                    .map_err(|e| Error::Config(format!("uplink_kappa_pmf: {e}")))?,
            ),
            UplinkModel::Physical { channel } => {
                let table = config
                    .message_lengths
                    .iter()
                    .map(|&length| {
                        channel
                            .gains
                            .iter()
                            .map(|&gain| {
                                uplink_slot_cost(
                                    length,
                                    config.link.bandwidth,
                                    config.link.power_sn,
                                    gain,
                                    config.link.noise_bs,
                                    config.link.slot_duration,
                                )
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                CostSourceKind::Physical {
                    process: ChannelProcess::new(channel.clone(), config.sources, 0)?,
                    table,
                }
            }
        };
        Ok(Self {
            kind,
            sources: config.sources,
            khat,
        })
    }

    pub fn khat(&self) -> u32 {
        self.khat
    }

    /// Costs for the current frame. Direct mode draws fresh costs here.
    pub fn observe<R: Rng + ?Sized>(&mut self, rng: &mut R) -> UplinkCosts {
        let costs = match &self.kind {
            CostSourceKind::Direct(dist) => (0..self.sources).map(|_| dist.sample(rng) as u32 + 1).collect(),
            CostSourceKind::Physical { process, table } => process
                .states()
                .iter()
                .enumerate()
                .map(|(m, &s)| table[m][s])
                .collect(),
        };
        UplinkCosts::new(costs, self.khat)
    }

    /// Move to the next frame's channel state.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        if let CostSourceKind::Physical { process, .. } = &mut self.kind {
            step_channel(process, rng);
        }
    }
}

/// Request arrivals `c[m, k-1]` in one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrivalBatch {
    pub counts: Array2<u64>,
}

impl ArrivalBatch {
    pub fn zeros(sources: usize, max_cost: usize) -> Self {
        Self {
            counts: Array2::zeros((sources, max_cost)),
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.sum()
    }
}

/// Independent Poisson samplers, one per queue.
#[derive(Debug, Clone)]
pub struct ArrivalSampler {
    dists: Array2<Option<Poisson<f64>>>,
}

impl ArrivalSampler {
    pub fn new(means: &ArrivalMatrix) -> Self {
        let dists = means
            .as_array()
            .mapv(|lambda| if lambda > 0.0 { Poisson::new(lambda).ok() } else { None });
        Self { dists }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ArrivalBatch {
        let counts = self
            .dists
            .map(|d| d.as_ref().map_or(0, |p| p.sample(rng) as u64));
        ArrivalBatch { counts }
    }
}

/// Draw one frame of Poisson arrivals.
pub fn sample_arrivals<R: Rng + ?Sized>(means: &ArrivalMatrix, rng: &mut R) -> ArrivalBatch {
    ArrivalSampler::new(means).sample(rng)
}
