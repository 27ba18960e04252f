//! Scheduler-visible state and the per-frame update laws.
//!
//! Queues are stored as an `M x Kbar` matrix where column `k - 1` holds the
//! requests whose downlink costs `k` slots. An allocation carries the same
//! matrix of served counts plus one upload flag per message.

use std::fmt;

use ndarray::Array2;
use thiserror::Error;

use crate::model::ArrivalBatch;

/// AoI vector, request queues and frame counter at the start of a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkState {
    /// Age of each cached message in frames; always at least 1.
    pub aoi: Vec<u64>,
    /// `queues[[m, k - 1]]` is the number of pending requests for message `m` at cost `k`.
    pub queues: Array2<u64>,
    /// 1-based frame index.
    pub frame: u64,
}

impl NetworkState {
    /// Fresh caches (age 1) and empty queues at frame 1.
    pub fn initial(sources: usize, max_cost: usize) -> Self {
        Self {
            aoi: vec![1; sources],
            queues: Array2::zeros((sources, max_cost)),
            frame: 1,
        }
    }

    pub fn sources(&self) -> usize {
        self.aoi.len()
    }

    pub fn max_cost(&self) -> usize {
        self.queues.ncols()
    }

    pub fn total_queued(&self) -> u64 {
        self.queues.sum()
    }

    /// Apply a validated decision and the frame's arrivals, moving to the next frame.
    pub fn advance(&self, decision: &AllocationDecision, arrivals: &ArrivalBatch) -> Self {
        Self {
            aoi: apply_aoi_update(&self.aoi, decision),
            queues: apply_queue_update(&self.queues, decision, &arrivals.counts),
            frame: self.frame + 1,
        }
    }
}

/// One frame's slot allocation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AllocationDecision {
    /// Requests served per queue, same shape as the queue matrix.
    pub downlink: Array2<u64>,
    /// Whether each message is re-uploaded this frame.
    pub uplink: Vec<bool>,
}

impl AllocationDecision {
    pub fn zeros(sources: usize, max_cost: usize) -> Self {
        Self {
            downlink: Array2::zeros((sources, max_cost)),
            uplink: vec![false; sources],
        }
    }

    /// Build from an `M x (Kbar + 1)` matrix whose last column holds the upload flags.
    pub fn from_matrix(matrix: &Array2<u64>) -> Result<Self, AllocationError> {
        let (rows, cols) = matrix.dim();
        if cols < 2 {
            return Err(AllocationError::Shape(format!(
                "allocation matrix needs at least 2 columns, got {cols}"
            )));
        }
        let mut uplink = Vec::with_capacity(rows);
        for m in 0..rows {
            match matrix[[m, cols - 1]] {
                0 => uplink.push(false),
                1 => uplink.push(true),
                v => {
                    return Err(AllocationError::Shape(format!(
                        "upload entry for message {} must be 0 or 1, got {v}",
                        m + 1
                    )))
                }
            }
        }
        let downlink = matrix.slice(ndarray::s![.., ..cols - 1]).to_owned();
        Ok(Self { downlink, uplink })
    }

    /// The `M x (Kbar + 1)` matrix form.
    pub fn to_matrix(&self) -> Array2<u64> {
        let (rows, cols) = self.downlink.dim();
        Array2::from_shape_fn((rows, cols + 1), |(m, j)| {
            if j < cols {
                self.downlink[[m, j]]
            } else {
                u64::from(self.uplink[m])
            }
        })
    }

    pub fn served(&self) -> u64 {
        self.downlink.sum()
    }

    pub fn uploads(&self) -> usize {
        self.uplink.iter().filter(|u| **u).count()
    }
}

/// Why an allocation is rejected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AllocationError {
    /// Dimensions disagree with the state or the cost vector.
    #[error("structural error: {0}")]
    Shape(String),
    /// More requests served than are queued (1-based indices).
    #[error("queue ({source_index},{cost}) serves {served} requests but holds {queued}")]
    QueueExceeded {
        source_index: usize,
        cost: usize,
        served: u64,
        queued: u64,
    },
    /// More slots allocated than the frame has.
    #[error("allocation uses {used} slots but the frame has {slots}")]
    FrameExceeded { used: u64, slots: usize },
}

impl AllocationError {
    pub fn is_structural(&self) -> bool {
        matches!(self, AllocationError::Shape(_))
    }
}

/// Check the per-queue bound and the frame capacity.
pub fn validate_allocation(
    decision: &AllocationDecision,
    queues: &Array2<u64>,
    uplink_costs: &[u32],
    slots: usize,
) -> Result<(), AllocationError> {
    if decision.downlink.dim() != queues.dim() {
        return Err(AllocationError::Shape(format!(
            "downlink block is {:?}, queues are {:?}",
            decision.downlink.dim(),
            queues.dim()
        )));
    }
    if decision.uplink.len() != queues.nrows() || uplink_costs.len() != queues.nrows() {
        return Err(AllocationError::Shape(format!(
            "{} upload flags and {} uplink costs for {} messages",
            decision.uplink.len(),
            uplink_costs.len(),
            queues.nrows()
        )));
    }
    for ((m, j), &served) in decision.downlink.indexed_iter() {
        let queued = queues[[m, j]];
        if served > queued {
            return Err(AllocationError::QueueExceeded {
                source_index: m + 1,
                cost: j + 1,
                served,
                queued,
            });
        }
    }
    let used = slots_used(decision, uplink_costs);
    if used > slots as u64 {
        return Err(AllocationError::FrameExceeded { used, slots });
    }
    Ok(())
}

/// Uploaded messages restart at age 1; every other age grows by one frame.
pub fn apply_aoi_update(aoi: &[u64], decision: &AllocationDecision) -> Vec<u64> {
    aoi.iter()
        .zip(&decision.uplink)
        .map(|(&x, &up)| if up { 1 } else { x + 1 })
        .collect()
}

/// `q' = max(q - a, 0) + c`, elementwise.
pub fn apply_queue_update(queues: &Array2<u64>, decision: &AllocationDecision, arrivals: &Array2<u64>) -> Array2<u64> {
    let mut next = queues.clone();
    ndarray::Zip::from(&mut next)
        .and(&decision.downlink)
        .and(arrivals)
        .for_each(|q, &a, &c| *q = q.saturating_sub(a) + c);
    next
}

/// Total age of the requests served this frame: `sum a[m,k] * (x[m] + 1)`.
pub fn served_aoi_sum(aoi: &[u64], decision: &AllocationDecision) -> u64 {
    decision
        .downlink
        .rows()
        .into_iter()
        .zip(aoi)
        .map(|(row, &x)| row.sum() * (x + 1))
        .sum()
}

/// Slots consumed by uploads and downlink services.
pub fn slots_used(decision: &AllocationDecision, uplink_costs: &[u32]) -> u64 {
    let up: u64 = decision
        .uplink
        .iter()
        .zip(uplink_costs)
        .filter(|(u, _)| **u)
        .map(|(_, &c)| u64::from(c))
        .sum();
    let down: u64 = decision
        .downlink
        .indexed_iter()
        .map(|((_, j), &a)| (j as u64 + 1) * a)
        .sum();
    up + down
}

impl fmt::Display for AllocationDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (m, row) in self.downlink.rows().into_iter().enumerate() {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            writeln!(f, "[{} | {}]", cells.join(" "), u8::from(self.uplink[m]))?;
        }
        Ok(())
    }
}
