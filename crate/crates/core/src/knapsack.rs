//! Exact solver for the per-frame slot packing problem.
//!
//! Downlink items are bounded (serve up to `max_count` requests of one queue),
//! uplink items are 0-1. Both share one integer capacity: the slots in a frame.
//!
//! Ties are broken deterministically: maximum value first, then minimum total
//! weight, then the lexicographically smallest count vector in item order.
//! Items whose unit value is not strictly positive are never selected.

use crate::{Error, Result};

/// Largest number of feasible count vectors the exhaustive solver will visit.
pub const BRUTEFORCE_LIMIT: f64 = 1e7;

/// What an item stands for in the allocation matrix (0-based indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ItemKind {
    Downlink { source: usize, cost: usize },
    Uplink { source: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnapsackItem {
    pub kind: ItemKind,
    pub unit_value: f64,
    /// Slots per unit; at least 1.
    pub weight: usize,
    pub max_count: u64,
}

impl KnapsackItem {
    /// Copies usable under `capacity`; zero for items that can never help.
    fn usable(&self, capacity: usize) -> u64 {
        if self.unit_value > 0.0 && self.weight > 0 {
            self.max_count.min((capacity / self.weight) as u64)
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnapsackSolution {
    pub counts: Vec<u64>,
    pub total_value: f64,
    pub total_weight: usize,
}

impl KnapsackSolution {
    fn from_counts(items: &[KnapsackItem], counts: Vec<u64>) -> Self {
        let total_value = items.iter().zip(&counts).map(|(it, &c)| c as f64 * it.unit_value).sum();
        let total_weight = items.iter().zip(&counts).map(|(it, &c)| c as usize * it.weight).sum();
        Self {
            counts,
            total_value,
            total_weight,
        }
    }

    /// Counts within bounds and total weight within capacity.
    pub fn is_feasible(&self, items: &[KnapsackItem], capacity: usize) -> bool {
        self.counts.len() == items.len()
            && self.counts.iter().zip(items).all(|(&c, it)| c <= it.max_count)
            && self.total_weight <= capacity
    }
}

/// Signature shared by the solvers, so callers can swap implementations.
pub type Solver = fn(&[KnapsackItem], usize) -> KnapsackSolution;

fn value_tolerance(scale: f64) -> f64 {
    scale.abs().max(1.0) * 1e-9
}

/// Pseudo-polynomial DP over exact weights with power-of-two splitting of bounded items.
pub fn solve_dp(items: &[KnapsackItem], capacity: usize) -> KnapsackSolution {
    let n = items.len();
    let caps: Vec<u64> = items.iter().map(|it| it.usable(capacity)).collect();

    // tables[i][w]: best value from items i.. with total weight exactly w.
    let mut tables = vec![vec![f64::NEG_INFINITY; capacity + 1]; n + 1];
    tables[n][0] = 0.0;
    for i in (0..n).rev() {
        let mut table = tables[i + 1].clone();
        let weight = items[i].weight;
        let mut left = caps[i];
        let mut chunk = 1u64;
        while left > 0 {
            let take = chunk.min(left);
            let w_take = take as usize * weight;
            let v_take = take as f64 * items[i].unit_value;
            for w in (w_take..=capacity).rev() {
                let cand = table[w - w_take] + v_take;
                if cand > table[w] {
                    table[w] = cand;
                }
            }
            left -= take;
            chunk *= 2;
        }
        tables[i] = table;
    }

    let best = tables[0].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = value_tolerance(best);
    let mut remaining = tables[0]
        .iter()
        .position(|&v| v >= best - tol)
        .expect("weight 0 is always reachable");

    let mut counts = vec![0u64; n];
    for i in 0..n {
        let target = tables[i][remaining];
        let weight = items[i].weight;
        let count = (0..=caps[i])
            .take_while(|&c| c as usize * weight <= remaining)
            .find(|&c| {
                let rest = tables[i + 1][remaining - c as usize * weight];
                (c as f64 * items[i].unit_value + rest - target).abs() <= tol
            })
            .expect("DP table entry has a witness");
        counts[i] = count;
        remaining -= count as usize * weight;
    }
    KnapsackSolution::from_counts(items, counts)
}

/// Number of count vectors with total weight at most `capacity`.
pub fn feasible_vector_count(items: &[KnapsackItem], capacity: usize) -> f64 {
    // ways[w]: vectors over the items seen so far with weight exactly w
    let mut ways = vec![0.0f64; capacity + 1];
    ways[0] = 1.0;
    for it in items {
        let cap = it.usable(capacity);
        let mut next = vec![0.0; capacity + 1];
        for (w, &count) in ways.iter().enumerate() {
            if count == 0.0 {
                continue;
            }
            for c in 0..=cap {
                let nw = w + c as usize * it.weight;
                if nw > capacity {
                    break;
                }
                next[nw] += count;
            }
        }
        ways = next;
    }
    ways.iter().sum()
}

/// Exhaustive enumeration in lexicographic order; reference oracle for [`solve_dp`].
pub fn solve_bruteforce(items: &[KnapsackItem], capacity: usize) -> Result<KnapsackSolution> {
    let size = feasible_vector_count(items, capacity);
    if size > BRUTEFORCE_LIMIT {
        return Err(Error::SearchSpace {
            size,
            limit: BRUTEFORCE_LIMIT,
        });
    }
    let caps: Vec<u64> = items.iter().map(|it| it.usable(capacity)).collect();

    struct Search<'a> {
        items: &'a [KnapsackItem],
        caps: &'a [u64],
        current: Vec<u64>,
        best: Option<(f64, usize, Vec<u64>)>,
    }

    impl Search<'_> {
        fn visit(&mut self, i: usize, value: f64, weight: usize, room: usize) {
            if i == self.items.len() {
                let better = match &self.best {
                    None => true,
                    Some((bv, bw, _)) => {
                        let tol = value_tolerance(*bv);
                        value > bv + tol || ((value - bv).abs() <= tol && weight < *bw)
                    }
                };
                if better {
                    self.best = Some((value, weight, self.current.clone()));
                }
                return;
            }
            let item = &self.items[i];
            let mut c = 0;
            while c <= self.caps[i] && c as usize * item.weight <= room {
                self.current[i] = c;
                let used = c as usize * item.weight;
                self.visit(
                    i + 1,
                    value + c as f64 * item.unit_value,
                    weight + used,
                    room - used,
                );
                c += 1;
            }
            self.current[i] = 0;
        }
    }

    let mut search = Search {
        items,
        caps: &caps,
        current: vec![0; items.len()],
        best: None,
    };
    search.visit(0, 0.0, 0, capacity);
    let (_, _, counts) = search.best.expect("the zero vector is always visited");
    Ok(KnapsackSolution::from_counts(items, counts))
}
