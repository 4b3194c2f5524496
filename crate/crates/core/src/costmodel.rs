//! Alpha-beta cost of a schedule over a hierarchical fabric.
//!
//! Ranks are packed into nested groups: level 0 groups hold `span_0` ranks,
//! level 1 groups hold `span_0 * span_1`, and so on. A message is charged
//! `alpha + bytes * beta` of the lowest level whose group contains both ends.
//!
//! Schedules are translation invariant, so each round is charged by the level
//! of its peer distance `|peer|` (as seen from an aligned rank) rather than
//! by absolute rank pairs, whose wrap-around would make rounds non-uniform.

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sched::{Algorithm, RelativeSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level<F> {
    pub span: usize,
    pub alpha_us: F,
    pub beta_ns_per_byte: F,
}

/// Nested group sizes, without timing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hierarchy {
    cumulative: Vec<usize>,
}

impl Hierarchy {
    pub fn from_spans(spans: &[usize]) -> Result<Hierarchy> {
        if spans.is_empty() {
            return Err(Error::InvalidTopology("no levels".into()));
        }
        let mut cumulative = Vec::with_capacity(spans.len());
        let mut acc = 1usize;
        for (i, &span) in spans.iter().enumerate() {
            if span < 2 {
                return Err(Error::InvalidTopology(format!(
                    "level {i} has span {span}, need at least 2"
                )));
            }
            acc = acc.saturating_mul(span);
            cumulative.push(acc);
        }
        Ok(Hierarchy { cumulative })
    }

    /// Number of ranks the whole hierarchy covers.
    pub fn capacity(&self) -> usize {
        *self.cumulative.last().expect("non-empty")
    }

    pub fn levels(&self) -> usize {
        self.cumulative.len()
    }

    /// Smallest level whose group holds both `a` and `b`.
    pub fn distance_level(&self, a: usize, b: usize) -> Result<usize> {
        if a == b {
            return Err(Error::SameRank { a, b });
        }
        self.cumulative
            .iter()
            .position(|&cum| a / cum == b / cum)
            .ok_or(Error::TopologyTooSmall {
                covered: self.capacity(),
                n_ranks: a.max(b) + 1,
            })
    }

    /// Level charged for a hop of `distance` ranks.
    pub fn offset_level(&self, distance: usize) -> Result<usize> {
        self.distance_level(0, distance)
    }

    /// Highest level touched by an `n_ranks` job.
    pub fn top_level(&self, n_ranks: usize) -> Result<usize> {
        if n_ranks < 2 {
            return Ok(0);
        }
        self.distance_level(0, n_ranks - 1)
    }

    pub fn check_covers(&self, n_ranks: usize) -> Result<()> {
        if self.capacity() < n_ranks {
            return Err(Error::TopologyTooSmall {
                covered: self.capacity(),
                n_ranks,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology<F> {
    pub levels: Vec<Level<F>>,
}

impl<F: Float> Topology<F> {
    pub fn new(levels: Vec<Level<F>>) -> Result<Topology<F>> {
        let topo = Topology { levels };
        topo.check()?;
        Ok(topo)
    }

    /// One level spanning `n_ranks`, every message costing `alpha_us + bytes * beta`.
    pub fn uniform(n_ranks: usize, alpha_us: F, beta_ns_per_byte: F) -> Topology<F> {
        Topology {
            levels: vec![Level {
                span: n_ranks.max(2),
                alpha_us,
                beta_ns_per_byte,
            }],
        }
    }

    // negated comparisons so NaN is rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn check(&self) -> Result<()> {
        let spans: Vec<usize> = self.levels.iter().map(|l| l.span).collect();
        Hierarchy::from_spans(&spans)?;
        for (i, level) in self.levels.iter().enumerate() {
            if !(level.alpha_us >= F::zero()) || !(level.beta_ns_per_byte >= F::zero()) {
                return Err(Error::InvalidTopology(format!(
                    "level {i} has a negative or NaN cost"
                )));
            }
        }
        if self
            .levels
            .windows(2)
            .any(|w| w[1].alpha_us < w[0].alpha_us)
        {
            return Err(Error::InvalidTopology(
                "alpha_us must be non-decreasing with level".into(),
            ));
        }
        Ok(())
    }

    pub fn hierarchy(&self) -> Result<Hierarchy> {
        let spans: Vec<usize> = self.levels.iter().map(|l| l.span).collect();
        Hierarchy::from_spans(&spans)
    }

    pub fn distance_level(&self, a: usize, b: usize) -> Result<usize> {
        self.hierarchy()?.distance_level(a, b)
    }

    /// Time for one message of `bytes` at `level`, in microseconds.
    pub fn message_cost_us(&self, level: usize, bytes: u64) -> F {
        let l = &self.levels[level];
        let bytes = F::from(bytes).unwrap_or_else(F::infinity);
        l.alpha_us + bytes * l.beta_ns_per_byte / F::from(1000.0).unwrap()
    }

    pub fn from_json(text: &str) -> Result<Topology<F>>
    where
        F: for<'de> Deserialize<'de>,
    {
        let topo: Topology<F> =
            serde_json::from_str(text).map_err(|e| Error::InvalidTopology(e.to_string()))?;
        topo.check()?;
        Ok(topo)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport<F> {
    pub algorithm: Algorithm,
    pub n_ranks: usize,
    pub trees: Option<usize>,
    pub chunk_bytes: u64,
    pub per_round_cost_us: Vec<F>,
    pub per_round_level: Vec<usize>,
    pub total_us: F,
    /// Bytes each rank sends at each level.
    pub bytes_by_level: Vec<u64>,
    pub round_count: usize,
    pub top_level: usize,
    /// Chunk entries a rank enumerates to build its schedule; grows linearly.
    pub generator_work: usize,
}

impl<F: Float> CostReport<F> {
    pub fn top_level_bytes(&self) -> u64 {
        self.bytes_by_level[self.top_level]
    }

    pub fn bytes_per_rank(&self) -> u64 {
        self.bytes_by_level.iter().sum()
    }
}

pub const CSV_HEADER: &str = "algo,n,trees,bytes_per_rank,rounds,total_us,top_level_bytes";

impl<F: Float + std::fmt::Display> CostReport<F> {
    /// `algo,n,trees,bytes_per_rank,rounds,total_us,top_level_bytes`; the
    /// trees column is empty for non-PAT algorithms.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.algorithm.tag(),
            self.n_ranks,
            self.trees.map(|t| t.to_string()).unwrap_or_default(),
            self.chunk_bytes,
            self.round_count,
            self.total_us,
            self.top_level_bytes()
        )
    }
}

/// Bulk-synchronous cost: each round costs its slowest message, rounds add up.
pub fn schedule_cost<F: Float>(
    sched: &RelativeSchedule,
    topo: &Topology<F>,
    chunk_bytes: u64,
) -> Result<CostReport<F>> {
    let hierarchy = topo.hierarchy()?;
    hierarchy.check_covers(sched.n_ranks)?;
    let mut bytes_by_level = vec![0u64; topo.levels.len()];
    let mut per_round_cost_us = Vec::with_capacity(sched.rounds.len());
    let mut per_round_level = Vec::with_capacity(sched.rounds.len());
    for round in &sched.rounds {
        let level = hierarchy.offset_level(round.distance())?;
        let bytes = round.chunk_offsets.len() as u64 * chunk_bytes;
        bytes_by_level[level] += bytes;
        per_round_cost_us.push(topo.message_cost_us(level, bytes));
        per_round_level.push(level);
    }
    let total_us = per_round_cost_us.iter().fold(F::zero(), |acc, &c| acc + c);
    Ok(CostReport {
        algorithm: sched.algorithm,
        n_ranks: sched.n_ranks,
        trees: sched.params.map(|p| p.trees),
        chunk_bytes,
        per_round_cost_us,
        per_round_level,
        total_us,
        bytes_by_level,
        round_count: sched.rounds.len(),
        top_level: hierarchy.top_level(sched.n_ranks)?,
        generator_work: sched.generator_work(),
    })
}
