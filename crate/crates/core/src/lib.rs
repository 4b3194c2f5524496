//! Schedule generation, simulation and cost modeling for all-gather and
//! reduce-scatter collectives.
//!
//! Generators: ring, nearest-first Bruck, farthest-first Bruck, recursive
//! doubling and PAT (Parallel Aggregated Trees). Every generator emits a
//! rank-relative [`RelativeSchedule`]; reduce-scatter schedules are the
//! [mirror](pat::mirror_schedule) of the all-gather ones.
//!
//! Payload elements and cost-model times are generic over the scalar type;
//! the aliases below fix the common choices.

pub mod baseline;
pub mod costmodel;
pub mod error;
pub mod oracle;
pub mod pat;
pub mod scalar;
pub mod sched;
pub mod simulate;

pub use baseline::{bruck_farthest, bruck_nearest, recursive_doubling, ring_allgather};
pub use costmodel::{schedule_cost, CostReport, Hierarchy, Level, Topology};
pub use error::{Error, Result};
pub use pat::{
    mirror_schedule, pat_allgather, pat_reduce_scatter, round_count_formula, trees_from_buffer,
};
pub use scalar::{Element, ReduceOp};
pub use sched::{
    translate, validate, AbsoluteStep, Algorithm, ChunkOffset, CollectiveKind, PatParams,
    RelativeRound, RelativeSchedule, Violation,
};
pub use simulate::{run_allgather, run_reduce_scatter, ExecMode, ExecOptions, ExecStats, Payload};

/// Exact-mode payload: wrapping 64-bit integer sums.
pub type IntPayload = Payload<i64>;
/// Approximate-mode payload: 64-bit float sums.
pub type FloatPayload = Payload<f64>;
pub type Topology64 = Topology<f64>;
pub type CostReport64 = CostReport<f64>;

/// Builds the schedule for `algorithm`. `trees` is required for PAT and
/// ignored otherwise; reduce-scatter schedules are mirrored all-gathers.
pub fn generate(
    algorithm: Algorithm,
    kind: CollectiveKind,
    n_ranks: usize,
    trees: Option<usize>,
) -> Result<RelativeSchedule> {
    if n_ranks == 0 {
        return Err(Error::TooFewRanks { n_ranks, min: 1 });
    }
    let gather = match algorithm {
        Algorithm::Ring => ring_allgather(n_ranks),
        Algorithm::BruckNearest => bruck_nearest(n_ranks),
        Algorithm::BruckFarthest => bruck_farthest(n_ranks),
        Algorithm::RecursiveDoubling => recursive_doubling(n_ranks)?,
        Algorithm::Pat => {
            let trees = trees.unwrap_or_else(|| sched::max_trees(n_ranks));
            pat_allgather(n_ranks, trees)?
        }
    };
    Ok(match kind {
        CollectiveKind::AllGather => gather,
        CollectiveKind::ReduceScatter => mirror_schedule(&gather),
    })
}
