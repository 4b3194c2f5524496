use thiserror::Error;

use crate::sched::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("rank {rank} out of range for {n_ranks} ranks")]
    RankOutOfRange { rank: usize, n_ranks: usize },

    #[error("NonPowerOfTwo: {what} must be a power of two, got {value}")]
    NonPowerOfTwo { what: &'static str, value: usize },

    #[error("invalid tree count {trees} for {n_ranks} ranks (valid: powers of two in [1, {max}])")]
    InvalidTrees {
        trees: usize,
        n_ranks: usize,
        max: usize,
    },

    #[error("BufferTooSmall: buffer of {buffer_bytes} bytes cannot hold one chunk of {chunk_bytes} bytes")]
    BufferTooSmall { buffer_bytes: u64, chunk_bytes: u64 },

    #[error("n_ranks must be at least {min}, got {n_ranks}")]
    TooFewRanks { n_ranks: usize, min: usize },

    #[error("expected a {expected} schedule, got {found}")]
    KindMismatch {
        expected: crate::sched::CollectiveKind,
        found: crate::sched::CollectiveKind,
    },

    #[error("invalid schedule: {}", summarize(.0))]
    InvalidSchedule(Vec<Violation>),

    #[error("payload shape mismatch: {0}")]
    PayloadShape(String),

    #[error("UnsupportedOp: {op:?} is not defined for element type {element}")]
    UnsupportedOp {
        op: crate::scalar::ReduceOp,
        element: &'static str,
    },

    #[error("ranks {a} and {b} are the same rank")]
    SameRank { a: usize, b: usize },

    #[error("topology covers {covered} ranks, need {n_ranks}")]
    TopologyTooSmall { covered: usize, n_ranks: usize },

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("execution fault at round {round}, rank {rank}: {detail}")]
    Execution {
        round: usize,
        rank: usize,
        detail: String,
    },

    #[error("malformed schedule document: {0}")]
    Format(String),
}

fn summarize(violations: &[Violation]) -> String {
    let mut out = violations
        .iter()
        .take(3)
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ");
    if violations.len() > 3 {
        out.push_str(&format!("; and {} more", violations.len() - 3));
    }
    out
}
