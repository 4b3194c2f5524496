//! Rank-relative schedules.
//!
//! Every algorithm here is translation invariant: what rank `r` does in a
//! round is what rank 0 does, shifted by `r`. A schedule is therefore stored
//! once, in offset space, and instantiated per rank with [`translate`].
//!
//! For an all-gather, chunk offset `k` at rank `r` names the chunk that
//! originated at rank `(r - k) mod n`. For a reduce-scatter it names the
//! partial result destined to rank `(r - k) mod n`. Exchange rounds
//! (recursive doubling) use XOR instead: offset `k` names rank `r ^ k` and the
//! partner is `r ^ |peer|`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};

/// Distance in rank space, `(r - o) mod n`.
pub type ChunkOffset = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CollectiveKind {
    AllGather,
    ReduceScatter,
}

impl fmt::Display for CollectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CollectiveKind::AllGather => "allgather",
            CollectiveKind::ReduceScatter => "reducescatter",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Ring,
    BruckNearest,
    BruckFarthest,
    RecursiveDoubling,
    Pat,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Ring,
        Algorithm::BruckNearest,
        Algorithm::BruckFarthest,
        Algorithm::RecursiveDoubling,
        Algorithm::Pat,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Ring => "ring",
            Algorithm::BruckNearest => "bruck-nearest",
            Algorithm::BruckFarthest => "bruck-farthest",
            Algorithm::RecursiveDoubling => "recursive-doubling",
            Algorithm::Pat => "pat",
        }
    }

    /// Accepts the canonical tags plus the short CLI aliases.
    pub fn parse(raw: &str) -> Option<Algorithm> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "ring" => Some(Algorithm::Ring),
            "bruck" | "bruck-nearest" | "bruck-nf" => Some(Algorithm::BruckNearest),
            "bruck-ff" | "bruck-farthest" => Some(Algorithm::BruckFarthest),
            "rd" | "recursive-doubling" => Some(Algorithm::RecursiveDoubling),
            "pat" => Some(Algorithm::Pat),
            _ => None,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Aggregation limit and intermediate buffer budget of a PAT schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatParams {
    pub trees: usize,
    pub buffer_slots: usize,
}

impl PatParams {
    /// `trees` with the default slot budget `T + ceil(log2(n / T))`.
    pub fn for_ranks(n_ranks: usize, trees: usize) -> Result<PatParams> {
        check_trees(n_ranks, trees)?;
        Ok(PatParams {
            trees,
            buffer_slots: default_buffer_slots(n_ranks, trees),
        })
    }
}

/// Slot budget sufficient for a PAT schedule: `T + ceil(log2(max(n / T, 1)))`.
pub fn default_buffer_slots(n_ranks: usize, trees: usize) -> usize {
    let mut extra = 0;
    while trees << extra < n_ranks {
        extra += 1;
    }
    trees + extra
}

/// Largest valid tree count for `n_ranks`: `2^(D-1)` with `D = ceil(log2 n)`.
pub fn max_trees(n_ranks: usize) -> usize {
    match ceil_log2(n_ranks) {
        0 => 1,
        d => 1 << (d - 1),
    }
}

/// All valid tree counts for `n_ranks`, ascending.
pub fn valid_trees(n_ranks: usize) -> Vec<usize> {
    let max = max_trees(n_ranks);
    std::iter::successors(Some(1usize), |t| Some(t * 2))
        .take_while(|&t| t <= max)
        .collect()
}

pub fn check_trees(n_ranks: usize, trees: usize) -> Result<()> {
    let max = max_trees(n_ranks);
    if trees == 0 || !trees.is_power_of_two() || trees > max {
        return Err(Error::InvalidTrees {
            trees,
            n_ranks,
            max,
        });
    }
    Ok(())
}

/// `ceil(log2 n)`, with `ceil_log2(1) == 0`.
pub fn ceil_log2(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelativeRound {
    #[serde(rename = "round")]
    pub round_index: usize,
    #[serde(rename = "dim")]
    pub dimension: u32,
    #[serde(rename = "split")]
    pub split_index: usize,
    #[serde(rename = "peer")]
    pub peer_send_offset: i64,
    #[serde(rename = "chunks")]
    pub chunk_offsets: Vec<ChunkOffset>,
    /// XOR pairing instead of additive shift.
    #[serde(default, skip_serializing_if = "is_false")]
    pub exchange: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl RelativeRound {
    pub fn shift(
        round_index: usize,
        dimension: u32,
        split_index: usize,
        peer_send_offset: i64,
        chunk_offsets: Vec<ChunkOffset>,
    ) -> RelativeRound {
        RelativeRound {
            round_index,
            dimension,
            split_index,
            peer_send_offset,
            chunk_offsets,
            exchange: false,
        }
    }

    pub fn distance(&self) -> usize {
        self.peer_send_offset.unsigned_abs() as usize
    }

    /// Offsets every rank receives in this round, in send order.
    pub fn received_offsets(&self, n_ranks: usize) -> Vec<ChunkOffset> {
        self.chunk_offsets
            .iter()
            .map(|&k| self.receive_offset(k, n_ranks))
            .collect()
    }

    /// Offset that sent offset `k` becomes at the receiver.
    pub fn receive_offset(&self, k: ChunkOffset, n_ranks: usize) -> ChunkOffset {
        if self.exchange {
            k ^ self.distance()
        } else {
            add_mod(k, self.peer_send_offset, n_ranks)
        }
    }

    pub fn receiver_of(&self, rank: usize, n_ranks: usize) -> usize {
        if self.exchange {
            rank ^ self.distance()
        } else {
            add_mod(rank, self.peer_send_offset, n_ranks)
        }
    }

    pub fn sender_to(&self, rank: usize, n_ranks: usize) -> usize {
        if self.exchange {
            rank ^ self.distance()
        } else {
            add_mod(rank, -self.peer_send_offset, n_ranks)
        }
    }

    /// Absolute rank named by offset `k` at `rank`.
    pub fn chunk_id(&self, rank: usize, k: ChunkOffset, n_ranks: usize) -> usize {
        if self.exchange {
            rank ^ k
        } else {
            (rank + n_ranks - k % n_ranks) % n_ranks
        }
    }
}

pub(crate) fn add_mod(x: usize, delta: i64, n: usize) -> usize {
    let n = n as i64;
    (x as i64 + delta).rem_euclid(n) as usize
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelativeSchedule {
    pub algorithm: Algorithm,
    pub kind: CollectiveKind,
    pub n_ranks: usize,
    pub params: Option<PatParams>,
    pub rounds: Vec<RelativeRound>,
}

impl RelativeSchedule {
    pub fn empty(algorithm: Algorithm, kind: CollectiveKind, n_ranks: usize) -> Self {
        RelativeSchedule {
            algorithm,
            kind,
            n_ranks,
            params: None,
            rounds: Vec::new(),
        }
    }

    pub fn round_count(&self) -> usize {
        self.rounds.len()
    }

    pub fn chunk_counts(&self) -> Vec<usize> {
        self.rounds.iter().map(|r| r.chunk_offsets.len()).collect()
    }

    pub fn dimensions(&self) -> Vec<u32> {
        self.rounds.iter().map(|r| r.dimension).collect()
    }

    pub fn max_chunks_per_message(&self) -> usize {
        self.chunk_counts().into_iter().max().unwrap_or(0)
    }

    /// Chunk entries a rank enumerates to build its part of the schedule.
    pub fn generator_work(&self) -> usize {
        self.chunk_counts().iter().sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<RelativeSchedule> {
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
    }
}

/// One rank's view of one round.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AbsoluteStep {
    pub round_index: usize,
    pub sender_rank: usize,
    pub receiver_rank: usize,
    pub chunk_ids: Vec<usize>,
}

/// Instantiates `sched` for `rank`: one step per round.
pub fn translate(sched: &RelativeSchedule, rank: usize) -> Result<Vec<AbsoluteStep>> {
    let n = sched.n_ranks;
    if rank >= n {
        return Err(Error::RankOutOfRange { rank, n_ranks: n });
    }
    Ok(sched
        .rounds
        .iter()
        .map(|round| AbsoluteStep {
            round_index: round.round_index,
            sender_rank: rank,
            receiver_rank: round.receiver_of(rank, n),
            chunk_ids: round
                .chunk_offsets
                .iter()
                .map(|&k| round.chunk_id(rank, k, n))
                .collect(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Error)]
pub enum Violation {
    #[error("round at position {position} has index {found}")]
    RoundIndex { position: usize, found: usize },
    #[error("round {round} sends no chunks")]
    EmptyRound { round: usize },
    #[error("offset {offset} out of range at round {round}")]
    OffsetOutOfRange { round: usize, offset: usize },
    #[error("offset {offset} listed twice at round {round}")]
    DuplicateOffset { round: usize, offset: usize },
    #[error("peer offset {peer} does not match dimension {dimension} at round {round}")]
    PeerMismatch {
        round: usize,
        peer: i64,
        dimension: u32,
    },
    #[error("round {round} sends to itself")]
    SelfSend { round: usize },
    #[error("exchange round {round} requires a power-of-two rank count")]
    ExchangeNeedsPowerOfTwo { round: usize },
    #[error("offset {offset} not held at round {round}")]
    NotHeld { round: usize, offset: usize },
    #[error("offset {offset} received again at round {round}")]
    AlreadyHeld { round: usize, offset: usize },
    #[error("coverage gap {missing:?}")]
    CoverageGap { missing: Vec<usize> },
    #[error("own offset 0 sent at round {round}")]
    SendsOwnResult { round: usize },
    #[error("offset {offset} sent again at round {round}")]
    SentTwice { round: usize, offset: usize },
    #[error("contribution for offset {offset} arrives at round {round} after it was sent")]
    LateContribution { round: usize, offset: usize },
    #[error("offsets never sent {missing:?}")]
    Unsent { missing: Vec<usize> },
    #[error("round {round} carries {chunks} chunks, above the aggregation limit {trees}")]
    AggregationExceeded {
        round: usize,
        chunks: usize,
        trees: usize,
    },
    #[error("invalid PAT parameters: trees={trees} buffer_slots={buffer_slots}")]
    InvalidParams { trees: usize, buffer_slots: usize },
    #[error("schedule has zero ranks")]
    NoRanks,
}

/// Collects every invariant violation of `sched`; an empty list means valid.
pub fn validate(sched: &RelativeSchedule) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = sched.n_ranks;
    if n == 0 {
        out.push(Violation::NoRanks);
        return out;
    }
    if let Some(p) = sched.params {
        if p.buffer_slots == 0 || check_trees(n, p.trees).is_err() {
            out.push(Violation::InvalidParams {
                trees: p.trees,
                buffer_slots: p.buffer_slots,
            });
        }
    }

    let mut structural_ok = true;
    for (position, round) in sched.rounds.iter().enumerate() {
        let idx = round.round_index;
        if idx != position {
            out.push(Violation::RoundIndex {
                position,
                found: idx,
            });
        }
        let mut before = out.len();
        if round.chunk_offsets.is_empty() {
            out.push(Violation::EmptyRound { round: idx });
        }
        let mut seen = BTreeSet::new();
        for &k in &round.chunk_offsets {
            if k >= n {
                out.push(Violation::OffsetOutOfRange {
                    round: idx,
                    offset: k,
                });
            } else if !seen.insert(k) {
                out.push(Violation::DuplicateOffset {
                    round: idx,
                    offset: k,
                });
            }
        }
        let dist = round.distance();
        if round.dimension >= usize::BITS || dist != 1usize << round.dimension {
            out.push(Violation::PeerMismatch {
                round: idx,
                peer: round.peer_send_offset,
                dimension: round.dimension,
            });
        }
        if round.exchange {
            if !n.is_power_of_two() || dist >= n {
                out.push(Violation::ExchangeNeedsPowerOfTwo { round: idx });
            }
        } else if dist % n == 0 {
            out.push(Violation::SelfSend { round: idx });
        }
        if let Some(p) = sched.params {
            // aggregation limit is advisory for a malformed tree count
            if p.trees >= 1 && round.chunk_offsets.len() > p.trees {
                out.push(Violation::AggregationExceeded {
                    round: idx,
                    chunks: round.chunk_offsets.len(),
                    trees: p.trees,
                });
                before += 1;
            }
        }
        if out.len() > before {
            structural_ok = false;
        }
    }
    if !structural_ok {
        return out;
    }

    match sched.kind {
        CollectiveKind::AllGather => check_gather_flow(sched, &mut out),
        CollectiveKind::ReduceScatter => check_scatter_flow(sched, &mut out),
    }
    out
}

// Held-set pass: H0 = {0}, every sent offset must be held, every received
// offset must be new, and the final held set must be [0, n).
fn check_gather_flow(sched: &RelativeSchedule, out: &mut Vec<Violation>) {
    let n = sched.n_ranks;
    let mut held = vec![false; n];
    held[0] = true;
    for round in &sched.rounds {
        for &k in &round.chunk_offsets {
            if !held[k] {
                out.push(Violation::NotHeld {
                    round: round.round_index,
                    offset: k,
                });
            }
        }
        for k in round.received_offsets(n) {
            if held[k] {
                out.push(Violation::AlreadyHeld {
                    round: round.round_index,
                    offset: k,
                });
            }
            held[k] = true;
        }
    }
    let missing: Vec<usize> = (0..n).filter(|&k| !held[k]).collect();
    if !missing.is_empty() {
        out.push(Violation::CoverageGap { missing });
    }
}

// Mirror image of the held-set pass: each nonzero destination offset is sent
// exactly once, offset 0 never leaves, and no contribution arrives for an
// offset that has already been sent.
fn check_scatter_flow(sched: &RelativeSchedule, out: &mut Vec<Violation>) {
    let n = sched.n_ranks;
    let mut sent = vec![false; n];
    for round in &sched.rounds {
        for k in round.received_offsets(n) {
            if sent[k] {
                out.push(Violation::LateContribution {
                    round: round.round_index,
                    offset: k,
                });
            }
        }
        for &k in &round.chunk_offsets {
            if k == 0 {
                out.push(Violation::SendsOwnResult {
                    round: round.round_index,
                });
            } else if sent[k] {
                out.push(Violation::SentTwice {
                    round: round.round_index,
                    offset: k,
                });
            }
            sent[k] = true;
        }
    }
    let missing: Vec<usize> = (1..n).filter(|&k| !sent[k]).collect();
    if !missing.is_empty() {
        out.push(Violation::Unsent { missing });
    }
}

/// `validate` as a `Result`.
pub fn ensure_valid(sched: &RelativeSchedule) -> Result<()> {
    let violations = validate(sched);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidSchedule(violations))
    }
}
