//! Executes a schedule over concrete payloads, one agent per rank.
//!
//! Execution is round-lockstep: every message of round `t` is delivered
//! before round `t + 1` starts. The parallel mode runs each rank on its own
//! thread and matches messages by `(round, sender, receiver)`, so it does not
//! depend on arrival order and must agree bit for bit with lockstep mode.
//!
//! Intermediate slots are tracked per rank:
//! - all-gather: a received chunk takes a slot if this rank forwards it later,
//!   and releases it right after the round of its last forward. Own data and
//!   chunks that only land in the output never take a slot.
//! - reduce-scatter: a partial sum for a foreign destination takes a slot from
//!   its first incoming contribution until it is sent. Contributions for this
//!   rank accumulate straight into the output; the rank's own contribution is
//!   folded in at send time.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::mpsc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::costmodel::Hierarchy;
use crate::error::{Error, Result};
use crate::scalar::{check_op, reduce_chunks, Element, ReduceOp};
use crate::sched::{ensure_valid, CollectiveKind, RelativeSchedule};

/// Input chunks per rank: one chunk for all-gather, `n` (one per destination)
/// for reduce-scatter.
#[derive(Debug, Clone, PartialEq)]
pub struct Payload<T> {
    pub elements_per_chunk: usize,
    /// `chunks[rank][j]`
    pub chunks: Vec<Vec<Vec<T>>>,
}

impl<T: Element> Payload<T> {
    pub fn gather_from_fn(
        n: usize,
        elements_per_chunk: usize,
        mut f: impl FnMut(usize, usize) -> T,
    ) -> Payload<T> {
        Payload {
            elements_per_chunk,
            chunks: (0..n)
                .map(|r| vec![(0..elements_per_chunk).map(|e| f(r, e)).collect()])
                .collect(),
        }
    }

    /// `f(source, destination, element)`
    pub fn scatter_from_fn(
        n: usize,
        elements_per_chunk: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Payload<T> {
        Payload {
            elements_per_chunk,
            chunks: (0..n)
                .map(|s| {
                    (0..n)
                        .map(|d| (0..elements_per_chunk).map(|e| f(s, d, e)).collect())
                        .collect()
                })
                .collect(),
        }
    }

    pub fn random_gather(n: usize, elements_per_chunk: usize, seed: u64) -> Payload<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::gather_from_fn(n, elements_per_chunk, |_, _| T::random(&mut rng))
    }

    pub fn random_scatter(n: usize, elements_per_chunk: usize, seed: u64) -> Payload<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::scatter_from_fn(n, elements_per_chunk, |_, _, _| T::random(&mut rng))
    }

    pub fn n_ranks(&self) -> usize {
        self.chunks.len()
    }

    pub fn chunk_bytes(&self) -> u64 {
        (self.elements_per_chunk * std::mem::size_of::<T>()) as u64
    }

    pub fn check_shape(&self, kind: CollectiveKind, n_ranks: usize) -> Result<()> {
        if self.elements_per_chunk == 0 {
            return Err(Error::PayloadShape(
                "elements_per_chunk must be >= 1".into(),
            ));
        }
        if self.chunks.len() != n_ranks {
            return Err(Error::PayloadShape(format!(
                "{} ranks of input for a {n_ranks}-rank schedule",
                self.chunks.len()
            )));
        }
        let per_rank = match kind {
            CollectiveKind::AllGather => 1,
            CollectiveKind::ReduceScatter => n_ranks,
        };
        for (r, row) in self.chunks.iter().enumerate() {
            if row.len() != per_rank {
                return Err(Error::PayloadShape(format!(
                    "rank {r} has {} chunks, expected {per_rank}",
                    row.len()
                )));
            }
            if let Some(c) = row.iter().position(|c| c.len() != self.elements_per_chunk) {
                return Err(Error::PayloadShape(format!(
                    "rank {r} chunk {c} does not hold {} elements",
                    self.elements_per_chunk
                )));
            }
        }
        Ok(())
    }
}

/// `outputs[rank][origin]`
pub type GatherOutput<T> = Vec<Vec<Vec<T>>>;
/// `outputs[rank]`
pub type ScatterOutput<T> = Vec<Vec<T>>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ExecMode {
    #[default]
    Lockstep,
    Parallel,
}

#[derive(Debug, Clone, Default)]
pub struct ExecOptions {
    pub mode: ExecMode,
    /// Fills `bytes_by_topology_level` when set.
    pub hierarchy: Option<Hierarchy>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExecStats {
    pub rounds: usize,
    pub messages: usize,
    pub max_chunks_per_message: usize,
    pub bytes_sent_per_rank: u64,
    pub bytes_received_per_rank: u64,
    /// Bytes one rank sends at each level.
    pub bytes_by_topology_level: BTreeMap<usize, u64>,
    pub peak_intermediate_slots: usize,
    /// Slots in use at the end of each round (max over ranks).
    pub occupancy_per_round: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceRecord {
    pub round: usize,
    pub dim: u32,
    pub split: usize,
    pub sender: usize,
    pub receiver: usize,
    pub chunks: Vec<usize>,
    pub bytes: u64,
}

pub const TRACE_CSV_HEADER: &str = "round,dim,split,sender,receiver,chunks,bytes";

/// One CSV row per message; chunk ids are `;`-separated in send order.
pub fn trace_csv(trace: &[TraceRecord]) -> String {
    let mut out = String::from(TRACE_CSV_HEADER);
    out.push('\n');
    for t in trace {
        let ids: Vec<String> = t.chunks.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            t.round,
            t.dim,
            t.split,
            t.sender,
            t.receiver,
            ids.join(";"),
            t.bytes
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Run<O> {
    pub outputs: O,
    pub stats: ExecStats,
    pub trace: Vec<TraceRecord>,
}

pub fn run_allgather<T: Element>(
    sched: &RelativeSchedule,
    payload: &Payload<T>,
) -> Result<(GatherOutput<T>, ExecStats)> {
    let run = run_allgather_with(sched, payload, &ExecOptions::default())?;
    Ok((run.outputs, run.stats))
}

pub fn run_reduce_scatter<T: Element>(
    sched: &RelativeSchedule,
    payload: &Payload<T>,
    op: ReduceOp,
) -> Result<(ScatterOutput<T>, ExecStats)> {
    let run = run_reduce_scatter_with(sched, payload, op, &ExecOptions::default())?;
    Ok((run.outputs, run.stats))
}

pub fn run_allgather_with<T: Element>(
    sched: &RelativeSchedule,
    payload: &Payload<T>,
    opts: &ExecOptions,
) -> Result<Run<GatherOutput<T>>> {
    check_kind(sched, CollectiveKind::AllGather)?;
    ensure_valid(sched)?;
    payload.check_shape(CollectiveKind::AllGather, sched.n_ranks)?;
    let agents = (0..sched.n_ranks)
        .map(|r| GatherAgent::new(sched, payload, r))
        .collect();
    let (agents, logs) = drive(sched, agents, opts.mode)?;
    let outputs = agents
        .into_iter()
        .map(|a| a.finish())
        .collect::<Result<Vec<_>>>()?;
    let (stats, trace) = summarize(sched, &logs, payload.chunk_bytes(), opts)?;
    Ok(Run {
        outputs,
        stats,
        trace,
    })
}

pub fn run_reduce_scatter_with<T: Element>(
    sched: &RelativeSchedule,
    payload: &Payload<T>,
    op: ReduceOp,
    opts: &ExecOptions,
) -> Result<Run<ScatterOutput<T>>> {
    check_op::<T>(op)?;
    check_kind(sched, CollectiveKind::ReduceScatter)?;
    ensure_valid(sched)?;
    payload.check_shape(CollectiveKind::ReduceScatter, sched.n_ranks)?;
    let agents = (0..sched.n_ranks)
        .map(|r| ScatterAgent::new(sched, payload, r, op))
        .collect();
    let (agents, logs) = drive(sched, agents, opts.mode)?;
    let outputs = agents
        .into_iter()
        .map(|a| a.finish())
        .collect::<Result<Vec<_>>>()?;
    let (stats, trace) = summarize(sched, &logs, payload.chunk_bytes(), opts)?;
    Ok(Run {
        outputs,
        stats,
        trace,
    })
}

fn check_kind(sched: &RelativeSchedule, expected: CollectiveKind) -> Result<()> {
    if sched.kind != expected {
        return Err(Error::KindMismatch {
            expected,
            found: sched.kind,
        });
    }
    Ok(())
}

type Chunks<T> = Vec<(usize, Vec<T>)>;

/// Per-rank state machine stepped by the engine.
trait RankAgent<T>: Send {
    fn rank(&self) -> usize;
    fn emit(&mut self, round: usize) -> Result<Chunks<T>>;
    fn accept(&mut self, round: usize, chunks: Chunks<T>) -> Result<()>;
    fn occupancy(&self) -> usize;
}

/// What one rank sent, and its slot usage, per round.
#[derive(Debug, Clone, Default)]
struct RankLog {
    sent: Vec<(usize, Vec<usize>)>,
    occupancy: Vec<usize>,
}

struct GatherAgent<'a, T> {
    sched: &'a RelativeSchedule,
    rank: usize,
    output: Vec<Option<Vec<T>>>,
    slots: BTreeMap<usize, Vec<T>>,
    /// Last round in which this rank forwards each chunk id.
    last_send: Vec<Option<usize>>,
}

impl<'a, T: Element> GatherAgent<'a, T> {
    fn new(sched: &'a RelativeSchedule, payload: &Payload<T>, rank: usize) -> Self {
        let n = sched.n_ranks;
        let mut output = vec![None; n];
        output[rank] = Some(payload.chunks[rank][0].clone());
        let mut last_send = vec![None; n];
        for round in &sched.rounds {
            for &k in &round.chunk_offsets {
                last_send[round.chunk_id(rank, k, n)] = Some(round.round_index);
            }
        }
        GatherAgent {
            sched,
            rank,
            output,
            slots: BTreeMap::new(),
            last_send,
        }
    }

    fn finish(self) -> Result<Vec<Vec<T>>> {
        let rank = self.rank;
        let rounds = self.sched.rounds.len();
        self.output
            .into_iter()
            .enumerate()
            .map(|(origin, chunk)| {
                chunk.ok_or_else(|| Error::Execution {
                    round: rounds,
                    rank,
                    detail: format!("chunk of rank {origin} never arrived"),
                })
            })
            .collect()
    }
}

impl<T: Element> RankAgent<T> for GatherAgent<'_, T> {
    fn rank(&self) -> usize {
        self.rank
    }

    fn emit(&mut self, t: usize) -> Result<Chunks<T>> {
        let n = self.sched.n_ranks;
        let round = &self.sched.rounds[t];
        let mut out = Vec::with_capacity(round.chunk_offsets.len());
        for &k in &round.chunk_offsets {
            let id = round.chunk_id(self.rank, k, n);
            let data = if id == self.rank {
                self.output[id].clone()
            } else {
                self.slots.get(&id).cloned()
            };
            let data = data.ok_or_else(|| Error::Execution {
                round: t,
                rank: self.rank,
                detail: format!("chunk {id} is not in an intermediate slot"),
            })?;
            out.push((id, data));
        }
        for (id, _) in &out {
            if self.last_send[*id] == Some(t) {
                self.slots.remove(id);
            }
        }
        Ok(out)
    }

    fn accept(&mut self, t: usize, chunks: Chunks<T>) -> Result<()> {
        for (id, data) in chunks {
            if self.output[id].is_some() {
                return Err(Error::Execution {
                    round: t,
                    rank: self.rank,
                    detail: format!("chunk {id} delivered twice"),
                });
            }
            if self.last_send[id].is_some_and(|last| last > t) {
                self.slots.insert(id, data.clone());
            }
            self.output[id] = Some(data);
        }
        Ok(())
    }

    fn occupancy(&self) -> usize {
        self.slots.len()
    }
}

struct ScatterAgent<'a, T> {
    sched: &'a RelativeSchedule,
    rank: usize,
    op: ReduceOp,
    /// This rank's contribution toward every destination.
    input: &'a [Vec<T>],
    /// Partial sums waiting to be forwarded, by destination id.
    partials: BTreeMap<usize, Vec<T>>,
    /// Contributions that reached their destination (this rank).
    result: Option<Vec<T>>,
}

impl<'a, T: Element> ScatterAgent<'a, T> {
    fn new(
        sched: &'a RelativeSchedule,
        payload: &'a Payload<T>,
        rank: usize,
        op: ReduceOp,
    ) -> Self {
        ScatterAgent {
            sched,
            rank,
            op,
            input: &payload.chunks[rank],
            partials: BTreeMap::new(),
            result: None,
        }
    }

    fn finish(self) -> Result<Vec<T>> {
        if let Some((&dest, _)) = self.partials.iter().next() {
            return Err(Error::Execution {
                round: self.sched.rounds.len(),
                rank: self.rank,
                detail: format!("partial sum for rank {dest} was never forwarded"),
            });
        }
        let own = &self.input[self.rank];
        match self.result {
            None => Ok(own.clone()),
            Some(mut acc) => {
                reduce_chunks(&mut acc, own, self.op)?;
                Ok(acc)
            }
        }
    }
}

impl<T: Element> RankAgent<T> for ScatterAgent<'_, T> {
    fn rank(&self) -> usize {
        self.rank
    }

    fn emit(&mut self, t: usize) -> Result<Chunks<T>> {
        let n = self.sched.n_ranks;
        let round = &self.sched.rounds[t];
        let mut out = Vec::with_capacity(round.chunk_offsets.len());
        for &k in &round.chunk_offsets {
            let dest = round.chunk_id(self.rank, k, n);
            let own = &self.input[dest];
            let data = match self.partials.remove(&dest) {
                Some(mut acc) => {
                    reduce_chunks(&mut acc, own, self.op)?;
                    acc
                }
                None => own.clone(),
            };
            out.push((dest, data));
        }
        Ok(out)
    }

    fn accept(&mut self, _t: usize, chunks: Chunks<T>) -> Result<()> {
        for (dest, data) in chunks {
            if dest == self.rank {
                match &mut self.result {
                    Some(acc) => reduce_chunks(acc, &data, self.op)?,
                    None => self.result = Some(data),
                }
            } else {
                match self.partials.entry(dest) {
                    Entry::Occupied(mut e) => reduce_chunks(e.get_mut(), &data, self.op)?,
                    Entry::Vacant(e) => {
                        e.insert(data);
                    }
                }
            }
        }
        Ok(())
    }

    fn occupancy(&self) -> usize {
        self.partials.len()
    }
}

enum Envelope<T> {
    Data {
        round: usize,
        sender: usize,
        chunks: Chunks<T>,
    },
    Abort,
}

fn drive<T: Element, A: RankAgent<T>>(
    sched: &RelativeSchedule,
    agents: Vec<A>,
    mode: ExecMode,
) -> Result<(Vec<A>, Vec<RankLog>)> {
    match mode {
        ExecMode::Lockstep => drive_lockstep(sched, agents),
        ExecMode::Parallel => drive_parallel(sched, agents),
    }
}

fn drive_lockstep<T: Element, A: RankAgent<T>>(
    sched: &RelativeSchedule,
    mut agents: Vec<A>,
) -> Result<(Vec<A>, Vec<RankLog>)> {
    let n = sched.n_ranks;
    let mut logs = vec![RankLog::default(); n];
    for (t, round) in sched.rounds.iter().enumerate() {
        let mut outbox = Vec::with_capacity(n);
        for agent in agents.iter_mut() {
            let chunks = agent.emit(t)?;
            let ids = chunks.iter().map(|(id, _)| *id).collect();
            logs[agent.rank()]
                .sent
                .push((round.receiver_of(agent.rank(), n), ids));
            outbox.push(chunks);
        }
        for (sender, chunks) in outbox.into_iter().enumerate() {
            agents[round.receiver_of(sender, n)].accept(t, chunks)?;
        }
        for agent in &agents {
            logs[agent.rank()].occupancy.push(agent.occupancy());
        }
    }
    Ok((agents, logs))
}

fn drive_parallel<T: Element, A: RankAgent<T>>(
    sched: &RelativeSchedule,
    agents: Vec<A>,
) -> Result<(Vec<A>, Vec<RankLog>)> {
    let n = sched.n_ranks;
    let (senders, receivers): (Vec<_>, Vec<_>) =
        (0..n).map(|_| mpsc::channel::<Envelope<T>>()).unzip();

    let results: Vec<Result<(A, RankLog)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = agents
            .into_iter()
            .zip(receivers)
            .map(|(agent, inbox)| {
                let senders = senders.clone();
                scope.spawn(move || {
                    let outcome = rank_loop(sched, agent, &inbox, &senders);
                    if outcome.is_err() {
                        for s in &senders {
                            let _ = s.send(Envelope::Abort);
                        }
                    }
                    outcome
                })
            })
            .collect();
        drop(senders);
        handles
            .into_iter()
            .map(|h| h.join().expect("rank thread panicked"))
            .collect()
    });

    let mut agents = Vec::with_capacity(n);
    let mut logs = Vec::with_capacity(n);
    let mut errors = Vec::new();
    for result in results {
        match result {
            Ok((agent, log)) => {
                agents.push(agent);
                logs.push(log);
            }
            Err(e) => errors.push(e),
        }
    }
    // report the root cause, not the aborts it triggered
    let root = errors
        .iter()
        .position(|e| !matches!(e, Error::Execution { detail, .. } if detail == ABORTED))
        .unwrap_or(0);
    if errors.is_empty() {
        Ok((agents, logs))
    } else {
        Err(errors.swap_remove(root))
    }
}

const ABORTED: &str = "aborted by a failing peer";

fn rank_loop<T: Element, A: RankAgent<T>>(
    sched: &RelativeSchedule,
    mut agent: A,
    inbox: &mpsc::Receiver<Envelope<T>>,
    senders: &[mpsc::Sender<Envelope<T>>],
) -> Result<(A, RankLog)> {
    let n = sched.n_ranks;
    let me = agent.rank();
    let mut log = RankLog::default();
    // early arrivals keyed by (round, sender)
    let mut pending: HashMap<(usize, usize), Chunks<T>> = HashMap::new();
    for (t, round) in sched.rounds.iter().enumerate() {
        let chunks = agent.emit(t)?;
        let to = round.receiver_of(me, n);
        log.sent
            .push((to, chunks.iter().map(|(id, _)| *id).collect()));
        let _ = senders[to].send(Envelope::Data {
            round: t,
            sender: me,
            chunks,
        });

        let from = round.sender_to(me, n);
        let incoming = loop {
            if let Some(c) = pending.remove(&(t, from)) {
                break c;
            }
            match inbox.recv() {
                Ok(Envelope::Data {
                    round,
                    sender,
                    chunks,
                }) => {
                    pending.insert((round, sender), chunks);
                }
                Ok(Envelope::Abort) | Err(_) => {
                    return Err(Error::Execution {
                        round: t,
                        rank: me,
                        detail: ABORTED.into(),
                    })
                }
            }
        };
        agent.accept(t, incoming)?;
        log.occupancy.push(agent.occupancy());
    }
    Ok((agent, log))
}

fn summarize(
    sched: &RelativeSchedule,
    logs: &[RankLog],
    chunk_bytes: u64,
    opts: &ExecOptions,
) -> Result<(ExecStats, Vec<TraceRecord>)> {
    let n = sched.n_ranks;
    let mut stats = ExecStats {
        rounds: sched.rounds.len(),
        occupancy_per_round: vec![0; sched.rounds.len()],
        ..ExecStats::default()
    };
    let mut received = vec![0u64; n];
    let mut trace = Vec::new();
    for (t, round) in sched.rounds.iter().enumerate() {
        for (sender, log) in logs.iter().enumerate() {
            let (receiver, ids) = &log.sent[t];
            let bytes = ids.len() as u64 * chunk_bytes;
            received[*receiver] += bytes;
            stats.messages += 1;
            stats.max_chunks_per_message = stats.max_chunks_per_message.max(ids.len());
            stats.occupancy_per_round[t] = stats.occupancy_per_round[t].max(log.occupancy[t]);
            trace.push(TraceRecord {
                round: t,
                dim: round.dimension,
                split: round.split_index,
                sender,
                receiver: *receiver,
                chunks: ids.clone(),
                bytes,
            });
        }
    }
    let sent: Vec<u64> = logs
        .iter()
        .map(|l| {
            l.sent
                .iter()
                .map(|(_, ids)| ids.len() as u64 * chunk_bytes)
                .sum()
        })
        .collect();
    stats.bytes_sent_per_rank = sent.iter().copied().max().unwrap_or(0);
    stats.bytes_received_per_rank = received.iter().copied().max().unwrap_or(0);
    stats.peak_intermediate_slots = stats.occupancy_per_round.iter().copied().max().unwrap_or(0);

    if let Some(h) = &opts.hierarchy {
        h.check_covers(n)?;
        for round in &sched.rounds {
            let level = h.offset_level(round.distance())?;
            *stats.bytes_by_topology_level.entry(level).or_default() +=
                round.chunk_offsets.len() as u64 * chunk_bytes;
        }
    }
    Ok((stats, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{oracle_allgather, oracle_reduce_scatter};
    use crate::pat::{pat_allgather, pat_reduce_scatter};

    #[test]
    fn pat_eight_two_gathers_everything() {
        let sched = pat_allgather(8, 2).unwrap();
        let payload = Payload::<i64>::gather_from_fn(8, 3, |r, e| (r * 10 + e) as i64);
        let (out, stats) = run_allgather(&sched, &payload).unwrap();
        assert_eq!(out, oracle_allgather(&payload));
        assert_eq!(stats.occupancy_per_round, vec![1, 3, 1, 0]);
        assert_eq!(stats.peak_intermediate_slots, 3);
        assert_eq!(stats.bytes_sent_per_rank, 7 * 3 * 8);
        assert_eq!(stats.max_chunks_per_message, 2);
        assert_eq!(stats.messages, 4 * 8);
    }

    #[test]
    fn single_tree_needs_log_slots() {
        let sched = pat_allgather(8, 1).unwrap();
        let payload = Payload::<i64>::random_gather(8, 2, 0);
        let (_, stats) = run_allgather(&sched, &payload).unwrap();
        assert_eq!(stats.peak_intermediate_slots, 2);
    }

    #[test]
    fn reduce_scatter_matches_column_sums() {
        let sched = pat_reduce_scatter(8, 2).unwrap();
        let payload = Payload::<i64>::random_scatter(8, 5, 1);
        let (out, stats) = run_reduce_scatter(&sched, &payload, ReduceOp::WrappingIntSum).unwrap();
        assert_eq!(
            out,
            oracle_reduce_scatter(&payload, ReduceOp::WrappingIntSum).unwrap()
        );
        assert_eq!(stats.occupancy_per_round, vec![1, 3, 1, 0]);
    }

    #[test]
    fn all_ones_sum_to_rank_count() {
        let sched = pat_reduce_scatter(8, 4).unwrap();
        let payload = Payload::<i64>::scatter_from_fn(8, 4, |_, _, _| 1);
        let (out, _) = run_reduce_scatter(&sched, &payload, ReduceOp::WrappingIntSum).unwrap();
        assert!(out.iter().all(|c| c == &vec![8i64; 4]));
    }

    #[test]
    fn float_sum_within_tolerance() {
        let sched = pat_reduce_scatter(16, 4).unwrap();
        let payload = Payload::<f64>::random_scatter(16, 6, 2);
        let (out, _) = run_reduce_scatter(&sched, &payload, ReduceOp::FloatSum).unwrap();
        let want = oracle_reduce_scatter(&payload, ReduceOp::FloatSum).unwrap();
        for (got, want) in out.iter().flatten().zip(want.iter().flatten()) {
            assert!(got.matches(*want), "{got} vs {want}");
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let ag = pat_allgather(8, 2).unwrap();
        let rs = pat_reduce_scatter(8, 2).unwrap();
        let small = Payload::<i64>::random_gather(4, 1, 0);
        assert!(matches!(
            run_allgather(&ag, &small),
            Err(Error::PayloadShape(_))
        ));
        let gather8 = Payload::<i64>::random_gather(8, 1, 0);
        assert!(matches!(
            run_allgather(&rs, &gather8),
            Err(Error::KindMismatch { .. })
        ));
        let scatter8 = Payload::<i64>::random_scatter(8, 1, 0);
        assert!(matches!(
            run_reduce_scatter(&rs, &scatter8, ReduceOp::FloatSum),
            Err(Error::UnsupportedOp { .. })
        ));
        let mut broken = ag.clone();
        broken.rounds.swap(0, 3);
        assert!(matches!(
            run_allgather(&broken, &gather8),
            Err(Error::InvalidSchedule(_))
        ));
    }

    #[test]
    fn parallel_mode_agrees() {
        let sched = pat_allgather(12, 2).unwrap();
        let payload = Payload::<i64>::random_gather(12, 3, 7);
        let parallel = ExecOptions {
            mode: ExecMode::Parallel,
            hierarchy: None,
        };
        let a = run_allgather_with(&sched, &payload, &ExecOptions::default()).unwrap();
        let b = run_allgather_with(&sched, &payload, &parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_rank_runs() {
        let sched = crate::baseline::ring_allgather(1);
        let payload = Payload::<i64>::gather_from_fn(1, 2, |_, e| e as i64);
        let (out, stats) = run_allgather(&sched, &payload).unwrap();
        assert_eq!(out, vec![vec![vec![0, 1]]]);
        assert_eq!(stats.rounds, 0);
        let rs = crate::pat::mirror_schedule(&sched);
        let payload = Payload::<i64>::scatter_from_fn(1, 2, |_, _, e| e as i64 + 5);
        let (out, _) = run_reduce_scatter(&rs, &payload, ReduceOp::WrappingIntSum).unwrap();
        assert_eq!(out, vec![vec![5, 6]]);
    }

    #[test]
    fn trace_rows() {
        let sched = pat_allgather(4, 1).unwrap();
        let payload = Payload::<u32>::random_gather(4, 1, 0);
        let run = run_allgather_with(&sched, &payload, &ExecOptions::default()).unwrap();
        let csv = trace_csv(&run.trace);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(TRACE_CSV_HEADER));
        assert_eq!(lines.next(), Some("0,1,0,0,2,0,4"));
        assert_eq!(csv.lines().count(), 1 + 3 * 4);
    }
}
