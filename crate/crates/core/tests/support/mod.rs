//! Brute-force slot accounting that only looks at absolute steps.
//!
//! Works from `translate` output for every rank and derives each slot's
//! lifetime as an interval, rather than stepping agents like the simulator.

#![allow(dead_code)]

use patsched::{translate, CollectiveKind, RelativeSchedule};

/// `(round, sender, receiver, ids)` for every message of every rank.
fn all_steps(sched: &RelativeSchedule) -> Vec<(usize, usize, usize, Vec<usize>)> {
    (0..sched.n_ranks)
        .flat_map(|r| translate(sched, r).unwrap())
        .map(|s| (s.round_index, s.sender_rank, s.receiver_rank, s.chunk_ids))
        .collect()
}

/// Slots in use at the end of each round, max over ranks.
pub fn occupancy(sched: &RelativeSchedule) -> Vec<usize> {
    let rounds = sched.rounds.len();
    let n = sched.n_ranks;
    // per rank, per chunk: first receive, first send, last send
    let mut first_recv = vec![vec![usize::MAX; n]; n];
    let mut first_send = vec![vec![usize::MAX; n]; n];
    let mut last_send = vec![vec![0usize; n]; n];
    let mut sent_any = vec![vec![false; n]; n];
    for (t, from, to, ids) in all_steps(sched) {
        for id in ids {
            first_recv[to][id] = first_recv[to][id].min(t);
            first_send[from][id] = first_send[from][id].min(t);
            last_send[from][id] = last_send[from][id].max(t);
            sent_any[from][id] = true;
        }
    }
    let mut per_round = vec![0usize; rounds];
    for rank in 0..n {
        // lifetime [start, end): counted at the end of rounds start..end
        let mut intervals: Vec<(usize, usize)> = Vec::new();
        for chunk in (0..n).filter(|&c| c != rank) {
            let got = first_recv[rank][chunk];
            if got == usize::MAX || !sent_any[rank][chunk] {
                continue;
            }
            let end = match sched.kind {
                CollectiveKind::AllGather => last_send[rank][chunk],
                CollectiveKind::ReduceScatter => first_send[rank][chunk],
            };
            if end > got {
                intervals.push((got, end));
            }
        }
        for (t, slot) in per_round.iter_mut().enumerate() {
            let live = intervals.iter().filter(|(s, e)| *s <= t && t < *e).count();
            *slot = (*slot).max(live);
        }
    }
    per_round
}

pub fn peak(sched: &RelativeSchedule) -> usize {
    occupancy(sched).into_iter().max().unwrap_or(0)
}

/// `ceil(log2 n)` by repeated doubling.
pub fn ceil_log2(n: usize) -> usize {
    let mut d = 0;
    while (1usize << d) < n {
        d += 1;
    }
    d
}

/// `T + ceil(log2(max(n / T, 1)))` over the reals.
pub fn slot_bound(n: usize, trees: usize) -> usize {
    let ratio = n as f64 / trees as f64;
    trees
        + if ratio <= 1.0 {
            0
        } else {
            ratio.log2().ceil() as usize
        }
}
