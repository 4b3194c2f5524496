//! Parallel Aggregated Trees.
//!
//! PAT starts from farthest-first Bruck and caps aggregation at `T` chunks
//! per message, `T` being what the intermediate buffer can hold. The far
//! dimensions run fully aggregated until `T` ranks hold each chunk (the
//! logarithmic top of the tree); from there `T` subtrees progress in
//! parallel, each one a linear, far-step-first walk.
//!
//! Reduce-scatter runs the same trees backwards: see [`mirror_schedule`].

use std::collections::BTreeMap;

use crate::baseline::farthest_sendable;
use crate::error::{Error, Result};
use crate::sched::{
    ceil_log2, check_trees, max_trees, Algorithm, CollectiveKind, PatParams, RelativeRound,
    RelativeSchedule,
};

/// Tree count that fits a buffer of `buffer_bytes`: the largest power of two
/// not above `buffer_bytes / chunk_bytes`, clamped to `[1, 2^(D-1)]`.
pub fn trees_from_buffer(buffer_bytes: u64, chunk_bytes: u64, n: usize) -> Result<usize> {
    if chunk_bytes == 0 || buffer_bytes < chunk_bytes {
        return Err(Error::BufferTooSmall {
            buffer_bytes,
            chunk_bytes,
        });
    }
    if n < 2 {
        return Err(Error::TooFewRanks { n_ranks: n, min: 2 });
    }
    let fit = buffer_bytes / chunk_bytes;
    let pow = 1u64 << (63 - fit.leading_zeros());
    Ok((pow as usize).min(max_trees(n)))
}

pub fn pat_allgather(n: usize, trees: usize) -> Result<RelativeSchedule> {
    pat_allgather_with(n, PatParams::for_ranks(n, trees)?)
}

/// PAT all-gather with an explicit slot budget recorded in the schedule.
///
/// The top of the tree runs farthest-first with full aggregation for as long
/// as at most `T` ranks hold a given chunk. Those holders then root subtrees
/// that are walked in parallel, each walk depth-first with the far child
/// first. A chunk received on dimension `d` is therefore forwarded on every
/// lower dimension before the next receive on `d`, which keeps a single
/// tree's buffering logarithmic.
///
/// When `n` is not a power of two the subtrees are truncated unevenly, and a
/// deeper top (more, smaller subtrees) can pack rounds better; the shallowest
/// top reaching the fewest rounds wins.
pub fn pat_allgather_with(n: usize, params: PatParams) -> Result<RelativeSchedule> {
    check_trees(n, params.trees)?;
    let trees = params.trees;
    let dims = ceil_log2(n);
    let fits = |d: usize| farthest_sendable(n, d).len() <= trees;
    // Holders left after dimension d, counting only those with something
    // left to forward. The last dimension only has to fit its own round.
    let holders_fit = |d: usize| match d {
        0 => fits(0),
        _ => (n - 1).div_ceil(1 << d) <= trees,
    };
    let mut shallow = dims;
    while shallow > 0 && holders_fit(shallow - 1) {
        shallow -= 1;
    }
    let mut deep = shallow;
    while deep > 0 && fits(deep - 1) {
        deep -= 1;
    }
    // Every (chunk, dimension) send is fixed by the binomial trees, so no
    // schedule beats packing each dimension's sends T at a time.
    let floor: usize = (0..dims)
        .map(|d| farthest_sendable(n, d).len().div_ceil(trees))
        .sum();

    let mut best = layout(n, trees, shallow);
    for split in (deep..shallow).rev() {
        if best.len() <= floor {
            break;
        }
        let rounds = layout(n, trees, split);
        if rounds.len() < best.len() {
            best = rounds;
        }
    }

    Ok(RelativeSchedule {
        algorithm: Algorithm::Pat,
        kind: CollectiveKind::AllGather,
        n_ranks: n,
        params: Some(params),
        rounds: best,
    })
}

/// Fully aggregated rounds on dimensions `dims - 1 ..= split`, then the
/// subtrees rooted at multiples of `2^split`.
fn layout(n: usize, trees: usize, split: usize) -> Vec<RelativeRound> {
    let dims = ceil_log2(n);
    let mut rounds: Vec<RelativeRound> = (split..dims)
        .rev()
        .map(|d| RelativeRound::shift(0, d as u32, 0, 1i64 << d, farthest_sendable(n, d)))
        .collect();
    let top = rounds.len();

    let roots: Vec<usize> = (0..n).step_by(1 << split).rev().collect();
    let mut steps = Vec::new();
    walk_subtree(0, split, &mut steps);
    // (dimension, chunk) sends, by walk step then root.
    let mut pending: Vec<(usize, usize)> = steps
        .iter()
        .flat_map(|&(d, node)| roots.iter().map(move |&h| (d, h + node)))
        .filter(|&(d, k)| k + (1 << d) < n)
        .collect();
    let mut usable_from = vec![usize::MAX; n];
    for &h in &roots {
        usable_from[h] = top;
    }
    usable_from[0] = 0;

    // Each round follows the most urgent send's dimension and fills up with
    // the next ready sends on it. The most urgent one is always ready: its
    // parent send ranks ahead of it.
    while let Some(&(d, _)) = pending.first() {
        let now = rounds.len();
        let mut chunks = Vec::new();
        pending.retain(|&(dd, k)| {
            let take = dd == d && chunks.len() < trees && usable_from[k] <= now;
            if take {
                chunks.push(k);
            }
            !take
        });
        for &k in &chunks {
            usable_from[k + (1 << d)] = now + 1;
        }
        chunks.sort_unstable_by(|a, b| b.cmp(a));
        rounds.push(RelativeRound::shift(now, d as u32, 0, 1i64 << d, chunks));
    }

    let mut per_dim = vec![0usize; dims.max(1)];
    for (i, r) in rounds.iter_mut().enumerate() {
        r.round_index = i;
        r.split_index = per_dim[r.dimension as usize];
        per_dim[r.dimension as usize] += 1;
    }
    rounds
}

/// Depth-first walk of the binomial subtree below `node`, which still has to
/// send on dimensions `below - 1 .. 0`: far child first, each child's subtree
/// completed before the next, nearer, send.
fn walk_subtree(node: usize, below: usize, out: &mut Vec<(usize, usize)>) {
    for d in (0..below).rev() {
        out.push((d, node));
        walk_subtree(node + (1 << d), d, out);
    }
}

/// Closed-form PAT round count for power-of-two `n`: `log2(T) + n/T - 1`.
pub fn round_count_formula(n: usize, trees: usize) -> Result<usize> {
    if !n.is_power_of_two() {
        return Err(Error::NonPowerOfTwo {
            what: "rank count",
            value: n,
        });
    }
    if !trees.is_power_of_two() {
        return Err(Error::NonPowerOfTwo {
            what: "tree count",
            value: trees,
        });
    }
    if trees > n / 2 {
        return Err(Error::InvalidTrees {
            trees,
            n_ranks: n,
            max: n / 2,
        });
    }
    Ok(trees.trailing_zeros() as usize + n / trees - 1)
}

/// Turns an all-gather schedule into the reduce-scatter that runs the same
/// trees in reverse: round order flips, each peer is negated and each round
/// sends what the original round received. Applied to a reduce-scatter it
/// gives back the all-gather, so mirroring twice is the identity.
pub fn mirror_schedule(sched: &RelativeSchedule) -> RelativeSchedule {
    let kind = match sched.kind {
        CollectiveKind::AllGather => CollectiveKind::ReduceScatter,
        CollectiveKind::ReduceScatter => CollectiveKind::AllGather,
    };
    reverse_rounds(sched, kind)
}

/// [`mirror_schedule`] restricted to all-gather input.
pub fn reduce_scatter_from(sched: &RelativeSchedule) -> Result<RelativeSchedule> {
    if sched.kind != CollectiveKind::AllGather {
        return Err(Error::KindMismatch {
            expected: CollectiveKind::AllGather,
            found: sched.kind,
        });
    }
    Ok(mirror_schedule(sched))
}

fn reverse_rounds(sched: &RelativeSchedule, kind: CollectiveKind) -> RelativeSchedule {
    let n = sched.n_ranks;
    let mut rounds: Vec<RelativeRound> = sched
        .rounds
        .iter()
        .rev()
        .enumerate()
        .map(|(i, r)| RelativeRound {
            round_index: i,
            dimension: r.dimension,
            split_index: r.split_index,
            peer_send_offset: -r.peer_send_offset,
            chunk_offsets: r.received_offsets(n),
            exchange: r.exchange,
        })
        .collect();

    // Rounds of one dimension now run in reverse order; flip their split
    // indices so they ascend again.
    let mut top: BTreeMap<u32, usize> = BTreeMap::new();
    for r in &rounds {
        let t = top.entry(r.dimension).or_default();
        *t = (*t).max(r.split_index);
    }
    for r in &mut rounds {
        r.split_index = top[&r.dimension] - r.split_index;
    }

    RelativeSchedule {
        algorithm: sched.algorithm,
        kind,
        n_ranks: n,
        params: sched.params,
        rounds,
    }
}

pub fn pat_reduce_scatter(n: usize, trees: usize) -> Result<RelativeSchedule> {
    Ok(mirror_schedule(&pat_allgather(n, trees)?))
}
