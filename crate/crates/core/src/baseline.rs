//! Baseline all-gather generators: ring, nearest-first Bruck,
//! farthest-first Bruck and recursive doubling.

use crate::error::{Error, Result};
use crate::sched::{
    ceil_log2, Algorithm, ChunkOffset, CollectiveKind, RelativeRound, RelativeSchedule,
};

/// `n - 1` rounds, each forwarding the most recently received chunk to rank + 1.
pub fn ring_allgather(n: usize) -> RelativeSchedule {
    let mut sched = RelativeSchedule::empty(Algorithm::Ring, CollectiveKind::AllGather, n);
    sched.rounds = (0..n.saturating_sub(1))
        .map(|i| RelativeRound::shift(i, 0, 0, 1, vec![i]))
        .collect();
    sched
}

/// Classic Bruck: at dimension `d` send offsets `[0, min(2^d, n - 2^d))` to rank + 2^d.
pub fn bruck_nearest(n: usize) -> RelativeSchedule {
    let mut sched = RelativeSchedule::empty(Algorithm::BruckNearest, CollectiveKind::AllGather, n);
    sched.rounds = (0..ceil_log2(n))
        .map(|d| {
            let dist = 1usize << d;
            let count = dist.min(n - dist);
            RelativeRound::shift(d, d as u32, 0, dist as i64, (0..count).collect())
        })
        .collect();
    sched
}

/// Offsets sendable at dimension `d` in a farthest-first binomial tree over
/// `n` ranks, descending: every `k` with `k mod 2^(d+1) == 0` and `k + 2^d < n`.
pub fn farthest_sendable(n: usize, d: usize) -> Vec<ChunkOffset> {
    let dist = 1usize << d;
    let stride = dist << 1;
    let mut out: Vec<ChunkOffset> = (0..n).step_by(stride).filter(|&k| k + dist < n).collect();
    out.reverse();
    out
}

/// Dimension-reversed Bruck: dimensions run from far to near, so the longest
/// hop carries a single chunk and the nearest one carries the most.
pub fn bruck_farthest(n: usize) -> RelativeSchedule {
    let mut sched = RelativeSchedule::empty(Algorithm::BruckFarthest, CollectiveKind::AllGather, n);
    sched.rounds = (0..ceil_log2(n))
        .rev()
        .enumerate()
        .map(|(i, d)| RelativeRound::shift(i, d as u32, 0, 1i64 << d, farthest_sendable(n, d)))
        .collect();
    sched
}

/// Hypercube exchange; only defined for power-of-two `n`. Offsets are XOR
/// masks: after round `d` a rank holds every mask below `2^(d+1)`.
pub fn recursive_doubling(n: usize) -> Result<RelativeSchedule> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NonPowerOfTwo {
            what: "rank count",
            value: n,
        });
    }
    let mut sched =
        RelativeSchedule::empty(Algorithm::RecursiveDoubling, CollectiveKind::AllGather, n);
    sched.rounds = (0..ceil_log2(n))
        .map(|d| RelativeRound {
            exchange: true,
            ..RelativeRound::shift(d, d as u32, 0, 1i64 << d, (0..1usize << d).collect())
        })
        .collect();
    Ok(sched)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sched::validate;

    fn sets(s: &RelativeSchedule) -> Vec<Vec<usize>> {
        s.rounds.iter().map(|r| r.chunk_offsets.clone()).collect()
    }

    #[test]
    fn ring_shapes() {
        let s = ring_allgather(8);
        assert_eq!(s.round_count(), 7);
        assert_eq!(s.max_chunks_per_message(), 1);
        assert_eq!(sets(&ring_allgather(2)), vec![vec![0]]);
        assert!(ring_allgather(1).rounds.is_empty());
    }

    #[test]
    fn nearest_first_sets() {
        assert_eq!(
            sets(&bruck_nearest(8)),
            vec![vec![0], vec![0, 1], vec![0, 1, 2, 3]]
        );
        assert_eq!(bruck_nearest(7).chunk_counts(), vec![1, 2, 3]);
        assert_eq!(sets(&bruck_nearest(4)), vec![vec![0], vec![0, 1]]);
        assert!(validate(&bruck_nearest(4)).is_empty());
    }

    #[test]
    fn farthest_first_sets() {
        assert_eq!(
            sets(&bruck_farthest(8)),
            vec![vec![0], vec![4, 0], vec![6, 4, 2, 0]]
        );
        assert_eq!(bruck_farthest(8).dimensions(), vec![2, 1, 0]);
        assert_eq!(
            sets(&bruck_farthest(7)),
            vec![vec![0], vec![4, 0], vec![4, 2, 0]]
        );
        assert!(validate(&bruck_farthest(7)).is_empty());
    }

    #[test]
    fn recursive_doubling_shapes() {
        let s = recursive_doubling(8).unwrap();
        assert_eq!(s.chunk_counts(), vec![1, 2, 4]);
        assert!(validate(&s).is_empty());
        assert!(recursive_doubling(1).unwrap().rounds.is_empty());
        assert!(matches!(
            recursive_doubling(6),
            Err(Error::NonPowerOfTwo { value: 6, .. })
        ));
    }

    #[test]
    fn recursive_doubling_pairs_by_xor() {
        let s = recursive_doubling(8).unwrap();
        let steps = crate::sched::translate(&s, 5).unwrap();
        let peers: Vec<usize> = steps.iter().map(|st| st.receiver_rank).collect();
        assert_eq!(peers, vec![4, 7, 1]);
        assert_eq!(steps[2].chunk_ids, vec![5, 4, 7, 6]);
    }
}
