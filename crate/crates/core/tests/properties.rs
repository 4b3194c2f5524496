//! Structural invariants of every generator, the mirror transform, the
//! simulator's accounting and the cost model.

use std::collections::BTreeSet;

use patsched::sched::{max_trees, valid_trees};
use patsched::simulate::{run_allgather_with, ExecOptions};
use patsched::{
    bruck_farthest, bruck_nearest, generate, mirror_schedule, pat_allgather, round_count_formula,
    run_allgather, run_reduce_scatter, schedule_cost, validate, Algorithm, CollectiveKind, Level,
    Payload, ReduceOp, RelativeSchedule, Topology,
};
use proptest::prelude::*;

/// Every schedule the library can build for `n`, both kinds.
fn all_schedules(n: usize) -> Vec<RelativeSchedule> {
    let mut out = Vec::new();
    for algo in Algorithm::ALL {
        if algo == Algorithm::RecursiveDoubling && !n.is_power_of_two() {
            continue;
        }
        let trees: Vec<Option<usize>> = match algo {
            Algorithm::Pat => valid_trees(n).into_iter().map(Some).collect(),
            _ => vec![None],
        };
        for t in trees {
            for kind in [CollectiveKind::AllGather, CollectiveKind::ReduceScatter] {
                out.push(generate(algo, kind, n, t).unwrap());
            }
        }
    }
    out
}

fn sorted_counts(s: &RelativeSchedule) -> Vec<usize> {
    let mut c = s.chunk_counts();
    c.sort_unstable();
    c
}

#[test]
fn every_generator_validates() {
    for n in (1..=64).chain([96, 100, 127, 128, 200, 255, 256]) {
        for s in all_schedules(n) {
            let v = validate(&s);
            assert!(v.is_empty(), "{} {} n={n}: {v:?}", s.algorithm, s.kind);
        }
    }
}

#[test]
fn translation_is_a_bijection_each_round() {
    for n in 1..=48 {
        for s in all_schedules(n) {
            for round in &s.rounds {
                let receivers: BTreeSet<usize> = (0..n).map(|r| round.receiver_of(r, n)).collect();
                assert_eq!(receivers.len(), n, "n={n} round {}", round.round_index);
                for r in 0..n {
                    assert_eq!(round.sender_to(round.receiver_of(r, n), n), r);
                }
            }
        }
    }
}

#[test]
fn bruck_totals() {
    for n in 2..=256 {
        let near = bruck_nearest(n);
        assert_eq!(near.chunk_counts().iter().sum::<usize>(), n - 1, "n={n}");
        let far = bruck_farthest(n);
        assert_eq!(far.chunk_counts().iter().sum::<usize>(), n - 1, "n={n}");
        assert_eq!(far.rounds[0].chunk_offsets.len(), 1, "n={n}");
        if n.is_power_of_two() {
            assert_eq!(sorted_counts(&near), sorted_counts(&far), "n={n}");
        }
    }
}

#[test]
fn pat_round_counts() {
    for n in (1..=9).map(|e| 1usize << e) {
        for t in valid_trees(n) {
            let s = pat_allgather(n, t).unwrap();
            assert_eq!(
                s.round_count(),
                round_count_formula(n, t).unwrap(),
                "n={n} T={t}"
            );
        }
    }
    for n in 2..=256 {
        let rounds: Vec<usize> = valid_trees(n)
            .iter()
            .map(|&t| pat_allgather(n, t).unwrap().round_count())
            .collect();
        assert_eq!(rounds[0], n - 1, "n={n}");
        assert!(rounds.windows(2).all(|w| w[0] >= w[1]), "n={n} {rounds:?}");
    }
}

#[test]
fn pat_aggregation_cap() {
    for n in 2..=256 {
        let far_counts = bruck_farthest(n).chunk_counts();
        for t in valid_trees(n) {
            let s = pat_allgather(n, t).unwrap();
            assert!(s.chunk_counts().iter().all(|&c| c <= t), "n={n} T={t}");
            if n.is_power_of_two() {
                assert_eq!(s.max_chunks_per_message(), t.min(n - 1), "n={n} T={t}");
            }
            // the fewest rounds any T-capped schedule of these trees can take
            let floor: usize = far_counts.iter().map(|c| c.div_ceil(t)).sum();
            assert_eq!(s.round_count(), floor, "n={n} T={t}");
            for r in &s.rounds {
                assert!(r.chunk_offsets.windows(2).all(|w| w[0] > w[1]));
            }
        }
        let full = pat_allgather(n, max_trees(n)).unwrap();
        assert_eq!(full.rounds, bruck_farthest(n).rounds, "n={n}");
    }
}

#[test]
fn mirror_involution_and_shape() {
    for n in 1..=64 {
        for s in all_schedules(n) {
            let m = mirror_schedule(&s);
            assert_eq!(mirror_schedule(&m), s, "{} n={n}", s.algorithm);
            assert_ne!(m.kind, s.kind);
            let mut dims = s.dimensions();
            dims.reverse();
            assert_eq!(m.dimensions(), dims);
            assert_eq!(sorted_counts(&m), sorted_counts(&s));
            for (a, b) in m.rounds.iter().zip(s.rounds.iter().rev()) {
                assert_eq!(a.peer_send_offset, -b.peer_send_offset);
            }
        }
    }
}

#[test]
fn pat_split_indices_ascend_per_dimension() {
    for n in 2..=64 {
        for s in all_schedules(n)
            .into_iter()
            .filter(|s| s.algorithm == Algorithm::Pat)
        {
            let mut seen = vec![0usize; 64];
            for r in &s.rounds {
                let d = r.dimension as usize;
                assert_eq!(r.split_index, seen[d], "{} {} n={n}", s.algorithm, s.kind);
                seen[d] += 1;
            }
        }
    }
}

#[test]
fn json_round_trip() {
    for n in [1, 2, 5, 8, 13, 32] {
        for s in all_schedules(n) {
            let text = s.to_json();
            assert_eq!(RelativeSchedule::from_json(&text).unwrap(), s);
            assert_eq!(
                text,
                generate(s.algorithm, s.kind, n, s.params.map(|p| p.trees))
                    .unwrap()
                    .to_json()
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bytes_are_conserved(n in 1usize..=48, t_pick in 0usize..8, elems in 1usize..6, seed: u64) {
        let trees = valid_trees(n);
        let t = trees[t_pick % trees.len()];
        let s = pat_allgather(n, t).unwrap();
        let payload = Payload::<i64>::random_gather(n, elems, seed);
        let (_, stats) = run_allgather(&s, &payload).unwrap();
        let sent: usize = s.chunk_counts().iter().sum();
        prop_assert_eq!(stats.bytes_sent_per_rank, (sent * elems * 8) as u64);
        prop_assert_eq!(stats.bytes_received_per_rank, stats.bytes_sent_per_rank);
        prop_assert_eq!(stats.messages, n * s.round_count());
        prop_assert_eq!(stats.max_chunks_per_message, s.max_chunks_per_message());
    }

    #[test]
    fn peak_ignores_chunk_size(n in 2usize..=64, t_pick in 0usize..8, elems in 1usize..9) {
        let trees = valid_trees(n);
        let t = trees[t_pick % trees.len()];
        let s = pat_allgather(n, t).unwrap();
        let small = run_allgather(&s, &Payload::<i64>::random_gather(n, 1, 0)).unwrap().1;
        let big = run_allgather(&s, &Payload::<i64>::random_gather(n, elems, 0)).unwrap().1;
        prop_assert_eq!(small.peak_intermediate_slots, big.peak_intermediate_slots);
        prop_assert_eq!(small.occupancy_per_round, big.occupancy_per_round);
    }

    #[test]
    fn scatter_sums_match_columns(n in 1usize..=40, t_pick in 0usize..8, seed: u64) {
        let trees = valid_trees(n);
        let t = trees[t_pick % trees.len()];
        let rs = mirror_schedule(&pat_allgather(n, t).unwrap());
        let payload = Payload::<i64>::scatter_from_fn(n, 2, |src, dst, e| {
            ((src * 31 + dst * 7 + e) as i64).wrapping_mul(seed as i64 | 1)
        });
        let (out, _) = run_reduce_scatter(&rs, &payload, ReduceOp::WrappingIntSum).unwrap();
        for (dst, got) in out.iter().enumerate() {
            for (e, &v) in got.iter().enumerate() {
                let want = (0..n).fold(0i64, |acc, src| acc.wrapping_add(payload.chunks[src][dst][e]));
                prop_assert_eq!(v, want);
            }
        }
    }

    #[test]
    fn uniform_cost_is_alpha_beta(n in 2usize..=128, chunk in 1u64..1_000_000, alpha in 0.0f64..50.0, beta in 0.0f64..10.0) {
        let topo = Topology::uniform(n, alpha, beta);
        for algo in [Algorithm::Ring, Algorithm::BruckNearest, Algorithm::BruckFarthest, Algorithm::Pat] {
            let s = generate(algo, CollectiveKind::AllGather, n, None).unwrap();
            let report = schedule_cost(&s, &topo, chunk).unwrap();
            let bytes = (n as u64 - 1) * chunk;
            let want = s.round_count() as f64 * alpha + bytes as f64 * beta / 1000.0;
            prop_assert!((report.total_us - want).abs() <= 1e-9 * want.max(1.0));
            prop_assert_eq!(report.bytes_per_rank(), bytes);
            let per_round: f64 = report.per_round_cost_us.iter().sum();
            prop_assert!((per_round - report.total_us).abs() <= 1e-9 * want.max(1.0));
        }
    }
}

fn tapered(n: usize, top_beta: f64) -> Topology<f64> {
    Topology::new(vec![
        Level {
            span: n / 2,
            alpha_us: 1.0,
            beta_ns_per_byte: 0.1,
        },
        Level {
            span: 2,
            alpha_us: 2.0,
            beta_ns_per_byte: top_beta,
        },
    ])
    .unwrap()
}

#[test]
fn tapering_favours_farthest_first() {
    for n in (2..=9).map(|e| 1usize << e) {
        let near = bruck_nearest(n);
        let far = bruck_farthest(n);
        let mut last_gap = 0.0;
        for top_beta in [0.1, 0.4, 1.6, 6.4] {
            let topo = tapered(n, top_beta);
            let cn = schedule_cost(&near, &topo, 4096).unwrap();
            let cf = schedule_cost(&far, &topo, 4096).unwrap();
            assert_eq!(cn.round_count, cf.round_count);
            assert!(cf.total_us <= cn.total_us, "n={n} beta={top_beta}");
            let gap = cn.total_us - cf.total_us;
            assert!(
                gap >= last_gap,
                "n={n}: advantage shrank as the top tapered"
            );
            last_gap = gap;
        }
        // PAT rounds never cross the top more than farthest-first Bruck does.
        let topo = tapered(n, 6.4);
        let top_far = schedule_cost(&far, &topo, 4096).unwrap().top_level_bytes();
        for t in valid_trees(n) {
            let pat = schedule_cost(&pat_allgather(n, t).unwrap(), &topo, 4096).unwrap();
            assert_eq!(pat.top_level_bytes(), top_far, "n={n} T={t}");
        }
    }
}

#[test]
fn level_bytes_match_simulator() {
    for n in [4, 8, 16, 32] {
        let topo = tapered(n, 1.0);
        let hierarchy = topo.hierarchy().unwrap();
        for s in all_schedules(n)
            .into_iter()
            .filter(|s| s.kind == CollectiveKind::AllGather)
        {
            let report = schedule_cost(&s, &topo, 16).unwrap();
            let payload = Payload::<i64>::random_gather(n, 2, 0);
            let opts = ExecOptions {
                hierarchy: Some(hierarchy.clone()),
                ..Default::default()
            };
            let run = run_allgather_with(&s, &payload, &opts).unwrap();
            for (level, &bytes) in report.bytes_by_level.iter().enumerate() {
                let measured = run
                    .stats
                    .bytes_by_topology_level
                    .get(&level)
                    .copied()
                    .unwrap_or(0);
                assert_eq!(measured, bytes, "{} n={n} level {level}", s.algorithm);
            }
        }
    }
}
