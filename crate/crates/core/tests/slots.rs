mod support;

use patsched::sched::valid_trees;
use patsched::simulate::{run_allgather, run_reduce_scatter, Payload};
use patsched::{pat_allgather, pat_reduce_scatter, ReduceOp};

#[test]
fn hand_traced_pat_eight_two() {
    // round 0 receives 4 (forwarded later); round 1 adds 6 and 2; round 2
    // forwards 6 and 2 for the last time; round 3 drains 4.
    let sched = pat_allgather(8, 2).unwrap();
    assert_eq!(support::occupancy(&sched), vec![1, 3, 1, 0]);
    let rs = pat_reduce_scatter(8, 2).unwrap();
    assert_eq!(support::occupancy(&rs), vec![1, 3, 1, 0]);
}

#[test]
fn simulator_matches_brute_force_tracker() {
    for n in 1..=64 {
        for t in valid_trees(n) {
            let ag = pat_allgather(n, t).unwrap();
            let payload = Payload::<i64>::random_gather(n, 1, 0);
            let (_, stats) = run_allgather(&ag, &payload).unwrap();
            assert_eq!(
                stats.occupancy_per_round,
                support::occupancy(&ag),
                "ag n={n} T={t}"
            );

            let rs = pat_reduce_scatter(n, t).unwrap();
            let payload = Payload::<i64>::random_scatter(n, 1, 0);
            let (_, stats) = run_reduce_scatter(&rs, &payload, ReduceOp::WrappingIntSum).unwrap();
            assert_eq!(
                stats.occupancy_per_round,
                support::occupancy(&rs),
                "rs n={n} T={t}"
            );
        }
    }
}

#[test]
fn peak_table() {
    for n in 2..=128 {
        let trees = valid_trees(n);
        let peaks: Vec<usize> = trees
            .iter()
            .map(|&t| {
                let payload = Payload::<i64>::random_gather(n, 1, 0);
                let (_, stats) = run_allgather(&pat_allgather(n, t).unwrap(), &payload).unwrap();
                stats.peak_intermediate_slots
            })
            .collect();
        println!("n={n} peaks={peaks:?}");
        assert!(peaks[0] <= support::ceil_log2(n), "n={n}");
        assert!(peaks.windows(2).all(|w| w[0] <= w[1]), "n={n} {peaks:?}");
    }
}
