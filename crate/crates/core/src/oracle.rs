//! Definitional all-gather / reduce-scatter results and the sweep harness
//! that checks the simulator against them.

use std::fmt;

use rayon::prelude::*;

use crate::error::Result;
use crate::scalar::{check_op, reduce_chunks, Element, ReduceOp};
use crate::sched::{valid_trees, validate, Algorithm, CollectiveKind, RelativeSchedule};
use crate::simulate::{
    run_allgather_with, run_reduce_scatter_with, ExecMode, ExecOptions, Payload,
};

/// Seeds used by the sweep unless told otherwise.
pub const DEFAULT_SEEDS: [u64; 3] = [0, 1, 2];

/// Every rank ends with every input chunk, in rank order.
pub fn oracle_allgather<T: Element>(payload: &Payload<T>) -> Vec<Vec<Vec<T>>> {
    let all: Vec<Vec<T>> = payload.chunks.iter().map(|row| row[0].clone()).collect();
    vec![all; payload.n_ranks()]
}

/// Rank `r` ends with the fold, in source-rank order, of `input[s][r]`.
pub fn oracle_reduce_scatter<T: Element>(
    payload: &Payload<T>,
    op: ReduceOp,
) -> Result<Vec<Vec<T>>> {
    check_op::<T>(op)?;
    let n = payload.n_ranks();
    (0..n)
        .map(|r| {
            let mut acc = payload.chunks[0][r].clone();
            for row in &payload.chunks[1..] {
                reduce_chunks(&mut acc, &row[r], op)?;
            }
            Ok(acc)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub algorithm: Algorithm,
    pub kind: CollectiveKind,
    pub n_ranks: usize,
    pub trees: Option<usize>,
    pub seed: u64,
    pub element: &'static str,
    pub rank: usize,
    /// Origin rank for all-gather, position in the output chunk for reduce-scatter.
    pub chunk: usize,
}

impl fmt::Display for Mismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "mismatch algorithm={} kind={} n={} T={} seed={} element={} rank={} chunk={}",
            self.algorithm,
            self.kind,
            self.n_ranks,
            fmt_trees(self.trees),
            self.seed,
            self.element,
            self.rank,
            self.chunk
        )
    }
}

fn fmt_trees(trees: Option<usize>) -> String {
    trees.map_or_else(|| "-".to_string(), |t| t.to_string())
}

#[derive(Debug, Clone)]
pub struct CheckOptions {
    pub seeds: Vec<u64>,
    pub elements_per_chunk: usize,
    pub mode: ExecMode,
    /// Fail when measured occupancy exceeds this many slots.
    pub slot_budget: Option<usize>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            seeds: DEFAULT_SEEDS.to_vec(),
            elements_per_chunk: 3,
            mode: ExecMode::Lockstep,
            slot_budget: None,
        }
    }
}

/// Outcome of checking one schedule.
#[derive(Debug, Clone)]
pub struct CaseReport {
    pub algorithm: Algorithm,
    pub kind: CollectiveKind,
    pub n_ranks: usize,
    pub trees: Option<usize>,
    pub rounds: usize,
    pub peak_slots: usize,
    pub failures: Vec<String>,
    pub mismatches: Vec<Mismatch>,
}

impl CaseReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.mismatches.is_empty()
    }

    pub fn summary_line(&self) -> String {
        format!(
            "{} {} {} n={} T={} rounds={} peak_slots={}",
            if self.passed() { "ok  " } else { "FAIL" },
            self.algorithm,
            self.kind,
            self.n_ranks,
            fmt_trees(self.trees),
            self.rounds,
            self.peak_slots
        )
    }

    /// Summary followed by one indented line per failure.
    pub fn detail_lines(&self) -> Vec<String> {
        let mut lines = vec![self.summary_line()];
        lines.extend(self.failures.iter().map(|f| format!("  {f}")));
        lines.extend(self.mismatches.iter().map(|m| format!("  {m}")));
        lines
    }
}

/// Validates `sched`, runs it on integer and float payloads for every seed and
/// compares each run with the oracle.
pub fn check_schedule(sched: &RelativeSchedule, opts: &CheckOptions) -> CaseReport {
    let mut report = CaseReport {
        algorithm: sched.algorithm,
        kind: sched.kind,
        n_ranks: sched.n_ranks,
        trees: sched.params.map(|p| p.trees),
        rounds: sched.rounds.len(),
        peak_slots: 0,
        failures: Vec::new(),
        mismatches: Vec::new(),
    };
    let violations = validate(sched);
    if !violations.is_empty() {
        report
            .failures
            .extend(violations.iter().map(|v| format!("violation: {v}")));
        return report;
    }
    let exec = ExecOptions {
        mode: opts.mode,
        hierarchy: None,
    };
    for &seed in &opts.seeds {
        let outcome = match sched.kind {
            CollectiveKind::AllGather => check_gather::<i64>(sched, seed, opts, &exec, &mut report)
                .and_then(|_| check_gather::<f64>(sched, seed, opts, &exec, &mut report)),
            CollectiveKind::ReduceScatter => {
                check_scatter::<i64>(sched, seed, opts, &exec, &mut report)
                    .and_then(|_| check_scatter::<f64>(sched, seed, opts, &exec, &mut report))
            }
        };
        if let Err(e) = outcome {
            report.failures.push(format!("seed {seed}: {e}"));
        }
    }
    if let Some(budget) = opts.slot_budget {
        if report.peak_slots > budget {
            report.failures.push(format!(
                "peak occupancy {} exceeds the {budget}-slot buffer",
                report.peak_slots
            ));
        }
    }
    report
}

fn mismatch<T: Element>(report: &CaseReport, seed: u64, rank: usize, chunk: usize) -> Mismatch {
    Mismatch {
        algorithm: report.algorithm,
        kind: report.kind,
        n_ranks: report.n_ranks,
        trees: report.trees,
        seed,
        element: T::NAME,
        rank,
        chunk,
    }
}

fn check_gather<T: Element>(
    sched: &RelativeSchedule,
    seed: u64,
    opts: &CheckOptions,
    exec: &ExecOptions,
    report: &mut CaseReport,
) -> Result<()> {
    let payload = Payload::<T>::random_gather(sched.n_ranks, opts.elements_per_chunk, seed);
    let run = run_allgather_with(sched, &payload, exec)?;
    report.peak_slots = report.peak_slots.max(run.stats.peak_intermediate_slots);
    let want = oracle_allgather(&payload);
    for (rank, (got, want)) in run.outputs.iter().zip(&want).enumerate() {
        for (origin, (g, w)) in got.iter().zip(want).enumerate() {
            if !chunk_matches(g, w) {
                let m = mismatch::<T>(report, seed, rank, origin);
                report.mismatches.push(m);
            }
        }
    }
    Ok(())
}

fn check_scatter<T: Element>(
    sched: &RelativeSchedule,
    seed: u64,
    opts: &CheckOptions,
    exec: &ExecOptions,
    report: &mut CaseReport,
) -> Result<()> {
    let op = T::native_op();
    let payload = Payload::<T>::random_scatter(sched.n_ranks, opts.elements_per_chunk, seed);
    let run = run_reduce_scatter_with(sched, &payload, op, exec)?;
    report.peak_slots = report.peak_slots.max(run.stats.peak_intermediate_slots);
    let want = oracle_reduce_scatter(&payload, op)?;
    for (rank, (got, want)) in run.outputs.iter().zip(&want).enumerate() {
        for (pos, (g, w)) in got.iter().zip(want).enumerate() {
            if !g.matches(*w) {
                let m = mismatch::<T>(report, seed, rank, pos);
                report.mismatches.push(m);
            }
        }
    }
    Ok(())
}

fn chunk_matches<T: Element>(got: &[T], want: &[T]) -> bool {
    got.len() == want.len() && got.iter().zip(want).all(|(g, w)| g.matches(*w))
}

/// One schedule in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Case {
    pub algorithm: Algorithm,
    pub kind: CollectiveKind,
    pub n_ranks: usize,
    pub trees: Option<usize>,
}

impl Case {
    pub fn build(&self) -> Result<RelativeSchedule> {
        crate::generate(self.algorithm, self.kind, self.n_ranks, self.trees)
    }
}

/// Every supported (algorithm, kind, n, T) combination: recursive doubling
/// only on powers of two, PAT with every valid tree count.
pub fn enumerate_cases(
    algorithms: &[Algorithm],
    kinds: &[CollectiveKind],
    ranks: impl IntoIterator<Item = usize>,
) -> Vec<Case> {
    let mut cases = Vec::new();
    for n in ranks {
        for &algorithm in algorithms {
            if algorithm == Algorithm::RecursiveDoubling && !n.is_power_of_two() {
                continue;
            }
            let trees: Vec<Option<usize>> = if algorithm == Algorithm::Pat {
                valid_trees(n).into_iter().map(Some).collect()
            } else {
                vec![None]
            };
            for t in trees {
                for &kind in kinds {
                    cases.push(Case {
                        algorithm,
                        kind,
                        n_ranks: n,
                        trees: t,
                    });
                }
            }
        }
    }
    cases
}

/// Checks every case, sharded across threads; reports come back in case order.
pub fn sweep(cases: &[Case], opts: &CheckOptions) -> Vec<CaseReport> {
    cases
        .par_iter()
        .map(|case| match case.build() {
            Ok(sched) => check_schedule(&sched, opts),
            Err(e) => CaseReport {
                algorithm: case.algorithm,
                kind: case.kind,
                n_ranks: case.n_ranks,
                trees: case.trees,
                rounds: 0,
                peak_slots: 0,
                failures: vec![format!("generation failed: {e}")],
                mismatches: Vec::new(),
            },
        })
        .collect()
}
