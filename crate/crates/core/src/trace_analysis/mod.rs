//! Quantities defined on a realized run, and per-trace checks of the
//! deterministic structure the dynamics must obey.

mod chain;
mod correlation;
mod critical;
mod finalization;
mod safety;

pub use chain::{verify_critical_chain, ChainVerdict, ChainViolation};
pub use correlation::{pair_correlation, PairCovariance, MIN_CORRELATION_TRIALS};
pub use critical::{critical_times, influence_set, CriticalTable};
pub use finalization::{
    audit_finalization, counting_check, finalization_report, CountingVerdict, FinalizationReport,
    FinalizationViolation,
};
pub use safety::{against_runs, cuts, is_safe_thru, AgainstRuns};

use crate::dynamics::{Announcement, RunTrace};

/// Per-node sorted announcement steps and value changes of a trace.
#[derive(Clone, Debug)]
pub struct Timeline {
    announces: Vec<Vec<u64>>,
    /// `(step, new value)`; forced-incorrect nodes start with `(0, Incorrect)`.
    changes: Vec<Vec<(u64, Announcement)>>,
    steps: u64,
    stabilized: bool,
}

impl Timeline {
    pub fn new(trace: &RunTrace) -> Self {
        let n = trace.n();
        let mut announces = vec![Vec::new(); n];
        let mut changes = vec![Vec::new(); n];
        for &v in &trace.forced_incorrect {
            changes[v].push((0, Announcement::Incorrect));
        }
        for e in &trace.events {
            announces[e.node].push(e.t);
            if e.changed() {
                changes[e.node].push((e.t, e.next));
            }
        }
        Timeline {
            announces,
            changes,
            steps: trace.steps(),
            stabilized: trace.stabilization_step.is_some(),
        }
    }

    pub fn n(&self) -> usize {
        self.announces.len()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn announce_steps(&self, v: usize) -> &[u64] {
        &self.announces[v]
    }

    pub fn changes(&self, v: usize) -> &[(u64, Announcement)] {
        &self.changes[v]
    }

    /// First step strictly after `t` at which `v` is scheduled.
    pub fn next_after(&self, v: usize, t: u64) -> Option<u64> {
        let a = &self.announces[v];
        a.get(a.partition_point(|&s| s <= t)).copied()
    }

    pub fn first(&self, v: usize) -> Option<u64> {
        self.announces[v].first().copied()
    }

    /// Last step at or before `t` at which `v` is scheduled.
    pub fn last_at_or_before(&self, v: usize, t: u64) -> Option<u64> {
        let a = &self.announces[v];
        a.partition_point(|&s| s <= t).checked_sub(1).map(|i| a[i])
    }

    /// Announcement of `v` after step `t`.
    pub fn value_at(&self, v: usize, t: u64) -> Announcement {
        let c = &self.changes[v];
        match c.partition_point(|&(s, _)| s <= t) {
            0 => Announcement::Unannounced,
            i => c[i - 1].1,
        }
    }

    /// Last change step, i.e. the step from which `v` is constant. `None`
    /// when the trace ends unstabilized (the future is unknown).
    pub fn finalized_at(&self, v: usize) -> Option<u64> {
        self.stabilized
            .then(|| self.changes[v].last().map_or(0, |&(s, _)| s))
    }

    /// Whether the trace determines announcements at step `t`.
    pub fn covers(&self, t: u64) -> bool {
        self.stabilized || t <= self.steps
    }
}
