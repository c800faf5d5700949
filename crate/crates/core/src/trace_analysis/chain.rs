use serde::{Deserialize, Serialize};

use crate::dynamics::{Announcement, RunTrace};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainViolation {
    /// Event step numbers are not `1, 2, 3, ...`.
    StepGap,
    /// `prev` disagrees with the replayed state.
    StateMismatch,
    /// `next` is not what the update rule produces.
    RuleMismatch,
    /// A 0/1 switch with no neighbor chain leading back to a first announcement.
    Unexplained,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ChainVerdict {
    Ok {
        /// Number of 0/1 switches that were traced back to a source.
        switches: u64,
    },
    Violation {
        kind: ChainViolation,
        step: u64,
        node: usize,
    },
}

impl ChainVerdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, ChainVerdict::Ok { .. })
    }
}

/// How the most recent change of a node came about.
#[derive(Clone, Copy, Debug)]
struct Switch {
    t: u64,
    /// First announcement (or a pinned node): the chain starts here.
    source: bool,
    /// Up to two distinct neighbors whose own switch caused this one.
    preds: [Option<usize>; 2],
}

impl Switch {
    fn usable_by(&self, v: usize) -> bool {
        self.source || self.preds.iter().flatten().any(|&p| p != v)
    }
}

/// Replays the trace and traces every 0/1 switch back along a chain of
/// switches to a node's first announcement.
///
/// A switch of `v` at `t` (previous announcement at `t'`) is explained by a
/// neighbor `x` that announced the new value `B` at `t`, was not `B` at `t'`,
/// and whose latest switch (inside `(t', t)`) is itself explained through a
/// predecessor other than `v`. On a tree this makes `t = T(u, v)` for the
/// chain's source `u`, with every node on the path having switched at its own
/// critical time. The replay also checks every event against the update rule.
pub fn verify_critical_chain(trace: &RunTrace) -> Result<ChainVerdict> {
    let g = &trace.graph;
    if !g.is_tree() {
        return Err(Error::Unsupported("chain verification requires a tree".into()));
    }
    let n = g.node_count();
    let mut state = trace.initial_state();
    let mut history: Vec<Vec<(u64, Announcement)>> = vec![Vec::new(); n];
    let mut latest: Vec<Option<Switch>> = vec![None; n];
    let mut last_announce: Vec<Option<u64>> = vec![None; n];
    for &v in &trace.forced_incorrect {
        history[v].push((0, Announcement::Incorrect));
        latest[v] = Some(Switch { t: 0, source: true, preds: [None, None] });
    }
    let value_at = |history: &[Vec<(u64, Announcement)>], x: usize, t: u64| {
        let h = &history[x];
        match h.partition_point(|&(s, _)| s <= t) {
            0 => Announcement::Unannounced,
            i => h[i - 1].1,
        }
    };
    let mut switches = 0u64;
    for (i, e) in trace.events.iter().enumerate() {
        let (t, v) = (e.t, e.node);
        let violation = |kind| Ok(ChainVerdict::Violation { kind, step: t, node: v });
        if t != i as u64 + 1 || v >= n {
            return violation(ChainViolation::StepGap);
        }
        if e.prev != state[v] {
            return violation(ChainViolation::StateMismatch);
        }
        let expected = if trace.forced_correct == Some(v) {
            Announcement::Correct
        } else if trace.forced_incorrect.binary_search(&v).is_ok() {
            Announcement::Incorrect
        } else {
            let (mut n0, mut n1) = (0, 0);
            for &w in g.neighbors(v) {
                match state[w] {
                    Announcement::Incorrect => n0 += 1,
                    Announcement::Correct => n1 += 1,
                    Announcement::Unannounced => {}
                }
            }
            match n1.cmp(&n0) {
                std::cmp::Ordering::Greater => Announcement::Correct,
                std::cmp::Ordering::Less => Announcement::Incorrect,
                std::cmp::Ordering::Equal => Announcement::from_bit(trace.signals.bit(v)),
            }
        };
        if e.next != expected {
            return violation(ChainViolation::RuleMismatch);
        }
        let previous = last_announce[v].replace(t);
        if !e.changed() {
            continue;
        }
        let switch = if e.prev == Announcement::Unannounced {
            Switch { t, source: true, preds: [None, None] }
        } else {
            let b = e.next;
            let t_prev = previous.expect("a node that has a value has announced");
            let mut preds = [None, None];
            let mut found = 0;
            for &x in g.neighbors(v) {
                if found == 2 {
                    break;
                }
                let Some(sx) = latest[x] else { continue };
                if state[x] == b && sx.t > t_prev && value_at(&history, x, t_prev) != b && sx.usable_by(v) {
                    preds[found] = Some(x);
                    found += 1;
                }
            }
            if found == 0 {
                return violation(ChainViolation::Unexplained);
            }
            switches += 1;
            Switch { t, source: false, preds }
        };
        latest[v] = Some(switch);
        history[v].push((t, e.next));
        state[v] = e.next;
    }
    Ok(ChainVerdict::Ok { switches })
}
