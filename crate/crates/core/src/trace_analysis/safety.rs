use std::collections::BTreeMap;
use std::sync::Arc;

use crate::dynamics::{run, Announcement, DynamicsState, RunTrace, Schedule, SignalAssignment, StopCondition};
use crate::graphgen::{path, Graph};
use crate::{Error, Result};

/// `v` announces nothing but `Correct` (or stays unannounced) through step `t`.
pub fn is_safe_thru(trace: &RunTrace, v: usize, t: u64) -> Result<bool> {
    if v >= trace.n() {
        return Err(Error::invalid(format!("node {v} out of range")));
    }
    if !trace.covers(t) {
        return Err(Error::IncompleteInput(format!(
            "trace ends at step {} without stabilizing; step {t} requested",
            trace.steps()
        )));
    }
    if trace.forced_incorrect.binary_search(&v).is_ok() {
        return Ok(false);
    }
    Ok(!trace
        .events
        .iter()
        .take_while(|e| e.t <= t)
        .any(|e| e.node == v && e.next == Announcement::Incorrect))
}

/// Against-`S_y` runs keyed by `y`, all sharing one signal assignment and
/// one schedule.
#[derive(Clone, Debug, Default)]
pub struct AgainstRuns {
    pub runs: BTreeMap<usize, RunTrace>,
}

/// Neighbors of `y` on the path `P(u, v)`.
fn path_neighbors(vertices: &[usize], y: usize) -> Vec<usize> {
    let i = vertices.iter().position(|&w| w == y).expect("y lies on the path");
    let mut s = Vec::with_capacity(2);
    if i > 0 {
        s.push(vertices[i - 1]);
    }
    if i + 1 < vertices.len() {
        s.push(vertices[i + 1]);
    }
    s.sort_unstable();
    s
}

/// Prefix `P(u, x)` of `P(u, v)`; `x` must lie on `P(u, v)`.
fn prefix_to(vertices: &[usize], x: usize) -> Result<&[usize]> {
    let i = vertices
        .iter()
        .position(|&w| w == x)
        .ok_or_else(|| Error::invalid(format!("node {x} is not on the path")))?;
    Ok(&vertices[..=i])
}

/// Runs, for every `y` on `P(u, x)`, the dynamics with `S_y` (the path
/// neighbors of `y` on `P(u, v)`) pinned to `Incorrect`, each for exactly
/// `steps` steps on the same signals and schedule.
pub fn against_runs(
    g: &Arc<Graph>,
    signals: &SignalAssignment,
    schedule: &Schedule,
    x: usize,
    u: usize,
    v: usize,
    steps: u64,
) -> Result<AgainstRuns> {
    let p = path(g, u, v)?;
    let mut runs = BTreeMap::new();
    for &y in prefix_to(&p.vertices, x)? {
        let s_y = path_neighbors(&p.vertices, y);
        let state = DynamicsState::new(g.node_count()).with_forced_incorrect(&s_y)?;
        runs.insert(y, run(g, signals, schedule, state, StopCondition::exactly(steps))?);
    }
    Ok(AgainstRuns { runs })
}

/// Some `y` on `P(u, x)` is safe thru `t` in its against-`S_y` run.
pub fn cuts(runs: &AgainstRuns, x: usize, u: usize, v: usize, t: u64) -> Result<bool> {
    let g = runs
        .runs
        .values()
        .next()
        .map(|r| Arc::clone(&r.graph))
        .ok_or_else(|| Error::IncompleteInput("no against-S runs supplied".into()))?;
    let p = path(&g, u, v)?;
    let mut any = false;
    for &y in prefix_to(&p.vertices, x)? {
        let r = runs
            .runs
            .get(&y)
            .ok_or_else(|| Error::IncompleteInput(format!("missing against-S run for node {y}")))?;
        if r.forced_incorrect != path_neighbors(&p.vertices, y) {
            return Err(Error::IncompleteInput(format!("run for node {y} pins the wrong set")));
        }
        any |= is_safe_thru(r, y, t)?;
    }
    Ok(any)
}
