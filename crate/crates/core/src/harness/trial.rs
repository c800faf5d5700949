use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Horizon, Measurement};
use crate::dynamics::{default_step_cap, Announcement, DynamicsState, Engine, Schedule, SignalAssignment};
use crate::graphgen::{diameter, gen_baseline, path, Baseline, Graph};
use crate::rng::trial_seed;
use crate::{Error, Result};

/// One trial. Integer and boolean fields only, so records round-trip
/// through CSV exactly and every aggregate can be recomputed from them.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub seed: u64,
    /// Star degree in a degree sweep.
    pub degree: Option<u64>,
    pub n: u64,
    pub diameter: Option<u64>,
    pub steps: u64,
    /// Hit the step budget before the measurement completed.
    pub truncated: bool,
    pub last_change: Option<u64>,
    pub correct: Option<u64>,
    pub incorrect: Option<u64>,
    pub unannounced: Option<u64>,
    pub measure_at: Option<u64>,
    pub correct_at_t: Option<u64>,
    pub distance: Option<u64>,
    pub critical_time: Option<u64>,
    pub safe: Option<bool>,
}

fn count(state: &[Announcement], a: Announcement) -> u64 {
    state.iter().filter(|&&x| x == a).count() as u64
}

/// Graph-level quantities shared by all trials on the same graph.
pub(crate) struct Prepared {
    pub graph: Arc<Graph>,
    pub diameter: usize,
    pub cap: u64,
    pub degree: Option<u64>,
}

impl Prepared {
    pub fn new(graph: Arc<Graph>, max_steps: Option<u64>, degree: Option<u64>) -> Result<Self> {
        let diameter = diameter(&graph)?;
        let cap = match max_steps {
            Some(c) => c,
            None => default_step_cap(&graph)?,
        };
        Ok(Prepared { graph, diameter, cap, degree })
    }
}

fn base_record(p: &Prepared, trial: u64, seed: u64) -> TrialRecord {
    TrialRecord {
        trial,
        seed,
        degree: p.degree,
        n: p.graph.node_count() as u64,
        diameter: Some(p.diameter as u64),
        ..TrialRecord::default()
    }
}

/// Runs to stabilization or the budget, snapshotting the number of correct
/// announcements right after step `measure_at`.
pub(crate) fn outcome_trial(
    p: &Prepared,
    delta: f64,
    trial: u64,
    seed: u64,
    measure_at: Option<u64>,
) -> Result<TrialRecord> {
    let g = &*p.graph;
    let n = g.node_count();
    let signals = SignalAssignment::sample(n, delta, seed)?;
    let schedule = Schedule::seeded(seed);
    let mut stream = schedule.stream(n);
    let mut engine = Engine::new(g, &signals, DynamicsState::new(n))?;
    let mut last_change = None;
    let mut correct_at_t = (measure_at == Some(0)).then_some(0);
    while !engine.is_stable() && engine.t() < p.cap {
        let v = stream.next().expect("seeded schedules are unbounded");
        let e = engine.step(v);
        if e.changed() {
            last_change = Some(e.t);
        }
        if Some(e.t) == measure_at {
            correct_at_t = Some(count(&engine.state().announcements, Announcement::Correct));
        }
    }
    let stabilized = engine.is_stable();
    let state = &engine.state().announcements;
    if stabilized && correct_at_t.is_none() && measure_at.is_some() {
        // the fixed point persists through any later step
        correct_at_t = Some(count(state, Announcement::Correct));
    }
    let mut r = base_record(p, trial, seed);
    r.steps = engine.t();
    r.truncated = !stabilized;
    r.last_change = last_change;
    r.correct = Some(count(state, Announcement::Correct));
    r.incorrect = Some(count(state, Announcement::Incorrect));
    r.unannounced = Some(count(state, Announcement::Unannounced));
    r.measure_at = measure_at;
    r.correct_at_t = correct_at_t;
    Ok(r)
}

/// Walks the schedule alone: the critical time only depends on when the
/// path nodes are scheduled.
pub(crate) fn critical_trial(p: &Prepared, vertices: &[usize], trial: u64, seed: u64) -> TrialRecord {
    let n = p.graph.node_count();
    let schedule = Schedule::seeded(seed);
    let mut stream = schedule.stream(n);
    let mut next = 0;
    let mut t = 0;
    while next < vertices.len() && t < p.cap {
        t += 1;
        if stream.next() == Some(vertices[next]) {
            next += 1;
        }
    }
    let mut r = base_record(p, trial, seed);
    r.steps = t;
    r.distance = Some(vertices.len() as u64 - 1);
    r.truncated = next < vertices.len();
    r.critical_time = (!r.truncated).then_some(t);
    r
}

/// `target` announces nothing but `Correct` thru `horizon` with `forced`
/// pinned to `Incorrect`. Stops early once the answer is settled.
pub(crate) fn safety_trial(
    p: &Prepared,
    delta: f64,
    target: usize,
    forced: &[usize],
    horizon: u64,
    trial: u64,
    seed: u64,
) -> Result<TrialRecord> {
    let g = &*p.graph;
    let n = g.node_count();
    let signals = SignalAssignment::sample(n, delta, seed)?;
    let schedule = Schedule::seeded(seed);
    let mut stream = schedule.stream(n);
    let state = DynamicsState::new(n).with_forced_incorrect(forced)?;
    let mut engine = Engine::new(g, &signals, state)?;
    let mut safe = true;
    while engine.t() < horizon && !engine.is_stable() {
        let e = engine.step(stream.next().expect("seeded schedules are unbounded"));
        if e.node == target && e.next == Announcement::Incorrect {
            safe = false;
            break;
        }
    }
    let mut r = base_record(p, trial, seed);
    r.steps = engine.t();
    r.safe = Some(safe);
    Ok(r)
}

/// Trial plan: the graph groups and how many trials each gets.
pub(crate) enum Plan {
    /// One graph shared by all trials.
    Fixed(Prepared),
    /// A fresh graph per trial.
    Random,
    /// One star per degree, `trials` trials each.
    Sweep(Vec<Prepared>),
}

pub(crate) fn plan(config: &ExperimentConfig, fixed: Option<Arc<Graph>>) -> Result<Plan> {
    if let Measurement::SafeProbability { degrees: Some(degrees), .. } = &config.measurement {
        if fixed.is_some() {
            return Err(Error::invalid("degree sweeps build their own stars"));
        }
        let groups = degrees
            .iter()
            .map(|&d| Prepared::new(Arc::new(gen_baseline(Baseline::Star, d + 1)?), config.max_steps, Some(d as u64)))
            .collect::<Result<_>>()?;
        return Ok(Plan::Sweep(groups));
    }
    match fixed {
        Some(g) => Ok(Plan::Fixed(Prepared::new(g, config.max_steps, None)?)),
        None if config.graph.is_random() => Ok(Plan::Random),
        None => Ok(Plan::Fixed(Prepared::new(Arc::new(config.graph.build(config.seed)?), config.max_steps, None)?)),
    }
}

impl Plan {
    pub fn total(&self, trials: usize) -> usize {
        match self {
            Plan::Sweep(groups) => groups.len() * trials,
            _ => trials,
        }
    }
}

/// Executes trial `index` of the plan.
pub(crate) fn run_trial(config: &ExperimentConfig, plan: &Plan, index: usize) -> Result<TrialRecord> {
    let seed = trial_seed(config.seed, index as u64);
    let owned;
    let p = match plan {
        Plan::Fixed(p) => p,
        Plan::Sweep(groups) => &groups[index / config.trials],
        Plan::Random => {
            owned = Prepared::new(Arc::new(config.graph.build(seed)?), config.max_steps, None)?;
            &owned
        }
    };
    let index = index as u64;
    match &config.measurement {
        Measurement::Outcome => {
            let t = config.measure_at.map(|m| m.resolve(p.graph.node_count())).transpose()?;
            outcome_trial(p, config.delta, index, seed, t)
        }
        Measurement::CriticalTime { source, target } => {
            let q = path(&p.graph, *source, *target)?;
            Ok(critical_trial(p, &q.vertices, index, seed))
        }
        Measurement::SafeProbability { target, forced_neighbors, horizon, .. } => {
            let v = target.resolve(&p.graph)?;
            let forced = forced_set(&p.graph, v, *forced_neighbors)?;
            let horizon_steps = resolve_horizon(*horizon, &p.graph, v);
            safety_trial(p, config.delta, v, &forced, horizon_steps, index, seed)
        }
    }
}

fn forced_set(g: &Graph, v: usize, k: usize) -> Result<Vec<usize>> {
    let nb = g.neighbors(v);
    if k > nb.len() {
        return Err(Error::invalid(format!("node {v} has {} neighbors, cannot force {k}", nb.len())));
    }
    Ok(nb[..k].to_vec())
}

fn resolve_horizon(h: Horizon, g: &Graph, v: usize) -> u64 {
    h.resolve(g.node_count(), g.degree(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run, StopCondition};
    use crate::trace_analysis::{critical_times, is_safe_thru};

    fn prepared(g: Graph) -> Prepared {
        Prepared::new(Arc::new(g), None, None).unwrap()
    }

    #[test]
    fn outcome_matches_recorded_run() {
        let p = prepared(gen_baseline(Baseline::Line, 30).unwrap());
        for seed in 0..20 {
            let r = outcome_trial(&p, 0.3, 0, seed, Some(40)).unwrap();
            let signals = SignalAssignment::sample(30, 0.3, seed).unwrap();
            let trace = run(&p.graph, &signals, &Schedule::seeded(seed), DynamicsState::new(30), StopCondition::stabilize(p.cap))
                .unwrap();
            assert_eq!(r.last_change, trace.stabilization_step);
            assert_eq!(r.steps, trace.steps());
            assert_eq!(r.correct, Some(count(&trace.final_state, Announcement::Correct)));
            assert_eq!(r.correct_at_t, Some(count(&trace.state_at(40), Announcement::Correct)));
        }
    }

    #[test]
    fn single_node_stabilizes_at_one() {
        let p = prepared(gen_baseline(Baseline::Line, 1).unwrap());
        for seed in 0..10 {
            let r = outcome_trial(&p, 0.2, 0, seed, None).unwrap();
            assert_eq!(r.last_change, Some(1));
            assert!(!r.truncated);
        }
    }

    #[test]
    fn critical_walk_matches_trace_analysis() {
        let g = gen_baseline(Baseline::Line, 8).unwrap();
        let p = prepared(g);
        let q = path(&p.graph, 1, 5).unwrap();
        for seed in 0..20 {
            let r = critical_trial(&p, &q.vertices, 0, seed);
            let signals = SignalAssignment::sample(8, 0.3, seed).unwrap();
            let trace = run(&p.graph, &signals, &Schedule::seeded(seed), DynamicsState::new(8), StopCondition::exactly(r.steps + 5))
                .unwrap();
            assert_eq!(r.critical_time, critical_times(&trace, 1).get(5));
        }
    }

    #[test]
    fn safety_matches_trace_analysis() {
        let p = prepared(gen_baseline(Baseline::Star, 6).unwrap());
        for seed in 0..30 {
            let r = safety_trial(&p, 0.3, 0, &[1], 60, 0, seed).unwrap();
            let signals = SignalAssignment::sample(6, 0.3, seed).unwrap();
            let state = DynamicsState::new(6).with_forced_incorrect(&[1]).unwrap();
            let trace = run(&p.graph, &signals, &Schedule::seeded(seed), state, StopCondition::exactly(60)).unwrap();
            assert_eq!(r.safe, Some(is_safe_thru(&trace, 0, 60).unwrap()), "seed {seed}");
        }
    }
}
