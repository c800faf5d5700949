use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{Announcement, DynamicsState, Event, RunTrace, Schedule, SignalAssignment, StopCondition};
use crate::graphgen::{diameter, Graph};
use crate::{Error, Result};

/// The update rule for an unforced node. Pure.
pub fn majority_update(
    g: &Graph,
    state: &DynamicsState,
    signals: &SignalAssignment,
    v: usize,
) -> Announcement {
    let (mut n0, mut n1) = (0u32, 0u32);
    for &w in g.neighbors(v) {
        match state.announcements[w] {
            Announcement::Incorrect => n0 += 1,
            Announcement::Correct => n1 += 1,
            Announcement::Unannounced => {}
        }
    }
    resolve(n0, n1, signals.bit(v))
}

#[inline]
fn resolve(n0: u32, n1: u32, signal: bool) -> Announcement {
    match n1.cmp(&n0) {
        std::cmp::Ordering::Greater => Announcement::Correct,
        std::cmp::Ordering::Less => Announcement::Incorrect,
        std::cmp::Ordering::Equal => Announcement::from_bit(signal),
    }
}

/// `64 * max(2 ln n, D + 1) * n`.
pub fn default_step_cap(g: &Graph) -> Result<u64> {
    let n = g.node_count() as f64;
    let d = diameter(g)? as f64;
    Ok((64.0 * (2.0 * n.ln()).max(d + 1.0) * n).ceil() as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fractions {
    pub correct: f64,
    pub incorrect: f64,
    pub unannounced: f64,
}

pub fn correct_fraction(announcements: &[Announcement]) -> Fractions {
    let n = announcements.len().max(1) as f64;
    let count = |a: Announcement| announcements.iter().filter(|&&x| x == a).count() as f64 / n;
    Fractions {
        correct: count(Announcement::Correct),
        incorrect: count(Announcement::Incorrect),
        unannounced: count(Announcement::Unannounced),
    }
}

/// Incremental executor. Keeps per-node neighbor tallies and the number of
/// nodes that would change if scheduled, so each step costs O(1) plus
/// O(deg) per actual change, and stabilization is detected exactly.
pub struct Engine<'a> {
    g: &'a Graph,
    signals: &'a SignalAssignment,
    state: DynamicsState,
    n0: Vec<u32>,
    n1: Vec<u32>,
    unstable: Vec<bool>,
    unstable_count: usize,
    unannounced: usize,
}

impl<'a> Engine<'a> {
    pub fn new(g: &'a Graph, signals: &'a SignalAssignment, state: DynamicsState) -> Result<Self> {
        let n = g.node_count();
        if signals.len() != n || state.announcements.len() != n {
            return Err(Error::invalid(format!(
                "graph has {n} nodes but signals have {} and state has {}",
                signals.len(),
                state.announcements.len()
            )));
        }
        let mut engine = Engine {
            g,
            signals,
            n0: vec![0; n],
            n1: vec![0; n],
            unstable: vec![false; n],
            unstable_count: 0,
            unannounced: state.announced_once.iter().filter(|&&a| !a).count(),
            state,
        };
        for v in 0..n {
            match engine.state.announcements[v] {
                Announcement::Incorrect => g.neighbors(v).iter().for_each(|&w| engine.n0[w] += 1),
                Announcement::Correct => g.neighbors(v).iter().for_each(|&w| engine.n1[w] += 1),
                Announcement::Unannounced => {}
            }
        }
        for v in 0..n {
            engine.refresh(v);
        }
        Ok(engine)
    }

    /// What `v` would announce if scheduled now.
    #[inline]
    fn target(&self, v: usize) -> Announcement {
        if self.state.forced_correct == Some(v) {
            Announcement::Correct
        } else if self.state.is_forced_incorrect(v) {
            Announcement::Incorrect
        } else {
            resolve(self.n0[v], self.n1[v], self.signals.bit(v))
        }
    }

    fn refresh(&mut self, v: usize) {
        let now = self.state.announcements[v] != self.target(v);
        if now != self.unstable[v] {
            self.unstable[v] = now;
            if now {
                self.unstable_count += 1;
            } else {
                self.unstable_count -= 1;
            }
        }
    }

    /// Executes one step with `v` scheduled.
    pub fn step(&mut self, v: usize) -> Event {
        self.state.t += 1;
        let prev = self.state.announcements[v];
        let next = self.target(v);
        if !self.state.announced_once[v] {
            self.state.announced_once[v] = true;
            self.unannounced -= 1;
        }
        if next != prev {
            self.state.announcements[v] = next;
            for &w in self.g.neighbors(v) {
                match prev {
                    Announcement::Incorrect => self.n0[w] -= 1,
                    Announcement::Correct => self.n1[w] -= 1,
                    Announcement::Unannounced => {}
                }
                match next {
                    Announcement::Incorrect => self.n0[w] += 1,
                    Announcement::Correct => self.n1[w] += 1,
                    Announcement::Unannounced => {}
                }
                self.refresh(w);
            }
            self.refresh(v);
        }
        Event {
            t: self.state.t,
            node: v,
            prev,
            next,
        }
    }

    /// Every node has announced and none would change if scheduled.
    pub fn is_stable(&self) -> bool {
        self.unannounced == 0 && self.unstable_count == 0
    }

    pub fn state(&self) -> &DynamicsState {
        &self.state
    }

    pub fn t(&self) -> u64 {
        self.state.t
    }

    pub fn into_state(self) -> DynamicsState {
        self.state
    }
}

/// Executes the dynamics and records every step.
///
/// Returns [`Error::Truncated`] (with the partial trace) only when
/// `stop.halt_on_stable` is set and the budget or an explicit schedule runs
/// out first.
pub fn run(
    g: &Arc<Graph>,
    signals: &SignalAssignment,
    schedule: &Schedule,
    initial: DynamicsState,
    stop: StopCondition,
) -> Result<RunTrace> {
    let n = g.node_count();
    schedule.validate(n)?;
    if initial.t != 0 {
        return Err(Error::invalid("runs start from step 0"));
    }
    let forced_incorrect = initial.forced_incorrect.clone();
    let forced_correct = initial.forced_correct;
    let mut engine = Engine::new(g, signals, initial)?;
    let mut events = Vec::new();
    let mut stabilization_step = engine.is_stable().then_some(0);
    let mut order = schedule.stream(n);
    while engine.t() < stop.max_steps && !(stop.halt_on_stable && stabilization_step.is_some()) {
        let Some(v) = order.next() else { break };
        events.push(engine.step(v));
        if stabilization_step.is_none() && engine.is_stable() {
            stabilization_step = Some(engine.t());
        }
    }
    let trace = RunTrace {
        graph: Arc::clone(g),
        signals: signals.clone(),
        schedule: schedule.clone(),
        stop,
        forced_incorrect,
        forced_correct,
        events,
        final_state: engine.into_state().announcements,
        truncated: stabilization_step.is_none(),
        stabilization_step,
    };
    if stop.halt_on_stable && trace.truncated {
        return Err(Error::Truncated(Box::new(trace)));
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgen::{gen_baseline, gen_preferential_attachment, Baseline};
    use Announcement::{Correct as C, Incorrect as I, Unannounced as U};

    fn state_of(a: &[Announcement]) -> DynamicsState {
        let mut s = DynamicsState::new(a.len());
        s.announcements = a.to_vec();
        s
    }

    #[test]
    fn update_rule_examples() {
        let star = gen_baseline(Baseline::Star, 4).unwrap();
        let x0 = SignalAssignment::from_bits(vec![false; 4], 0.2).unwrap();
        let x1 = SignalAssignment::from_bits(vec![true; 4], 0.2).unwrap();
        assert_eq!(majority_update(&star, &state_of(&[U, C, C, I]), &x0, 0), C);
        assert_eq!(majority_update(&star, &state_of(&[U, U, U, U]), &x1, 0), C);
        assert_eq!(majority_update(&star, &state_of(&[U, C, I, U]), &x0, 0), I);
    }

    #[test]
    fn line_example_stabilizes_at_step_three() {
        let g = Arc::new(gen_baseline(Baseline::Line, 3).unwrap());
        let x = SignalAssignment::from_bits(vec![true, false, true], 0.1).unwrap();
        let sched = Schedule::explicit(vec![0, 2, 1, 0, 1, 2]);
        let trace = run(&g, &x, &sched, DynamicsState::new(3), StopCondition::exactly(6)).unwrap();
        assert_eq!(trace.events[2].next, C);
        assert_eq!(trace.final_state, vec![C, C, C]);
        assert_eq!(trace.stabilization_step, Some(3));
        assert_eq!(trace.steps(), 6);
        assert!(!trace.truncated);

        let halted = run(&g, &x, &sched, DynamicsState::new(3), StopCondition::stabilize(100)).unwrap();
        assert_eq!(halted.steps(), 3);
        assert_eq!(halted.stabilization_step, Some(3));
    }

    #[test]
    fn single_node() {
        let g = Arc::new(Graph::from_edges(1, &[]).unwrap());
        for bit in [false, true] {
            let x = SignalAssignment::from_bits(vec![bit], 0.3).unwrap();
            let trace = run(&g, &x, &Schedule::seeded(1), DynamicsState::new(1), StopCondition::stabilize(10)).unwrap();
            assert_eq!(trace.stabilization_step, Some(1));
            assert_eq!(trace.final_state, vec![Announcement::from_bit(bit)]);
        }
    }

    #[test]
    fn complete_graph_copies_first_announcer() {
        let g = Arc::new(gen_baseline(Baseline::Complete, 12).unwrap());
        for seed in 0..30 {
            let x = SignalAssignment::sample(12, 0.1, seed).unwrap();
            let sched = Schedule::seeded(seed);
            let stop = StopCondition::default_for(&g).unwrap();
            let trace = run(&g, &x, &sched, DynamicsState::new(12), stop).unwrap();
            let first = Announcement::from_bit(x.bit(trace.events[0].node));
            assert!(trace.final_state.iter().all(|&a| a == first));
        }
    }

    #[test]
    fn forced_nodes() {
        let g = Arc::new(gen_baseline(Baseline::Line, 3).unwrap());
        let x = SignalAssignment::from_bits(vec![true, true, false], 0.1).unwrap();
        let s = DynamicsState::new(3).with_forced_incorrect(&[1]).unwrap();
        let trace = run(&g, &x, &Schedule::explicit(vec![1, 0, 2]), s, StopCondition::exactly(3)).unwrap();
        assert_eq!(trace.events[0].prev, I);
        assert_eq!(trace.events[0].next, I);
        assert_eq!(trace.final_state, vec![I, I, I]);

        let s = DynamicsState::new(3).with_forced_correct(2).unwrap();
        let trace = run(&g, &x, &Schedule::explicit(vec![2, 1, 2]), s, StopCondition::exactly(3)).unwrap();
        assert_eq!(trace.events[0].next, C);
        assert_eq!(trace.final_state[2], C);
    }

    #[test]
    fn truncation_is_reported_with_the_trace() {
        let g = Arc::new(gen_baseline(Baseline::Line, 5).unwrap());
        let x = SignalAssignment::sample(5, 0.1, 2).unwrap();
        match run(&g, &x, &Schedule::seeded(2), DynamicsState::new(5), StopCondition::stabilize(2)) {
            Err(Error::Truncated(trace)) => {
                assert_eq!(trace.steps(), 2);
                assert!(trace.truncated);
            }
            other => panic!("expected truncation, got {other:?}"),
        }
    }

    #[test]
    fn stabilized_states_are_fixed_points() {
        let g = Arc::new(gen_preferential_attachment(300, 4).unwrap());
        for seed in 0..10 {
            let x = SignalAssignment::sample(g.node_count(), 0.2, seed).unwrap();
            let stop = StopCondition::default_for(&g).unwrap();
            let trace = run(&g, &x, &Schedule::seeded(seed), DynamicsState::new(g.node_count()), stop).unwrap();
            assert_eq!(trace.stabilization_step, trace.last_change_step());
            let state = state_of(&trace.final_state);
            for v in 0..g.node_count() {
                assert_eq!(majority_update(&g, &state, &x, v), trace.final_state[v]);
            }
        }
    }

    #[test]
    fn fractions() {
        assert_eq!(correct_fraction(&[U, U]).correct, 0.0);
        assert_eq!(correct_fraction(&[C, C]).correct, 1.0);
        let f = correct_fraction(&[C, C, I]);
        assert!((f.correct - 2.0 / 3.0).abs() < 1e-15);
    }
}
