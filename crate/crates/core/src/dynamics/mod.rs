//! Asynchronous majority dynamics.
//!
//! At each step one node is scheduled and re-announces: the strict majority of
//! its announced neighbors, or its private signal on a tie. Unannounced
//! neighbors count for neither side. Two auxiliary variants are supported
//! through [`DynamicsState`]: a set of nodes pinned to `Incorrect` for all
//! time, and a single node that switches to `Correct` at its first
//! scheduling and never leaves it.

mod engine;
pub mod trace_io;

pub use engine::{correct_fraction, default_step_cap, majority_update, run, Engine, Fractions};

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graphgen::Graph;
use crate::rng::{stream, stream_rng};
use crate::{Error, Result};

/// Public announcement of a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
#[repr(u8)]
pub enum Announcement {
    Incorrect = 0,
    Correct = 1,
    #[default]
    Unannounced = 2,
}

impl Announcement {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Announcement::Correct
        } else {
            Announcement::Incorrect
        }
    }

    pub fn bit(self) -> Option<bool> {
        match self {
            Announcement::Incorrect => Some(false),
            Announcement::Correct => Some(true),
            Announcement::Unannounced => None,
        }
    }

    pub fn is_announced(self) -> bool {
        self != Announcement::Unannounced
    }

    /// Swaps `Correct` and `Incorrect`; `Unannounced` is fixed.
    pub fn complement(self) -> Self {
        match self {
            Announcement::Incorrect => Announcement::Correct,
            Announcement::Correct => Announcement::Incorrect,
            Announcement::Unannounced => Announcement::Unannounced,
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Announcement::Incorrect),
            1 => Some(Announcement::Correct),
            2 => Some(Announcement::Unannounced),
            _ => None,
        }
    }
}

// Serialized as 0, 1 or null.
impl Serialize for Announcement {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.bit() {
            Some(b) => s.serialize_u8(b as u8),
            None => s.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for Announcement {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match Option::<u8>::deserialize(d)? {
            None => Ok(Announcement::Unannounced),
            Some(0) => Ok(Announcement::Incorrect),
            Some(1) => Ok(Announcement::Correct),
            Some(other) => Err(serde::de::Error::custom(format!("announcement {other} not in {{0, 1, null}}"))),
        }
    }
}

/// Private signals, `true` meaning Correct.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalAssignment {
    bits: Vec<bool>,
    delta: f64,
    /// Seed the bits were sampled from, when sampled.
    seed: Option<u64>,
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 0.5 {
        Ok(())
    } else {
        Err(Error::invalid(format!("delta must lie in (0, 1/2), got {delta}")))
    }
}

impl SignalAssignment {
    /// Independent bits with `Pr[bit = 1] = 1/2 + delta`.
    pub fn sample(n: usize, delta: f64, seed: u64) -> Result<Self> {
        check_delta(delta)?;
        let mut rng = stream_rng(seed, stream::SIGNALS);
        let p = 0.5 + delta;
        let bits = (0..n).map(|_| rng.random::<f64>() < p).collect();
        Ok(SignalAssignment {
            bits,
            delta,
            seed: Some(seed),
        })
    }

    pub fn from_bits(bits: Vec<bool>, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        Ok(SignalAssignment {
            bits,
            delta,
            seed: None,
        })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn bit(&self, v: usize) -> bool {
        self.bits[v]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn with_flipped(&self, v: usize) -> Self {
        let mut out = self.clone();
        out.bits[v] = !out.bits[v];
        out.seed = None;
        out
    }

    pub fn complemented(&self) -> Self {
        SignalAssignment {
            bits: self.bits.iter().map(|b| !b).collect(),
            delta: self.delta,
            seed: None,
        }
    }

    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(s: &str, delta: f64) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::invalid(format!("signal character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bits(bits, delta)
    }
}

/// Which node announces at each step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum Schedule {
    /// Uniform over all nodes, drawn from the schedule stream of `seed`.
    Seeded { seed: u64 },
    /// A fixed list of nodes; the run cannot outlast it.
    Explicit { nodes: Vec<usize> },
}

impl Schedule {
    pub fn seeded(seed: u64) -> Self {
        Schedule::Seeded { seed }
    }

    pub fn explicit(nodes: Vec<usize>) -> Self {
        Schedule::Explicit { nodes }
    }

    pub fn stream(&self, n: usize) -> ScheduleStream<'_> {
        match self {
            Schedule::Seeded { seed } => ScheduleStream::Seeded {
                rng: stream_rng(*seed, stream::SCHEDULE),
                n,
            },
            Schedule::Explicit { nodes } => ScheduleStream::Explicit { nodes, pos: 0 },
        }
    }

    /// Steps available, `None` when unbounded.
    pub fn len_limit(&self) -> Option<u64> {
        match self {
            Schedule::Seeded { .. } => None,
            Schedule::Explicit { nodes } => Some(nodes.len() as u64),
        }
    }

    pub(crate) fn validate(&self, n: usize) -> Result<()> {
        if let Schedule::Explicit { nodes } = self {
            if let Some(bad) = nodes.iter().find(|&&v| v >= n) {
                return Err(Error::invalid(format!("scheduled node {bad} out of range")));
            }
        }
        Ok(())
    }
}

pub enum ScheduleStream<'a> {
    Seeded { rng: ChaCha8Rng, n: usize },
    Explicit { nodes: &'a [usize], pos: usize },
}

impl Iterator for ScheduleStream<'_> {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        match self {
            ScheduleStream::Seeded { rng, n } => Some(rng.random_range(0..*n)),
            ScheduleStream::Explicit { nodes, pos } => {
                let v = nodes.get(*pos).copied();
                *pos += 1;
                v
            }
        }
    }
}

/// Announcements plus the forcing overlays.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynamicsState {
    pub announcements: Vec<Announcement>,
    pub t: u64,
    /// Nodes pinned to `Incorrect` from step 0 on.
    pub forced_incorrect: Vec<usize>,
    /// Node that becomes `Correct` at its first scheduling and stays there.
    pub forced_correct: Option<usize>,
    pub announced_once: Vec<bool>,
}

impl DynamicsState {
    pub fn new(n: usize) -> Self {
        DynamicsState {
            announcements: vec![Announcement::Unannounced; n],
            t: 0,
            forced_incorrect: Vec::new(),
            forced_correct: None,
            announced_once: vec![false; n],
        }
    }

    /// Pins `nodes` to `Incorrect`, visible from step 0.
    pub fn with_forced_incorrect(mut self, nodes: &[usize]) -> Result<Self> {
        let n = self.announcements.len();
        for &v in nodes {
            if v >= n {
                return Err(Error::invalid(format!("forced node {v} out of range")));
            }
            if self.forced_correct == Some(v) {
                return Err(Error::invalid(format!("node {v} cannot be forced both ways")));
            }
            self.announcements[v] = Announcement::Incorrect;
            self.announced_once[v] = true;
        }
        let mut set = nodes.to_vec();
        set.sort_unstable();
        set.dedup();
        self.forced_incorrect = set;
        Ok(self)
    }

    pub fn with_forced_correct(mut self, x: usize) -> Result<Self> {
        if x >= self.announcements.len() {
            return Err(Error::invalid(format!("forced node {x} out of range")));
        }
        if self.forced_incorrect.binary_search(&x).is_ok() {
            return Err(Error::invalid(format!("node {x} cannot be forced both ways")));
        }
        self.forced_correct = Some(x);
        Ok(self)
    }

    pub fn is_forced_incorrect(&self, v: usize) -> bool {
        self.forced_incorrect.binary_search(&v).is_ok()
    }

    pub fn is_forced(&self, v: usize) -> bool {
        self.forced_correct == Some(v) || self.is_forced_incorrect(v)
    }
}

/// One scheduled step. Recorded even when nothing changes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    #[serde(rename = "step")]
    pub t: u64,
    pub node: usize,
    pub prev: Announcement,
    pub next: Announcement,
}

impl Event {
    pub fn changed(&self) -> bool {
        self.prev != self.next
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopCondition {
    pub max_steps: u64,
    /// Stop at the first fixed point instead of running to `max_steps`.
    pub halt_on_stable: bool,
}

impl StopCondition {
    pub fn stabilize(max_steps: u64) -> Self {
        StopCondition {
            max_steps,
            halt_on_stable: true,
        }
    }

    pub fn exactly(steps: u64) -> Self {
        StopCondition {
            max_steps: steps,
            halt_on_stable: false,
        }
    }

    /// Halting at stabilization with [`default_step_cap`].
    pub fn default_for(g: &Graph) -> Result<Self> {
        Ok(Self::stabilize(default_step_cap(g)?))
    }
}

/// Complete log of a run.
#[derive(Clone, Debug)]
pub struct RunTrace {
    pub graph: Arc<Graph>,
    pub signals: SignalAssignment,
    pub schedule: Schedule,
    pub stop: StopCondition,
    pub forced_incorrect: Vec<usize>,
    pub forced_correct: Option<usize>,
    /// One event per executed step, `events[i].t == i + 1`.
    pub events: Vec<Event>,
    pub final_state: Vec<Announcement>,
    /// Step after which the state is a fixed point (the last change).
    pub stabilization_step: Option<u64>,
    /// The run ended on its step budget before reaching a fixed point.
    pub truncated: bool,
}

impl RunTrace {
    pub fn steps(&self) -> u64 {
        self.events.len() as u64
    }

    pub fn n(&self) -> usize {
        self.graph.node_count()
    }

    /// Initial announcements (forced nodes already pinned).
    pub fn initial_state(&self) -> Vec<Announcement> {
        let mut state = vec![Announcement::Unannounced; self.n()];
        for &v in &self.forced_incorrect {
            state[v] = Announcement::Incorrect;
        }
        state
    }

    /// Announcements after step `t` (`t` past the end gives the final state).
    pub fn state_at(&self, t: u64) -> Vec<Announcement> {
        let mut state = self.initial_state();
        for e in self.events.iter().take_while(|e| e.t <= t) {
            state[e.node] = e.next;
        }
        state
    }

    /// Last step at which some announcement changed (⊥ resolutions included).
    pub fn last_change_step(&self) -> Option<u64> {
        self.events.iter().rev().find(|e| e.changed()).map(|e| e.t)
    }

    /// `true` when the trace determines every announcement at step `t`.
    pub fn covers(&self, t: u64) -> bool {
        t <= self.steps() || self.stabilization_step.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signals_are_biased_and_repeatable() {
        let s = SignalAssignment::sample(100_000, 0.3, 11).unwrap();
        let ones = s.bits().iter().filter(|&&b| b).count() as f64 / 100_000.0;
        // 5 standard errors
        assert!((ones - 0.8).abs() < 5.0 * (0.8f64 * 0.2 / 100_000.0).sqrt());
        assert_eq!(s, SignalAssignment::sample(100_000, 0.3, 11).unwrap());
        assert!(SignalAssignment::sample(3, 0.5, 1).is_err());
        assert!(SignalAssignment::sample(3, 0.0, 1).is_err());
    }

    #[test]
    fn seeded_schedule_is_uniform_and_repeatable() {
        let sched = Schedule::seeded(5);
        let a: Vec<usize> = sched.stream(4).take(40_000).collect();
        let b: Vec<usize> = sched.stream(4).take(40_000).collect();
        assert_eq!(a, b);
        for v in 0..4 {
            let c = a.iter().filter(|&&x| x == v).count() as f64;
            assert!((c - 10_000.0).abs() < 5.0 * (40_000.0f64 * 0.25 * 0.75).sqrt());
        }
    }

    #[test]
    fn announcement_json_encoding() {
        let e = Event {
            t: 3,
            node: 1,
            prev: Announcement::Unannounced,
            next: Announcement::Correct,
        };
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(s, r#"{"step":3,"node":1,"prev":null,"next":1}"#);
        assert_eq!(serde_json::from_str::<Event>(&s).unwrap(), e);
        assert!(serde_json::from_str::<Announcement>("2").is_err());
    }

    #[test]
    fn forced_state_construction() {
        let s = DynamicsState::new(4).with_forced_incorrect(&[2, 1]).unwrap();
        assert_eq!(s.forced_incorrect, vec![1, 2]);
        assert_eq!(s.announcements[1], Announcement::Incorrect);
        assert!(s.clone().with_forced_correct(1).is_err());
        assert!(s.with_forced_correct(3).unwrap().is_forced(3));
    }
}
