use serde::{Deserialize, Serialize};

use crate::dynamics::{Announcement, DynamicsState, Engine, SignalAssignment};
use crate::graphgen::Graph;
use crate::{Error, Result};

pub const MAX_BOOLEAN_NODES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BooleanVerdict {
    pub monotone: bool,
    pub odd: bool,
    /// Smallest `Pr[C^t(v) = 1]` over announced `(v, t)` under the biased
    /// product measure; `None` if nothing was ever announced.
    pub min_correct_probability: Option<f64>,
    pub bound: f64,
    /// First failing `(assignment bits, step, node)` if any check failed.
    pub witness: Option<(u32, u64, usize)>,
}

impl BooleanVerdict {
    pub fn passed(&self) -> bool {
        self.monotone && self.odd && self.min_correct_probability.is_none_or(|p| p >= self.bound - 1e-12)
    }
}

/// Runs the fixed `schedule` under every signal assignment and checks that
/// each announced `C^t(v)`, as a function of the signals, is monotone and
/// odd, and that it is `Correct` with probability at least `1/2 + delta`.
pub fn exhaustive_boolean_check(g: &Graph, schedule: &[usize], delta: f64) -> Result<BooleanVerdict> {
    let n = g.node_count();
    if n > MAX_BOOLEAN_NODES {
        return Err(Error::Capacity(format!(
            "exhaustive check handles at most {MAX_BOOLEAN_NODES} nodes, got {n}"
        )));
    }
    if let Some(&bad) = schedule.iter().find(|&&v| v >= n) {
        return Err(Error::invalid(format!("scheduled node {bad} out of range")));
    }
    let steps = schedule.len();
    let assignments = 1usize << n;
    let mut table: Vec<Vec<Announcement>> = Vec::with_capacity(assignments);
    for a in 0..assignments {
        let bits = (0..n).map(|v| (a >> v) & 1 == 1).collect();
        let signals = SignalAssignment::from_bits(bits, delta)?;
        let mut engine = Engine::new(g, &signals, DynamicsState::new(n))?;
        let mut row = Vec::with_capacity(steps * n);
        for &v in schedule {
            engine.step(v);
            row.extend_from_slice(&engine.state().announcements);
        }
        table.push(row);
    }
    Ok(verdict_from_table(&table, n, delta))
}

/// `table[a][t * n + v]` is the announcement of `v` after step `t + 1` under
/// assignment bits `a`.
fn verdict_from_table(table: &[Vec<Announcement>], n: usize, delta: f64) -> BooleanVerdict {
    let assignments = table.len();
    let cells = table[0].len();
    let full = assignments - 1;
    let mut verdict = BooleanVerdict {
        monotone: true,
        odd: true,
        min_correct_probability: None,
        bound: 0.5 + delta,
        witness: None,
    };
    let fail = |verdict: &mut BooleanVerdict, a: usize, i: usize| {
        if verdict.witness.is_none() {
            verdict.witness = Some((a as u32, (i / n) as u64 + 1, i % n));
        }
    };
    for a in 0..assignments {
        let row = &table[a];
        for (i, &c) in row.iter().enumerate() {
            if table[full ^ a][i] != c.complement() {
                verdict.odd = false;
                fail(&mut verdict, a, i);
            }
        }
        // supersets b of a: a | (submask of the complement)
        let free = full & !a;
        let mut sub = free;
        loop {
            let b = a | sub;
            if b != a {
                for (i, &c) in row.iter().enumerate() {
                    if c == Announcement::Correct && table[b][i] != Announcement::Correct {
                        verdict.monotone = false;
                        fail(&mut verdict, a, i);
                    }
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & free;
        }
    }
    let weight = |a: usize| {
        let ones = a.count_ones() as i32;
        (0.5 + delta).powi(ones) * (0.5 - delta).powi(n as i32 - ones)
    };
    for i in 0..cells {
        // announced-or-not depends only on the schedule
        if table[0][i] == Announcement::Unannounced {
            continue;
        }
        let p: f64 = (0..assignments)
            .filter(|&a| table[a][i] == Announcement::Correct)
            .map(weight)
            .sum();
        verdict.min_correct_probability = Some(verdict.min_correct_probability.map_or(p, |m: f64| m.min(p)));
    }
    verdict
}
