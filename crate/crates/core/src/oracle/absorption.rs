use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graphgen::io::graph_hash;
use crate::graphgen::Graph;
use crate::{Error, Result};

pub const MAX_EXACT_NODES: usize = 8;
pub const ABSORPTION_TOLERANCE: f64 = 1e-12;
const MAX_SWEEPS: usize = 1_000_000;

/// Digit of an unannounced node in a base-3 profile code.
const BOT: u32 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentAbsorption {
    /// Signal bits as a `0`/`1` string indexed by node.
    pub signals: String,
    pub weight: f64,
    /// Absorbing profile (a `0`/`1` string) to probability.
    pub outcomes: BTreeMap<String, f64>,
    pub expected_steps: f64,
    /// Probability mass not yet absorbed when iteration stopped.
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionResult {
    pub graph_hash: String,
    pub n: usize,
    pub delta: f64,
    pub assignments: Vec<AssignmentAbsorption>,
    pub pr_correct_majority: f64,
    pub pr_consensus: f64,
    pub pr_correct_consensus: f64,
    pub expected_stabilization_step: f64,
    pub residual: f64,
}

struct Solved {
    absorbed: Vec<(u32, f64)>,
    expected_steps: f64,
    residual: f64,
}

/// Absorption of a chain that, from each state, moves to `successor(s, i)`
/// for `i` uniform in `0..fanout`.
///
/// Self-loops are stripped: the embedded jump chain is propagated until the
/// live mass drops below tolerance, and each visit to a state with `m` real
/// moves contributes an expected holding time of `fanout / m` steps.
fn solve_jump_chain(
    start: u32,
    fanout: usize,
    successor: impl Fn(u32, usize) -> u32,
    terminal_ok: impl Fn(u32) -> bool,
) -> Result<Solved> {
    let mut index: HashMap<u32, usize> = HashMap::new();
    let mut codes = vec![start];
    let mut moves: Vec<Vec<usize>> = Vec::new();
    index.insert(start, 0);
    let mut i = 0;
    while i < codes.len() {
        let s = codes[i];
        let mut out = Vec::new();
        for k in 0..fanout {
            let t = successor(s, k);
            if t != s {
                let j = *index.entry(t).or_insert_with(|| {
                    codes.push(t);
                    codes.len() - 1
                });
                out.push(j);
            }
        }
        if out.is_empty() && !terminal_ok(s) {
            return Err(Error::Structural(format!("stuck in non-terminal state {s}")));
        }
        moves.push(out);
        i += 1;
    }
    let states = codes.len();
    // every reachable state must be able to reach an absorbing one
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); states];
    for (s, out) in moves.iter().enumerate() {
        for &t in out {
            reverse[t].push(s);
        }
    }
    let mut reaches = vec![false; states];
    let mut queue: VecDeque<usize> = (0..states).filter(|&s| moves[s].is_empty()).collect();
    for &s in &queue {
        reaches[s] = true;
    }
    while let Some(t) = queue.pop_front() {
        for &s in &reverse[t] {
            if !reaches[s] {
                reaches[s] = true;
                queue.push_back(s);
            }
        }
    }
    if let Some(s) = reaches.iter().position(|&r| !r) {
        return Err(Error::Structural(format!(
            "state {} lies in a recurrent class without a fixed point",
            codes[s]
        )));
    }

    let mut mass = vec![0.0; states];
    let mut next = vec![0.0; states];
    let mut absorbed = vec![0.0; states];
    mass[0] = 1.0;
    let mut expected_steps = 0.0;
    let mut residual = 1.0;
    let mut sweeps = 0;
    while residual > ABSORPTION_TOLERANCE {
        sweeps += 1;
        if sweeps > MAX_SWEEPS {
            return Err(Error::Structural("absorption iteration did not converge".into()));
        }
        next.iter_mut().for_each(|x| *x = 0.0);
        for s in 0..states {
            let m = mass[s];
            if m == 0.0 {
                continue;
            }
            let out = &moves[s];
            if out.is_empty() {
                absorbed[s] += m;
                continue;
            }
            expected_steps += m * fanout as f64 / out.len() as f64;
            let share = m / out.len() as f64;
            for &t in out {
                next[t] += share;
            }
        }
        std::mem::swap(&mut mass, &mut next);
        // mass now on absorbing states is moved into `absorbed` next sweep
        residual = (0..states).filter(|&s| !moves[s].is_empty()).map(|s| mass[s]).sum();
    }
    for s in 0..states {
        if moves[s].is_empty() {
            absorbed[s] += mass[s];
        }
    }
    Ok(Solved {
        absorbed: (0..states)
            .filter(|&s| absorbed[s] > 0.0)
            .map(|s| (codes[s], absorbed[s]))
            .collect(),
        expected_steps,
        residual,
    })
}

/// Exact absorption analysis of the dynamics on a graph with at most
/// [`MAX_EXACT_NODES`] nodes, over all signal assignments.
///
/// The update is signal-independent except at ties, so a single table holds
/// both tie resolutions for every (profile, node) pair and each assignment
/// just selects a column.
pub fn exact_absorption(g: &Graph, delta: f64) -> Result<AbsorptionResult> {
    let n = g.node_count();
    if n > MAX_EXACT_NODES {
        return Err(Error::Capacity(format!(
            "exact absorption handles at most {MAX_EXACT_NODES} nodes, got {n}"
        )));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::invalid(format!("delta must lie in (0, 1/2), got {delta}")));
    }
    let pow3: Vec<u32> = (0..=n as u32).map(|k| 3u32.pow(k)).collect();
    let total = pow3[n] as usize;
    let digit = |s: u32, v: usize| (s / pow3[v]) % 3;
    let mut table = vec![[0u32; 2]; total * n];
    for s in 0..total as u32 {
        for v in 0..n {
            let (mut n0, mut n1) = (0, 0);
            for &w in g.neighbors(v) {
                match digit(s, w) {
                    0 => n0 += 1,
                    1 => n1 += 1,
                    _ => {}
                }
            }
            let base = s - digit(s, v) * pow3[v];
            table[s as usize * n + v] = match n1.cmp(&n0) {
                std::cmp::Ordering::Greater => [base + pow3[v]; 2],
                std::cmp::Ordering::Less => [base; 2],
                std::cmp::Ordering::Equal => [base, base + pow3[v]],
            };
        }
    }
    let start: u32 = (0..n).map(|v| BOT * pow3[v]).sum();
    let announced = |s: u32| (0..n).all(|v| digit(s, v) != BOT);
    let profile = |s: u32| -> String { (0..n).map(|v| if digit(s, v) == 1 { '1' } else { '0' }).collect() };

    let assignments: Vec<AssignmentAbsorption> = (0u32..1 << n)
        .into_par_iter()
        .map(|bits| {
            let bit = |v: usize| ((bits >> v) & 1) as usize;
            let solved = solve_jump_chain(start, n, |s, v| table[s as usize * n + v][bit(v)], announced)?;
            let ones = bits.count_ones() as i32;
            let weight = (0.5 + delta).powi(ones) * (0.5 - delta).powi(n as i32 - ones);
            Ok(AssignmentAbsorption {
                signals: (0..n).map(|v| if bit(v) == 1 { '1' } else { '0' }).collect(),
                weight,
                outcomes: solved.absorbed.iter().map(|&(s, p)| (profile(s), p)).collect(),
                expected_steps: solved.expected_steps,
                residual: solved.residual,
            })
        })
        .collect::<Result<_>>()?;

    let mut result = AbsorptionResult {
        graph_hash: graph_hash(g),
        n,
        delta,
        pr_correct_majority: 0.0,
        pr_consensus: 0.0,
        pr_correct_consensus: 0.0,
        expected_stabilization_step: 0.0,
        residual: 0.0,
        assignments,
    };
    for a in &result.assignments {
        for (p, &prob) in &a.outcomes {
            let ones = p.bytes().filter(|&b| b == b'1').count();
            if 2 * ones > n {
                result.pr_correct_majority += a.weight * prob;
            }
            if ones == n || ones == 0 {
                result.pr_consensus += a.weight * prob;
            }
            if ones == n {
                result.pr_correct_consensus += a.weight * prob;
            }
        }
        result.expected_stabilization_step += a.weight * a.expected_steps;
        result.residual = result.residual.max(a.residual);
    }
    Ok(result)
}

/// [`exact_absorption`] with a JSON cache in `dir`, keyed by graph hash and
/// the exact bits of `delta`.
pub fn exact_absorption_cached(g: &Graph, delta: f64, dir: &Path) -> Result<AbsorptionResult> {
    let hash = graph_hash(g);
    let file = dir.join(format!("absorption-{hash}-{:016x}.json", delta.to_bits()));
    if let Ok(text) = fs::read_to_string(&file) {
        if let Ok(cached) = serde_json::from_str::<AbsorptionResult>(&text) {
            if cached.graph_hash == hash && cached.delta.to_bits() == delta.to_bits() {
                return Ok(cached);
            }
        }
    }
    let result = exact_absorption(g, delta)?;
    fs::create_dir_all(dir)?;
    let tmp = file.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(&result)?)?;
    fs::rename(&tmp, &file)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgen::{all_trees, gen_baseline, Baseline};

    // Frozen from an independent exact-rational solver at delta = 3/10.
    const LINE3_CORRECT_MAJORITY: f64 = 104.0 / 125.0;
    const STAR4_CORRECT_MAJORITY: f64 = 106.0 / 125.0;
    const LINE4_CORRECT_MAJORITY: f64 = 1528.0 / 1875.0;
    const LINE4_CONSENSUS: f64 = 1751.0 / 1875.0;

    #[test]
    fn single_node() {
        let g = Graph::from_edges(1, &[]).unwrap();
        let r = exact_absorption(&g, 0.2).unwrap();
        assert!((r.pr_correct_majority - 0.7).abs() < 1e-12);
        assert!((r.expected_stabilization_step - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frozen_values() {
        let line3 = exact_absorption(&gen_baseline(Baseline::Line, 3).unwrap(), 0.3).unwrap();
        assert!((line3.pr_correct_majority - LINE3_CORRECT_MAJORITY).abs() < 1e-9);
        assert!((line3.pr_consensus - 1.0).abs() < 1e-9);

        let k4 = exact_absorption(&gen_baseline(Baseline::Complete, 4).unwrap(), 0.3).unwrap();
        assert!((k4.pr_correct_consensus - 0.8).abs() < 1e-9);
        assert!((k4.pr_correct_majority - 0.8).abs() < 1e-9);

        let star4 = exact_absorption(&gen_baseline(Baseline::Star, 4).unwrap(), 0.3).unwrap();
        assert!((star4.pr_correct_majority - STAR4_CORRECT_MAJORITY).abs() < 1e-9);

        let line4 = exact_absorption(&gen_baseline(Baseline::Line, 4).unwrap(), 0.3).unwrap();
        assert!((line4.pr_correct_majority - LINE4_CORRECT_MAJORITY).abs() < 1e-9);
        assert!((line4.pr_consensus - LINE4_CONSENSUS).abs() < 1e-9);
        assert!((line4.pr_correct_consensus - LINE4_CORRECT_MAJORITY).abs() < 1e-9);
    }

    #[test]
    fn complete_graphs_copy_the_first_signal() {
        for n in 2..=6 {
            for delta in [0.05, 0.3] {
                let r = exact_absorption(&gen_baseline(Baseline::Complete, n).unwrap(), delta).unwrap();
                assert!((r.pr_correct_consensus - (0.5 + delta)).abs() < 1e-9, "n={n}");
                assert!((r.pr_consensus - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn outcome_mass_sums_to_one() {
        for g in all_trees(6).unwrap() {
            let r = exact_absorption(&g, 0.1).unwrap();
            for a in &r.assignments {
                let s: f64 = a.outcomes.values().sum();
                assert!((s - 1.0).abs() < 1e-9);
                assert!(a.residual <= ABSORPTION_TOLERANCE);
            }
            let w: f64 = r.assignments.iter().map(|a| a.weight).sum();
            assert!((w - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn capacity_limit() {
        let g = gen_baseline(Baseline::Line, 9).unwrap();
        assert!(matches!(exact_absorption(&g, 0.2), Err(Error::Capacity(_))));
    }

    #[test]
    fn recurrent_cycle_is_structural() {
        // 0 -> 1 -> 2 -> 0 with no way out
        let err = solve_jump_chain(0, 1, |s, _| (s + 1) % 3, |_| true);
        assert!(matches!(err, Err(Error::Structural(_))));
        let ok = solve_jump_chain(0, 2, |s, k| if s < 3 && k == 0 { s + 1 } else { s }, |_| true).unwrap();
        assert_eq!(ok.absorbed, vec![(3, 1.0)]);
        assert!((ok.expected_steps - 6.0).abs() < 1e-12);
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = gen_baseline(Baseline::Star, 4).unwrap();
        let a = exact_absorption_cached(&g, 0.3, dir.path()).unwrap();
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        let b = exact_absorption_cached(&g, 0.3, dir.path()).unwrap();
        assert_eq!(a, b);
    }
}
