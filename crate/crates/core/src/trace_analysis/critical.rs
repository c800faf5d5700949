use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::Timeline;
use crate::dynamics::RunTrace;
use crate::graphgen::Graph;
use crate::Result;

/// Critical times `T(u, v)` from one source to every node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticalTable {
    pub source: usize,
    /// `None` when the trace ends before the chain reaches the node.
    pub times: Vec<Option<u64>>,
}

impl CriticalTable {
    pub fn get(&self, v: usize) -> Option<u64> {
        self.times[v]
    }

    /// Rows `source,target,step`; unreached targets are omitted.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["source", "target", "step"])?;
        for (v, t) in self.times.iter().enumerate() {
            if let Some(t) = t {
                w.write_record([self.source.to_string(), v.to_string(), t.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `T(u, u)` is the first scheduling of `u`; along an edge `x -> v` the time
/// advances to the next scheduling of `v` strictly after `T(u, x)`.
///
/// On a tree only the path predecessor can supply the minimum, so the
/// earliest-arrival search below reproduces the recursive definition; on
/// other graphs it is the natural extension (minimum over routes).
pub fn critical_times(trace: &RunTrace, u: usize) -> CriticalTable {
    critical_times_in(&trace.graph, &Timeline::new(trace), u)
}

pub fn critical_times_in(g: &Graph, tl: &Timeline, u: usize) -> CriticalTable {
    let mut times = vec![None; g.node_count()];
    let mut heap = BinaryHeap::new();
    if let Some(t) = tl.first(u) {
        times[u] = Some(t);
        heap.push(Reverse((t, u)));
    }
    while let Some(Reverse((t, x))) = heap.pop() {
        if times[x] != Some(t) {
            continue;
        }
        for &v in g.neighbors(x) {
            if let Some(s) = tl.next_after(v, t) {
                if times[v].is_none_or(|old| s < old) {
                    times[v] = Some(s);
                    heap.push(Reverse((s, v)));
                }
            }
        }
    }
    CriticalTable { source: u, times }
}

/// `{u : T(u, v) <= t}`, ascending.
///
/// Works backwards from `v`: `deadline[x]` is the latest `T(u, x)` that still
/// reaches `v` by `t`. Crossing an edge `x -> y` needs `y` scheduled in
/// `(T(u, x), deadline[y]]`, so `deadline[x]` is one less than the last
/// scheduling of `y` at or before `deadline[y]`.
pub fn influence_set(trace: &RunTrace, v: usize, t: u64) -> Vec<usize> {
    influence_set_in(&trace.graph, &Timeline::new(trace), v, t)
}

pub fn influence_set_in(g: &Graph, tl: &Timeline, v: usize, t: u64) -> Vec<usize> {
    let n = g.node_count();
    let mut deadline: Vec<Option<u64>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    deadline[v] = Some(t);
    heap.push((t, v));
    while let Some((d, y)) = heap.pop() {
        if deadline[y] != Some(d) {
            continue;
        }
        let Some(last) = tl.last_at_or_before(y, d) else { continue };
        let Some(dx) = last.checked_sub(1) else { continue };
        for &x in g.neighbors(y) {
            if deadline[x].is_none_or(|old| dx > old) {
                deadline[x] = Some(dx);
                heap.push((dx, x));
            }
        }
    }
    (0..n)
        .filter(|&u| match (tl.first(u), deadline[u]) {
            (Some(f), Some(d)) => f <= d,
            _ => false,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run, DynamicsState, Schedule, SignalAssignment, StopCondition};
    use crate::graphgen::{gen_baseline, gen_preferential_attachment, path, Baseline};
    use std::sync::Arc;

    fn explicit_trace(g: Graph, schedule: Vec<usize>) -> RunTrace {
        let n = g.node_count();
        let x = SignalAssignment::from_bits(vec![true; n], 0.1).unwrap();
        let steps = schedule.len() as u64;
        run(
            &Arc::new(g),
            &x,
            &Schedule::explicit(schedule),
            DynamicsState::new(n),
            StopCondition::exactly(steps),
        )
        .unwrap()
    }

    #[test]
    fn path_example() {
        // u=0, x=1, v=2; schedule [v, u, v, x, v, x, v]
        let trace = explicit_trace(gen_baseline(Baseline::Line, 3).unwrap(), vec![2, 0, 2, 1, 2, 1, 2]);
        let table = critical_times(&trace, 0);
        assert_eq!(table.times, vec![Some(2), Some(4), Some(5)]);
    }

    /// The recursive tree definition evaluated literally along each path.
    fn recursive_definition(trace: &RunTrace, u: usize, v: usize) -> Option<u64> {
        let tl = Timeline::new(trace);
        let p = path(&trace.graph, u, v).unwrap();
        let mut t = tl.first(u)?;
        for &w in &p.vertices[1..] {
            t = tl.next_after(w, t)?;
        }
        Some(t)
    }

    #[test]
    fn search_matches_recursion_on_trees() {
        let g = Arc::new(gen_preferential_attachment(30, 2).unwrap());
        let n = g.node_count();
        let x = SignalAssignment::sample(n, 0.2, 1).unwrap();
        let trace = run(&g, &x, &Schedule::seeded(3), DynamicsState::new(n), StopCondition::exactly(400)).unwrap();
        for u in 0..n {
            let table = critical_times(&trace, u);
            for v in 0..n {
                assert_eq!(table.get(v), recursive_definition(&trace, u, v), "u={u} v={v}");
            }
        }
    }

    #[test]
    fn influence_matches_tables() {
        for (g, seed) in [
            (gen_preferential_attachment(25, 5).unwrap(), 5),
            (gen_baseline(Baseline::Complete, 6).unwrap(), 6),
            (gen_baseline(Baseline::Line, 9).unwrap(), 7),
        ] {
            let g = Arc::new(g);
            let n = g.node_count();
            let x = SignalAssignment::sample(n, 0.2, seed).unwrap();
            let trace = run(&g, &x, &Schedule::seeded(seed), DynamicsState::new(n), StopCondition::exactly(300)).unwrap();
            let tables: Vec<CriticalTable> = (0..n).map(|u| critical_times(&trace, u)).collect();
            for v in 0..n {
                for t in (0..=300).step_by(7) {
                    let expected: Vec<usize> =
                        (0..n).filter(|&u| tables[u].get(v).is_some_and(|s| s <= t)).collect();
                    assert_eq!(influence_set(&trace, v, t), expected, "v={v} t={t}");
                }
            }
        }
    }

    #[test]
    fn influence_examples() {
        let trace = explicit_trace(gen_baseline(Baseline::Line, 3).unwrap(), vec![2, 0, 2, 1, 2, 1, 2]);
        assert!(influence_set(&trace, 0, 1).is_empty());
        assert_eq!(influence_set(&trace, 0, 2), vec![0]);
        assert_eq!(influence_set(&trace, 2, 5), vec![0, 1, 2]);
    }

    #[test]
    fn csv_export() {
        let trace = explicit_trace(gen_baseline(Baseline::Line, 3).unwrap(), vec![2, 0, 2, 1, 2, 1, 2]);
        let mut out = Vec::new();
        critical_times(&trace, 0).write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "source,target,step\n0,0,2\n0,1,4\n0,2,5\n");
    }
}
