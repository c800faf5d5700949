use serde::{Deserialize, Serialize};

use super::Timeline;
use crate::dynamics::{Announcement, RunTrace};
use crate::graphgen::Rooting;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalizationReport {
    pub root: usize,
    /// The trace ended unstabilized; finalization steps are then unknown.
    pub partial: bool,
    /// Step from which the announcement never changes.
    pub finalized_at: Vec<Option<u64>>,
    /// Earliest step at which the node is nearly-finalized with respect to
    /// its parent. `None` for the root and for partial reports.
    pub nearly_finalized_at: Vec<Option<u64>>,
    /// Largest critical time into the node from its own subtree. `None` when
    /// some chain never arrives within the trace.
    pub t_v: Vec<Option<u64>>,
}

fn subtree_critical_max(tl: &Timeline, r: &Rooting, g: &crate::graphgen::Graph) -> Vec<Option<u64>> {
    // T(x, v) = next scheduling of v after T(x, c) for x below child c, and
    // next_after is monotone, so T_v = next_after(v, max_c T_c).
    let n = g.node_count();
    let mut t_v: Vec<Option<u64>> = vec![None; n];
    for &v in r.order().iter().rev() {
        let mut latest = None;
        let mut missing = false;
        for c in r.children(g, v) {
            match t_v[c] {
                Some(t) => latest = latest.max(Some(t)),
                None => missing = true,
            }
        }
        t_v[v] = if missing {
            None
        } else {
            match latest {
                None => tl.first(v),
                Some(t) => tl.next_after(v, t),
            }
        };
    }
    t_v
}

/// Smallest `T` such that every announcement of `v` in `(T, F)` copies the
/// parent (or repeats itself while the parent is unannounced), where `F` is
/// the finalization step.
fn nearly_finalized(tl: &Timeline, v: usize, parent: usize, finalized: u64) -> u64 {
    let mut worst = 0;
    for &s in tl.announce_steps(v) {
        if s >= finalized {
            break;
        }
        let prev = tl.value_at(v, s - 1);
        let next = tl.value_at(v, s);
        let p = tl.value_at(parent, s);
        let ok = if p == Announcement::Unannounced { next == prev } else { next == p };
        if !ok {
            worst = s;
        }
    }
    worst
}

pub fn finalization_report(trace: &RunTrace, r: &Rooting) -> Result<FinalizationReport> {
    report_from(trace, &Timeline::new(trace), r)
}

fn report_from(trace: &RunTrace, tl: &Timeline, r: &Rooting) -> Result<FinalizationReport> {
    let g = &trace.graph;
    if !g.is_tree() {
        return Err(Error::Unsupported("finalization analysis requires a tree".into()));
    }
    let n = g.node_count();
    let partial = trace.stabilization_step.is_none();
    let finalized_at: Vec<Option<u64>> = (0..n).map(|v| tl.finalized_at(v)).collect();
    let nearly_finalized_at = (0..n)
        .map(|v| match (r.parent(v), finalized_at[v]) {
            (Some(p), Some(f)) => Some(nearly_finalized(tl, v, p, f)),
            _ => None,
        })
        .collect();
    Ok(FinalizationReport {
        root: r.root(),
        partial,
        finalized_at,
        nearly_finalized_at,
        t_v: subtree_critical_max(tl, r, g),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FinalizationViolation {
    /// Nearly-finalized later than the subtree critical time.
    Stable { node: usize, nearly: u64, t_v: u64 },
    /// A child changed after `T_v` while the node itself kept changing.
    Flip { node: usize, child: usize, step: u64, finalized: u64 },
}

/// Checks, for every non-root node of a stabilized tree trace, that it is
/// nearly-finalized by `T_v`, and that any child change after `T_v` finds
/// the node already finalized.
pub fn audit_finalization(trace: &RunTrace, r: &Rooting) -> Result<Vec<FinalizationViolation>> {
    if trace.stabilization_step.is_none() {
        return Err(Error::IncompleteInput("finalization audit needs a stabilized trace".into()));
    }
    let tl = Timeline::new(trace);
    let report = report_from(trace, &tl, r)?;
    let g = &trace.graph;
    let mut out = Vec::new();
    for v in 0..g.node_count() {
        let Some(t_v) = report.t_v[v] else { continue };
        let finalized = report.finalized_at[v].expect("stabilized");
        if let Some(nearly) = report.nearly_finalized_at[v] {
            if nearly > t_v {
                out.push(FinalizationViolation::Stable { node: v, nearly, t_v });
            }
        }
        let first_child_change = r
            .children(g, v)
            .filter_map(|c| {
                let ch = tl.changes(c);
                ch.get(ch.partition_point(|&(s, _)| s <= t_v)).map(|&(s, _)| (s, c))
            })
            .min();
        if let Some((step, child)) = first_child_change {
            if finalized > step {
                out.push(FinalizationViolation::Flip { node: v, child, step, finalized });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountingVerdict {
    pub node: usize,
    /// `floor((deg - 1) / 2)`.
    pub k: usize,
    /// Step from which at least `k` children are finalized.
    pub kth_child_finalized: u64,
    pub finalized_at: u64,
    pub t_v: Option<u64>,
    /// Descendants `(node, bound, finalized_at)` that did not finalize on
    /// their first announcement after their parent was settled.
    pub late_descendants: Vec<(usize, u64, u64)>,
    /// A step at which a strict majority of neighbors were agreeing children
    /// (so the node should have been finalized) but it was not.
    pub agreement_violation: Option<u64>,
}

impl CountingVerdict {
    pub fn is_ok(&self) -> bool {
        self.late_descendants.is_empty() && self.agreement_violation.is_none()
    }
}

/// Deterministic part of the child-counting argument for one node.
///
/// With `f = max(finalized_at(v), T_v)`, each descendant must finalize no
/// later than its first scheduling after its parent's `f` (and then passes
/// `max(its own finalization, f)` down). Separately, from the point all
/// children are nearly-finalized, whenever children agreeing with `v` form a
/// strict majority of its neighbors `v` must already be finalized.
pub fn counting_check(trace: &RunTrace, r: &Rooting, v: usize) -> Result<CountingVerdict> {
    if trace.stabilization_step.is_none() {
        return Err(Error::IncompleteInput("counting check needs a stabilized trace".into()));
    }
    let g = &trace.graph;
    if v >= g.node_count() {
        return Err(Error::invalid(format!("node {v} out of range")));
    }
    if r.parent(v).is_none() {
        return Err(Error::invalid("counting check applies to non-root nodes"));
    }
    let children: Vec<usize> = r.children(g, v).collect();
    if children.is_empty() {
        return Err(Error::invalid(format!("node {v} has no children")));
    }
    let tl = Timeline::new(trace);
    let report = report_from(trace, &tl, r)?;
    let fin = |x: usize| report.finalized_at[x].expect("stabilized");
    let k = (g.degree(v) - 1) / 2;
    let mut child_fin: Vec<u64> = children.iter().map(|&c| fin(c)).collect();
    child_fin.sort_unstable();
    let kth_child_finalized = if k == 0 { 0 } else { child_fin[k - 1] };

    let mut late_descendants = Vec::new();
    let mut agreement_violation = None;
    if let Some(t_v) = report.t_v[v] {
        let mut stack: Vec<(usize, u64)> = vec![(v, fin(v).max(t_v))];
        while let Some((x, f)) = stack.pop() {
            for c in r.children(g, x) {
                let bound = tl.next_after(c, f).unwrap_or(f);
                if fin(c) > bound {
                    late_descendants.push((c, bound, fin(c)));
                }
                stack.push((c, fin(c).max(f)));
            }
        }
        late_descendants.sort_unstable();

        let start = children
            .iter()
            .filter_map(|&c| report.nearly_finalized_at[c])
            .fold(t_v, u64::max);
        let mut checkpoints = vec![start];
        for &x in children.iter().chain([v].iter()) {
            checkpoints.extend(tl.changes(x).iter().map(|&(s, _)| s).filter(|&s| s > start));
        }
        checkpoints.sort_unstable();
        checkpoints.dedup();
        for s in checkpoints {
            let a = tl.value_at(v, s);
            if a == Announcement::Unannounced {
                continue;
            }
            let agree = children.iter().filter(|&&c| tl.value_at(c, s) == a).count();
            if 2 * agree > g.degree(v) && fin(v) > s {
                agreement_violation = Some(s);
                break;
            }
        }
    }
    Ok(CountingVerdict {
        node: v,
        k,
        kth_child_finalized,
        finalized_at: fin(v),
        t_v: report.t_v[v],
        late_descendants,
        agreement_violation,
    })
}
