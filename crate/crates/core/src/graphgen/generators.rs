use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::rng::{stream, stream_rng};
use crate::{Error, Result};

/// Upper bound on generated graph size.
pub const MAX_NODES: usize = 1 << 26;

fn tree_from_edges(n: usize, edges: &[(usize, usize)]) -> Graph {
    let mut adjacency = vec![Vec::new(); n];
    for &(a, b) in edges {
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    for list in &mut adjacency {
        list.sort_unstable();
    }
    Graph::from_sorted_adjacency(adjacency)
}

fn check_size(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("node count must be at least 1"));
    }
    if n >= MAX_NODES {
        return Err(Error::Capacity(format!("{n} nodes exceeds the generator limit")));
    }
    Ok(())
}

/// Preferential attachment tree on `v_0, v_1, ..., v_n` (node index = arrival
/// index). `v_1` hangs off the special node `v_0`; every later `v_{i+1}` picks
/// `v_j`, `1 <= j <= i`, with probability `deg_i(v_j) / (2i - 1)`.
pub fn gen_preferential_attachment(n: usize, seed: u64) -> Result<Graph> {
    check_size(n)?;
    let mut rng = stream_rng(seed, stream::GRAPH);
    let mut edges = Vec::with_capacity(n);
    edges.push((0, 1));
    // Each node among v_1..v_i appears once per unit of degree; v_0 never does.
    let mut endpoints = Vec::with_capacity(2 * n);
    endpoints.push(1);
    for newcomer in 2..=n {
        let target = endpoints[rng.random_range(0..endpoints.len())];
        edges.push((target, newcomer));
        endpoints.push(target);
        endpoints.push(newcomer);
    }
    Ok(tree_from_edges(n + 1, &edges))
}

#[derive(Clone, Copy, Debug)]
struct Tick {
    at: f64,
    node: usize,
}

impl PartialEq for Tick {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Tick {}
impl PartialOrd for Tick {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Tick {
    // Reversed: BinaryHeap pops the earliest tick first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .at
            .total_cmp(&self.at)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Preferential attachment via competing exponential clocks.
///
/// Every node runs a clock at rate equal to its current degree. When a clock
/// ticks a new node is born attached to its owner; the owner's rate goes up
/// by one and its clock restarts, the newborn starts at rate 1. The other
/// clocks keep running. Output numbering and the `v_0` convention match
/// [`gen_preferential_attachment`].
pub fn gen_pa_pittel(n: usize, seed: u64) -> Result<Graph> {
    check_size(n)?;
    let mut rng = stream_rng(seed, stream::GRAPH);
    let mut exp = |rate: f64| -> f64 {
        let e: f64 = Exp1.sample(&mut rng);
        e / rate
    };
    let mut edges = Vec::with_capacity(n);
    edges.push((0, 1));
    let mut rate = vec![0.0_f64; n + 1];
    rate[1] = 1.0;
    let mut clocks = BinaryHeap::with_capacity(n);
    clocks.push(Tick { at: exp(1.0), node: 1 });
    for newcomer in 2..=n {
        let Tick { at, node } = clocks.pop().expect("at least one live clock");
        edges.push((node, newcomer));
        rate[node] += 1.0;
        rate[newcomer] = 1.0;
        clocks.push(Tick {
            at: at + exp(rate[node]),
            node,
        });
        clocks.push(Tick {
            at: at + exp(1.0),
            node: newcomer,
        });
    }
    Ok(tree_from_edges(n + 1, &edges))
}

/// Uniform random recursive tree on `n` nodes: node `i` attaches to a
/// uniformly chosen earlier node.
pub fn gen_random_recursive(n: usize, seed: u64) -> Result<Graph> {
    check_size(n)?;
    let mut rng = stream_rng(seed, stream::GRAPH);
    let edges: Vec<(usize, usize)> = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
    Ok(tree_from_edges(n, &edges))
}

/// Balanced M-ary tree of the given depth, breadth-first numbered, root 0.
pub fn gen_balanced_mary(m: usize, depth: usize) -> Result<Graph> {
    if m == 0 {
        return Err(Error::invalid("branching factor must be at least 1"));
    }
    let mut total: usize = 0;
    let mut level: usize = 1;
    for _ in 0..=depth {
        total = total
            .checked_add(level)
            .filter(|&t| t < MAX_NODES)
            .ok_or_else(|| Error::Capacity(format!("{m}-ary tree of depth {depth} is too large")))?;
        level = level.saturating_mul(m);
    }
    let internal = total - if depth == 0 { 1 } else { m.pow(depth as u32) };
    let mut edges = Vec::with_capacity(total - 1);
    for parent in 0..internal {
        for c in 1..=m {
            edges.push((parent, parent * m + c));
        }
    }
    Ok(tree_from_edges(total, &edges))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Baseline {
    Line,
    Star,
    Complete,
}

/// Line `0-1-...-(n-1)`, star centred on node 0, or the complete graph.
pub fn gen_baseline(kind: Baseline, n: usize) -> Result<Graph> {
    check_size(n)?;
    let edges: Vec<(usize, usize)> = match kind {
        Baseline::Line => (1..n).map(|i| (i - 1, i)).collect(),
        Baseline::Star => (1..n).map(|i| (0, i)).collect(),
        Baseline::Complete => {
            if n > 20_000 {
                return Err(Error::Capacity(format!("complete graph on {n} nodes")));
            }
            (0..n)
                .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
                .collect()
        }
    };
    Graph::from_edges(n, &edges)
}
