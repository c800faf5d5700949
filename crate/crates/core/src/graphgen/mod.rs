//! Graph families and the structural quantities computed on them.

mod enumerate;
mod generators;
pub mod io;
mod metrics;

pub use enumerate::{all_trees, canonical_tree_code};
pub use generators::{
    gen_balanced_mary, gen_baseline, gen_pa_pittel, gen_preferential_attachment,
    gen_random_recursive, Baseline,
};
pub use metrics::{
    classify_all, classify_xy_leaf, count_low_product_pairs, diameter, good_subtree_census, path,
    Census, DegreeProduct, PathQuery, XyLeaf,
};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Tree,
    Complete,
    Other,
}

/// Immutable undirected simple graph with sorted adjacency lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<usize>>,
    edge_count: usize,
    kind: GraphKind,
}

impl Graph {
    /// Builds a graph from an edge list, rejecting self-loops, duplicate
    /// edges and out-of-range endpoints. The kind tag is inferred.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Graph> {
        if n == 0 {
            return Err(Error::invalid("graph needs at least one node"));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!("edge ({a}, {b}) out of range for {n} nodes")));
            }
            if a == b {
                return Err(Error::invalid(format!("self-loop at node {a}")));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for (v, list) in adjacency.iter_mut().enumerate() {
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(format!("duplicate edge at node {v}")));
            }
        }
        Ok(Self::from_sorted_adjacency(adjacency))
    }

    pub(crate) fn from_sorted_adjacency(adjacency: Vec<Vec<usize>>) -> Graph {
        let n = adjacency.len();
        let degree_sum: usize = adjacency.iter().map(Vec::len).sum();
        let edge_count = degree_sum / 2;
        let mut graph = Graph {
            adjacency,
            edge_count,
            kind: GraphKind::Other,
        };
        graph.kind = if edge_count + 1 == n && graph.is_connected() {
            GraphKind::Tree
        } else if edge_count == n * (n - 1) / 2 {
            GraphKind::Complete
        } else {
            GraphKind::Other
        };
        graph
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn kind(&self) -> GraphKind {
        self.kind
    }

    pub fn is_tree(&self) -> bool {
        self.kind == GraphKind::Tree
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Edges `(a, b)` with `a < b`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, list)| list.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
    }

    /// Breadth-first distances from `source`; `usize::MAX` marks unreachable nodes.
    pub fn bfs_distances(&self, source: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.node_count()];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            for &w in self.neighbors(v) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.bfs_distances(0).iter().all(|&d| d != usize::MAX)
    }

    /// Re-checks the structural invariants: symmetry, no loops, no
    /// duplicates, and tree shape when tagged as a tree.
    pub fn audit(&self) -> Result<()> {
        for (v, list) in self.adjacency.iter().enumerate() {
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Structural(format!("adjacency of {v} not strictly sorted")));
            }
            for &w in list {
                if w == v {
                    return Err(Error::Structural(format!("self-loop at {v}")));
                }
                if !self.has_edge(w, v) {
                    return Err(Error::Structural(format!("edge {v}-{w} not symmetric")));
                }
            }
        }
        if self.kind == GraphKind::Tree
            && (self.edge_count + 1 != self.node_count() || !self.is_connected())
        {
            return Err(Error::Structural("tree tag on a non-tree".into()));
        }
        Ok(())
    }
}

/// A rooting of a tree: parent links toward `root`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rooting {
    root: usize,
    parent: Vec<Option<usize>>,
    order: Vec<usize>,
    depth: Vec<usize>,
}

impl Rooting {
    pub fn new(g: &Graph, root: usize) -> Result<Rooting> {
        if !g.is_tree() {
            return Err(Error::Unsupported("rooting requires a tree".into()));
        }
        if root >= g.node_count() {
            return Err(Error::invalid(format!("root {root} out of range")));
        }
        let n = g.node_count();
        let mut parent = vec![None; n];
        let mut depth = vec![0; n];
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in g.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some(v);
                    depth[w] = depth[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        Ok(Rooting {
            root,
            parent,
            order,
            depth,
        })
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn depth(&self, v: usize) -> usize {
        self.depth[v]
    }

    /// Nodes in breadth-first order from the root.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn children<'g>(&'g self, g: &'g Graph, v: usize) -> impl Iterator<Item = usize> + 'g {
        g.neighbors(v)
            .iter()
            .copied()
            .filter(move |&w| self.parent[w] == Some(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_edges() {
        assert!(Graph::from_edges(3, &[(0, 0)]).is_err());
        assert!(Graph::from_edges(3, &[(0, 1), (1, 0)]).is_err());
        assert!(Graph::from_edges(3, &[(0, 3)]).is_err());
        assert!(Graph::from_edges(0, &[]).is_err());
    }

    #[test]
    fn kind_inference() {
        let line = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(line.kind(), GraphKind::Tree);
        let tri = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(tri.kind(), GraphKind::Complete);
        let forest = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(forest.kind(), GraphKind::Other);
        assert!(!forest.is_connected());
        line.audit().unwrap();
    }

    #[test]
    fn rooting_of_line() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let r = Rooting::new(&g, 1).unwrap();
        assert_eq!(r.parent(1), None);
        assert_eq!(r.parent(0), Some(1));
        assert_eq!(r.parent(3), Some(2));
        assert_eq!(r.depth(3), 2);
        assert_eq!(r.children(&g, 1).collect::<Vec<_>>(), vec![0, 2]);
    }
}
