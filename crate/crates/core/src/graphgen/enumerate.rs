use std::collections::BTreeMap;

use super::Graph;
use crate::{Error, Result};

/// Canonical string of a rooted subtree (AHU encoding).
fn rooted_code(g: &Graph, v: usize, from: usize) -> String {
    let mut parts: Vec<String> = g
        .neighbors(v)
        .iter()
        .filter(|&&w| w != from)
        .map(|&w| rooted_code(g, w, v))
        .collect();
    parts.sort();
    format!("({})", parts.concat())
}

/// Isomorphism-invariant code of a tree: the smallest AHU encoding rooted at
/// a center.
pub fn canonical_tree_code(g: &Graph) -> Result<String> {
    if !g.is_tree() {
        return Err(Error::Unsupported("canonical code requires a tree".into()));
    }
    let n = g.node_count();
    let mut degree: Vec<usize> = (0..n).map(|v| g.degree(v)).collect();
    let mut layer: Vec<usize> = (0..n).filter(|&v| degree[v] <= 1).collect();
    let mut remaining = n;
    while remaining > 2 {
        remaining -= layer.len();
        let mut next = Vec::new();
        for &leaf in &layer {
            for &w in g.neighbors(leaf) {
                degree[w] -= 1;
                if degree[w] == 1 {
                    next.push(w);
                }
            }
        }
        layer = next;
    }
    Ok(layer
        .iter()
        .map(|&c| rooted_code(g, c, usize::MAX))
        .min()
        .expect("a tree has a center"))
}

fn prufer_decode(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1; n];
    for &x in seq {
        degree[x] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &x in seq {
        let leaf = (0..n).find(|&v| degree[v] == 1).expect("prufer leaf");
        edges.push((leaf, x));
        degree[leaf] -= 1;
        degree[x] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// One representative of every unlabeled tree on `n` nodes (`1 <= n <= 9`),
/// ordered by canonical code.
pub fn all_trees(n: usize) -> Result<Vec<Graph>> {
    match n {
        0 => return Err(Error::invalid("trees need at least one node")),
        1 => return Ok(vec![Graph::from_edges(1, &[])?]),
        2 => return Ok(vec![Graph::from_edges(2, &[(0, 1)])?]),
        n if n > 9 => return Err(Error::Capacity(format!("tree enumeration limited to 9 nodes, got {n}"))),
        _ => {}
    }
    let mut found: BTreeMap<String, Graph> = BTreeMap::new();
    let mut seq = vec![0; n - 2];
    loop {
        let g = Graph::from_edges(n, &prufer_decode(&seq, n))?;
        found.entry(canonical_tree_code(&g)?).or_insert(g);
        // odometer increment over [0, n)^(n-2)
        let mut i = 0;
        while i < seq.len() && seq[i] == n - 1 {
            seq[i] = 0;
            i += 1;
        }
        if i == seq.len() {
            break;
        }
        seq[i] += 1;
    }
    Ok(found.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_of_unlabeled_trees() {
        // OEIS A000055
        let expected = [1, 1, 1, 2, 3, 6, 11];
        for (i, &count) in expected.iter().enumerate() {
            let trees = all_trees(i + 1).unwrap();
            assert_eq!(trees.len(), count, "n = {}", i + 1);
            assert!(trees.iter().all(Graph::is_tree));
        }
    }

    #[test]
    fn code_is_label_invariant() {
        let a = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let b = Graph::from_edges(4, &[(2, 0), (0, 3), (3, 1)]).unwrap();
        let star = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        assert_eq!(canonical_tree_code(&a).unwrap(), canonical_tree_code(&b).unwrap());
        assert_ne!(canonical_tree_code(&a).unwrap(), canonical_tree_code(&star).unwrap());
    }
}
