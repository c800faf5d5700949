use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{Graph, Rooting};
use crate::{Error, Result};

/// Product of degrees along a path. Exact while it fits in 128 bits, then
/// carried as a natural-log sum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DegreeProduct {
    Exact(u128),
    Log(f64),
}

impl DegreeProduct {
    pub const ONE: DegreeProduct = DegreeProduct::Exact(1);

    pub fn times(self, factor: usize) -> DegreeProduct {
        match self {
            DegreeProduct::Exact(p) => match p.checked_mul(factor as u128) {
                Some(q) => DegreeProduct::Exact(q),
                None => DegreeProduct::Log((p as f64).ln() + (factor as f64).ln()),
            },
            DegreeProduct::Log(l) => DegreeProduct::Log(l + (factor as f64).ln()),
        }
    }

    pub fn ln(self) -> f64 {
        match self {
            DegreeProduct::Exact(p) => (p as f64).ln(),
            DegreeProduct::Log(l) => l,
        }
    }

    /// `self <= x`, exact for integer products.
    pub fn at_most(self, x: f64) -> bool {
        if x.is_nan() || x < 0.0 {
            return false;
        }
        match self {
            // the cast saturates, so huge thresholds admit every exact product
            DegreeProduct::Exact(p) => p <= x.floor() as u128,
            DegreeProduct::Log(l) => l <= x.ln(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathQuery {
    pub u: usize,
    pub v: usize,
    /// Nodes from `u` to `v` inclusive.
    pub vertices: Vec<usize>,
    pub length: usize,
    pub degree_product: DegreeProduct,
}

fn require_tree(g: &Graph, what: &str) -> Result<()> {
    if g.is_tree() {
        Ok(())
    } else {
        Err(Error::Unsupported(format!("{what} requires a tree")))
    }
}

fn check_node(g: &Graph, v: usize) -> Result<()> {
    if v < g.node_count() {
        Ok(())
    } else {
        Err(Error::invalid(format!("node {v} out of range")))
    }
}

/// The unique path between `u` and `v` in a tree.
pub fn path(g: &Graph, u: usize, v: usize) -> Result<PathQuery> {
    require_tree(g, "path")?;
    check_node(g, u)?;
    check_node(g, v)?;
    let mut parent = vec![usize::MAX; g.node_count()];
    parent[u] = u;
    let mut queue = VecDeque::from([u]);
    while let Some(x) = queue.pop_front() {
        if x == v {
            break;
        }
        for &w in g.neighbors(x) {
            if parent[w] == usize::MAX {
                parent[w] = x;
                queue.push_back(w);
            }
        }
    }
    let mut vertices = vec![v];
    let mut cur = v;
    while cur != u {
        cur = parent[cur];
        vertices.push(cur);
    }
    vertices.reverse();
    let degree_product = vertices
        .iter()
        .fold(DegreeProduct::ONE, |p, &w| p.times(g.degree(w)));
    Ok(PathQuery {
        u,
        v,
        length: vertices.len() - 1,
        vertices,
        degree_product,
    })
}

/// Exact diameter: two sweeps on trees, all-pairs BFS otherwise.
pub fn diameter(g: &Graph) -> Result<usize> {
    let far = |dist: &[usize]| -> (usize, usize) {
        dist.iter()
            .enumerate()
            .fold((0, 0), |best, (v, &d)| if d > best.1 { (v, d) } else { best })
    };
    if g.is_tree() {
        let (a, _) = far(&g.bfs_distances(0));
        return Ok(far(&g.bfs_distances(a)).1);
    }
    let mut best = 0;
    for s in 0..g.node_count() {
        let dist = g.bfs_distances(s);
        if dist.contains(&usize::MAX) {
            return Err(Error::invalid("diameter of a disconnected graph"));
        }
        best = best.max(far(&dist).1);
    }
    Ok(best)
}

/// Number of unordered pairs `u != v` whose path degree product is at most `x`.
///
/// Degrees are at least 1 on a connected tree with two or more nodes, so the
/// product never decreases along a path and each search is pruned as soon as
/// it exceeds `x`.
pub fn count_low_product_pairs(g: &Graph, x: f64) -> Result<u64> {
    require_tree(g, "count_low_product_pairs")?;
    let mut ordered: u64 = 0;
    let mut stack: Vec<(usize, usize, DegreeProduct)> = Vec::new();
    for u in 0..g.node_count() {
        let start = DegreeProduct::ONE.times(g.degree(u));
        if !start.at_most(x) {
            continue;
        }
        stack.push((u, usize::MAX, start));
        while let Some((w, from, product)) = stack.pop() {
            for &next in g.neighbors(w) {
                if next == from {
                    continue;
                }
                let p = product.times(g.degree(next));
                if p.at_most(x) {
                    ordered += 1;
                    stack.push((next, w, p));
                }
            }
        }
    }
    Ok(ordered / 2)
}

/// Descendant count and height below a node under a rooting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct XyLeaf {
    pub descendants: usize,
    pub height: usize,
}

/// (X, Y) profile of every node.
pub fn classify_all(g: &Graph, r: &Rooting) -> Vec<XyLeaf> {
    let mut out = vec![
        XyLeaf {
            descendants: 0,
            height: 0
        };
        g.node_count()
    ];
    for &v in r.order().iter().rev() {
        if let Some(p) = r.parent(v) {
            let child = out[v];
            let up = &mut out[p];
            up.descendants += child.descendants + 1;
            up.height = up.height.max(child.height + 1);
        }
    }
    out
}

pub fn classify_xy_leaf(g: &Graph, r: &Rooting, v: usize) -> Result<XyLeaf> {
    check_node(g, v)?;
    Ok(classify_all(g, r)[v])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Census {
    /// Roots of qualifying subtrees, ascending.
    pub roots: Vec<usize>,
    /// Nodes lying in at least one qualifying subtree.
    pub covered: usize,
}

/// Subtrees whose root is an `(size_cap, depth_cap)`-leaf hanging off a parent
/// of degree at least `parent_degree_floor`.
pub fn good_subtree_census(
    g: &Graph,
    r: &Rooting,
    size_cap: f64,
    depth_cap: f64,
    parent_degree_floor: f64,
) -> Result<Census> {
    require_tree(g, "good_subtree_census")?;
    let profile = classify_all(g, r);
    let qualifies = |v: usize| {
        r.parent(v).is_some_and(|p| g.degree(p) as f64 >= parent_degree_floor)
            && profile[v].descendants as f64 <= size_cap
            && profile[v].height as f64 <= depth_cap
    };
    let mut inside = vec![false; g.node_count()];
    let mut roots = Vec::new();
    for &v in r.order() {
        let q = qualifies(v);
        if q {
            roots.push(v);
        }
        inside[v] = q || r.parent(v).is_some_and(|p| inside[p]);
    }
    roots.sort_unstable();
    Ok(Census {
        roots,
        covered: inside.iter().filter(|&&b| b).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgen::{gen_balanced_mary, gen_baseline, gen_preferential_attachment, Baseline};

    #[test]
    fn path_examples() {
        let line = gen_baseline(Baseline::Line, 5).unwrap();
        let p = path(&line, 0, 4).unwrap();
        assert_eq!(p.vertices, vec![0, 1, 2, 3, 4]);
        assert_eq!(p.length, 4);
        assert_eq!(p.degree_product, DegreeProduct::Exact(8));

        let star = gen_baseline(Baseline::Star, 5).unwrap();
        let p = path(&star, 2, 4).unwrap();
        assert_eq!(p.vertices, vec![2, 0, 4]);
        assert_eq!(p.degree_product, DegreeProduct::Exact(4));

        let p = path(&star, 0, 0).unwrap();
        assert_eq!(p.vertices, vec![0]);
        assert_eq!(p.length, 0);
        assert_eq!(p.degree_product, DegreeProduct::Exact(4));

        let k4 = gen_baseline(Baseline::Complete, 4).unwrap();
        assert!(matches!(path(&k4, 0, 1), Err(Error::Unsupported(_))));
    }

    #[test]
    fn degree_product_overflow_switches_to_logs() {
        let mut p = DegreeProduct::ONE;
        for _ in 0..40 {
            p = p.times(1000);
        }
        assert!(matches!(p, DegreeProduct::Log(_)));
        assert!((p.ln() - 40.0 * 1000f64.ln()).abs() < 1e-9);
        assert!(!p.at_most(1e100));
        assert!(p.at_most(f64::INFINITY));
        assert!(DegreeProduct::Exact(4).at_most(4.0));
        assert!(!DegreeProduct::Exact(4).at_most(3.9));
    }

    #[test]
    fn low_product_pair_examples() {
        let star = gen_baseline(Baseline::Star, 5).unwrap();
        assert_eq!(count_low_product_pairs(&star, 4.0).unwrap(), 10);
        assert_eq!(count_low_product_pairs(&star, 3.9).unwrap(), 0);
        let line = gen_baseline(Baseline::Line, 4).unwrap();
        assert_eq!(count_low_product_pairs(&line, 2.0).unwrap(), 2);
    }

    /// Enumerates every pair through `path`; independent of the pruned search.
    fn brute_low_pairs(g: &Graph, x: f64) -> u64 {
        let n = g.node_count();
        let mut count = 0;
        for u in 0..n {
            for v in u + 1..n {
                if path(g, u, v).unwrap().degree_product.at_most(x) {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn pruned_count_matches_enumeration() {
        for seed in 0..5 {
            let g = gen_preferential_attachment(60, seed).unwrap();
            for x in [1.0, 2.0, 5.0, 17.0, 100.0, 1e6] {
                assert_eq!(count_low_product_pairs(&g, x).unwrap(), brute_low_pairs(&g, x));
            }
        }
    }

    #[test]
    fn xy_leaf_examples() {
        let b = gen_balanced_mary(2, 3).unwrap();
        let r = Rooting::new(&b, 0).unwrap();
        assert_eq!(
            classify_xy_leaf(&b, &r, 0).unwrap(),
            XyLeaf { descendants: 14, height: 3 }
        );
        assert_eq!(
            classify_xy_leaf(&b, &r, 1).unwrap(),
            XyLeaf { descendants: 6, height: 2 }
        );
        for leaf in 7..15 {
            assert_eq!(
                classify_xy_leaf(&b, &r, leaf).unwrap(),
                XyLeaf { descendants: 0, height: 0 }
            );
        }
    }

    #[test]
    fn census_examples() {
        let star = gen_baseline(Baseline::Star, 5).unwrap();
        let r = Rooting::new(&star, 0).unwrap();
        let c = good_subtree_census(&star, &r, 1.0, 1.0, 4.0).unwrap();
        assert_eq!(c.roots, vec![1, 2, 3, 4]);
        assert_eq!(c.covered, 4);
        let none = good_subtree_census(&star, &r, 1.0, 1.0, f64::INFINITY).unwrap();
        assert!(none.roots.is_empty());
        assert_eq!(none.covered, 0);
    }

    #[test]
    fn nested_subtrees_counted_once() {
        let b = gen_balanced_mary(2, 3).unwrap();
        let r = Rooting::new(&b, 0).unwrap();
        let c = good_subtree_census(&b, &r, 100.0, 10.0, 1.0).unwrap();
        assert_eq!(c.roots.len(), 14);
        assert_eq!(c.covered, 14);
    }
}
