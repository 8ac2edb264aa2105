//! Junction trees and the variable ordering they induce.
//!
//! The sampler's cost is exponential in the width of the tree it is handed,
//! so everything here is deterministic: min-fill triangulation with
//! lowest-id tie-breaks, a maximum-weight spanning tree over clique
//! intersections, and a leaf-peeling order that always selects the leaf
//! with the smallest contained variable id.

use std::collections::BTreeSet;

/// Tree over variable subsets covering a graph.
#[derive(Clone, Debug)]
pub struct JunctionTree {
    /// Vertex variable sets, each sorted ascending.
    pub vertices: Vec<Vec<usize>>,
    /// Undirected tree edges over vertex indices.
    pub tree_edges: Vec<(usize, usize)>,
    /// Largest vertex size minus one.
    pub width: usize,
}

/// A failed junction-tree property, with witnesses.
#[derive(Clone, Debug, PartialEq)]
pub enum JtViolation {
    /// Vertex/edge structure is not a tree.
    NotATree,
    /// Variable appears in no vertex (property 1).
    UncoveredVariable { var: usize },
    /// Graph edge contained in no vertex (property 2).
    UncoveredEdge { a: usize, b: usize },
    /// Vertices containing `var` do not induce a connected subtree
    /// (property 3, running intersection); the two witnesses lie in
    /// different components.
    RunningIntersection { var: usize, witness: (usize, usize) },
}

impl JunctionTree {
    fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for &(a, b) in &self.tree_edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }
}

/// Check all junction-tree properties of `tree` against the graph given by
/// `adjacency`. Returns an empty list iff the tree is valid.
pub fn validate_junction_tree(
    tree: &JunctionTree,
    adjacency: &[BTreeSet<usize>],
) -> Vec<JtViolation> {
    let mut out = Vec::new();
    let n = tree.vertices.len();
    if n == 0 || tree.tree_edges.len() != n - 1 {
        out.push(JtViolation::NotATree);
        return out;
    }
    // connectivity of the tree itself
    let adj = tree.neighbors();
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    if seen.iter().any(|s| !s) {
        out.push(JtViolation::NotATree);
        return out;
    }

    let p = adjacency.len();
    let mut containing = vec![Vec::new(); p];
    for (vi, vs) in tree.vertices.iter().enumerate() {
        for &v in vs {
            if v < p {
                containing[v].push(vi);
            }
        }
    }
    for v in 0..p {
        if containing[v].is_empty() {
            out.push(JtViolation::UncoveredVariable { var: v });
        }
    }
    for (a, nb) in adjacency.iter().enumerate() {
        for &b in nb.iter().filter(|&&b| b > a) {
            let covered = tree
                .vertices
                .iter()
                .any(|vs| vs.binary_search(&a).is_ok() && vs.binary_search(&b).is_ok());
            if !covered {
                out.push(JtViolation::UncoveredEdge { a, b });
            }
        }
    }
    // running intersection: vertices containing v must form a connected
    // subtree
    for v in 0..p {
        let vs = &containing[v];
        if vs.len() <= 1 {
            continue;
        }
        let inset: BTreeSet<usize> = vs.iter().copied().collect();
        let mut seen = BTreeSet::new();
        let mut stack = vec![vs[0]];
        seen.insert(vs[0]);
        while let Some(u) = stack.pop() {
            for &w in &adj[u] {
                if inset.contains(&w) && seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        if let Some(&missing) = vs.iter().find(|x| !seen.contains(x)) {
            out.push(JtViolation::RunningIntersection {
                var: v,
                witness: (vs[0], missing),
            });
        }
    }
    out
}

/// Build a junction tree for the graph by min-fill triangulation (lowest-id
/// tie-break) followed by a maximum-weight spanning tree over the maximal
/// cliques. Disconnected graphs get their component trees chained together.
/// The result is machine-checked before returning.
pub fn build_junction_tree(adjacency: &[BTreeSet<usize>]) -> JunctionTree {
    let p = adjacency.len();
    assert!(p > 0, "empty graph");
    let mut work: Vec<BTreeSet<usize>> = adjacency.to_vec();
    let mut alive: BTreeSet<usize> = (0..p).collect();
    let mut elim_cliques: Vec<Vec<usize>> = Vec::with_capacity(p);

    while !alive.is_empty() {
        // min-fill vertex, ties to lowest id
        let mut best = usize::MAX;
        let mut best_fill = usize::MAX;
        for &v in &alive {
            let nbrs: Vec<usize> = work[v].iter().copied().collect();
            let mut fill = 0usize;
            for (i, &a) in nbrs.iter().enumerate() {
                for &b in &nbrs[i + 1..] {
                    if !work[a].contains(&b) {
                        fill += 1;
                    }
                }
            }
            if fill < best_fill {
                best_fill = fill;
                best = v;
            }
        }
        let v = best;
        let nbrs: Vec<usize> = work[v].iter().copied().collect();
        let mut clique: Vec<usize> = nbrs.clone();
        clique.push(v);
        clique.sort_unstable();
        elim_cliques.push(clique);
        for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                work[a].insert(b);
                work[b].insert(a);
            }
        }
        for &a in &nbrs {
            work[a].remove(&v);
        }
        work[v].clear();
        alive.remove(&v);
    }

    // keep maximal cliques only (first occurrence wins for duplicates)
    let mut vertices: Vec<Vec<usize>> = Vec::new();
    for c in elim_cliques {
        let contained = vertices.iter().any(|other| {
            c.iter().all(|v| other.binary_search(v).is_ok())
        });
        if !contained {
            vertices.retain(|other| {
                !other.iter().all(|v| c.binary_search(v).is_ok())
            });
            vertices.push(c);
        }
    }
    vertices.sort();

    let tree_edges = max_weight_spanning_tree(&vertices);
    let width = vertices.iter().map(|v| v.len()).max().unwrap() - 1;
    let tree = JunctionTree {
        vertices,
        tree_edges,
        width,
    };
    debug_assert!(validate_junction_tree(&tree, adjacency).is_empty());
    tree
}

fn max_weight_spanning_tree(vertices: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let n = vertices.len();
    if n <= 1 {
        return Vec::new();
    }
    let mut candidates: Vec<(usize, usize, usize)> = Vec::new(); // (weight, i, j)
    for i in 0..n {
        for j in i + 1..n {
            let w = vertices[i]
                .iter()
                .filter(|v| vertices[j].binary_search(v).is_ok())
                .count();
            candidates.push((w, i, j));
        }
    }
    // Kruskal on descending weight; zero-weight edges only join disjoint
    // components, which is exactly how separate graph components get chained.
    candidates.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut edges = Vec::with_capacity(n - 1);
    for (_, i, j) in candidates {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri] = rj;
            edges.push((i, j));
            if edges.len() == n - 1 {
                break;
            }
        }
    }
    edges
}

/// Output of the leaf-peeling order: the permutation, the active tree
/// vertex per step, and the per-step node sets in relabeled step indices.
#[derive(Clone, Debug)]
pub struct EliminationOrder {
    /// `order[t]` is the variable appended at step `t` (0-based).
    pub order: Vec<usize>,
    /// `position[v]` is the step at which variable `v` was appended.
    pub position: Vec<usize>,
    /// Index into the originating tree's vertex list, per step.
    pub node_vertex: Vec<usize>,
    /// `V_t` per step, as sorted step indices.
    pub node_of: Vec<Vec<usize>>,
    pub width: usize,
}

impl EliminationOrder {
    pub fn p(&self) -> usize {
        self.order.len()
    }

    /// Is step `k` in the closure `bar-V_t = {0..t−1} ∪ V_t`?
    pub fn in_closure(&self, t: usize, k: usize) -> bool {
        k < t || self.node_of[t].binary_search(&k).is_ok()
    }

    /// Steps in `V_t` strictly after `t`, ascending.
    pub fn future_axes(&self, t: usize) -> Vec<usize> {
        self.node_of[t]
            .iter()
            .copied()
            .filter(|&u| u > t)
            .collect()
    }

    /// Steps `k < t` whose node contains `t`; these are exactly the cached
    /// factors the acceptance ratio at step `t` must consult.
    pub fn referencing_steps(&self, t: usize) -> Vec<usize> {
        (0..t)
            .filter(|&k| self.node_of[k].binary_search(&t).is_ok())
            .collect()
    }
}

/// Peel leaves off the tree, appending each leaf's private variables in
/// ascending id order. Leaf selection is deterministic: the leaf whose
/// smallest contained variable id is lowest.
pub fn order_variables(tree: &JunctionTree) -> EliminationOrder {
    let n = tree.vertices.len();
    let adj = tree.neighbors();
    let mut active: Vec<bool> = vec![true; n];
    let mut degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut remaining = n;
    let mut order: Vec<usize> = Vec::new();
    let mut node_vertex_per_var: Vec<(usize, usize)> = Vec::new(); // (var, vertex)
    let mut appended: BTreeSet<usize> = BTreeSet::new();

    while remaining > 0 {
        let leaf = (0..n)
            .filter(|&v| active[v] && degree[v] <= 1)
            .min_by_key(|&v| tree.vertices[v].iter().copied().min().unwrap_or(usize::MAX))
            .expect("a tree always has a leaf");
        let neighbor = adj[leaf].iter().copied().find(|&u| active[u]);
        let private: Vec<usize> = match neighbor {
            Some(nb) => tree.vertices[leaf]
                .iter()
                .copied()
                .filter(|v| tree.vertices[nb].binary_search(v).is_err())
                .collect(),
            None => tree.vertices[leaf].clone(),
        };
        for v in private {
            if appended.insert(v) {
                order.push(v);
                node_vertex_per_var.push((v, leaf));
            }
        }
        active[leaf] = false;
        remaining -= 1;
        if let Some(nb) = neighbor {
            degree[nb] -= 1;
        }
        // validity of the peel: once a leaf is removed, no appended variable
        // may remain anywhere in the active tree
        assert!(
            (0..n)
                .filter(|&v| active[v])
                .all(|v| tree.vertices[v].iter().all(|x| !appended.contains(x))),
            "appended variable still active; not a junction tree"
        );
    }

    let p = order.len();
    let mut position = vec![usize::MAX; p];
    for (t, &v) in order.iter().enumerate() {
        assert!(v < p, "tree vertices must cover a contiguous 0..p range");
        position[v] = t;
    }
    assert!(
        position.iter().all(|&t| t != usize::MAX),
        "order must be a permutation"
    );
    let node_vertex: Vec<usize> = node_vertex_per_var.iter().map(|&(_, w)| w).collect();
    let node_of: Vec<Vec<usize>> = node_vertex
        .iter()
        .map(|&w| {
            let mut steps: Vec<usize> = tree.vertices[w].iter().map(|&v| position[v]).collect();
            steps.sort_unstable();
            steps
        })
        .collect();
    // Every vertex containing the step's variable must already have been
    // peeled: equivalently, each variable's own node is the last vertex that
    // contains it.
    for t in 0..p {
        debug_assert!(node_of[t].binary_search(&t).is_ok());
    }
    EliminationOrder {
        order,
        position,
        node_vertex,
        node_of,
        width: tree.width,
    }
}

/// Explicit junction tree of width `min(d1, d2)` for the `d1 × d2` grid
/// with row-major variable ids. The induced order walks the long dimension
/// first, so the active set when sampling a cell is the rest of its
/// rank plus the already-started frontier of the next rank.
pub fn grid_junction_tree(d1: usize, d2: usize) -> JunctionTree {
    assert!(d1 >= 1 && d2 >= 1);
    let id = |i: usize, j: usize| i * d2 + j;
    if d1 == 1 && d2 == 1 {
        return JunctionTree {
            vertices: vec![vec![0]],
            tree_edges: Vec::new(),
            width: 0,
        };
    }
    let mut vertices: Vec<Vec<usize>> = Vec::new();
    if d1 >= d2 {
        // peel rows top to bottom; vertex (i, j) holds the tail of row i
        // from column j together with the head of row i+1 through column j
        for i in 0..d1 - 1 {
            for j in 0..d2 {
                let mut vs: Vec<usize> = (j..d2).map(|c| id(i, c)).collect();
                vs.extend((0..=j).map(|c| id(i + 1, c)));
                vs.sort_unstable();
                vertices.push(vs);
            }
        }
    } else {
        // transpose: peel columns left to right
        for j in 0..d2 - 1 {
            for i in 0..d1 {
                let mut vs: Vec<usize> = (i..d1).map(|r| id(r, j)).collect();
                vs.extend((0..=i).map(|r| id(r, j + 1)));
                vs.sort_unstable();
                vertices.push(vs);
            }
        }
    }
    let tree_edges = (0..vertices.len().saturating_sub(1))
        .map(|k| (k, k + 1))
        .collect();
    let width = d1.min(d2);
    JunctionTree {
        vertices,
        tree_edges,
        width,
    }
}

/// Adjacency sets of the `d1 × d2` grid graph, row-major ids.
pub fn grid_adjacency(d1: usize, d2: usize) -> Vec<BTreeSet<usize>> {
    let id = |i: usize, j: usize| i * d2 + j;
    let mut adj = vec![BTreeSet::new(); d1 * d2];
    for i in 0..d1 {
        for j in 0..d2 {
            if j + 1 < d2 {
                adj[id(i, j)].insert(id(i, j + 1));
                adj[id(i, j + 1)].insert(id(i, j));
            }
            if i + 1 < d1 {
                adj[id(i, j)].insert(id(i + 1, j));
                adj[id(i + 1, j)].insert(id(i, j));
            }
        }
    }
    adj
}
