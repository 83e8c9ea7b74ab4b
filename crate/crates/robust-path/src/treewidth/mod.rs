//! Pipeline for graphs of small treewidth: build a binary tree decomposition
//! of the underlying undirected graph, translate the path problem into a
//! tree-labeling problem whose labels track chosen edges and pairwise
//! connectivity inside each bag, relax, sample, and read a path back off the
//! chosen-edge subgraph.

mod labeling;
mod solve;

pub use labeling::{
    assignment_cost, brute_force_tree_labeling, build_tree_labeling, check_label_assignment,
    consistent_triples, enumerate_labels, label_bits, label_cost, labeling_to_path,
    path_to_labeling, triple_is_consistent, LabelAssignment, NodeLabel, TreeLabelingInstance,
    Triple, DEFAULT_SPACE_CAP,
};
pub use solve::{
    moment_check_labeling, solve_tree_labeling, solve_treewidth, treewidth_moment_report, TwCaps,
};

use crate::instance::{EdgeId, Instance, VertexId};
use std::collections::BTreeSet;

/// Bags above this size would overflow the 128-bit connectivity masks.
pub const MAX_BAG: usize = 11;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TwError {
    #[error("decomposition width {width} exceeds cap {cap}")]
    WidthCapExceeded { width: usize, cap: usize },
    #[error("edge {0} has no bag containing both endpoints")]
    EdgeUncovered(EdgeId),
    #[error("node {0} has more than two children")]
    NotBinary(usize),
    #[error("bags holding vertex {0} are not connected")]
    VertexScattered(VertexId),
    #[error("node {0} is missing a terminal")]
    TerminalMissing(usize),
    #[error("label space needs {needed} entries, cap is {cap}")]
    SpaceCap { needed: u128, cap: u128 },
    #[error("label of node {0} violates the local constraints")]
    Inconsistent(usize),
    #[error("no consistent labeling at this guess")]
    Infeasible,
    #[error("chosen-edge subgraph has no source-sink path")]
    NoPathInSubgraph,
}

/// Binary tree of bags over the instance vertices. Every bag contains both
/// terminals, every edge has its endpoints together in some bag, and the
/// bags holding any fixed vertex form a connected subtree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeDecomposition {
    bags: Vec<Vec<VertexId>>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    root: usize,
}

impl TreeDecomposition {
    /// Assembles and structurally checks a decomposition; bag contents are
    /// validated against a concrete instance separately.
    pub fn new(
        bags: Vec<Vec<VertexId>>,
        parent: Vec<Option<usize>>,
    ) -> Result<TreeDecomposition, TwError> {
        let td = Self::assemble(bags, parent);
        for (v, ch) in td.children.iter().enumerate() {
            if ch.len() > 2 {
                return Err(TwError::NotBinary(v));
            }
        }
        Ok(td)
    }

    /// Assembly without the shape check, for trees that still have to pass
    /// through binarization.
    fn assemble(bags: Vec<Vec<VertexId>>, parent: Vec<Option<usize>>) -> TreeDecomposition {
        assert_eq!(bags.len(), parent.len());
        assert!(!bags.is_empty());
        let mut children = vec![Vec::new(); bags.len()];
        let mut root = None;
        for (v, p) in parent.iter().enumerate() {
            match p {
                Some(p) => children[*p].push(v),
                None => {
                    assert!(root.is_none(), "exactly one root");
                    root = Some(v);
                }
            }
        }
        let root = root.expect("exactly one root");
        let mut bags = bags;
        for bag in &mut bags {
            bag.sort_unstable();
            bag.dedup();
        }
        TreeDecomposition { bags, parent, children, root }
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn bag(&self, v: usize) -> &[VertexId] {
        &self.bags[v]
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    /// Largest bag size minus one.
    pub fn width(&self) -> usize {
        self.bags.iter().map(|b| b.len()).max().expect("nonempty") - 1
    }

    /// Nodes on the longest root-to-leaf chain.
    pub fn height(&self) -> usize {
        self.depths().iter().max().map(|d| d + 1).expect("nonempty")
    }

    fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0usize; self.len()];
        for v in self.topological() {
            if let Some(p) = self.parent[v] {
                depth[v] = depth[p] + 1;
            }
        }
        depth
    }

    /// Node ids ordered so parents precede children.
    pub fn topological(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.len());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            order.push(v);
            for &c in self.children[v].iter().rev() {
                stack.push(c);
            }
        }
        order
    }

    /// Structured dump for golden tests: one line per node, preorder.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in self.topological() {
            let parent = match self.parent[v] {
                Some(p) => p.to_string(),
                None => "-".to_string(),
            };
            let bag: Vec<String> = self.bags[v].iter().map(|x| x.to_string()).collect();
            out.push_str(&format!("node {v}: parent {parent} bag {{{}}}\n", bag.join(",")));
        }
        out
    }
}

/// Checks the decomposition against an instance: binary shape, every edge
/// covered by some bag, per-vertex bag connectivity, and both terminals in
/// every bag.
pub fn validate_decomposition(td: &TreeDecomposition, inst: &Instance) -> Result<(), TwError> {
    for v in 0..td.len() {
        if td.children(v).len() > 2 {
            return Err(TwError::NotBinary(v));
        }
        let bag = td.bag(v);
        if !bag.contains(&inst.source()) || !bag.contains(&inst.sink()) {
            return Err(TwError::TerminalMissing(v));
        }
    }
    for (e, &(tail, head)) in inst.edges().iter().enumerate() {
        let covered =
            (0..td.len()).any(|v| td.bag(v).contains(&tail) && td.bag(v).contains(&head));
        if !covered {
            return Err(TwError::EdgeUncovered(e));
        }
    }
    // A vertex's bags must reconnect through parent links alone.
    for x in 0..inst.n() {
        let holders: Vec<usize> = (0..td.len()).filter(|&v| td.bag(v).contains(&x)).collect();
        if holders.len() <= 1 {
            continue;
        }
        let inside: BTreeSet<usize> = holders.iter().copied().collect();
        let mut seen = BTreeSet::new();
        let mut stack = vec![holders[0]];
        seen.insert(holders[0]);
        while let Some(v) = stack.pop() {
            let mut near: Vec<usize> = td.children(v).to_vec();
            if let Some(p) = td.parent(v) {
                near.push(p);
            }
            for w in near {
                if inside.contains(&w) && seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        if seen.len() != holders.len() {
            return Err(TwError::VertexScattered(x));
        }
    }
    Ok(())
}

/// Elimination-order decomposition of the underlying undirected graph:
/// min-fill greedy bags, a clique-tree shape, binarization by spine copies,
/// centroid rebalancing once the natural height exceeds `2*ceil(log2 N) + 3`
/// (the rebuilt tree stays within that budget), then both terminals added to
/// every bag. Width is whatever the heuristic achieves; the cap makes the
/// failure loud instead of letting label spaces explode downstream.
pub fn build_tree_decomposition(
    inst: &Instance,
    width_cap: usize,
) -> Result<TreeDecomposition, TwError> {
    let n = inst.n();
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &(tail, head) in inst.edges() {
        adj[tail].insert(head);
        adj[head].insert(tail);
    }

    // Min-fill elimination, ties broken by degree then id.
    let mut alive: BTreeSet<usize> = (0..n).collect();
    let mut bags: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut eliminated_at = vec![usize::MAX; n];
    for round in 0..n {
        let pick = alive
            .iter()
            .copied()
            .min_by_key(|&v| {
                let near: Vec<usize> = adj[v].iter().copied().collect();
                let mut fill = 0usize;
                for (i, &a) in near.iter().enumerate() {
                    for &b in &near[i + 1..] {
                        if !adj[a].contains(&b) {
                            fill += 1;
                        }
                    }
                }
                (fill, near.len(), v)
            })
            .expect("vertices remain");
        let near: Vec<usize> = adj[pick].iter().copied().collect();
        for (i, &a) in near.iter().enumerate() {
            for &b in &near[i + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
        for &a in &near {
            adj[a].remove(&pick);
        }
        adj[pick].clear();
        alive.remove(&pick);
        eliminated_at[pick] = round;
        let mut bag = near;
        bag.push(pick);
        bag.sort_unstable();
        bags.push(bag);
    }

    // Clique-tree shape: a bag hangs under the bag of its earliest-eliminated
    // surviving neighbor; bags with none chain under the next elimination.
    let mut parent: Vec<Option<usize>> = vec![None; n];
    for v in 0..n {
        let anchor = bags[v]
            .iter()
            .filter(|&&x| eliminated_at[x] > v)
            .min_by_key(|&&x| eliminated_at[x])
            .copied();
        parent[v] = match anchor {
            Some(x) => Some(eliminated_at[x]),
            None if v + 1 < n => Some(v + 1),
            None => None,
        };
    }

    let (bags, parent) = relabel_preorder(bags, parent);
    // The raw clique tree may have wide joins; binarization restores the
    // two-child shape before anything downstream relies on it.
    let td = TreeDecomposition::assemble(bags, parent);
    let td = binarize(&td);
    let budget = 2 * ceil_log2(td.len().max(2)) + 3;
    let td = if td.height() > budget { rebalance(&td) } else { td };

    // Terminals join every bag so the root can speak about s-t connectivity.
    let augmented: Vec<Vec<usize>> = (0..td.len())
        .map(|v| {
            let mut bag = td.bag(v).to_vec();
            bag.push(inst.source());
            bag.push(inst.sink());
            bag
        })
        .collect();
    let td = TreeDecomposition::new(augmented, td.parent.clone())?;

    let cap = width_cap.min(MAX_BAG - 1);
    let width = td.width();
    if width > cap {
        return Err(TwError::WidthCapExceeded { width, cap });
    }
    validate_decomposition(&td, inst).expect("construction preserves the bag properties");
    Ok(td)
}

fn ceil_log2(x: usize) -> usize {
    x.next_power_of_two().trailing_zeros() as usize
}

/// Reorders nodes so ids are preorder; keeps tests and dumps stable.
fn relabel_preorder(
    bags: Vec<Vec<usize>>,
    parent: Vec<Option<usize>>,
) -> (Vec<Vec<usize>>, Vec<Option<usize>>) {
    let n = bags.len();
    let mut children = vec![Vec::new(); n];
    let mut root = 0;
    for (v, p) in parent.iter().enumerate() {
        match p {
            Some(p) => children[*p].push(v),
            None => root = v,
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        order.push(v);
        for &c in children[v].iter().rev() {
            stack.push(c);
        }
    }
    let mut new_id = vec![0usize; n];
    for (fresh, &old) in order.iter().enumerate() {
        new_id[old] = fresh;
    }
    let mut new_bags = vec![Vec::new(); n];
    let mut new_parent = vec![None; n];
    for old in 0..n {
        new_bags[new_id[old]] = bags[old].clone();
        new_parent[new_id[old]] = parent[old].map(|p| new_id[p]);
    }
    (new_bags, new_parent)
}

/// Splits nodes with more than two children into spines of bag copies.
fn binarize(td: &TreeDecomposition) -> TreeDecomposition {
    let mut bags: Vec<Vec<usize>> = Vec::new();
    let mut parent: Vec<Option<usize>> = Vec::new();
    // old node -> new id of its bag
    let mut placed = vec![usize::MAX; td.len()];
    for v in td.topological() {
        let up = td.parent(v).map(|p| placed[p]);
        bags.push(td.bag(v).to_vec());
        parent.push(up);
        placed[v] = bags.len() - 1;
    }
    // Re-route children through spine copies where needed.
    let mut hook: Vec<usize> = placed.clone();
    for v in td.topological() {
        let kids = td.children(v);
        if kids.len() <= 2 {
            continue;
        }
        // First child keeps the original slot; each further pair gets a copy.
        for (i, &c) in kids.iter().enumerate().skip(1) {
            if i + 1 < kids.len() {
                bags.push(td.bag(v).to_vec());
                parent.push(Some(hook[v]));
                let copy = bags.len() - 1;
                parent[placed[c]] = Some(copy);
                hook[v] = copy;
            } else {
                parent[placed[c]] = Some(hook[v]);
            }
        }
    }
    let (bags, parent) = relabel_preorder(bags, parent);
    TreeDecomposition::new(bags, parent).expect("spine keeps the shape binary")
}

/// Centroid rebuild: the new root bag is the centroid's bag joined with the
/// vertices shared with whatever was already placed above, so the two bag
/// properties survive the rearrangement. Recursion halves the node count,
/// and a binary join of at most three fragments costs one extra level, so
/// the result stays within `2*ceil(log2 N) + 1` levels.
fn rebalance(td: &TreeDecomposition) -> TreeDecomposition {
    let mut near: Vec<Vec<usize>> = vec![Vec::new(); td.len()];
    for v in 0..td.len() {
        if let Some(p) = td.parent(v) {
            near[v].push(p);
            near[p].push(v);
        }
    }
    let mut bags: Vec<Vec<usize>> = Vec::new();
    let mut parent: Vec<Option<usize>> = Vec::new();
    let all: BTreeSet<usize> = (0..td.len()).collect();
    build_balanced(td, &near, &all, &[], None, &mut bags, &mut parent);
    let (bags, parent) = relabel_preorder(bags, parent);
    TreeDecomposition::new(bags, parent).expect("rebuild is binary")
}

fn build_balanced(
    td: &TreeDecomposition,
    near: &[Vec<usize>],
    comp: &BTreeSet<usize>,
    portal: &[usize],
    up: Option<usize>,
    bags: &mut Vec<Vec<usize>>,
    parent: &mut Vec<Option<usize>>,
) {
    let c = centroid(near, comp);
    let verts: BTreeSet<usize> = comp.iter().flat_map(|&v| td.bag(v).iter().copied()).collect();
    let mut bag: Vec<usize> = td.bag(c).to_vec();
    bag.extend(portal.iter().copied().filter(|x| verts.contains(x)));
    bag.sort_unstable();
    bag.dedup();

    let mut pieces: Vec<BTreeSet<usize>> = Vec::new();
    for &start in &near[c] {
        if !comp.contains(&start) || pieces.iter().any(|p| p.contains(&start)) {
            continue;
        }
        let mut piece = BTreeSet::new();
        piece.insert(start);
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &w in &near[v] {
                if w != c && comp.contains(&w) && piece.insert(w) {
                    stack.push(w);
                }
            }
        }
        pieces.push(piece);
    }

    bags.push(bag.clone());
    parent.push(up);
    let mut hook = bags.len() - 1;
    for (i, piece) in pieces.iter().enumerate() {
        // A third fragment hangs off a copy of the same bag.
        if i >= 2 {
            bags.push(bag.clone());
            parent.push(Some(hook));
            hook = bags.len() - 1;
        }
        build_balanced(td, near, piece, &bag, Some(hook), bags, parent);
    }
}

/// Node of the component whose removal leaves pieces of at most half its
/// size; smallest id wins ties.
fn centroid(near: &[Vec<usize>], comp: &BTreeSet<usize>) -> usize {
    let total = comp.len();
    let mut best = (usize::MAX, usize::MAX);
    for &cand in comp {
        let mut worst = 0usize;
        let mut seen: BTreeSet<usize> = BTreeSet::new();
        seen.insert(cand);
        for &start in &near[cand] {
            if !comp.contains(&start) || seen.contains(&start) {
                continue;
            }
            let mut size = 0usize;
            let mut stack = vec![start];
            seen.insert(start);
            while let Some(v) = stack.pop() {
                size += 1;
                for &w in &near[v] {
                    if comp.contains(&w) && seen.insert(w) {
                        stack.push(w);
                    }
                }
            }
            worst = worst.max(size);
        }
        if (worst, cand) < best {
            best = (worst, cand);
        }
    }
    debug_assert!(best.0 <= total / 2, "a tree always has a centroid");
    best.1
}

/// Sends every edge to the bag closest to the root that contains both of its
/// endpoints; the per-vertex connectivity property makes that bag unique, so
/// the result partitions the edge set.
pub fn assign_highest_nodes(
    td: &TreeDecomposition,
    inst: &Instance,
) -> Result<Vec<Vec<EdgeId>>, TwError> {
    let depths = td.depths();
    let mut homes: Vec<Vec<EdgeId>> = vec![Vec::new(); td.len()];
    for (e, &(tail, head)) in inst.edges().iter().enumerate() {
        let home = (0..td.len())
            .filter(|&v| td.bag(v).contains(&tail) && td.bag(v).contains(&head))
            .min_by_key(|&v| (depths[v], v));
        match home {
            Some(v) => homes[v].push(e),
            None => return Err(TwError::EdgeUncovered(e)),
        }
    }
    Ok(homes)
}

#[cfg(test)]
mod tests;
