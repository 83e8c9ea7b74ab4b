//! Two-terminal series-parallel recognition and decomposition trees.
//!
//! The tree is canonical: series and parallel nodes never have a child of
//! their own kind, parallel children are ordered by their smallest leaf edge
//! id, and node ids are a preorder numbering with the root at 0. Feasible
//! subtrees of the tree (all children of a series node, exactly one child of
//! a parallel node) correspond one-to-one with s-t paths, with equal costs.

use crate::instance::{EdgeId, Instance, PathError, StPath, VertexId};
use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// Single original edge.
    Leaf(EdgeId),
    /// Children compose end to end, in path order.
    Series,
    /// Children share both terminals.
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpError {
    #[error("graph has no edges")]
    EmptyGraph,
    #[error("not series-parallel: {remaining} irreducible pieces left, e.g. {sample:?}")]
    NotSeriesParallel { remaining: usize, sample: Vec<(VertexId, VertexId)> },
    #[error("subtree node {0} out of range")]
    NodeOutOfRange(NodeId),
    #[error("subtree nodes not sorted and distinct")]
    Unsorted,
    #[error("subtree misses the root")]
    RootMissing,
    #[error("subtree node {0} is disconnected from the root")]
    Orphan(NodeId),
    #[error("series node {0} kept only part of its children")]
    SeriesChildMissing(NodeId),
    #[error("parallel node {node} kept {chosen} children instead of one")]
    ParallelChoice { node: NodeId, chosen: usize },
    #[error("edge {0} is not part of this tree")]
    UnknownEdge(EdgeId),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("subtree enumeration exceeded cap of {0}")]
    CapExceeded(usize),
}

/// Canonical decomposition tree of a two-terminal series-parallel instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecompTree {
    kinds: Vec<NodeKind>,
    children: Vec<Vec<NodeId>>,
    parent: Vec<Option<NodeId>>,
    terminals: Vec<(VertexId, VertexId)>,
    leaf_of_edge: Vec<NodeId>,
}

/// Choice of tree nodes standing for one s-t path: the root, all children of
/// every chosen series node, exactly one child of every chosen parallel node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeasibleSubtree {
    /// Sorted, distinct node ids.
    pub nodes: Vec<NodeId>,
}

impl DecompTree {
    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn kind(&self, v: NodeId) -> NodeKind {
        self.kinds[v]
    }

    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.children[v]
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.parent[v]
    }

    /// Terminal pair (tail, head) of the sub-network below `v`.
    pub fn terminals(&self, v: NodeId) -> (VertexId, VertexId) {
        self.terminals[v]
    }

    pub fn leaf_edge(&self, v: NodeId) -> Option<EdgeId> {
        match self.kinds[v] {
            NodeKind::Leaf(e) => Some(e),
            _ => None,
        }
    }

    pub fn leaf_for_edge(&self, e: EdgeId) -> Option<NodeId> {
        self.leaf_of_edge.get(e).copied()
    }

    /// Nodes on the longest root-to-leaf chain, counting both ends. A lone
    /// edge has height 1.
    pub fn height_levels(&self) -> usize {
        let mut below = vec![0usize; self.len()];
        // Preorder ids: children follow their parent, so a reverse sweep sees
        // children first.
        for v in (0..self.len()).rev() {
            below[v] = 1 + self.children[v].iter().map(|&c| below[c]).max().unwrap_or(0);
        }
        below[0]
    }

    pub fn leaf_count(&self) -> usize {
        self.kinds.iter().filter(|k| matches!(k, NodeKind::Leaf(_))).count()
    }

    /// Checks the feasible-subtree conditions.
    pub fn validate_subtree(&self, subtree: &FeasibleSubtree) -> Result<(), SpError> {
        if !subtree.nodes.windows(2).all(|w| w[0] < w[1]) {
            return Err(SpError::Unsorted);
        }
        let mut mask = vec![false; self.len()];
        for &v in &subtree.nodes {
            if v >= self.len() {
                return Err(SpError::NodeOutOfRange(v));
            }
            mask[v] = true;
        }
        if !mask.first().copied().unwrap_or(false) {
            return Err(SpError::RootMissing);
        }
        for &v in &subtree.nodes {
            if let Some(p) = self.parent[v] {
                if !mask[p] {
                    return Err(SpError::Orphan(v));
                }
            }
            match self.kinds[v] {
                NodeKind::Leaf(_) => {}
                NodeKind::Series => {
                    if !self.children[v].iter().all(|&c| mask[c]) {
                        return Err(SpError::SeriesChildMissing(v));
                    }
                }
                NodeKind::Parallel => {
                    let chosen = self.children[v].iter().filter(|&&c| mask[c]).count();
                    if chosen != 1 {
                        return Err(SpError::ParallelChoice { node: v, chosen });
                    }
                }
            }
        }
        Ok(())
    }

    /// Reads off the s-t path: leaves of the subtree in left-to-right order.
    pub fn subtree_to_path(
        &self,
        instance: &Instance,
        subtree: &FeasibleSubtree,
    ) -> Result<StPath, SpError> {
        self.validate_subtree(subtree)?;
        let mut mask = vec![false; self.len()];
        for &v in &subtree.nodes {
            mask[v] = true;
        }
        let mut edges = Vec::new();
        let mut stack = vec![self.root()];
        while let Some(v) = stack.pop() {
            match self.kinds[v] {
                NodeKind::Leaf(e) => edges.push(e),
                NodeKind::Series => {
                    for &c in self.children[v].iter().rev() {
                        stack.push(c);
                    }
                }
                NodeKind::Parallel => {
                    let chosen = self.children[v]
                        .iter()
                        .copied()
                        .find(|&c| mask[c])
                        .expect("validated choice");
                    stack.push(chosen);
                }
            }
        }
        Ok(StPath::new(instance, edges)?)
    }

    /// Leaf nodes of the path's edges plus all their ancestors.
    pub fn path_to_subtree(&self, instance: &Instance, path: &StPath) -> Result<FeasibleSubtree, SpError> {
        let mut mask = vec![false; self.len()];
        for &e in path.edges() {
            let leaf = *self.leaf_of_edge.get(e).ok_or(SpError::UnknownEdge(e))?;
            let mut v = leaf;
            loop {
                if mask[v] {
                    break;
                }
                mask[v] = true;
                match self.parent[v] {
                    Some(p) => v = p,
                    None => break,
                }
            }
        }
        let nodes: Vec<NodeId> = (0..self.len()).filter(|&v| mask[v]).collect();
        let subtree = FeasibleSubtree { nodes };
        self.validate_subtree(&subtree)?;
        let _ = instance;
        Ok(subtree)
    }

    /// All feasible subtrees, for exhaustive cross-checks on small trees.
    pub fn enumerate_subtrees(&self, cap: usize) -> Result<Vec<FeasibleSubtree>, SpError> {
        // Per node, the list of feasible choices below it, as node masks.
        fn below(tree: &DecompTree, v: NodeId, cap: usize) -> Result<Vec<Vec<NodeId>>, SpError> {
            match tree.kinds[v] {
                NodeKind::Leaf(_) => Ok(vec![vec![v]]),
                NodeKind::Parallel => {
                    let mut out = Vec::new();
                    for &c in &tree.children[v] {
                        for mut pick in below(tree, c, cap)? {
                            pick.push(v);
                            out.push(pick);
                            if out.len() > cap {
                                return Err(SpError::CapExceeded(cap));
                            }
                        }
                    }
                    Ok(out)
                }
                NodeKind::Series => {
                    let mut out: Vec<Vec<NodeId>> = vec![vec![v]];
                    for &c in &tree.children[v] {
                        let picks = below(tree, c, cap)?;
                        let mut next = Vec::with_capacity(out.len() * picks.len());
                        for base in &out {
                            for pick in &picks {
                                let mut merged = base.clone();
                                merged.extend_from_slice(pick);
                                next.push(merged);
                                if next.len() > cap {
                                    return Err(SpError::CapExceeded(cap));
                                }
                            }
                        }
                        out = next;
                    }
                    Ok(out)
                }
            }
        }
        let mut subtrees = Vec::new();
        for mut nodes in below(self, self.root(), cap)? {
            nodes.sort_unstable();
            subtrees.push(FeasibleSubtree { nodes });
        }
        subtrees.sort_by(|a, b| a.nodes.cmp(&b.nodes));
        Ok(subtrees)
    }

    /// Flat description, one node per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "nodes: {}", self.len()).unwrap();
        for v in 0..self.len() {
            let (tail, head) = self.terminals[v];
            match self.kinds[v] {
                NodeKind::Leaf(e) => {
                    writeln!(out, "{}: leaf edge {} ({} -> {})", v, e, tail, head).unwrap()
                }
                NodeKind::Series => {
                    writeln!(out, "{}: series ({} -> {}) children {:?}", v, tail, head, self.children[v])
                        .unwrap()
                }
                NodeKind::Parallel => {
                    writeln!(out, "{}: parallel ({} -> {}) children {:?}", v, tail, head, self.children[v])
                        .unwrap()
                }
            }
        }
        out
    }
}

/// Work-in-progress node arena used during reduction.
struct Builder {
    kinds: Vec<NodeKind>,
    children: Vec<Vec<usize>>,
    min_leaf: Vec<EdgeId>,
    terms: Vec<(VertexId, VertexId)>,
}

impl Builder {
    fn leaf(&mut self, e: EdgeId, tail: VertexId, head: VertexId) -> usize {
        self.kinds.push(NodeKind::Leaf(e));
        self.children.push(Vec::new());
        self.min_leaf.push(e);
        self.terms.push((tail, head));
        self.kinds.len() - 1
    }

    /// Merges two sub-networks sharing both terminals. Children of parallel
    /// operands are spliced in so parallel never nests under parallel.
    fn parallel(&mut self, a: usize, b: usize) -> usize {
        debug_assert_eq!(self.terms[a], self.terms[b]);
        let terms = self.terms[a];
        let mut kids = Vec::new();
        for op in [a, b] {
            if self.kinds[op] == NodeKind::Parallel {
                kids.append(&mut self.children[op]);
            } else {
                kids.push(op);
            }
        }
        let min = kids.iter().map(|&c| self.min_leaf[c]).min().expect("children");
        self.kinds.push(NodeKind::Parallel);
        self.children.push(kids);
        self.min_leaf.push(min);
        self.terms.push(terms);
        self.kinds.len() - 1
    }

    /// Chains two sub-networks end to end, `a` first.
    fn series(&mut self, a: usize, b: usize) -> usize {
        debug_assert_eq!(self.terms[a].1, self.terms[b].0);
        let terms = (self.terms[a].0, self.terms[b].1);
        let mut kids = Vec::new();
        for op in [a, b] {
            if self.kinds[op] == NodeKind::Series {
                kids.append(&mut self.children[op]);
            } else {
                kids.push(op);
            }
        }
        let min = kids.iter().map(|&c| self.min_leaf[c]).min().expect("children");
        self.kinds.push(NodeKind::Series);
        self.children.push(kids);
        self.min_leaf.push(min);
        self.terms.push(terms);
        self.kinds.len() - 1
    }
}

/// Reduces the instance's edge set by repeated series and parallel merges.
/// Succeeds exactly when everything collapses to one source-sink super-edge;
/// stuck states are reported with a sample of the irreducible pieces.
pub fn recognize_sp(instance: &Instance) -> Result<DecompTree, SpError> {
    if instance.m() == 0 {
        return Err(SpError::EmptyGraph);
    }
    let n = instance.n();
    let (s, t) = (instance.source(), instance.sink());

    // Live super-edges, indexed past the original edge ids as merges happen.
    let mut tails: Vec<VertexId> = Vec::with_capacity(instance.m());
    let mut heads: Vec<VertexId> = Vec::with_capacity(instance.m());
    let mut node_of: Vec<usize> = Vec::with_capacity(instance.m());
    let mut alive: Vec<bool> = Vec::with_capacity(instance.m());
    let mut builder =
        Builder { kinds: Vec::new(), children: Vec::new(), min_leaf: Vec::new(), terms: Vec::new() };

    let mut incoming: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut outgoing: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let mut by_pair: HashMap<(VertexId, VertexId), BTreeSet<usize>> = HashMap::new();

    let mut pair_queue: VecDeque<(VertexId, VertexId)> = VecDeque::new();
    let mut vertex_queue: VecDeque<VertexId> = VecDeque::new();

    for (e, &(tail, head)) in instance.edges().iter().enumerate() {
        tails.push(tail);
        heads.push(head);
        node_of.push(builder.leaf(e, tail, head));
        alive.push(true);
        incoming[head].insert(e);
        outgoing[tail].insert(e);
        let set = by_pair.entry((tail, head)).or_default();
        set.insert(e);
        if set.len() == 2 {
            pair_queue.push_back((tail, head));
        }
    }
    for v in 0..n {
        if v != s && v != t {
            vertex_queue.push_back(v);
        }
    }

    let mut live_count = instance.m();
    let spawn = |tails: &mut Vec<VertexId>, heads: &mut Vec<VertexId>, node_of: &mut Vec<usize>, alive: &mut Vec<bool>, tail: VertexId, head: VertexId, node: usize| -> usize {
        tails.push(tail);
        heads.push(head);
        node_of.push(node);
        alive.push(true);
        tails.len() - 1
    };

    loop {
        if let Some((tail, head)) = pair_queue.pop_front() {
            loop {
                let set = by_pair.entry((tail, head)).or_default();
                if set.len() < 2 {
                    break;
                }
                let a = *set.iter().next().expect("two elements");
                let b = *set.iter().nth(1).expect("two elements");
                set.remove(&a);
                set.remove(&b);
                alive[a] = false;
                alive[b] = false;
                incoming[head].remove(&a);
                incoming[head].remove(&b);
                outgoing[tail].remove(&a);
                outgoing[tail].remove(&b);
                let node = builder.parallel(node_of[a], node_of[b]);
                let id = spawn(&mut tails, &mut heads, &mut node_of, &mut alive, tail, head, node);
                incoming[head].insert(id);
                outgoing[tail].insert(id);
                by_pair.get_mut(&(tail, head)).expect("present").insert(id);
                live_count -= 1;
            }
            // Degrees at both endpoints dropped; series merges may now apply.
            vertex_queue.push_back(tail);
            vertex_queue.push_back(head);
            continue;
        }
        if let Some(v) = vertex_queue.pop_front() {
            if v == s || v == t {
                continue;
            }
            if incoming[v].len() != 1 || outgoing[v].len() != 1 {
                continue;
            }
            let a = *incoming[v].iter().next().expect("one element");
            let b = *outgoing[v].iter().next().expect("one element");
            let (u, w) = (tails[a], heads[b]);
            if u == w {
                // A series merge may not create a self-loop; two-terminal
                // series-parallel graphs are acyclic, so give up here.
                continue;
            }
            alive[a] = false;
            alive[b] = false;
            incoming[v].clear();
            outgoing[v].clear();
            outgoing[u].remove(&a);
            incoming[w].remove(&b);
            by_pair.get_mut(&(u, v)).expect("present").remove(&a);
            by_pair.get_mut(&(v, w)).expect("present").remove(&b);
            let node = builder.series(node_of[a], node_of[b]);
            let id = spawn(&mut tails, &mut heads, &mut node_of, &mut alive, u, w, node);
            outgoing[u].insert(id);
            incoming[w].insert(id);
            let set = by_pair.entry((u, w)).or_default();
            set.insert(id);
            live_count -= 1;
            if set.len() >= 2 {
                pair_queue.push_back((u, w));
            }
            vertex_queue.push_back(u);
            vertex_queue.push_back(w);
            continue;
        }
        break;
    }

    let survivors: Vec<usize> = (0..alive.len()).filter(|&e| alive[e]).collect();
    debug_assert_eq!(survivors.len(), live_count);
    if live_count != 1 || tails[survivors[0]] != s || heads[survivors[0]] != t {
        let mut sample: Vec<(VertexId, VertexId)> =
            survivors.iter().map(|&e| (tails[e], heads[e])).collect();
        sample.sort_unstable();
        sample.truncate(6);
        return Err(SpError::NotSeriesParallel { remaining: live_count, sample });
    }
    Ok(finalize(instance, &builder, node_of[survivors[0]]))
}

/// Sorts parallel children by smallest leaf edge and renumbers nodes in
/// preorder.
fn finalize(instance: &Instance, builder: &Builder, root: usize) -> DecompTree {
    let mut kinds = Vec::new();
    let mut children: Vec<Vec<NodeId>> = Vec::new();
    let mut parent = Vec::new();
    let mut terminals = Vec::new();
    let mut leaf_of_edge = vec![usize::MAX; instance.m()];

    let mut stack = vec![(root, None::<NodeId>)];
    while let Some((old, par)) = stack.pop() {
        let new = kinds.len();
        kinds.push(builder.kinds[old]);
        children.push(Vec::new());
        parent.push(par);
        terminals.push(builder.terms[old]);
        if let Some(p) = par {
            children[p].push(new);
        }
        match builder.kinds[old] {
            NodeKind::Leaf(e) => leaf_of_edge[e] = new,
            NodeKind::Parallel => {
                let mut kids = builder.children[old].clone();
                kids.sort_by_key(|&c| builder.min_leaf[c]);
                // Reversed push keeps preorder equal to canonical order.
                for &c in kids.iter().rev() {
                    stack.push((c, Some(new)));
                }
            }
            NodeKind::Series => {
                for &c in builder.children[old].iter().rev() {
                    stack.push((c, Some(new)));
                }
            }
        }
    }
    DecompTree { kinds, children, parent, terminals, leaf_of_edge }
}
