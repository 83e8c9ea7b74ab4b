//! Divide-and-conquer relaxation for arbitrary digraphs. A route from `a` to
//! `b` within an edge budget either fits in a single edge or passes through a
//! middle vertex splitting the budget in half, so guessing midpoints yields a
//! balanced decomposition whose size is quasi-polynomial in the vertex count
//! and whose choice depth is logarithmic.

use crate::instance::{
    desugar_parallel_edges, minimax_value, prune_off_path_edges, truncate_edges, EdgeId, Instance,
    StPath, VertexId,
};
use crate::lp::{build_tree_lp, doubling_search, solve_feasibility, CostRows, DoublingError, Verdict};
use crate::ratio::{rat_zero, Rat};
use crate::round::{moment_check, round_with_retries, MomentReport, RoundKind, RoundTree};
use crate::solver::{SolveError, SolveOptions, SolveReport};
use std::collections::HashMap;

pub const DEFAULT_NODE_CAP: u128 = 5_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetatreeError {
    #[error("decomposition needs {needed} nodes, cap is {cap}")]
    TooLarge { needed: u128, cap: u128 },
    #[error("instance has parallel edges; split them first")]
    ParallelEdges,
    #[error("node {0} breaks the subtree shape")]
    Subtree(usize),
}

/// Cost-independent part of the decomposition: alternating choose-a-midpoint
/// and solve-both-halves levels over a fixed vertex set. Pair leaves are
/// classified against a concrete edge set separately.
#[derive(Debug, Clone)]
pub struct MetaShape {
    n: usize,
    kinds: Vec<RoundKind>,
    children: Vec<Vec<usize>>,
    /// Endpoints (a, b) for every node; a merge stores its outer endpoints
    /// and its midpoint is the index of the child slot that reached it.
    pair: Vec<(VertexId, VertexId)>,
}

/// Smallest L with 2^L >= x.
fn ceil_log2(x: usize) -> u32 {
    x.next_power_of_two().trailing_zeros()
}

/// Closed-form node count: split levels hold (2n)^j nodes for j = 0..=L and
/// merge levels n * (2n)^j for j = 0..L, with L = ceil(log2 n) so the edge
/// budget 2^L covers the longest simple path.
pub fn node_budget(n: usize) -> u128 {
    let levels = ceil_log2(n) as usize;
    let base = 2u128.saturating_mul(n as u128);
    let mut total = 0u128;
    let mut splits = 1u128;
    for _ in 0..levels {
        total = total.saturating_add(splits);
        total = total.saturating_add(splits.saturating_mul(n as u128));
        splits = splits.saturating_mul(base);
    }
    total.saturating_add(splits)
}

impl MetaShape {
    pub fn build(
        n: usize,
        source: VertexId,
        sink: VertexId,
        node_cap: u128,
    ) -> Result<MetaShape, MetatreeError> {
        assert!(n >= 2 && source < n && sink < n && source != sink);
        let needed = node_budget(n);
        if needed > node_cap {
            return Err(MetatreeError::TooLarge { needed, cap: node_cap });
        }
        let levels = ceil_log2(n);
        let mut shape = MetaShape {
            n,
            kinds: Vec::new(),
            children: Vec::new(),
            pair: Vec::new(),
        };
        shape.add_split(0, levels, source, sink);
        debug_assert_eq!(shape.len() as u128, needed);
        Ok(shape)
    }

    fn alloc(&mut self, kind: RoundKind, pair: (VertexId, VertexId)) -> usize {
        self.kinds.push(kind);
        self.children.push(Vec::new());
        self.pair.push(pair);
        self.kinds.len() - 1
    }

    fn add_split(&mut self, level: u32, levels: u32, a: VertexId, b: VertexId) -> usize {
        if level == levels {
            return self.alloc(RoundKind::Leaf, (a, b));
        }
        let id = self.alloc(RoundKind::Choose, (a, b));
        // Child slot w = route through midpoint w.
        let kids: Vec<usize> = (0..self.n).map(|w| self.add_merge(level, levels, a, w, b)).collect();
        self.children[id] = kids;
        id
    }

    fn add_merge(&mut self, level: u32, levels: u32, a: VertexId, w: VertexId, b: VertexId) -> usize {
        let id = self.alloc(RoundKind::All, (a, b));
        let left = self.add_split(level + 1, levels, a, w);
        let right = self.add_split(level + 1, levels, w, b);
        self.children[id] = vec![left, right];
        id
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    /// Choose levels on any root-leaf chain.
    pub fn choice_depth(&self) -> usize {
        ceil_log2(self.n) as usize
    }

    /// Alternating split/merge levels, leaves included: 2 ceil(log2 n) + 1.
    pub fn levels(&self) -> usize {
        2 * self.choice_depth() + 1
    }

    /// Binds the shape to a concrete edge set: pair leaves become zero-cost
    /// links (a == b), cost-carrying edges, or impossible routes.
    pub fn instantiate(&self, instance: &Instance) -> Result<MetaNest, MetatreeError> {
        assert_eq!(instance.n(), self.n, "shape built for a different vertex count");
        let mut edge_at: HashMap<(VertexId, VertexId), EdgeId> = HashMap::new();
        for (e, &pair) in instance.edges().iter().enumerate() {
            if edge_at.insert(pair, e).is_some() {
                return Err(MetatreeError::ParallelEdges);
            }
        }
        let len = self.len();
        let mut costs = vec![vec![rat_zero(); len]; instance.k()];
        let mut forced_zero = vec![false; len];
        let mut edge_of_node = vec![None; len];
        for v in 0..len {
            if self.kinds[v] != RoundKind::Leaf {
                continue;
            }
            let (a, b) = self.pair[v];
            if a == b {
                continue;
            }
            match edge_at.get(&(a, b)) {
                Some(&e) => {
                    edge_of_node[v] = Some(e);
                    for (agent, row) in costs.iter_mut().enumerate() {
                        row[v] = instance.cost(agent, e).clone();
                    }
                }
                None => forced_zero[v] = true,
            }
        }
        let round_tree =
            RoundTree::new(self.kinds.clone(), self.children.clone(), costs, forced_zero)
                .expect("shape is well formed");
        Ok(MetaNest { round_tree, edge_of_node })
    }

    /// Kept node ids (sorted) of the subtree that routes exactly this path:
    /// each choose level picks the path's middle vertex.
    pub fn path_to_subtree(&self, instance: &Instance, path: &StPath) -> Vec<usize> {
        let verts = path.vertices(instance);
        let mut keep = Vec::new();
        self.mark(0, &verts, &mut keep);
        keep.sort_unstable();
        keep
    }

    fn mark(&self, node: usize, verts: &[VertexId], keep: &mut Vec<usize>) {
        keep.push(node);
        let hops = verts.len() - 1;
        debug_assert_eq!(self.pair[node], (verts[0], verts[hops]));
        match self.kinds[node] {
            RoundKind::Leaf => debug_assert!(hops <= 1),
            RoundKind::Choose => {
                let mid = hops / 2;
                let merge = self.children[node][verts[mid]];
                keep.push(merge);
                let (left, right) = (self.children[merge][0], self.children[merge][1]);
                self.mark(left, &verts[..=mid], keep);
                self.mark(right, &verts[mid..], keep);
            }
            RoundKind::All => unreachable!("merges are entered through their split"),
        }
    }

    /// Reads the routed walk off a feasible subtree and shortcuts repeated
    /// vertices away. Edge ids refer to the instance the nest was built on.
    pub fn subtree_to_path(
        &self,
        instance: &Instance,
        nest: &MetaNest,
        kept: &[usize],
    ) -> Result<StPath, MetatreeError> {
        let mut mask = vec![false; self.len()];
        for &v in kept {
            mask[v] = true;
        }
        if !mask[0] {
            return Err(MetatreeError::Subtree(0));
        }
        // In-order leaf sweep; validates the kept set on the way down.
        let mut walk: Vec<EdgeId> = Vec::new();
        let mut stack = vec![0usize];
        while let Some(v) = stack.pop() {
            match self.kinds[v] {
                RoundKind::Leaf => {
                    if nest.round_tree.forced_zero(v) {
                        return Err(MetatreeError::Subtree(v));
                    }
                    if let Some(e) = nest.edge_of_node[v] {
                        walk.push(e);
                    }
                }
                RoundKind::Choose => {
                    let mut picked = None;
                    for &c in &self.children[v] {
                        if mask[c] {
                            if picked.is_some() {
                                return Err(MetatreeError::Subtree(v));
                            }
                            picked = Some(c);
                        }
                    }
                    match picked {
                        Some(c) => stack.push(c),
                        None => return Err(MetatreeError::Subtree(v)),
                    }
                }
                RoundKind::All => {
                    for &c in self.children[v].iter().rev() {
                        if !mask[c] {
                            return Err(MetatreeError::Subtree(v));
                        }
                        stack.push(c);
                    }
                }
            }
        }
        let edges = shortcut_walk(instance, &walk);
        StPath::new(instance, edges).map_err(|_| MetatreeError::Subtree(0))
    }
}

/// Everything the rounding step needs: the cost-annotated tree and the leaf
/// to edge table.
#[derive(Debug, Clone)]
pub struct MetaNest {
    pub round_tree: RoundTree,
    pub edge_of_node: Vec<Option<EdgeId>>,
}

/// Collapses a source-to-sink walk to a simple path: on revisiting a vertex,
/// everything since its first visit is dropped. Costs are nonnegative, so
/// the result never costs more than the walk.
fn shortcut_walk(instance: &Instance, walk: &[EdgeId]) -> Vec<EdgeId> {
    let mut trail: Vec<EdgeId> = Vec::new();
    let mut seen_at: HashMap<VertexId, usize> = HashMap::new();
    seen_at.insert(instance.source(), 0);
    for &e in walk {
        let (tail, head) = instance.edge(e);
        debug_assert_eq!(
            tail,
            trail.last().map_or(instance.source(), |&last| instance.edge(last).1),
            "walk edges must be contiguous"
        );
        match seen_at.get(&head).copied() {
            Some(pos) => {
                for dropped in trail.drain(pos..) {
                    let (_, h) = instance.edge(dropped);
                    seen_at.remove(&h);
                }
                seen_at.insert(head, pos);
            }
            None => {
                trail.push(e);
                seen_at.insert(head, trail.len());
            }
        }
        if head == instance.sink() {
            break;
        }
    }
    trail
}

fn meta_probe(
    pruned: &Instance,
    shape: &MetaShape,
    gs: &Rat,
) -> Option<(Vec<Rat>, MetaNest, Vec<EdgeId>)> {
    let (trunc, trunc_map) = truncate_edges(pruned, gs);
    let nest = shape.instantiate(&trunc).expect("pruned instance is simple");
    let model = build_tree_lp(&nest.round_tree, gs, CostRows::SeriesOnly);
    match solve_feasibility(&model) {
        Verdict::Feasible(x) => Some((x, nest, trunc_map)),
        Verdict::Infeasible => None,
    }
}

/// General-graph pipeline: split parallel edges, build the shape once, run
/// the halving search with per-guess leaf reclassification, round, shortcut.
pub fn solve_metatree(
    instance: &Instance,
    opts: &SolveOptions,
    node_cap: u128,
) -> Result<SolveReport, SolveError> {
    let (simple, origin) = desugar_parallel_edges(instance);
    let (pruned, prune_map) = prune_off_path_edges(&simple);
    if pruned.m() == 0 {
        return Err(SolveError::NoPath);
    }
    let shape = match MetaShape::build(pruned.n(), pruned.source(), pruned.sink(), node_cap) {
        Ok(shape) => shape,
        Err(MetatreeError::TooLarge { needed, cap }) => {
            return Err(SolveError::TooLarge { needed, cap })
        }
        Err(other) => unreachable!("shape build only fails on size: {other}"),
    };

    let result = match doubling_search(&pruned.sum_guess(), |gs| meta_probe(&pruned, &shape, gs)) {
        Ok(result) => result,
        Err(DoublingError::NeverFeasible) => return Err(SolveError::NoPath),
        Err(DoublingError::Stalled) => return Err(SolveError::Stalled),
    };
    let (x, nest, trunc_map) = result.witness;
    let rounded = round_with_retries(&nest.round_tree, &x, &result.gs_star, opts.trials, opts.seed)?;

    let (trunc, _) = truncate_edges(&pruned, &result.gs_star);
    let local = shape
        .subtree_to_path(&trunc, &nest, &rounded.outcome.nodes)
        .expect("rounded nodes form a feasible subtree");
    let mut edges: Vec<EdgeId> = local
        .edges()
        .iter()
        .map(|&e| origin[prune_map[trunc_map[e]]])
        .collect();
    // Both halves of a split parallel edge map back to the same original id.
    edges.dedup();
    let path = StPath::new(instance, edges).expect("mapped path stays valid");
    let value = minimax_value(instance, &path);
    Ok(SolveReport {
        path,
        value,
        gs_star: result.gs_star,
        probes: result.probes,
        height: nest.round_tree.choose_height(),
        trials: rounded.trials,
        tail_hits: rounded.tail_hits,
    })
}

/// Moment and tail statistics of the rounding stage at the search's final
/// guess, for empirical comparison against the proved ceilings.
pub fn metatree_moment_report(
    instance: &Instance,
    node_cap: u128,
    trials: usize,
    seed: u64,
) -> Result<MomentReport, SolveError> {
    let (simple, _) = desugar_parallel_edges(instance);
    let (pruned, _) = prune_off_path_edges(&simple);
    if pruned.m() == 0 {
        return Err(SolveError::NoPath);
    }
    let shape = match MetaShape::build(pruned.n(), pruned.source(), pruned.sink(), node_cap) {
        Ok(shape) => shape,
        Err(MetatreeError::TooLarge { needed, cap }) => {
            return Err(SolveError::TooLarge { needed, cap })
        }
        Err(other) => unreachable!("shape build only fails on size: {other}"),
    };
    let result = match doubling_search(&pruned.sum_guess(), |gs| meta_probe(&pruned, &shape, gs)) {
        Ok(result) => result,
        Err(DoublingError::NeverFeasible) => return Err(SolveError::NoPath),
        Err(DoublingError::Stalled) => return Err(SolveError::Stalled),
    };
    let (x, nest, _) = result.witness;
    Ok(moment_check(&nest.round_tree, &x, &result.gs_star, trials, seed)?)
}
