//! Label algebra for the tree-labeling reduction.
//!
//! Every decomposition node `v` carries a label with two bit fields: one
//! chosen bit per edge homed at `v` and one connectivity bit per ordered pair
//! of distinct bag vertices. A full assignment is consistent when each node's
//! connectivity field equals the transitive closure of its own chosen edges
//! together with the pairs claimed by its children, and the root connects the
//! source to the sink. Consistent assignments are exactly the edge subsets
//! whose subgraph routes the source to the sink, which is what makes the
//! brute-force oracle below a usable cross-check.

use std::collections::{BTreeSet, VecDeque};

use crate::instance::{EdgeId, Instance, StPath, VertexId};
use crate::ratio::{rat_zero, Rat};
use num_traits::Zero;

use super::{assign_highest_nodes, TreeDecomposition, TwError};

/// Default ceiling on any enumerated label or subset space.
pub const DEFAULT_SPACE_CAP: u128 = 1 << 18;

/// Per-node label: chosen bits over the node's own edges (low bits, indexed
/// by position in the node's home list) and connectivity bits over ordered
/// pairs of distinct bag vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeLabel {
    pub chng: u128,
    pub conn: u128,
}

/// One label per decomposition node, indexed by node id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelAssignment(Vec<NodeLabel>);

impl LabelAssignment {
    pub fn new(labels: Vec<NodeLabel>) -> Self {
        LabelAssignment(labels)
    }

    pub fn node(&self, v: usize) -> NodeLabel {
        self.0[v]
    }

    pub fn labels(&self) -> &[NodeLabel] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Label indices of a node and its children (absent for missing children)
/// forming one locally consistent combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triple {
    pub node: usize,
    pub first: Option<usize>,
    pub second: Option<usize>,
}

/// A decomposition plus everything the labeling LP needs: per-node edge
/// homes, guess-normalized costs, and the realizable label set of each node.
#[derive(Debug, Clone)]
pub struct TreeLabelingInstance {
    td: TreeDecomposition,
    homes: Vec<Vec<EdgeId>>,
    endpoints: Vec<(VertexId, VertexId)>,
    norm_costs: Vec<Vec<Rat>>,
    labels: Vec<Vec<NodeLabel>>,
    n: usize,
    k: usize,
    source: VertexId,
    sink: VertexId,
}

impl TreeLabelingInstance {
    pub fn td(&self) -> &TreeDecomposition {
        &self.td
    }

    /// Edges homed at node `v`; bit positions in `chng` follow this order.
    pub fn homes(&self, v: usize) -> &[EdgeId] {
        &self.homes[v]
    }

    pub(crate) fn homes_all(&self) -> &[Vec<EdgeId>] {
        &self.homes
    }

    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.endpoints
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.endpoints.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn source(&self) -> VertexId {
        self.source
    }

    pub fn sink(&self) -> VertexId {
        self.sink
    }

    pub fn norm_cost(&self, agent: usize, e: EdgeId) -> &Rat {
        &self.norm_costs[agent][e]
    }

    /// Realizable labels of node `v`, sorted ascending.
    pub fn labels(&self, v: usize) -> &[NodeLabel] {
        &self.labels[v]
    }

    pub fn label_index(&self, v: usize, label: NodeLabel) -> Option<usize> {
        self.labels[v].binary_search(&label).ok()
    }

    pub fn height(&self) -> usize {
        self.td.height()
    }
}

/// 2^bits, saturating so oversized spaces trip cap checks instead of shifts.
pub(crate) fn pow2_sat(bits: usize) -> u128 {
    if bits >= 128 {
        u128::MAX
    } else {
        1u128 << bits
    }
}

/// Bit position of the ordered pair (p, q) within a sorted bag.
fn pair_bit(bag: &[VertexId], p: VertexId, q: VertexId) -> usize {
    let i = bag.binary_search(&p).expect("pair endpoint lies in the bag");
    let j = bag.binary_search(&q).expect("pair endpoint lies in the bag");
    debug_assert_ne!(i, j, "connectivity pairs are ordered distinct pairs");
    i * (bag.len() - 1) + if j < i { j } else { j - 1 }
}

/// Decode a connectivity mask into ordered vertex pairs.
fn conn_pairs(bag: &[VertexId], conn: u128) -> Vec<(VertexId, VertexId)> {
    let b = bag.len();
    let mut pairs = Vec::new();
    for i in 0..b {
        for j in 0..b {
            if i == j {
                continue;
            }
            let bit = i * (b - 1) + if j < i { j } else { j - 1 };
            if conn & (1u128 << bit) != 0 {
                pairs.push((bag[i], bag[j]));
            }
        }
    }
    pairs
}

/// Transitive closure of the seed pairs, restricted to ordered bag pairs.
///
/// Seeds may mention vertices outside the bag (children's bag vertices act
/// as transit points); the closure runs over the full endpoint universe and
/// only the bag-to-bag reachability is encoded in the result.
fn closure_mask(bag: &[VertexId], seeds: &[(VertexId, VertexId)]) -> u128 {
    let mut verts: Vec<VertexId> = bag.to_vec();
    verts.extend(seeds.iter().flat_map(|&(a, b)| [a, b]));
    verts.sort_unstable();
    verts.dedup();
    assert!(verts.len() <= 128, "closure universe fits in bit rows");
    let idx = |v: VertexId| {
        verts
            .binary_search(&v)
            .expect("universe covers every seed endpoint")
    };
    let mut reach: Vec<u128> = vec![0; verts.len()];
    for &(a, b) in seeds {
        reach[idx(a)] |= 1u128 << idx(b);
    }
    for mid in 0..verts.len() {
        let row = reach[mid];
        let bit = 1u128 << mid;
        for r in reach.iter_mut() {
            if *r & bit != 0 {
                *r |= row;
            }
        }
    }
    let mut mask = 0u128;
    for &p in bag {
        for &q in bag {
            if p != q && reach[idx(p)] & (1u128 << idx(q)) != 0 {
                mask |= 1u128 << pair_bit(bag, p, q);
            }
        }
    }
    mask
}

/// Width of node `v`'s raw label space in bits.
pub fn label_bits(td: &TreeDecomposition, homes: &[Vec<EdgeId>], v: usize) -> usize {
    let b = td.bag(v).len();
    homes[v].len() + b * (b - 1)
}

/// Stream the full raw label space of node `v`, capped.
pub fn enumerate_labels(
    td: &TreeDecomposition,
    homes: &[Vec<EdgeId>],
    v: usize,
    cap: u128,
) -> Result<impl Iterator<Item = NodeLabel>, TwError> {
    let bits = label_bits(td, homes, v);
    let needed = pow2_sat(bits);
    if needed > cap {
        return Err(TwError::SpaceCap { needed, cap });
    }
    let ev = homes[v].len();
    let chng_mask = pow2_sat(ev) - 1;
    Ok((0..needed).map(move |code| NodeLabel {
        chng: code & chng_mask,
        conn: code >> ev,
    }))
}

/// Labels induced by an edge subset, built bottom-up: each node's conn field
/// is the closure of its own chosen edges plus the children's conn pairs.
pub(crate) fn bottom_up_labels(
    td: &TreeDecomposition,
    homes: &[Vec<EdgeId>],
    endpoints: &[(VertexId, VertexId)],
    chosen: &dyn Fn(EdgeId) -> bool,
) -> Vec<NodeLabel> {
    let mut out = vec![NodeLabel { chng: 0, conn: 0 }; td.len()];
    let mut order = td.topological();
    order.reverse();
    for v in order {
        let mut chng = 0u128;
        let mut seeds = Vec::new();
        for (bit, &e) in homes[v].iter().enumerate() {
            if chosen(e) {
                chng |= 1u128 << bit;
                seeds.push(endpoints[e]);
            }
        }
        for &c in td.children(v) {
            seeds.extend(conn_pairs(td.bag(c), out[c].conn));
        }
        out[v] = NodeLabel {
            chng,
            conn: closure_mask(td.bag(v), &seeds),
        };
    }
    out
}

/// Realizable label set per node: all chosen subsets of the node's own edges
/// crossed with the distinct connectivity claims its children can produce.
fn build_label_sets(
    td: &TreeDecomposition,
    homes: &[Vec<EdgeId>],
    endpoints: &[(VertexId, VertexId)],
    cap: u128,
) -> Result<Vec<Vec<NodeLabel>>, TwError> {
    let mut labels: Vec<Vec<NodeLabel>> = vec![Vec::new(); td.len()];
    let mut order = td.topological();
    order.reverse();
    for v in order {
        let child_conns: Vec<(usize, Vec<u128>)> = td
            .children(v)
            .iter()
            .map(|&c| {
                let mut conns: Vec<u128> = labels[c].iter().map(|l| l.conn).collect();
                conns.sort_unstable();
                conns.dedup();
                (c, conns)
            })
            .collect();
        let subsets = pow2_sat(homes[v].len());
        let mut space = subsets;
        for (_, conns) in &child_conns {
            space = space.saturating_mul(conns.len() as u128);
        }
        if space > cap {
            return Err(TwError::SpaceCap { needed: space, cap });
        }
        let mut combos: Vec<Vec<(usize, u128)>> = vec![Vec::new()];
        for (c, conns) in &child_conns {
            let mut next = Vec::with_capacity(combos.len() * conns.len());
            for base in &combos {
                for &conn in conns {
                    let mut row = base.clone();
                    row.push((*c, conn));
                    next.push(row);
                }
            }
            combos = next;
        }
        let mut set = BTreeSet::new();
        for combo in &combos {
            let mut base_seeds: Vec<(VertexId, VertexId)> = Vec::new();
            for &(c, conn) in combo {
                base_seeds.extend(conn_pairs(td.bag(c), conn));
            }
            for subset in 0..subsets {
                let mut seeds = base_seeds.clone();
                for (bit, &e) in homes[v].iter().enumerate() {
                    if subset & (1u128 << bit) != 0 {
                        seeds.push(endpoints[e]);
                    }
                }
                set.insert(NodeLabel {
                    chng: subset,
                    conn: closure_mask(td.bag(v), &seeds),
                });
            }
        }
        labels[v] = set.into_iter().collect();
    }
    Ok(labels)
}

/// Attach labels to a decomposition of `inst` with costs normalized by the
/// guess. A zero guess is only meaningful when every cost is already zero
/// (the caller truncates first); costs then pass through unscaled.
pub fn build_tree_labeling(
    inst: &Instance,
    td: &TreeDecomposition,
    gs: &Rat,
    space_cap: u128,
) -> Result<TreeLabelingInstance, TwError> {
    let homes = assign_highest_nodes(td, inst)?;
    let norm_costs: Vec<Vec<Rat>> = (0..inst.k())
        .map(|agent| {
            (0..inst.m())
                .map(|e| {
                    let c = inst.cost(agent, e).clone();
                    if gs.is_zero() {
                        debug_assert!(c.is_zero(), "zero guess requires zero costs");
                        c
                    } else {
                        c / gs.clone()
                    }
                })
                .collect()
        })
        .collect();
    let labels = build_label_sets(td, &homes, inst.edges(), space_cap)?;
    Ok(TreeLabelingInstance {
        td: td.clone(),
        homes,
        endpoints: inst.edges().to_vec(),
        norm_costs,
        labels,
        n: inst.n(),
        k: inst.k(),
        source: inst.source(),
        sink: inst.sink(),
    })
}

/// Normalized cost an agent pays for the edges a label chooses at one node.
pub fn label_cost(
    tli: &TreeLabelingInstance,
    v: usize,
    label: NodeLabel,
    agent: usize,
) -> Rat {
    let mut total = rat_zero();
    for (bit, &e) in tli.homes(v).iter().enumerate() {
        if label.chng & (1u128 << bit) != 0 {
            total += tli.norm_cost(agent, e).clone();
        }
    }
    total
}

/// Total normalized cost of an assignment for one agent. Edge homes
/// partition the edge set, so summing per node counts each edge once.
pub fn assignment_cost(tli: &TreeLabelingInstance, la: &LabelAssignment, agent: usize) -> Rat {
    let mut total = rat_zero();
    for v in 0..la.len() {
        total += label_cost(tli, v, la.node(v), agent);
    }
    total
}

/// Local consistency of a node label against its children's labels: the
/// conn field must equal the closure of chosen edges plus child claims, and
/// the root must connect source to sink.
pub fn triple_is_consistent(
    tli: &TreeLabelingInstance,
    v: usize,
    label: NodeLabel,
    child_labels: &[NodeLabel],
) -> bool {
    let td = tli.td();
    let kids = td.children(v);
    if child_labels.len() != kids.len() {
        return false;
    }
    let ev = tli.homes(v).len();
    if pow2_sat(ev) <= label.chng {
        return false;
    }
    let mut seeds = Vec::new();
    for (bit, &e) in tli.homes(v).iter().enumerate() {
        if label.chng & (1u128 << bit) != 0 {
            seeds.push(tli.edges()[e]);
        }
    }
    for (i, &c) in kids.iter().enumerate() {
        seeds.extend(conn_pairs(td.bag(c), child_labels[i].conn));
    }
    if label.conn != closure_mask(td.bag(v), &seeds) {
        return false;
    }
    if v == td.root() {
        let st = pair_bit(td.bag(v), tli.source(), tli.sink());
        if label.conn & (1u128 << st) == 0 {
            return false;
        }
    }
    true
}

/// All locally consistent label combinations at node `v`, as indices into
/// the realizable label sets. At the root only source-sink-connecting
/// combinations survive.
pub fn consistent_triples(
    tli: &TreeLabelingInstance,
    v: usize,
    cap: u128,
) -> Result<Vec<Triple>, TwError> {
    let td = tli.td();
    let kids = td.children(v);
    let mut space = pow2_sat(tli.homes(v).len());
    for &c in kids {
        space = space.saturating_mul(tli.labels(c).len() as u128);
    }
    if space > cap {
        return Err(TwError::SpaceCap { needed: space, cap });
    }
    let mut child_indices: Vec<Vec<usize>> = vec![Vec::new()];
    for &c in kids {
        let mut next = Vec::new();
        for base in &child_indices {
            for i in 0..tli.labels(c).len() {
                let mut row = base.clone();
                row.push(i);
                next.push(row);
            }
        }
        child_indices = next;
    }
    let subsets = pow2_sat(tli.homes(v).len());
    let mut out = Vec::new();
    for combo in &child_indices {
        let mut base_seeds: Vec<(VertexId, VertexId)> = Vec::new();
        for (slot, &c) in kids.iter().enumerate() {
            let conn = tli.labels(c)[combo[slot]].conn;
            base_seeds.extend(conn_pairs(td.bag(c), conn));
        }
        for subset in 0..subsets {
            let mut seeds = base_seeds.clone();
            for (bit, &e) in tli.homes(v).iter().enumerate() {
                if subset & (1u128 << bit) != 0 {
                    seeds.push(tli.edges()[e]);
                }
            }
            let label = NodeLabel {
                chng: subset,
                conn: closure_mask(td.bag(v), &seeds),
            };
            if v == td.root() {
                let st = pair_bit(td.bag(v), tli.source(), tli.sink());
                if label.conn & (1u128 << st) == 0 {
                    continue;
                }
            }
            let node = tli
                .label_index(v, label)
                .expect("closure of realizable parts is realizable");
            out.push(Triple {
                node,
                first: combo.first().copied(),
                second: combo.get(1).copied(),
            });
        }
    }
    Ok(out)
}

/// Labeling induced by a path: chosen bits mark the path's edges at their
/// home nodes, connectivity follows bottom-up.
pub fn path_to_labeling(inst: &Instance, td: &TreeDecomposition, path: &StPath) -> LabelAssignment {
    let homes = assign_highest_nodes(td, inst).expect("decomposition covers the instance");
    let on_path: BTreeSet<EdgeId> = path.edges().iter().copied().collect();
    LabelAssignment::new(bottom_up_labels(td, &homes, inst.edges(), &|e| {
        on_path.contains(&e)
    }))
}

/// Extract a source-sink path from the subgraph of chosen edges. BFS with
/// neighbors visited in (head, edge id) order keeps the choice deterministic
/// when the subgraph offers several paths.
pub fn labeling_to_path(
    inst: &Instance,
    td: &TreeDecomposition,
    la: &LabelAssignment,
) -> Result<StPath, TwError> {
    let homes = assign_highest_nodes(td, inst).expect("decomposition covers the instance");
    let mut adj: Vec<Vec<(VertexId, EdgeId)>> = vec![Vec::new(); inst.n()];
    for (v, ev) in homes.iter().enumerate() {
        for (bit, &e) in ev.iter().enumerate() {
            if la.node(v).chng & (1u128 << bit) != 0 {
                let (a, b) = inst.edge(e);
                adj[a].push((b, e));
            }
        }
    }
    for row in adj.iter_mut() {
        row.sort_unstable();
    }
    let mut prev: Vec<Option<EdgeId>> = vec![None; inst.n()];
    let mut seen = vec![false; inst.n()];
    let mut queue = VecDeque::new();
    seen[inst.source()] = true;
    queue.push_back(inst.source());
    while let Some(v) = queue.pop_front() {
        for &(w, e) in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                prev[w] = Some(e);
                queue.push_back(w);
            }
        }
    }
    if !seen[inst.sink()] {
        return Err(TwError::NoPathInSubgraph);
    }
    let mut edges = Vec::new();
    let mut v = inst.sink();
    while v != inst.source() {
        let e = prev[v].expect("reached vertices carry a predecessor edge");
        edges.push(e);
        v = inst.edge(e).0;
    }
    edges.reverse();
    Ok(StPath::new(inst, edges).expect("predecessor chain forms a simple source-sink path"))
}

/// Independent consistency validator. Re-derives each node's connectivity
/// via a pair-set saturation loop instead of the bitmask closure used
/// elsewhere.
pub fn check_label_assignment(
    inst: &Instance,
    td: &TreeDecomposition,
    la: &LabelAssignment,
) -> Result<(), TwError> {
    assert_eq!(la.len(), td.len(), "one label per decomposition node");
    let homes = assign_highest_nodes(td, inst).expect("decomposition covers the instance");
    for v in 0..td.len() {
        let bag = td.bag(v);
        let label = la.node(v);
        let npairs = bag.len() * (bag.len() - 1);
        if label.chng >= pow2_sat(homes[v].len()) || label.conn >= pow2_sat(npairs) {
            return Err(TwError::Inconsistent(v));
        }
        let mut facts: BTreeSet<(VertexId, VertexId)> = BTreeSet::new();
        for (bit, &e) in homes[v].iter().enumerate() {
            if label.chng & (1u128 << bit) != 0 {
                let (a, b) = inst.edge(e);
                // A chosen edge must be reflected as a connectivity claim.
                if label.conn & (1u128 << pair_bit(bag, a, b)) == 0 {
                    return Err(TwError::Inconsistent(v));
                }
                facts.insert((a, b));
            }
        }
        for &c in td.children(v) {
            facts.extend(conn_pairs(td.bag(c), la.node(c).conn));
        }
        loop {
            let mut grew = false;
            let snapshot: Vec<_> = facts.iter().copied().collect();
            for &(a, b) in &snapshot {
                for &(c, d) in &snapshot {
                    if b == c && a != d && facts.insert((a, d)) {
                        grew = true;
                    }
                }
            }
            if !grew {
                break;
            }
        }
        for &p in bag {
            for &q in bag {
                if p == q {
                    continue;
                }
                let claimed = label.conn & (1u128 << pair_bit(bag, p, q)) != 0;
                if claimed != facts.contains(&(p, q)) {
                    return Err(TwError::Inconsistent(v));
                }
            }
        }
    }
    let root = td.root();
    let st = pair_bit(td.bag(root), inst.source(), inst.sink());
    if la.node(root).conn & (1u128 << st) == 0 {
        return Err(TwError::Inconsistent(root));
    }
    Ok(())
}

fn mask_reaches_sink(tli: &TreeLabelingInstance, mask: u128) -> bool {
    let mut adj: Vec<Vec<VertexId>> = vec![Vec::new(); tli.n()];
    for (e, &(a, b)) in tli.edges().iter().enumerate() {
        if mask & (1u128 << e) != 0 {
            adj[a].push(b);
        }
    }
    let mut seen = vec![false; tli.n()];
    let mut stack = vec![tli.source()];
    seen[tli.source()] = true;
    while let Some(v) = stack.pop() {
        if v == tli.sink() {
            return true;
        }
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    false
}

/// Exhaustive optimum over consistent assignments: every source-to-sink edge
/// subset, valued at the worst agent's normalized cost. Ties keep the
/// smallest subset mask. Returns `None` when no subset reaches the sink.
pub fn brute_force_tree_labeling(
    tli: &TreeLabelingInstance,
    cap: u128,
) -> Result<Option<(Rat, LabelAssignment)>, TwError> {
    let m = tli.m();
    let needed = pow2_sat(m);
    if needed > cap {
        return Err(TwError::SpaceCap { needed, cap });
    }
    let mut best: Option<(Rat, u128)> = None;
    for mask in 0..needed {
        if !mask_reaches_sink(tli, mask) {
            continue;
        }
        let mut worst = rat_zero();
        for agent in 0..tli.k() {
            let mut total = rat_zero();
            for e in 0..m {
                if mask & (1u128 << e) != 0 {
                    total += tli.norm_cost(agent, e).clone();
                }
            }
            if total > worst {
                worst = total;
            }
        }
        match &best {
            Some((cur, _)) if *cur <= worst => {}
            _ => best = Some((worst, mask)),
        }
    }
    Ok(best.map(|(value, mask)| {
        let la = LabelAssignment::new(bottom_up_labels(
            tli.td(),
            tli.homes_all(),
            tli.edges(),
            &|e| mask & (1u128 << e) != 0,
        ));
        (value, la)
    }))
}
