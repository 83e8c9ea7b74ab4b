//! Problem instances: a directed multigraph with terminals and one
//! nonnegative cost row per agent, plus the exact path oracles every other
//! module is checked against.

use crate::ratio::{format_rat, parse_rat, rat_to_f64, rat_zero, Rat};
use crate::textfmt::{bracket_list, parse_usize, quote, unquote, Lines, TextError};
use num_traits::Zero;
use std::fmt::Write as _;

pub type VertexId = usize;
pub type EdgeId = usize;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InstanceError {
    #[error("text format: {0}")]
    Text(#[from] TextError),
    #[error("unsupported version `{0}`")]
    Version(String),
    #[error("vertex count must be at least 2")]
    TooFewVertices,
    #[error("terminal out of range")]
    TerminalOutOfRange,
    #[error("source and sink must differ")]
    EqualTerminals,
    #[error("edge {0} has an endpoint out of range")]
    EndpointOutOfRange(EdgeId),
    #[error("edge {0} is a self-loop")]
    SelfLoop(EdgeId),
    #[error("source has incoming edge {0}")]
    SourceHasIncoming(EdgeId),
    #[error("sink has outgoing edge {0}")]
    SinkHasOutgoing(EdgeId),
    #[error("need at least one agent")]
    NoAgents,
    #[error("cost row {0} has wrong length")]
    CostRowShape(usize),
    #[error("negative cost for agent {agent} edge {edge}")]
    NegativeCost { agent: usize, edge: EdgeId },
    #[error("cost literal: {0}")]
    Number(#[from] crate::ratio::NumberError),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PathError {
    #[error("path is empty")]
    Empty,
    #[error("edge index {0} out of range")]
    EdgeOutOfRange(usize),
    #[error("edges {0} and {1} do not chain")]
    Broken(usize, usize),
    #[error("path does not start at the source")]
    WrongStart,
    #[error("path does not end at the sink")]
    WrongEnd,
    #[error("vertex {0} repeats")]
    Revisit(VertexId),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("enumeration exceeded cap of {cap} paths")]
pub struct CapExceeded {
    pub cap: usize,
}

/// A directed multigraph with distinguished terminals and per-agent costs.
///
/// Invariants (enforced by [`Instance::new`] and at load): the source has no
/// incoming edge, the sink no outgoing edge, and every cost is nonnegative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    n: usize,
    source: VertexId,
    sink: VertexId,
    edges: Vec<(VertexId, VertexId)>,
    /// One row per agent, one column per edge.
    costs: Vec<Vec<Rat>>,
}

impl Instance {
    pub fn new(
        n: usize,
        source: VertexId,
        sink: VertexId,
        edges: Vec<(VertexId, VertexId)>,
        costs: Vec<Vec<Rat>>,
    ) -> Result<Self, InstanceError> {
        let inst = Instance { n, source, sink, edges, costs };
        inst.validate()?;
        Ok(inst)
    }

    fn validate(&self) -> Result<(), InstanceError> {
        if self.n < 2 {
            return Err(InstanceError::TooFewVertices);
        }
        if self.source >= self.n || self.sink >= self.n {
            return Err(InstanceError::TerminalOutOfRange);
        }
        if self.source == self.sink {
            return Err(InstanceError::EqualTerminals);
        }
        for (e, &(tail, head)) in self.edges.iter().enumerate() {
            if tail >= self.n || head >= self.n {
                return Err(InstanceError::EndpointOutOfRange(e));
            }
            if tail == head {
                return Err(InstanceError::SelfLoop(e));
            }
            if head == self.source {
                return Err(InstanceError::SourceHasIncoming(e));
            }
            if tail == self.sink {
                return Err(InstanceError::SinkHasOutgoing(e));
            }
        }
        if self.costs.is_empty() {
            return Err(InstanceError::NoAgents);
        }
        for (agent, row) in self.costs.iter().enumerate() {
            if row.len() != self.edges.len() {
                return Err(InstanceError::CostRowShape(agent));
            }
            for (edge, c) in row.iter().enumerate() {
                if c < &rat_zero() {
                    return Err(InstanceError::NegativeCost { agent, edge });
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn k(&self) -> usize {
        self.costs.len()
    }

    pub fn source(&self) -> VertexId {
        self.source
    }

    pub fn sink(&self) -> VertexId {
        self.sink
    }

    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.edges
    }

    pub fn edge(&self, e: EdgeId) -> (VertexId, VertexId) {
        self.edges[e]
    }

    pub fn cost(&self, agent: usize, e: EdgeId) -> &Rat {
        &self.costs[agent][e]
    }

    pub fn cost_rows(&self) -> &[Vec<Rat>] {
        &self.costs
    }

    /// Outgoing adjacency, edge ids ascending per vertex.
    pub fn out_edges(&self) -> Vec<Vec<EdgeId>> {
        let mut out = vec![Vec::new(); self.n];
        for (e, &(tail, _)) in self.edges.iter().enumerate() {
            out[tail].push(e);
        }
        out
    }

    /// Largest per-agent total cost; the starting guess for halving searches.
    pub fn sum_guess(&self) -> Rat {
        self.costs
            .iter()
            .map(|row| row.iter().fold(rat_zero(), |acc, c| acc + c))
            .max()
            .expect("at least one agent")
    }

    /// Restriction to an edge subset, with ids remapped via the returned table
    /// (`new edge id -> old edge id`).
    pub fn restrict_edges(&self, keep: &[bool]) -> (Instance, Vec<EdgeId>) {
        assert_eq!(keep.len(), self.m());
        let mut edges = Vec::new();
        let mut back = Vec::new();
        for (e, &(tail, head)) in self.edges.iter().enumerate() {
            if keep[e] {
                edges.push((tail, head));
                back.push(e);
            }
        }
        let costs = self
            .costs
            .iter()
            .map(|row| back.iter().map(|&e| row[e].clone()).collect())
            .collect();
        let inst = Instance { n: self.n, source: self.source, sink: self.sink, edges, costs };
        (inst, back)
    }
}

/// An s-t path stored as the sequence of edge ids it traverses.
///
/// Construction checks chaining, the terminals, and simplicity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct StPath(Vec<EdgeId>);

impl StPath {
    pub fn new(instance: &Instance, edges: Vec<EdgeId>) -> Result<Self, PathError> {
        validate_walk(instance, &edges, true)?;
        Ok(StPath(edges))
    }

    pub fn edges(&self) -> &[EdgeId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn vertices(&self, instance: &Instance) -> Vec<VertexId> {
        let mut v = vec![instance.edge(self.0[0]).0];
        for &e in &self.0 {
            v.push(instance.edge(e).1);
        }
        v
    }
}

fn validate_walk(instance: &Instance, edges: &[EdgeId], simple: bool) -> Result<(), PathError> {
    if edges.is_empty() {
        return Err(PathError::Empty);
    }
    for &e in edges {
        if e >= instance.m() {
            return Err(PathError::EdgeOutOfRange(e));
        }
    }
    if instance.edge(edges[0]).0 != instance.source() {
        return Err(PathError::WrongStart);
    }
    if instance.edge(*edges.last().unwrap()).1 != instance.sink() {
        return Err(PathError::WrongEnd);
    }
    for pair in edges.windows(2) {
        if instance.edge(pair[0]).1 != instance.edge(pair[1]).0 {
            return Err(PathError::Broken(pair[0], pair[1]));
        }
    }
    if simple {
        let mut seen = vec![false; instance.n()];
        seen[instance.source()] = true;
        for &e in edges {
            let head = instance.edge(e).1;
            if seen[head] {
                return Err(PathError::Revisit(head));
            }
            seen[head] = true;
        }
    }
    Ok(())
}

/// Per-agent total cost of a path.
pub fn path_cost(instance: &Instance, path: &StPath) -> Vec<Rat> {
    (0..instance.k())
        .map(|i| path.edges().iter().fold(rat_zero(), |acc, &e| acc + instance.cost(i, e)))
        .collect()
}

/// The objective value of a path: its worst agent's total.
pub fn minimax_value(instance: &Instance, path: &StPath) -> Rat {
    path_cost(instance, path).into_iter().max().expect("at least one agent")
}

/// All simple s-t paths in ascending lexicographic edge-id order, stopping
/// after `cap` paths. The flag reports whether the cap truncated the list.
pub fn enumerate_simple_st_paths(instance: &Instance, cap: usize) -> (Vec<StPath>, bool) {
    let mut paths = Vec::new();
    let mut truncated = false;
    visit_simple_paths(instance, &mut |edges| {
        if paths.len() >= cap {
            truncated = true;
            return false;
        }
        paths.push(StPath(edges.to_vec()));
        true
    });
    (paths, truncated)
}

/// Depth-first walk over simple s-t paths in lexicographic order. The visitor
/// returns `false` to stop the traversal.
fn visit_simple_paths(instance: &Instance, visit: &mut dyn FnMut(&[EdgeId]) -> bool) {
    let out = instance.out_edges();
    let mut stack: Vec<EdgeId> = Vec::new();
    let mut seen = vec![false; instance.n()];
    seen[instance.source()] = true;
    // Iterative DFS; frames hold the next adjacency slot to try.
    let mut frames: Vec<(VertexId, usize)> = vec![(instance.source(), 0)];
    while let Some(&mut (v, ref mut slot)) = frames.last_mut() {
        if v == instance.sink() {
            if !visit(&stack) {
                return;
            }
            frames.pop();
            if let Some(e) = stack.pop() {
                seen[instance.edge(e).1] = false;
            }
            continue;
        }
        let mut advanced = false;
        while *slot < out[v].len() {
            let e = out[v][*slot];
            *slot += 1;
            let head = instance.edge(e).1;
            if !seen[head] {
                seen[head] = true;
                stack.push(e);
                frames.push((head, 0));
                advanced = true;
                break;
            }
        }
        if !advanced {
            frames.pop();
            if let Some(e) = stack.pop() {
                seen[instance.edge(e).1] = false;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BruteForceResult {
    pub best: Option<StPath>,
    pub value: Option<Rat>,
    pub paths_seen: usize,
}

/// Exact minimax optimum by exhaustive path enumeration.
///
/// Ties resolve to the lexicographically smallest optimal path because the
/// traversal is lexicographic and only strict improvements replace the
/// incumbent. Errors out loudly when the cap is hit.
pub fn brute_force_minimax(instance: &Instance, cap: usize) -> Result<BruteForceResult, CapExceeded> {
    let k = instance.k();
    let mut best: Option<(Rat, Vec<EdgeId>)> = None;
    let mut count = 0usize;
    let mut over = false;
    visit_simple_paths(instance, &mut |edges| {
        count += 1;
        if count > cap {
            over = true;
            return false;
        }
        let mut worst = rat_zero();
        for i in 0..k {
            let total = edges.iter().fold(rat_zero(), |acc, &e| acc + instance.cost(i, e));
            if total > worst {
                worst = total;
            }
        }
        match &best {
            Some((incumbent, _)) if *incumbent <= worst => {}
            _ => best = Some((worst, edges.to_vec())),
        }
        true
    });
    if over {
        return Err(CapExceeded { cap });
    }
    match best {
        Some((value, edges)) => Ok(BruteForceResult {
            best: Some(StPath(edges)),
            value: Some(value),
            paths_seen: count,
        }),
        None => Ok(BruteForceResult { best: None, value: None, paths_seen: 0 }),
    }
}

/// Shortest s-t path under the summed cost `sum_i c_i`, ties broken by the
/// lexicographically smallest edge sequence. This is the classic baseline
/// whose minimax value is within a factor k of optimal.
pub fn sum_baseline(instance: &Instance) -> Option<StPath> {
    let m = instance.m();
    let weights: Vec<Rat> = (0..m)
        .map(|e| (0..instance.k()).fold(rat_zero(), |acc, i| acc + instance.cost(i, e)))
        .collect();
    let dist_from_s = dijkstra(instance, &weights, instance.source(), false)?;
    let dist_to_t = dijkstra(instance, &weights, instance.sink(), true)?;
    let total = dist_from_s[instance.sink()].clone()?;
    // Lexicographic DFS restricted to edges on some shortest path; the first
    // complete simple path found is the lexicographically smallest optimum.
    let out = instance.out_edges();
    let mut stack = Vec::new();
    let mut seen = vec![false; instance.n()];
    seen[instance.source()] = true;
    fn go(
        instance: &Instance,
        out: &[Vec<EdgeId>],
        weights: &[Rat],
        dist_from_s: &[Option<Rat>],
        dist_to_t: &[Option<Rat>],
        total: &Rat,
        v: VertexId,
        acc: &Rat,
        stack: &mut Vec<EdgeId>,
        seen: &mut Vec<bool>,
    ) -> bool {
        if v == instance.sink() {
            return true;
        }
        for &e in &out[v] {
            let head = instance.edge(e).1;
            if seen[head] {
                continue;
            }
            let through = acc + &weights[e];
            let tight = match &dist_to_t[head] {
                Some(rest) => &through + rest == *total,
                None => false,
            };
            if !tight {
                continue;
            }
            seen[head] = true;
            stack.push(e);
            if go(instance, out, weights, dist_from_s, dist_to_t, total, head, &through, stack, seen) {
                return true;
            }
            stack.pop();
            seen[head] = false;
        }
        false
    }
    let found = go(
        instance,
        &out,
        &weights,
        &dist_from_s,
        &dist_to_t,
        &total,
        instance.source(),
        &rat_zero(),
        &mut stack,
        &mut seen,
    );
    if found {
        Some(StPath(stack))
    } else {
        None
    }
}

fn dijkstra(instance: &Instance, weights: &[Rat], from: VertexId, reverse: bool) -> Option<Vec<Option<Rat>>> {
    let n = instance.n();
    let mut adj = vec![Vec::new(); n];
    for (e, &(tail, head)) in instance.edges().iter().enumerate() {
        if reverse {
            adj[head].push((tail, e));
        } else {
            adj[tail].push((head, e));
        }
    }
    let mut dist: Vec<Option<Rat>> = vec![None; n];
    dist[from] = Some(rat_zero());
    let mut done = vec![false; n];
    loop {
        let mut pick: Option<(VertexId, Rat)> = None;
        for v in 0..n {
            if done[v] {
                continue;
            }
            if let Some(d) = &dist[v] {
                match &pick {
                    Some((_, best)) if best <= d => {}
                    _ => pick = Some((v, d.clone())),
                }
            }
        }
        let Some((v, d)) = pick else { break };
        done[v] = true;
        for &(to, e) in &adj[v] {
            let cand = &d + &weights[e];
            match &dist[to] {
                Some(old) if *old <= cand => {}
                _ => dist[to] = Some(cand),
            }
        }
    }
    Some(dist)
}

/// Rewrites every group of parallel edges through fresh midpoints so the
/// result is a simple graph with identical path costs. Edge `e` becomes the
/// pair `(tail, mid)`, `(mid, head)` with the original cost on the first leg.
pub fn desugar_parallel_edges(instance: &Instance) -> (Instance, Vec<EdgeId>) {
    use std::collections::HashMap;
    let mut groups: HashMap<(VertexId, VertexId), usize> = HashMap::new();
    for &(tail, head) in instance.edges() {
        *groups.entry((tail, head)).or_insert(0) += 1;
    }
    let mut n = instance.n();
    let mut edges = Vec::new();
    let mut cost_of: Vec<(EdgeId, bool)> = Vec::new(); // (source edge, carries cost)
    for (e, &(tail, head)) in instance.edges().iter().enumerate() {
        if groups[&(tail, head)] > 1 {
            let mid = n;
            n += 1;
            edges.push((tail, mid));
            cost_of.push((e, true));
            edges.push((mid, head));
            cost_of.push((e, false));
        } else {
            edges.push((tail, head));
            cost_of.push((e, true));
        }
    }
    let costs = (0..instance.k())
        .map(|i| {
            cost_of
                .iter()
                .map(|&(e, carries)| if carries { instance.cost(i, e).clone() } else { rat_zero() })
                .collect()
        })
        .collect();
    let origin = cost_of.iter().map(|&(e, _)| e).collect();
    (Instance { n, source: instance.source(), sink: instance.sink(), edges, costs }, origin)
}

impl Instance {
    /// Canonical text form. Byte-identical for equal instances; `from_text`
    /// of the output reproduces the instance exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "version: 1").unwrap();
        writeln!(out, "n: {}", self.n).unwrap();
        writeln!(out, "source: {}", self.source).unwrap();
        writeln!(out, "sink: {}", self.sink).unwrap();
        if self.edges.is_empty() {
            writeln!(out, "edges: []").unwrap();
        } else {
            writeln!(out, "edges:").unwrap();
            for &(tail, head) in &self.edges {
                writeln!(out, "  - [{}, {}]", tail, head).unwrap();
            }
        }
        writeln!(out, "costs:").unwrap();
        for row in &self.costs {
            let cells: Vec<String> = row.iter().map(|c| quote(&format_rat(c))).collect();
            writeln!(out, "  - [{}]", cells.join(", ")).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, InstanceError> {
        let mut lines = Lines::new(text);
        let version = lines.scalar("version")?;
        if version != "1" {
            return Err(InstanceError::Version(version.to_string()));
        }
        let line = lines.line_no();
        let n = parse_usize(lines.scalar("n")?, line)?;
        let line = lines.line_no();
        let source = parse_usize(lines.scalar("source")?, line)?;
        let line = lines.line_no();
        let sink = parse_usize(lines.scalar("sink")?, line)?;
        let edge_items = lines.list("edges")?;
        let mut edges = Vec::with_capacity(edge_items.len());
        for item in edge_items {
            let cells = bracket_list(item).ok_or(TextError::BadItem { line: 0 })?;
            if cells.len() != 2 {
                return Err(TextError::BadItem { line: 0 }.into());
            }
            edges.push((parse_usize(&cells[0], 0)?, parse_usize(&cells[1], 0)?));
        }
        let cost_items = lines.list("costs")?;
        let mut costs = Vec::with_capacity(cost_items.len());
        for item in cost_items {
            let cells = bracket_list(item).ok_or(TextError::BadItem { line: 0 })?;
            let mut row = Vec::with_capacity(cells.len());
            for cell in &cells {
                let literal = unquote(cell).ok_or(TextError::BadItem { line: 0 })?;
                row.push(parse_rat(literal)?);
            }
            costs.push(row);
        }
        lines.finish()?;
        Instance::new(n, source, sink, edges, costs)
    }
}

/// Convenience float view of a rational (diagnostics only).
pub fn approx(value: &Rat) -> f64 {
    rat_to_f64(value)
}

/// True when all costs are zero for all agents.
pub fn all_costs_zero(instance: &Instance) -> bool {
    instance.cost_rows().iter().all(|row| row.iter().all(|c| c.is_zero()))
}

/// Drops every edge some agent prices above the guess. Any path within
/// budget for all agents uses surviving edges only, so the optimum is
/// preserved whenever the guess is at least the optimum. Returns the
/// truncated instance and the new-to-old edge table.
pub fn truncate_edges(instance: &Instance, guess: &Rat) -> (Instance, Vec<EdgeId>) {
    let keep: Vec<bool> = (0..instance.m())
        .map(|e| (0..instance.k()).all(|i| instance.cost(i, e) <= guess))
        .collect();
    instance.restrict_edges(&keep)
}

/// Keeps only edges whose tail is reachable from the source and whose head
/// reaches the sink. On acyclic graphs exactly the edges lying on some s-t
/// path survive. Returns the pruned instance and the new-to-old edge table.
pub fn prune_off_path_edges(instance: &Instance) -> (Instance, Vec<EdgeId>) {
    let n = instance.n();
    let mut fwd = vec![Vec::new(); n];
    let mut rev = vec![Vec::new(); n];
    for &(tail, head) in instance.edges() {
        fwd[tail].push(head);
        rev[head].push(tail);
    }
    let sweep = |adj: &Vec<Vec<VertexId>>, start: VertexId| {
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen
    };
    let from_source = sweep(&fwd, instance.source());
    let to_sink = sweep(&rev, instance.sink());
    let keep: Vec<bool> = instance
        .edges()
        .iter()
        .map(|&(tail, head)| from_source[tail] && to_sink[head])
        .collect();
    instance.restrict_edges(&keep)
}
