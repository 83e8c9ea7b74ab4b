//! Generators and brute-force certifiers for the lower-bound families: the
//! integrality-gap instances, the self-similar series-parallel family, and
//! the set-cover reductions behind the maximin hardness results.

use crate::instance::{enumerate_simple_st_paths, path_cost, Instance, InstanceError};
use crate::ratio::{rat_one, rat_zero, Rat};
use crate::textfmt::{parse_usize, Lines, TextError};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HardnessError {
    #[error("need at least one agent/element")]
    EmptyUniverse,
    #[error("need at least one collection")]
    EmptyCollections,
    #[error("collection {0} has the wrong arity")]
    CollectionArity(usize),
    #[error("element {0} out of range")]
    ElementOutOfRange(usize),
    #[error("instance would exceed the edge cap of {0}")]
    EdgeCap(usize),
    #[error("enumeration exceeded cap of {0}")]
    CapExceeded(usize),
    #[error("wrong pick rule for this reduction")]
    WrongPickRule,
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("text format: {0}")]
    Text(#[from] TextError),
    #[error("unsupported version `{0}`")]
    Version(String),
}

/// Two vertices joined by k parallel edges; agent i pays 1 only on edge i.
///
/// The integral optimum is 1 while the natural flow relaxation spreads 1/k
/// over every edge, so the relaxation undershoots by a factor of k.
pub fn gen_two_vertex_gap(k: usize) -> Instance {
    assert!(k >= 1);
    let edges = vec![(0, 1); k];
    let costs = (0..k)
        .map(|i| (0..k).map(|e| if e == i { rat_one() } else { rat_zero() }).collect())
        .collect();
    Instance::new(2, 0, 1, edges, costs).expect("gap instance is valid")
}

/// k vertex-disjoint s-t paths, each of `len` edges; agent i pays 1 on every
/// edge of path i and nothing elsewhere. The optimum is `len`, yet guessing a
/// bound of 1 stays feasible for the truncated flow relaxation.
pub fn gen_disjoint_paths_gap(k: usize, len: usize) -> Instance {
    assert!(k >= 1 && len >= 1);
    let source = 0;
    let sink = 1;
    let mut edges = Vec::new();
    let mut owner = Vec::new();
    let mut next = 2;
    for path in 0..k {
        let mut tail = source;
        for step in 0..len {
            let head = if step + 1 == len {
                sink
            } else {
                let v = next;
                next += 1;
                v
            };
            edges.push((tail, head));
            owner.push(path);
            tail = head;
        }
    }
    let costs = (0..k)
        .map(|i| owner.iter().map(|&p| if p == i { rat_one() } else { rat_zero() }).collect())
        .collect();
    Instance::new(next, source, sink, edges, costs).expect("gap instance is valid")
}

const SUBSTITUTION_EDGE_CAP: usize = 1_000_000;

/// Member of the self-similar series-parallel family: the base graph chains
/// three blocks, each block running three two-edge paths in parallel
/// (18 edges). Every round replaces each edge with a copy of the base graph,
/// which deepens the canonical decomposition tree by exactly two levels.
/// `rounds = 0` returns the base graph. Costs are zero; the family is about
/// structure, not values.
pub fn gen_substitution_family(rounds: usize) -> Result<Instance, HardnessError> {
    let mut m = 18usize;
    for _ in 0..rounds {
        m = m.checked_mul(18).filter(|&v| v <= SUBSTITUTION_EDGE_CAP).ok_or(HardnessError::EdgeCap(SUBSTITUTION_EDGE_CAP))?;
    }
    let mut edges = Vec::with_capacity(m);
    let mut next = 2usize;
    emit_base(rounds, 0, 1, &mut next, &mut edges);
    debug_assert_eq!(edges.len(), m);
    let costs = vec![vec![rat_zero(); edges.len()]];
    Ok(Instance::new(next, 0, 1, edges, costs)?)
}

/// Expands one base graph between `s` and `t`, recursing `level` more times
/// into every edge slot.
fn emit_base(level: usize, s: usize, t: usize, next: &mut usize, edges: &mut Vec<(usize, usize)>) {
    let mut block_tail = s;
    for block in 0..3 {
        let block_head = if block == 2 {
            t
        } else {
            let v = *next;
            *next += 1;
            v
        };
        for _branch in 0..3 {
            let mid = *next;
            *next += 1;
            emit_slot(level, block_tail, mid, next, edges);
            emit_slot(level, mid, block_head, next, edges);
        }
        block_tail = block_head;
    }
}

fn emit_slot(level: usize, s: usize, t: usize, next: &mut usize, edges: &mut Vec<(usize, usize)>) {
    if level == 0 {
        edges.push((s, t));
    } else {
        emit_base(level - 1, s, t, next, edges);
    }
}

/// How many subsets each collection offers and how many a solution must take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PickRule {
    /// Two subsets per collection, pick exactly one.
    OneOfTwo,
    /// Three subsets per collection, pick exactly two.
    TwoOfThree,
}

impl PickRule {
    pub fn arity(self) -> usize {
        match self {
            PickRule::OneOfTwo => 2,
            PickRule::TwoOfThree => 3,
        }
    }

    pub fn picks(self) -> usize {
        match self {
            PickRule::OneOfTwo => 1,
            PickRule::TwoOfThree => 2,
        }
    }
}

/// Constrained set cover: from each collection pick a fixed number of its
/// subsets; the picks must jointly cover the universe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetCoverInstance {
    pub universe: usize,
    pub pick: PickRule,
    /// `collections[i]` lists this collection's subsets, each a sorted list
    /// of element ids below `universe`.
    pub collections: Vec<Vec<Vec<usize>>>,
}

impl SetCoverInstance {
    pub fn new(
        universe: usize,
        pick: PickRule,
        collections: Vec<Vec<Vec<usize>>>,
    ) -> Result<Self, HardnessError> {
        if collections.is_empty() {
            return Err(HardnessError::EmptyCollections);
        }
        for (i, coll) in collections.iter().enumerate() {
            if coll.len() != pick.arity() {
                return Err(HardnessError::CollectionArity(i));
            }
            for subset in coll {
                for &e in subset {
                    if e >= universe {
                        return Err(HardnessError::ElementOutOfRange(e));
                    }
                }
            }
        }
        let collections = collections
            .into_iter()
            .map(|coll| {
                coll.into_iter()
                    .map(|mut s| {
                        s.sort_unstable();
                        s.dedup();
                        s
                    })
                    .collect()
            })
            .collect();
        Ok(SetCoverInstance { universe, pick, collections })
    }

    pub fn num_collections(&self) -> usize {
        self.collections.len()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "version: 1").unwrap();
        writeln!(out, "universe: {}", self.universe).unwrap();
        writeln!(out, "pick: {}", self.pick.picks()).unwrap();
        writeln!(out, "collections:").unwrap();
        for coll in &self.collections {
            let subsets: Vec<String> = coll
                .iter()
                .map(|s| {
                    let cells: Vec<String> = s.iter().map(|e| e.to_string()).collect();
                    format!("[{}]", cells.join(", "))
                })
                .collect();
            writeln!(out, "  - [{}]", subsets.join(", ")).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, HardnessError> {
        let mut lines = Lines::new(text);
        let version = lines.scalar("version")?;
        if version != "1" {
            return Err(HardnessError::Version(version.to_string()));
        }
        let line = lines.line_no();
        let universe = parse_usize(lines.scalar("universe")?, line)?;
        let line = lines.line_no();
        let picks = parse_usize(lines.scalar("pick")?, line)?;
        let pick = match picks {
            1 => PickRule::OneOfTwo,
            2 => PickRule::TwoOfThree,
            _ => return Err(TextError::BadValue { line, msg: format!("bad pick `{}`", picks) }.into()),
        };
        let items = lines.list("collections")?;
        let mut collections = Vec::with_capacity(items.len());
        for item in items {
            collections.push(parse_nested_list(item).ok_or(TextError::BadItem { line: 0 })?);
        }
        lines.finish()?;
        SetCoverInstance::new(universe, pick, collections)
    }
}

/// Parses `[[0, 1], [2], []]` into nested integer lists.
fn parse_nested_list(text: &str) -> Option<Vec<Vec<usize>>> {
    let inner = text.trim().strip_prefix('[')?.strip_suffix(']')?.trim();
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut start = None;
    for (i, ch) in inner.char_indices() {
        match ch {
            '[' => {
                if depth == 0 {
                    start = Some(i + 1);
                }
                depth += 1;
            }
            ']' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    let body = inner[start?..i].trim();
                    let mut subset = Vec::new();
                    if !body.is_empty() {
                        for cell in body.split(',') {
                            subset.push(cell.trim().parse().ok()?);
                        }
                    }
                    out.push(subset);
                    start = None;
                }
            }
            _ => {}
        }
    }
    if depth != 0 {
        return None;
    }
    Some(out)
}

/// Enumerates pick combinations; true when some combination covers all of
/// the universe.
pub fn cover_exists(sc: &SetCoverInstance) -> bool {
    let mut covered = vec![0usize; sc.universe];
    fn go(sc: &SetCoverInstance, i: usize, covered: &mut Vec<usize>, missing: &mut usize) -> bool {
        if i == sc.collections.len() {
            return *missing == 0;
        }
        let arity = sc.pick.arity();
        let picks = sc.pick.picks();
        // All `picks`-sized subsets of the collection's `arity` options.
        let mut choice: Vec<usize> = (0..picks).collect();
        loop {
            let mut touched = Vec::new();
            for &c in &choice {
                for &e in &sc.collections[i][c] {
                    if covered[e] == 0 {
                        *missing -= 1;
                    }
                    covered[e] += 1;
                    touched.push(e);
                }
            }
            if go(sc, i + 1, covered, missing) {
                return true;
            }
            for &e in touched.iter().rev() {
                covered[e] -= 1;
                if covered[e] == 0 {
                    *missing += 1;
                }
            }
            // Next combination in lexicographic order.
            let mut pos = picks;
            loop {
                if pos == 0 {
                    return false;
                }
                pos -= 1;
                if choice[pos] + (picks - pos) <= arity - 1 {
                    choice[pos] += 1;
                    for j in pos + 1..picks {
                        choice[j] = choice[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }
    let mut missing = sc.universe;
    go(sc, 0, &mut covered, &mut missing)
}

/// Three-literal CNF; literal `+v`/`-v` refers to variable `v - 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreeCnf {
    pub num_vars: usize,
    pub clauses: Vec<[i32; 3]>,
}

pub fn sat_brute_force(cnf: &ThreeCnf) -> bool {
    assert!(cnf.num_vars <= 20, "brute-force SAT is for desk-scale formulas");
    for mask in 0u32..(1 << cnf.num_vars) {
        let ok = cnf.clauses.iter().all(|clause| {
            clause.iter().any(|&lit| {
                let var = lit.unsigned_abs() as usize - 1;
                let val = mask >> var & 1 == 1;
                if lit > 0 {
                    val
                } else {
                    !val
                }
            })
        });
        if ok {
            return true;
        }
    }
    false
}

/// One collection per variable: the positive subset holds the clauses the
/// positive literal satisfies, the negative subset likewise. Picking one
/// subset per collection that covers every clause is exactly a satisfying
/// assignment, and every clause element lands in exactly three subsets.
pub fn gen_2choose1_from_3sat(cnf: &ThreeCnf) -> Result<SetCoverInstance, HardnessError> {
    if cnf.num_vars == 0 {
        return Err(HardnessError::EmptyCollections);
    }
    let mut collections = vec![vec![Vec::new(), Vec::new()]; cnf.num_vars];
    for (c, clause) in cnf.clauses.iter().enumerate() {
        for &lit in clause {
            let var = lit.unsigned_abs() as usize - 1;
            let side = if lit > 0 { 0 } else { 1 };
            collections[var][side].push(c);
        }
    }
    SetCoverInstance::new(cnf.clauses.len(), PickRule::OneOfTwo, collections)
}

/// Adds one fresh element per collection plus a singleton subset holding it.
/// Taking two of the three subsets must include the singleton (nothing else
/// covers the fresh element), so the instance is equivalent to the original
/// pick-one-of-two instance.
pub fn gen_3choose2_from_2choose1(sc: &SetCoverInstance) -> Result<SetCoverInstance, HardnessError> {
    if sc.pick != PickRule::OneOfTwo {
        return Err(HardnessError::WrongPickRule);
    }
    let kappa = sc.collections.len();
    let universe = sc.universe + kappa;
    let collections = sc
        .collections
        .iter()
        .enumerate()
        .map(|(i, coll)| vec![coll[0].clone(), coll[1].clone(), vec![sc.universe + i]])
        .collect();
    SetCoverInstance::new(universe, PickRule::TwoOfThree, collections)
}

/// Vertex-weighted undirected graph for maximin independent set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WisInstance {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    /// `weights[agent][vertex]`.
    pub weights: Vec<Vec<Rat>>,
}

/// Edge-weighted undirected graph for maximin spanning tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanningTreeInstance {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    /// `weights[agent][edge]`.
    pub weights: Vec<Vec<Rat>>,
}

/// A chain of diamonds, one per collection. Diamond j routes either through
/// its first subset's vertex or its second's; the entry edge of a subset
/// costs 1 to every element the subset contains. A path's worst-off element
/// earns more than zero exactly when the chosen subsets cover the universe.
pub fn gen_maximin_path(sc: &SetCoverInstance) -> Result<Instance, HardnessError> {
    if sc.pick != PickRule::OneOfTwo {
        return Err(HardnessError::WrongPickRule);
    }
    if sc.universe == 0 {
        return Err(HardnessError::EmptyUniverse);
    }
    let kappa = sc.collections.len();
    let source = 0;
    let sink = 1;
    // Per diamond: entry vertex, two subset vertices, exit vertex.
    let vertex = |j: usize, slot: usize| 2 + j * 4 + slot;
    let mut edges = Vec::new();
    // Edge payload: Some((collection, side)) marks an entry edge.
    let mut tag: Vec<Option<(usize, usize)>> = Vec::new();
    edges.push((source, vertex(0, 0)));
    tag.push(None);
    for j in 0..kappa {
        let entry = vertex(j, 0);
        let top = vertex(j, 1);
        let bottom = vertex(j, 2);
        let exit = vertex(j, 3);
        edges.push((entry, top));
        tag.push(Some((j, 0)));
        edges.push((entry, bottom));
        tag.push(Some((j, 1)));
        edges.push((top, exit));
        tag.push(None);
        edges.push((bottom, exit));
        tag.push(None);
        let next = if j + 1 == kappa { sink } else { vertex(j + 1, 0) };
        edges.push((exit, next));
        tag.push(None);
    }
    let n = 2 + kappa * 4;
    let costs = (0..sc.universe)
        .map(|element| {
            tag.iter()
                .map(|slot| match slot {
                    Some((j, side)) if sc.collections[*j][*side].contains(&element) => rat_one(),
                    _ => rat_zero(),
                })
                .collect()
        })
        .collect();
    Ok(Instance::new(n, source, sink, edges, costs)?)
}

/// Disjoint edges, one per collection, endpoints weighted by subset
/// membership. An independent set keeps at most one endpoint per edge; its
/// worst-off element is positive exactly when a cover exists.
pub fn gen_maximin_wis_interval(sc: &SetCoverInstance) -> Result<WisInstance, HardnessError> {
    if sc.pick != PickRule::OneOfTwo {
        return Err(HardnessError::WrongPickRule);
    }
    if sc.universe == 0 {
        return Err(HardnessError::EmptyUniverse);
    }
    let kappa = sc.collections.len();
    let n = 2 * kappa;
    let edges = (0..kappa).map(|j| (2 * j, 2 * j + 1)).collect();
    let weights = (0..sc.universe)
        .map(|element| {
            (0..n)
                .map(|v| {
                    let (j, side) = (v / 2, v % 2);
                    if sc.collections[j][side].contains(&element) {
                        rat_one()
                    } else {
                        rat_zero()
                    }
                })
                .collect()
        })
        .collect();
    Ok(WisInstance { n, edges, weights })
}

/// Same reduction shaped as a tree: per collection a zero-weight anchor
/// adjacent to the second subset's vertex, the two subset vertices adjacent
/// to each other, consecutive collections linked through the anchors.
pub fn gen_maximin_wis_tree(sc: &SetCoverInstance) -> Result<WisInstance, HardnessError> {
    if sc.pick != PickRule::OneOfTwo {
        return Err(HardnessError::WrongPickRule);
    }
    if sc.universe == 0 {
        return Err(HardnessError::EmptyUniverse);
    }
    let kappa = sc.collections.len();
    // Vertices per collection: anchor, first subset, second subset.
    let n = 3 * kappa;
    let anchor = |j: usize| 3 * j;
    let subset = |j: usize, side: usize| 3 * j + 1 + side;
    let mut edges = Vec::new();
    for j in 0..kappa {
        edges.push((anchor(j), subset(j, 1)));
        edges.push((subset(j, 0), subset(j, 1)));
        if j + 1 < kappa {
            edges.push((subset(j, 1), anchor(j + 1)));
        }
    }
    let weights = (0..sc.universe)
        .map(|element| {
            (0..n)
                .map(|v| {
                    if v % 3 == 0 {
                        return rat_zero();
                    }
                    let (j, side) = (v / 3, v % 3 - 1);
                    if sc.collections[j][side].contains(&element) {
                        rat_one()
                    } else {
                        rat_zero()
                    }
                })
                .collect()
        })
        .collect();
    Ok(WisInstance { n, edges, weights })
}

/// A chain of triangles, one per pick-two-of-three collection; each triangle
/// edge stands for one subset and costs 1 to that subset's elements. Every
/// spanning tree keeps exactly two edges per triangle.
pub fn gen_maximin_spanning_tree(sc: &SetCoverInstance) -> Result<SpanningTreeInstance, HardnessError> {
    if sc.pick != PickRule::TwoOfThree {
        return Err(HardnessError::WrongPickRule);
    }
    if sc.universe == 0 {
        return Err(HardnessError::EmptyUniverse);
    }
    let kappa = sc.collections.len();
    let n = 3 * kappa;
    let corner = |j: usize, c: usize| 3 * j + c;
    let mut edges = Vec::new();
    let mut tag: Vec<Option<(usize, usize)>> = Vec::new();
    for j in 0..kappa {
        edges.push((corner(j, 0), corner(j, 1)));
        tag.push(Some((j, 0)));
        edges.push((corner(j, 1), corner(j, 2)));
        tag.push(Some((j, 1)));
        edges.push((corner(j, 2), corner(j, 0)));
        tag.push(Some((j, 2)));
        if j + 1 < kappa {
            edges.push((corner(j, 2), corner(j + 1, 0)));
            tag.push(None);
        }
    }
    let weights = (0..sc.universe)
        .map(|element| {
            tag.iter()
                .map(|slot| match slot {
                    Some((j, side)) if sc.collections[*j][*side].contains(&element) => rat_one(),
                    _ => rat_zero(),
                })
                .collect()
        })
        .collect();
    Ok(SpanningTreeInstance { n, edges, weights })
}

/// The three shapes of maximin instance the reductions produce.
#[derive(Debug, Clone)]
pub enum MaximinInstance {
    Path(Instance),
    Wis(WisInstance),
    SpanningTree(SpanningTreeInstance),
}

const MAXIMIN_CAP: usize = 2_000_000;

/// Exhaustive maximin value: the best solution's worst-off agent.
pub fn brute_force_maximin(mi: &MaximinInstance) -> Result<Rat, HardnessError> {
    match mi {
        MaximinInstance::Path(inst) => {
            let (paths, truncated) = enumerate_simple_st_paths(inst, MAXIMIN_CAP);
            if truncated {
                return Err(HardnessError::CapExceeded(MAXIMIN_CAP));
            }
            let mut best = rat_zero();
            for p in &paths {
                let worst = path_cost(inst, p).into_iter().min().expect("agents");
                if worst > best {
                    best = worst;
                }
            }
            Ok(best)
        }
        MaximinInstance::Wis(wis) => {
            let mut adj = vec![Vec::new(); wis.n];
            for &(a, b) in &wis.edges {
                adj[a].push(b);
                adj[b].push(a);
            }
            let k = wis.weights.len();
            let mut totals = vec![rat_zero(); k];
            let mut best = rat_zero();
            let mut blocked = vec![0usize; wis.n];
            let mut count = 0usize;
            fn go(
                v: usize,
                wis: &WisInstance,
                adj: &[Vec<usize>],
                blocked: &mut Vec<usize>,
                totals: &mut Vec<Rat>,
                best: &mut Rat,
                count: &mut usize,
            ) -> Result<(), HardnessError> {
                if v == wis.n {
                    *count += 1;
                    if *count > MAXIMIN_CAP {
                        return Err(HardnessError::CapExceeded(MAXIMIN_CAP));
                    }
                    let worst = totals.iter().min().expect("agents");
                    if *worst > *best {
                        *best = worst.clone();
                    }
                    return Ok(());
                }
                // Skip v.
                go(v + 1, wis, adj, blocked, totals, best, count)?;
                // Take v when no chosen neighbor blocks it.
                if blocked[v] == 0 {
                    for u in &adj[v] {
                        blocked[*u] += 1;
                    }
                    for (i, t) in totals.iter_mut().enumerate() {
                        *t += &wis.weights[i][v];
                    }
                    go(v + 1, wis, adj, blocked, totals, best, count)?;
                    for u in &adj[v] {
                        blocked[*u] -= 1;
                    }
                    for (i, t) in totals.iter_mut().enumerate() {
                        *t -= &wis.weights[i][v];
                    }
                }
                Ok(())
            }
            go(0, wis, &adj, &mut blocked, &mut totals, &mut best, &mut count)?;
            Ok(best)
        }
        MaximinInstance::SpanningTree(st) => {
            let trees = enumerate_spanning_trees(st.n, &st.edges, MAXIMIN_CAP)?;
            let mut best: Option<Rat> = None;
            for tree in &trees {
                let worst = st
                    .weights
                    .iter()
                    .map(|row| tree.iter().fold(rat_zero(), |acc, &e| acc + &row[e]))
                    .min()
                    .expect("agents");
                match &best {
                    Some(b) if *b >= worst => {}
                    _ => best = Some(worst),
                }
            }
            // A graph with no spanning tree has maximin value zero by
            // convention; the generated chains are always connected.
            Ok(best.unwrap_or_else(rat_zero))
        }
    }
}

/// All spanning trees as edge-id lists, by recursive include/exclude with a
/// connectivity prune.
fn enumerate_spanning_trees(
    n: usize,
    edges: &[(usize, usize)],
    cap: usize,
) -> Result<Vec<Vec<usize>>, HardnessError> {
    struct Dsu(Vec<usize>);
    impl Dsu {
        fn find(&mut self, x: usize) -> usize {
            if self.0[x] != x {
                let r = self.find(self.0[x]);
                self.0[x] = r;
            }
            self.0[x]
        }
    }
    fn connected_with(n: usize, edges: &[(usize, usize)], allowed: &[bool]) -> bool {
        let mut dsu = Dsu((0..n).collect());
        let mut parts = n;
        for (e, &(a, b)) in edges.iter().enumerate() {
            if allowed[e] {
                let (ra, rb) = (dsu.find(a), dsu.find(b));
                if ra != rb {
                    dsu.0[ra] = rb;
                    parts -= 1;
                }
            }
        }
        parts == 1
    }
    fn go(
        e: usize,
        n: usize,
        edges: &[(usize, usize)],
        chosen: &mut Vec<usize>,
        allowed: &mut Vec<bool>,
        out: &mut Vec<Vec<usize>>,
        cap: usize,
    ) -> Result<(), HardnessError> {
        if chosen.len() == n - 1 {
            if connected_with(n, edges, &chosen_mask(edges.len(), chosen)) {
                out.push(chosen.clone());
                if out.len() > cap {
                    return Err(HardnessError::CapExceeded(cap));
                }
            }
            return Ok(());
        }
        if e == edges.len() {
            return Ok(());
        }
        // Prune: remaining allowed edges must suffice to connect.
        if !connected_with(n, edges, allowed) {
            return Ok(());
        }
        chosen.push(e);
        go(e + 1, n, edges, chosen, allowed, out, cap)?;
        chosen.pop();
        allowed[e] = false;
        go(e + 1, n, edges, chosen, allowed, out, cap)?;
        allowed[e] = true;
        Ok(())
    }
    fn chosen_mask(m: usize, chosen: &[usize]) -> Vec<bool> {
        let mut mask = vec![false; m];
        for &e in chosen {
            mask[e] = true;
        }
        mask
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut chosen = Vec::new();
    let mut allowed = vec![true; edges.len()];
    // Acyclicity is implied: n-1 edges that connect n vertices form a tree.
    go(0, n, edges, &mut chosen, &mut allowed, &mut out, cap)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{brute_force_minimax, minimax_value};
    use crate::ratio::rat_int;

    #[test]
    fn two_vertex_gap_shape() {
        let inst = gen_two_vertex_gap(5);
        assert_eq!((inst.n(), inst.m(), inst.k()), (2, 5, 5));
        let res = brute_force_minimax(&inst, 100).unwrap();
        assert_eq!(res.value, Some(rat_one()));
    }

    #[test]
    fn disjoint_paths_gap_shape() {
        let k = 5;
        let inst = gen_disjoint_paths_gap(k, k);
        assert_eq!(inst.m(), k * k);
        assert_eq!(inst.n(), 2 + k * (k - 1));
        let res = brute_force_minimax(&inst, 1000).unwrap();
        assert_eq!(res.value, Some(rat_int(k as i64)));
    }

    #[test]
    fn substitution_family_grows_by_factor_18() {
        let base = gen_substitution_family(0).unwrap();
        assert_eq!(base.m(), 18);
        let one = gen_substitution_family(1).unwrap();
        assert_eq!(one.m(), 18 * 18);
        assert!(matches!(gen_substitution_family(4), Err(HardnessError::EdgeCap(_))));
    }

    #[test]
    fn set_cover_text_round_trip() {
        let sc = SetCoverInstance::new(
            3,
            PickRule::OneOfTwo,
            vec![vec![vec![0, 1], vec![2]], vec![vec![], vec![1, 2]]],
        )
        .unwrap();
        let text = sc.to_text();
        let again = SetCoverInstance::from_text(&text).unwrap();
        assert_eq!(again, sc);
        assert_eq!(again.to_text(), text);
    }

    #[test]
    fn cover_exists_basic() {
        let sc = SetCoverInstance::new(
            2,
            PickRule::OneOfTwo,
            vec![vec![vec![0], vec![1]], vec![vec![1], vec![0]]],
        )
        .unwrap();
        assert!(cover_exists(&sc));
        let sc = SetCoverInstance::new(
            2,
            PickRule::OneOfTwo,
            vec![vec![vec![0], vec![0]], vec![vec![0], vec![0]]],
        )
        .unwrap();
        assert!(!cover_exists(&sc));
    }

    #[test]
    fn sat_reduction_matches_sat_verdict() {
        // (x1 or x2 or x3) and (not x1 or x2 or not x3): satisfiable.
        let cnf = ThreeCnf { num_vars: 3, clauses: vec![[1, 2, 3], [-1, 2, -3]] };
        assert!(sat_brute_force(&cnf));
        let sc = gen_2choose1_from_3sat(&cnf).unwrap();
        assert!(cover_exists(&sc));
        // Forced contradiction on one variable.
        let cnf = ThreeCnf {
            num_vars: 2,
            clauses: vec![[1, 1, 1], [-1, -1, -1], [2, 2, 2]],
        };
        assert!(!sat_brute_force(&cnf));
        let sc = gen_2choose1_from_3sat(&cnf).unwrap();
        assert!(!cover_exists(&sc));
    }

    #[test]
    fn each_clause_lands_in_three_subsets() {
        let cnf = ThreeCnf { num_vars: 4, clauses: vec![[1, -2, 3], [2, 3, -4]] };
        let sc = gen_2choose1_from_3sat(&cnf).unwrap();
        for element in 0..sc.universe {
            let count: usize = sc
                .collections
                .iter()
                .flat_map(|c| c.iter())
                .filter(|s| s.contains(&element))
                .count();
            assert_eq!(count, 3);
        }
    }

    #[test]
    fn three_choose_two_preserves_coverability() {
        for (cols, expect) in [
            (vec![vec![vec![0], vec![1]], vec![vec![1], vec![0]]], true),
            (vec![vec![vec![0], vec![0]], vec![vec![0], vec![0]]], false),
        ] {
            let sc = SetCoverInstance::new(2, PickRule::OneOfTwo, cols).unwrap();
            let sc3 = gen_3choose2_from_2choose1(&sc).unwrap();
            assert_eq!(cover_exists(&sc3), expect);
            assert_eq!(cover_exists(&sc), expect);
        }
    }

    #[test]
    fn maximin_path_single_collection() {
        let sc = SetCoverInstance::new(1, PickRule::OneOfTwo, vec![vec![vec![0], vec![]]]).unwrap();
        let inst = gen_maximin_path(&sc).unwrap();
        // One diamond: two s-t paths.
        let (paths, _) = enumerate_simple_st_paths(&inst, 10);
        assert_eq!(paths.len(), 2);
        let value = brute_force_maximin(&MaximinInstance::Path(inst)).unwrap();
        assert_eq!(value, rat_one());
    }

    #[test]
    fn maximin_path_value_counts_repeat_coverage() {
        // Element 0 sits in the picked subset of both collections.
        let sc = SetCoverInstance::new(
            1,
            PickRule::OneOfTwo,
            vec![vec![vec![0], vec![]], vec![vec![0], vec![]]],
        )
        .unwrap();
        let inst = gen_maximin_path(&sc).unwrap();
        let value = brute_force_maximin(&MaximinInstance::Path(inst)).unwrap();
        assert_eq!(value, rat_int(2));
    }

    #[test]
    fn spanning_tree_triangle_has_three_trees() {
        let sc = SetCoverInstance::new(
            1,
            PickRule::TwoOfThree,
            vec![vec![vec![0], vec![], vec![0]]],
        )
        .unwrap();
        let st = gen_maximin_spanning_tree(&sc).unwrap();
        let trees = enumerate_spanning_trees(st.n, &st.edges, 100).unwrap();
        assert_eq!(trees.len(), 3);
        let value = brute_force_maximin(&MaximinInstance::SpanningTree(st)).unwrap();
        // Best pair of edges covers element 0 twice.
        assert_eq!(value, rat_int(2));
    }

    #[test]
    fn maximin_dichotomy_section() {
        // A coverable and an uncoverable instance, across all four shapes.
        let yes = SetCoverInstance::new(
            2,
            PickRule::OneOfTwo,
            vec![vec![vec![0], vec![1]], vec![vec![1], vec![0]]],
        )
        .unwrap();
        let no = SetCoverInstance::new(
            2,
            PickRule::OneOfTwo,
            vec![vec![vec![0], vec![0]], vec![vec![0], vec![0]]],
        )
        .unwrap();
        for (sc, expect) in [(yes, true), (no, false)] {
            let path = brute_force_maximin(&MaximinInstance::Path(gen_maximin_path(&sc).unwrap())).unwrap();
            assert_eq!(path > rat_zero(), expect);
            let tree =
                brute_force_maximin(&MaximinInstance::Wis(gen_maximin_wis_tree(&sc).unwrap())).unwrap();
            assert_eq!(tree > rat_zero(), expect);
            let interval =
                brute_force_maximin(&MaximinInstance::Wis(gen_maximin_wis_interval(&sc).unwrap())).unwrap();
            assert_eq!(interval > rat_zero(), expect);
            let sc3 = gen_3choose2_from_2choose1(&sc).unwrap();
            let st = brute_force_maximin(&MaximinInstance::SpanningTree(
                gen_maximin_spanning_tree(&sc3).unwrap(),
            ))
            .unwrap();
            assert_eq!(st > rat_zero(), expect);
        }
    }

    #[test]
    fn wis_tree_is_a_tree() {
        let sc = SetCoverInstance::new(
            2,
            PickRule::OneOfTwo,
            vec![vec![vec![0], vec![1]], vec![vec![1], vec![0]]],
        )
        .unwrap();
        let wis = gen_maximin_wis_tree(&sc).unwrap();
        assert_eq!(wis.edges.len(), wis.n - 1);
        // Connectivity via union-find.
        let mut parent: Vec<usize> = (0..wis.n).collect();
        fn find(p: &mut Vec<usize>, x: usize) -> usize {
            if p[x] != x {
                let r = find(p, p[x]);
                p[x] = r;
            }
            p[x]
        }
        for &(a, b) in &wis.edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            assert_ne!(ra, rb, "cycle in tree reduction");
            parent[ra] = rb;
        }
    }

    #[test]
    fn gap_instance_paths_attain_claimed_values() {
        let inst = gen_two_vertex_gap(3);
        let (paths, _) = enumerate_simple_st_paths(&inst, 10);
        for p in &paths {
            assert_eq!(minimax_value(&inst, p), rat_one());
        }
    }
}
