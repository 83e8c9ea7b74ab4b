//! Seeded random instance generators used by the benchmark harness and the
//! statistical tests. All of them are deterministic in the seed.

use crate::hardness::{SetCoverInstance, PickRule, ThreeCnf};
use crate::instance::Instance;
use crate::ratio::{rat_int, Rat};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_cost_rows(rng: &mut ChaCha8Rng, k: usize, m: usize, max_cost: u32) -> Vec<Vec<Rat>> {
    (0..k)
        .map(|_| (0..m).map(|_| rat_int(rng.gen_range(0..=max_cost) as i64)).collect())
        .collect()
}

/// Random simple DAG with vertex 0 as source and n-1 as sink, guaranteed to
/// contain an s-t path. Asks for `m` edges; returns fewer when the vertex
/// count cannot host that many.
pub fn random_dag(seed: u64, n: usize, m: usize, k: usize, max_cost: u32) -> Instance {
    assert!(n >= 2 && k >= 1);
    let mut rng = rng_for(seed);
    let mut present = std::collections::BTreeSet::new();
    let mut edges = Vec::new();
    // Backbone path through a random set of intermediate vertices keeps the
    // instance solvable.
    let mut waypoints: Vec<usize> = (1..n - 1).filter(|_| rng.gen_bool(0.5)).collect();
    waypoints.insert(0, 0);
    waypoints.push(n - 1);
    for w in waypoints.windows(2) {
        if present.insert((w[0], w[1])) {
            edges.push((w[0], w[1]));
        }
    }
    let mut candidates: Vec<(usize, usize)> = (0..n - 1)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|p| !present.contains(p))
        .collect();
    candidates.shuffle(&mut rng);
    for pair in candidates {
        if edges.len() >= m {
            break;
        }
        edges.push(pair);
    }
    edges.sort_unstable();
    let m = edges.len();
    let costs = random_cost_rows(&mut rng, k, m, max_cost);
    Instance::new(n, 0, n - 1, edges, costs).expect("generated DAG is valid")
}

enum Shape {
    Leaf,
    Series(Vec<Shape>),
    Parallel(Vec<Shape>),
}

impl Shape {
    fn edges(&self) -> usize {
        match self {
            Shape::Leaf => 1,
            Shape::Series(cs) | Shape::Parallel(cs) => cs.iter().map(Shape::edges).sum(),
        }
    }

    /// Number of s-t paths, saturating.
    fn paths(&self) -> u128 {
        match self {
            Shape::Leaf => 1,
            Shape::Series(cs) => cs.iter().fold(1u128, |acc, c| acc.saturating_mul(c.paths())),
            Shape::Parallel(cs) => cs.iter().fold(0u128, |acc, c| acc.saturating_add(c.paths())),
        }
    }
}

fn random_shape(rng: &mut ChaCha8Rng, budget: usize, series_bias: f64) -> Shape {
    if budget == 1 {
        return Shape::Leaf;
    }
    let fanout = rng.gen_range(2..=budget.min(4));
    // Random composition of `budget` into `fanout` positive parts.
    let mut cuts: Vec<usize> = Vec::with_capacity(fanout - 1);
    while cuts.len() < fanout - 1 {
        let c = rng.gen_range(1..budget);
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();
    cuts.push(budget);
    let mut parts = Vec::with_capacity(fanout);
    let mut prev = 0;
    for c in cuts {
        parts.push(c - prev);
        prev = c;
    }
    let children = parts.into_iter().map(|p| random_shape(rng, p, series_bias)).collect();
    if rng.gen_bool(series_bias) {
        Shape::Series(children)
    } else {
        Shape::Parallel(children)
    }
}

fn materialize(shape: &Shape, s: usize, t: usize, next: &mut usize, edges: &mut Vec<(usize, usize)>) {
    match shape {
        Shape::Leaf => edges.push((s, t)),
        Shape::Series(cs) => {
            let mut tail = s;
            for (i, c) in cs.iter().enumerate() {
                let head = if i + 1 == cs.len() {
                    t
                } else {
                    let v = *next;
                    *next += 1;
                    v
                };
                materialize(c, tail, head, next, edges);
                tail = head;
            }
        }
        Shape::Parallel(cs) => {
            for c in cs {
                materialize(c, s, t, next, edges);
            }
        }
    }
}

/// Random two-terminal series-parallel instance with exactly `m` edges and
/// at most `path_cap` s-t paths (so exhaustive oracles stay cheap). Source
/// is vertex 0, sink is vertex 1. Parallel leaf pairs produce multi-edges.
pub fn random_sp(seed: u64, m: usize, k: usize, max_cost: u32, path_cap: u128) -> Instance {
    assert!(m >= 1 && k >= 1);
    let mut rng = rng_for(seed);
    let shape = loop {
        // Series bias keeps the path count down; resample until under cap.
        let candidate = random_shape(&mut rng, m, 0.6);
        if candidate.paths() <= path_cap {
            break candidate;
        }
    };
    debug_assert_eq!(shape.edges(), m);
    let mut edges = Vec::with_capacity(m);
    let mut next = 2;
    materialize(&shape, 0, 1, &mut next, &mut edges);
    let costs = random_cost_rows(&mut rng, k, m, max_cost);
    Instance::new(next, 0, 1, edges, costs).expect("generated instance is valid")
}

/// Random DAG of treewidth at most 2: grows a 2-tree (every new vertex is
/// glued to the endpoints of an existing edge), orients edges from older to
/// newer, then deletes random edges while an s-t path survives. Vertex 0 is
/// the source and n-1 the sink; subgraphs of 2-trees keep treewidth <= 2.
pub fn random_tw2(seed: u64, n: usize, target_m: usize, k: usize, max_cost: u32) -> Instance {
    assert!(n >= 2 && k >= 1);
    let mut rng = rng_for(seed);
    let mut edges: Vec<(usize, usize)> = vec![(0, 1)];
    for v in 2..n {
        let &(a, b) = edges[..].choose(&mut rng).expect("nonempty");
        edges.push((a.min(v), a.max(v)));
        edges.push((b.min(v), b.max(v)));
    }
    // Oriented low -> high: vertex 0 has no incoming, n-1 no outgoing, and
    // induction over creation order gives a 0 -> n-1 path.
    let mut order = edges.clone();
    order.shuffle(&mut rng);
    for victim in order {
        if edges.len() <= target_m {
            break;
        }
        let pos = edges.iter().position(|&e| e == victim).expect("edge present");
        let mut kept = edges.clone();
        kept.remove(pos);
        if has_path(n, &kept, 0, n - 1) {
            edges = kept;
        }
    }
    edges.sort_unstable();
    let m = edges.len();
    let costs = random_cost_rows(&mut rng, k, m, max_cost);
    Instance::new(n, 0, n - 1, edges, costs).expect("generated instance is valid")
}

fn has_path(n: usize, edges: &[(usize, usize)], s: usize, t: usize) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![s];
    seen[s] = true;
    while let Some(v) = stack.pop() {
        if v == t {
            return true;
        }
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    false
}

/// Random 3-CNF with distinct variables inside each clause.
pub fn random_3sat(seed: u64, num_vars: usize, num_clauses: usize) -> ThreeCnf {
    assert!(num_vars >= 3);
    let mut rng = rng_for(seed);
    let clauses = (0..num_clauses)
        .map(|_| {
            let mut vars: Vec<usize> = (0..num_vars).collect();
            vars.shuffle(&mut rng);
            let mut lits = [0i32; 3];
            for (slot, &v) in lits.iter_mut().zip(vars.iter().take(3)) {
                let sign = if rng.gen_bool(0.5) { 1 } else { -1 };
                *slot = sign * (v as i32 + 1);
            }
            lits
        })
        .collect();
    ThreeCnf { num_vars, clauses }
}

/// Random pick-one-of-two set cover over `universe` elements and `kappa`
/// collections; each element joins each subset with probability 1/3.
pub fn random_set_cover(seed: u64, universe: usize, kappa: usize) -> SetCoverInstance {
    assert!(kappa >= 1);
    let mut rng = rng_for(seed);
    let collections = (0..kappa)
        .map(|_| {
            (0..2)
                .map(|_| (0..universe).filter(|_| rng.gen_bool(1.0 / 3.0)).collect())
                .collect()
        })
        .collect();
    SetCoverInstance::new(universe, PickRule::OneOfTwo, collections).expect("generated cover is valid")
}
