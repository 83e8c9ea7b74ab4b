//! Dependent randomized rounding over choice trees, plus the moment and
//! tail-bound diagnostics that back the approximation guarantee.
//!
//! A `RoundTree` abstracts every structure we round on: series-parallel
//! decomposition trees, the recursive split trees for general graphs, and
//! the expanded label trees for bounded treewidth. `All` nodes keep every
//! child (series composition), `Choose` nodes keep exactly one.

use crate::instance::Instance;
use crate::ratio::{rat_to_f64, rat_zero, Rat};
use crate::sp::{DecompTree, NodeKind};
use num_traits::Zero;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundKind {
    /// Keep exactly one child, picked proportionally to the LP values.
    Choose,
    /// Keep every child.
    All,
    Leaf,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RoundTreeError {
    #[error("tree has no nodes")]
    Empty,
    #[error("node {0}: children must come after their parent")]
    NotPreorder(usize),
    #[error("node {0} has two parents")]
    TwoParents(usize),
    #[error("node {0} is unreachable from the root")]
    Unreachable(usize),
    #[error("leaf {0} has children")]
    LeafWithChildren(usize),
    #[error("internal node {0} has no children")]
    NoChildren(usize),
    #[error("cost table shape is wrong")]
    CostShape,
    #[error("negative cost at node {0}")]
    NegativeCost(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RoundError {
    #[error("solution vector has wrong length")]
    SolutionShape,
    #[error("choose node {0} has no child mass to sample")]
    DeadChoice(usize),
}

/// Rooted tree of alternating keep-all / keep-one decisions with per-agent
/// node costs. Node 0 is the root; children always have larger ids than
/// their parent, so descending sweeps see parents first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundTree {
    kinds: Vec<RoundKind>,
    children: Vec<Vec<usize>>,
    parent: Vec<Option<usize>>,
    /// `costs[agent][node]`: charged when the node is kept.
    costs: Vec<Vec<Rat>>,
    /// Nodes pinned to zero in the relaxation (impossible configurations).
    forced_zero: Vec<bool>,
}

impl RoundTree {
    pub fn new(
        kinds: Vec<RoundKind>,
        children: Vec<Vec<usize>>,
        costs: Vec<Vec<Rat>>,
        forced_zero: Vec<bool>,
    ) -> Result<Self, RoundTreeError> {
        let n = kinds.len();
        if n == 0 {
            return Err(RoundTreeError::Empty);
        }
        if children.len() != n || forced_zero.len() != n {
            return Err(RoundTreeError::CostShape);
        }
        if costs.is_empty() || costs.iter().any(|row| row.len() != n) {
            return Err(RoundTreeError::CostShape);
        }
        let mut parent: Vec<Option<usize>> = vec![None; n];
        for (v, kids) in children.iter().enumerate() {
            match kinds[v] {
                RoundKind::Leaf => {
                    if !kids.is_empty() {
                        return Err(RoundTreeError::LeafWithChildren(v));
                    }
                }
                _ => {
                    if kids.is_empty() {
                        return Err(RoundTreeError::NoChildren(v));
                    }
                }
            }
            for &c in kids {
                if c <= v || c >= n {
                    return Err(RoundTreeError::NotPreorder(v));
                }
                if parent[c].is_some() {
                    return Err(RoundTreeError::TwoParents(c));
                }
                parent[c] = Some(v);
            }
        }
        for v in 1..n {
            if parent[v].is_none() {
                return Err(RoundTreeError::Unreachable(v));
            }
        }
        for row in &costs {
            for (v, c) in row.iter().enumerate() {
                if c < &rat_zero() {
                    return Err(RoundTreeError::NegativeCost(v));
                }
            }
        }
        Ok(RoundTree { kinds, children, parent, costs, forced_zero })
    }

    /// Rounding view of a series-parallel decomposition: series nodes keep
    /// all children, parallel nodes pick one, leaves carry their edge's
    /// costs. Node ids match the decomposition tree.
    pub fn from_sp(tree: &DecompTree, instance: &Instance) -> RoundTree {
        let n = tree.len();
        let kinds = (0..n)
            .map(|v| match tree.kind(v) {
                NodeKind::Series => RoundKind::All,
                NodeKind::Parallel => RoundKind::Choose,
                NodeKind::Leaf(_) => RoundKind::Leaf,
            })
            .collect();
        let children = (0..n).map(|v| tree.children(v).to_vec()).collect();
        let costs = (0..instance.k())
            .map(|i| {
                (0..n)
                    .map(|v| match tree.kind(v) {
                        NodeKind::Leaf(e) => instance.cost(i, e).clone(),
                        _ => rat_zero(),
                    })
                    .collect()
            })
            .collect();
        RoundTree::new(kinds, children, costs, vec![false; n]).expect("decomposition is well formed")
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn k(&self) -> usize {
        self.costs.len()
    }

    pub fn kind(&self, v: usize) -> RoundKind {
        self.kinds[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn cost(&self, agent: usize, v: usize) -> &Rat {
        &self.costs[agent][v]
    }

    pub fn forced_zero(&self, v: usize) -> bool {
        self.forced_zero[v]
    }

    /// Any node carries nonzero cost for some agent.
    pub fn node_has_cost(&self, v: usize) -> bool {
        self.costs.iter().any(|row| !row[v].is_zero())
    }

    /// Largest number of choose nodes on a root-to-leaf chain, at least 1.
    /// This is the H that drives the moment bound: only choose levels incur
    /// sampling risk, keep-all levels are free.
    pub fn choose_height(&self) -> usize {
        let mut depth = vec![0usize; self.len()];
        let mut max = 0;
        for v in 0..self.len() {
            let own = usize::from(self.kinds[v] == RoundKind::Choose);
            depth[v] = own + self.parent[v].map_or(0, |p| depth[p]);
            max = max.max(depth[v]);
        }
        max.max(1)
    }
}

/// One rounded sample: the kept nodes and what each agent pays for them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundOutcome {
    /// Sorted ids of kept nodes.
    pub nodes: Vec<usize>,
    pub agent_costs: Vec<Rat>,
}

/// Top-down dependent rounding: keep the root; under a kept `All` node keep
/// every child; under a kept `Choose` node keep one child `c` with
/// probability `x[c] / x[v]`.
pub fn dependent_round(
    tree: &RoundTree,
    weights: &[f64],
    rng: &mut impl Rng,
) -> Result<Vec<usize>, RoundError> {
    if weights.len() != tree.len() {
        return Err(RoundError::SolutionShape);
    }
    let mut kept = Vec::new();
    let mut stack = vec![0usize];
    while let Some(v) = stack.pop() {
        kept.push(v);
        match tree.kind(v) {
            RoundKind::Leaf => {}
            RoundKind::All => stack.extend(tree.children(v).iter().copied()),
            RoundKind::Choose => {
                let kids = tree.children(v);
                let mass: Vec<f64> = kids.iter().map(|&c| weights[c].max(0.0)).collect();
                let total: f64 = mass.iter().sum();
                if total <= 0.0 {
                    return Err(RoundError::DeadChoice(v));
                }
                let mut draw = rng.gen::<f64>() * total;
                let mut pick = kids.len() - 1;
                for (i, w) in mass.iter().enumerate() {
                    if draw < *w {
                        pick = i;
                        break;
                    }
                    draw -= w;
                }
                stack.push(kids[pick]);
            }
        }
    }
    kept.sort_unstable();
    Ok(kept)
}

fn costs_of(tree: &RoundTree, kept: &[usize]) -> Vec<Rat> {
    (0..tree.k())
        .map(|i| kept.iter().fold(rat_zero(), |acc, &v| acc + &tree.costs[i][v]))
        .collect()
}

/// Best sample over repeated rounding. Trial `j` uses the seed's stream `j`,
/// so results are reproducible and independent of trial order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BestRounding {
    pub outcome: RoundOutcome,
    /// Worst agent cost of the kept sample.
    pub max_cost: Rat,
    pub trials: usize,
    /// Trials whose worst agent cost exceeded the tail threshold
    /// `8 * H * log2(max(2, k)) * gs`.
    pub tail_hits: usize,
}

pub fn round_with_retries(
    tree: &RoundTree,
    x: &[Rat],
    gs: &Rat,
    trials: usize,
    seed: u64,
) -> Result<BestRounding, RoundError> {
    assert!(trials >= 1);
    let weights: Vec<f64> = x.iter().map(rat_to_f64).collect();
    let h = tree.choose_height();
    let threshold = tail_threshold(h, tree.k(), gs);
    let mut best: Option<(Vec<usize>, Vec<Rat>, Rat)> = None;
    let mut tail_hits = 0;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        let kept = dependent_round(tree, &weights, &mut rng)?;
        let costs = costs_of(tree, &kept);
        let worst = costs.iter().max().expect("at least one agent").clone();
        if worst > threshold {
            tail_hits += 1;
        }
        match &best {
            Some((_, _, cur)) if *cur <= worst => {}
            _ => best = Some((kept, costs, worst)),
        }
    }
    let (nodes, agent_costs, max_cost) = best.expect("at least one trial");
    Ok(BestRounding {
        outcome: RoundOutcome { nodes, agent_costs },
        max_cost,
        trials,
        tail_hits,
    })
}

/// `8 * H * log2(max(2, k)) * gs`, the per-agent cost level whose overshoot
/// probability is at most `1/k^2 + 1/(H k^2)`.
pub fn tail_threshold(h: usize, k: usize, gs: &Rat) -> Rat {
    let lg = (k.max(2) as f64).log2();
    let factor = crate::ratio::f64_to_rat(8.0 * h as f64 * lg).expect("finite tail factor");
    factor * gs
}

/// Empirical check of the moment inequality behind the guarantee: for each
/// agent the sampled mean of `(1 + 1/(2H))^(cost / gs)` must stay near or
/// below `1 + 1/H`.
#[derive(Debug, Clone)]
pub struct MomentReport {
    pub h: usize,
    pub trials: usize,
    /// Per-agent empirical mean of the moment statistic.
    pub moment_means: Vec<f64>,
    /// The proved ceiling `1 + 1/H`.
    pub moment_bound: f64,
    /// Per-agent standard error of the moment mean.
    pub moment_errs: Vec<f64>,
    /// Per-agent fraction of trials beyond the tail threshold.
    pub tail_freqs: Vec<f64>,
    /// The proved tail probability `1/k^2 + 1/(H k^2)` (against
    /// `tail_threshold`).
    pub tail_bound: f64,
}

pub fn moment_check(
    tree: &RoundTree,
    x: &[Rat],
    gs: &Rat,
    trials: usize,
    seed: u64,
) -> Result<MomentReport, RoundError> {
    assert!(trials >= 1);
    let weights: Vec<f64> = x.iter().map(rat_to_f64).collect();
    let h = tree.choose_height();
    let k = tree.k();
    let base = 1.0 + 1.0 / (2.0 * h as f64);
    let gs_f = rat_to_f64(gs);
    let threshold = tail_threshold(h, k, gs);
    let mut sums = vec![0.0f64; k];
    let mut sq_sums = vec![0.0f64; k];
    let mut tails = vec![0usize; k];
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        let kept = dependent_round(tree, &weights, &mut rng)?;
        let costs = costs_of(tree, &kept);
        for (i, c) in costs.iter().enumerate() {
            let stat = if gs_f > 0.0 {
                base.powf(rat_to_f64(c) / gs_f)
            } else if c.is_zero() {
                1.0
            } else {
                f64::INFINITY
            };
            sums[i] += stat;
            sq_sums[i] += stat * stat;
            if *c > threshold {
                tails[i] += 1;
            }
        }
    }
    let t = trials as f64;
    let moment_means: Vec<f64> = sums.iter().map(|s| s / t).collect();
    let moment_errs: Vec<f64> = sums
        .iter()
        .zip(&sq_sums)
        .map(|(s, sq)| {
            let mean = s / t;
            let var = (sq / t - mean * mean).max(0.0);
            (var / t).sqrt()
        })
        .collect();
    let tail_freqs = tails.iter().map(|&c| c as f64 / t).collect();
    let kf = (k.max(2)) as f64;
    Ok(MomentReport {
        h,
        trials,
        moment_means,
        moment_bound: 1.0 + 1.0 / h as f64,
        moment_errs,
        tail_freqs,
        tail_bound: 1.0 / (kf * kf) + 1.0 / (h as f64 * kf * kf),
    })
}

/// The inflation chain from the analysis: `z_1 = 1 + 1/(2H)` and
/// `z_{j+1} = e^{z_j - 1}` stays below `1 + 1/H` for H+1 steps. Exposed so
/// tests can pin the analytic backbone independently of any sampling.
pub fn inflation_chain(h: usize, steps: usize) -> Vec<f64> {
    assert!(h >= 1);
    let mut z = 1.0 + 1.0 / (2.0 * h as f64);
    let mut out = vec![z];
    for _ in 1..steps {
        z = (z - 1.0).exp();
        out.push(z);
    }
    out
}
