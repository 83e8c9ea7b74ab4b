//! Linear relaxations and their solvers.
//!
//! Everything is stored with exact rational coefficients. Solving goes
//! through an exact presolve (variable merging, constant propagation, forced
//! zeros) that collapses the tree relaxations by orders of magnitude, then a
//! dense two-phase simplex: floating point first, exact rationals when the
//! floating verdict is too close to call or the caller wants certainty.

mod simplex;

use crate::instance::{EdgeId, Instance};
use crate::ratio::{f64_to_rat, rat_zero, Rat};
use crate::round::{RoundKind, RoundTree};
use num_traits::{One, Signed, Zero};
use simplex::{Field, Rel, SolveResult, Standard};
use std::collections::HashMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LpRow {
    /// Sparse terms, variable id ascending, no duplicates.
    pub coeffs: Vec<(usize, Rat)>,
    pub rel: Relation,
    pub rhs: Rat,
}

/// `min objective . x` subject to the rows and `x >= 0`. An empty objective
/// makes it a pure feasibility system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LpModel {
    pub num_vars: usize,
    pub rows: Vec<LpRow>,
    pub objective: Vec<(usize, Rat)>,
}

impl LpModel {
    pub fn new(num_vars: usize) -> Self {
        LpModel { num_vars, rows: Vec::new(), objective: Vec::new() }
    }

    pub fn push_row(&mut self, mut coeffs: Vec<(usize, Rat)>, rel: Relation, rhs: Rat) {
        coeffs.retain(|(_, c)| !c.is_zero());
        coeffs.sort_by_key(|&(v, _)| v);
        debug_assert!(coeffs.windows(2).all(|w| w[0].0 < w[1].0), "duplicate term");
        debug_assert!(coeffs.iter().all(|&(v, _)| v < self.num_vars));
        self.rows.push(LpRow { coeffs, rel, rhs });
    }

    /// Largest violation of any row by `x`, as a nonnegative rational.
    pub fn max_violation(&self, x: &[Rat]) -> Rat {
        let mut worst = rat_zero();
        for row in &self.rows {
            let lhs = row.coeffs.iter().fold(rat_zero(), |acc, (v, c)| acc + c * &x[*v]);
            let gap = match row.rel {
                Relation::Le => &lhs - &row.rhs,
                Relation::Eq => (&lhs - &row.rhs).abs(),
            };
            if gap > worst {
                worst = gap;
            }
        }
        for xv in x {
            let gap = -xv.clone();
            if gap > worst {
                worst = gap;
            }
        }
        worst
    }

    /// Human-readable dump; `name` maps variable ids to labels.
    pub fn to_text(&self, name: &dyn Fn(usize) -> String) -> String {
        let term = |coeffs: &[(usize, Rat)]| -> String {
            if coeffs.is_empty() {
                return "0".to_string();
            }
            let mut out = String::new();
            for (i, (v, c)) in coeffs.iter().enumerate() {
                let mag = c.abs();
                let sign = if c.is_negative() { "-" } else { "+" };
                if i == 0 {
                    if c.is_negative() {
                        out.push_str("-");
                    }
                } else {
                    out.push_str(&format!(" {} ", sign));
                }
                if mag.is_one() {
                    out.push_str(&name(*v));
                } else {
                    out.push_str(&format!("{} {}", crate::ratio::format_rat(&mag), name(*v)));
                }
            }
            out
        };
        let mut out = String::new();
        writeln!(out, "minimize: {}", term(&self.objective)).unwrap();
        writeln!(out, "subject to:").unwrap();
        for row in &self.rows {
            let rel = match row.rel {
                Relation::Le => "<=",
                Relation::Eq => "=",
            };
            writeln!(out, "  {} {} {}", term(&row.coeffs), rel, crate::ratio::format_rat(&row.rhs))
                .unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Feasible(Vec<Rat>),
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MinOutcome {
    /// `value` is the exact objective of the returned point.
    Optimal { x: Vec<Rat>, value: Rat },
    Infeasible,
    Unbounded,
}

/// Scaled union-find: every variable is either free (a representative),
/// a positive multiple of its representative, or pinned to a constant.
struct VarMap {
    parent: Vec<usize>,
    /// `x_v = factor[v] * x_parent(v)`; composed along find paths.
    factor: Vec<Rat>,
    /// Set on representatives only.
    value: Vec<Option<Rat>>,
}

#[derive(Debug, PartialEq, Eq)]
enum PresolveStep {
    Progress,
    NoChange,
    Infeasible,
}

impl VarMap {
    fn new(n: usize) -> Self {
        VarMap {
            parent: (0..n).collect(),
            factor: vec![Rat::one(); n],
            value: vec![None; n],
        }
    }

    /// Returns (root, f) with `x_v = f * x_root`, compressing the path.
    /// Roots always carry factor one, so composing with the parent's
    /// resolved factor is enough.
    fn find(&mut self, v: usize) -> (usize, Rat) {
        if self.parent[v] == v {
            return (v, self.factor[v].clone());
        }
        let (root, f) = self.find(self.parent[v]);
        let composed = &self.factor[v] * &f;
        self.factor[v] = composed.clone();
        self.parent[v] = root;
        (root, composed)
    }

    /// Pins `x_v = val`. Errors (None) on conflict or negative value.
    fn fix(&mut self, v: usize, val: &Rat) -> Option<PresolveStep> {
        let (root, f) = self.find(v);
        let root_val = val / &f;
        if root_val.is_negative() {
            return None;
        }
        match &self.value[root] {
            Some(existing) if *existing != root_val => None,
            Some(_) => Some(PresolveStep::NoChange),
            None => {
                self.value[root] = Some(root_val);
                Some(PresolveStep::Progress)
            }
        }
    }

    /// Imposes `x_a = lambda * x_b` with `lambda > 0`.
    fn merge(&mut self, a: usize, b: usize, lambda: &Rat) -> Option<PresolveStep> {
        debug_assert!(lambda.is_positive());
        let (ra, fa) = self.find(a);
        let (rb, fb) = self.find(b);
        if ra == rb {
            // fa * x_r = lambda * fb * x_r; mismatch forces zero.
            return if fa == lambda * &fb {
                Some(PresolveStep::NoChange)
            } else {
                self.fix(ra, &rat_zero())
            };
        }
        // x_ra = (lambda * fb / fa) * x_rb.
        let link = lambda * &fb / &fa;
        match (self.value[ra].clone(), self.value[rb].clone()) {
            (Some(va), Some(vb)) => {
                if va == &link * &vb {
                    Some(PresolveStep::NoChange)
                } else {
                    None
                }
            }
            (Some(va), None) => {
                self.parent[ra] = rb;
                self.factor[ra] = link.clone();
                self.value[ra] = None;
                let vb = &va / &link;
                if vb.is_negative() {
                    return None;
                }
                self.value[rb] = Some(vb);
                Some(PresolveStep::Progress)
            }
            (None, maybe_vb) => {
                let _ = maybe_vb;
                self.parent[ra] = rb;
                self.factor[ra] = link;
                Some(PresolveStep::Progress)
            }
        }
    }

    /// Resolved value of `v` given representative values.
    fn eval(&mut self, v: usize, root_vals: &HashMap<usize, Rat>) -> Rat {
        let (root, f) = self.find(v);
        let base = match &self.value[root] {
            Some(val) => val.clone(),
            None => root_vals.get(&root).cloned().unwrap_or_else(rat_zero),
        };
        f * base
    }
}

struct Presolved {
    /// Rows over compact free-variable ids.
    rows: Vec<LpRow>,
    objective: Vec<(usize, Rat)>,
    /// compact id -> representative variable id.
    rep_of_compact: Vec<usize>,
    vars: VarMap,
}

enum PresolveOutcome {
    Infeasible,
    Reduced(Presolved),
}

/// Applies the rewrite rules to a fixpoint:
/// merged variables, pinned constants, empty-row consistency, single-variable
/// rows, two-variable zero equalities, same-sign zero rows.
fn presolve(model: &LpModel) -> PresolveOutcome {
    let mut vars = VarMap::new(model.num_vars);
    loop {
        let mut progress = false;
        for row in &model.rows {
            match simplify_row(row, &mut vars) {
                PresolveStep::Progress => progress = true,
                PresolveStep::NoChange => {}
                PresolveStep::Infeasible => return PresolveOutcome::Infeasible,
            }
        }
        if !progress {
            break;
        }
    }

    // Compact surviving rows and variables.
    let mut compact: HashMap<usize, usize> = HashMap::new();
    let mut rep_of_compact = Vec::new();
    let mut rows = Vec::new();
    for row in &model.rows {
        if let Some((coeffs, rhs)) = normalize_row(row, &mut vars) {
            if coeffs.is_empty() {
                continue;
            }
            let coeffs = coeffs
                .into_iter()
                .map(|(rep, c)| {
                    let id = *compact.entry(rep).or_insert_with(|| {
                        rep_of_compact.push(rep);
                        rep_of_compact.len() - 1
                    });
                    (id, c)
                })
                .collect();
            let rel = match row.rel {
                Relation::Le => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
            let mut r = LpRow { coeffs, rel, rhs };
            r.coeffs.sort_by_key(|&(v, _)| v);
            rows.push(r);
        }
    }
    let mut objective: HashMap<usize, Rat> = HashMap::new();
    for (v, c) in &model.objective {
        let (root, f) = vars.find(*v);
        if vars.value[root].is_some() {
            continue; // constant offset; reapplied by the caller via eval
        }
        let id = *compact.entry(root).or_insert_with(|| {
            rep_of_compact.push(root);
            rep_of_compact.len() - 1
        });
        *objective.entry(id).or_insert_with(rat_zero) += c * &f;
    }
    let mut objective: Vec<(usize, Rat)> = objective.into_iter().collect();
    objective.sort_by_key(|&(v, _)| v);
    objective.retain(|(_, c)| !c.is_zero());
    PresolveOutcome::Reduced(Presolved { rows, objective, rep_of_compact, vars })
}

/// Rewrites a row over representatives, folding pinned variables into the
/// rhs. Returns None when the row reduced to a tautology or contradiction is
/// handled by the caller via `simplify_row`.
fn normalize_row(row: &LpRow, vars: &mut VarMap) -> Option<(Vec<(usize, Rat)>, Rat)> {
    let mut terms: HashMap<usize, Rat> = HashMap::new();
    let mut rhs = row.rhs.clone();
    for (v, c) in &row.coeffs {
        let (root, f) = vars.find(*v);
        match vars.value[root].clone() {
            Some(val) => rhs -= c * &f * val,
            None => {
                *terms.entry(root).or_insert_with(rat_zero) += c * &f;
            }
        }
    }
    let mut coeffs: Vec<(usize, Rat)> = terms.into_iter().filter(|(_, c)| !c.is_zero()).collect();
    coeffs.sort_by_key(|&(v, _)| v);
    if coeffs.is_empty() {
        let satisfied = match row.rel {
            Relation::Le => !rhs.is_negative(),
            Relation::Eq => rhs.is_zero(),
        };
        if satisfied {
            return None;
        }
        // Contradiction surfaces through simplify_row; keep the empty row.
        return Some((coeffs, rhs));
    }
    Some((coeffs, rhs))
}

fn simplify_row(row: &LpRow, vars: &mut VarMap) -> PresolveStep {
    let Some((coeffs, rhs)) = normalize_row(row, vars) else {
        return PresolveStep::NoChange;
    };
    if coeffs.is_empty() {
        return PresolveStep::Infeasible;
    }
    match row.rel {
        Relation::Eq => {
            if coeffs.len() == 1 {
                let (v, a) = &coeffs[0];
                let val = &rhs / a;
                return match vars.fix(*v, &val) {
                    Some(step) => step,
                    None => PresolveStep::Infeasible,
                };
            }
            if rhs.is_zero() {
                let pos = coeffs.iter().filter(|(_, c)| c.is_positive()).count();
                let neg = coeffs.len() - pos;
                if pos == 0 || neg == 0 {
                    // Same-sign zero sum of nonnegative variables.
                    let mut step = PresolveStep::NoChange;
                    for (v, _) in &coeffs {
                        match vars.fix(*v, &rat_zero()) {
                            Some(PresolveStep::Progress) => step = PresolveStep::Progress,
                            Some(_) => {}
                            None => return PresolveStep::Infeasible,
                        }
                    }
                    return step;
                }
                if coeffs.len() == 2 {
                    // a x + b y = 0 with opposite signs: x = (-b/a) y.
                    let (x, a) = &coeffs[0];
                    let (y, b) = &coeffs[1];
                    let lambda = -(b / a);
                    return match vars.merge(*x, *y, &lambda) {
                        Some(step) => step,
                        None => PresolveStep::Infeasible,
                    };
                }
            }
            PresolveStep::NoChange
        }
        Relation::Le => {
            if rhs.is_negative() && coeffs.iter().all(|(_, c)| !c.is_negative()) {
                return PresolveStep::Infeasible;
            }
            if rhs.is_zero() {
                let all_pos = coeffs.iter().all(|(_, c)| c.is_positive());
                if all_pos {
                    let mut step = PresolveStep::NoChange;
                    for (v, _) in &coeffs {
                        match vars.fix(*v, &rat_zero()) {
                            Some(PresolveStep::Progress) => step = PresolveStep::Progress,
                            Some(_) => {}
                            None => return PresolveStep::Infeasible,
                        }
                    }
                    return step;
                }
            }
            if coeffs.len() == 1 {
                let (v, a) = &coeffs[0];
                if a.is_positive() {
                    let bound = &rhs / a;
                    if bound.is_negative() {
                        return PresolveStep::Infeasible;
                    }
                    if bound.is_zero() {
                        return match vars.fix(*v, &rat_zero()) {
                            Some(step) => step,
                            None => PresolveStep::Infeasible,
                        };
                    }
                }
            }
            PresolveStep::NoChange
        }
    }
}

/// Expands a reduced solution (over compact ids) back to the full variable
/// vector.
fn reconstruct(model: &LpModel, pre: &mut Presolved, reduced_x: &[Rat]) -> Vec<Rat> {
    let mut root_vals: HashMap<usize, Rat> = HashMap::new();
    for (compact, rep) in pre.rep_of_compact.iter().enumerate() {
        root_vals.insert(*rep, reduced_x.get(compact).cloned().unwrap_or_else(rat_zero));
    }
    (0..model.num_vars).map(|v| pre.vars.eval(v, &root_vals)).collect()
}

fn to_standard<T: Field>(rows: &[LpRow], objective: &[(usize, Rat)], num_vars: usize) -> Standard<T> {
    let mut srows = Vec::with_capacity(rows.len());
    let mut rels = Vec::with_capacity(rows.len());
    let mut rhs = Vec::with_capacity(rows.len());
    for row in rows {
        // Scale by the largest magnitude so floating tolerances are uniform.
        let scale = row
            .coeffs
            .iter()
            .map(|(_, c)| c.abs())
            .chain(std::iter::once(row.rhs.abs()))
            .max()
            .unwrap_or_else(Rat::one);
        let scale = if scale.is_zero() { Rat::one() } else { scale };
        let mut dense = vec![T::zero(); num_vars];
        for (v, c) in &row.coeffs {
            dense[*v] = T::from_rat(&(c / &scale));
        }
        srows.push(dense);
        rels.push(match row.rel {
            Relation::Le => Rel::Le,
            Relation::Eq => Rel::Eq,
        });
        rhs.push(T::from_rat(&(&row.rhs / &scale)));
    }
    let mut obj = vec![T::zero(); num_vars];
    for (v, c) in objective {
        obj[*v] = T::from_rat(c);
    }
    Standard { num_vars, rows: srows, rels, rhs, objective: obj }
}

/// Phase-1 residual above this is a confident "infeasible"; anything smaller
/// that did not fully clear is too close to call and goes to the exact
/// solver.
const INFEASIBLE_MARGIN: f64 = 1e-4;

fn solve_reduced_feasibility(pre: &Presolved) -> Option<Vec<Rat>> {
    let n = pre.rep_of_compact.len();
    let std_f: Standard<f64> = to_standard(&pre.rows, &[], n);
    match simplex::solve(&std_f, false) {
        SolveResult::Solved { x, .. } => {
            match x.iter().map(|v| f64_to_rat(*v)).collect::<Option<Vec<Rat>>>() {
                Some(lifted) => Some(lifted),
                None => solve_reduced_feasibility_exact(pre),
            }
        }
        SolveResult::Infeasible { phase1 } if phase1 > INFEASIBLE_MARGIN => None,
        // Anything in the noise band, stalled, or otherwise ambiguous goes to
        // the exact solver.
        _ => solve_reduced_feasibility_exact(pre),
    }
}

fn solve_reduced_feasibility_exact(pre: &Presolved) -> Option<Vec<Rat>> {
    let n = pre.rep_of_compact.len();
    let std_q: Standard<Rat> = to_standard(&pre.rows, &[], n);
    match simplex::solve(&std_q, false) {
        SolveResult::Solved { x, .. } => Some(x),
        _ => None,
    }
}

/// Floating-point feasibility with exact escalation near the margin.
pub fn solve_feasibility(model: &LpModel) -> Verdict {
    match presolve(model) {
        PresolveOutcome::Infeasible => Verdict::Infeasible,
        PresolveOutcome::Reduced(mut pre) => match solve_reduced_feasibility(&pre) {
            Some(x) => Verdict::Feasible(reconstruct(model, &mut pre, &x)),
            None => Verdict::Infeasible,
        },
    }
}

/// Exact rational feasibility; the returned point satisfies every row
/// exactly. Meant for small systems (everything after presolve here).
pub fn solve_feasibility_exact(model: &LpModel) -> Verdict {
    match presolve(model) {
        PresolveOutcome::Infeasible => Verdict::Infeasible,
        PresolveOutcome::Reduced(mut pre) => match solve_reduced_feasibility_exact(&pre) {
            Some(x) => Verdict::Feasible(reconstruct(model, &mut pre, &x)),
            None => Verdict::Infeasible,
        },
    }
}

/// Minimizes the model's objective exactly; the returned point attains the
/// returned value and satisfies every row with no tolerance. Meant for the
/// small systems a presolve pass leaves behind.
pub fn minimize(model: &LpModel) -> MinOutcome {
    let mut pre = match presolve(model) {
        PresolveOutcome::Infeasible => return MinOutcome::Infeasible,
        PresolveOutcome::Reduced(pre) => pre,
    };
    let n = pre.rep_of_compact.len();
    let std_q: Standard<Rat> = to_standard(&pre.rows, &pre.objective, n);
    let reduced = match simplex::solve(&std_q, true) {
        SolveResult::Solved { x, .. } => x,
        SolveResult::Unbounded => return MinOutcome::Unbounded,
        _ => return MinOutcome::Infeasible,
    };
    let x = reconstruct(model, &mut pre, &reduced);
    let value = model.objective.iter().fold(rat_zero(), |acc, (v, c)| acc + c * &x[*v]);
    MinOutcome::Optimal { x, value }
}

/// Which nodes get an explicit budget row in the tree relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostRows {
    /// One row per agent and node.
    Full,
    /// Skip zero-cost choose nodes: their rows follow from their children's
    /// rows plus the flow-split equality, so the relaxation is unchanged.
    SeriesOnly,
}

/// The tree relaxation: x_root = 1; children of a keep-all node equal their
/// parent; children of a choose node sum to it; per agent and node, the
/// expected cost below a node is at most `gs` times the node's mass;
/// impossible nodes are pinned to zero.
pub fn build_tree_lp(tree: &RoundTree, gs: &Rat, mode: CostRows) -> LpModel {
    let n = tree.len();
    let mut model = LpModel::new(n);
    for agent in 0..tree.k() {
        for v in 0..n {
            let skip = matches!(mode, CostRows::SeriesOnly)
                && tree.kind(v) == RoundKind::Choose
                && tree.cost(agent, v).is_zero();
            if skip {
                continue;
            }
            // Subtree budget row for (agent, v).
            let mut coeffs: Vec<(usize, Rat)> = Vec::new();
            let mut any = false;
            let mut stack = vec![v];
            while let Some(u) = stack.pop() {
                let c = tree.cost(agent, u);
                if !c.is_zero() {
                    any = true;
                    coeffs.push((u, c.clone()));
                }
                stack.extend(tree.children(u).iter().copied());
            }
            if !any {
                continue;
            }
            match coeffs.iter_mut().find(|(u, _)| *u == v) {
                Some((_, c)) => *c -= gs,
                None => coeffs.push((v, -gs.clone())),
            }
            model.push_row(coeffs, Relation::Le, rat_zero());
        }
    }
    push_structure_rows(&mut model, tree);
    model
}

/// Root-budget-only variant: a genuinely weaker relaxation used to exhibit
/// the gap that per-node budgets close.
pub fn build_weak_tree_lp(tree: &RoundTree, gs: &Rat) -> LpModel {
    let n = tree.len();
    let mut model = LpModel::new(n);
    for agent in 0..tree.k() {
        let mut coeffs: Vec<(usize, Rat)> = Vec::new();
        for v in 0..n {
            let c = tree.cost(agent, v);
            if !c.is_zero() {
                coeffs.push((v, c.clone()));
            }
        }
        if coeffs.is_empty() {
            continue;
        }
        match coeffs.iter_mut().find(|(u, _)| *u == 0) {
            Some((_, c)) => *c -= gs,
            None => coeffs.push((0, -gs.clone())),
        }
        model.push_row(coeffs, Relation::Le, rat_zero());
    }
    push_structure_rows(&mut model, tree);
    model
}

fn push_structure_rows(model: &mut LpModel, tree: &RoundTree) {
    model.push_row(vec![(0, Rat::one())], Relation::Eq, Rat::one());
    for v in 0..tree.len() {
        match tree.kind(v) {
            RoundKind::Leaf => {}
            RoundKind::All => {
                for &c in tree.children(v) {
                    model.push_row(
                        vec![(c, Rat::one()), (v, -Rat::one())],
                        Relation::Eq,
                        rat_zero(),
                    );
                }
            }
            RoundKind::Choose => {
                let mut coeffs: Vec<(usize, Rat)> =
                    tree.children(v).iter().map(|&c| (c, Rat::one())).collect();
                coeffs.push((v, -Rat::one()));
                model.push_row(coeffs, Relation::Eq, rat_zero());
            }
        }
    }
    for v in 0..tree.len() {
        if tree.forced_zero(v) {
            model.push_row(vec![(v, Rat::one())], Relation::Eq, rat_zero());
        }
    }
}

/// Fractional-path relaxation: route one unit of flow from source to sink,
/// minimize the common budget T that bounds every agent's fractional cost.
/// Returns the model and the variable id of T (edge e is variable e).
pub fn build_flow_min_lp(instance: &Instance) -> (LpModel, usize) {
    let m = instance.m();
    let t_var = m;
    let mut model = LpModel::new(m + 1);
    for agent in 0..instance.k() {
        let mut coeffs: Vec<(usize, Rat)> = (0..m)
            .filter(|&e| !instance.cost(agent, e).is_zero())
            .map(|e| (e, instance.cost(agent, e).clone()))
            .collect();
        coeffs.push((t_var, -Rat::one()));
        model.push_row(coeffs, Relation::Le, rat_zero());
    }
    push_flow_conservation(&mut model, instance, None);
    model.objective = vec![(t_var, Rat::one())];
    (model, t_var)
}

/// Flow feasibility with a guessed budget: edges too expensive for any agent
/// are removed outright, remaining fractional costs must fit the guess.
/// Returns the model and the surviving edges (variable j is `kept[j]`).
pub fn build_enh_flow_lp(instance: &Instance, t_hat: &Rat) -> (LpModel, Vec<EdgeId>) {
    let kept: Vec<EdgeId> = (0..instance.m())
        .filter(|&e| (0..instance.k()).all(|i| instance.cost(i, e) <= t_hat))
        .collect();
    let var_of: HashMap<EdgeId, usize> = kept.iter().enumerate().map(|(j, &e)| (e, j)).collect();
    let mut model = LpModel::new(kept.len());
    for agent in 0..instance.k() {
        let coeffs: Vec<(usize, Rat)> = kept
            .iter()
            .enumerate()
            .filter(|(_, &e)| !instance.cost(agent, e).is_zero())
            .map(|(j, &e)| (j, instance.cost(agent, e).clone()))
            .collect();
        if coeffs.is_empty() {
            continue;
        }
        model.push_row(coeffs, Relation::Le, t_hat.clone());
    }
    push_flow_conservation(&mut model, instance, Some(&var_of));
    (model, kept)
}

/// Unit flow out of the source, conservation at internal vertices. The sink
/// balance follows from the others. `var_of` remaps edge ids when some edges
/// were dropped; None keeps the identity map over all edges.
fn push_flow_conservation(
    model: &mut LpModel,
    instance: &Instance,
    var_of: Option<&HashMap<EdgeId, usize>>,
) {
    let lookup = |e: EdgeId| -> Option<usize> {
        match var_of {
            Some(map) => map.get(&e).copied(),
            None => Some(e),
        }
    };
    let mut at_source: Vec<(usize, Rat)> = Vec::new();
    let mut balance: Vec<Vec<(usize, Rat)>> = vec![Vec::new(); instance.n()];
    for (e, &(tail, head)) in instance.edges().iter().enumerate() {
        let Some(j) = lookup(e) else { continue };
        if tail == instance.source() {
            at_source.push((j, Rat::one()));
        } else {
            balance[tail].push((j, -Rat::one()));
        }
        if head != instance.sink() {
            balance[head].push((j, Rat::one()));
        }
    }
    model.push_row(at_source, Relation::Eq, Rat::one());
    for (v, coeffs) in balance.into_iter().enumerate() {
        if v == instance.source() || v == instance.sink() || coeffs.is_empty() {
            continue;
        }
        let mut merged: HashMap<usize, Rat> = HashMap::new();
        for (j, c) in coeffs {
            *merged.entry(j).or_insert_with(rat_zero) += c;
        }
        let coeffs: Vec<(usize, Rat)> = merged.into_iter().collect();
        model.push_row(coeffs, Relation::Eq, rat_zero());
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DoublingError {
    #[error("relaxation infeasible even at the initial guess")]
    NeverFeasible,
    #[error("halving did not terminate")]
    Stalled,
}

/// Result of the halving search: the smallest probed guess that stayed
/// feasible, its solver artifact, and the probe log.
#[derive(Debug, Clone)]
pub struct DoublingResult<W> {
    pub gs_star: Rat,
    pub witness: W,
    /// (guess, feasible) in probe order.
    pub probes: Vec<(Rat, bool)>,
}

/// Starts from a guess known to dominate the optimum (the per-agent cost
/// sum), then halves while the probe stays feasible. Probes the zero guess
/// first so all-zero optima terminate. The final guess is at most twice the
/// optimum whenever the probe accepts every guess at or above the optimum.
pub fn doubling_search<W>(
    gs0: &Rat,
    mut probe: impl FnMut(&Rat) -> Option<W>,
) -> Result<DoublingResult<W>, DoublingError> {
    const MAX_ROUNDS: usize = 10_000;
    let mut probes = Vec::new();
    let zero = rat_zero();
    if let Some(w) = probe(&zero) {
        probes.push((zero.clone(), true));
        return Ok(DoublingResult { gs_star: zero, witness: w, probes });
    }
    probes.push((zero, false));
    if !gs0.is_positive() {
        return Err(DoublingError::NeverFeasible);
    }
    let Some(mut witness) = probe(gs0) else {
        probes.push((gs0.clone(), false));
        return Err(DoublingError::NeverFeasible);
    };
    probes.push((gs0.clone(), true));
    let mut gs_star = gs0.clone();
    let half = Rat::new(1.into(), 2.into());
    let mut guess = gs0 * &half;
    for _ in 0..MAX_ROUNDS {
        match probe(&guess) {
            Some(w) => {
                probes.push((guess.clone(), true));
                witness = w;
                gs_star = guess.clone();
                guess *= &half;
            }
            None => {
                probes.push((guess.clone(), false));
                return Ok(DoublingResult { gs_star, witness, probes });
            }
        }
    }
    Err(DoublingError::Stalled)
}

#[cfg(test)]
mod tests;
