//! Relaxation, sampling, and the end-to-end bounded-width pipeline.
//!
//! The labeling relaxation is solved in column form: one variable per simple
//! source-sink path, a convexity row, and one budget row per agent and
//! decomposition node charging the path's cost inside that node's subtree.
//! This is feasibility-equivalent to the distribution view over all
//! consistent assignments (every consistent subgraph dominates a contained
//! path row by row), and the solution's per-node marginals drive a top-down
//! conditional sampler whose output is always consistent.

use std::collections::BTreeMap;

use num_traits::Zero;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::instance::{
    minimax_value, prune_off_path_edges, truncate_edges, EdgeId, Instance, StPath, VertexId,
};
use crate::lp::{doubling_search, solve_feasibility, DoublingError, LpModel, Relation, Verdict};
use crate::ratio::{rat_one, rat_to_f64, rat_zero, Rat};
use crate::round::{tail_threshold, MomentReport};
use crate::solver::{SolveError, SolveOptions, SolveReport};

use super::labeling::{
    assignment_cost, bottom_up_labels, build_tree_labeling, labeling_to_path, pow2_sat,
    LabelAssignment, TreeLabelingInstance, DEFAULT_SPACE_CAP,
};
use super::{build_tree_decomposition, TwError, MAX_BAG};

/// Resource ceilings for the bounded-width pipeline.
#[derive(Debug, Clone)]
pub struct TwCaps {
    /// Largest accepted decomposition width (bag size minus one).
    pub width: usize,
    /// Ceiling on any enumerated label or column space.
    pub space: u128,
}

impl Default for TwCaps {
    fn default() -> Self {
        TwCaps { width: MAX_BAG - 1, space: DEFAULT_SPACE_CAP }
    }
}

/// Edge bitmasks of all simple source-sink paths, in DFS order with edges
/// tried by ascending id. Errors out once the count passes the cap.
fn st_path_masks(tli: &TreeLabelingInstance, cap: u128) -> Result<Vec<u128>, TwError> {
    let m = tli.m();
    if m >= 128 {
        return Err(TwError::SpaceCap { needed: pow2_sat(m), cap });
    }
    let mut adj: Vec<Vec<(VertexId, EdgeId)>> = vec![Vec::new(); tli.n()];
    for (e, &(a, b)) in tli.edges().iter().enumerate() {
        adj[a].push((b, e));
    }
    let mut out: Vec<u128> = Vec::new();
    let mut frames: Vec<(VertexId, usize)> = vec![(tli.source(), 0)];
    let mut chosen: Vec<EdgeId> = Vec::new();
    let mut visited = vec![false; tli.n()];
    visited[tli.source()] = true;
    while let Some(&(v, next)) = frames.last() {
        if v == tli.sink() {
            let mask = chosen.iter().fold(0u128, |acc, &e| acc | (1u128 << e));
            out.push(mask);
            if out.len() as u128 > cap {
                return Err(TwError::SpaceCap { needed: out.len() as u128, cap });
            }
            frames.pop();
            visited[v] = false;
            chosen.pop();
            continue;
        }
        if next < adj[v].len() {
            frames.last_mut().expect("frame just read").1 += 1;
            let (w, e) = adj[v][next];
            if !visited[w] {
                visited[w] = true;
                chosen.push(e);
                frames.push((w, 0));
            }
        } else {
            frames.pop();
            visited[v] = false;
            chosen.pop();
        }
    }
    Ok(out)
}

/// Column LP: convexity plus one budget row per agent and node bounding the
/// expected normalized cost of edges homed inside that node's subtree.
fn build_labeling_lp(tli: &TreeLabelingInstance, masks: &[u128]) -> LpModel {
    let td = tli.td();
    let mut below: Vec<u128> = vec![0; td.len()];
    let mut order = td.topological();
    order.reverse();
    for v in order {
        let mut bits = 0u128;
        for &e in tli.homes(v) {
            bits |= 1u128 << e;
        }
        for &c in td.children(v) {
            bits |= below[c];
        }
        below[v] = bits;
    }
    let mut model = LpModel::new(masks.len());
    for v in 0..td.len() {
        for agent in 0..tli.k() {
            let mut coeffs = Vec::new();
            for (j, &mask) in masks.iter().enumerate() {
                let mut total = rat_zero();
                let mut rem = mask & below[v];
                while rem != 0 {
                    let e = rem.trailing_zeros() as usize;
                    rem &= rem - 1;
                    total += tli.norm_cost(agent, e).clone();
                }
                if !total.is_zero() {
                    coeffs.push((j, total));
                }
            }
            if !coeffs.is_empty() {
                model.push_row(coeffs, Relation::Le, rat_one());
            }
        }
    }
    model.push_row(
        (0..masks.len()).map(|j| (j, rat_one())).collect(),
        Relation::Eq,
        rat_one(),
    );
    model
}

/// Per-node marginals of the LP solution, keyed by label indices: root
/// masses plus, for each internal node, joint child-label masses conditioned
/// on the node's own label.
struct SamplerTables {
    root: Vec<(usize, f64)>,
    joints: Vec<BTreeMap<usize, Vec<(Option<usize>, Option<usize>, f64)>>>,
}

fn sampler_tables(tli: &TreeLabelingInstance, masks: &[u128], weights: &[Rat]) -> SamplerTables {
    let td = tli.td();
    let mut root: Vec<(usize, f64)> = Vec::new();
    let mut joints: Vec<BTreeMap<usize, Vec<(Option<usize>, Option<usize>, f64)>>> =
        vec![BTreeMap::new(); td.len()];
    for (j, &mask) in masks.iter().enumerate() {
        if weights[j].is_zero() {
            continue;
        }
        let w = rat_to_f64(&weights[j]);
        let labels = bottom_up_labels(td, tli.homes_all(), tli.edges(), &|e| {
            mask & (1u128 << e) != 0
        });
        let idx: Vec<usize> = labels
            .iter()
            .enumerate()
            .map(|(v, l)| tli.label_index(v, *l).expect("column labels are realizable"))
            .collect();
        match root.iter_mut().find(|(i, _)| *i == idx[td.root()]) {
            Some((_, acc)) => *acc += w,
            None => root.push((idx[td.root()], w)),
        }
        for v in 0..td.len() {
            let kids = td.children(v);
            if kids.is_empty() {
                continue;
            }
            let first = Some(idx[kids[0]]);
            let second = kids.get(1).map(|&c| idx[c]);
            let slot = joints[v].entry(idx[v]).or_default();
            match slot.iter_mut().find(|(a, b, _)| *a == first && *b == second) {
                Some((_, _, acc)) => *acc += w,
                None => slot.push((first, second, w)),
            }
        }
    }
    SamplerTables { root, joints }
}

/// Residual draw over nonnegative masses; the last option absorbs
/// floating-point slack.
fn draw_slot(rng: &mut ChaCha8Rng, total: f64, masses: &[f64]) -> usize {
    debug_assert!(total > 0.0, "sampled label always has outgoing mass");
    let mut r = rng.gen::<f64>() * total;
    let mut pick = masses.len() - 1;
    for (i, w) in masses.iter().enumerate() {
        if r < *w {
            pick = i;
            break;
        }
        r -= w;
    }
    pick
}

/// Top-down conditional sampling: the root label from its marginal, then at
/// each node the joint child labels given the label already fixed.
fn sample_assignment(
    tli: &TreeLabelingInstance,
    tables: &SamplerTables,
    rng: &mut ChaCha8Rng,
) -> LabelAssignment {
    let td = tli.td();
    let mut idx = vec![usize::MAX; td.len()];
    let root_masses: Vec<f64> = tables.root.iter().map(|&(_, w)| w.max(0.0)).collect();
    let total: f64 = root_masses.iter().sum();
    idx[td.root()] = tables.root[draw_slot(rng, total, &root_masses)].0;
    let mut stack = vec![td.root()];
    while let Some(v) = stack.pop() {
        let kids = td.children(v);
        if kids.is_empty() {
            continue;
        }
        let options = tables.joints[v]
            .get(&idx[v])
            .expect("sampled label carries child mass");
        let masses: Vec<f64> = options.iter().map(|&(_, _, w)| w.max(0.0)).collect();
        let total: f64 = masses.iter().sum();
        let (first, second, _) = options[draw_slot(rng, total, &masses)];
        idx[kids[0]] = first.expect("present child gets a label");
        if let Some(&c) = kids.get(1) {
            idx[c] = second.expect("present child gets a label");
        }
        stack.extend(kids.iter().copied());
    }
    LabelAssignment::new((0..td.len()).map(|v| tli.labels(v)[idx[v]]).collect())
}

fn labeling_tables(
    tli: &TreeLabelingInstance,
    space_cap: u128,
) -> Result<SamplerTables, TwError> {
    let masks = st_path_masks(tli, space_cap)?;
    if masks.is_empty() {
        return Err(TwError::Infeasible);
    }
    let model = build_labeling_lp(tli, &masks);
    match solve_feasibility(&model) {
        Verdict::Feasible(p) => Ok(sampler_tables(tli, &masks, &p)),
        Verdict::Infeasible => Err(TwError::Infeasible),
    }
}

/// Solve the labeling relaxation and sample one consistent assignment.
pub fn solve_tree_labeling(
    tli: &TreeLabelingInstance,
    space_cap: u128,
    rng: &mut ChaCha8Rng,
) -> Result<LabelAssignment, TwError> {
    let tables = labeling_tables(tli, space_cap)?;
    Ok(sample_assignment(tli, &tables, rng))
}

/// Empirical moment and tail statistics of the labeling sampler, on the
/// normalized cost scale (guess = 1).
pub fn moment_check_labeling(
    tli: &TreeLabelingInstance,
    trials: usize,
    seed: u64,
) -> Result<MomentReport, TwError> {
    assert!(trials >= 1);
    let tables = labeling_tables(tli, DEFAULT_SPACE_CAP)?;
    let h = tli.height();
    let k = tli.k();
    let base = 1.0 + 1.0 / (2.0 * h as f64);
    let threshold = tail_threshold(h, k, &rat_one());
    let mut sums = vec![0.0f64; k];
    let mut sq_sums = vec![0.0f64; k];
    let mut tails = vec![0usize; k];
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64);
        let la = sample_assignment(tli, &tables, &mut rng);
        for agent in 0..k {
            let f = assignment_cost(tli, &la, agent);
            let stat = base.powf(rat_to_f64(&f));
            sums[agent] += stat;
            sq_sums[agent] += stat * stat;
            if f > threshold {
                tails[agent] += 1;
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

/// Everything the sampling step needs from the last feasible probe.
struct TwProbe {
    inst: Instance,
    tli: TreeLabelingInstance,
    tables: SamplerTables,
    /// probe edge id -> caller edge id.
    to_original: Vec<EdgeId>,
}

struct LabelingSearch {
    probe: TwProbe,
    gs_star: Rat,
    probes: Vec<(Rat, bool)>,
}

fn search_labeling(instance: &Instance, caps: &TwCaps) -> Result<LabelingSearch, SolveError> {
    let (pruned, prune_map) = prune_off_path_edges(instance);
    if pruned.m() == 0 {
        return Err(SolveError::NoPath);
    }
    // Built once: probes only drop edges, and every bag property survives
    // edge deletion.
    let td = build_tree_decomposition(&pruned, caps.width)?;

    let mut cap_err: Option<TwError> = None;
    let probe = |gs: &Rat| -> Option<TwProbe> {
        if cap_err.is_some() {
            return None;
        }
        let (trunc, trunc_map) = truncate_edges(&pruned, gs);
        let (local, local_map) = prune_off_path_edges(&trunc);
        if local.m() == 0 {
            return None;
        }
        let tli = match build_tree_labeling(&local, &td, gs, caps.space) {
            Ok(tli) => tli,
            Err(err) => {
                cap_err = Some(err);
                return None;
            }
        };
        let masks = match st_path_masks(&tli, caps.space) {
            Ok(masks) => masks,
            Err(err) => {
                cap_err = Some(err);
                return None;
            }
        };
        if masks.is_empty() {
            return None;
        }
        let model = build_labeling_lp(&tli, &masks);
        match solve_feasibility(&model) {
            Verdict::Feasible(p) => {
                let tables = sampler_tables(&tli, &masks, &p);
                let to_original =
                    local_map.iter().map(|&e| prune_map[trunc_map[e]]).collect();
                Some(TwProbe { inst: local, tli, tables, to_original })
            }
            Verdict::Infeasible => None,
        }
    };
    let search = doubling_search(&pruned.sum_guess(), probe);
    if let Some(err) = cap_err {
        // A capped probe makes the search verdict unreliable; surface it.
        return Err(SolveError::Labeling(err));
    }
    let result = match search {
        Ok(result) => result,
        Err(DoublingError::NeverFeasible) => return Err(SolveError::NoPath),
        Err(DoublingError::Stalled) => return Err(SolveError::Stalled),
    };
    Ok(LabelingSearch {
        probe: result.witness,
        gs_star: result.gs_star,
        probes: result.probes,
    })
}

/// Bounded-width pipeline: one decomposition of the pruned graph, halving
/// search over the labeling relaxation with per-guess truncation, then
/// repeated conditional sampling keeping the best extracted path.
pub fn solve_treewidth(
    instance: &Instance,
    opts: &SolveOptions,
    caps: &TwCaps,
) -> Result<SolveReport, SolveError> {
    let search = search_labeling(instance, caps)?;
    let probe = search.probe;
    let h = probe.tli.height();
    let threshold = tail_threshold(h, instance.k(), &search.gs_star);
    let trials = opts.trials.max(1);
    let mut best: Option<(Rat, StPath)> = None;
    let mut tail_hits = 0usize;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(trial as u64);
        let la = sample_assignment(&probe.tli, &probe.tables, &mut rng);
        // Tail accounting charges the whole sampled subgraph, scaled back to
        // raw costs; the extracted path can only be cheaper.
        let worst = (0..instance.k())
            .map(|i| assignment_cost(&probe.tli, &la, i) * search.gs_star.clone())
            .max()
            .unwrap_or_else(rat_zero);
        if worst > threshold {
            tail_hits += 1;
        }
        let local = labeling_to_path(&probe.inst, probe.tli.td(), &la)
            .expect("consistent labeling charts a source-sink path");
        let edges: Vec<EdgeId> = local.edges().iter().map(|&e| probe.to_original[e]).collect();
        let path = StPath::new(instance, edges).expect("mapped path stays valid");
        let value = minimax_value(instance, &path);
        match &best {
            Some((cur, _)) if *cur <= value => {}
            _ => best = Some((value, path)),
        }
    }
    let (value, path) = best.expect("at least one trial runs");
    Ok(SolveReport {
        path,
        value,
        gs_star: search.gs_star,
        probes: search.probes,
        height: h,
        trials,
        tail_hits,
    })
}

/// Moment and tail statistics of the labeling sampler at the search's final
/// guess, for empirical comparison against the proved ceilings.
pub fn treewidth_moment_report(
    instance: &Instance,
    caps: &TwCaps,
    trials: usize,
    seed: u64,
) -> Result<MomentReport, SolveError> {
    let search = search_labeling(instance, caps)?;
    Ok(moment_check_labeling(&search.probe.tli, trials, seed)?)
}
