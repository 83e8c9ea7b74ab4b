use super::*;
use crate::hardness::{gen_disjoint_paths_gap, gen_two_vertex_gap};
use crate::instance::brute_force_minimax;
use crate::ratio::{rat_frac, rat_int};
use crate::sp::recognize_sp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn feasible(v: &Verdict) -> bool {
    matches!(v, Verdict::Feasible(_))
}

#[test]
fn presolve_collapses_equality_chains() {
    // x0 = 1, x1 = x0, x2 = x1, and a redundant comparison between the ends.
    let mut m = LpModel::new(3);
    m.push_row(vec![(0, rat_int(1))], Relation::Eq, rat_int(1));
    m.push_row(vec![(1, rat_int(1)), (0, rat_int(-1))], Relation::Eq, rat_int(0));
    m.push_row(vec![(2, rat_int(1)), (1, rat_int(-1))], Relation::Eq, rat_int(0));
    m.push_row(vec![(2, rat_int(3)), (0, rat_int(-3))], Relation::Le, rat_int(0));
    match solve_feasibility_exact(&m) {
        Verdict::Feasible(x) => {
            assert_eq!(x, vec![rat_int(1), rat_int(1), rat_int(1)]);
            assert_eq!(m.max_violation(&x), rat_int(0));
        }
        Verdict::Infeasible => panic!("chain system is feasible"),
    }
    // Tightening the comparison makes the merged variable impossible.
    let mut bad = m.clone();
    bad.rows[3] = LpRow {
        coeffs: vec![(0, rat_int(-3)), (2, rat_int(4))],
        rel: Relation::Le,
        rhs: rat_int(0),
    };
    assert_eq!(solve_feasibility_exact(&bad), Verdict::Infeasible);
}

#[test]
fn presolve_pins_same_sign_zero_sums() {
    let mut m = LpModel::new(3);
    m.push_row(
        vec![(0, rat_int(1)), (1, rat_int(2)), (2, rat_int(1))],
        Relation::Eq,
        rat_int(0),
    );
    match solve_feasibility_exact(&m) {
        Verdict::Feasible(x) => assert_eq!(x, vec![rat_int(0); 3]),
        Verdict::Infeasible => panic!("zero sum is feasible"),
    }
    // Demanding mass on a pinned variable is a contradiction.
    m.push_row(vec![(1, rat_int(-1))], Relation::Le, rat_frac(-1, 2));
    assert_eq!(solve_feasibility_exact(&m), Verdict::Infeasible);
}

#[test]
fn presolve_solves_scaled_merges_alone() {
    // x1 = 2 x0 and x0 + x1 = 3 need no simplex at all.
    let mut m = LpModel::new(2);
    m.push_row(vec![(0, rat_int(2)), (1, rat_int(-1))], Relation::Eq, rat_int(0));
    m.push_row(vec![(0, rat_int(1)), (1, rat_int(1))], Relation::Eq, rat_int(3));
    match solve_feasibility_exact(&m) {
        Verdict::Feasible(x) => assert_eq!(x, vec![rat_int(1), rat_int(2)]),
        Verdict::Infeasible => panic!("scaled chain is feasible"),
    }
}

#[test]
fn minimize_reports_exact_optimum() {
    // min x0 + 2 x1  s.t.  x0 + x1 >= 1, x0 <= 3/4. Optimum 5/4 at (3/4, 1/4).
    let mut m = LpModel::new(2);
    m.objective = vec![(0, rat_int(1)), (1, rat_int(2))];
    m.push_row(vec![(0, rat_int(-1)), (1, rat_int(-1))], Relation::Le, rat_int(-1));
    m.push_row(vec![(0, rat_int(1))], Relation::Le, rat_frac(3, 4));
    match minimize(&m) {
        MinOutcome::Optimal { x, value } => {
            assert_eq!(value, rat_frac(5, 4));
            assert_eq!(m.max_violation(&x), rat_int(0));
        }
        other => panic!("expected optimum, got {other:?}"),
    }
}

#[test]
fn minimize_detects_unbounded_directions() {
    let mut m = LpModel::new(2);
    m.objective = vec![(0, rat_int(-1))];
    m.push_row(vec![(1, rat_int(1))], Relation::Le, rat_int(5));
    assert_eq!(minimize(&m), MinOutcome::Unbounded);

    let mut no_rows = LpModel::new(1);
    no_rows.objective = vec![(0, rat_int(-1))];
    assert_eq!(minimize(&no_rows), MinOutcome::Unbounded);
}

#[test]
fn float_and_exact_feasibility_verdicts_agree_on_random_systems() {
    for seed in 0..60u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let num_vars = rng.gen_range(2..=5);
        let mut m = LpModel::new(num_vars);
        for _ in 0..rng.gen_range(2..=6) {
            let coeffs: Vec<(usize, Rat)> = (0..num_vars)
                .filter_map(|v| {
                    let c = rng.gen_range(-3i64..=3);
                    (c != 0).then(|| (v, rat_int(c)))
                })
                .collect();
            let rel = if rng.gen_bool(0.3) { Relation::Eq } else { Relation::Le };
            m.push_row(coeffs, rel, rat_int(rng.gen_range(-2i64..=6)));
        }
        let fast = solve_feasibility(&m);
        let exact = solve_feasibility_exact(&m);
        assert_eq!(feasible(&fast), feasible(&exact), "verdicts differ on seed {seed}");
        if let Verdict::Feasible(x) = &exact {
            assert_eq!(m.max_violation(x), rat_int(0), "exact witness violates seed {seed}");
        }
        if let Verdict::Feasible(x) = &fast {
            assert!(
                m.max_violation(x) <= rat_frac(1, 1_000_000),
                "float witness too far off on seed {seed}"
            );
        }
    }
}

fn tree_of(instance: &Instance) -> RoundTree {
    let tree = recognize_sp(instance).expect("series-parallel");
    RoundTree::from_sp(&tree, instance)
}

#[test]
fn tree_relaxation_is_tight_on_the_parallel_bundle() {
    let inst = gen_two_vertex_gap(4);
    let tree = tree_of(&inst);
    let below = build_tree_lp(&tree, &rat_frac(9, 10), CostRows::SeriesOnly);
    assert_eq!(solve_feasibility_exact(&below), Verdict::Infeasible);
    let at = build_tree_lp(&tree, &rat_int(1), CostRows::SeriesOnly);
    assert!(feasible(&solve_feasibility_exact(&at)));

    // The fractional flow bound is k times weaker on the same instance.
    let (flow, _) = build_flow_min_lp(&inst);
    match minimize(&flow) {
        MinOutcome::Optimal { value, .. } => assert_eq!(value, rat_frac(1, 4)),
        other => panic!("expected flow optimum, got {other:?}"),
    }
}

#[test]
fn budget_rows_separate_the_disjoint_path_bundle() {
    // k disjoint paths of length k: every flow-style bound stays happy at
    // guess 1 while the per-node budgets pin the truth at k.
    let k = 4usize;
    let inst = gen_disjoint_paths_gap(k, k);
    let tree = tree_of(&inst);

    let below = build_tree_lp(&tree, &(rat_int(k as i64) - rat_frac(1, 100)), CostRows::SeriesOnly);
    assert_eq!(solve_feasibility_exact(&below), Verdict::Infeasible);
    let at = build_tree_lp(&tree, &rat_int(k as i64), CostRows::SeriesOnly);
    assert!(feasible(&solve_feasibility_exact(&at)));

    let weak = build_weak_tree_lp(&tree, &rat_int(1));
    assert!(feasible(&solve_feasibility_exact(&weak)), "root-only budget accepts guess 1");

    let (trunc, kept) = build_enh_flow_lp(&inst, &rat_int(1));
    assert_eq!(kept.len(), inst.m(), "no edge exceeds the guess on its own");
    assert!(feasible(&solve_feasibility_exact(&trunc)), "truncated flow accepts guess 1");

    match minimize(&build_flow_min_lp(&inst).0) {
        MinOutcome::Optimal { value, .. } => assert_eq!(value, rat_int(1)),
        other => panic!("expected flow optimum, got {other:?}"),
    }
}

#[test]
fn skipping_zero_cost_choose_rows_changes_nothing() {
    for seed in 0..6u64 {
        let inst = crate::gen::random_sp(seed, 24, 3, 6, 50_000);
        let tree = tree_of(&inst);
        let opt = brute_force_minimax(&inst, 60_000).unwrap().value.unwrap();
        let guesses = [opt.clone(), &opt * rat_frac(3, 4), &opt * rat_int(2), rat_frac(1, 3)];
        for gs in guesses {
            let full = solve_feasibility_exact(&build_tree_lp(&tree, &gs, CostRows::Full));
            let lean = solve_feasibility_exact(&build_tree_lp(&tree, &gs, CostRows::SeriesOnly));
            assert_eq!(
                feasible(&full),
                feasible(&lean),
                "modes disagree at seed {seed} guess {gs}"
            );
        }
    }
}

#[test]
fn halving_lands_within_twice_the_optimum() {
    for seed in 10..16u64 {
        let inst = crate::gen::random_sp(seed, 20, 3, 7, 50_000);
        let tree = tree_of(&inst);
        let opt = brute_force_minimax(&inst, 60_000).unwrap().value.unwrap();
        let result = doubling_search(&inst.sum_guess(), |gs| {
            match solve_feasibility_exact(&build_tree_lp(&tree, gs, CostRows::SeriesOnly)) {
                Verdict::Feasible(x) => Some(x),
                Verdict::Infeasible => None,
            }
        })
        .expect("search terminates");
        assert!(result.gs_star <= rat_int(2) * &opt, "guess too large on seed {seed}");
        assert!(result.probes.iter().any(|(_, ok)| *ok));
    }
}

#[test]
fn halving_probes_the_zero_guess_first() {
    let inst = crate::gen::random_sp(3, 12, 2, 0, 50_000); // all costs zero
    let tree = tree_of(&inst);
    let result = doubling_search(&inst.sum_guess(), |gs| {
        match solve_feasibility_exact(&build_tree_lp(&tree, gs, CostRows::SeriesOnly)) {
            Verdict::Feasible(x) => Some(x),
            Verdict::Infeasible => None,
        }
    })
    .expect("zero guess succeeds");
    assert_eq!(result.gs_star, rat_int(0));
    assert_eq!(result.probes, vec![(rat_int(0), true)]);
}

#[test]
fn halving_reports_hopeless_probes() {
    let err = doubling_search::<()>(&rat_int(8), |_| None).unwrap_err();
    assert_eq!(err, DoublingError::NeverFeasible);
}

#[test]
fn flow_conservation_rejects_disconnected_graphs() {
    // Two edges that never reach the sink.
    let inst = Instance::new(
        4,
        0,
        3,
        vec![(0, 1), (1, 2)],
        vec![vec![rat_int(1), rat_int(1)]],
    )
    .unwrap();
    let (model, _) = build_flow_min_lp(&inst);
    assert_eq!(minimize(&model), MinOutcome::Infeasible);
}

#[test]
fn model_dump_reads_back_sanely() {
    let mut m = LpModel::new(2);
    m.objective = vec![(1, rat_int(1))];
    m.push_row(vec![(0, rat_int(1)), (1, rat_frac(-1, 2))], Relation::Le, rat_int(3));
    m.push_row(vec![(0, rat_int(1))], Relation::Eq, rat_int(1));
    let text = m.to_text(&|v| format!("x{v}"));
    assert_eq!(
        text,
        "minimize: x1\nsubject to:\n  x0 - 0.5 x1 <= 3\n  x0 = 1\n"
    );
}
