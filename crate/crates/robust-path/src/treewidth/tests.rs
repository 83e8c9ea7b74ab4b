use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::labeling::bottom_up_labels;
use super::*;
use crate::gen::random_tw2;
use crate::instance::{
    brute_force_minimax, enumerate_simple_st_paths, path_cost, Instance, StPath,
};
use crate::ratio::{rat_int, rat_one, Rat};
use crate::round::tail_threshold;
use crate::solver::{SolveError, SolveOptions};

fn costs(rows: &[&[i64]]) -> Vec<Vec<Rat>> {
    rows.iter().map(|row| row.iter().map(|&v| rat_int(v)).collect()).collect()
}

/// Two entry branches funneling through one vertex, then two exit branches.
/// Vertices: source 0, entries 1 and 2, exit hops 3 and 5, funnel vertex 4,
/// sink 6. Optimum is the 1-3 entry with the 3-exit, worst cost 6.
fn funnel() -> Instance {
    Instance::new(
        7,
        0,
        6,
        vec![(0, 1), (0, 2), (1, 4), (2, 4), (4, 3), (3, 6), (4, 5), (5, 6)],
        costs(&[&[3, 1, 3, 1, 1, 1, 2, 2], &[1, 2, 1, 1, 2, 1, 1, 3]]),
    )
    .expect("valid instance")
}

/// Hand decomposition of the funnel: one bag per branch, terminals plus the
/// funnel vertex everywhere.
fn funnel_td() -> TreeDecomposition {
    TreeDecomposition::new(
        vec![vec![0, 4, 5, 6], vec![0, 3, 4, 6], vec![0, 2, 4, 6], vec![0, 1, 4, 6]],
        vec![None, Some(0), Some(0), Some(2)],
    )
    .expect("valid decomposition")
}

fn single_edge() -> (Instance, TreeDecomposition) {
    let inst = Instance::new(2, 0, 1, vec![(0, 1)], costs(&[&[1]])).expect("valid instance");
    let td = TreeDecomposition::new(vec![vec![0, 1]], vec![None]).expect("valid decomposition");
    (inst, td)
}

#[test]
fn hand_decomposition_validates() {
    let inst = funnel();
    let td = funnel_td();
    validate_decomposition(&td, &inst).expect("bag properties hold");
    assert_eq!(td.width(), 3);
    assert_eq!(td.height(), 3);
    assert_eq!(td.topological(), vec![0, 1, 2, 3]);
}

#[test]
fn decomposition_dump_is_stable() {
    let expected = "node 0: parent - bag {0,4,5,6}\n\
                    node 1: parent 0 bag {0,3,4,6}\n\
                    node 2: parent 0 bag {0,2,4,6}\n\
                    node 3: parent 2 bag {0,1,4,6}\n";
    assert_eq!(funnel_td().to_text(), expected);
}

#[test]
fn edges_home_at_the_unique_covering_bag() {
    let inst = funnel();
    let td = funnel_td();
    let homes = assign_highest_nodes(&td, &inst).expect("all edges covered");
    assert_eq!(homes[0], vec![6, 7]);
    assert_eq!(homes[1], vec![4, 5]);
    assert_eq!(homes[2], vec![1, 3]);
    assert_eq!(homes[3], vec![0, 2]);
    let total: usize = homes.iter().map(|h| h.len()).sum();
    assert_eq!(total, inst.m());
}

#[test]
fn label_bits_count_edges_and_ordered_pairs() {
    let inst = funnel();
    let td = funnel_td();
    let homes = assign_highest_nodes(&td, &inst).expect("all edges covered");
    // Four bag vertices give 12 ordered pairs; two homed edges on top.
    assert_eq!(label_bits(&td, &homes, 2), 14);
}

#[test]
fn raw_label_space_streams_and_caps() {
    let (inst, td) = single_edge();
    let homes = assign_highest_nodes(&td, &inst).expect("all edges covered");
    let all: Vec<NodeLabel> = enumerate_labels(&td, &homes, 0, 1 << 10)
        .expect("under cap")
        .collect();
    // One chosen bit, two ordered pairs.
    assert_eq!(all.len(), 8);
    assert!(matches!(
        enumerate_labels(&td, &homes, 0, 4),
        Err(TwError::SpaceCap { needed: 8, cap: 4 })
    ));
}

#[test]
fn realizable_labels_of_a_single_edge() {
    let (inst, td) = single_edge();
    let tli = build_tree_labeling(&inst, &td, &rat_one(), 1 << 16).expect("fits");
    // Either the edge is absent, or it is chosen and connects 0 to 1.
    assert_eq!(
        tli.labels(0),
        &[NodeLabel { chng: 0, conn: 0 }, NodeLabel { chng: 1, conn: 1 }]
    );
    let triples = consistent_triples(&tli, 0, 1 << 16).expect("under cap");
    // The root filter keeps only the source-to-sink connecting label.
    assert_eq!(triples, vec![Triple { node: 1, first: None, second: None }]);
}

#[test]
fn path_labeling_pins_root_connectivity() {
    let inst = funnel();
    let td = funnel_td();
    let path = StPath::new(&inst, vec![1, 3, 4, 5]).expect("valid path");
    let la = path_to_labeling(&inst, &td, &path);
    // Root bag {0,4,5,6}: the path leaves exactly source-funnel,
    // source-sink, funnel-sink connectivity and chooses no root edge.
    assert_eq!(la.node(0), NodeLabel { chng: 0, conn: 0b100101 });
    assert_eq!(la.node(0).conn.count_ones(), 3);
    check_label_assignment(&inst, &td, &la).expect("path labeling is consistent");
}

#[test]
fn path_labelings_round_trip_and_match_costs() {
    let inst = funnel();
    let td = funnel_td();
    let tli = build_tree_labeling(&inst, &td, &rat_one(), 1 << 16).expect("fits");
    for edges in [vec![0, 2, 4, 5], vec![0, 2, 6, 7], vec![1, 3, 4, 5], vec![1, 3, 6, 7]] {
        let path = StPath::new(&inst, edges).expect("valid path");
        let la = path_to_labeling(&inst, &td, &path);
        check_label_assignment(&inst, &td, &la).expect("consistent");
        // Unit guess keeps costs raw, so labeling cost equals path cost.
        let per_agent = path_cost(&inst, &path);
        for agent in 0..inst.k() {
            assert_eq!(assignment_cost(&tli, &la, agent), per_agent[agent]);
        }
        // Every node label is realizable.
        for v in 0..td.len() {
            assert!(tli.label_index(v, la.node(v)).is_some());
        }
        let back = labeling_to_path(&inst, &td, &la).expect("subgraph has a path");
        assert_eq!(back, path);
    }
}

#[test]
fn subgraph_labeling_yields_a_contained_path() {
    let inst = funnel();
    let td = funnel_td();
    let homes = assign_highest_nodes(&td, &inst).expect("all edges covered");
    // Both entry branches plus the exit via vertex 3.
    let chosen = [0usize, 1, 2, 3, 4, 5];
    let la = LabelAssignment::new(bottom_up_labels(&td, &homes, inst.edges(), &|e| {
        chosen.contains(&e)
    }));
    check_label_assignment(&inst, &td, &la).expect("consistent");
    let path = labeling_to_path(&inst, &td, &la).expect("subgraph has a path");
    // Deterministic BFS picks the lexicographically first branch.
    assert_eq!(path.edges(), &[0, 2, 4, 5]);
}

#[test]
fn validator_rejects_corrupted_labels() {
    let inst = funnel();
    let td = funnel_td();
    let path = StPath::new(&inst, vec![1, 3, 4, 5]).expect("valid path");
    let la = path_to_labeling(&inst, &td, &path);

    // Claiming extra connectivity at the root.
    let mut labels = la.labels().to_vec();
    labels[0].conn |= 1 << 1;
    assert_eq!(
        check_label_assignment(&inst, &td, &LabelAssignment::new(labels)),
        Err(TwError::Inconsistent(0))
    );

    // Choosing an edge without reflecting it in connectivity.
    let mut labels = la.labels().to_vec();
    labels[0].chng |= 1;
    assert_eq!(
        check_label_assignment(&inst, &td, &LabelAssignment::new(labels)),
        Err(TwError::Inconsistent(0))
    );

    // Out-of-range chosen bits.
    let mut labels = la.labels().to_vec();
    labels[1].chng = 4;
    assert_eq!(
        check_label_assignment(&inst, &td, &LabelAssignment::new(labels)),
        Err(TwError::Inconsistent(1))
    );

    // Dropping the source-sink claim at the root breaks the terminal rule
    // and the closure equality at once.
    let mut labels = la.labels().to_vec();
    labels[0].conn = 0;
    assert!(check_label_assignment(&inst, &td, &LabelAssignment::new(labels)).is_err());
}

#[test]
fn triples_match_the_membership_predicate() {
    let inst = funnel();
    let td = funnel_td();
    let tli = build_tree_labeling(&inst, &td, &rat_one(), 1 << 16).expect("fits");
    for v in 0..td.len() {
        let listed = consistent_triples(&tli, v, 1 << 20).expect("under cap");
        for t in &listed {
            let mut child_labels = Vec::new();
            if let Some(i) = t.first {
                child_labels.push(tli.labels(td.children(v)[0])[i]);
            }
            if let Some(i) = t.second {
                child_labels.push(tli.labels(td.children(v)[1])[i]);
            }
            assert!(triple_is_consistent(&tli, v, tli.labels(v)[t.node], &child_labels));
        }
        // Exhaustive cross-check over the full product space.
        let mut expected = 0usize;
        let arity = td.children(v).len();
        let l_v = tli.labels(v);
        match arity {
            0 => {
                for &lv in l_v {
                    if triple_is_consistent(&tli, v, lv, &[]) {
                        expected += 1;
                    }
                }
            }
            1 => {
                let l_u = tli.labels(td.children(v)[0]);
                for &lu in l_u {
                    for &lv in l_v {
                        if triple_is_consistent(&tli, v, lv, &[lu]) {
                            expected += 1;
                        }
                    }
                }
            }
            _ => {
                let l_u = tli.labels(td.children(v)[0]);
                let l_w = tli.labels(td.children(v)[1]);
                for &lu in l_u {
                    for &lw in l_w {
                        for &lv in l_v {
                            if triple_is_consistent(&tli, v, lv, &[lu, lw]) {
                                expected += 1;
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(listed.len(), expected);
    }
}

#[test]
fn labeling_brute_force_matches_the_path_oracle() {
    let inst = funnel();
    let td = funnel_td();
    let tli = build_tree_labeling(&inst, &td, &rat_one(), 1 << 16).expect("fits");
    let (value, la) = brute_force_tree_labeling(&tli, 1 << 20)
        .expect("under cap")
        .expect("sink reachable");
    assert_eq!(value, rat_int(6));
    let oracle = brute_force_minimax(&inst, 10_000).expect("under cap");
    assert_eq!(Some(value), oracle.value);
    check_label_assignment(&inst, &td, &la).expect("optimal labeling is consistent");
}

#[test]
fn heuristic_decomposition_covers_the_funnel() {
    let inst = funnel();
    let td = build_tree_decomposition(&inst, 10).expect("narrow graph");
    validate_decomposition(&td, &inst).expect("bag properties hold");
    // Raw width 2 plus the two terminals.
    assert!(td.width() <= 4, "width {}", td.width());
}

#[test]
fn long_chain_is_rebalanced_to_logarithmic_height() {
    let n = 34;
    let edges: Vec<(usize, usize)> = (0..n - 1).map(|v| (v, v + 1)).collect();
    let cost: Vec<Rat> = vec![rat_one(); edges.len()];
    let inst = Instance::new(n, 0, n - 1, edges, vec![cost]).expect("valid instance");
    let td = build_tree_decomposition(&inst, 10).expect("narrow graph");
    validate_decomposition(&td, &inst).expect("bag properties hold");
    assert!(td.height() <= 13, "height {}", td.height());
}

#[test]
fn random_narrow_graphs_decompose_and_label_consistently() {
    for seed in 0..10 {
        let inst = random_tw2(seed, 7, 10, 3, 7);
        let td = build_tree_decomposition(&inst, 10).expect("narrow graph");
        validate_decomposition(&td, &inst).expect("bag properties hold");
        let homes = assign_highest_nodes(&td, &inst).expect("all edges covered");
        let mut seen: Vec<usize> = homes.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..inst.m()).collect::<Vec<_>>(), "homes partition the edges");

        let tli = build_tree_labeling(&inst, &td, &rat_one(), 1 << 18).expect("fits");
        let (paths, truncated) = enumerate_simple_st_paths(&inst, 10_000);
        assert!(!truncated);
        for path in paths.iter().take(20) {
            let la = path_to_labeling(&inst, &td, path);
            check_label_assignment(&inst, &td, &la).expect("consistent");
            let per_agent = path_cost(&inst, path);
            for agent in 0..inst.k() {
                assert_eq!(assignment_cost(&tli, &la, agent), per_agent[agent]);
            }
            assert_eq!(&labeling_to_path(&inst, &td, &la).expect("has path"), path);
        }
    }
}

#[test]
fn wide_clique_tree_joins_get_binarized() {
    // Dense-ish small graphs can produce elimination trees whose raw shape
    // has three children under one node; the builder must repair that
    // instead of rejecting the graph.
    for seed in 0..50 {
        let n = 5 + (seed % 4) as usize;
        let inst = random_tw2(seed, n, n + 4, 2, 7);
        let td = build_tree_decomposition(&inst, 10).expect("narrow graph");
        validate_decomposition(&td, &inst).expect("bag properties hold");
        for v in 0..td.len() {
            assert!(td.children(v).len() <= 2, "seed {seed} node {v}");
        }
    }
}

#[test]
fn labeling_brute_force_matches_oracle_on_random_graphs() {
    for seed in 0..6 {
        let inst = random_tw2(seed, 6, 8, 2, 5);
        let td = build_tree_decomposition(&inst, 10).expect("narrow graph");
        let tli = build_tree_labeling(&inst, &td, &rat_one(), 1 << 18).expect("fits");
        let (value, _) = brute_force_tree_labeling(&tli, 1 << 20)
            .expect("under cap")
            .expect("sink reachable");
        let oracle = brute_force_minimax(&inst, 100_000).expect("under cap");
        assert_eq!(Some(value), oracle.value, "seed {seed}");
    }
}

#[test]
fn unique_path_collapses_the_sampler() {
    let inst = Instance::new(3, 0, 2, vec![(0, 1), (1, 2)], costs(&[&[1, 1]]))
        .expect("valid instance");
    let td = build_tree_decomposition(&inst, 10).expect("narrow graph");
    let tli = build_tree_labeling(&inst, &td, &rat_int(2), 1 << 16).expect("fits");
    let path = StPath::new(&inst, vec![0, 1]).expect("valid path");
    let want = path_to_labeling(&inst, &td, &path);
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let la = solve_tree_labeling(&tli, 1 << 16, &mut rng).expect("feasible");
        assert_eq!(la, want);
    }
}

#[test]
fn sampled_assignments_are_always_consistent() {
    let inst = funnel();
    let td = funnel_td();
    // Guess at the optimum: the relaxation holds a point mass on the best path.
    let tli = build_tree_labeling(&inst, &td, &rat_int(6), 1 << 16).expect("fits");
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let la = solve_tree_labeling(&tli, 1 << 16, &mut rng).expect("feasible");
        check_label_assignment(&inst, &td, &la).expect("sampled labeling is consistent");
        labeling_to_path(&inst, &td, &la).expect("sampled subgraph has a path");
    }
}

#[test]
fn relaxation_rejects_guesses_below_the_cheapest_agent_cost() {
    let inst = funnel();
    let td = funnel_td();
    // No path keeps the first agent at or below 3.
    let tli = build_tree_labeling(&inst, &td, &rat_int(3), 1 << 16).expect("fits");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(
        solve_tree_labeling(&tli, 1 << 16, &mut rng).unwrap_err(),
        TwError::Infeasible
    );
}

#[test]
fn moment_statistics_stay_under_the_proved_ceiling() {
    let inst = random_tw2(3, 7, 10, 4, 6);
    let td = build_tree_decomposition(&inst, 10).expect("narrow graph");
    let opt = brute_force_minimax(&inst, 100_000)
        .expect("under cap")
        .value
        .expect("sink reachable");
    let tli =
        build_tree_labeling(&inst, &td, &(opt * rat_int(2)), 1 << 18).expect("fits");
    let report = moment_check_labeling(&tli, 400, 7).expect("feasible");
    for agent in 0..inst.k() {
        assert!(
            report.moment_means[agent]
                <= report.moment_bound + 3.0 * report.moment_errs[agent] + 1e-9,
            "agent {agent}: mean {} vs bound {}",
            report.moment_means[agent],
            report.moment_bound
        );
        assert!(report.tail_freqs[agent] <= report.tail_bound + 0.05);
    }
}

#[test]
fn pipeline_solves_the_funnel() {
    let inst = funnel();
    let report = solve_treewidth(&inst, &SolveOptions::default(), &TwCaps::default())
        .expect("solvable");
    // Halving from the cost sum 14 stops at 7: expectation 4 for the first
    // agent is out of reach at 3.5.
    assert_eq!(report.gs_star, rat_int(7));
    assert!(report.value >= rat_int(6));
    assert!(report.value <= rat_int(10));
    assert!(report.value <= tail_threshold(report.height, inst.k(), &report.gs_star));
    assert_eq!(report.tail_hits, 0);
    assert_eq!(report.trials, 32);
}

#[test]
fn pipeline_handles_parallel_edge_hard_instances() {
    let inst = crate::hardness::gen_two_vertex_gap(4);
    let report = solve_treewidth(&inst, &SolveOptions::default(), &TwCaps::default())
        .expect("solvable");
    // Truncation removes every edge below guess 1, so the search stops there,
    // and any single edge costs exactly 1 at the worst agent.
    assert_eq!(report.gs_star, rat_one());
    assert_eq!(report.value, rat_one());
    assert_eq!(report.tail_hits, 0);
}

#[test]
fn pipeline_agrees_with_the_oracle_on_random_graphs() {
    for seed in [1, 4, 9] {
        let inst = random_tw2(seed, 6, 9, 2, 5);
        let report = solve_treewidth(&inst, &SolveOptions::default(), &TwCaps::default())
            .expect("solvable");
        let opt = brute_force_minimax(&inst, 100_000)
            .expect("under cap")
            .value
            .expect("sink reachable");
        assert!(report.value >= opt);
        assert!(
            report.value <= tail_threshold(report.height, inst.k(), &report.gs_star),
            "seed {seed}"
        );
    }
}

#[test]
fn caps_surface_as_errors() {
    let inst = funnel();
    assert!(matches!(
        build_tree_decomposition(&inst, 1),
        Err(TwError::WidthCapExceeded { cap: 1, .. })
    ));
    assert!(matches!(
        build_tree_labeling(&inst, &funnel_td(), &rat_one(), 2),
        Err(TwError::SpaceCap { cap: 2, .. })
    ));
    let narrow = TwCaps { width: 1, space: 1 << 18 };
    assert!(matches!(
        solve_treewidth(&inst, &SolveOptions::default(), &narrow),
        Err(SolveError::Labeling(TwError::WidthCapExceeded { .. }))
    ));
}

#[test]
fn unreachable_sink_reports_no_path() {
    let inst = Instance::new(3, 0, 2, vec![(0, 1)], costs(&[&[1]])).expect("valid instance");
    assert!(matches!(
        solve_treewidth(&inst, &SolveOptions::default(), &TwCaps::default()),
        Err(SolveError::NoPath)
    ));
}
