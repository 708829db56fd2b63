use ecop_core::cmdp::{exact_objective, optimal_deterministic_policy, EpisodicCmdp, PolicySequence, Signal};
use ecop_core::oracle::{
    brute_force_constrained_optimum, ipoce, ipoce_exact_step, lagrangian_dual_optimum, lemma1_check, random_cmdp,
    random_policy, theorem1_equivalence_check, BruteForceOptions, Enumeration, PolicyGrid,
};
use ecop_core::rng::rng_from_seed;

/// Two states (safe, hazard), two actions (cautious, greedy). The greedy
/// action pays more and usually lands in the hazard, which costs 1.
fn hazard_instance(horizon: usize, threshold: f64) -> EpisodicCmdp {
    let (s_n, a_n) = (2, 2);
    let mut transition = vec![0.0; s_n * a_n * s_n];
    let mut reward = vec![0.0; s_n * a_n * s_n];
    let mut cost = vec![0.0; s_n * a_n * s_n];
    for s in 0..s_n {
        for a in 0..a_n {
            let p_hazard = if a == 1 { 0.8 } else { 0.1 };
            for s2 in 0..s_n {
                let i = (s * a_n + a) * s_n + s2;
                transition[i] = if s2 == 1 { p_hazard } else { 1.0 - p_hazard };
                reward[i] = if a == 1 { 1.0 } else { 0.3 };
                cost[i] = if s2 == 1 { 1.0 } else { 0.0 };
            }
        }
    }
    EpisodicCmdp::new(s_n, a_n, horizon, transition, reward, vec![cost], vec![threshold], vec![1.0, 0.0]).unwrap()
}

fn unconstrained(cmdp: &EpisodicCmdp) -> EpisodicCmdp {
    cmdp.with_thresholds(vec![f64::INFINITY; cmdp.num_constraints()]).unwrap()
}

#[test]
fn brute_force_matches_backward_induction_without_constraints() {
    let mut rng = rng_from_seed(11);
    for _ in 0..5 {
        let cmdp = unconstrained(&random_cmdp(&mut rng, 2, 2, 2, 1));
        let (_, dp_value) = optimal_deterministic_policy(&cmdp, &[0.0]).unwrap();
        for g in [1, 4] {
            let grid = PolicyGrid::new(g, 2).unwrap();
            let bf = brute_force_constrained_optimum(&cmdp, &grid, BruteForceOptions::default()).unwrap();
            assert!(bf.feasible);
            assert!((bf.best_j - dp_value).abs() <= 1e-12, "grid {g}: {} vs {dp_value}", bf.best_j);
        }
    }
}

#[test]
fn impossible_budget_is_flagged_infeasible() {
    let cmdp = hazard_instance(2, -0.5);
    let grid = PolicyGrid::new(4, 2).unwrap();
    let bf = brute_force_constrained_optimum(&cmdp, &grid, BruteForceOptions::default()).unwrap();
    assert!(!bf.feasible);
    assert!(bf.best_policy.is_none());
}

#[test]
fn shuffled_enumeration_reproduces_golden_value() {
    let cmdp = hazard_instance(2, 0.8);
    let grid = PolicyGrid::new(4, 2).unwrap();
    let sequential = brute_force_constrained_optimum(&cmdp, &grid, BruteForceOptions::default()).unwrap();
    for seed in [1, 2, 3] {
        let shuffled = brute_force_constrained_optimum(
            &cmdp,
            &grid,
            BruteForceOptions { order: Enumeration::Shuffled(seed), ..Default::default() },
        )
        .unwrap();
        assert_eq!(shuffled.best_j, sequential.best_j);
        assert_eq!(shuffled.best_id, sequential.best_id);
    }
    assert!(sequential.feasible);
    assert!(sequential.best_costs[0] <= 0.8 + 1e-12);
    // The constrained optimum lies strictly between the all-cautious and the
    // all-greedy values.
    let cautious = exact_objective(&cmdp, &PolicySequence::deterministic(2, 2, 2, &[0; 4]).unwrap(), Signal::Reward).unwrap();
    let greedy = exact_objective(&cmdp, &PolicySequence::deterministic(2, 2, 2, &[1; 4]).unwrap(), Signal::Reward).unwrap();
    assert!(cautious < sequential.best_j && sequential.best_j < greedy);
}

#[test]
fn enumeration_budget_is_enforced() {
    let cmdp = hazard_instance(3, 0.8);
    let grid = PolicyGrid::new(4, 2).unwrap();
    let options = BruteForceOptions { budget: 1000, ..Default::default() };
    assert!(brute_force_constrained_optimum(&cmdp, &grid, options).is_err());
}

#[test]
fn dual_optimum_bounds_every_feasible_grid_policy() {
    let mut rng = rng_from_seed(5);
    for _ in 0..5 {
        let cmdp = random_cmdp(&mut rng, 2, 2, 2, 1);
        let grid = PolicyGrid::new(4, 2).unwrap();
        let bf = brute_force_constrained_optimum(&cmdp, &grid, BruteForceOptions::default()).unwrap();
        match lagrangian_dual_optimum(&cmdp).unwrap() {
            Some(dual) => {
                assert!(bf.feasible);
                assert!(dual.value >= bf.best_j - 1e-9, "{} < {}", dual.value, bf.best_j);
            }
            None => assert!(!bf.feasible),
        }
    }
}

#[test]
fn identical_policies_give_zero_difference() {
    let mut rng = rng_from_seed(3);
    let cmdp = random_cmdp(&mut rng, 4, 3, 5, 1);
    let p = random_policy(&mut rng, 5, 4, 3);
    let (lhs, rhs) = lemma1_check(&cmdp, &p, &p).unwrap();
    assert_eq!(lhs, 0.0);
    assert!(rhs.abs() <= 1e-12);
}

#[test]
fn last_step_is_greedy_without_constraints() {
    let mut rng = rng_from_seed(8);
    let cmdp = unconstrained(&random_cmdp(&mut rng, 3, 2, 3, 1));
    let prev = random_policy(&mut rng, 3, 3, 2);
    let grid = PolicyGrid::new(4, 2).unwrap();
    let sol = ipoce_exact_step(&cmdp, &prev, &prev, 2, &grid, 10_000_000).unwrap();
    assert!(sol.feasible);
    let (greedy, _) = optimal_deterministic_policy(&cmdp.with_horizon(1).unwrap(), &[0.0]).unwrap();
    for s in 0..3 {
        let row = sol.policy.row(2, s);
        assert!(row.iter().any(|p| *p == 1.0), "step-H row {row:?} is not a vertex");
        assert_eq!(row, greedy.row(0, s));
    }
}

#[test]
fn constrained_step_satisfies_its_surrogate_constraint() {
    let cmdp = hazard_instance(2, 1.0);
    let greedy = PolicySequence::deterministic(2, 2, 2, &[1; 4]).unwrap();
    let grid = PolicyGrid::new(4, 2).unwrap();
    let sol = ipoce_exact_step(&cmdp, &greedy, &greedy, 1, &grid, 10_000_000).unwrap();
    assert!(sol.feasible);
    // Rows before t are unchanged, so the surrogate constraint at t equals the
    // exact cost of the candidate.
    let cost = exact_objective(&cmdp, &sol.policy, Signal::Cost(0)).unwrap();
    assert!(cost <= 1.0 + 1e-9, "cost {cost}");
}

#[test]
fn ipoce_reaches_the_brute_force_optimum() {
    let cmdp = hazard_instance(2, 0.8);
    let grid = PolicyGrid::new(4, 2).unwrap();
    let bf = brute_force_constrained_optimum(&cmdp, &grid, BruteForceOptions::default()).unwrap();
    let init = PolicySequence::uniform(2, 2, 2);
    let result = ipoce(&cmdp, &init, &grid, 50, 10_000_000).unwrap();
    let (j, costs) = result.history.last().unwrap();
    assert!(costs[0] <= 0.8 + 1e-9, "final cost {}", costs[0]);
    assert!((j - bf.best_j).abs() <= 0.05 * bf.best_j.abs(), "ipoce {j} vs brute force {}", bf.best_j);
}

#[test]
fn theorem1_holds_on_the_hazard_instance() {
    let grid = PolicyGrid::new(4, 2).unwrap();
    let loose = hazard_instance(2, 0.8);
    let best = brute_force_constrained_optimum(&loose, &grid, BruteForceOptions::default()).unwrap();
    // Budget equal to the constrained grid optimum's cost: the constraint is
    // active there, so the multiplier iteration has a fixed point.
    let cmdp = loose.with_thresholds(best.best_costs).unwrap();
    let report = theorem1_equivalence_check(&cmdp, &grid, &[0.1, 1.0, 5.0, 20.0], 10_000_000).unwrap();
    assert!(report.monotone);
    assert!(report.rows.last().unwrap().coincident);
    let tiny = theorem1_equivalence_check(&cmdp, &grid, &[1e-5], 10_000_000).unwrap();
    assert!(!tiny.rows[0].minimizer_feasible);
}

#[test]
fn theorem1_unconstrained_coincides_for_every_beta() {
    let cmdp = unconstrained(&hazard_instance(2, 0.8));
    let grid = PolicyGrid::new(4, 2).unwrap();
    let report = theorem1_equivalence_check(&cmdp, &grid, &[1e-5, 0.1, 1.0, 20.0], 10_000_000).unwrap();
    assert!(report.rows.iter().all(|r| r.coincident));
}
