mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ccm_core::lp::{lex_refine_from, solve_lp, LpProblem, LpStatus};

use common::{close, random_micro_lp, vertex_oracle};

#[test]
fn random_micro_lps_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_611);
    let mut counts = [0usize; 3];
    for case in 0..200 {
        let p = random_micro_lp(&mut rng);
        let oracle = vertex_oracle(&p);
        let sol = solve_lp(&p).unwrap_or_else(|e| panic!("case {case}: {e}\n{p:?}"));
        assert_eq!(sol.status, oracle.status, "case {case}: {p:?}");
        counts[sol.status as usize] += 1;
        if sol.status == LpStatus::Optimal {
            assert!(
                close(sol.objective, oracle.objective, 1e-6),
                "case {case}: simplex {} vs vertices {}",
                sol.objective,
                oracle.objective
            );
            assert!(p.max_violation(&sol.primal) <= 1e-7, "case {case}");
            let gap = sol.objective - p.dual_objective(&sol.duals, &sol.reduced_costs);
            assert!(gap.abs() <= 1e-6 * (1.0 + sol.objective.abs()), "case {case}: gap {gap}");
        }
    }
    // the generator must exercise every outcome
    assert!(counts.iter().all(|&c| c > 0), "{counts:?}");
}

#[test]
fn lex_refinement_keeps_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut refined = 0;
    for _ in 0..200 {
        let p = random_micro_lp(&mut rng);
        let sol = solve_lp(&p).unwrap();
        if !sol.is_optimal() {
            continue;
        }
        let order: Vec<usize> = (0..p.num_vars()).collect();
        let lex = lex_refine_from(&p, &sol, &order).unwrap();
        assert!(close(lex.objective, sol.objective, 1e-6));
        assert!(p.max_violation(&lex.primal) <= 1e-6);
        refined += 1;
    }
    assert!(refined > 50);
}

#[test]
fn degenerate_vertex_with_many_tight_rows() {
    // four rows meet at (1, 1)
    let mut p = LpProblem::maximize(vec![1.0, 1.0]);
    p.less_eq(vec![1.0, 0.0], 1.0);
    p.less_eq(vec![0.0, 1.0], 1.0);
    p.less_eq(vec![1.0, 1.0], 2.0);
    p.less_eq(vec![2.0, 1.0], 3.0);
    let s = solve_lp(&p).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    assert!(close(s.objective, 2.0, 1e-9));
    assert_eq!(vertex_oracle(&p).objective, 2.0);
}

#[test]
fn unbounded_direction_detected_by_both() {
    let mut p = LpProblem::maximize(vec![1.0, -1.0]);
    p.less_eq(vec![-1.0, 1.0], 2.0);
    assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Unbounded);
    assert_eq!(vertex_oracle(&p).status, LpStatus::Unbounded);
}
