mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{SmallLp, SmallSocp};
use wpmec::solver::{check_kkt, solve, ConeProblem, SocBlock, Status, KKT_ACCEPT_TOL};

fn lp(seed: u64) -> SmallLp {
    SmallLp::random(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn socp(seed: u64) -> SmallSocp {
    SmallSocp::random(&mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn covering_lp_lands_on_vertex() {
    let mut p = ConeProblem::new(2);
    p.objective = vec![1.0, 1.0];
    p.add_ge(vec![1.0, 2.0], 4.0);
    p.set_bounds(0, Some(0.0), None).set_bounds(1, Some(0.0), None);
    let s = solve(&p).unwrap();
    assert_eq!(s.status, Status::Optimal);
    assert!((s.x[0]).abs() < 1e-7 && (s.x[1] - 2.0).abs() < 1e-7, "{:?}", s.x);
    assert!((s.objective - 2.0).abs() < 1e-7);
    assert!(check_kkt(&p, &s).max() < 1e-8);
}

#[test]
fn contradictory_pair_is_infeasible() {
    let mut p = ConeProblem::new(1);
    p.objective = vec![1.0];
    p.add_le(vec![1.0], 0.0).add_ge(vec![1.0], 1.0);
    assert_eq!(solve(&p).unwrap().status, Status::Infeasible);
}

#[test]
fn diagonal_of_unit_disk() {
    // minimize -(x + y) over the unit disk: x = y = 1/sqrt(2).
    let mut p = ConeProblem::new(2);
    p.objective = vec![-1.0, -1.0];
    p.add_soc(SocBlock {
        a: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        b: vec![0.0, 0.0],
        c: vec![0.0, 0.0],
        d: 1.0,
    });
    let s = solve(&p).unwrap();
    let h = 0.5f64.sqrt();
    assert!((s.x[0] - h).abs() < 1e-7 && (s.x[1] - h).abs() < 1e-7);
    // By hand: the multiplier is (sqrt 2, 1, 1) and the slack (1, -h, -h),
    // so complementarity vanishes at the optimum.
    assert!(check_kkt(&p, &s).complementarity < 1e-7);
}

#[test]
fn shifted_primal_shows_in_residual() {
    let mut p = ConeProblem::new(1);
    p.objective = vec![1.0];
    p.add_ge(vec![1.0], 3.0);
    let mut s = solve(&p).unwrap();
    assert!((s.x[0] - 3.0).abs() < 1e-8);
    assert!(check_kkt(&p, &s).max() < 1e-8);
    s.x[0] -= 0.1;
    // Row scale is max(|row|, |rhs|) = 3.
    assert!(check_kkt(&p, &s).primal >= 0.1 / 3.0 - 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lp_matches_vertex_enumeration(seed in any::<u64>()) {
        let inst = lp(seed);
        let s = solve(&inst.to_problem()).unwrap();
        match inst.vertex_oracle() {
            Some(best) => {
                prop_assert_eq!(s.status, Status::Optimal);
                prop_assert!((s.objective - best).abs() <= 1e-6 * best.abs().max(1.0));
            }
            None => prop_assert_eq!(s.status, Status::Infeasible),
        }
    }

    #[test]
    fn socp_matches_grid_search(seed in any::<u64>()) {
        let inst = socp(seed);
        let s = solve(&inst.to_problem()).unwrap();
        match inst.grid_oracle() {
            Some(best) => {
                prop_assert_eq!(s.status, Status::Optimal);
                prop_assert!((s.objective - best).abs() <= 1e-3 * best.abs().max(1.0));
            }
            None => prop_assert_ne!(s.status, Status::Optimal),
        }
    }

    #[test]
    fn accepted_solutions_pass_kkt_and_weak_duality(seed in any::<u64>(), cone in any::<bool>()) {
        let p = if cone { socp(seed).to_problem() } else { lp(seed).to_problem() };
        let s = solve(&p).unwrap();
        if s.is_optimal() {
            prop_assert!(check_kkt(&p, &s).max() <= KKT_ACCEPT_TOL);
            let scale = s.objective.abs().max(1.0);
            prop_assert!(s.dual_objective <= s.objective + 1e-9 * scale);
        }
    }

    #[test]
    fn objective_scaling_keeps_argmin(seed in any::<u64>(), cone in any::<bool>()) {
        let p = if cone { socp(seed).to_problem() } else { lp(seed).to_problem() };
        let s = solve(&p).unwrap();
        prop_assume!(s.is_optimal());
        let mut q = p.clone();
        q.objective.iter_mut().for_each(|c| *c *= 10.0);
        let t = solve(&q).unwrap();
        prop_assert!(t.is_optimal());
        prop_assert!((t.objective - 10.0 * s.objective).abs() <= 1e-6 * t.objective.abs().max(1.0));
        for (a, b) in s.x.iter().zip(&t.x) {
            prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{:?} vs {:?}", s.x, t.x);
        }
    }
}
