mod common;

use approx::assert_relative_eq;
use bcbf_core::qp::{solve, solve_from, LinearRow, QpProblem, QpSolver, QpStatus};
use bcbf_core::Vector;
use common::{brute_force, random_problem};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn v(x: &[f64]) -> Vector {
    Vector::from_column_slice(x)
}

#[test]
fn random_problems_match_face_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut optimal, mut infeasible) = (0, 0);
    for trial in 0..500 {
        let p = random_problem(&mut rng, trial % 3 != 0);
        let s = solve(&p).unwrap();
        match brute_force(&p) {
            Some(u) => {
                assert_eq!(s.status, QpStatus::Optimal, "trial {trial}: {p:?}");
                assert!((&s.u_star - &u).amax() < 1e-6, "trial {trial}: {} vs {}", s.u_star, u);
                assert!(s.kkt_residual < 1e-8, "trial {trial}: kkt {}", s.kkt_residual);
                optimal += 1;
            }
            None => {
                assert_eq!(s.status, QpStatus::Infeasible, "trial {trial}");
                infeasible += 1;
            }
        }
    }
    assert!(optimal > 300 && infeasible > 10, "{optimal} optimal, {infeasible} infeasible");
}

#[test]
fn worked_examples() {
    let inside = QpProblem::new(v(&[0.5, 0.5]), vec![LinearRow::new(v(&[1.0, 0.0]), -1.0)], v(&[-5.0, -5.0]), v(&[5.0, 5.0]));
    assert_eq!(solve(&inside).unwrap().u_star, v(&[0.5, 0.5]));

    let projection = QpProblem::new(v(&[0.0, 0.0]), vec![LinearRow::new(v(&[1.0, 1.0]), 3.0)], v(&[-5.0, -5.0]), v(&[5.0, 5.0]));
    let s = solve(&projection).unwrap();
    assert_relative_eq!(s.u_star[0], 1.5, epsilon = 1e-14);
    assert_relative_eq!(s.u_star[1], 1.5, epsilon = 1e-14);

    let empty = QpProblem::new(v(&[0.0, 0.0]), vec![LinearRow::new(v(&[1.0, 0.0]), 10.0)], v(&[-5.0, -5.0]), v(&[5.0, 5.0]));
    assert_eq!(solve(&empty).unwrap().status, QpStatus::Infeasible);
}

#[test]
fn warm_start_reaches_the_same_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut solver = QpSolver::new();
    let base = random_problem(&mut rng, true);
    let cold = solve(&base).unwrap();
    solver.solve(&base).unwrap();
    // Small perturbations of u0 and b, as between consecutive filter calls.
    for _ in 0..50 {
        let mut p = base.clone();
        for j in 0..p.dim() {
            p.u0[j] += rng.random_range(-0.05..0.05);
        }
        for r in &mut p.rows {
            r.b -= rng.random_range(0.0..0.01);
        }
        let warm = solver.solve(&p).unwrap();
        let reference = solve(&p).unwrap();
        assert_eq!(warm.status, reference.status);
        assert!((&warm.u_star - &reference.u_star).amax() < 1e-9);
    }
    let again = solve_from(&base, &cold.active_set).unwrap();
    assert!((again.u_star - cold.u_star).amax() < 1e-12);
    assert!(again.iterations <= cold.iterations);
}

proptest! {
    #[test]
    fn positive_row_scaling_leaves_the_solution_unchanged(seed in 0u64..10_000, scale in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_problem(&mut rng, true);
        let mut scaled = p.clone();
        for r in &mut scaled.rows {
            r.a *= scale;
            r.b *= scale;
        }
        let a = solve(&p).unwrap();
        let b = solve(&scaled).unwrap();
        prop_assert_eq!(a.status, b.status);
        prop_assert!((a.u_star - b.u_star).amax() < 1e-8);
    }

    #[test]
    fn optimum_is_feasible_and_no_farther_than_any_feasible_point(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_problem(&mut rng, true);
        let s = solve(&p).unwrap();
        prop_assert_eq!(s.status, QpStatus::Optimal);
        for r in &p.rows {
            prop_assert!(r.slack(&s.u_star) >= -1e-9);
        }
        let d = (&s.u_star - &p.u0).norm();
        for _ in 0..20 {
            let w = Vector::from_fn(p.dim(), |j, _| rng.random_range(p.lower[j]..=p.upper[j]));
            if p.rows.iter().all(|r| r.slack(&w) >= 0.0) {
                prop_assert!(d <= (&w - &p.u0).norm() + 1e-9);
            }
        }
    }
}
