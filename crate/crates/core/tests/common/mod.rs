//! Shared oracles for the integration tests.
#![allow(dead_code)]

use bcbf_core::qp::{LinearRow, QpProblem};
use bcbf_core::{Matrix, Vector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Every constraint as `a.u >= b`, box bounds included.
fn all_halfspaces(p: &QpProblem) -> Vec<(Vector, f64)> {
    let m = p.dim();
    let mut out: Vec<(Vector, f64)> = p.rows.iter().map(|r| (r.a.clone(), r.b)).collect();
    for j in 0..m {
        let mut e = Vector::zeros(m);
        e[j] = 1.0;
        out.push((e.clone(), p.lower[j]));
        out.push((-e, -p.upper[j]));
    }
    out
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// The projection lies in the relative interior of some face, so it is the
/// closest feasible point among projections onto the affine hulls spanned by
/// at most `dim` constraints. `None` means the polytope is empty.
pub fn brute_force(p: &QpProblem) -> Option<Vector> {
    let hs = all_halfspaces(p);
    let feasible = |u: &Vector| hs.iter().all(|(a, b)| a.dot(u) - b >= -1e-9);
    let mut best: Option<(f64, Vector)> = None;
    for k in 0..=p.dim() {
        for s in subsets(hs.len(), k) {
            let u = if k == 0 {
                p.u0.clone()
            } else {
                let a = Matrix::from_fn(k, p.dim(), |r, c| hs[s[r]].0[c]);
                let rhs = Vector::from_iterator(k, s.iter().map(|&i| hs[i].1)) - &a * &p.u0;
                let gram = &a * a.transpose();
                if gram.determinant().abs() < 1e-10 {
                    continue;
                }
                let lambda = gram.lu().solve(&rhs).expect("nonsingular");
                &p.u0 + a.transpose() * lambda
            };
            if feasible(&u) {
                let d = (&u - &p.u0).norm_squared();
                if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                    best = Some((d, u));
                }
            }
        }
    }
    best.map(|(_, u)| u)
}

pub fn random_problem(rng: &mut ChaCha8Rng, force_feasible: bool) -> QpProblem {
    let m = rng.random_range(1..=3);
    let rows = rng.random_range(0..=6);
    let lower = Vector::from_fn(m, |_, _| rng.random_range(-3.0..0.0));
    let upper = Vector::from_fn(m, |_, _| rng.random_range(0.1..3.0));
    let u0 = Vector::from_fn(m, |_, _| rng.random_range(-5.0..5.0));
    let anchor = Vector::from_fn(m, |j, _| rng.random_range(lower[j]..upper[j]));
    let rows = (0..rows)
        .map(|_| {
            let a = Vector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));
            let b = if force_feasible {
                a.dot(&anchor) - rng.random_range(0.0..1.0)
            } else {
                rng.random_range(-3.0..3.0)
            };
            LinearRow::new(a, b)
        })
        .collect();
    QpProblem::new(u0, rows, lower, upper)
}
