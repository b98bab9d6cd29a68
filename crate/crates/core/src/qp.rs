//! Dense QP `min |u - u0|^2` s.t. `a_i^T u >= b_i` and `lower <= u <= upper`.
//!
//! Dual active-set method (Goldfarb-Idnani) specialised to the identity
//! Hessian: every iterate is the projection of `u0` onto the affine hull of its
//! active set, so the start point is `u0` itself and warm starts only need the
//! previous active indices. Box bounds are appended internally as rows.

use std::cmp::Ordering;

use serde::Serialize;

use crate::{Error, Matrix, Result, Vector};

/// Primal feasibility tolerance used to decide whether a constraint is violated.
pub const FEAS_TOL: f64 = 1e-12;
const ZERO_NORM: f64 = 1e-14;

/// One inequality `a^T u >= b`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearRow {
    pub a: Vector,
    pub b: f64,
}

impl LinearRow {
    pub fn new(a: Vector, b: f64) -> Self {
        Self { a, b }
    }

    pub fn slack(&self, u: &Vector) -> f64 {
        self.a.dot(u) - self.b
    }
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub u0: Vector,
    pub rows: Vec<LinearRow>,
    pub lower: Vector,
    pub upper: Vector,
}

impl QpProblem {
    pub fn new(u0: Vector, rows: Vec<LinearRow>, lower: Vector, upper: Vector) -> Self {
        Self {
            u0,
            rows,
            lower,
            upper,
        }
    }

    pub fn dim(&self) -> usize {
        self.u0.len()
    }

    fn validate(&self) -> Result<()> {
        let m = self.dim();
        if m == 0 {
            return Err(Error::InvalidParameter("QP needs at least one variable".into()));
        }
        for (context, len) in [("QP lower bound", self.lower.len()), ("QP upper bound", self.upper.len())] {
            if len != m {
                return Err(Error::Dimension {
                    context,
                    expected: m,
                    actual: len,
                });
            }
        }
        crate::error::check_finite(self.u0.as_slice(), "QP nominal input")?;
        for row in &self.rows {
            if row.a.len() != m {
                return Err(Error::Dimension {
                    context: "QP row",
                    expected: m,
                    actual: row.a.len(),
                });
            }
            crate::error::check_finite(row.a.as_slice(), "QP row coefficients")?;
            crate::error::check_finite(&[row.b], "QP row bound")?;
        }
        for j in 0..m {
            if !(self.lower[j] <= self.upper[j]) {
                return Err(Error::InvalidParameter(format!(
                    "QP box is empty on coordinate {j}: [{}, {}]",
                    self.lower[j], self.upper[j]
                )));
            }
        }
        Ok(())
    }

    /// Rows followed by the `m` lower and `m` upper bound rows.
    fn all_rows(&self) -> Vec<LinearRow> {
        let m = self.dim();
        let mut rows = self.rows.clone();
        for j in 0..m {
            let mut e = Vector::zeros(m);
            e[j] = 1.0;
            rows.push(LinearRow::new(e, self.lower[j]));
        }
        for j in 0..m {
            let mut e = Vector::zeros(m);
            e[j] = -1.0;
            rows.push(LinearRow::new(e, -self.upper[j]));
        }
        rows
    }

    fn constraint_of(&self, index: usize) -> Constraint {
        let (r, m) = (self.rows.len(), self.dim());
        if index < r {
            Constraint::Row(index)
        } else if index < r + m {
            Constraint::Lower(index - r)
        } else {
            Constraint::Upper(index - r - m)
        }
    }

    fn index_of(&self, c: Constraint) -> Option<usize> {
        let (r, m) = (self.rows.len(), self.dim());
        match c {
            Constraint::Row(i) if i < r => Some(i),
            Constraint::Lower(j) if j < m => Some(r + j),
            Constraint::Upper(j) if j < m => Some(r + m + j),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum Constraint {
    Row(usize),
    Lower(usize),
    Upper(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

#[derive(Debug, Clone, Serialize)]
pub struct QpSolution {
    pub u_star: Vector,
    pub status: QpStatus,
    pub active_set: Vec<Constraint>,
    /// Multipliers matching `active_set`.
    pub multipliers: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

struct Active {
    index: usize,
    lambda: f64,
}

/// Normals of the active constraints as columns.
fn normals(rows: &[LinearRow], active: &[Active], m: usize) -> Matrix {
    let mut n = Matrix::zeros(m, active.len());
    for (col, a) in active.iter().enumerate() {
        n.set_column(col, &rows[a.index].a);
    }
    n
}

/// Splits `d` into its component orthogonal to the active normals (`z`) and
/// the coefficients `r` with `d = N r + z`.
fn decompose(n: &Matrix, d: &Vector) -> Result<(Vector, Vector)> {
    if n.ncols() == 0 {
        return Ok((d.clone(), Vector::zeros(0)));
    }
    let qr = n.clone().qr();
    let q = qr.q();
    let r_mat = qr.r();
    let proj = q.transpose() * d;
    let r = r_mat
        .solve_upper_triangular(&proj)
        .ok_or_else(|| Error::Solver("dependent active constraints".into()))?;
    let z = d - &q * proj;
    Ok((z, r))
}

fn most_violated(rows: &[LinearRow], u: &Vector, skip: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, row) in rows.iter().enumerate() {
        if skip[i] {
            continue;
        }
        let norm = row.a.norm();
        let violation = -row.slack(u) / norm;
        if violation > FEAS_TOL * (1.0 + row.b.abs() / norm)
            && best.is_none_or(|(_, v)| violation > v)
        {
            best = Some((i, violation));
        }
    }
    best.map(|(i, _)| i)
}

/// Solver carrying the previous active set for warm starts.
#[derive(Debug, Clone, Default)]
pub struct QpSolver {
    warm: Vec<Constraint>,
}

impl QpSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn warm_start(&self) -> &[Constraint] {
        &self.warm
    }

    pub fn reset(&mut self) {
        self.warm.clear();
    }

    pub fn solve(&mut self, problem: &QpProblem) -> Result<QpSolution> {
        let warm = std::mem::take(&mut self.warm);
        let solution = solve_from(problem, &warm)?;
        if solution.status == QpStatus::Optimal {
            self.warm = solution.active_set.clone();
        }
        Ok(solution)
    }
}

/// Cold-start solve.
pub fn solve(problem: &QpProblem) -> Result<QpSolution> {
    solve_from(problem, &[])
}

/// Solve starting from a guessed active set. Guesses that are not valid at the
/// optimum are dropped along the way, so the result does not depend on them.
pub fn solve_from(problem: &QpProblem, warm: &[Constraint]) -> Result<QpSolution> {
    problem.validate()?;
    let m = problem.dim();
    let rows = problem.all_rows();
    let total = rows.len();
    let max_changes = 100 * (problem.rows.len() + m);

    let mut skip = vec![false; total];
    for (i, row) in rows.iter().enumerate() {
        if row.a.norm() < ZERO_NORM {
            if row.b > 1e-9 {
                return Ok(finish(problem, &rows, problem.u0.clone(), &[], QpStatus::Infeasible, 0));
            }
            skip[i] = true;
        }
    }

    let mut changes = 0usize;
    let mut active: Vec<Active> = Vec::new();
    let mut u = problem.u0.clone();
    warm_start(problem, &rows, warm, &skip, &mut active, &mut u)?;

    let mut in_active = vec![false; total];
    for a in &active {
        in_active[a.index] = true;
    }

    loop {
        let mut blocked = skip.clone();
        for (b, &act) in blocked.iter_mut().zip(&in_active) {
            *b |= act;
        }
        let Some(p) = most_violated(&rows, &u, &blocked) else {
            return Ok(finish(problem, &rows, u, &active, QpStatus::Optimal, changes));
        };
        let np = &rows[p].a;
        let mut lambda_p = 0.0;
        loop {
            if changes >= max_changes {
                return Ok(finish(problem, &rows, u, &active, QpStatus::MaxIter, changes));
            }
            let n = normals(&rows, &active, m);
            let (z, r) = decompose(&n, np)?;
            let z_null = z.norm() <= 1e-11 * np.norm();

            // Largest dual step keeping the active multipliers nonnegative.
            let mut t_dual = f64::INFINITY;
            let mut leave = None;
            for (k, a) in active.iter().enumerate() {
                if r[k] > 1e-14 {
                    let t = a.lambda / r[k];
                    if t < t_dual {
                        t_dual = t;
                        leave = Some(k);
                    }
                }
            }
            let t_primal = if z_null {
                f64::INFINITY
            } else {
                -rows[p].slack(&u) / z.dot(np)
            };
            if z_null && leave.is_none() {
                return Ok(finish(problem, &rows, u, &active, QpStatus::Infeasible, changes));
            }
            let t = t_primal.min(t_dual);
            if !z_null {
                u += &z * t;
            }
            for (k, a) in active.iter_mut().enumerate() {
                a.lambda -= t * r[k];
            }
            lambda_p += t;
            changes += 1;
            if t_primal <= t_dual {
                active.push(Active {
                    index: p,
                    lambda: lambda_p,
                });
                in_active[p] = true;
                break;
            }
            let k = leave.expect("dual step limited by an active constraint");
            in_active[active[k].index] = false;
            active.remove(k);
        }
    }
}

/// Projects `u0` onto the affine hull of the usable warm-start constraints and
/// drops those whose multiplier comes out negative.
fn warm_start(
    problem: &QpProblem,
    rows: &[LinearRow],
    warm: &[Constraint],
    skip: &[bool],
    active: &mut Vec<Active>,
    u: &mut Vector,
) -> Result<()> {
    let m = problem.dim();
    let mut chosen: Vec<usize> = Vec::new();
    for &c in warm {
        let Some(i) = problem.index_of(c) else { continue };
        if skip[i] || chosen.contains(&i) || chosen.len() == m {
            continue;
        }
        let mut trial = chosen.clone();
        trial.push(i);
        let probe: Vec<Active> = trial.iter().map(|&index| Active { index, lambda: 0.0 }).collect();
        let n = normals(rows, &probe, m);
        let smallest = n.clone().svd(false, false).singular_values.min();
        if smallest > 1e-9 * rows[i].a.norm() {
            chosen = trial;
        }
    }
    loop {
        if chosen.is_empty() {
            *u = problem.u0.clone();
            active.clear();
            return Ok(());
        }
        let probe: Vec<Active> = chosen.iter().map(|&index| Active { index, lambda: 0.0 }).collect();
        let n = normals(rows, &probe, m);
        let b = Vector::from_iterator(chosen.len(), chosen.iter().map(|&i| rows[i].b));
        let gram = n.transpose() * &n;
        let lambda = gram
            .cholesky()
            .ok_or_else(|| Error::Solver("singular warm-start active set".into()))?
            .solve(&(b - n.transpose() * &problem.u0));
        let (worst, value) = lambda
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(Ordering::Equal))
            .map(|(k, v)| (k, *v))
            .expect("non-empty");
        if value < 0.0 {
            chosen.remove(worst);
            continue;
        }
        *u = &problem.u0 + &n * &lambda;
        *active = chosen
            .iter()
            .zip(lambda.iter())
            .map(|(&index, &lambda)| Active { index, lambda })
            .collect();
        return Ok(());
    }
}

fn finish(
    problem: &QpProblem,
    rows: &[LinearRow],
    mut u: Vector,
    active: &[Active],
    status: QpStatus,
    iterations: usize,
) -> QpSolution {
    if status == QpStatus::Optimal {
        // Active bounds hold up to rounding; snap them exactly.
        for j in 0..u.len() {
            u[j] = u[j].clamp(problem.lower[j], problem.upper[j]);
        }
    }
    let mut stationarity = &u - &problem.u0;
    let mut complementarity: f64 = 0.0;
    for a in active {
        stationarity -= &rows[a.index].a * a.lambda;
        complementarity = complementarity.max((a.lambda * rows[a.index].slack(&u)).abs());
    }
    let feasibility = rows
        .iter()
        .map(|r| (-r.slack(&u)).max(0.0))
        .fold(0.0, f64::max);
    let mut order: Vec<&Active> = active.iter().collect();
    order.sort_by_key(|a| a.index);
    QpSolution {
        kkt_residual: stationarity.amax().max(feasibility).max(complementarity),
        active_set: order.iter().map(|a| problem.constraint_of(a.index)).collect(),
        multipliers: order.iter().map(|a| a.lambda).collect(),
        u_star: u,
        status,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn unconstrained_minimum_is_returned_when_feasible() {
        let p = QpProblem::new(
            v(&[0.5, -0.5]),
            vec![LinearRow::new(v(&[1.0, 1.0]), -3.0)],
            v(&[-5.0, -5.0]),
            v(&[5.0, 5.0]),
        );
        let s = solve(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert_eq!(s.u_star, p.u0);
        assert!(s.active_set.is_empty());
    }

    #[test]
    fn half_space_projection() {
        let p = QpProblem::new(
            v(&[0.0, 0.0]),
            vec![LinearRow::new(v(&[1.0, 1.0]), 3.0)],
            v(&[-5.0, -5.0]),
            v(&[5.0, 5.0]),
        );
        let s = solve(&p).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.u_star - v(&[1.5, 1.5])).amax() < 1e-14);
        assert_eq!(s.active_set, vec![Constraint::Row(0)]);
        assert!(s.kkt_residual < 1e-12);
    }

    #[test]
    fn row_beyond_box_is_infeasible() {
        let p = QpProblem::new(
            v(&[0.0, 0.0]),
            vec![LinearRow::new(v(&[1.0, 0.0]), 10.0)],
            v(&[-5.0, -5.0]),
            v(&[5.0, 5.0]),
        );
        assert_eq!(solve(&p).unwrap().status, QpStatus::Infeasible);
    }

    #[test]
    fn zero_rows_are_skipped_or_flagged() {
        let ok = QpProblem::new(
            v(&[1.0]),
            vec![LinearRow::new(v(&[0.0]), -1.0)],
            v(&[-2.0]),
            v(&[2.0]),
        );
        assert_eq!(solve(&ok).unwrap().status, QpStatus::Optimal);
        let bad = QpProblem::new(
            v(&[1.0]),
            vec![LinearRow::new(v(&[0.0]), 1.0)],
            v(&[-2.0]),
            v(&[2.0]),
        );
        assert_eq!(solve(&bad).unwrap().status, QpStatus::Infeasible);
    }

    #[test]
    fn clipping_to_box() {
        let p = QpProblem::new(v(&[10.0]), vec![], v(&[-5.0]), v(&[5.0]));
        let s = solve(&p).unwrap();
        assert_eq!(s.u_star[0], 5.0);
        assert_eq!(s.active_set, vec![Constraint::Upper(0)]);
    }

    #[test]
    fn bad_dimensions_are_rejected() {
        let p = QpProblem::new(
            v(&[0.0, 0.0]),
            vec![LinearRow::new(v(&[1.0]), 0.0)],
            v(&[-1.0, -1.0]),
            v(&[1.0, 1.0]),
        );
        assert!(matches!(solve(&p), Err(Error::Dimension { .. })));
        let q = QpProblem::new(v(&[0.0]), vec![], v(&[1.0]), v(&[-1.0]));
        assert!(matches!(solve(&q), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn warm_start_with_wrong_guess_gives_same_answer() {
        let p = QpProblem::new(
            v(&[2.0, -1.0]),
            vec![
                LinearRow::new(v(&[-1.0, 0.5]), 0.2),
                LinearRow::new(v(&[0.3, 1.0]), 0.1),
            ],
            v(&[-1.0, -1.0]),
            v(&[1.0, 1.0]),
        );
        let cold = solve(&p).unwrap();
        for guess in [
            vec![Constraint::Lower(0), Constraint::Upper(1)],
            vec![Constraint::Row(1)],
            cold.active_set.clone(),
            vec![Constraint::Row(7)],
        ] {
            let warm = solve_from(&p, &guess).unwrap();
            assert_eq!(warm.status, cold.status);
            assert!((warm.u_star - &cold.u_star).amax() < 1e-12);
        }
    }
}
