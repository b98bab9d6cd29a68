//! First-order Lax-Friedrichs viability iteration.
//!
//! `V <- min(V, V + dt * H_hat)` with `V` starting at the constraint field
//! converges to the viability value whose zero superlevel set approximates the
//! maximal control invariant subset of the constraint set.

use rayon::prelude::*;
use serde::Serialize;

use super::{LevelGrid, MAX_DIMS};
use crate::systems::SystemModel;
use crate::{Error, Matrix, Result, Vector};

/// `max_{u in U} p^T (f(x) + g(x) u)` for a box `U`.
pub fn hamiltonian(model: &dyn SystemModel, x: &Vector, p: &Vector) -> f64 {
    hamiltonian_parts(&model.f(x), &model.g(x), model.input_lower(), model.input_upper(), p)
}

fn hamiltonian_parts(f: &Vector, g: &Matrix, lower: &Vector, upper: &Vector, p: &Vector) -> f64 {
    let mut h = p.dot(f);
    for j in 0..g.ncols() {
        let pg = p.dot(&g.column(j));
        let center = 0.5 * (upper[j] + lower[j]);
        let half = 0.5 * (upper[j] - lower[j]);
        h += pg.abs() * half + pg * center;
    }
    h
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HjSettings {
    pub dt: f64,
    pub tol: f64,
    pub max_steps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct HjReport {
    #[serde(skip)]
    pub grid: LevelGrid,
    pub steps: usize,
    pub converged: bool,
    /// `max |V_new - V|` at the last step.
    pub final_change: f64,
    /// Every step was pointwise nonincreasing.
    pub monotone: bool,
}

/// Per-node drift, input matrix and per-axis dissipation coefficients, flat.
struct NodeData {
    dims: usize,
    inputs: usize,
    f: Vec<f64>,
    /// Column-major `g` per node.
    g: Vec<f64>,
    alpha: Vec<f64>,
    center: Vec<f64>,
    half: Vec<f64>,
}

impl NodeData {
    fn hamiltonian(&self, flat: usize, p: &[f64]) -> f64 {
        let (d, m) = (self.dims, self.inputs);
        let f = &self.f[flat * d..(flat + 1) * d];
        let g = &self.g[flat * d * m..(flat + 1) * d * m];
        let mut h: f64 = f.iter().zip(p).map(|(a, b)| a * b).sum();
        for j in 0..m {
            let col = &g[j * d..(j + 1) * d];
            let pg: f64 = col.iter().zip(p).map(|(a, b)| a * b).sum();
            h += pg.abs() * self.half[j] + pg * self.center[j];
        }
        h
    }
}

fn node_data(model: &dyn SystemModel, grid: &LevelGrid) -> NodeData {
    let geometry = &grid.geometry;
    let d = geometry.dims();
    let m = model.input_dim();
    let lower = model.input_lower();
    let upper = model.input_upper();
    let center: Vec<f64> = (0..m).map(|j| 0.5 * (upper[j] + lower[j])).collect();
    let half: Vec<f64> = (0..m).map(|j| 0.5 * (upper[j] - lower[j])).collect();
    let per_node: Vec<(Vector, Matrix)> = (0..geometry.len())
        .into_par_iter()
        .map(|flat| {
            let x = geometry.node(flat);
            (model.f(&x), model.g(&x))
        })
        .collect();
    let mut data = NodeData {
        dims: d,
        inputs: m,
        f: Vec::with_capacity(per_node.len() * d),
        g: Vec::with_capacity(per_node.len() * d * m),
        alpha: Vec::with_capacity(per_node.len() * d),
        center,
        half,
    };
    for (f, g) in per_node {
        data.f.extend(f.iter());
        data.g.extend(g.iter());
        for i in 0..d {
            let mut drift = f[i];
            let mut spread = 0.0;
            for j in 0..m {
                drift += g[(i, j)] * data.center[j];
                spread += g[(i, j)].abs() * data.half[j];
            }
            data.alpha.push(drift.abs() + spread);
        }
    }
    data
}

/// Largest stable step: `cfl / max_x sum_i alpha_i(x) / dx_i`.
pub fn cfl_dt(model: &dyn SystemModel, grid: &LevelGrid, cfl: f64) -> Result<f64> {
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(Error::InvalidParameter(format!("CFL number must be in (0, 1], got {cfl}")));
    }
    let geometry = &grid.geometry;
    let data = node_data(model, grid);
    let d = geometry.dims();
    let rate = data
        .alpha
        .chunks(d)
        .map(|a| {
            a.iter()
                .enumerate()
                .map(|(i, ai)| ai / geometry.spacing(i))
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    Ok(if rate > 0.0 { cfl / rate } else { f64::INFINITY })
}

/// Neighbour offsets (in flat index) along one axis, or `None` at a
/// non-periodic edge.
fn neighbours(idx: usize, n: usize, stride: usize, periodic: bool) -> (Option<isize>, Option<isize>) {
    let s = stride as isize;
    let back = if idx > 0 {
        Some(-s)
    } else if periodic {
        Some((n as isize - 1) * s)
    } else {
        None
    };
    let fwd = if idx + 1 < n {
        Some(s)
    } else if periodic {
        Some(-(n as isize - 1) * s)
    } else {
        None
    };
    (back, fwd)
}

/// Iterates the viability update from `grid0` (taken as the constraint field).
pub fn solve_invariant(grid0: &LevelGrid, model: &dyn SystemModel, settings: &HjSettings) -> Result<HjReport> {
    let geometry = &grid0.geometry;
    if geometry.dims() != model.state_dim() {
        return Err(Error::Dimension {
            context: "grid axes",
            expected: model.state_dim(),
            actual: geometry.dims(),
        });
    }
    if !(settings.dt > 0.0 && settings.dt.is_finite()) || !(settings.tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "HJ step and tolerance must be positive, got dt = {}, tol = {}",
            settings.dt, settings.tol
        )));
    }
    let data = node_data(model, grid0);
    let dims = geometry.dims();
    let strides = geometry.strides();
    let spacing: Vec<f64> = (0..dims).map(|i| geometry.spacing(i)).collect();
    let limit = cfl_dt(model, grid0, 1.0)?;
    if settings.dt > limit {
        return Err(Error::Cfl {
            step: 0,
            detail: format!("dt = {} exceeds the CFL bound {limit}", settings.dt),
        });
    }
    // Trajectories leaving the grid would drive edge values to -inf. Clipping
    // at the smallest constraint value leaves the zero level set unchanged:
    // the viability value of max(h, floor) is max(V, floor).
    let floor = grid0.values.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);

    let mut values = grid0.values.clone();
    let mut monotone = true;
    let mut final_change = f64::INFINITY;
    for step in 1..=settings.max_steps {
        let current = &values;
        let next: Vec<f64> = (0..current.len())
            .into_par_iter()
            .map(|flat| {
                let mut rest = flat;
                let mut idx = [0usize; MAX_DIMS];
                for axis in (0..dims).rev() {
                    idx[axis] = rest % geometry.counts[axis];
                    rest /= geometry.counts[axis];
                }
                let v = current[flat];
                let mut p_avg = [0.0; MAX_DIMS];
                let mut dissipation = 0.0;
                for axis in 0..dims {
                    let (back, fwd) =
                        neighbours(idx[axis], geometry.counts[axis], strides[axis], geometry.periodic[axis]);
                    let at = |off: isize| current[(flat as isize + off) as usize];
                    let minus = back.map(|o| (v - at(o)) / spacing[axis]);
                    let plus = fwd.map(|o| (at(o) - v) / spacing[axis]);
                    let (pm, pp) = match (minus, plus) {
                        (Some(m), Some(p)) => (m, p),
                        (Some(m), None) => (m, m),
                        (None, Some(p)) => (p, p),
                        (None, None) => (0.0, 0.0),
                    };
                    p_avg[axis] = 0.5 * (pm + pp);
                    dissipation += 0.5 * data.alpha[flat * dims + axis] * (pp - pm);
                }
                let h = data.hamiltonian(flat, &p_avg[..dims]) + dissipation;
                v.min(v + settings.dt * h).max(floor)
            })
            .collect();
        let mut change: f64 = 0.0;
        for (new, old) in next.iter().zip(current.iter()) {
            if !new.is_finite() {
                return Err(Error::Cfl {
                    step,
                    detail: format!("non-finite value; reduce dt (now {})", settings.dt),
                });
            }
            if new > old {
                monotone = false;
            }
            change = change.max((new - old).abs());
        }
        values = next;
        final_change = change;
        if change < settings.tol {
            return Ok(HjReport {
                grid: LevelGrid::new(geometry.clone(), values)?,
                steps: step,
                converged: true,
                final_change,
                monotone,
            });
        }
    }
    Ok(HjReport {
        grid: LevelGrid::new(geometry.clone(), values)?,
        steps: settings.max_steps,
        converged: false,
        final_change,
        monotone,
    })
}
