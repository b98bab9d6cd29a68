//! Rectangular grids of scalar fields, a Hamilton-Jacobi viability solver on
//! them, and set-comparison metrics.
//!
//! Values are stored row-major with the last axis varying fastest. Periodic
//! axes hold `count` nodes spaced `(upper - lower) / count`, so `upper` itself
//! is the wrapped image of `lower`; other axes include both endpoints.

mod compare;
mod io;
mod scheme;

pub use compare::{compare_sets, SetMetrics, TolerantMetrics};
pub use io::{read_grid, read_grid_csv, read_grid_json, write_grid_csv, write_grid_json};
pub use scheme::{cfl_dt, hamiltonian, solve_invariant, HjReport, HjSettings};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::barrier::eval_h_value;
use crate::systems::{BackupPolicy, SafetySpec, SystemModel};
use crate::{Error, Result, Vector};

pub const MAX_DIMS: usize = 3;
pub const MIN_COUNT: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
    pub periodic: Vec<bool>,
}

impl GridGeometry {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, counts: Vec<usize>, periodic: Vec<bool>) -> Result<Self> {
        let g = Self {
            lower,
            upper,
            counts,
            periodic,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.lower.len();
        if d == 0 || d > MAX_DIMS {
            return Err(Error::Geometry(format!(
                "grids need 1 to {MAX_DIMS} axes, got {d}"
            )));
        }
        if self.upper.len() != d || self.counts.len() != d || self.periodic.len() != d {
            return Err(Error::Geometry(
                "lower, upper, counts and periodic must have one entry per axis".into(),
            ));
        }
        for axis in 0..d {
            if self.counts[axis] < MIN_COUNT {
                return Err(Error::Geometry(format!(
                    "axis {axis} has {} points; at least {MIN_COUNT} are required",
                    self.counts[axis]
                )));
            }
            let (l, u) = (self.lower[axis], self.upper[axis]);
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::Geometry(format!(
                    "axis {axis} has invalid bounds [{l}, {u}]"
                )));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        let span = self.upper[axis] - self.lower[axis];
        if self.periodic[axis] {
            span / self.counts[axis] as f64
        } else {
            span / (self.counts[axis] - 1) as f64
        }
    }

    pub fn coordinate(&self, axis: usize, index: usize) -> f64 {
        self.lower[axis] + index as f64 * self.spacing(axis)
    }

    /// Row-major stride of each axis.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims()];
        for axis in (0..self.dims().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * self.counts[axis + 1];
        }
        strides
    }

    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims()];
        for axis in (0..self.dims()).rev() {
            idx[axis] = flat % self.counts[axis];
            flat /= self.counts[axis];
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.counts)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn node(&self, flat: usize) -> Vector {
        let idx = self.unravel(flat);
        Vector::from_iterator(
            self.dims(),
            idx.iter().enumerate().map(|(axis, &i)| self.coordinate(axis, i)),
        )
    }

    /// Index of the node nearest to `value` along `axis`.
    pub fn nearest_index(&self, axis: usize, value: f64) -> Result<usize> {
        let h = self.spacing(axis);
        let (l, u) = (self.lower[axis], self.upper[axis]);
        let n = self.counts[axis];
        if self.periodic[axis] {
            let span = u - l;
            let r = (value - l).rem_euclid(span);
            return Ok(((r / h).round() as usize) % n);
        }
        if value < l - 0.5 * h || value > u + 0.5 * h || !value.is_finite() {
            return Err(Error::Geometry(format!(
                "coordinate {value} lies outside axis {axis} range [{l}, {u}]"
            )));
        }
        Ok((((value - l) / h).round().max(0.0) as usize).min(n - 1))
    }

    pub fn same_shape(&self, other: &GridGeometry) -> bool {
        self.counts == other.counts
            && self.periodic == other.periodic
            && self
                .lower
                .iter()
                .chain(&self.upper)
                .zip(other.lower.iter().chain(&other.upper))
                .all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelGrid {
    #[serde(flatten)]
    pub geometry: GridGeometry,
    pub values: Vec<f64>,
}

impl LevelGrid {
    pub fn new(geometry: GridGeometry, values: Vec<f64>) -> Result<Self> {
        geometry.validate()?;
        if values.len() != geometry.len() {
            return Err(Error::Dimension {
                context: "grid values",
                expected: geometry.len(),
                actual: values.len(),
            });
        }
        crate::error::check_finite(&values, "grid values")?;
        Ok(Self { geometry, values })
    }

    /// Samples `field` at every node in parallel.
    pub fn from_fn<F>(geometry: GridGeometry, field: F) -> Result<Self>
    where
        F: Fn(&Vector) -> f64 + Sync,
    {
        geometry.validate()?;
        let values = (0..geometry.len())
            .into_par_iter()
            .map(|flat| field(&geometry.node(flat)))
            .collect();
        Self::new(geometry, values)
    }

    pub fn dims(&self) -> usize {
        self.geometry.dims()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value_at(&self, idx: &[usize]) -> f64 {
        self.values[self.geometry.ravel(idx)]
    }

    pub fn membership(&self, threshold: f64) -> Vec<bool> {
        self.values.iter().map(|&v| v >= threshold).collect()
    }

    /// Number of nodes with value at or above `threshold`.
    pub fn count_at_least(&self, threshold: f64) -> usize {
        self.values.iter().filter(|&&v| v >= threshold).count()
    }

    /// Fixes `axis` at the node nearest `value` and drops it.
    pub fn slice(&self, axis: usize, value: f64) -> Result<LevelGrid> {
        let g = &self.geometry;
        if axis >= g.dims() {
            return Err(Error::Geometry(format!(
                "slice axis {axis} out of range for a {}-axis grid",
                g.dims()
            )));
        }
        if g.dims() == 1 {
            return Err(Error::Geometry("cannot slice a one-axis grid".into()));
        }
        let fixed = g.nearest_index(axis, value)?;
        let keep: Vec<usize> = (0..g.dims()).filter(|&a| a != axis).collect();
        let geometry = GridGeometry::new(
            keep.iter().map(|&a| g.lower[a]).collect(),
            keep.iter().map(|&a| g.upper[a]).collect(),
            keep.iter().map(|&a| g.counts[a]).collect(),
            keep.iter().map(|&a| g.periodic[a]).collect(),
        )?;
        let values = (0..geometry.len())
            .map(|flat| {
                let sub = geometry.unravel(flat);
                let mut idx = Vec::with_capacity(g.dims());
                let mut it = sub.into_iter();
                for a in 0..g.dims() {
                    idx.push(if a == axis { fixed } else { it.next().expect("index") });
                }
                self.value_at(&idx)
            })
            .collect();
        LevelGrid::new(geometry, values)
    }
}

/// Implicit barrier values at every node of `geometry`.
pub fn sweep_backup_h(
    model: &dyn SystemModel,
    policy: &dyn BackupPolicy,
    spec: &SafetySpec,
    geometry: &GridGeometry,
    horizon: f64,
    steps: usize,
) -> Result<LevelGrid> {
    geometry.validate()?;
    if geometry.dims() != model.state_dim() {
        return Err(Error::Dimension {
            context: "grid axes",
            expected: model.state_dim(),
            actual: geometry.dims(),
        });
    }
    let values = (0..geometry.len())
        .into_par_iter()
        .map(|flat| eval_h_value(model, policy, spec, &geometry.node(flat), horizon, steps).map(|e| e.h_value))
        .collect::<Result<Vec<f64>>>()?;
    LevelGrid::new(geometry.clone(), values)
}

/// `min_k h^C_k` at every node: the initial field for [`solve_invariant`].
pub fn constraint_grid(spec: &SafetySpec, geometry: &GridGeometry) -> Result<LevelGrid> {
    LevelGrid::from_fn(geometry.clone(), |x| spec.constraint_min(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> GridGeometry {
        GridGeometry::new(
            vec![0.0, -1.0, -std::f64::consts::PI],
            vec![1.0, 1.0, std::f64::consts::PI],
            vec![3, 5, 8],
            vec![false, false, true],
        )
        .unwrap()
    }

    #[test]
    fn ravel_round_trips() {
        let g = geom();
        for flat in 0..g.len() {
            assert_eq!(g.ravel(&g.unravel(flat)), flat);
        }
        assert_eq!(g.strides(), vec![40, 8, 1]);
        assert_eq!(g.node(0)[1], -1.0);
        assert!((g.coordinate(1, 4) - 1.0).abs() < 1e-15);
        assert!((g.spacing(2) - std::f64::consts::PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn nearest_index_wraps_periodic_axes() {
        let g = geom();
        assert_eq!(g.nearest_index(2, std::f64::consts::PI).unwrap(), 0);
        assert_eq!(g.nearest_index(1, 0.1).unwrap(), 2);
        assert!(g.nearest_index(1, 3.0).is_err());
    }

    #[test]
    fn invalid_geometry_is_rejected() {
        assert!(GridGeometry::new(vec![0.0], vec![1.0], vec![2], vec![false]).is_err());
        assert!(GridGeometry::new(vec![1.0], vec![0.0], vec![5], vec![false]).is_err());
        assert!(GridGeometry::new(vec![0.0; 4], vec![1.0; 4], vec![3; 4], vec![false; 4]).is_err());
        assert!(LevelGrid::new(
            GridGeometry::new(vec![0.0], vec![1.0], vec![3], vec![false]).unwrap(),
            vec![0.0, f64::NAN, 1.0]
        )
        .is_err());
    }

    #[test]
    fn slice_picks_nearest_plane() {
        let g = LevelGrid::from_fn(geom(), |x| x[0] + 10.0 * x[1] + 100.0 * x[2]).unwrap();
        let s = g.slice(1, 0.45).unwrap();
        assert_eq!(s.geometry.counts, vec![3, 8]);
        let expected = 1.0 + 10.0 * 0.5 + 100.0 * g.geometry.coordinate(2, 3);
        assert!((s.value_at(&[2, 3]) - expected).abs() < 1e-12);
        assert!(s.slice(0, 0.0).unwrap().slice(0, 0.0).is_err());
    }
}
