use serde::Serialize;

use super::LevelGrid;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetMetrics {
    pub jaccard: f64,
    /// Cells in A but not in B, as a fraction of all cells.
    pub fraction_a_not_b: f64,
    pub fraction_b_not_a: f64,
    pub count_a: usize,
    pub count_b: usize,
    pub count_both: usize,
    pub count_total: usize,
    pub threshold: f64,
    /// Present when a dilation radius was requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerant: Option<TolerantMetrics>,
}

/// Differences that survive dilating the other set by `radius_cells`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TolerantMetrics {
    pub radius_cells: usize,
    pub fraction_a_not_b: f64,
    pub fraction_b_not_a: f64,
}

/// Compares the superlevel sets `{value >= threshold}` of two grids on the
/// same geometry.
pub fn compare_sets(a: &LevelGrid, b: &LevelGrid, threshold: f64, radius_cells: Option<usize>) -> Result<SetMetrics> {
    if !a.geometry.same_shape(&b.geometry) {
        return Err(Error::Geometry(format!(
            "grids differ: counts {:?} vs {:?}, bounds {:?}..{:?} vs {:?}..{:?}",
            a.geometry.counts, b.geometry.counts, a.geometry.lower, a.geometry.upper, b.geometry.lower, b.geometry.upper
        )));
    }
    let ma = a.membership(threshold);
    let mb = b.membership(threshold);
    let total = ma.len();
    let count_a = ma.iter().filter(|&&m| m).count();
    let count_b = mb.iter().filter(|&&m| m).count();
    let count_both = ma.iter().zip(&mb).filter(|(x, y)| **x && **y).count();
    let union = count_a + count_b - count_both;
    let frac = |n: usize| n as f64 / total as f64;
    let tolerant = radius_cells.map(|r| {
        let da = dilate(a, &ma, r);
        let db = dilate(b, &mb, r);
        TolerantMetrics {
            radius_cells: r,
            fraction_a_not_b: frac(ma.iter().zip(&db).filter(|(x, y)| **x && !**y).count()),
            fraction_b_not_a: frac(mb.iter().zip(&da).filter(|(x, y)| **x && !**y).count()),
        }
    });
    Ok(SetMetrics {
        jaccard: if union == 0 { 1.0 } else { count_both as f64 / union as f64 },
        fraction_a_not_b: frac(count_a - count_both),
        fraction_b_not_a: frac(count_b - count_both),
        count_a,
        count_b,
        count_both,
        count_total: total,
        threshold,
        tolerant,
    })
}

/// Marks every cell within Chebyshev distance `radius` of a member.
fn dilate(grid: &LevelGrid, member: &[bool], radius: usize) -> Vec<bool> {
    let g = &grid.geometry;
    let mut current = member.to_vec();
    for axis in 0..g.dims() {
        let n = g.counts[axis];
        let mut next = current.clone();
        for (flat, out) in next.iter_mut().enumerate() {
            if *out {
                continue;
            }
            let mut idx = g.unravel(flat);
            let centre = idx[axis];
            for d in 1..=radius {
                let mut hit = false;
                for candidate in [centre as isize - d as isize, (centre + d) as isize] {
                    let wrapped = if g.periodic[axis] {
                        Some(candidate.rem_euclid(n as isize) as usize)
                    } else if (0..n as isize).contains(&candidate) {
                        Some(candidate as usize)
                    } else {
                        None
                    };
                    if let Some(c) = wrapped {
                        idx[axis] = c;
                        hit |= current[g.ravel(&idx)];
                    }
                }
                if hit {
                    *out = true;
                    break;
                }
            }
        }
        current = next;
    }
    current
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hjgrid::GridGeometry;

    fn geom() -> GridGeometry {
        GridGeometry::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![10, 10], vec![false, false]).unwrap()
    }

    #[test]
    fn identical_and_disjoint_sets() {
        let a = LevelGrid::from_fn(geom(), |x| x[0]).unwrap();
        let same = compare_sets(&a, &a, 0.0, None).unwrap();
        assert_eq!(same.jaccard, 1.0);
        let b = LevelGrid::from_fn(geom(), |x| -x[0] - 0.01).unwrap();
        assert_eq!(compare_sets(&a, &b, 0.0, None).unwrap().jaccard, 0.0);
    }

    #[test]
    fn half_space_against_everything() {
        let a = LevelGrid::from_fn(geom(), |x| x[0]).unwrap();
        let b = LevelGrid::from_fn(geom(), |_| 1.0).unwrap();
        let m = compare_sets(&a, &b, 0.0, None).unwrap();
        assert!((m.fraction_b_not_a - 0.5).abs() < 1e-12);
        assert_eq!(m.fraction_a_not_b, 0.0);
    }

    #[test]
    fn dilation_absorbs_one_cell_shift() {
        let a = LevelGrid::from_fn(geom(), |x| x[0]).unwrap();
        let b = LevelGrid::from_fn(geom(), |x| x[0] - 0.25).unwrap();
        let m = compare_sets(&a, &b, 0.0, Some(1)).unwrap();
        assert!(m.fraction_a_not_b > 0.0);
        assert_eq!(m.tolerant.unwrap().fraction_a_not_b, 0.0);
    }

    #[test]
    fn geometry_mismatch_is_an_error() {
        let a = LevelGrid::from_fn(geom(), |x| x[0]).unwrap();
        let other = GridGeometry::new(vec![-1.0, -1.0], vec![1.0, 2.0], vec![10, 10], vec![false, false]).unwrap();
        let b = LevelGrid::from_fn(other, |x| x[0]).unwrap();
        assert!(matches!(compare_sets(&a, &b, 0.0, None), Err(Error::Geometry(_))));
    }
}
