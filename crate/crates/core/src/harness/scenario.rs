use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::barrier::{FilterSettings, RowOptions};
use crate::hjgrid::GridGeometry;
use crate::systems::{make_benchmark, Benchmark, BenchmarkKind, ParamMap};
use crate::{Error, Matrix, Result, Vector};

/// Nominal ("legacy") controller whose input the filter modifies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Nominal {
    Constant {
        u: Vec<f64>,
    },
    /// `u = gain (reference - x) + offset`, `gain` given row by row.
    Proportional {
        gain: Vec<Vec<f64>>,
        reference: Vec<f64>,
        #[serde(default)]
        offset: Option<Vec<f64>>,
    },
    /// Piecewise-constant table; each entry holds from `t_s` until the next.
    Scripted {
        table: Vec<ScriptEntry>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub t_s: f64,
    pub u: Vec<f64>,
}

impl Nominal {
    pub fn input(&self, t: f64, x: &Vector) -> Vector {
        match self {
            Nominal::Constant { u } => Vector::from_column_slice(u),
            Nominal::Proportional {
                gain,
                reference,
                offset,
            } => {
                let k = Matrix::from_fn(gain.len(), reference.len(), |i, j| gain[i][j]);
                let mut u = k * (Vector::from_column_slice(reference) - x);
                if let Some(o) = offset {
                    u += Vector::from_column_slice(o);
                }
                u
            }
            Nominal::Scripted { table } => {
                let entry = table
                    .iter()
                    .rev()
                    .find(|e| e.t_s <= t)
                    .unwrap_or(&table[0]);
                Vector::from_column_slice(&entry.u)
            }
        }
    }

    fn validate(&self, n: usize, m: usize) -> Result<()> {
        let dim = |what: &'static str, expected: usize, actual: usize| {
            if expected == actual {
                Ok(())
            } else {
                Err(Error::Dimension {
                    context: what,
                    expected,
                    actual,
                })
            }
        };
        let finite = |v: &[f64]| crate::error::check_finite(v, "nominal controller");
        match self {
            Nominal::Constant { u } => {
                dim("nominal input", m, u.len())?;
                finite(u)
            }
            Nominal::Proportional {
                gain,
                reference,
                offset,
            } => {
                dim("nominal gain rows", m, gain.len())?;
                for row in gain {
                    dim("nominal gain columns", n, row.len())?;
                    finite(row)?;
                }
                dim("nominal reference", n, reference.len())?;
                finite(reference)?;
                if let Some(o) = offset {
                    dim("nominal offset", m, o.len())?;
                    finite(o)?;
                }
                Ok(())
            }
            Nominal::Scripted { table } => {
                if table.is_empty() {
                    return Err(Error::InvalidParameter("scripted nominal table is empty".into()));
                }
                for pair in table.windows(2) {
                    if !(pair[1].t_s > pair[0].t_s) {
                        return Err(Error::InvalidParameter(
                            "scripted nominal times must be strictly increasing".into(),
                        ));
                    }
                }
                for e in table {
                    dim("scripted nominal input", m, e.u.len())?;
                    finite(&e.u)?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSpec {
    pub axis: usize,
    pub value: f64,
}

/// Level-set grid settings. Missing bounds fall back to the benchmark defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelsetConfig {
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub counts: Option<Vec<usize>>,
    pub periodic: Option<Vec<bool>>,
    pub slices: Vec<SliceSpec>,
    /// CFL number for the HJ step.
    pub hj_cfl: Option<f64>,
    pub hj_tol: Option<f64>,
    pub hj_max_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub benchmark: BenchmarkKind,
    #[serde(default)]
    pub params: ParamMap,
    pub t_horizon_s: f64,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    #[serde(default = "default_gamma")]
    pub gamma_per_s: f64,
    #[serde(default)]
    pub margin: f64,
    #[serde(default)]
    pub prune_slack: Option<f64>,
    pub nominal: Nominal,
    pub duration_s: f64,
    pub dt_s: f64,
    pub x0: Vec<f64>,
    #[serde(default = "default_true")]
    pub filter: bool,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub levelset: LevelsetConfig,
    /// Free-form provenance for parameter choices such as offline gains.
    #[serde(default)]
    pub notes: Option<String>,
}

fn default_steps() -> usize {
    crate::flow::DEFAULT_STEPS
}
fn default_gamma() -> f64 {
    crate::systems::DEFAULT_GAMMA
}
fn default_true() -> bool {
    true
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let scenario: Scenario = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn from_json(text: &str) -> Result<Scenario> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: PathBuf::from("<scenario>"),
            line: e.line(),
            message: e.to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Builds the benchmark with this scenario's parameters and gain.
    pub fn benchmark(&self) -> Result<Benchmark> {
        let mut b = make_benchmark(self.benchmark, &self.params)?;
        b.spec.set_gamma(self.gamma_per_s)?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("t_horizon_s", self.t_horizon_s)?;
        positive("dt_s", self.dt_s)?;
        positive("gamma_per_s", self.gamma_per_s)?;
        if !(self.duration_s >= self.dt_s) {
            return Err(Error::InvalidParameter(format!(
                "duration_s ({}) must be at least dt_s ({})",
                self.duration_s, self.dt_s
            )));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidParameter("n_steps must be at least 1".into()));
        }
        if !(self.margin >= 0.0) {
            return Err(Error::InvalidParameter(format!("margin must be nonnegative, got {}", self.margin)));
        }
        let b = self.benchmark()?;
        let (n, m) = (b.model.state_dim(), b.model.input_dim());
        if self.x0.len() != n {
            return Err(Error::Dimension {
                context: "x0",
                expected: n,
                actual: self.x0.len(),
            });
        }
        crate::error::check_finite(&self.x0, "x0")?;
        self.nominal.validate(n, m)
    }

    pub fn x0(&self) -> Vector {
        Vector::from_column_slice(&self.x0)
    }

    pub fn filter_settings(&self) -> FilterSettings {
        FilterSettings {
            horizon_s: self.t_horizon_s,
            steps: self.n_steps,
            rows: RowOptions {
                margin: self.margin,
                prune_slack: self.prune_slack,
            },
        }
    }

    /// Grid geometry from the levelset block, benchmark defaults and an
    /// optional count override.
    pub fn grid_geometry(&self, counts: Option<&[usize]>) -> Result<GridGeometry> {
        let d = default_geometry(self.benchmark);
        let cfg = &self.levelset;
        let counts = counts
            .map(<[usize]>::to_vec)
            .or_else(|| cfg.counts.clone())
            .unwrap_or(d.counts);
        GridGeometry::new(
            cfg.lower.clone().unwrap_or(d.lower),
            cfg.upper.clone().unwrap_or(d.upper),
            counts,
            cfg.periodic.clone().unwrap_or(d.periodic),
        )
    }
}

/// Grid bounds that enclose each benchmark's constraint set with a margin.
pub fn default_geometry(kind: BenchmarkKind) -> GridGeometry {
    let (lower, upper, counts, periodic) = match kind {
        BenchmarkKind::Toy1d => (vec![-3.0], vec![3.0], vec![101], vec![false]),
        BenchmarkKind::DoubleIntegrator => (
            vec![-10.0, -5.0],
            vec![12.0, 5.0],
            vec![101, 101],
            vec![false, false],
        ),
        BenchmarkKind::Dubins => (
            vec![-2.2, 0.0, -1.3],
            vec![2.2, 10.0, 1.3],
            vec![61, 61, 61],
            vec![false, false, false],
        ),
        BenchmarkKind::Aeroplane => (
            vec![-20.0, -20.0, -PI],
            vec![20.0, 20.0, PI],
            vec![61, 61, 60],
            vec![false, false, true],
        ),
    };
    GridGeometry {
        lower,
        upper,
        counts,
        periodic,
    }
}

/// Parses counts such as `101x101` or `61x61x61`.
pub fn parse_grid_counts(spec: &str) -> Result<Vec<usize>> {
    spec.split(['x', 'X', ','])
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidParameter(format!("bad grid spec `{spec}`; expected e.g. 61x61x61")))
        })
        .collect()
}
