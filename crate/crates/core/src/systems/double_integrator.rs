use std::sync::Arc;

use serde::Deserialize;

use super::smooth::{indicator, indicator_margin, Smoothing};
use super::{
    check_box, require_positive, Benchmark, BenchmarkKind, BackupPolicy, SafetySpec, ScalarFn,
    StateBox, SystemModel, DEFAULT_GAMMA,
};
use crate::{Matrix, Result, Vector};

/// `s' = v`, `v' = u`, `|u| <= u_max`. State order `(s, v)`.
#[derive(Debug, Clone)]
pub struct DoubleIntegrator {
    lower: Vector,
    upper: Vector,
}

impl DoubleIntegrator {
    pub fn new(u_max: f64) -> Self {
        Self {
            lower: Vector::from_element(1, -u_max),
            upper: Vector::from_element(1, u_max),
        }
    }
}

impl SystemModel for DoubleIntegrator {
    fn state_dim(&self) -> usize {
        2
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn f(&self, x: &Vector) -> Vector {
        Vector::from_vec(vec![x[1], 0.0])
    }
    fn g(&self, _x: &Vector) -> Matrix {
        Matrix::from_column_slice(2, 1, &[0.0, 1.0])
    }
    fn df_dx(&self, _x: &Vector) -> Matrix {
        Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])
    }
    fn dg_dx(&self, _x: &Vector) -> Vec<Matrix> {
        vec![Matrix::zeros(2, 2)]
    }
    fn input_lower(&self) -> &Vector {
        &self.lower
    }
    fn input_upper(&self) -> &Vector {
        &self.upper
    }
}

/// Full braking while moving forward: `pi(x) = -1_{v>0} u_max`.
///
/// The smoothed indicator ramps on `v in [-eps, 0]`, so braking is exact for
/// every `v > 0` and the terminal set `{v <= 0}` stays invariant.
#[derive(Debug, Clone)]
pub struct BrakingPolicy {
    pub u_max: f64,
    pub smoothing: Smoothing,
}

impl BackupPolicy for BrakingPolicy {
    fn eval(&self, x: &Vector) -> Vector {
        Vector::from_element(1, -self.u_max * indicator(x[1], self.smoothing).0)
    }
    fn jacobian(&self, x: &Vector) -> Matrix {
        let (_, d) = indicator(x[1], self.smoothing);
        Matrix::from_row_slice(1, 2, &[0.0, -self.u_max * d])
    }
    fn smoothing(&self) -> Smoothing {
        self.smoothing
    }
    fn switching_margin(&self, x: &Vector) -> f64 {
        indicator_margin(x[1], self.smoothing)
    }
}

/// Closed-form barrier `C - s - 1_{v>0} v^2 / (2 u_max)`.
pub fn di_closed_form_h(x: &Vector, c: f64, u_max: f64) -> f64 {
    let (s, v) = (x[0], x[1]);
    let stopping = if v > 0.0 { v * v / (2.0 * u_max) } else { 0.0 };
    c - s - stopping
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiParams {
    /// Position limit `s <= C`, m. Default 10.
    pub c_m: f64,
    /// Default 1.
    pub u_max_mps2: f64,
    /// Indicator blend width, m/s. Default 0.25 (5% of the 5 m/s velocity range).
    pub eps_mps: f64,
    pub hard: bool,
}

impl Default for DiParams {
    fn default() -> Self {
        Self {
            c_m: 10.0,
            u_max_mps2: 1.0,
            eps_mps: 0.25,
            hard: false,
        }
    }
}

pub(super) fn build(p: DiParams) -> Result<Benchmark> {
    require_positive("u_max_mps2", p.u_max_mps2)?;
    require_positive("eps_mps", p.eps_mps)?;
    let model = DoubleIntegrator::new(p.u_max_mps2);
    check_box(model.input_lower(), model.input_upper())?;
    let smoothing = if p.hard {
        Smoothing::Hard
    } else {
        Smoothing::Smooth(p.eps_mps)
    };
    let c = p.c_m;
    let constraint = ScalarFn::new(
        "position",
        move |x: &Vector| c - x[0],
        |_: &Vector| Vector::from_vec(vec![-1.0, 0.0]),
    );
    let terminal = ScalarFn::new(
        "stopped",
        |x: &Vector| -x[1],
        |_: &Vector| Vector::from_vec(vec![0.0, -1.0]),
    );
    Ok(Benchmark {
        kind: BenchmarkKind::DoubleIntegrator,
        model: Arc::new(model),
        policy: Arc::new(BrakingPolicy {
            u_max: p.u_max_mps2,
            smoothing,
        }),
        spec: SafetySpec::new(vec![constraint], terminal, DEFAULT_GAMMA)?,
        sample_box: StateBox::new(vec![c - 20.0, -5.0], vec![c + 2.0, 5.0]),
        periodic: vec![false, false],
        default_horizon_s: 10.0,
    })
}
