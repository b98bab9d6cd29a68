use std::sync::Arc;

use serde::Deserialize;

use super::smooth::{saturate, saturate_margin, Smoothing};
use super::{
    check_box, require_positive, DEFAULT_GAMMA, Benchmark, BenchmarkKind, BackupPolicy, SafetySpec, ScalarFn,
    StateBox, SystemModel,
};
use crate::{Matrix, Result, Vector};

/// Scalar integrator `x' = u` with `u in [-u_max, u_max]`.
#[derive(Debug, Clone)]
pub struct Integrator1d {
    lower: Vector,
    upper: Vector,
}

impl Integrator1d {
    pub fn new(u_max: f64) -> Self {
        Self {
            lower: Vector::from_element(1, -u_max),
            upper: Vector::from_element(1, u_max),
        }
    }
}

impl SystemModel for Integrator1d {
    fn state_dim(&self) -> usize {
        1
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn f(&self, _x: &Vector) -> Vector {
        Vector::zeros(1)
    }
    fn g(&self, _x: &Vector) -> Matrix {
        Matrix::identity(1, 1)
    }
    fn df_dx(&self, _x: &Vector) -> Matrix {
        Matrix::zeros(1, 1)
    }
    fn dg_dx(&self, _x: &Vector) -> Vec<Matrix> {
        vec![Matrix::zeros(1, 1)]
    }
    fn input_lower(&self) -> &Vector {
        &self.lower
    }
    fn input_upper(&self) -> &Vector {
        &self.upper
    }
}

/// `pi(x) = -Sat_{u_max}(k x)`; linear wherever `|k x| <= u_max - eps`.
#[derive(Debug, Clone)]
pub struct ProportionalPolicy {
    pub gain: f64,
    pub u_max: f64,
    pub smoothing: Smoothing,
}

impl BackupPolicy for ProportionalPolicy {
    fn eval(&self, x: &Vector) -> Vector {
        Vector::from_element(1, -saturate(self.gain * x[0], self.u_max, self.smoothing).0)
    }
    fn jacobian(&self, x: &Vector) -> Matrix {
        let (_, d) = saturate(self.gain * x[0], self.u_max, self.smoothing);
        Matrix::from_element(1, 1, -self.gain * d)
    }
    fn smoothing(&self) -> Smoothing {
        self.smoothing
    }
    fn switching_margin(&self, x: &Vector) -> f64 {
        saturate_margin(self.gain * x[0], self.u_max, self.smoothing)
    }
}

/// Toy scalar benchmark: `h_C = c_limit - x^2`, `h_S = s_limit - x^2`.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyParams {
    /// Feedback gain, 1/s. Default 1.
    pub k_per_s: f64,
    /// Input bound. Default 5.
    pub u_max: f64,
    /// Default 4.
    pub c_limit: f64,
    /// Default 1.
    pub s_limit: f64,
    /// Blend width as a fraction of `u_max`. Default 0.05.
    pub smoothing_frac: f64,
    pub hard: bool,
}

impl Default for ToyParams {
    fn default() -> Self {
        Self {
            k_per_s: 1.0,
            u_max: 5.0,
            c_limit: 4.0,
            s_limit: 1.0,
            smoothing_frac: 0.05,
            hard: false,
        }
    }
}

pub(super) fn build(p: ToyParams) -> Result<Benchmark> {
    require_positive("k_per_s", p.k_per_s)?;
    require_positive("u_max", p.u_max)?;
    require_positive("smoothing_frac", p.smoothing_frac)?;
    let model = Integrator1d::new(p.u_max);
    check_box(model.input_lower(), model.input_upper())?;
    let smoothing = if p.hard {
        Smoothing::Hard
    } else {
        Smoothing::Smooth(p.smoothing_frac * p.u_max)
    };
    let policy = ProportionalPolicy {
        gain: p.k_per_s,
        u_max: p.u_max,
        smoothing,
    };
    let (c, s) = (p.c_limit, p.s_limit);
    let spec = SafetySpec::new(
        vec![quadratic_cap("constraint", c)],
        quadratic_cap("terminal", s),
        DEFAULT_GAMMA,
    )?;
    let reach = c.max(s).max(0.0).sqrt() * 1.5;
    Ok(Benchmark {
        kind: BenchmarkKind::Toy1d,
        model: Arc::new(model),
        policy: Arc::new(policy),
        spec,
        sample_box: StateBox::new(vec![-reach], vec![reach]),
        periodic: vec![false],
        default_horizon_s: 1.0,
    })
}

/// `limit - x^2` for scalar states.
pub(crate) fn quadratic_cap(name: &str, limit: f64) -> ScalarFn {
    ScalarFn::new(
        name,
        move |x: &Vector| limit - x[0] * x[0],
        |x: &Vector| Vector::from_element(1, -2.0 * x[0]),
    )
}
