//! Relative dynamics of two planes, state `(dX, dY, dpsi)` in plane a's frame.
//! Plane a turns at rate `u`; plane b keeps a fixed heading.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Deserialize;

use super::smooth::{sign, sign_margin, Smoothing};
use super::{
    check_box, require_positive, Benchmark, BenchmarkKind, BackupPolicy, SafetySpec, ScalarFn,
    StateBox, SystemModel, DEFAULT_GAMMA,
};
use crate::{Matrix, Result, Vector};

#[derive(Debug, Clone)]
pub struct Aeroplane {
    pub v_a: f64,
    pub v_b: f64,
    lower: Vector,
    upper: Vector,
}

impl Aeroplane {
    pub fn new(v_a: f64, v_b: f64, u_max: f64) -> Self {
        Self {
            v_a,
            v_b,
            lower: Vector::from_element(1, -u_max),
            upper: Vector::from_element(1, u_max),
        }
    }

    /// Relative velocity with `u = 0`.
    fn drift_velocity(&self, x: &Vector) -> (f64, f64) {
        (-self.v_a + self.v_b * x[2].cos(), self.v_b * x[2].sin())
    }
}

impl SystemModel for Aeroplane {
    fn state_dim(&self) -> usize {
        3
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn f(&self, x: &Vector) -> Vector {
        let (wx, wy) = self.drift_velocity(x);
        Vector::from_vec(vec![wx, wy, 0.0])
    }
    fn g(&self, x: &Vector) -> Matrix {
        Matrix::from_column_slice(3, 1, &[x[1], -x[0], -1.0])
    }
    fn df_dx(&self, x: &Vector) -> Matrix {
        let (s, c) = x[2].sin_cos();
        Matrix::from_row_slice(
            3,
            3,
            &[0.0, 0.0, -self.v_b * s, 0.0, 0.0, self.v_b * c, 0.0, 0.0, 0.0],
        )
    }
    fn dg_dx(&self, _x: &Vector) -> Vec<Matrix> {
        vec![Matrix::from_row_slice(
            3,
            3,
            &[0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        )]
    }
    fn input_lower(&self) -> &Vector {
        &self.lower
    }
    fn input_upper(&self) -> &Vector {
        &self.upper
    }
}

/// `u = -u_max sign(dY)`: turn away from the side plane b is on.
#[derive(Debug, Clone)]
pub struct TurnAwayPolicy {
    pub u_max: f64,
    pub smoothing: Smoothing,
}

impl BackupPolicy for TurnAwayPolicy {
    fn eval(&self, x: &Vector) -> Vector {
        Vector::from_element(1, -self.u_max * sign(x[1], self.smoothing).0)
    }
    fn jacobian(&self, x: &Vector) -> Matrix {
        let (_, d) = sign(x[1], self.smoothing);
        Matrix::from_row_slice(1, 3, &[0.0, -self.u_max * d, 0.0])
    }
    fn smoothing(&self) -> Smoothing {
        self.smoothing
    }
    fn switching_margin(&self, x: &Vector) -> f64 {
        sign_margin(x[1], self.smoothing)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeroplaneParams {
    /// Default 5.
    pub v_a_mps: f64,
    /// Default 5.
    pub v_b_mps: f64,
    /// Minimum separation, m. Default 5.
    pub r_m: f64,
    /// Default 1.
    pub u_max_radps: f64,
    /// Terminal separation as a multiple of `r_m`. Default 1.2.
    pub rs_factor: f64,
    /// Sign blend width as a fraction of `r_m`. Default 1. Narrower blends make the
    /// sensitivity too stiff for RK4 at 0.1 s.
    pub smoothing_frac: f64,
    pub hard: bool,
    /// Default 10 s.
    pub horizon_s: f64,
}

impl Default for AeroplaneParams {
    fn default() -> Self {
        Self {
            v_a_mps: 5.0,
            v_b_mps: 5.0,
            r_m: 5.0,
            u_max_radps: 1.0,
            rs_factor: 1.2,
            smoothing_frac: 1.0,
            hard: false,
            horizon_s: 10.0,
        }
    }
}

pub(super) fn build(p: AeroplaneParams) -> Result<Benchmark> {
    for (name, value) in [
        ("v_a_mps", p.v_a_mps),
        ("v_b_mps", p.v_b_mps),
        ("r_m", p.r_m),
        ("u_max_radps", p.u_max_radps),
        ("smoothing_frac", p.smoothing_frac),
        ("horizon_s", p.horizon_s),
    ] {
        require_positive(name, value)?;
    }
    if p.rs_factor < 1.0 {
        return Err(crate::Error::InvalidParameter(
            "rs_factor must be at least 1 so the terminal set lies in C".into(),
        ));
    }
    let model = Aeroplane::new(p.v_a_mps, p.v_b_mps, p.u_max_radps);
    check_box(model.input_lower(), model.input_upper())?;
    let smoothing = if p.hard {
        Smoothing::Hard
    } else {
        Smoothing::Smooth(p.smoothing_frac * p.r_m)
    };
    let r2 = p.r_m * p.r_m;
    let constraint = ScalarFn::new(
        "separation",
        move |x: &Vector| x[0] * x[0] + x[1] * x[1] - r2,
        |x: &Vector| Vector::from_vec(vec![2.0 * x[0], 2.0 * x[1], 0.0]),
    );
    let rs2 = (p.rs_factor * p.r_m).powi(2);
    let (va, vb) = (p.v_a_mps, p.v_b_mps);
    // Separated by R_s and with nonnegative range rate. Under the turn-away
    // policy the range-rate term obeys D' = |w|^2 - u v_a dY >= 0.
    let pieces = move |x: &Vector| {
        let (wx, wy) = (-va + vb * x[2].cos(), vb * x[2].sin());
        let sep = x[0] * x[0] + x[1] * x[1] - rs2;
        let rate = x[0] * wx + x[1] * wy;
        (sep, rate, wx, wy)
    };
    let terminal = ScalarFn::new(
        "separated_and_diverging",
        move |x: &Vector| {
            let (sep, rate, _, _) = pieces(x);
            sep.min(rate)
        },
        move |x: &Vector| {
            let (sep, rate, wx, wy) = pieces(x);
            if sep <= rate {
                Vector::from_vec(vec![2.0 * x[0], 2.0 * x[1], 0.0])
            } else {
                let (s, c) = x[2].sin_cos();
                Vector::from_vec(vec![wx, wy, vb * (x[1] * c - x[0] * s)])
            }
        },
    );
    let reach = 4.0 * p.r_m;
    Ok(Benchmark {
        kind: BenchmarkKind::Aeroplane,
        model: Arc::new(model),
        policy: Arc::new(TurnAwayPolicy {
            u_max: p.u_max_radps,
            smoothing,
        }),
        spec: SafetySpec::new(vec![constraint], terminal, DEFAULT_GAMMA)?,
        sample_box: StateBox::new(vec![-reach, -reach, -PI], vec![reach, reach, PI]),
        periodic: vec![false, false, true],
        default_horizon_s: p.horizon_s,
    })
}
