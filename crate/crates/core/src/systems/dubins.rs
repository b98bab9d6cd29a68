//! Lane keeping with a Dubin's car: state `(Y, v, psi)`, input `(a, r)`.

use std::f64::consts::FRAC_PI_3;
use std::sync::Arc;

use serde::Deserialize;

use super::lqr::lqr_gain;
use super::smooth::{saturate, saturate_margin, Smoothing};
use super::{
    check_box, require_positive, Benchmark, BenchmarkKind, BackupPolicy, SafetySpec, ScalarFn,
    StateBox, SystemModel, DEFAULT_GAMMA,
};
use crate::{Error, Matrix, Result, Vector};

#[derive(Debug, Clone)]
pub struct DubinsCar {
    lower: Vector,
    upper: Vector,
}

impl DubinsCar {
    pub fn new(a_max: f64, r_max: f64) -> Self {
        Self {
            lower: Vector::from_vec(vec![-a_max, -r_max]),
            upper: Vector::from_vec(vec![a_max, r_max]),
        }
    }
}

impl SystemModel for DubinsCar {
    fn state_dim(&self) -> usize {
        3
    }
    fn input_dim(&self) -> usize {
        2
    }
    fn f(&self, x: &Vector) -> Vector {
        Vector::from_vec(vec![x[1] * x[2].sin(), 0.0, 0.0])
    }
    fn g(&self, _x: &Vector) -> Matrix {
        Matrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0])
    }
    fn df_dx(&self, x: &Vector) -> Matrix {
        let (v, psi) = (x[1], x[2]);
        Matrix::from_row_slice(
            3,
            3,
            &[0.0, psi.sin(), v * psi.cos(), 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        )
    }
    fn dg_dx(&self, _x: &Vector) -> Vec<Matrix> {
        vec![Matrix::zeros(3, 3), Matrix::zeros(3, 3)]
    }
    fn input_lower(&self) -> &Vector {
        &self.lower
    }
    fn input_upper(&self) -> &Vector {
        &self.upper
    }
}

/// `a = Sat(k_v (v_des - v))`, `r = Sat(k_y . [Y, psi])`.
#[derive(Debug, Clone)]
pub struct LaneKeepingPolicy {
    pub k_v: f64,
    pub v_des: f64,
    pub k_y: [f64; 2],
    pub a_max: f64,
    pub r_max: f64,
    pub a_smoothing: Smoothing,
    pub r_smoothing: Smoothing,
}

impl LaneKeepingPolicy {
    fn args(&self, x: &Vector) -> (f64, f64) {
        (
            self.k_v * (self.v_des - x[1]),
            self.k_y[0] * x[0] + self.k_y[1] * x[2],
        )
    }
}

impl BackupPolicy for LaneKeepingPolicy {
    fn eval(&self, x: &Vector) -> Vector {
        let (za, zr) = self.args(x);
        Vector::from_vec(vec![
            saturate(za, self.a_max, self.a_smoothing).0,
            saturate(zr, self.r_max, self.r_smoothing).0,
        ])
    }
    fn jacobian(&self, x: &Vector) -> Matrix {
        let (za, zr) = self.args(x);
        let (_, da) = saturate(za, self.a_max, self.a_smoothing);
        let (_, dr) = saturate(zr, self.r_max, self.r_smoothing);
        Matrix::from_row_slice(
            2,
            3,
            &[0.0, -self.k_v * da, 0.0, self.k_y[0] * dr, 0.0, self.k_y[1] * dr],
        )
    }
    fn smoothing(&self) -> Smoothing {
        self.r_smoothing
    }
    fn switching_margin(&self, x: &Vector) -> f64 {
        let (za, zr) = self.args(x);
        saturate_margin(za, self.a_max, self.a_smoothing)
            .min(saturate_margin(zr, self.r_max, self.r_smoothing))
    }
}

/// Terminal set `{c - x^T P x >= 0}` in the shifted state `[Y, v - v_des, psi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalEllipsoid {
    pub p: Matrix,
    pub c: f64,
    pub v_des: f64,
}

impl TerminalEllipsoid {
    fn shifted(&self, x: &Vector) -> Vector {
        Vector::from_vec(vec![x[0], x[1] - self.v_des, x[2]])
    }

    pub fn value(&self, x: &Vector) -> f64 {
        let e = self.shifted(x);
        self.c - e.dot(&(&self.p * &e))
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        -2.0 * (&self.p * self.shifted(x))
    }

    /// Largest excursion of coordinate `i` of the shifted state inside the set.
    pub fn extent(&self, i: usize) -> f64 {
        let inv = self.p.clone().try_inverse().expect("P is positive definite");
        (self.c * inv[(i, i)]).sqrt()
    }

    /// Builds `P` and `c` so that the set is invariant under the unsaturated
    /// lane-keeping policy.
    ///
    /// With `k1 = -k_y[0]`, `k2 = -k_y[1]` and `kappa = k1/k2`, the lateral block
    /// `[[p11, kappa], [kappa, 1]]` makes `V' <= 0` for every speed in
    /// `[0, v_top]` as long as `p11` lies between the two roots of the
    /// `v = v_top` determinant condition; `shape` interpolates between them.
    /// The speed weight puts the `v` extent at `dv`, and `c` keeps the set inside
    /// the lane and heading limits.
    ///
    /// Writing `s = kappa Y + psi`, the saturated part of the set (`k2 |s| >=
    /// r_linear`) is also safe when `v_top (sqrt(c det) / s_sat + kappa) <=
    /// r_linear` with `s_sat = r_linear / k2`; this holds for slow terminal sets.
    /// Otherwise `c` is further capped so the set stays in the unsaturated band.
    pub fn for_lane_keeping(
        k_y: [f64; 2],
        v_des: f64,
        dv: f64,
        shape: f64,
        y_max: f64,
        psi_max: f64,
        r_linear: f64,
    ) -> Result<Self> {
        let (k1, k2) = (-k_y[0], -k_y[1]);
        if !(k1 > 0.0 && k2 > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lateral gains must both be negative, got {k_y:?}"
            )));
        }
        let v_top = v_des + dv;
        let beta = v_top * k1 / (k2 * k2);
        if !(beta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "lateral gains too weakly damped for speeds up to {v_top} m/s \
                 (need k2^2 > v k1)"
            )));
        }
        let root = (1.0 - beta).sqrt();
        let p11_lo = 2.0 * k1 * (1.0 - root) / v_top;
        let p11_hi = 2.0 * k1 * (1.0 + root) / v_top;
        let p11 = p11_lo + shape * (p11_hi - p11_lo);
        let kappa = k1 / k2;
        let det = p11 - kappa * kappa;
        // Inverse of the lateral block: [[1, -kappa], [-kappa, p11]] / det.
        let c_box = (y_max * y_max * det).min(psi_max * psi_max * det / p11);
        let s_sat = r_linear / k2;
        let c = if v_top * ((c_box * det).sqrt() / s_sat + kappa) <= r_linear {
            c_box
        } else {
            c_box.min(s_sat * s_sat)
        };
        let p_v = c / (dv * dv);
        let p = Matrix::from_row_slice(3, 3, &[p11, 0.0, kappa, 0.0, p_v, 0.0, kappa, 0.0, 1.0]);
        Ok(Self { p, c, v_des })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DubinsParams {
    /// Default 1.8 m.
    pub y_max_m: f64,
    /// Default pi/3.
    pub psi_max_rad: f64,
    /// Default 3.
    pub a_max_mps2: f64,
    /// Default 0.5.
    pub r_max_radps: f64,
    /// Default 1.
    pub k_v_per_s: f64,
    /// 5 for the conservative backup, 0 for the aggressive one. Default 5.
    pub v_des_mps: f64,
    /// Lateral gains `r = k_y . [Y, psi]`. Default: LQR on the lateral
    /// subsystem linearized at `lqr_speed_mps`.
    pub k_y: Option<[f64; 2]>,
    /// Default 5.
    pub lqr_speed_mps: f64,
    /// Default 1.
    pub lqr_q_y: f64,
    /// Default 1.
    pub lqr_q_psi: f64,
    /// Default 1.
    pub lqr_r: f64,
    /// Row-major 3x3 terminal matrix; overrides the constructed one.
    pub terminal_p: Option<[f64; 9]>,
    pub terminal_c: Option<f64>,
    /// Speed half-extent of the terminal ellipsoid. Default 1 m/s.
    pub terminal_dv_mps: f64,
    /// Position of `p11` between its admissible roots. Default 0.05.
    pub terminal_shape: f64,
    /// Blend width as a fraction of each input bound. Default 0.05.
    pub smoothing_frac: f64,
    pub hard: bool,
    /// Default 6 s. Much longer horizons contract the terminal row below the
    /// relative-degree probe threshold.
    pub horizon_s: f64,
}

impl Default for DubinsParams {
    fn default() -> Self {
        Self {
            y_max_m: 1.8,
            psi_max_rad: FRAC_PI_3,
            a_max_mps2: 3.0,
            r_max_radps: 0.5,
            k_v_per_s: 1.0,
            v_des_mps: 5.0,
            k_y: None,
            lqr_speed_mps: 5.0,
            lqr_q_y: 1.0,
            lqr_q_psi: 1.0,
            lqr_r: 1.0,
            terminal_p: None,
            terminal_c: None,
            terminal_dv_mps: 1.0,
            terminal_shape: 0.05,
            smoothing_frac: 0.05,
            hard: false,
            horizon_s: 6.0,
        }
    }
}

/// LQR gains for `Y' = v psi`, `psi' = r`, returned as `k_y` with `r = k_y . [Y, psi]`.
pub fn lateral_lqr_gains(speed: f64, q_y: f64, q_psi: f64, r: f64) -> Result<[f64; 2]> {
    let a = Matrix::from_row_slice(2, 2, &[0.0, speed, 0.0, 0.0]);
    let b = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let q = Matrix::from_row_slice(2, 2, &[q_y, 0.0, 0.0, q_psi]);
    let k = lqr_gain(&a, &b, &q, &Matrix::from_element(1, 1, r))?;
    Ok([-k[(0, 0)], -k[(0, 1)]])
}

pub(super) fn build(p: DubinsParams) -> Result<Benchmark> {
    for (name, value) in [
        ("y_max_m", p.y_max_m),
        ("psi_max_rad", p.psi_max_rad),
        ("a_max_mps2", p.a_max_mps2),
        ("r_max_radps", p.r_max_radps),
        ("k_v_per_s", p.k_v_per_s),
        ("terminal_dv_mps", p.terminal_dv_mps),
        ("smoothing_frac", p.smoothing_frac),
        ("horizon_s", p.horizon_s),
    ] {
        require_positive(name, value)?;
    }
    if !(0.0..1.0).contains(&p.terminal_shape) || p.terminal_shape == 0.0 {
        return Err(Error::InvalidParameter(
            "terminal_shape must lie in (0, 1)".into(),
        ));
    }
    let model = DubinsCar::new(p.a_max_mps2, p.r_max_radps);
    check_box(model.input_lower(), model.input_upper())?;
    let k_y = match p.k_y {
        Some(k) => k,
        None => lateral_lqr_gains(p.lqr_speed_mps, p.lqr_q_y, p.lqr_q_psi, p.lqr_r)?,
    };
    let (a_smoothing, r_smoothing) = if p.hard {
        (Smoothing::Hard, Smoothing::Hard)
    } else {
        (
            Smoothing::Smooth(p.smoothing_frac * p.a_max_mps2),
            Smoothing::Smooth(p.smoothing_frac * p.r_max_radps),
        )
    };
    let policy = LaneKeepingPolicy {
        k_v: p.k_v_per_s,
        v_des: p.v_des_mps,
        k_y,
        a_max: p.a_max_mps2,
        r_max: p.r_max_radps,
        a_smoothing,
        r_smoothing,
    };
    let mut ellipsoid = TerminalEllipsoid::for_lane_keeping(
        k_y,
        p.v_des_mps,
        p.terminal_dv_mps,
        p.terminal_shape,
        p.y_max_m,
        p.psi_max_rad,
        p.r_max_radps - r_smoothing.width(),
    )?;
    if let Some(m) = p.terminal_p {
        ellipsoid.p = Matrix::from_row_slice(3, 3, &m);
    }
    if let Some(c) = p.terminal_c {
        require_positive("terminal_c", c)?;
        ellipsoid.c = c;
    }

    let (y_max, psi_max) = (p.y_max_m, p.psi_max_rad);
    let constraints = vec![
        ScalarFn::new(
            "lane_left",
            move |x: &Vector| y_max - x[0],
            |_: &Vector| Vector::from_vec(vec![-1.0, 0.0, 0.0]),
        ),
        ScalarFn::new(
            "lane_right",
            move |x: &Vector| y_max + x[0],
            |_: &Vector| Vector::from_vec(vec![1.0, 0.0, 0.0]),
        ),
        ScalarFn::new(
            "heading_left",
            move |x: &Vector| psi_max - x[2],
            |_: &Vector| Vector::from_vec(vec![0.0, 0.0, -1.0]),
        ),
        ScalarFn::new(
            "heading_right",
            move |x: &Vector| psi_max + x[2],
            |_: &Vector| Vector::from_vec(vec![0.0, 0.0, 1.0]),
        ),
    ];
    let (e1, e2) = (ellipsoid.clone(), ellipsoid);
    let terminal = ScalarFn::new(
        "ellipsoid",
        move |x: &Vector| e1.value(x),
        move |x: &Vector| e2.gradient(x),
    );
    Ok(Benchmark {
        kind: BenchmarkKind::Dubins,
        model: Arc::new(model),
        policy: Arc::new(policy),
        spec: SafetySpec::new(constraints, terminal, DEFAULT_GAMMA)?,
        sample_box: StateBox::new(vec![-y_max, 0.0, -psi_max], vec![y_max, 10.0, psi_max]),
        // Heading is bounded by the constraints, so it is not treated as periodic.
        periodic: vec![false, false, false],
        default_horizon_s: p.horizon_s,
    })
}
