//! Control-affine models, backup policies, safety specifications and the
//! benchmark instances used throughout the crate.
//!
//! All evaluators are pure and the types are `Send + Sync`, so a benchmark can
//! be shared across threads behind an `Arc`.

mod aeroplane;
mod double_integrator;
mod dubins;
mod linear;
pub mod lqr;
pub mod smooth;
mod toy;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::check_finite;
use crate::{Error, Matrix, Result, Vector};

pub use aeroplane::{Aeroplane, AeroplaneParams, TurnAwayPolicy};
pub use double_integrator::{di_closed_form_h, BrakingPolicy, DiParams, DoubleIntegrator};
pub use dubins::{DubinsCar, DubinsParams, LaneKeepingPolicy, TerminalEllipsoid};
pub use linear::{ConstantPolicy, LinearSystem};
pub use smooth::Smoothing;
pub use toy::{Integrator1d, ProportionalPolicy, ToyParams};

/// Control-affine dynamics `x' = f(x) + g(x) u` with a box input set.
pub trait SystemModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    /// Drift `f(x)`.
    fn f(&self, x: &Vector) -> Vector;
    /// Input matrix `g(x)`, `state_dim x input_dim`.
    fn g(&self, x: &Vector) -> Matrix;
    fn df_dx(&self, x: &Vector) -> Matrix;
    /// One `state_dim x state_dim` Jacobian per input column `g_j`.
    fn dg_dx(&self, x: &Vector) -> Vec<Matrix>;
    fn input_lower(&self) -> &Vector;
    fn input_upper(&self) -> &Vector;

    /// `f(x) + g(x) u`.
    fn dynamics(&self, x: &Vector, u: &Vector) -> Vector {
        self.f(x) + self.g(x) * u
    }
}

/// A fixed feedback law whose closed-loop flow defines the implicit set.
pub trait BackupPolicy: Send + Sync {
    fn eval(&self, x: &Vector) -> Vector;
    /// `input_dim x state_dim`.
    fn jacobian(&self, x: &Vector) -> Matrix;
    fn smoothing(&self) -> Smoothing;
    /// Distance from `x` to the nearest switching surface of any nonsmooth
    /// element, in units of that element's blend width.
    fn switching_margin(&self, _x: &Vector) -> f64 {
        f64::INFINITY
    }
}

/// Default class-K gain, 1/s.
pub const DEFAULT_GAMMA: f64 = 1.0;

type ValueFn = dyn Fn(&Vector) -> f64 + Send + Sync;
type GradFn = dyn Fn(&Vector) -> Vector + Send + Sync;

/// A scalar function of the state together with its gradient.
#[derive(Clone)]
pub struct ScalarFn {
    pub name: String,
    value: Arc<ValueFn>,
    gradient: Arc<GradFn>,
}

impl ScalarFn {
    pub fn new(
        name: impl Into<String>,
        value: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }
    }

    pub fn value(&self, x: &Vector) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        (self.gradient)(x)
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarFn").field("name", &self.name).finish()
    }
}

/// Safe region `C = {h_k >= 0 for all k}`, terminal set `S_0 = {h_S >= 0}` and
/// the linear class-K gain `alpha(h) = gamma * h`.
#[derive(Debug, Clone)]
pub struct SafetySpec {
    pub constraints: Vec<ScalarFn>,
    pub terminal: ScalarFn,
    gamma: f64,
}

impl SafetySpec {
    pub fn new(constraints: Vec<ScalarFn>, terminal: ScalarFn, gamma: f64) -> Result<Self> {
        if constraints.is_empty() {
            return Err(Error::InvalidParameter(
                "a safety spec needs at least one constraint".into(),
            ));
        }
        let mut spec = Self {
            constraints,
            terminal,
            gamma: 1.0,
        };
        spec.set_gamma(gamma)?;
        Ok(spec)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn set_gamma(&mut self, gamma: f64) -> Result<()> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "class-K gain must be positive, got {gamma}"
            )));
        }
        self.gamma = gamma;
        Ok(())
    }

    pub fn alpha(&self, h: f64) -> f64 {
        self.gamma * h
    }

    /// `min_k h_k(x)`.
    pub fn constraint_min(&self, x: &Vector) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.value(x))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Axis-aligned state box used for sampling and grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl StateBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len());
        Self { lower, upper }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn sample<R: rand::Rng>(&self, rng: &mut R) -> Vector {
        Vector::from_iterator(
            self.dim(),
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(&lo, &hi)| if hi > lo { rng.random_range(lo..hi) } else { lo }),
        )
    }
}

/// `f_pi(x) = f(x) + g(x) pi(x)`.
pub fn closed_loop_rhs(
    model: &dyn SystemModel,
    policy: &dyn BackupPolicy,
    x: &Vector,
) -> Result<Vector> {
    check_finite(x.as_slice(), "closed-loop state")?;
    let u = policy.eval(x);
    check_finite(u.as_slice(), "backup input")?;
    let dx = model.dynamics(x, &u);
    check_finite(dx.as_slice(), "closed-loop derivative")?;
    Ok(dx)
}

/// `df_pi/dx = df/dx + sum_j pi_j dg_j/dx + g dpi/dx`.
pub fn closed_loop_jacobian(
    model: &dyn SystemModel,
    policy: &dyn BackupPolicy,
    x: &Vector,
) -> Result<Matrix> {
    check_finite(x.as_slice(), "closed-loop state")?;
    let u = policy.eval(x);
    let mut jac = model.df_dx(x);
    for (uj, dgj) in u.iter().zip(model.dg_dx(x)) {
        jac += dgj * *uj;
    }
    jac += model.g(x) * policy.jacobian(x);
    check_finite(jac.as_slice(), "closed-loop Jacobian")?;
    Ok(jac)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkKind {
    Toy1d,
    DoubleIntegrator,
    Dubins,
    Aeroplane,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 4] = [
        BenchmarkKind::Toy1d,
        BenchmarkKind::DoubleIntegrator,
        BenchmarkKind::Dubins,
        BenchmarkKind::Aeroplane,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BenchmarkKind::Toy1d => "toy1d",
            BenchmarkKind::DoubleIntegrator => "double_integrator",
            BenchmarkKind::Dubins => "dubins",
            BenchmarkKind::Aeroplane => "aeroplane",
        }
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchmarkKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownBenchmark(s.to_string()))
    }
}

/// Free-form benchmark parameters as read from a scenario file.
pub type ParamMap = serde_json::Map<String, serde_json::Value>;

/// A consistent (model, backup policy, safety spec) triple plus the metadata
/// needed to sample and grid it.
#[derive(Clone)]
pub struct Benchmark {
    pub kind: BenchmarkKind,
    pub model: Arc<dyn SystemModel>,
    pub policy: Arc<dyn BackupPolicy>,
    pub spec: SafetySpec,
    /// Default region for sampling states.
    pub sample_box: StateBox,
    /// Heading axes that wrap around in grids.
    pub periodic: Vec<bool>,
    pub default_horizon_s: f64,
}

impl fmt::Debug for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Benchmark")
            .field("kind", &self.kind)
            .field("spec", &self.spec)
            .field("sample_box", &self.sample_box)
            .finish()
    }
}

pub(crate) fn parse_params<T: serde::de::DeserializeOwned>(
    kind: BenchmarkKind,
    params: &ParamMap,
) -> Result<T> {
    serde_json::from_value(serde_json::Value::Object(params.clone()))
        .map_err(|e| Error::InvalidParameter(format!("{kind}: {e}")))
}

pub(crate) fn check_box(lower: &Vector, upper: &Vector) -> Result<()> {
    for (i, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
        if !(lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "input bound {i}: lower {lo} must be below upper {hi}"
            )));
        }
    }
    Ok(())
}

pub(crate) fn require_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be positive, got {value}"
        )))
    }
}

/// Builds one of the benchmark instances. Missing parameters take the
/// defaults documented on each parameter struct.
pub fn make_benchmark(kind: BenchmarkKind, params: &ParamMap) -> Result<Benchmark> {
    match kind {
        BenchmarkKind::Toy1d => toy::build(parse_params(kind, params)?),
        BenchmarkKind::DoubleIntegrator => double_integrator::build(parse_params(kind, params)?),
        BenchmarkKind::Dubins => dubins::build(parse_params(kind, params)?),
        BenchmarkKind::Aeroplane => aeroplane::build(parse_params(kind, params)?),
    }
}

/// [`make_benchmark`] with every parameter at its default.
pub fn default_benchmark(kind: BenchmarkKind) -> Benchmark {
    make_benchmark(kind, &ParamMap::new()).expect("defaults are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fd_jacobian(f: impl Fn(&Vector) -> Vector, x: &Vector, h: f64) -> Matrix {
        let y0 = f(x);
        let mut jac = Matrix::zeros(y0.len(), x.len());
        for j in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            jac.set_column(j, &((f(&xp) - f(&xm)) / (2.0 * h)));
        }
        jac
    }

    fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
        (a - b).amax() / a.amax().max(b.amax()).max(1.0)
    }

    #[test]
    fn unknown_benchmark_name_is_rejected() {
        assert!(matches!(
            "quadrotor".parse::<BenchmarkKind>(),
            Err(Error::UnknownBenchmark(_))
        ));
        assert_eq!("dubins".parse::<BenchmarkKind>().unwrap(), BenchmarkKind::Dubins);
    }

    #[test]
    fn model_jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in BenchmarkKind::ALL {
            let b = default_benchmark(kind);
            for _ in 0..200 {
                let x = b.sample_box.sample(&mut rng);
                let df = b.model.df_dx(&x);
                let fd = fd_jacobian(|y| b.model.f(y), &x, 1e-6);
                assert!(rel_err(&df, &fd) < 1e-5, "{kind} df/dx at {x}");
                let dg = b.model.dg_dx(&x);
                for (j, dgj) in dg.iter().enumerate() {
                    let fd = fd_jacobian(|y| b.model.g(y).column(j).into_owned(), &x, 1e-6);
                    assert!(rel_err(dgj, &fd) < 1e-5, "{kind} dg_{j}/dx");
                }
            }
        }
    }

    #[test]
    fn policies_respect_input_box_and_have_valid_jacobians() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for kind in BenchmarkKind::ALL {
            let b = default_benchmark(kind);
            let lo = b.model.input_lower();
            let hi = b.model.input_upper();
            let mut checked = 0;
            for _ in 0..1000 {
                let x = b.sample_box.sample(&mut rng);
                let u = b.policy.eval(&x);
                for j in 0..u.len() {
                    assert!(u[j] >= lo[j] && u[j] <= hi[j], "{kind}: u = {u}");
                }
                if b.policy.switching_margin(&x) >= 3.0 {
                    let fd = fd_jacobian(|y| b.policy.eval(y), &x, 1e-7);
                    assert!(rel_err(&b.policy.jacobian(&x), &fd) < 1e-4, "{kind} dpi/dx at {x}");
                    checked += 1;
                }
            }
            assert!(checked > 100, "{kind}: only {checked} states away from switching");
        }
    }

    #[test]
    fn closed_loop_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for kind in BenchmarkKind::ALL {
            let b = default_benchmark(kind);
            for _ in 0..300 {
                let x = b.sample_box.sample(&mut rng);
                if b.policy.switching_margin(&x) < 3.0 {
                    continue;
                }
                let jac = closed_loop_jacobian(&*b.model, &*b.policy, &x).unwrap();
                let fd = fd_jacobian(
                    |y| closed_loop_rhs(&*b.model, &*b.policy, y).unwrap(),
                    &x,
                    1e-7,
                );
                assert!(rel_err(&jac, &fd) < 1e-4, "{kind} at {x}");
            }
        }
    }

    #[test]
    fn spec_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for kind in BenchmarkKind::ALL {
            let b = default_benchmark(kind);
            let mut fns: Vec<&ScalarFn> = b.spec.constraints.iter().collect();
            fns.push(&b.spec.terminal);
            for _ in 0..200 {
                let x = b.sample_box.sample(&mut rng);
                for h in &fns {
                    let g = h.gradient(&x);
                    let step = 1e-6;
                    let mut fd = Vector::zeros(x.len());
                    let mut kink = false;
                    for j in 0..x.len() {
                        let mut xp = x.clone();
                        let mut xm = x.clone();
                        xp[j] += step;
                        xm[j] -= step;
                        let (hp, h0, hm) = (h.value(&xp), h.value(&x), h.value(&xm));
                        // One-sided slopes disagree only across a kink of a min.
                        if ((hp - h0) - (h0 - hm)).abs() / step > 1e-3 * (1.0 + g.amax()) {
                            kink = true;
                        }
                        fd[j] = (hp - hm) / (2.0 * step);
                    }
                    if kink {
                        continue;
                    }
                    let scale = g.amax().max(1.0);
                    assert!((&g - fd).amax() / scale < 1e-6, "{kind} {} at {x}", h.name);
                }
            }
        }
    }

    #[test]
    fn gamma_must_be_positive() {
        let h = ScalarFn::new("h", |x: &Vector| x[0], |_: &Vector| Vector::from_element(1, 1.0));
        assert!(SafetySpec::new(vec![h.clone()], h.clone(), 0.0).is_err());
        assert!(SafetySpec::new(vec![h.clone()], h.clone(), -1.0).is_err());
        let spec = SafetySpec::new(vec![h.clone()], h, 2.0).unwrap();
        assert_eq!(spec.alpha(0.0), 0.0);
        assert!(spec.alpha(1.0) > spec.alpha(0.5));
    }

    #[test]
    fn closed_loop_rhs_reports_non_finite_state() {
        let b = default_benchmark(BenchmarkKind::DoubleIntegrator);
        let x = Vector::from_vec(vec![0.0, f64::NAN]);
        match closed_loop_rhs(&*b.model, &*b.policy, &x) {
            Err(Error::Evaluation { coordinate, .. }) => assert_eq!(coordinate, 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
