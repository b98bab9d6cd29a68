//! Closed-loop backup flow and its sensitivity Jacobian.
//!
//! The state and `Q = dPhi/dx0` are propagated together with classical RK4 on
//! a uniform grid, so one pass yields every `(Phi(x, tau_i), Q(tau_i))` pair the
//! constraint rows need. Explicit RK applied to the variational equation gives
//! exactly the Jacobian of the discrete flow map.

use serde::Serialize;

use crate::systems::{closed_loop_jacobian, closed_loop_rhs, BackupPolicy, SystemModel};
use crate::{Error, Matrix, Result, Vector};

/// Default number of integration steps over the horizon.
pub const DEFAULT_STEPS: usize = 100;

/// Samples `Phi(x, tau_i)` and `Q(tau_i)` on `tau_i = i T / N`.
#[derive(Debug, Clone, Serialize)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    /// Empty when the flow was integrated without sensitivities.
    pub sensitivities: Vec<Matrix>,
    pub origin: Vector,
}

impl FlowTrajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn endpoint(&self) -> &Vector {
        self.states.last().expect("trajectory holds at least x0")
    }

    pub fn final_sensitivity(&self) -> Option<&Matrix> {
        self.sensitivities.last()
    }
}

fn check_args(x0: &Vector, horizon: f64, steps: usize) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidParameter("step count must be at least 1".into()));
    }
    crate::error::check_finite(x0.as_slice(), "initial state")
}

fn diverged(step: usize, dt: f64) -> impl Fn(Error) -> Error {
    move |_| Error::Divergence {
        step,
        time: step as f64 * dt,
    }
}

fn all_finite(values: &[f64]) -> bool {
    values.iter().all(|v| v.is_finite())
}

/// One classical RK4 step of `x' = rhs(x)`.
pub fn rk4_step<F>(rhs: F, x: &Vector, dt: f64) -> Result<Vector>
where
    F: Fn(&Vector) -> Result<Vector>,
{
    let k1 = rhs(x)?;
    let k2 = rhs(&(x + &k1 * (0.5 * dt)))?;
    let k3 = rhs(&(x + &k2 * (0.5 * dt)))?;
    let k4 = rhs(&(x + &k3 * dt))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0))
}

/// Integrates `x' = f_pi(x)` and `Q' = (df_pi/dx) Q`, `Q(0) = I`.
pub fn integrate_flow(
    model: &dyn SystemModel,
    policy: &dyn BackupPolicy,
    x0: &Vector,
    horizon: f64,
    steps: usize,
) -> Result<FlowTrajectory> {
    check_args(x0, horizon, steps)?;
    let n = x0.len();
    let dt = horizon / steps as f64;
    let rhs = |x: &Vector, q: &Matrix| -> Result<(Vector, Matrix)> {
        let dx = closed_loop_rhs(model, policy, x)?;
        let dq = closed_loop_jacobian(model, policy, x)? * q;
        Ok((dx, dq))
    };

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut sens = Vec::with_capacity(steps + 1);
    let mut x = x0.clone();
    let mut q = Matrix::identity(n, n);
    times.push(0.0);
    states.push(x.clone());
    sens.push(q.clone());
    for step in 1..=steps {
        let fail = diverged(step, dt);
        let (k1x, k1q) = rhs(&x, &q).map_err(&fail)?;
        let (k2x, k2q) =
            rhs(&(&x + &k1x * (0.5 * dt)), &(&q + &k1q * (0.5 * dt))).map_err(&fail)?;
        let (k3x, k3q) =
            rhs(&(&x + &k2x * (0.5 * dt)), &(&q + &k2q * (0.5 * dt))).map_err(&fail)?;
        let (k4x, k4q) = rhs(&(&x + &k3x * dt), &(&q + &k3q * dt)).map_err(&fail)?;
        x += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (dt / 6.0);
        q += (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (dt / 6.0);
        if !all_finite(x.as_slice()) || !all_finite(q.as_slice()) {
            return Err(fail(Error::Divergence { step, time: 0.0 }));
        }
        times.push(step as f64 * dt);
        states.push(x.clone());
        sens.push(q.clone());
    }
    Ok(FlowTrajectory {
        times,
        states,
        sensitivities: sens,
        origin: x0.clone(),
    })
}

/// Same grid as [`integrate_flow`] without the sensitivity propagation.
pub fn integrate_states(
    model: &dyn SystemModel,
    policy: &dyn BackupPolicy,
    x0: &Vector,
    horizon: f64,
    steps: usize,
) -> Result<FlowTrajectory> {
    check_args(x0, horizon, steps)?;
    let dt = horizon / steps as f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = x0.clone();
    times.push(0.0);
    states.push(x.clone());
    for step in 1..=steps {
        x = rk4_step(|y| closed_loop_rhs(model, policy, y), &x, dt)
            .map_err(diverged(step, dt))?;
        if !all_finite(x.as_slice()) {
            return Err(Error::Divergence {
                step,
                time: step as f64 * dt,
            });
        }
        times.push(step as f64 * dt);
        states.push(x.clone());
    }
    Ok(FlowTrajectory {
        times,
        states,
        sensitivities: Vec::new(),
        origin: x0.clone(),
    })
}

/// Largest deviation between `Q(T)` and central differences of the flow
/// endpoint, relative to the magnitude of `Q(T)`.
pub fn sensitivity_fd_check(
    model: &dyn SystemModel,
    policy: &dyn BackupPolicy,
    x0: &Vector,
    horizon: f64,
    steps: usize,
    fd_step: f64,
) -> Result<f64> {
    if !(fd_step > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step must be positive, got {fd_step}"
        )));
    }
    let traj = integrate_flow(model, policy, x0, horizon, steps)?;
    let q = traj.final_sensitivity().expect("sensitivities requested");
    let n = x0.len();
    let mut fd = Matrix::zeros(n, n);
    for j in 0..n {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[j] += fd_step;
        xm[j] -= fd_step;
        let plus = integrate_states(model, policy, &xp, horizon, steps)?;
        let minus = integrate_states(model, policy, &xm, horizon, steps)?;
        fd.set_column(j, &((plus.endpoint() - minus.endpoint()) / (2.0 * fd_step)));
    }
    Ok((q - &fd).amax() / q.amax().max(f64::MIN_POSITIVE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{default_benchmark, make_benchmark, BenchmarkKind, ParamMap};

    #[test]
    fn toy_flow_matches_exponential_decay() {
        let b = default_benchmark(BenchmarkKind::Toy1d);
        let x0 = Vector::from_element(1, 1.0);
        let traj = integrate_flow(&*b.model, &*b.policy, &x0, 1.0, 100).unwrap();
        let e = (-1.0f64).exp();
        assert!((traj.endpoint()[0] - e).abs() < 1e-9);
        assert!((traj.final_sensitivity().unwrap()[(0, 0)] - e).abs() < 1e-9);
        assert_eq!(traj.states[0], x0);
        assert_eq!(traj.sensitivities[0], Matrix::identity(1, 1));
        assert_eq!(traj.len(), 101);
    }

    #[test]
    fn tiny_horizon_is_nearly_identity() {
        let b = default_benchmark(BenchmarkKind::Dubins);
        let x0 = Vector::from_vec(vec![0.3, 5.0, 0.1]);
        let traj = integrate_flow(&*b.model, &*b.policy, &x0, 1e-9, 1).unwrap();
        assert!((traj.endpoint() - &x0).amax() < 1e-8);
        let q = traj.final_sensitivity().unwrap();
        assert!((q - Matrix::identity(3, 3)).amax() < 1e-8);
    }

    #[test]
    fn hard_braking_arc_is_exact() {
        let mut params = ParamMap::new();
        params.insert("hard".into(), serde_json::json!(true));
        let b = make_benchmark(BenchmarkKind::DoubleIntegrator, &params).unwrap();
        let x0 = Vector::from_vec(vec![0.0, 2.0]);
        let traj = integrate_flow(&*b.model, &*b.policy, &x0, 1.0, 10).unwrap();
        assert!((traj.endpoint()[0] - 1.5).abs() < 1e-12);
        assert!((traj.endpoint()[1] - 1.0).abs() < 1e-12);
        let expected = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!((traj.final_sensitivity().unwrap() - expected).amax() < 1e-12);
    }

    #[test]
    fn rejects_bad_arguments() {
        let b = default_benchmark(BenchmarkKind::Toy1d);
        let x0 = Vector::from_element(1, 1.0);
        assert!(integrate_flow(&*b.model, &*b.policy, &x0, 0.0, 10).is_err());
        assert!(integrate_flow(&*b.model, &*b.policy, &x0, 1.0, 0).is_err());
        assert!(sensitivity_fd_check(&*b.model, &*b.policy, &x0, 1.0, 10, 0.0).is_err());
    }

    #[test]
    fn divergence_reports_first_bad_step() {
        use crate::systems::{ConstantPolicy, LinearSystem};
        let sys = LinearSystem::new(
            Matrix::from_element(1, 1, 1e5),
            Matrix::zeros(1, 1),
            Vector::from_element(1, -1.0),
            Vector::from_element(1, 1.0),
        );
        let policy = ConstantPolicy {
            input: Vector::zeros(1),
            state_dim: 1,
        };
        let x0 = Vector::from_element(1, 1.0);
        match integrate_states(&sys, &policy, &x0, 40.0, 40) {
            Err(Error::Divergence { step, .. }) => assert!(step > 1 && step <= 40),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
