//! Implicit backup barrier and the filtering QP built from it.
//!
//! `h(x) = min( min_{k,i} h^C_k(Phi(x, tau_i)), h^S(Phi(x, T)) )`. Its zero
//! superlevel set is control invariant; enforcing one affine row per
//! `(k, tau_i)` plus a terminal row keeps the state inside.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::flow::{integrate_flow, integrate_states, FlowTrajectory};
use crate::qp::{Constraint, LinearRow, QpProblem, QpSolver, QpStatus};
use crate::systems::{closed_loop_rhs, BackupPolicy, SafetySpec, StateBox, SystemModel};
use crate::{Error, Result, Vector};

/// Which term of the minimum a value or row comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RowLabel {
    Path {
        constraint: usize,
        step: usize,
        tau_s: f64,
    },
    Terminal,
}

#[derive(Debug, Clone, Serialize)]
pub struct BarrierEvaluation {
    pub h_value: f64,
    /// `per_tau_values[i][k] = h^C_k(Phi(x, tau_i))`.
    pub per_tau_values: Vec<Vec<f64>>,
    pub terminal_value: f64,
    pub argmin: RowLabel,
    #[serde(skip)]
    pub trajectory: FlowTrajectory,
}

impl BarrierEvaluation {
    /// Smallest path value, ignoring the terminal term.
    pub fn path_min(&self) -> f64 {
        self.per_tau_values
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Minimum of each constraint over the horizon.
    pub fn constraint_minima(&self) -> Vec<f64> {
        let k = self.per_tau_values.first().map_or(0, Vec::len);
        (0..k)
            .map(|c| {
                self.per_tau_values
                    .iter()
                    .map(|row| row[c])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    pub fn is_safe(&self) -> bool {
        self.h_value >= 0.0
    }
}

/// Evaluates the implicit barrier with one flow integration.
pub fn eval_h(
    model: &dyn SystemModel,
    policy: &dyn BackupPolicy,
    spec: &SafetySpec,
    x: &Vector,
    horizon: f64,
    steps: usize,
) -> Result<BarrierEvaluation> {
    check_state(model, x)?;
    let trajectory = integrate_flow(model, policy, x, horizon, steps)?;
    Ok(evaluate_on(spec, trajectory))
}

/// As [`eval_h`] but skips the sensitivity propagation; the result cannot be
/// used to build constraint rows.
pub fn eval_h_value(
    model: &dyn SystemModel,
    policy: &dyn BackupPolicy,
    spec: &SafetySpec,
    x: &Vector,
    horizon: f64,
    steps: usize,
) -> Result<BarrierEvaluation> {
    check_state(model, x)?;
    let trajectory = integrate_states(model, policy, x, horizon, steps)?;
    Ok(evaluate_on(spec, trajectory))
}

fn evaluate_on(spec: &SafetySpec, trajectory: FlowTrajectory) -> BarrierEvaluation {
    let mut h_value = f64::INFINITY;
    let mut argmin = RowLabel::Terminal;
    let mut per_tau_values = Vec::with_capacity(trajectory.len());
    for (i, (phi, &tau)) in trajectory.states.iter().zip(&trajectory.times).enumerate() {
        let values: Vec<f64> = spec.constraints.iter().map(|c| c.value(phi)).collect();
        for (k, &v) in values.iter().enumerate() {
            if v < h_value {
                h_value = v;
                argmin = RowLabel::Path {
                    constraint: k,
                    step: i,
                    tau_s: tau,
                };
            }
        }
        per_tau_values.push(values);
    }
    let terminal_value = spec.terminal.value(trajectory.endpoint());
    if terminal_value < h_value {
        h_value = terminal_value;
        argmin = RowLabel::Terminal;
    }
    BarrierEvaluation {
        h_value,
        per_tau_values,
        terminal_value,
        argmin,
        trajectory,
    }
}

fn check_state(model: &dyn SystemModel, x: &Vector) -> Result<()> {
    if x.len() != model.state_dim() {
        return Err(Error::Dimension {
            context: "state",
            expected: model.state_dim(),
            actual: x.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RowOptions {
    /// Added to every path-row right-hand side.
    pub margin: f64,
    /// Drop path rows whose slack at `pi(x)` exceeds this value.
    pub prune_slack: Option<f64>,
}

impl Default for RowOptions {
    fn default() -> Self {
        Self {
            margin: 0.0,
            prune_slack: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstraintSet {
    pub rows: Vec<LinearRow>,
    pub labels: Vec<RowLabel>,
    pub lower: Vector,
    pub upper: Vector,
}

impl ConstraintSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn slacks(&self, u: &Vector) -> Vec<f64> {
        self.rows.iter().map(|r| r.slack(u)).collect()
    }

    pub fn min_slack(&self, u: &Vector) -> f64 {
        self.slacks(u).into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// Assembles `a^T u >= b` rows from an evaluation at `x`.
pub fn build_constraints(
    model: &dyn SystemModel,
    policy: &dyn BackupPolicy,
    spec: &SafetySpec,
    evaluation: &BarrierEvaluation,
    x: &Vector,
    options: &RowOptions,
) -> Result<ConstraintSet> {
    check_state(model, x)?;
    let traj = &evaluation.trajectory;
    if traj.origin != *x {
        return Err(Error::InvalidParameter(
            "barrier evaluation was computed at a different state".into(),
        ));
    }
    if traj.sensitivities.len() != traj.states.len() {
        return Err(Error::Dimension {
            context: "flow sensitivities",
            expected: traj.states.len(),
            actual: traj.sensitivities.len(),
        });
    }
    let m = model.input_dim();
    let fx = model.f(x);
    let gx = model.g(x);
    if gx.nrows() != x.len() || gx.ncols() != m {
        return Err(Error::Dimension {
            context: "input matrix columns",
            expected: m,
            actual: gx.ncols(),
        });
    }
    let pi_x = policy.eval(x);
    let mut rows = Vec::with_capacity(traj.len() * spec.constraints.len() + 1);
    let mut labels = Vec::with_capacity(rows.capacity());
    for (i, ((phi, q), &tau)) in traj
        .states
        .iter()
        .zip(&traj.sensitivities)
        .zip(&traj.times)
        .enumerate()
    {
        let qf = q * &fx;
        let qg = q * &gx;
        let f_pi = closed_loop_rhs(model, policy, phi)?;
        for (k, c) in spec.constraints.iter().enumerate() {
            let grad = c.gradient(phi);
            let a = qg.tr_mul(&grad);
            let b = -grad.dot(&(&qf - &f_pi)) - spec.alpha(evaluation.per_tau_values[i][k])
                + options.margin;
            let row = LinearRow::new(a, b);
            if let Some(limit) = options.prune_slack {
                if row.slack(&pi_x) > limit {
                    continue;
                }
            }
            rows.push(row);
            labels.push(RowLabel::Path {
                constraint: k,
                step: i,
                tau_s: tau,
            });
        }
    }
    let q_n = traj.final_sensitivity().expect("non-empty trajectory");
    let grad = spec.terminal.gradient(traj.endpoint());
    let a = (q_n * &gx).tr_mul(&grad);
    let b = -grad.dot(&(q_n * &fx)) - spec.alpha(evaluation.terminal_value);
    rows.push(LinearRow::new(a, b));
    labels.push(RowLabel::Terminal);
    Ok(ConstraintSet {
        rows,
        labels,
        lower: model.input_lower().clone(),
        upper: model.input_upper().clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FilterSettings {
    pub horizon_s: f64,
    pub steps: usize,
    pub rows: RowOptions,
}

impl FilterSettings {
    pub fn new(horizon_s: f64, steps: usize) -> Self {
        Self {
            horizon_s,
            steps,
            rows: RowOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterStatus {
    Optimal,
    /// The QP had no solution; the backup input was applied instead.
    InfeasibleFallback,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PhaseTimings {
    pub integration_us: f64,
    pub assembly_us: f64,
    pub qp_us: f64,
    pub total_us: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FilterDiagnostics {
    pub h_value: f64,
    pub argmin: RowLabel,
    pub terminal_value: f64,
    pub constraint_minima: Vec<f64>,
    /// `h(x) < 0`: the filter still runs but nothing is guaranteed.
    pub outside_set: bool,
    pub status: FilterStatus,
    pub qp_status: QpStatus,
    pub active_rows: Vec<RowLabel>,
    pub active_bounds: Vec<Constraint>,
    pub row_count: usize,
    pub kkt_residual: f64,
    pub timings: PhaseTimings,
}

fn micros(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e6
}

/// Minimally modifies `u0` so that every barrier row holds.
#[allow(clippy::too_many_arguments)]
pub fn filter(
    model: &dyn SystemModel,
    policy: &dyn BackupPolicy,
    spec: &SafetySpec,
    x: &Vector,
    u0: &Vector,
    settings: &FilterSettings,
    solver: &mut QpSolver,
) -> Result<(Vector, FilterDiagnostics)> {
    let start = Instant::now();
    if u0.len() != model.input_dim() {
        return Err(Error::Dimension {
            context: "nominal input",
            expected: model.input_dim(),
            actual: u0.len(),
        });
    }
    crate::error::check_finite(u0.as_slice(), "nominal input")?;
    let evaluation = eval_h(model, policy, spec, x, settings.horizon_s, settings.steps)?;
    let integration_us = micros(start);

    let t = Instant::now();
    let set = build_constraints(model, policy, spec, &evaluation, x, &settings.rows)?;
    let assembly_us = micros(t);

    let t = Instant::now();
    let problem = QpProblem::new(u0.clone(), set.rows, set.lower, set.upper);
    let solution = solver.solve(&problem)?;
    let qp_us = micros(t);

    let (u_star, status) = match solution.status {
        QpStatus::Optimal => (solution.u_star.clone(), FilterStatus::Optimal),
        QpStatus::Infeasible => {
            solver.reset();
            (policy.eval(x), FilterStatus::InfeasibleFallback)
        }
        QpStatus::MaxIter => {
            return Err(Error::Solver(format!(
                "active-set iteration cap reached after {} changes",
                solution.iterations
            )))
        }
    };
    let mut active_rows = Vec::new();
    let mut active_bounds = Vec::new();
    for c in &solution.active_set {
        match *c {
            Constraint::Row(i) => active_rows.push(set.labels[i]),
            bound => active_bounds.push(bound),
        }
    }
    let diagnostics = FilterDiagnostics {
        h_value: evaluation.h_value,
        argmin: evaluation.argmin,
        terminal_value: evaluation.terminal_value,
        constraint_minima: evaluation.constraint_minima(),
        outside_set: evaluation.h_value < 0.0,
        status,
        qp_status: solution.status,
        active_rows,
        active_bounds,
        row_count: problem.rows.len(),
        kkt_residual: solution.kkt_residual,
        timings: PhaseTimings {
            integration_us,
            assembly_us,
            qp_us,
            total_us: micros(start),
        },
    };
    Ok((u_star, diagnostics))
}

/// Euclidean norm of the terminal row's input coefficient at `x`.
pub fn terminal_input_gain(
    model: &dyn SystemModel,
    policy: &dyn BackupPolicy,
    spec: &SafetySpec,
    x: &Vector,
    horizon: f64,
    steps: usize,
) -> Result<f64> {
    let evaluation = eval_h(model, policy, spec, x, horizon, steps)?;
    let traj = &evaluation.trajectory;
    let grad = spec.terminal.gradient(traj.endpoint());
    let q = traj.final_sensitivity().expect("non-empty trajectory");
    Ok((q * model.g(x)).tr_mul(&grad).norm())
}

/// Fraction of uniformly sampled states whose terminal row depends on `u`.
#[allow(clippy::too_many_arguments)]
pub fn relative_degree_probe(
    model: &dyn SystemModel,
    policy: &dyn BackupPolicy,
    spec: &SafetySpec,
    sample_box: &StateBox,
    count: usize,
    horizon: f64,
    steps: usize,
    seed: u64,
) -> Result<f64> {
    if count == 0 {
        return Err(Error::InvalidParameter("probe count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut passing = 0usize;
    for _ in 0..count {
        let x = sample_box.sample(&mut rng);
        if terminal_input_gain(model, policy, spec, &x, horizon, steps)? > 1e-8 {
            passing += 1;
        }
    }
    Ok(passing as f64 / count as f64)
}
