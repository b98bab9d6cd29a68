use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::Scenario;
use crate::barrier::{eval_h_value, filter, FilterStatus, PhaseTimings, RowLabel};
use crate::flow::rk4_step;
use crate::qp::{QpSolver, QpStatus};
use crate::{Error, Result, Vector};

#[derive(Debug, Clone, Serialize)]
pub struct SimRecord {
    pub step: usize,
    pub t_s: f64,
    pub x: Vec<f64>,
    pub u0: Vec<f64>,
    pub u_star: Vec<f64>,
    pub h_value: f64,
    /// `h^C_k(x(t))`.
    pub constraint_values: Vec<f64>,
    /// `min_i h^C_k(Phi(x(t), tau_i))` over the backup horizon.
    pub constraint_minima: Vec<f64>,
    /// `None` when the filter is off.
    pub filter_status: Option<FilterStatus>,
    pub qp_status: Option<QpStatus>,
    pub active_rows: Vec<RowLabel>,
    pub timings: PhaseTimings,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimLog {
    pub scenario: String,
    pub filter: bool,
    pub constraint_names: Vec<String>,
    pub records: Vec<SimRecord>,
}

impl SimLog {
    /// Smallest constraint value over all logged states.
    pub fn min_constraint(&self) -> f64 {
        self.records
            .iter()
            .flat_map(|r| r.constraint_values.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    /// Time at which `min_k h^C_k` first drops below zero, linearly
    /// interpolated between samples.
    pub fn first_violation_s(&self) -> Option<f64> {
        let mins: Vec<(f64, f64)> = self
            .records
            .iter()
            .map(|r| (r.t_s, r.constraint_values.iter().copied().fold(f64::INFINITY, f64::min)))
            .collect();
        if let Some(&(t, h)) = mins.first() {
            if h < 0.0 {
                return Some(t);
            }
        }
        mins.windows(2).find_map(|w| {
            let ((t0, h0), (t1, h1)) = (w[0], w[1]);
            (h1 < 0.0).then(|| t0 + (t1 - t0) * h0 / (h0 - h1))
        })
    }

    pub fn interventions(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.u0 != r.u_star)
            .count()
    }

    pub fn summary(&self) -> SimSummary {
        let mut total: Vec<f64> = self.records.iter().map(|r| r.timings.total_us).collect();
        total.sort_by(f64::total_cmp);
        SimSummary {
            scenario: self.scenario.clone(),
            filter: self.filter,
            steps: self.records.len(),
            min_constraint: self.min_constraint(),
            min_h: self
                .records
                .iter()
                .map(|r| r.h_value)
                .fold(f64::INFINITY, f64::min),
            first_violation_s: self.first_violation_s(),
            interventions: self.interventions(),
            fallbacks: self
                .records
                .iter()
                .filter(|r| r.filter_status == Some(FilterStatus::InfeasibleFallback))
                .count(),
            median_filter_us: super::percentile(&total, 0.5),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimSummary {
    pub scenario: String,
    pub filter: bool,
    pub steps: usize,
    pub min_constraint: f64,
    pub min_h: f64,
    pub first_violation_s: Option<f64>,
    pub interventions: usize,
    pub fallbacks: usize,
    pub median_filter_us: f64,
}

fn clip(u: &Vector, lower: &Vector, upper: &Vector) -> Vector {
    Vector::from_iterator(u.len(), (0..u.len()).map(|j| u[j].clamp(lower[j], upper[j])))
}

/// Runs the closed loop: nominal input, optional filter, one RK4 step of the
/// true dynamics with the input held over `dt`.
pub fn simulate(scenario: &Scenario) -> Result<SimLog> {
    scenario.validate()?;
    let bench = scenario.benchmark()?;
    let (model, policy, spec) = (&*bench.model, &*bench.policy, &bench.spec);
    let settings = scenario.filter_settings();
    let steps = (scenario.duration_s / scenario.dt_s).round() as usize;
    let dt = scenario.dt_s;
    let mut solver = QpSolver::new();
    let mut x = scenario.x0();
    let mut records = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let t = step as f64 * dt;
        let wrap = |e: Error| Error::Simulation {
            step,
            source: Box::new(e),
        };
        let u0 = scenario.nominal.input(t, &x);
        let (u_star, h_value, minima, filter_status, qp_status, active_rows, timings) = if scenario.filter {
            let (u, d) = filter(model, policy, spec, &x, &u0, &settings, &mut solver).map_err(wrap)?;
            (
                u,
                d.h_value,
                d.constraint_minima,
                Some(d.status),
                Some(d.qp_status),
                d.active_rows,
                d.timings,
            )
        } else {
            let e = eval_h_value(model, policy, spec, &x, settings.horizon_s, settings.steps).map_err(wrap)?;
            (
                clip(&u0, model.input_lower(), model.input_upper()),
                e.h_value,
                e.constraint_minima(),
                None,
                None,
                Vec::new(),
                PhaseTimings::default(),
            )
        };
        records.push(SimRecord {
            step,
            t_s: t,
            x: x.iter().copied().collect(),
            u0: u0.iter().copied().collect(),
            u_star: u_star.iter().copied().collect(),
            h_value,
            constraint_values: spec.constraints.iter().map(|c| c.value(&x)).collect(),
            constraint_minima: minima,
            filter_status,
            qp_status,
            active_rows,
            timings,
        });
        if step == steps {
            break;
        }
        x = rk4_step(
            |y| {
                let dx = model.dynamics(y, &u_star);
                crate::error::check_finite(dx.as_slice(), "true dynamics")?;
                Ok(dx)
            },
            &x,
            dt,
        )
        .map_err(wrap)?;
    }
    Ok(SimLog {
        scenario: scenario.name.clone(),
        filter: scenario.filter,
        constraint_names: spec.constraints.iter().map(|c| c.name.clone()).collect(),
        records,
    })
}

/// Writes `trajectory.csv` and `summary.json` into `dir`. The CSV carries no
/// timings so reruns produce identical files.
pub fn write_sim_outputs(log: &SimLog, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv = dir.join("trajectory.csv");
    let file = fs::File::create(&csv).map_err(|e| Error::io(&csv, e))?;
    let mut w = BufWriter::new(file);
    let first = log.records.first().expect("at least one record");
    let mut header = vec!["step".to_string(), "t_s".to_string()];
    header.extend((0..first.x.len()).map(|i| format!("x{i}")));
    header.extend((0..first.u0.len()).map(|i| format!("u0_{i}")));
    header.extend((0..first.u_star.len()).map(|i| format!("u_star_{i}")));
    header.push("h".into());
    header.extend(log.constraint_names.iter().map(|n| format!("c_{n}")));
    header.extend(log.constraint_names.iter().map(|n| format!("cmin_{n}")));
    header.push("status".into());
    header.push("active_rows".into());
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "{}", header.join(","))?;
        for r in &log.records {
            let mut fields = vec![r.step.to_string(), r.t_s.to_string()];
            for v in r.x.iter().chain(&r.u0).chain(&r.u_star) {
                fields.push(v.to_string());
            }
            fields.push(r.h_value.to_string());
            for v in r.constraint_values.iter().chain(&r.constraint_minima) {
                fields.push(v.to_string());
            }
            fields.push(match r.filter_status {
                None => "off".into(),
                Some(FilterStatus::Optimal) => "optimal".into(),
                Some(FilterStatus::InfeasibleFallback) => "fallback".into(),
            });
            fields.push(r.active_rows.len().to_string());
            writeln!(w, "{}", fields.join(","))?;
        }
        w.flush()
    };
    emit().map_err(|e| Error::io(&csv, e))?;
    let summary = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&log.summary()).map_err(|e| Error::Json {
        path: summary.clone(),
        source: e,
    })?;
    fs::write(&summary, text + "\n").map_err(|e| Error::io(&summary, e))?;
    Ok(vec![csv, summary])
}
