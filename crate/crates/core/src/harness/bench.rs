use std::time::Instant;

use serde::Serialize;

use super::{percentile, Scenario};
use crate::barrier::{build_constraints, eval_h};
use crate::qp::{solve, QpProblem};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PhaseStats {
    pub median_ms: f64,
    pub p95_ms: f64,
}

impl PhaseStats {
    fn from_samples(samples: &mut [f64]) -> Self {
        samples.sort_by(f64::total_cmp);
        Self {
            median_ms: percentile(samples, 0.5),
            p95_ms: percentile(samples, 0.95),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub scenario: String,
    pub benchmark: String,
    pub repetitions: usize,
    pub n_steps: usize,
    pub rows: usize,
    /// Flow and sensitivity integration.
    pub integration: PhaseStats,
    /// Row construction from the integrated flow.
    pub assembly: PhaseStats,
    pub qp: PhaseStats,
    pub total: PhaseStats,
    pub warnings: Vec<String>,
}

/// Times the filter phases at the scenario's initial state.
pub fn bench(scenario: &Scenario, repetitions: usize) -> Result<BenchReport> {
    if repetitions < 10 {
        return Err(Error::InvalidParameter(format!(
            "bench needs at least 10 repetitions, got {repetitions}"
        )));
    }
    scenario.validate()?;
    let b = scenario.benchmark()?;
    let (model, policy, spec) = (&*b.model, &*b.policy, &b.spec);
    let settings = scenario.filter_settings();
    let x = scenario.x0();
    let u0 = scenario.nominal.input(0.0, &x);
    let mut integration = Vec::with_capacity(repetitions);
    let mut assembly = Vec::with_capacity(repetitions);
    let mut qp = Vec::with_capacity(repetitions);
    let mut total = Vec::with_capacity(repetitions);
    let mut rows = 0;
    for _ in 0..repetitions {
        let t0 = Instant::now();
        let e = eval_h(model, policy, spec, &x, settings.horizon_s, settings.steps)?;
        let t1 = Instant::now();
        let set = build_constraints(model, policy, spec, &e, &x, &settings.rows)?;
        let t2 = Instant::now();
        rows = set.len();
        let problem = QpProblem::new(u0.clone(), set.rows, set.lower, set.upper);
        std::hint::black_box(solve(&problem)?);
        let t3 = Instant::now();
        let ms = |a: Instant, b: Instant| (b - a).as_secs_f64() * 1e3;
        integration.push(ms(t0, t1));
        assembly.push(ms(t1, t2));
        qp.push(ms(t2, t3));
        total.push(ms(t0, t3));
    }
    let integration = PhaseStats::from_samples(&mut integration);
    let assembly = PhaseStats::from_samples(&mut assembly);
    let qp = PhaseStats::from_samples(&mut qp);
    let total = PhaseStats::from_samples(&mut total);
    let mut warnings = Vec::new();
    if qp.median_ms < integration.median_ms {
        warnings.push(format!(
            "QP median {:.4} ms is below the integration median {:.4} ms",
            qp.median_ms, integration.median_ms
        ));
    }
    if total.median_ms > 10.0 {
        warnings.push(format!("median filter call {:.3} ms exceeds 10 ms", total.median_ms));
    }
    Ok(BenchReport {
        scenario: scenario.name.clone(),
        benchmark: scenario.benchmark.to_string(),
        repetitions,
        n_steps: settings.steps,
        rows,
        integration,
        assembly,
        qp,
        total,
        warnings,
    })
}
