//! Scenario files, closed-loop simulation, timing and grid artifacts.

mod bench;
mod levelset;
mod scenario;
mod simulate;

pub use bench::{bench, BenchReport, PhaseStats};
pub use levelset::{run_compare, run_hj, run_levelset, LevelsetOutput, DEFAULT_CFL, DEFAULT_HJ_MAX_STEPS, DEFAULT_HJ_TOL};
pub use scenario::{default_geometry, parse_grid_counts, LevelsetConfig, Nominal, Scenario, ScriptEntry, SliceSpec};
pub use simulate::{simulate, write_sim_outputs, SimLog, SimRecord, SimSummary};

/// Nearest-rank percentile of sorted samples; 0 for an empty slice.
pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}
