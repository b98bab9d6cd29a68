use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bcbf_core::harness::{bench, parse_grid_counts, run_compare, run_levelset, simulate, write_sim_outputs, Scenario};
use clap::{Parser, Subcommand};

/// Safety filters from backup control barrier functions.
#[derive(Parser)]
#[command(name = "bcbf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop simulation and write trajectory.csv and summary.json.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Defaults to the scenario's output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the backup barrier over a grid, optionally with the HJ baseline.
    Levelset {
        #[arg(long)]
        scenario: PathBuf,
        /// Node counts per axis, e.g. 101x101 or 61x61x61.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        hj: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the superlevel sets of two grid files (CSV or JSON).
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        /// Also report containment after dilating by this many cells.
        #[arg(long)]
        tolerance: Option<usize>,
        /// Write the metrics as JSON here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time the filter phases at the scenario's initial state.
    Bench {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 100)]
        reps: usize,
    },
}

fn print_json<T: serde::Serialize>(value: &T) {
    match serde_json::to_string_pretty(value) {
        // A closed pipe downstream is not an error for us.
        Ok(text) => {
            let _ = writeln!(std::io::stdout().lock(), "{text}");
        }
        Err(e) => eprintln!("bcbf: cannot serialize output: {e}"),
    }
}

fn out_dir(scenario: &Scenario, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| scenario.output_dir.clone())
}

fn load(path: &Path) -> bcbf_core::Result<Scenario> {
    Scenario::load(path)
}

fn run(command: Command) -> bcbf_core::Result<()> {
    match command {
        Command::Simulate { scenario, out } => {
            let s = load(&scenario)?;
            let log = simulate(&s)?;
            let dir = out_dir(&s, out);
            let files = write_sim_outputs(&log, &dir)?;
            print_json(&log.summary());
            for f in files {
                eprintln!("wrote {}", f.display());
            }
        }
        Command::Levelset {
            scenario,
            grid,
            hj,
            out,
        } => {
            let s = load(&scenario)?;
            let counts = grid.as_deref().map(parse_grid_counts).transpose()?;
            let geometry = s.grid_geometry(counts.as_deref())?;
            let dir = out_dir(&s, out);
            let result = run_levelset(&s, &geometry, &s.levelset.slices, hj, &dir)?;
            print_json(&serde_json::json!({
                "backup_members": result.backup.count_at_least(0.0),
                "cells": result.backup.len(),
                "hj": result.hj_report,
                "backup_vs_hj": result.metrics,
                "slices": result.slice_metrics,
            }));
            for f in &result.files {
                eprintln!("wrote {}", f.display());
            }
        }
        Command::Compare {
            a,
            b,
            threshold,
            tolerance,
            out,
        } => {
            let metrics = run_compare(&a, &b, threshold, tolerance, out.as_deref())?;
            print_json(&metrics);
        }
        Command::Bench { scenario, reps } => {
            let s = load(&scenario)?;
            let report = bench(&s, reps)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            print_json(&report);
        }
    }
    Ok(())
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("BCBF_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("BCBF_THREADS must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("bcbf: {e}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bcbf: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
