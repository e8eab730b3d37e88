//! Parallel grid of (cell, rps, seed) runs and the tables built from them.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use lorasim_core::metrics::{derive_slo, meets_slo, throughput_scan, RunSummary};
use lorasim_core::{validate_config, SimConfig};
use rayon::prelude::*;

use crate::output::write_run;
use crate::presets::{cache_name, policy_name, Cell};
use crate::scenario::execute;
use crate::CliError;

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub cell: Cell,
    pub rps: f64,
    pub seed: u64,
    pub dir: PathBuf,
    pub summary: RunSummary,
}

pub fn cell_dir(root: &Path, cell: Cell, rps: f64, seed: u64) -> PathBuf {
    root.join(cell.label()).join(format!("rps-{rps}")).join(format!("seed-{seed}"))
}

/// Run every combination; each writes its own directory. Results come back
/// in grid order regardless of scheduling.
pub fn run_sweep(
    base: &SimConfig,
    cells: &[Cell],
    rps_grid: &[f64],
    seeds: &[u64],
    root: &Path,
) -> Result<Vec<SweepResult>, CliError> {
    let mut jobs = Vec::new();
    for &cell in cells {
        for &rps in rps_grid {
            for &seed in seeds {
                jobs.push((cell, rps, seed));
            }
        }
    }
    jobs.into_par_iter()
        .map(|(cell, rps, seed)| {
            let mut cfg = base.clone();
            cfg.scheduler.policy = cell.policy;
            cfg.cache.policy = cell.cache_policy;
            cfg.workload.arrival_rate = rps;
            cfg.workload.seed = seed;
            let cfg = validate_config(cfg).map_err(CliError::Fields)?;
            let outcome = execute(&cfg)?;
            let dir = cell_dir(root, cell, rps, seed);
            write_run(&dir, &outcome)?;
            Ok(SweepResult { cell, rps, seed, dir, summary: outcome.summary })
        })
        .collect()
}

pub const COMPARISON_HEADER: &str = "policy,cache_policy,rps,seed,requests,ttft_mean_us,ttft_p50_us,ttft_p99_us,\
tbt_p99_us,e2e_p99_us,adapter_hit_rate,squash_rate,bytes_transferred,throughput_rps";

/// One row per run, in the given order.
pub fn comparison_table(results: &[SweepResult]) -> String {
    let mut out = String::from(COMPARISON_HEADER);
    out.push('\n');
    for r in results {
        let s = &r.summary;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            policy_name(r.cell.policy),
            cache_name(r.cell.cache_policy),
            r.rps,
            r.seed,
            s.requests,
            s.ttft_mean_us,
            s.ttft_p50_us,
            s.ttft_p99_us,
            s.tbt_p99_us,
            s.e2e_p99_us,
            s.adapter_hit_rate,
            s.squash_rate,
            s.counters.bytes_transferred,
            s.throughput_rps
        )
        .unwrap();
    }
    out
}

/// Largest rps per (cell, seed) meeting the SLO. Without absolute SLOs the
/// lowest-rps run of each (cell, seed) is the calibration run.
pub fn capacity_table(results: &[SweepResult], cfg: &SimConfig) -> Result<String, CliError> {
    let mut out = String::from("policy,cache_policy,seed,ttft_slo_us,tbt_slo_us,max_rps,saturated,non_monotone\n");
    let mut keys: Vec<(Cell, u64)> = Vec::new();
    for r in results {
        if !keys.contains(&(r.cell, r.seed)) {
            keys.push((r.cell, r.seed));
        }
    }
    for (cell, seed) in keys {
        let mut runs: Vec<&SweepResult> = results.iter().filter(|r| r.cell == cell && r.seed == seed).collect();
        runs.sort_by(|a, b| a.rps.total_cmp(&b.rps));
        let slo =
            derive_slo(runs.first().map(|r| &r.summary), &cfg.slo).map_err(|e| CliError::Config(e.to_string()))?;
        let grid: Vec<(f64, bool)> = runs.iter().map(|r| (r.rps, meets_slo(&r.summary, &slo))).collect();
        let scan = throughput_scan(&grid);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            policy_name(cell.policy),
            cache_name(cell.cache_policy),
            seed,
            slo.ttft.as_micros(),
            slo.tbt.as_micros(),
            scan.max_rps.map(|v| v.to_string()).unwrap_or_default(),
            scan.saturated,
            scan.non_monotone
        )
        .unwrap();
    }
    Ok(out)
}
