use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lorasim::diff::diff_dirs;
use lorasim::output::{print_config, write_run};
use lorasim::presets::{self, parse_cache_policy, parse_cell, parse_policy, Cell};
use lorasim::scenario::{execute, read_config, resolve, Overlay};
use lorasim::sweep::{capacity_table, comparison_table, run_sweep};
use lorasim::CliError;
use lorasim_core::cache::CachePolicy;
use lorasim_core::scheduler::SchedulerPolicy;
use lorasim_core::SimConfig;

/// Simulate a LoRA serving node.
///
/// Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 runtime
/// assertion inside the simulator.
#[derive(Parser)]
#[command(name = "lorasim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its result directory.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Print the resolved config and exit without simulating.
        #[arg(long)]
        dry_run: bool,
    },
    /// Run a grid of policies x rps x seeds in parallel.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Comma-separated rps values; defaults to the preset grid.
        #[arg(long, value_delimiter = ',')]
        rps_grid: Vec<f64>,
        /// Comma-separated seeds; defaults to the preset seeds or the config seed.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Comma-separated `policy+cache_policy` cells, e.g. `fifo+no_cache,mlq+cost_aware`.
        #[arg(long, value_delimiter = ',', value_parser = parse_cell)]
        cells: Vec<Cell>,
    },
    /// Relative change of every summary metric from run A to run B, as JSON.
    Diff { a: PathBuf, b: PathBuf },
    /// Check a config file and report every problem.
    Validate { config: PathBuf },
    /// List presets, or print one as JSON.
    Presets { name: Option<String> },
}

#[derive(Args)]
struct ScenarioArgs {
    /// JSON config file; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a named preset instead of the defaults.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    #[arg(long)]
    rps: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_policy)]
    policy: Option<SchedulerPolicy>,
    #[arg(long, value_parser = parse_cache_policy)]
    cache_policy: Option<CachePolicy>,
    /// Replay `arrival_ms,input_tokens,output_tokens[,adapter_id]` rows.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "LORASIM_OUT", default_value = "lorasim-out")]
    out: PathBuf,
    /// Length of the arrival window in seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    num_adapters: Option<u32>,
    /// Seconds between queue layout refreshes.
    #[arg(long)]
    refresh_secs: Option<f64>,
}

impl ScenarioArgs {
    fn overlay(&self) -> Overlay {
        Overlay {
            rps: self.rps,
            seed: self.seed,
            policy: self.policy,
            cache_policy: self.cache_policy,
            trace: self.trace.clone(),
            duration_secs: self.duration,
            num_adapters: self.num_adapters,
            refresh_secs: self.refresh_secs,
        }
    }

    fn preset(&self) -> Result<Option<presets::Preset>, CliError> {
        match &self.preset {
            None => Ok(None),
            Some(name) => presets::preset(name)
                .map(Some)
                .ok_or_else(|| CliError::Config(format!("unknown preset {name:?}; try `lorasim presets`"))),
        }
    }

    fn base(&self) -> Result<SimConfig, CliError> {
        if let Some(p) = self.preset()? {
            return Ok(p.config);
        }
        match &self.config {
            Some(path) => read_config(path),
            None => Ok(SimConfig::default()),
        }
    }

    fn resolved(&self) -> Result<SimConfig, CliError> {
        resolve(self.base()?, &self.overlay())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    let mut stdout = std::io::stdout().lock();
    match command {
        Command::Run { scenario, dry_run } => {
            let cfg = scenario.resolved()?;
            if dry_run {
                return print_config(&cfg, &mut stdout);
            }
            let outcome = execute(&cfg)?;
            write_run(&scenario.out, &outcome)?;
            let s = &outcome.summary;
            writeln!(
                stdout,
                "{} requests: ttft p50 {:.1} ms, p99 {:.1} ms; tbt p99 {:.1} ms; hit rate {:.3}; squash rate {:.4}; {} bytes moved",
                s.requests,
                s.ttft_p50_us as f64 / 1e3,
                s.ttft_p99_us as f64 / 1e3,
                s.tbt_p99_us as f64 / 1e3,
                s.adapter_hit_rate,
                s.squash_rate,
                s.counters.bytes_transferred
            )?;
            if s.squash_rate > cfg.engine.squash_alert_rate {
                eprintln!(
                    "warning: squash rate {:.4} exceeds the alert threshold {}",
                    s.squash_rate, cfg.engine.squash_alert_rate
                );
            }
            writeln!(stdout, "results in {}", scenario.out.display())?;
            Ok(())
        }
        Command::Sweep { scenario, rps_grid, seeds, cells } => {
            let preset = scenario.preset()?;
            let cfg = scenario.resolved()?;
            let rps_grid = pick(rps_grid, preset.as_ref().map(|p| p.rps_grid.clone()), vec![cfg.workload.arrival_rate]);
            let seeds = pick(seeds, preset.as_ref().map(|p| p.seeds.clone()), vec![cfg.workload.seed]);
            let cells = pick(
                cells,
                preset.as_ref().map(|p| p.cells.clone()),
                vec![Cell::new(cfg.scheduler.policy, cfg.cache.policy)],
            );
            let results = run_sweep(&cfg, &cells, &rps_grid, &seeds, &scenario.out)?;
            let table = comparison_table(&results);
            std::fs::write(scenario.out.join("comparison.csv"), &table)?;
            let capacity = capacity_table(&results, &cfg)?;
            std::fs::write(scenario.out.join("capacity.csv"), &capacity)?;
            write!(stdout, "{table}")?;
            writeln!(stdout, "results in {}", scenario.out.display())?;
            Ok(())
        }
        Command::Diff { a, b } => {
            let deltas = diff_dirs(&a, &b)?;
            let text = serde_json::to_string_pretty(&deltas).map_err(anyhow::Error::from)?;
            writeln!(stdout, "{text}")?;
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = resolve(read_config(&config)?, &Overlay::default())?;
            writeln!(
                stdout,
                "{}: ok ({} adapters, {} rps)",
                config.display(),
                cfg.workload.num_adapters,
                cfg.workload.arrival_rate
            )?;
            Ok(())
        }
        Command::Presets { name: None } => {
            for name in presets::NAMES {
                let p = presets::preset(name).unwrap();
                writeln!(stdout, "{name}\n    {}", p.description)?;
            }
            Ok(())
        }
        Command::Presets { name: Some(name) } => {
            let p = presets::preset(&name).ok_or_else(|| CliError::Config(format!("unknown preset {name:?}")))?;
            let text = serde_json::to_string_pretty(&p).map_err(anyhow::Error::from)?;
            writeln!(stdout, "{text}")?;
            Ok(())
        }
    }
}

fn pick<T>(given: Vec<T>, preset: Option<Vec<T>>, fallback: Vec<T>) -> Vec<T> {
    if !given.is_empty() {
        given
    } else {
        preset.unwrap_or(fallback)
    }
}
