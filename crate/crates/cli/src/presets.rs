//! Desk-scale versions of the two headline experiments.

use lorasim_core::cache::CachePolicy;
use lorasim_core::scheduler::SchedulerPolicy;
use lorasim_core::{SimConfig, SimDuration};
use serde::{Deserialize, Serialize};

/// One scheduler + cache combination in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub policy: SchedulerPolicy,
    pub cache_policy: CachePolicy,
}

impl Cell {
    pub const fn new(policy: SchedulerPolicy, cache_policy: CachePolicy) -> Self {
        Cell { policy, cache_policy }
    }

    pub fn label(&self) -> String {
        format!("{}+{}", policy_name(self.policy), cache_name(self.cache_policy))
    }
}

pub fn policy_name(p: SchedulerPolicy) -> &'static str {
    match p {
        SchedulerPolicy::Fifo => "fifo",
        SchedulerPolicy::Sjf => "sjf",
        SchedulerPolicy::Mlq => "mlq",
    }
}

pub fn cache_name(p: CachePolicy) -> &'static str {
    match p {
        CachePolicy::NoCache => "no_cache",
        CachePolicy::Lru => "lru",
        CachePolicy::FairShare => "fair_share",
        CachePolicy::CostAware => "cost_aware",
    }
}

pub fn parse_policy(s: &str) -> Result<SchedulerPolicy, String> {
    match s {
        "fifo" => Ok(SchedulerPolicy::Fifo),
        "sjf" => Ok(SchedulerPolicy::Sjf),
        "mlq" => Ok(SchedulerPolicy::Mlq),
        _ => Err(format!("unknown scheduler policy {s:?} (fifo, sjf, mlq)")),
    }
}

pub fn parse_cache_policy(s: &str) -> Result<CachePolicy, String> {
    match s {
        "no_cache" => Ok(CachePolicy::NoCache),
        "lru" => Ok(CachePolicy::Lru),
        "fair_share" => Ok(CachePolicy::FairShare),
        "cost_aware" => Ok(CachePolicy::CostAware),
        _ => Err(format!("unknown cache policy {s:?} (no_cache, lru, fair_share, cost_aware)")),
    }
}

/// `policy+cache_policy`, e.g. `mlq+cost_aware`.
pub fn parse_cell(s: &str) -> Result<Cell, String> {
    let (p, c) = s.split_once('+').ok_or_else(|| format!("cell {s:?} must look like mlq+cost_aware"))?;
    Ok(Cell::new(parse_policy(p)?, parse_cache_policy(c)?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub description: String,
    pub config: SimConfig,
    pub rps_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub cells: Vec<Cell>,
}

pub const NAMES: [&str; 2] = ["fig9-tail-latency", "fig11-eviction"];

/// Requests per cell; enough for a stable P99.
const REQUESTS: u64 = 10_000;

fn base() -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.workload.max_requests = Some(REQUESTS);
    cfg.workload.duration = SimDuration::from_secs(7_200);
    cfg
}

fn at_rate(mut cfg: SimConfig, rps: f64) -> SimConfig {
    cfg.workload.arrival_rate = rps;
    cfg
}

/// Adapter working set of the default catalog in token slots.
pub fn working_set_tokens(cfg: &SimConfig) -> u64 {
    cfg.catalog().iter().map(|a| a.size_tokens).sum()
}

pub fn preset(name: &str) -> Option<Preset> {
    use CachePolicy::*;
    use SchedulerPolicy::*;
    match name {
        "fig9-tail-latency" => Some(Preset {
            name: name.to_string(),
            description: "Tail TTFT of FIFO without a cache, SJF and the multi-queue scheduler (both with the \
                          cost-aware cache) as load approaches saturation. The default node saturates near \
                          4.2 rps, so the grid tops out at about 0.9 of that."
                .to_string(),
            config: at_rate(base(), 3.75),
            rps_grid: vec![1.0, 2.0, 3.0, 3.5, 3.75],
            seeds: vec![0, 1, 2],
            cells: vec![Cell::new(Fifo, NoCache), Cell::new(Sjf, CostAware), Cell::new(Mlq, CostAware)],
        }),
        "fig11-eviction" => {
            let mut cfg = at_rate(base(), 3.0);
            cfg.cache.max_capacity_tokens = Some(working_set_tokens(&cfg) / 4);
            Some(Preset {
                name: name.to_string(),
                description: "Eviction policies with adapter memory capped at a quarter of the adapter \
                              working set, under the multi-queue scheduler."
                    .to_string(),
                config: cfg,
                rps_grid: vec![1.0, 2.0, 3.0],
                seeds: vec![0, 1, 2],
                cells: vec![
                    Cell::new(Mlq, NoCache),
                    Cell::new(Mlq, Lru),
                    Cell::new(Mlq, FairShare),
                    Cell::new(Mlq, CostAware),
                ],
            })
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in NAMES {
            let p = preset(name).unwrap();
            assert!(lorasim_core::validate_config(p.config).is_ok(), "{name}");
        }
    }

    #[test]
    fn eviction_preset_caps_a_quarter_of_the_working_set() {
        let p = preset("fig11-eviction").unwrap();
        assert_eq!(p.config.cache.max_capacity_tokens, Some(4_960));
    }

    #[test]
    fn cells_round_trip() {
        for name in NAMES {
            for c in preset(name).unwrap().cells {
                assert_eq!(parse_cell(&c.label()), Ok(c));
            }
        }
    }
}
