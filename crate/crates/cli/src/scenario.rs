//! Config loading, flag overlay and a single guarded simulation run.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use lorasim_core::cache::CachePolicy;
use lorasim_core::metrics::{summarize, RunSummary, SummaryOptions};
use lorasim_core::model::{AdapterCatalog, RequestSpec};
use lorasim_core::scheduler::SchedulerPolicy;
use lorasim_core::workload::{generate_arrivals, requests_from_trace, LengthSource};
use lorasim_core::{run, validate_config, SimConfig, SimDuration, SimError, SimOutput};

use crate::trace::read_trace;
use crate::CliError;

/// Command-line values that override the config file.
#[derive(Debug, Clone, Default)]
pub struct Overlay {
    pub rps: Option<f64>,
    pub seed: Option<u64>,
    pub policy: Option<SchedulerPolicy>,
    pub cache_policy: Option<CachePolicy>,
    pub trace: Option<PathBuf>,
    pub duration_secs: Option<f64>,
    pub num_adapters: Option<u32>,
    pub refresh_secs: Option<f64>,
}

impl Overlay {
    pub fn apply(&self, cfg: &mut SimConfig) {
        if let Some(r) = self.rps {
            cfg.workload.arrival_rate = r;
        }
        if let Some(s) = self.seed {
            cfg.workload.seed = s;
        }
        if let Some(p) = self.policy {
            cfg.scheduler.policy = p;
        }
        if let Some(p) = self.cache_policy {
            cfg.cache.policy = p;
        }
        if let Some(t) = &self.trace {
            let rescale = match &cfg.workload.lengths {
                LengthSource::Trace { rescale, .. } => *rescale,
                LengthSource::LogNormal(_) => 1.0,
            };
            cfg.workload.lengths = LengthSource::Trace { path: t.display().to_string(), rescale };
        }
        if let Some(d) = self.duration_secs {
            cfg.workload.duration = SimDuration::from_secs_f64(d.max(0.0));
        }
        if let Some(n) = self.num_adapters {
            cfg.workload.num_adapters = n;
        }
        if let Some(r) = self.refresh_secs {
            cfg.scheduler.refresh_interval = SimDuration::from_secs_f64(r.max(0.0));
        }
    }
}

/// Parse a JSON config; `{}` gives the defaults.
pub fn parse_config(text: &str) -> Result<SimConfig, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
}

pub fn read_config(path: &Path) -> Result<SimConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

/// Apply the overlay, then validate.
pub fn resolve(mut cfg: SimConfig, overlay: &Overlay) -> Result<SimConfig, CliError> {
    overlay.apply(&mut cfg);
    validate_config(cfg).map_err(CliError::Fields)
}

/// The request list a config describes: synthetic, or replayed from its trace.
pub fn materialize(cfg: &SimConfig, catalog: &AdapterCatalog) -> Result<Vec<RequestSpec>, CliError> {
    match &cfg.workload.lengths {
        LengthSource::LogNormal(_) => Ok(generate_arrivals(&cfg.workload, catalog)),
        LengthSource::Trace { path, rescale } => {
            let rows = read_trace(Path::new(path))?;
            let mut reqs = requests_from_trace(&rows, *rescale, &cfg.workload, catalog)
                .map_err(|e| CliError::Config(format!("{path}: {e}")))?;
            if let Some(max) = cfg.workload.max_requests {
                reqs.truncate(max as usize);
            }
            Ok(reqs)
        }
    }
}

pub struct Outcome {
    pub config: SimConfig,
    pub catalog: AdapterCatalog,
    pub requests: Vec<RequestSpec>,
    pub output: SimOutput,
    pub summary: RunSummary,
}

/// Summary options with the configured SLOs filled in where the summary
/// section leaves them open.
pub fn summary_options(cfg: &SimConfig) -> SummaryOptions {
    SummaryOptions {
        ttft_slo: cfg.summary.ttft_slo.or(cfg.slo.ttft_slo),
        tbt_slo: cfg.summary.tbt_slo.or(cfg.slo.tbt_slo),
        ..cfg.summary
    }
}

/// Run a validated config. Invariant violations and panics inside the core
/// become [`CliError::Runtime`].
pub fn execute(cfg: &SimConfig) -> Result<Outcome, CliError> {
    let catalog = cfg.catalog();
    let requests = materialize(cfg, &catalog)?;
    let result = catch_unwind(AssertUnwindSafe(|| run(cfg, &catalog, &requests)));
    let output = match result {
        Ok(Ok(out)) => out,
        Ok(Err(e @ SimError::RequestTooLarge { .. })) => return Err(CliError::Config(e.to_string())),
        Ok(Err(e)) => return Err(CliError::Runtime(e.to_string())),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".to_string());
            return Err(CliError::Runtime(msg));
        }
    };
    let summary = summarize(&output.records, &output.counters, &summary_options(cfg));
    Ok(Outcome { config: cfg.clone(), catalog, requests, output, summary })
}
