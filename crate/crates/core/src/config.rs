//! Full simulation configuration and its validation.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::cache::CacheConfig;
use crate::engine::EngineConfig;
use crate::metrics::SummaryOptions;
use crate::model::{AdapterCatalog, CostModelParams, HardwareProfile, SloConfig};
use crate::scheduler::SchedulerConfig;
use crate::time::SimDuration;
use crate::workload::{LengthSource, PredictorConfig, WorkloadConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub hardware: HardwareProfile,
    pub cost: CostModelParams,
    pub slo: SloConfig,
    pub workload: WorkloadConfig,
    pub predictor: PredictorConfig,
    pub scheduler: SchedulerConfig,
    pub cache: CacheConfig,
    pub engine: EngineConfig,
    pub summary: SummaryOptions,
}

impl SimConfig {
    pub fn catalog(&self) -> AdapterCatalog {
        AdapterCatalog::spread(&self.workload.ranks(), self.workload.num_adapters as usize, &self.hardware)
    }
}

/// One violated constraint, located by its dotted field path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

struct Errors(Vec<FieldError>);

impl Errors {
    fn check(&mut self, ok: bool, path: &str, message: &str) {
        if !ok {
            self.0.push(FieldError { path: path.to_string(), message: message.to_string() });
        }
    }

    fn positive(&mut self, v: f64, path: &str) {
        self.check(v.is_finite() && v > 0.0, path, "must be a positive finite number");
    }

    fn non_negative(&mut self, v: f64, path: &str) {
        self.check(v.is_finite() && v >= 0.0, path, "must be a finite number >= 0");
    }

    fn nonzero_duration(&mut self, d: SimDuration, path: &str) {
        self.check(d > SimDuration::ZERO, path, "must be greater than zero");
    }
}

/// Check every cross-field constraint; all violations are reported at once.
pub fn validate_config(cfg: SimConfig) -> Result<SimConfig, Vec<FieldError>> {
    let mut e = Errors(Vec::new());

    let hw = &cfg.hardware;
    e.check(hw.total_token_slots > 0, "hardware.total_token_slots", "must be greater than zero");
    e.check(hw.link_bandwidth_bytes_per_sec > 0, "hardware.link_bandwidth_bytes_per_sec", "must be greater than zero");
    e.check(hw.kv_bytes_per_token > 0, "hardware.kv_bytes_per_token", "must be greater than zero");
    e.check(hw.adapter_bytes_per_rank > 0, "hardware.adapter_bytes_per_rank", "must be greater than zero");

    e.check(
        cfg.slo.slo_multiplier.is_finite() && cfg.slo.slo_multiplier > 1.0,
        "slo.slo_multiplier",
        "must be greater than 1",
    );
    if let Some(t) = cfg.slo.ttft_slo {
        e.nonzero_duration(t, "slo.ttft_slo");
    }
    if let Some(t) = cfg.slo.tbt_slo {
        e.nonzero_duration(t, "slo.tbt_slo");
    }

    let w = &cfg.workload;
    e.positive(w.arrival_rate, "workload.arrival_rate");
    e.check(w.num_adapters > 0, "workload.num_adapters", "must be at least 1");
    e.check(!w.rank_set.is_empty(), "workload.rank_set", "must not be empty");
    for (i, &r) in w.rank_set.iter().enumerate() {
        e.check(r > 0, &format!("workload.rank_set[{i}]"), "rank must be positive");
        e.check(r <= i64::from(u32::MAX), &format!("workload.rank_set[{i}]"), "rank is too large");
        e.check(!w.rank_set[..i].contains(&r), &format!("workload.rank_set[{i}]"), "duplicate rank");
    }
    e.non_negative(w.rank_popularity_exponent, "workload.rank_popularity_exponent");
    match &w.lengths {
        LengthSource::LogNormal(l) => {
            e.positive(l.input_median, "workload.lengths.log_normal.input_median");
            e.non_negative(l.input_sigma, "workload.lengths.log_normal.input_sigma");
            e.check(l.input_max > 0, "workload.lengths.log_normal.input_max", "must be at least 1");
            e.positive(l.output_median, "workload.lengths.log_normal.output_median");
            e.non_negative(l.output_sigma, "workload.lengths.log_normal.output_sigma");
            e.check(l.output_max > 0, "workload.lengths.log_normal.output_max", "must be at least 1");
        }
        LengthSource::Trace { path, rescale } => {
            e.check(!path.is_empty(), "workload.lengths.trace.path", "must name a file");
            e.positive(*rescale, "workload.lengths.trace.rescale");
        }
    }

    let p = &cfg.predictor;
    e.check((0.0..=1.0).contains(&p.accuracy), "predictor.accuracy", "must lie in [0, 1]");
    e.check(p.bucket_edges.len() >= 2, "predictor.bucket_edges", "needs at least two edges");
    e.check(p.bucket_edges.first().is_none_or(|&b| b >= 1), "predictor.bucket_edges", "first edge must be >= 1");
    e.check(p.bucket_edges.windows(2).all(|w| w[0] < w[1]), "predictor.bucket_edges", "must be strictly increasing");

    let s = &cfg.scheduler;
    e.non_negative(s.weight_input, "scheduler.weight_input");
    e.non_negative(s.weight_output, "scheduler.weight_output");
    e.non_negative(s.weight_adapter, "scheduler.weight_adapter");
    e.check(s.max_queues >= 1, "scheduler.max_queues", "must be at least 1");
    e.nonzero_duration(s.refresh_interval, "scheduler.refresh_interval");
    e.check(s.max_input > 0, "scheduler.max_input", "must be greater than zero");
    e.check(s.max_output > 0, "scheduler.max_output", "must be greater than zero");
    e.check(s.max_adapter_rank > 0, "scheduler.max_adapter_rank", "must be greater than zero");
    e.check(!s.sjf_aging.is_nan() && s.sjf_aging >= 0.0, "scheduler.sjf_aging", "must be >= 0");
    e.check(s.bootstrap_samples >= 1, "scheduler.bootstrap_samples", "must be at least 1");
    e.non_negative(s.elbow_min_bend, "scheduler.elbow_min_bend");
    e.check(
        s.last_queue_quantile > 0.0 && s.last_queue_quantile <= 1.0,
        "scheduler.last_queue_quantile",
        "must lie in (0, 1]",
    );
    if let Some(f) = &s.fixed_layout {
        e.check(
            f.boundaries.iter().all(|b| b.is_finite()) && f.boundaries.windows(2).all(|w| w[0] < w[1]),
            "scheduler.fixed_layout.boundaries",
            "must be finite and strictly increasing",
        );
        e.check(
            f.quotas.len() == f.boundaries.len() + 1,
            "scheduler.fixed_layout.quotas",
            "needs one quota per queue (boundaries + 1)",
        );
    }
    if let Some(q) = s.quota_tokens {
        e.check(q > 0, "scheduler.quota_tokens", "must be greater than zero");
    }
    if let Some(t) = s.queue_slo {
        e.nonzero_duration(t, "scheduler.queue_slo");
    }

    let c = &cfg.cache;
    e.non_negative(c.weight_frequency, "cache.weight_frequency");
    e.non_negative(c.weight_recency, "cache.weight_recency");
    e.non_negative(c.weight_size, "cache.weight_size");
    e.nonzero_duration(c.frequency_window, "cache.frequency_window");
    e.nonzero_duration(c.histogram_bin, "cache.histogram_bin");
    e.check(c.histogram_bins >= 1, "cache.histogram_bins", "must be at least 1");
    if let Some(cap) = c.max_capacity_tokens {
        let largest =
            w.rank_set.iter().filter(|&&r| r > 0).map(|&r| hw.adapter_tokens(r.min(i64::from(u32::MAX)) as u32)).max();
        if hw.kv_bytes_per_token > 0 {
            e.check(
                largest.is_none_or(|l| cap >= l),
                "cache.max_capacity_tokens",
                "must hold at least the largest adapter",
            );
        }
    }

    e.check((0.0..1.0).contains(&cfg.summary.warmup_fraction), "summary.warmup_fraction", "must lie in [0, 1)");
    e.check((0.0..=1.0).contains(&cfg.engine.squash_alert_rate), "engine.squash_alert_rate", "must lie in [0, 1]");

    if e.0.is_empty() {
        Ok(cfg)
    } else {
        Err(e.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        assert!(validate_config(SimConfig::default()).is_ok());
    }

    #[test]
    fn negative_rank_is_reported() {
        let mut cfg = SimConfig::default();
        cfg.workload.rank_set = alloc::vec![8, -8];
        let errs = validate_config(cfg).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].path, "workload.rank_set[1]");
        assert_eq!(errs[0].message, "rank must be positive");
    }

    #[test]
    fn zero_capacity_rejected() {
        let mut cfg = SimConfig::default();
        cfg.hardware.total_token_slots = 0;
        cfg.slo.slo_multiplier = 0.5;
        let errs = validate_config(cfg).unwrap_err();
        let paths: Vec<&str> = errs.iter().map(|e| e.path.as_str()).collect();
        assert_eq!(paths, alloc::vec!["hardware.total_token_slots", "slo.slo_multiplier"]);
    }

    #[test]
    fn multiplier_without_overrides_is_fine() {
        let cfg =
            SimConfig { slo: SloConfig { slo_multiplier: 5.0, ttft_slo: None, tbt_slo: None }, ..Default::default() };
        let v = validate_config(cfg).unwrap();
        assert!(v.slo.ttft_slo.is_none());
    }
}
