//! Per-request records and run summaries.
//!
//! Percentiles are nearest-rank so summaries are exact integers that can be
//! recomputed bit-for-bit from the per-request output.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cache::CacheStats;
use crate::model::{AdapterId, RequestId, SloConfig};
use crate::time::{SimDuration, SimTime};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub request_id: RequestId,
    pub arrival: SimTime,
    pub queue: usize,
    pub wrs: f64,
    pub adapter: AdapterId,
    pub rank: u32,
    pub ttft: SimDuration,
    pub e2e: SimDuration,
    /// Gaps between consecutive output tokens, in microseconds.
    pub tbt_samples: Vec<u64>,
    pub slowdown: f64,
    pub squashes: u32,
    pub bypassed: bool,
    pub adapter_hit: bool,
}

impl MetricsRecord {
    pub fn mean_tbt_us(&self) -> f64 {
        if self.tbt_samples.is_empty() {
            0.0
        } else {
            self.tbt_samples.iter().sum::<u64>() as f64 / self.tbt_samples.len() as f64
        }
    }
}

/// Run-level counters that are not derivable from per-request records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunCounters {
    pub bytes_transferred: u64,
    pub transfers: u64,
    pub cache: CacheStats,
    pub squash_events: u64,
    pub steps: u64,
    pub refreshes: u64,
    pub quota_infeasible_refreshes: u64,
    /// Requests squashed to free memory when nothing else could run.
    pub memory_squashes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricsError {
    EmptySamples,
    BadPercentile,
    MissingCalibration,
}

impl core::fmt::Display for MetricsError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            MetricsError::EmptySamples => "percentile of an empty sample set",
            MetricsError::BadPercentile => "percentile must lie in (0, 100]",
            MetricsError::MissingCalibration => "no calibration run and no absolute SLO override",
        })
    }
}

/// Nearest-rank percentile: the `ceil(p/100 * n)`-th smallest sample.
pub fn percentile(samples: &[u64], p: f64) -> Result<u64, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptySamples);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    percentile_sorted(&sorted, p)
}

pub fn percentile_sorted(sorted: &[u64], p: f64) -> Result<u64, MetricsError> {
    if sorted.is_empty() {
        return Err(MetricsError::EmptySamples);
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(MetricsError::BadPercentile);
    }
    let rank = libm::ceil(p / 100.0 * sorted.len() as f64 - 1e-9).max(1.0) as usize;
    Ok(sorted[rank.min(sorted.len()) - 1])
}

fn percentile_f64(sorted: &[f64], p: f64) -> f64 {
    let rank = libm::ceil(p / 100.0 * sorted.len() as f64 - 1e-9).max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummaryOptions {
    /// Leading share of the arrival span left out of the summary.
    pub warmup_fraction: f64,
    pub ttft_slo: Option<SimDuration>,
    pub tbt_slo: Option<SimDuration>,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        SummaryOptions { warmup_fraction: 0.05, ttft_slo: None, tbt_slo: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub key: u64,
    pub requests: u64,
    pub ttft_p50_us: u64,
    pub ttft_p99_us: u64,
    pub e2e_p99_us: u64,
    pub mean_wrs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub requests: u64,
    pub measured: u64,
    pub warmup_cutoff_us: u64,
    pub ttft_mean_us: f64,
    pub ttft_p50_us: u64,
    pub ttft_p99_us: u64,
    pub tbt_mean_us: f64,
    /// P99 over every token gap of every request.
    pub tbt_p99_us: u64,
    /// P99 over each request's largest gap.
    pub tbt_max_p99_us: u64,
    pub e2e_p50_us: u64,
    pub e2e_p99_us: u64,
    /// `(percentile, slowdown)` points.
    pub slowdown_cdf: Vec<(f64, f64)>,
    /// Share of requests whose adapter was resident at admission.
    pub adapter_hit_rate: f64,
    pub squash_rate: f64,
    pub bypass_rate: f64,
    /// Share meeting the TTFT SLO and, when set, the mean-TBT SLO.
    pub slo_attainment: Option<f64>,
    /// Completions per second over the measured arrival span.
    pub throughput_rps: f64,
    pub per_queue: Vec<GroupStats>,
    pub per_rank: Vec<GroupStats>,
    pub counters: RunCounters,
}

const CDF_POINTS: [f64; 9] = [1.0, 10.0, 25.0, 50.0, 75.0, 90.0, 95.0, 99.0, 100.0];

fn group_stats(key: u64, rs: &[&MetricsRecord]) -> GroupStats {
    let mut ttft: Vec<u64> = rs.iter().map(|r| r.ttft.as_micros()).collect();
    let mut e2e: Vec<u64> = rs.iter().map(|r| r.e2e.as_micros()).collect();
    ttft.sort_unstable();
    e2e.sort_unstable();
    GroupStats {
        key,
        requests: rs.len() as u64,
        ttft_p50_us: percentile_sorted(&ttft, 50.0).unwrap_or(0),
        ttft_p99_us: percentile_sorted(&ttft, 99.0).unwrap_or(0),
        e2e_p99_us: percentile_sorted(&e2e, 99.0).unwrap_or(0),
        mean_wrs: rs.iter().map(|r| r.wrs).sum::<f64>() / rs.len().max(1) as f64,
    }
}

/// Summarize a run. Records arriving in the warm-up share of the arrival
/// span are skipped.
pub fn summarize(records: &[MetricsRecord], counters: &RunCounters, opts: &SummaryOptions) -> RunSummary {
    let horizon = records.iter().map(|r| r.arrival.as_micros()).max().unwrap_or(0);
    let cutoff = libm::floor(horizon as f64 * opts.warmup_fraction.clamp(0.0, 1.0)) as u64;
    let measured: Vec<&MetricsRecord> = records.iter().filter(|r| r.arrival.as_micros() >= cutoff).collect();
    let n = measured.len();
    let nf = n.max(1) as f64;

    let mut ttft: Vec<u64> = measured.iter().map(|r| r.ttft.as_micros()).collect();
    let mut e2e: Vec<u64> = measured.iter().map(|r| r.e2e.as_micros()).collect();
    let mut gaps: Vec<u64> = measured.iter().flat_map(|r| r.tbt_samples.iter().copied()).collect();
    let mut max_gaps: Vec<u64> = measured.iter().filter_map(|r| r.tbt_samples.iter().copied().max()).collect();
    let mut slowdown: Vec<f64> = measured.iter().map(|r| r.slowdown).collect();
    ttft.sort_unstable();
    e2e.sort_unstable();
    gaps.sort_unstable();
    max_gaps.sort_unstable();
    slowdown.sort_by(f64::total_cmp);

    let p = |v: &[u64], q: f64| percentile_sorted(v, q).unwrap_or(0);
    let slowdown_cdf =
        if n == 0 { Vec::new() } else { CDF_POINTS.iter().map(|&q| (q, percentile_f64(&slowdown, q))).collect() };

    let slo_attainment = opts.ttft_slo.map(|ttft_slo| {
        let ok = measured
            .iter()
            .filter(|r| r.ttft <= ttft_slo && opts.tbt_slo.is_none_or(|t| r.mean_tbt_us() <= t.as_micros() as f64))
            .count();
        ok as f64 / nf
    });

    let mut by_queue: BTreeMap<usize, Vec<&MetricsRecord>> = BTreeMap::new();
    let mut by_rank: BTreeMap<u32, Vec<&MetricsRecord>> = BTreeMap::new();
    for r in &measured {
        by_queue.entry(r.queue).or_default().push(r);
        by_rank.entry(r.rank).or_default().push(r);
    }

    let first = measured.iter().map(|r| r.arrival.as_micros()).min().unwrap_or(0);
    let span_secs = (horizon.saturating_sub(first)) as f64 / 1e6;

    RunSummary {
        requests: records.len() as u64,
        measured: n as u64,
        warmup_cutoff_us: cutoff,
        ttft_mean_us: ttft.iter().sum::<u64>() as f64 / nf,
        ttft_p50_us: p(&ttft, 50.0),
        ttft_p99_us: p(&ttft, 99.0),
        tbt_mean_us: gaps.iter().sum::<u64>() as f64 / gaps.len().max(1) as f64,
        tbt_p99_us: p(&gaps, 99.0),
        tbt_max_p99_us: p(&max_gaps, 99.0),
        e2e_p50_us: p(&e2e, 50.0),
        e2e_p99_us: p(&e2e, 99.0),
        slowdown_cdf,
        adapter_hit_rate: measured.iter().filter(|r| r.adapter_hit).count() as f64 / nf,
        squash_rate: measured.iter().filter(|r| r.squashes > 0).count() as f64 / nf,
        bypass_rate: measured.iter().filter(|r| r.bypassed).count() as f64 / nf,
        slo_attainment,
        throughput_rps: if span_secs > 0.0 { n as f64 / span_secs } else { 0.0 },
        per_queue: by_queue.iter().map(|(q, rs)| group_stats(*q as u64, rs)).collect(),
        per_rank: by_rank.iter().map(|(k, rs)| group_stats(u64::from(*k), rs)).collect(),
        counters: counters.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slo {
    pub ttft: SimDuration,
    pub tbt: SimDuration,
}

/// Absolute SLOs: overrides win, otherwise the multiplier times the
/// calibration run's mean TTFT and mean token gap.
pub fn derive_slo(calibration: Option<&RunSummary>, cfg: &SloConfig) -> Result<Slo, MetricsError> {
    let scaled = |mean_us: f64| SimDuration(libm::round(mean_us * cfg.slo_multiplier) as u64);
    let ttft = match (cfg.ttft_slo, calibration) {
        (Some(t), _) => t,
        (None, Some(c)) => scaled(c.ttft_mean_us),
        (None, None) => return Err(MetricsError::MissingCalibration),
    };
    let tbt = match (cfg.tbt_slo, calibration) {
        (Some(t), _) => t,
        (None, Some(c)) => scaled(c.tbt_mean_us),
        (None, None) => return Err(MetricsError::MissingCalibration),
    };
    Ok(Slo { ttft, tbt })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputScan {
    /// Largest grid point before the first violation; `None` when even the
    /// first point violates.
    pub max_rps: Option<f64>,
    /// Every grid point met the SLO; the true limit lies above the grid.
    pub saturated: bool,
    /// Some point after the first violation met the SLO again.
    pub non_monotone: bool,
    pub table: Vec<(f64, bool)>,
}

/// Scan an ascending `(rps, met_slo)` grid.
pub fn throughput_scan(grid: &[(f64, bool)]) -> ThroughputScan {
    let first_fail = grid.iter().position(|g| !g.1);
    let max_rps = match first_fail {
        Some(0) => None,
        Some(i) => Some(grid[i - 1].0),
        None => grid.last().map(|g| g.0),
    };
    let non_monotone = first_fail.is_some_and(|i| grid[i..].iter().any(|g| g.1));
    ThroughputScan { max_rps, saturated: first_fail.is_none() && !grid.is_empty(), non_monotone, table: grid.to_vec() }
}

/// Whether a run meets both latency SLOs at P99.
pub fn meets_slo(summary: &RunSummary, slo: &Slo) -> bool {
    summary.ttft_p99_us <= slo.ttft.as_micros() && summary.tbt_p99_us <= slo.tbt.as_micros()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_fixtures() {
        let v: Vec<u64> = (1..=100).collect();
        assert_eq!(percentile(&v, 99.0), Ok(99));
        assert_eq!(percentile(&[7], 1.0), Ok(7));
        assert_eq!(percentile(&[7], 100.0), Ok(7));
        assert_eq!(percentile(&[5, 1, 3], 50.0), Ok(3));
        assert_eq!(percentile(&[], 50.0), Err(MetricsError::EmptySamples));
        assert_eq!(percentile(&[1], 0.0), Err(MetricsError::BadPercentile));
    }

    fn summary_with_means(ttft_mean_us: f64, tbt_mean_us: f64) -> RunSummary {
        let mut s = summarize(&[], &RunCounters::default(), &SummaryOptions::default());
        s.ttft_mean_us = ttft_mean_us;
        s.tbt_mean_us = tbt_mean_us;
        s
    }

    #[test]
    fn slo_derivation() {
        let cal = summary_with_means(100_000.0, 20_000.0);
        let cfg = SloConfig::default();
        assert_eq!(derive_slo(Some(&cal), &cfg).unwrap().ttft, SimDuration::from_millis(500));
        let cfg = SloConfig { tbt_slo: Some(SimDuration::from_millis(150)), ..Default::default() };
        assert_eq!(derive_slo(Some(&cal), &cfg).unwrap().tbt, SimDuration::from_millis(150));
        let cfg = SloConfig { slo_multiplier: 1.0, ..Default::default() };
        assert_eq!(derive_slo(Some(&cal), &cfg).unwrap().ttft, SimDuration::from_millis(100));
        assert_eq!(derive_slo(None, &SloConfig::default()), Err(MetricsError::MissingCalibration));
    }

    #[test]
    fn scan_semantics() {
        let s = throughput_scan(&[(5.0, true), (8.0, true), (11.0, false)]);
        assert_eq!(s.max_rps, Some(8.0));
        let s = throughput_scan(&[(5.0, true), (8.0, true)]);
        assert!(s.saturated);
        assert_eq!(s.max_rps, Some(8.0));
        let s = throughput_scan(&[(5.0, true), (8.0, false), (11.0, true)]);
        assert_eq!(s.max_rps, Some(5.0));
        assert!(s.non_monotone);
        assert_eq!(throughput_scan(&[(5.0, false)]).max_rps, None);
    }

    fn record(id: u64, arrival: u64, ttft: u64, gaps: &[u64]) -> MetricsRecord {
        MetricsRecord {
            request_id: RequestId(id),
            arrival: SimTime(arrival),
            queue: (id % 2) as usize,
            wrs: 0.1,
            adapter: AdapterId(0),
            rank: 8,
            ttft: SimDuration(ttft),
            e2e: SimDuration(ttft + gaps.iter().sum::<u64>()),
            tbt_samples: gaps.to_vec(),
            slowdown: 1.5,
            squashes: 0,
            bypassed: false,
            adapter_hit: id % 2 == 0,
        }
    }

    #[test]
    fn warmup_is_trimmed() {
        let recs: Vec<MetricsRecord> = (0..100).map(|i| record(i, i * 1_000, 10 + i, &[5, 6])).collect();
        let s = summarize(&recs, &RunCounters::default(), &SummaryOptions::default());
        // 5% of 99 ms is 4.95 ms: arrivals 0..=4 ms are dropped.
        assert_eq!(s.measured, 95);
        assert_eq!(s.ttft_p50_us, 10 + 5 + 47);
        assert_eq!(s.tbt_p99_us, 6);
        assert!(s.ttft_p50_us <= s.ttft_p99_us);
        assert_eq!(s.per_queue.len(), 2);
    }
}
