//! Run directory layout:
//!
//! - `requests.csv`: one row per request
//! - `tbt_gaps.csv`: every token gap, `request_id,gap_index,gap_us`
//! - `summary.json`: summary, config echo and seed
//! - `snapshots.json`: queue layout and quotas at each refresh

use std::fs;
use std::io::Write;
use std::path::Path;

use lorasim_core::metrics::{MetricsRecord, RunSummary};
use lorasim_core::model::{AdapterId, RequestId};
use lorasim_core::{SimConfig, SimDuration, SimTime};
use serde::{Deserialize, Serialize};

use crate::scenario::Outcome;
use crate::CliError;

pub const REQUESTS_HEADER: &str =
    "request_id,arrival_us,queue,wrs,adapter_id,rank,ttft_us,e2e_us,mean_tbt_us,slowdown,squashes,adapter_hit";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryFile {
    pub seed: u64,
    pub summary: RunSummary,
    pub config: SimConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct RequestRow {
    request_id: u64,
    arrival_us: u64,
    queue: usize,
    wrs: f64,
    adapter_id: u32,
    rank: u32,
    ttft_us: u64,
    e2e_us: u64,
    mean_tbt_us: f64,
    slowdown: f64,
    squashes: u32,
    adapter_hit: u8,
}

#[derive(Debug, Serialize, Deserialize)]
struct GapRow {
    request_id: u64,
    gap_index: usize,
    gap_us: u64,
}

pub fn write_run(dir: &Path, outcome: &Outcome) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    write_records(dir, &outcome.output.records)?;
    let summary = SummaryFile {
        seed: outcome.config.workload.seed,
        summary: outcome.summary.clone(),
        config: outcome.config.clone(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    write_json(&dir.join("snapshots.json"), &outcome.output.snapshots)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(anyhow::Error::from)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Other(e.into())
}

pub fn write_records(dir: &Path, records: &[MetricsRecord]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(dir.join("requests.csv")).map_err(csv_err)?;
    let mut g = csv::WriterBuilder::new().has_headers(false).from_path(dir.join("tbt_gaps.csv")).map_err(csv_err)?;
    g.write_record(["request_id", "gap_index", "gap_us"]).map_err(csv_err)?;
    for r in records {
        w.serialize(RequestRow {
            request_id: r.request_id.0,
            arrival_us: r.arrival.as_micros(),
            queue: r.queue,
            wrs: r.wrs,
            adapter_id: r.adapter.0,
            rank: r.rank,
            ttft_us: r.ttft.as_micros(),
            e2e_us: r.e2e.as_micros(),
            mean_tbt_us: r.mean_tbt_us(),
            slowdown: r.slowdown,
            squashes: r.squashes,
            adapter_hit: u8::from(r.adapter_hit),
        })
        .map_err(csv_err)?;
        for (i, &gap) in r.tbt_samples.iter().enumerate() {
            g.serialize(GapRow { request_id: r.request_id.0, gap_index: i, gap_us: gap }).map_err(csv_err)?;
        }
    }
    if records.is_empty() {
        w.write_record(REQUESTS_HEADER.split(',')).map_err(csv_err)?;
    }
    w.flush()?;
    g.flush()?;
    Ok(())
}

/// Rebuild per-request records from `requests.csv` and `tbt_gaps.csv`.
/// Bypass flags are not part of the CSV and come back false.
pub fn read_records(dir: &Path) -> Result<Vec<MetricsRecord>, CliError> {
    let mut out = Vec::new();
    let mut rdr = csv::Reader::from_path(dir.join("requests.csv")).map_err(csv_err)?;
    for row in rdr.deserialize::<RequestRow>() {
        let r = row.map_err(csv_err)?;
        out.push(MetricsRecord {
            request_id: RequestId(r.request_id),
            arrival: SimTime(r.arrival_us),
            queue: r.queue,
            wrs: r.wrs,
            adapter: AdapterId(r.adapter_id),
            rank: r.rank,
            ttft: SimDuration(r.ttft_us),
            e2e: SimDuration(r.e2e_us),
            tbt_samples: Vec::new(),
            slowdown: r.slowdown,
            squashes: r.squashes,
            bypassed: false,
            adapter_hit: r.adapter_hit != 0,
        });
    }
    let mut rdr = csv::Reader::from_path(dir.join("tbt_gaps.csv")).map_err(csv_err)?;
    for row in rdr.deserialize::<GapRow>() {
        let g = row.map_err(csv_err)?;
        let rec = out
            .get_mut(g.request_id as usize)
            .filter(|r| r.request_id.0 == g.request_id)
            .ok_or_else(|| CliError::Config(format!("tbt_gaps.csv: unknown request {}", g.request_id)))?;
        rec.tbt_samples.push(g.gap_us);
    }
    Ok(out)
}

pub fn read_summary(dir: &Path) -> Result<SummaryFile, CliError> {
    let path = dir.join("summary.json");
    let text =
        fs::read_to_string(&path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Print the resolved config as JSON.
pub fn print_config(cfg: &SimConfig, out: &mut impl Write) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(cfg).map_err(anyhow::Error::from)?;
    writeln!(out, "{text}")?;
    Ok(())
}
