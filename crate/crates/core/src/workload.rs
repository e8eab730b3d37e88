//! Request stream generation: Poisson arrivals, power-law adapter popularity,
//! heavy-tailed lengths, trace replay, and the bucketed output-length
//! predictor.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AdapterCatalog, AdapterId, RequestId, RequestSpec};
use crate::time::{SimDuration, SimTime};

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy)]
pub enum Stream {
    Arrivals = 1,
    Adapters = 2,
    Lengths = 3,
    Predictor = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogNormalLengths {
    pub input_median: f64,
    pub input_sigma: f64,
    pub input_max: u32,
    pub output_median: f64,
    pub output_sigma: f64,
    pub output_max: u32,
}

impl Default for LogNormalLengths {
    fn default() -> Self {
        LogNormalLengths {
            input_median: 512.0,
            input_sigma: 1.0,
            input_max: 4096,
            output_median: 96.0,
            output_sigma: 1.2,
            output_max: 2048,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LengthSource {
    LogNormal(LogNormalLengths),
    /// Replay a trace file; `rescale` multiplies arrival density.
    Trace {
        path: String,
        rescale: f64,
    },
}

impl Default for LengthSource {
    fn default() -> Self {
        LengthSource::LogNormal(LogNormalLengths::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    /// Requests per second.
    pub arrival_rate: f64,
    pub num_adapters: u32,
    /// Signed so that a negative rank in a config file is reported, not a parse error.
    pub rank_set: Vec<i64>,
    pub rank_popularity_exponent: f64,
    pub lengths: LengthSource,
    pub duration: SimDuration,
    /// Optional cap on the number of generated requests.
    pub max_requests: Option<u64>,
    pub seed: u64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            arrival_rate: 5.0,
            num_adapters: 100,
            rank_set: alloc::vec![8, 16, 32, 64, 128],
            rank_popularity_exponent: 1.0,
            lengths: LengthSource::default(),
            duration: SimDuration::from_secs(600),
            max_requests: None,
            seed: 0,
        }
    }
}

impl WorkloadConfig {
    /// Ranks as unsigned values; only meaningful after validation.
    pub fn ranks(&self) -> Vec<u32> {
        self.rank_set.iter().map(|&r| r.max(0) as u32).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKernel {
    /// A miss lands in a neighbouring bucket.
    AdjacentBucket,
    /// A miss lands uniformly in any other bucket.
    UniformBucket,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    pub accuracy: f64,
    /// Bucket `i` covers `[edges[i], edges[i+1])`.
    pub bucket_edges: Vec<u32>,
    pub error_kernel: ErrorKernel,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            accuracy: 0.8,
            bucket_edges: alloc::vec![1, 16, 32, 64, 128, 256, 512, 1024, 2049],
            error_kernel: ErrorKernel::AdjacentBucket,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkloadError {
    #[error("line {line}: {field} must be at least 1")]
    ZeroTokens { line: usize, field: &'static str },
    #[error("line {line}: arrival {arrival_ms} ms precedes the previous row")]
    NonMonotone { line: usize, arrival_ms: u64 },
    #[error("line {line}: adapter {adapter} is not in the catalog")]
    UnknownAdapter { line: usize, adapter: u32 },
    #[error("rescale factor must be positive")]
    BadRescale,
}

/// Power-law over the rank's popularity index: the `i`-th smallest rank
/// (1-based) is drawn with probability proportional to `i^-s`.
#[derive(Debug, Clone)]
pub struct AdapterSampler {
    cumulative: Vec<f64>,
}

impl AdapterSampler {
    pub fn new(num_ranks: usize, exponent: f64) -> Self {
        let weights: Vec<f64> = (1..=num_ranks).map(|i| libm::pow(i as f64, -exponent)).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        AdapterSampler { cumulative }
    }

    /// Probability mass of each rank index.
    pub fn rank_probabilities(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.cumulative
            .iter()
            .map(|&c| {
                let p = c - prev;
                prev = c;
                p
            })
            .collect()
    }

    pub fn sample_rank_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cumulative.iter().position(|&c| u < c).unwrap_or(self.cumulative.len() - 1)
    }
}

/// Pick a rank by popularity, then an adapter uniformly within that rank.
/// Ranks are ordered by value so the smallest rank is the most popular.
pub fn assign_adapter<R: Rng + ?Sized>(rng: &mut R, sampler: &AdapterSampler, catalog: &AdapterCatalog) -> AdapterId {
    let popularity_rank = sampler.sample_rank_index(rng);
    let rank_value = sorted_ranks(catalog)[popularity_rank];
    let rank_index = catalog.ranks().iter().position(|&r| r == rank_value).unwrap_or(0);
    let pool = catalog.of_rank_index(rank_index);
    pool[rng.random_range(0..pool.len())].id
}

fn sorted_ranks(catalog: &AdapterCatalog) -> Vec<u32> {
    let mut r = catalog.ranks().to_vec();
    r.sort_unstable();
    r
}

fn sample_length<R: Rng + ?Sized>(rng: &mut R, dist: &LogNormal<f64>, max: u32) -> u32 {
    let v = libm::round(dist.sample(rng));
    (v.max(1.0) as u64).min(u64::from(max.max(1))) as u32
}

/// Poisson arrivals over `[0, duration)` with log-normal lengths.
///
/// Arrival times are strictly increasing; a gap that rounds to zero is
/// stretched to one microsecond.
pub fn generate_arrivals(cfg: &WorkloadConfig, catalog: &AdapterCatalog) -> Vec<RequestSpec> {
    let lengths = match &cfg.lengths {
        LengthSource::LogNormal(l) => l.clone(),
        LengthSource::Trace { .. } => LogNormalLengths::default(),
    };
    let mut out = Vec::new();
    if cfg.duration == SimDuration::ZERO || catalog.is_empty() || !(cfg.arrival_rate > 0.0) {
        return out;
    }
    let mut arrivals = stream_rng(cfg.seed, Stream::Arrivals);
    let mut adapters = stream_rng(cfg.seed, Stream::Adapters);
    let mut len_rng = stream_rng(cfg.seed, Stream::Lengths);
    let gap = Exp::new(cfg.arrival_rate).expect("positive rate");
    let input = LogNormal::new(libm::log(lengths.input_median), lengths.input_sigma).expect("valid sigma");
    let output = LogNormal::new(libm::log(lengths.output_median), lengths.output_sigma).expect("valid sigma");
    let sampler = AdapterSampler::new(catalog.ranks().len(), cfg.rank_popularity_exponent);

    let horizon = cfg.duration.as_micros();
    let mut clock: f64 = 0.0;
    let mut last: Option<u64> = None;
    loop {
        if let Some(max) = cfg.max_requests {
            if out.len() as u64 >= max {
                break;
            }
        }
        clock += gap.sample(&mut arrivals) * 1e6;
        let mut t = libm::round(clock) as u64;
        if let Some(prev) = last {
            t = t.max(prev + 1);
        }
        if t >= horizon {
            break;
        }
        last = Some(t);
        let spec = RequestSpec {
            id: RequestId(out.len() as u64),
            arrival: SimTime(t),
            input_tokens: sample_length(&mut len_rng, &input, lengths.input_max),
            output_tokens: sample_length(&mut len_rng, &output, lengths.output_max),
            adapter: assign_adapter(&mut adapters, &sampler, catalog),
        };
        out.push(spec);
    }
    out
}

/// One parsed row of a trace file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRow {
    pub arrival_ms: u64,
    pub input_tokens: u32,
    pub output_tokens: u32,
    pub adapter: Option<u32>,
}

/// Turn trace rows into requests. Rows without an adapter get one drawn from
/// the popularity model; `rescale` divides every timestamp, so 2.0 halves
/// every gap. Line numbers in errors count the header as line 1.
pub fn requests_from_trace(
    rows: &[TraceRow],
    rescale: f64,
    cfg: &WorkloadConfig,
    catalog: &AdapterCatalog,
) -> Result<Vec<RequestSpec>, WorkloadError> {
    if !(rescale > 0.0) {
        return Err(WorkloadError::BadRescale);
    }
    let sampler = AdapterSampler::new(catalog.ranks().len(), cfg.rank_popularity_exponent);
    let mut rng = stream_rng(cfg.seed, Stream::Adapters);
    let mut out = Vec::with_capacity(rows.len());
    let mut prev_ms: Option<u64> = None;
    let mut last_us: Option<u64> = None;
    for (i, row) in rows.iter().enumerate() {
        let line = i + 2;
        if row.input_tokens == 0 {
            return Err(WorkloadError::ZeroTokens { line, field: "input_tokens" });
        }
        if row.output_tokens == 0 {
            return Err(WorkloadError::ZeroTokens { line, field: "output_tokens" });
        }
        if prev_ms.is_some_and(|p| row.arrival_ms < p) {
            return Err(WorkloadError::NonMonotone { line, arrival_ms: row.arrival_ms });
        }
        prev_ms = Some(row.arrival_ms);
        let adapter = match row.adapter {
            Some(a) if (a as usize) < catalog.len() => AdapterId(a),
            Some(a) => return Err(WorkloadError::UnknownAdapter { line, adapter: a }),
            None => assign_adapter(&mut rng, &sampler, catalog),
        };
        let mut t = libm::round(row.arrival_ms as f64 * 1000.0 / rescale) as u64;
        if let Some(p) = last_us {
            t = t.max(p + 1);
        }
        last_us = Some(t);
        out.push(RequestSpec {
            id: RequestId(i as u64),
            arrival: SimTime(t),
            input_tokens: row.input_tokens,
            output_tokens: row.output_tokens,
            adapter,
        });
    }
    Ok(out)
}

/// Stand-in for a learned output-length model: right bucket with probability
/// `accuracy`, otherwise a wrong bucket chosen by the error kernel. The
/// prediction is the bucket midpoint.
#[derive(Debug, Clone)]
pub struct OutputPredictor {
    cfg: PredictorConfig,
    rng: ChaCha8Rng,
}

impl OutputPredictor {
    pub fn new(cfg: PredictorConfig, seed: u64) -> Self {
        OutputPredictor { cfg, rng: stream_rng(seed, Stream::Predictor) }
    }

    pub fn num_buckets(&self) -> usize {
        self.cfg.bucket_edges.len().saturating_sub(1)
    }

    /// Bucket holding `tokens`; values past the last edge land in the last bucket.
    pub fn bucket_of(&self, tokens: u32) -> usize {
        let edges = &self.cfg.bucket_edges;
        let n = self.num_buckets();
        (0..n).find(|&i| tokens < edges[i + 1]).unwrap_or(n.saturating_sub(1))
    }

    pub fn bucket_midpoint(&self, bucket: usize) -> u32 {
        let lo = self.cfg.bucket_edges[bucket];
        let hi = self.cfg.bucket_edges[bucket + 1];
        ((lo + hi.saturating_sub(1)) / 2).max(1)
    }

    pub fn predict(&mut self, spec: &RequestSpec) -> u32 {
        let n = self.num_buckets();
        if n == 0 {
            return spec.output_tokens.max(1);
        }
        let truth = self.bucket_of(spec.output_tokens);
        let correct = n == 1 || self.rng.random_bool(self.cfg.accuracy.clamp(0.0, 1.0));
        let bucket = if correct {
            truth
        } else {
            match self.cfg.error_kernel {
                ErrorKernel::AdjacentBucket => {
                    if truth == 0 {
                        1
                    } else if truth == n - 1 {
                        n - 2
                    } else if self.rng.random_bool(0.5) {
                        truth - 1
                    } else {
                        truth + 1
                    }
                }
                ErrorKernel::UniformBucket => {
                    let pick = self.rng.random_range(0..n - 1);
                    if pick >= truth {
                        pick + 1
                    } else {
                        pick
                    }
                }
            }
        };
        self.bucket_midpoint(bucket)
    }
}
