//! Shared domain types: adapters, requests, hardware and cost parameters.

use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::time::{SimDuration, SimTime};

/// Token-slot count. One slot holds the KV state of one token.
pub type Tokens = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AdapterId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RequestId(pub u64);

impl fmt::Display for AdapterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Physical description of the serving node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardwareProfile {
    /// GPU memory left after the base model, in KV token slots.
    pub total_token_slots: Tokens,
    pub link_bandwidth_bytes_per_sec: u64,
    pub link_fixed_latency: SimDuration,
    pub kv_bytes_per_token: u64,
    /// Adapter weight bytes per unit of rank.
    pub adapter_bytes_per_rank: u64,
}

impl Default for HardwareProfile {
    fn default() -> Self {
        // 7B-class base model on a 48 GB device; 2 low-rank matrices x 4
        // projections x 32 layers x 4096 hidden x 2 bytes per rank unit.
        HardwareProfile {
            total_token_slots: 60_000,
            link_bandwidth_bytes_per_sec: 16_000_000_000,
            link_fixed_latency: SimDuration::from_micros(500),
            kv_bytes_per_token: 524_288,
            adapter_bytes_per_rank: 2_097_152,
        }
    }
}

impl HardwareProfile {
    pub fn adapter_bytes(&self, rank: u32) -> u64 {
        self.adapter_bytes_per_rank * u64::from(rank)
    }

    /// Adapter footprint in token slots, never less than one.
    pub fn adapter_tokens(&self, rank: u32) -> Tokens {
        let bytes = self.adapter_bytes(rank);
        bytes.div_ceil(self.kv_bytes_per_token).max(1)
    }
}

/// Linear iteration-time model. All coefficients are in nanoseconds so that
/// sub-microsecond per-token costs stay exact in integer arithmetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModelParams {
    pub prefill_base_ns: u64,
    pub prefill_per_token_ns: u64,
    pub decode_base_ns: u64,
    /// Per token of context held by each decoding request.
    pub decode_per_token_ns: u64,
    /// Per (rank x token) processed under an adapter.
    pub adapter_per_rank_token_ns: u64,
}

impl Default for CostModelParams {
    fn default() -> Self {
        CostModelParams {
            prefill_base_ns: 5_000_000,
            prefill_per_token_ns: 40_000,
            decode_base_ns: 6_000_000,
            decode_per_token_ns: 750,
            adapter_per_rank_token_ns: 150,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SloConfig {
    pub slo_multiplier: f64,
    pub ttft_slo: Option<SimDuration>,
    pub tbt_slo: Option<SimDuration>,
}

impl Default for SloConfig {
    fn default() -> Self {
        SloConfig { slo_multiplier: 5.0, ttft_slo: None, tbt_slo: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterSpec {
    pub id: AdapterId,
    pub rank: u32,
    pub size_bytes: u64,
    pub size_tokens: Tokens,
}

impl AdapterSpec {
    pub fn new(id: AdapterId, rank: u32, hw: &HardwareProfile) -> Self {
        debug_assert!(rank > 0);
        AdapterSpec { id, rank, size_bytes: hw.adapter_bytes(rank), size_tokens: hw.adapter_tokens(rank) }
    }
}

/// Immutable set of adapters known to the node. Ids are dense indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterCatalog {
    adapters: Vec<AdapterSpec>,
    ranks: Vec<u32>,
    /// Start index of each rank's adapters, plus a final end marker.
    offsets: Vec<usize>,
}

impl AdapterCatalog {
    /// `per_rank` adapters for every rank in `ranks`, ids assigned rank-major
    /// in the order the ranks are given.
    pub fn uniform(ranks: &[u32], per_rank: usize, hw: &HardwareProfile) -> Self {
        Self::from_counts(ranks.iter().map(|&r| (r, per_rank)), hw)
    }

    /// `count` adapters spread over `ranks` as evenly as possible, earlier
    /// ranks taking the remainder. Ranks left without adapters are dropped.
    pub fn spread(ranks: &[u32], count: usize, hw: &HardwareProfile) -> Self {
        let n = ranks.len().max(1);
        Self::from_counts(ranks.iter().enumerate().map(|(i, &r)| (r, count / n + usize::from(i < count % n))), hw)
    }

    fn from_counts(groups: impl Iterator<Item = (u32, usize)>, hw: &HardwareProfile) -> Self {
        let mut adapters = Vec::new();
        let mut ranks = Vec::new();
        let mut offsets = alloc::vec![0];
        for (rank, count) in groups {
            if count == 0 {
                continue;
            }
            for _ in 0..count {
                let id = AdapterId(adapters.len() as u32);
                adapters.push(AdapterSpec::new(id, rank, hw));
            }
            ranks.push(rank);
            offsets.push(adapters.len());
        }
        AdapterCatalog { adapters, ranks, offsets }
    }

    pub fn get(&self, id: AdapterId) -> Option<&AdapterSpec> {
        self.adapters.get(id.0 as usize)
    }

    /// Panics on an id outside the catalog; the workload validates ids first.
    pub fn spec(&self, id: AdapterId) -> &AdapterSpec {
        &self.adapters[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.adapters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adapters.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &AdapterSpec> {
        self.adapters.iter()
    }

    pub fn ranks(&self) -> &[u32] {
        &self.ranks
    }

    /// Adapters of the rank at position `rank_index` of the rank list.
    pub fn of_rank_index(&self, rank_index: usize) -> &[AdapterSpec] {
        &self.adapters[self.offsets[rank_index]..self.offsets[rank_index + 1]]
    }

    pub fn max_rank(&self) -> u32 {
        self.ranks.iter().copied().max().unwrap_or(0)
    }

    pub fn total_tokens(&self) -> Tokens {
        self.adapters.iter().map(|a| a.size_tokens).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestSpec {
    pub id: RequestId,
    pub arrival: SimTime,
    pub input_tokens: u32,
    /// Ground truth; never consulted by scheduling decisions.
    pub output_tokens: u32,
    pub adapter: AdapterId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Queued,
    LoadingAdapter,
    Prefill,
    Decode,
    Finished,
    Squashed,
}

/// Mutable per-request lifecycle, owned by one simulation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestState {
    pub spec: RequestSpec,
    pub rank: u32,
    pub predicted_output: u32,
    pub wrs: f64,
    pub queue_index: usize,
    pub phase: Phase,
    pub tokens_generated: u32,
    /// Tokens already delivered to the client; survives squashes, so
    /// regenerated tokens are not delivered twice.
    pub streamed: u32,
    pub first_token_time: Option<SimTime>,
    pub last_token_time: Option<SimTime>,
    pub finish_time: Option<SimTime>,
    pub borrowed_quota: Tokens,
    pub squash_count: u32,
    pub bypass_flag: bool,
    /// Head request this one bypassed, while the bypass is live.
    pub displaced_head: Option<RequestId>,
    /// Whether the adapter was resident when the final execution was admitted.
    pub adapter_hit: bool,
    pub tbt_samples: Vec<u64>,
}

impl RequestState {
    pub fn new(spec: RequestSpec, rank: u32, predicted_output: u32, wrs: f64) -> Self {
        RequestState {
            spec,
            rank,
            predicted_output,
            wrs,
            queue_index: 0,
            phase: Phase::Queued,
            tokens_generated: 0,
            streamed: 0,
            first_token_time: None,
            last_token_time: None,
            finish_time: None,
            borrowed_quota: 0,
            squash_count: 0,
            bypass_flag: false,
            displaced_head: None,
            adapter_hit: false,
            tbt_samples: Vec::new(),
        }
    }

    pub fn is_running(&self) -> bool {
        matches!(self.phase, Phase::Prefill | Phase::Decode)
    }

    /// KV slots currently held: prompt plus generated tokens.
    pub fn kv_tokens(&self) -> Tokens {
        u64::from(self.spec.input_tokens) + u64::from(self.tokens_generated)
    }

    /// KV slots reserved for the remainder of the request, assuming the
    /// predicted length, extended one token at a time once it is exceeded.
    pub fn kv_reservation(&self) -> Tokens {
        let out = self.predicted_output.max(self.tokens_generated + 1);
        u64::from(self.spec.input_tokens) + u64::from(out)
    }

    /// Iterations left under the prediction (at least one).
    pub fn predicted_remaining(&self) -> u32 {
        self.predicted_output.saturating_sub(self.tokens_generated).max(1)
    }

    /// Reset execution progress after a squash. What the client already
    /// received (first token, gaps so far) is kept.
    pub fn restart(&mut self) {
        self.tokens_generated = 0;
        self.borrowed_quota = 0;
        self.bypass_flag = false;
        self.displaced_head = None;
        self.adapter_hit = false;
        self.squash_count += 1;
        self.phase = Phase::Squashed;
    }
}
