//! GPU-resident adapter cache with a dynamic capacity.
//!
//! The cache holds every adapter that has been loaded and not yet evicted.
//! Adapters referenced by running requests (reference count above zero) or
//! still in flight over the link are pinned; everything else is an eviction
//! candidate, ranked by the configured policy. Capacity is handed down by the
//! engine at every scheduling step and shrinks or grows with the memory the
//! running batch leaves idle.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AdapterCatalog, AdapterId, Tokens};
use crate::time::{SimDuration, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CachePolicy {
    /// Discard an adapter as soon as no running request uses it.
    NoCache,
    Lru,
    /// Compound score with equal weights.
    FairShare,
    /// Compound score with the configured weights.
    CostAware,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefetchMode {
    Off,
    QueueDriven,
    Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheConfig {
    pub policy: CachePolicy,
    pub weight_frequency: f64,
    pub weight_recency: f64,
    pub weight_size: f64,
    pub frequency_window: SimDuration,
    pub prefetch: PrefetchMode,
    /// Hard cap on adapter memory, on top of the dynamic capacity.
    pub max_capacity_tokens: Option<Tokens>,
    /// Bin width of the arrival histogram used by histogram prefetch.
    pub histogram_bin: SimDuration,
    pub histogram_bins: usize,
    pub histogram_top_k: usize,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            policy: CachePolicy::CostAware,
            weight_frequency: 0.45,
            weight_recency: 0.10,
            weight_size: 0.45,
            frequency_window: SimDuration::from_secs(60),
            prefetch: PrefetchMode::Off,
            max_capacity_tokens: None,
            histogram_bin: SimDuration::from_secs(10),
            histogram_bins: 6,
            histogram_top_k: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreWeights {
    pub frequency: f64,
    pub recency: f64,
    pub size: f64,
}

impl ScoreWeights {
    pub const FAIR_SHARE: ScoreWeights = ScoreWeights { frequency: 1.0 / 3.0, recency: 1.0 / 3.0, size: 1.0 / 3.0 };
}

/// Candidate features, each already normalized to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Features {
    pub frequency: f64,
    pub recency: f64,
    pub size: f64,
}

/// Weighted sum of normalized features; higher means more worth keeping.
pub fn score(weights: ScoreWeights, f: Features) -> f64 {
    weights.frequency * f.frequency + weights.recency * f.recency + weights.size * f.size
}

/// Min-max normalization; a feature that is equal across all candidates maps to 1.
pub fn min_max_normalize(raw: &[f64]) -> Vec<f64> {
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    raw.iter().map(|&v| if hi > lo { (v - lo) / (hi - lo) } else { 1.0 }).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdapterEntry {
    pub id: AdapterId,
    pub rank: u32,
    pub size_tokens: Tokens,
    pub size_bytes: u64,
    pub last_used: SimTime,
    pub ref_count: u32,
    pub resident: bool,
    /// Set while the weights are still in flight over the link.
    pub loading_until: Option<SimTime>,
    accesses: VecDeque<SimTime>,
}

impl AdapterEntry {
    pub fn is_evictable(&self) -> bool {
        self.resident && self.ref_count == 0 && self.loading_until.is_none()
    }

    pub fn is_ready(&self, now: SimTime) -> bool {
        self.resident && self.loading_until.is_none_or(|t| t <= now)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Acquire {
    Hit,
    MissLoadRequired { bytes: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CacheError {
    #[error("need {needed} free token slots but at most {freeable} can be freed")]
    InsufficientEvictableMemory { needed: Tokens, freeable: Tokens },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub loads: u64,
    pub prefetches: u64,
    pub evictions: u64,
}

/// Per-adapter arrival counts in fixed bins, used to predict next-bin demand.
#[derive(Debug, Clone)]
pub struct ArrivalHistogram {
    bin: SimDuration,
    keep: usize,
    current_bin: u64,
    /// Per adapter: counts of completed bins (oldest first) and the open bin.
    counts: Vec<(VecDeque<u32>, u32)>,
}

impl ArrivalHistogram {
    pub fn new(num_adapters: usize, bin: SimDuration, keep: usize) -> Self {
        ArrivalHistogram {
            bin: SimDuration(bin.as_micros().max(1)),
            keep: keep.max(1),
            current_bin: 0,
            counts: (0..num_adapters).map(|_| (VecDeque::new(), 0)).collect(),
        }
    }

    fn roll_to(&mut self, now: SimTime) {
        let bin = now.as_micros() / self.bin.as_micros();
        while self.current_bin < bin {
            for (past, open) in &mut self.counts {
                past.push_back(*open);
                *open = 0;
                while past.len() > self.keep {
                    past.pop_front();
                }
            }
            self.current_bin += 1;
        }
    }

    pub fn record(&mut self, adapter: AdapterId, now: SimTime) {
        self.roll_to(now);
        if let Some(slot) = self.counts.get_mut(adapter.0 as usize) {
            slot.1 += 1;
        }
    }

    /// Mean arrivals per completed bin.
    pub fn predicted(&self, adapter: AdapterId) -> f64 {
        match self.counts.get(adapter.0 as usize) {
            Some((past, _)) if !past.is_empty() => past.iter().map(|&c| f64::from(c)).sum::<f64>() / past.len() as f64,
            _ => 0.0,
        }
    }

    pub fn advance(&mut self, now: SimTime) {
        self.roll_to(now);
    }
}

#[derive(Debug, Clone)]
pub struct AdapterCache {
    cfg: CacheConfig,
    entries: Vec<AdapterEntry>,
    used_tokens: Tokens,
    capacity_tokens: Tokens,
    pub stats: CacheStats,
}

impl AdapterCache {
    pub fn new(cfg: CacheConfig, catalog: &AdapterCatalog) -> Self {
        let entries = catalog
            .iter()
            .map(|a| AdapterEntry {
                id: a.id,
                rank: a.rank,
                size_tokens: a.size_tokens,
                size_bytes: a.size_bytes,
                last_used: SimTime::ZERO,
                ref_count: 0,
                resident: false,
                loading_until: None,
                accesses: VecDeque::new(),
            })
            .collect();
        let capacity_tokens = cfg.max_capacity_tokens.unwrap_or(Tokens::MAX);
        AdapterCache { cfg, entries, used_tokens: 0, capacity_tokens, stats: CacheStats::default() }
    }

    pub fn config(&self) -> &CacheConfig {
        &self.cfg
    }

    pub fn entry(&self, id: AdapterId) -> &AdapterEntry {
        &self.entries[id.0 as usize]
    }

    pub fn entries(&self) -> impl Iterator<Item = &AdapterEntry> {
        self.entries.iter()
    }

    pub fn used_tokens(&self) -> Tokens {
        self.used_tokens
    }

    pub fn capacity_tokens(&self) -> Tokens {
        self.capacity_tokens
    }

    pub fn free_tokens(&self) -> Tokens {
        self.capacity_tokens.saturating_sub(self.used_tokens)
    }

    pub fn is_resident(&self, id: AdapterId) -> bool {
        self.entry(id).resident
    }

    /// Memory held by adapters that cannot be evicted right now.
    pub fn pinned_tokens(&self) -> Tokens {
        self.entries.iter().filter(|e| e.resident && !e.is_evictable()).map(|e| e.size_tokens).sum()
    }

    pub fn evictable_tokens(&self) -> Tokens {
        self.entries.iter().filter(|e| e.is_evictable()).map(|e| e.size_tokens).sum()
    }

    /// Set the dynamic capacity, clipped to the configured cap. Does not
    /// evict; call [`AdapterCache::evict_until`] with zero to shrink.
    pub fn set_capacity(&mut self, tokens: Tokens) {
        self.capacity_tokens = match self.cfg.max_capacity_tokens {
            Some(cap) => tokens.min(cap),
            None => tokens,
        };
    }

    fn record_access(&mut self, id: AdapterId, now: SimTime) {
        let window = self.cfg.frequency_window;
        let e = &mut self.entries[id.0 as usize];
        e.last_used = e.last_used.max(now);
        e.accesses.push_back(now);
        while e.accesses.front().is_some_and(|&t| now.since(t) >= window) {
            e.accesses.pop_front();
        }
    }

    /// Accesses inside the sliding window ending at `now`.
    pub fn frequency(&self, id: AdapterId, now: SimTime) -> usize {
        let window = self.cfg.frequency_window;
        self.entry(id).accesses.iter().filter(|&&t| now.since(t) < window).count()
    }

    pub fn acquire(&mut self, id: AdapterId, now: SimTime) -> Acquire {
        if self.entry(id).resident {
            self.entries[id.0 as usize].ref_count += 1;
            self.record_access(id, now);
            self.stats.hits += 1;
            Acquire::Hit
        } else {
            self.stats.misses += 1;
            Acquire::MissLoadRequired { bytes: self.entry(id).size_bytes }
        }
    }

    /// Place a missing adapter whose space has already been freed. The entry
    /// stays pinned until [`AdapterCache::complete_load`]. `take_ref` is false
    /// for prefetches.
    pub fn install(&mut self, id: AdapterId, now: SimTime, ready_at: SimTime, take_ref: bool) {
        let size = self.entry(id).size_tokens;
        assert!(!self.entry(id).resident, "adapter {id} installed twice");
        assert!(
            self.used_tokens + size <= self.capacity_tokens,
            "install of adapter {id} overflows cache: used {} + {size} > {}",
            self.used_tokens,
            self.capacity_tokens
        );
        self.used_tokens += size;
        self.stats.loads += 1;
        if !take_ref {
            self.stats.prefetches += 1;
        }
        let e = &mut self.entries[id.0 as usize];
        e.resident = true;
        e.loading_until = Some(ready_at);
        if take_ref {
            e.ref_count += 1;
            self.record_access(id, now);
        }
    }

    pub fn complete_load(&mut self, id: AdapterId) {
        self.entries[id.0 as usize].loading_until = None;
    }

    /// Drop one reference. The adapter stays resident unless the policy
    /// discards idle adapters.
    pub fn release(&mut self, id: AdapterId, now: SimTime) {
        let e = &mut self.entries[id.0 as usize];
        assert!(e.ref_count > 0, "release of adapter {id} with zero references");
        e.ref_count -= 1;
        e.last_used = e.last_used.max(now);
        if self.cfg.policy == CachePolicy::NoCache && e.is_evictable() {
            self.evict(id);
        }
    }

    fn evict(&mut self, id: AdapterId) {
        let e = &mut self.entries[id.0 as usize];
        assert!(e.is_evictable(), "evicting pinned adapter {id}");
        e.resident = false;
        self.used_tokens -= e.size_tokens;
        self.stats.evictions += 1;
    }

    /// Eviction order (first evicted first) among idle resident adapters.
    /// Adapters in `hints` form a second tier behind all others.
    pub fn eviction_order(&self, now: SimTime, hints: &BTreeSet<AdapterId>) -> Vec<AdapterId> {
        let candidates: Vec<&AdapterEntry> = self.entries.iter().filter(|e| e.is_evictable()).collect();
        let mut keyed: Vec<(bool, f64, &AdapterEntry)> = match self.cfg.policy {
            CachePolicy::Lru | CachePolicy::NoCache => {
                candidates.iter().map(|e| (hints.contains(&e.id), e.last_used.as_micros() as f64, *e)).collect()
            }
            CachePolicy::FairShare | CachePolicy::CostAware => {
                let weights = if self.cfg.policy == CachePolicy::FairShare {
                    ScoreWeights::FAIR_SHARE
                } else {
                    ScoreWeights {
                        frequency: self.cfg.weight_frequency,
                        recency: self.cfg.weight_recency,
                        size: self.cfg.weight_size,
                    }
                };
                let freq: Vec<f64> = candidates.iter().map(|e| self.frequency(e.id, now) as f64).collect();
                let rec: Vec<f64> = candidates.iter().map(|e| e.last_used.as_micros() as f64).collect();
                let size: Vec<f64> = candidates.iter().map(|e| e.size_tokens as f64).collect();
                let (freq, rec, size) = (min_max_normalize(&freq), min_max_normalize(&rec), min_max_normalize(&size));
                candidates
                    .iter()
                    .enumerate()
                    .map(|(i, e)| {
                        let f = Features { frequency: freq[i], recency: rec[i], size: size[i] };
                        (hints.contains(&e.id), score(weights, f), *e)
                    })
                    .collect()
            }
        };
        keyed.sort_by(|a, b| {
            a.0.cmp(&b.0)
                .then(a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal))
                .then(a.2.size_tokens.cmp(&b.2.size_tokens))
                .then(a.2.id.cmp(&b.2.id))
        });
        keyed.into_iter().map(|(_, _, e)| e.id).collect()
    }

    /// Evict idle adapters, lowest value first, until `needed` slots are free
    /// under the current capacity. Adapters of queued requests go last.
    /// Nothing is evicted when the target is unreachable.
    pub fn evict_until(
        &mut self,
        needed: Tokens,
        hints: &BTreeSet<AdapterId>,
        now: SimTime,
    ) -> Result<Vec<AdapterId>, CacheError> {
        if self.used_tokens + needed <= self.capacity_tokens {
            return Ok(Vec::new());
        }
        let freeable = self.free_tokens() + self.evictable_tokens();
        if needed > freeable || self.capacity_tokens < needed + self.pinned_tokens() {
            return Err(CacheError::InsufficientEvictableMemory { needed, freeable });
        }
        let mut evicted = Vec::new();
        for id in self.eviction_order(now, hints) {
            if self.used_tokens + needed <= self.capacity_tokens {
                break;
            }
            self.evict(id);
            evicted.push(id);
        }
        debug_assert!(self.used_tokens + needed <= self.capacity_tokens);
        Ok(evicted)
    }

    /// Like [`AdapterCache::evict_until`], but never evicts `keep`, the
    /// adapter the space is being made for.
    pub fn evict_until_keeping(
        &mut self,
        needed: Tokens,
        keep: AdapterId,
        hints: &BTreeSet<AdapterId>,
        now: SimTime,
    ) -> Result<Vec<AdapterId>, CacheError> {
        let i = keep.0 as usize;
        let shield = self.entries[i].resident;
        if shield {
            self.entries[i].ref_count += 1;
        }
        let out = self.evict_until(needed, hints, now);
        if shield {
            self.entries[i].ref_count -= 1;
        }
        out
    }

    /// Missing adapters worth loading ahead of admission, in priority order,
    /// limited to what fits in `free_tokens` without evicting anything.
    /// `queued` lists adapters of waiting requests in queue-priority order.
    pub fn prefetch_candidates(
        &self,
        queued: &[AdapterId],
        free_tokens: Tokens,
        mode: PrefetchMode,
        histogram: Option<&ArrivalHistogram>,
    ) -> Vec<AdapterId> {
        let mut out = Vec::new();
        if mode == PrefetchMode::Off {
            return out;
        }
        let mut budget = free_tokens;
        let mut seen = BTreeSet::new();
        let mut consider = |id: AdapterId, out: &mut Vec<AdapterId>, budget: &mut Tokens| {
            if !seen.insert(id) || self.entry(id).resident {
                return;
            }
            let size = self.entry(id).size_tokens;
            if size <= *budget {
                *budget -= size;
                out.push(id);
            }
        };
        for &id in queued {
            consider(id, &mut out, &mut budget);
        }
        if mode == PrefetchMode::Histogram {
            if let Some(h) = histogram {
                let queued_set: BTreeSet<AdapterId> = queued.iter().copied().collect();
                let mut ranked: Vec<(f64, AdapterId)> = self
                    .entries
                    .iter()
                    .filter(|e| !e.resident && !queued_set.contains(&e.id))
                    .map(|e| (h.predicted(e.id), e.id))
                    .filter(|(p, _)| *p > 0.0)
                    .collect();
                ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
                for (_, id) in ranked.into_iter().take(self.cfg.histogram_top_k) {
                    consider(id, &mut out, &mut budget);
                }
            }
        }
        out
    }

    /// Recompute the accounting from scratch and check reference counts.
    pub fn audit(&self) -> Result<(), &'static str> {
        let used: Tokens = self.entries.iter().filter(|e| e.resident).map(|e| e.size_tokens).sum();
        if used != self.used_tokens {
            return Err("incremental used_tokens disagrees with resident set");
        }
        if self.entries.iter().any(|e| !e.resident && (e.ref_count > 0 || e.loading_until.is_some())) {
            return Err("non-resident adapter holds references");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HardwareProfile;

    fn catalog() -> AdapterCatalog {
        AdapterCatalog::uniform(&[8, 16, 32, 64, 128], 2, &HardwareProfile::default())
    }

    fn cache(policy: CachePolicy) -> AdapterCache {
        AdapterCache::new(CacheConfig { policy, ..Default::default() }, &catalog())
    }

    fn load(c: &mut AdapterCache, id: u32, now: u64) {
        let id = AdapterId(id);
        assert!(matches!(c.acquire(id, SimTime(now)), Acquire::MissLoadRequired { .. }));
        c.evict_until(c.entry(id).size_tokens, &BTreeSet::new(), SimTime(now)).unwrap();
        c.install(id, SimTime(now), SimTime(now), true);
        c.complete_load(id);
    }

    #[test]
    fn score_fixtures() {
        let w = ScoreWeights { frequency: 0.45, recency: 0.10, size: 0.45 };
        assert!((score(w, Features { frequency: 1.0, recency: 1.0, size: 1.0 }) - 1.0).abs() < 1e-12);
        assert_eq!(score(w, Features { frequency: 0.0, recency: 0.0, size: 0.0 }), 0.0);
        let mid = score(w, Features { frequency: 0.5, recency: 1.0, size: 0.25 });
        assert!((mid - 0.4375).abs() < 1e-12);
    }

    #[test]
    fn equal_features_normalize_to_one() {
        assert_eq!(min_max_normalize(&[3.0, 3.0]), alloc::vec![1.0, 1.0]);
        assert_eq!(min_max_normalize(&[1.0, 3.0, 2.0]), alloc::vec![0.0, 1.0, 0.5]);
    }

    #[test]
    fn miss_reports_bytes_and_hit_counts_refs() {
        let mut c = cache(CachePolicy::CostAware);
        // Adapter 4 is the first rank-32 adapter.
        assert_eq!(c.acquire(AdapterId(4), SimTime(0)), Acquire::MissLoadRequired { bytes: 67_108_864 });
        load(&mut c, 0, 0);
        assert_eq!(c.entry(AdapterId(0)).ref_count, 1);
        assert_eq!(c.acquire(AdapterId(0), SimTime(5)), Acquire::Hit);
        assert_eq!(c.acquire(AdapterId(0), SimTime(6)), Acquire::Hit);
        assert_eq!(c.entry(AdapterId(0)).ref_count, 3);
        assert_eq!(c.frequency(AdapterId(0), SimTime(6)), 3);
    }

    #[test]
    fn release_keeps_adapter_resident() {
        let mut c = cache(CachePolicy::Lru);
        load(&mut c, 2, 0);
        c.acquire(AdapterId(2), SimTime(1));
        c.release(AdapterId(2), SimTime(2));
        assert_eq!(c.entry(AdapterId(2)).ref_count, 1);
        c.release(AdapterId(2), SimTime(3));
        assert!(c.is_resident(AdapterId(2)));
        assert!(c.entry(AdapterId(2)).is_evictable());
    }

    #[test]
    #[should_panic(expected = "zero references")]
    fn release_without_reference_panics() {
        let mut c = cache(CachePolicy::Lru);
        c.release(AdapterId(0), SimTime(0));
    }

    #[test]
    fn no_cache_discards_on_last_release() {
        let mut c = cache(CachePolicy::NoCache);
        load(&mut c, 1, 0);
        c.release(AdapterId(1), SimTime(1));
        assert!(!c.is_resident(AdapterId(1)));
        assert_eq!(c.used_tokens(), 0);
    }

    #[test]
    fn need_zero_evicts_nothing() {
        let mut c = cache(CachePolicy::CostAware);
        load(&mut c, 0, 0);
        c.release(AdapterId(0), SimTime(1));
        assert!(c.evict_until(0, &BTreeSet::new(), SimTime(2)).unwrap().is_empty());
    }

    #[test]
    fn evicts_lowest_score_first() {
        let mut c = cache(CachePolicy::CostAware);
        // Same rank; adapter 0 used three times recently, adapter 1 once long ago.
        load(&mut c, 1, 0);
        c.release(AdapterId(1), SimTime(0));
        load(&mut c, 0, 10);
        for t in [11, 12] {
            c.acquire(AdapterId(0), SimTime(t));
        }
        for t in [13, 14, 15] {
            c.release(AdapterId(0), SimTime(t));
        }
        c.set_capacity(c.used_tokens());
        let evicted = c.evict_until(32, &BTreeSet::new(), SimTime(20)).unwrap();
        assert_eq!(evicted, alloc::vec![AdapterId(1)]);
    }

    #[test]
    fn pinned_adapter_survives_insufficient_memory() {
        let mut c = cache(CachePolicy::CostAware);
        load(&mut c, 9, 0); // rank 128, held
        load(&mut c, 0, 1);
        c.release(AdapterId(0), SimTime(2));
        c.set_capacity(c.used_tokens());
        let err = c.evict_until(10_000, &BTreeSet::new(), SimTime(3)).unwrap_err();
        assert_eq!(err, CacheError::InsufficientEvictableMemory { needed: 10_000, freeable: 32 });
        assert!(c.is_resident(AdapterId(9)));
        assert!(c.is_resident(AdapterId(0)), "failed eviction must not partially evict");
    }

    #[test]
    fn hinted_adapters_are_evicted_last() {
        let mut c = cache(CachePolicy::Lru);
        load(&mut c, 0, 0);
        c.release(AdapterId(0), SimTime(0));
        load(&mut c, 1, 5);
        c.release(AdapterId(1), SimTime(5));
        c.set_capacity(c.used_tokens());
        let hints: BTreeSet<AdapterId> = [AdapterId(0)].into_iter().collect();
        assert_eq!(c.evict_until(32, &hints, SimTime(9)).unwrap(), alloc::vec![AdapterId(1)]);
        // Once only hinted adapters remain they may still go.
        assert_eq!(c.evict_until(64, &hints, SimTime(9)).unwrap(), alloc::vec![AdapterId(0)]);
    }

    #[test]
    fn shrinking_capacity_evicts_to_fit() {
        let mut c = cache(CachePolicy::Lru);
        for id in 0..4 {
            load(&mut c, id, u64::from(id));
            c.release(AdapterId(id), SimTime(u64::from(id)));
        }
        c.set_capacity(100);
        let ev = c.evict_until(0, &BTreeSet::new(), SimTime(10)).unwrap();
        assert!(c.used_tokens() <= 100);
        assert_eq!(ev[0], AdapterId(0));
        c.audit().unwrap();
    }

    #[test]
    fn prefetch_queue_driven() {
        let mut c = cache(CachePolicy::CostAware);
        load(&mut c, 0, 0);
        let none = c.prefetch_candidates(&[AdapterId(0)], 1_000, PrefetchMode::QueueDriven, None);
        assert!(none.is_empty());
        let one = c.prefetch_candidates(&[AdapterId(0), AdapterId(3)], 1_000, PrefetchMode::QueueDriven, None);
        assert_eq!(one, alloc::vec![AdapterId(3)]);
        let tight = c.prefetch_candidates(&[AdapterId(9), AdapterId(3)], 100, PrefetchMode::QueueDriven, None);
        assert_eq!(tight, alloc::vec![AdapterId(3)], "rank 128 does not fit, rank 16 does");
        assert!(c.prefetch_candidates(&[AdapterId(3)], 1_000, PrefetchMode::Off, None).is_empty());
    }

    #[test]
    fn prefetch_histogram_ranks_busiest_adapter_first() {
        let c = cache(CachePolicy::CostAware);
        let mut h = ArrivalHistogram::new(10, SimDuration::from_secs(1), 4);
        for bin in 0..4u64 {
            let base = bin * 1_000_000;
            for k in 0..5 {
                h.record(AdapterId(7), SimTime(base + k));
            }
            for k in 0..2 {
                h.record(AdapterId(2), SimTime(base + 10 + k));
            }
            h.record(AdapterId(5), SimTime(base + 20));
        }
        h.advance(SimTime(4_000_000));
        let picks = c.prefetch_candidates(&[AdapterId(1)], 10_000, PrefetchMode::Histogram, Some(&h));
        assert_eq!(picks[0], AdapterId(1));
        assert_eq!(&picks[1..], &[AdapterId(7), AdapterId(2), AdapterId(5)]);
    }
}
