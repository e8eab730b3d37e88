//! Discrete-event core: arrivals, iteration-level batching, adapter
//! transfers and token-slot memory accounting.
//!
//! Device memory is a pool of token slots shared by KV state and adapters.
//! Every admitted request reserves `input + predicted_output` slots (growing
//! by one per token once it outlives the prediction); the cache may use
//! whatever the reservations leave. Before every iteration the cache capacity
//! is reset to that remainder, the scheduler picks new requests, and each
//! admission evicts idle adapters as needed and starts any transfer.

pub mod link;

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{Acquire, AdapterCache, ArrivalHistogram, PrefetchMode};
use crate::config::SimConfig;
use crate::cost::{isolated_duration, step_duration, transfer_time, BatchEntry};
use crate::metrics::{MetricsRecord, RunCounters};
use crate::model::{AdapterCatalog, AdapterId, Phase, RequestId, RequestSpec, RequestState, Tokens};
use crate::scheduler::{AdmissionOracle, Blocked, LayoutSnapshot, Pending, RefreshContext, Scheduler};
use crate::time::{SimDuration, SimTime};
use crate::workload::OutputPredictor;

pub use link::LinkState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Check every module invariant after each iteration.
    pub check_invariants: bool,
    /// Squash rate above which a run is flagged.
    pub squash_alert_rate: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { check_invariants: true, squash_alert_rate: 0.10 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invariant violated at {time}: {what}")]
    Invariant { time: SimTime, what: String },
    #[error("request {id} needs {need} token slots but the device has {total}")]
    RequestTooLarge { id: RequestId, need: Tokens, total: Tokens },
    #[error("no progress possible at {time} with {pending} requests waiting")]
    Stalled { time: SimTime, pending: usize },
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    /// One record per request, ordered by request id.
    pub records: Vec<MetricsRecord>,
    pub counters: RunCounters,
    pub snapshots: Vec<LayoutSnapshot>,
    /// Every admission in order, re-admissions after a squash included.
    pub admissions: Vec<RequestId>,
    pub end_time: SimTime,
}

/// End-to-end time of `spec` running alone with a cold adapter.
pub fn isolated_time(spec: &RequestSpec, catalog: &AdapterCatalog, cfg: &SimConfig) -> SimDuration {
    let rank = catalog.spec(spec.adapter).rank;
    isolated_duration(spec.input_tokens, spec.output_tokens, rank, &cfg.cost, &cfg.hardware)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EventKind {
    Arrival(RequestId),
    StepComplete,
    TransferComplete(AdapterId),
    Refresh,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: SimTime,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

/// Run one simulation over materialized arrivals. Request ids must be the
/// dense indices `0..requests.len()`.
pub fn run(cfg: &SimConfig, catalog: &AdapterCatalog, requests: &[RequestSpec]) -> Result<SimOutput, SimError> {
    let mut engine = Engine::new(cfg, catalog, requests)?;
    engine.run()?;
    Ok(engine.finish())
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    catalog: &'a AdapterCatalog,
    total: Tokens,
    events: BinaryHeap<Reverse<Event>>,
    seq: u64,
    requests: Vec<RequestState>,
    scheduler: Scheduler,
    cache: AdapterCache,
    link: LinkState,
    histogram: Option<ArrivalHistogram>,
    /// Requests holding memory and quota (loading or running), in admission order.
    admitted: Vec<RequestId>,
    waiting_on: BTreeMap<AdapterId, Vec<RequestId>>,
    queued_per_adapter: BTreeMap<AdapterId, u32>,
    in_step: Option<Vec<RequestId>>,
    kv_reserved: Tokens,
    arrived: usize,
    finished: usize,
    records: Vec<Option<MetricsRecord>>,
    counters: RunCounters,
    admissions: Vec<RequestId>,
    now: SimTime,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a SimConfig, catalog: &'a AdapterCatalog, specs: &[RequestSpec]) -> Result<Self, SimError> {
        let total = cfg.hardware.total_token_slots;
        let scheduler = Scheduler::new(cfg.scheduler.clone(), total);
        let mut predictor = OutputPredictor::new(cfg.predictor.clone(), cfg.workload.seed);
        let mut requests = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            assert_eq!(spec.id.0 as usize, i, "request ids must be dense");
            let rank = catalog.spec(spec.adapter).rank;
            let predicted = predictor.predict(spec);
            let state = RequestState::new(*spec, rank, predicted, 0.0);
            let need = state.kv_reservation() + catalog.spec(spec.adapter).size_tokens;
            if need > total {
                return Err(SimError::RequestTooLarge { id: spec.id, need, total });
            }
            requests.push(state);
        }
        let histogram = (cfg.cache.prefetch == PrefetchMode::Histogram)
            .then(|| ArrivalHistogram::new(catalog.len(), cfg.cache.histogram_bin, cfg.cache.histogram_bins));
        let mut engine = Engine {
            cfg,
            catalog,
            total,
            events: BinaryHeap::new(),
            seq: 0,
            records: alloc::vec![None; requests.len()],
            requests,
            scheduler,
            cache: AdapterCache::new(cfg.cache.clone(), catalog),
            link: LinkState::default(),
            histogram,
            admitted: Vec::new(),
            waiting_on: BTreeMap::new(),
            queued_per_adapter: BTreeMap::new(),
            in_step: None,
            kv_reserved: 0,
            arrived: 0,
            finished: 0,
            counters: RunCounters::default(),
            admissions: Vec::new(),
            now: SimTime::ZERO,
        };
        for spec in specs {
            engine.push(spec.arrival, EventKind::Arrival(spec.id));
        }
        if !specs.is_empty() {
            let first = engine.scheduler.next_refresh();
            engine.push(first, EventKind::Refresh);
        }
        Ok(engine)
    }

    fn push(&mut self, time: SimTime, kind: EventKind) {
        self.events.push(Reverse(Event { time, seq: self.seq, kind }));
        self.seq += 1;
    }

    fn run(&mut self) -> Result<(), SimError> {
        while let Some(Reverse(ev)) = self.events.pop() {
            debug_assert!(ev.time >= self.now);
            self.now = ev.time;
            self.handle(ev.kind)?;
            while self.events.peek().is_some_and(|Reverse(e)| e.time == self.now) {
                let Reverse(e) = self.events.pop().expect("peeked");
                self.handle(e.kind)?;
            }
            if self.in_step.is_none() {
                self.start_step()?;
            }
        }
        if self.finished != self.requests.len() {
            return Err(SimError::Stalled { time: self.now, pending: self.scheduler.pending_len() });
        }
        Ok(())
    }

    fn handle(&mut self, kind: EventKind) -> Result<(), SimError> {
        match kind {
            EventKind::Arrival(id) => self.on_arrival(id),
            EventKind::StepComplete => return self.on_step_complete(),
            EventKind::TransferComplete(a) => self.on_transfer(a),
            EventKind::Refresh => self.on_refresh(),
        }
        Ok(())
    }

    fn pending_of(&self, id: RequestId) -> Pending {
        let r = &self.requests[id.0 as usize];
        Pending {
            id,
            arrival: r.spec.arrival,
            input_tokens: r.spec.input_tokens,
            predicted_output: r.predicted_output,
            rank: r.rank,
            wrs: r.wrs,
        }
    }

    fn on_arrival(&mut self, id: RequestId) {
        self.arrived += 1;
        let r = &self.requests[id.0 as usize];
        let wrs = self.scheduler.wrs(r.spec.input_tokens, r.predicted_output, r.rank);
        let adapter = r.spec.adapter;
        self.requests[id.0 as usize].wrs = wrs;
        let q = self.scheduler.enqueue(self.pending_of(id));
        self.requests[id.0 as usize].queue_index = q;
        *self.queued_per_adapter.entry(adapter).or_default() += 1;
        if let Some(h) = &mut self.histogram {
            h.record(adapter, self.now);
        }
        if self.scheduler.wants_bootstrap() {
            self.refresh_now();
        }
    }

    fn refresh_now(&mut self) {
        let ctx = RefreshContext {
            cost: &self.cfg.cost,
            hardware: &self.cfg.hardware,
            slo_multiplier: self.cfg.slo.slo_multiplier,
        };
        if let Some(snap) = self.scheduler.refresh(self.now, &ctx) {
            self.counters.refreshes += 1;
            if snap.infeasible.is_some() {
                self.counters.quota_infeasible_refreshes += 1;
            }
        }
    }

    fn on_refresh(&mut self) {
        if self.scheduler.refresh_due(self.now) {
            self.refresh_now();
        }
        let busy = self.arrived < self.requests.len() || self.finished < self.arrived;
        if busy {
            let next = self.scheduler.next_refresh().max(self.now + SimDuration(1));
            self.push(next, EventKind::Refresh);
        }
    }

    fn on_transfer(&mut self, adapter: AdapterId) {
        self.cache.complete_load(adapter);
        for id in self.waiting_on.remove(&adapter).unwrap_or_default() {
            let r = &mut self.requests[id.0 as usize];
            if r.phase == Phase::LoadingAdapter {
                r.phase = Phase::Prefill;
            }
        }
    }

    fn hints(&self) -> BTreeSet<AdapterId> {
        self.queued_per_adapter.iter().filter(|(_, &n)| n > 0).map(|(&a, _)| a).collect()
    }

    fn recompute_reservations(&mut self) {
        self.kv_reserved = self.admitted.iter().map(|id| self.requests[id.0 as usize].kv_reservation()).sum();
    }

    /// Grow reservations of requests past their prediction; evict idle
    /// adapters, and as a last resort squash the youngest admission, until
    /// everything fits.
    fn make_room(&mut self) {
        self.recompute_reservations();
        loop {
            let room = self.total.saturating_sub(self.kv_reserved);
            self.cache.set_capacity(room);
            if self.cache.used_tokens() <= room {
                return;
            }
            let hints = self.hints();
            if self.cache.evict_until(0, &hints, self.now).is_ok() {
                return;
            }
            let Some(&victim) = self.admitted.last() else { return };
            self.counters.memory_squashes += 1;
            self.squash(victim);
            self.recompute_reservations();
        }
    }

    fn start_step(&mut self) -> Result<(), SimError> {
        self.make_room();

        let est_step = self.estimate_step();
        let hints = self.hints();
        let mut gate = Gate {
            now: self.now,
            total: self.total,
            requests: &mut self.requests,
            cache: &mut self.cache,
            link: &mut self.link,
            catalog: self.catalog,
            cfg: self.cfg,
            kv_reserved: &mut self.kv_reserved,
            hints: &hints,
            issued: Vec::new(),
            admitted: &self.admitted,
            est_step,
            eta_memo: BTreeMap::new(),
        };
        let outcome = self.scheduler.next_batch(&mut gate, self.now);
        let mut forced = None;
        if outcome.admitted.is_empty() && self.admitted.is_empty() && self.scheduler.pending_len() > 0 {
            forced = self.scheduler.force_head(&mut gate);
            if forced.is_none() {
                return Err(SimError::Stalled { time: self.now, pending: self.scheduler.pending_len() });
            }
        }
        let issued = core::mem::take(&mut gate.issued);
        drop(gate);

        if self.cfg.engine.check_invariants && !outcome.conserves_quota() {
            return Err(self.violation("quota conservation identity broken"));
        }
        for a in outcome.admitted.iter().chain(forced.iter()) {
            let r = &mut self.requests[a.id.0 as usize];
            r.queue_index = a.queue;
            r.borrowed_quota = a.need;
            r.bypass_flag = a.bypassed.is_some();
            r.displaced_head = a.bypassed;
            let adapter = r.spec.adapter;
            if r.phase == Phase::LoadingAdapter {
                self.waiting_on.entry(adapter).or_default().push(a.id);
            }
            if let Some(n) = self.queued_per_adapter.get_mut(&adapter) {
                *n -= 1;
            }
            self.admitted.push(a.id);
            self.admissions.push(a.id);
        }
        for (adapter, ready_at) in issued {
            self.push(ready_at, EventKind::TransferComplete(adapter));
        }
        self.prefetch();

        let batch: Vec<RequestId> =
            self.admitted.iter().copied().filter(|id| self.requests[id.0 as usize].is_running()).collect();
        if self.cfg.engine.check_invariants {
            self.check_invariants()?;
        }
        if batch.is_empty() {
            return Ok(());
        }
        let entries: Vec<BatchEntry> = batch.iter().map(|id| self.entry_for(*id)).collect();
        let dur = step_duration(&entries, &self.cfg.cost).max(SimDuration(1));
        self.counters.steps += 1;
        self.in_step = Some(batch);
        self.push(self.now + dur, EventKind::StepComplete);
        Ok(())
    }

    fn entry_for(&self, id: RequestId) -> BatchEntry {
        let r = &self.requests[id.0 as usize];
        BatchEntry {
            context_tokens: r.kv_tokens(),
            prefill_tokens: if r.tokens_generated == 0 { u64::from(r.spec.input_tokens) } else { 0 },
            rank: r.rank,
        }
    }

    /// Decode-iteration time for the current admitted set.
    fn estimate_step(&self) -> SimDuration {
        let entries: Vec<BatchEntry> =
            self.admitted.iter().map(|id| BatchEntry { prefill_tokens: 0, ..self.entry_for(*id) }).collect();
        if entries.is_empty() {
            step_duration(&[BatchEntry { context_tokens: 0, prefill_tokens: 0, rank: 0 }], &self.cfg.cost)
        } else {
            step_duration(&entries, &self.cfg.cost)
        }
    }

    fn prefetch(&mut self) {
        let mode = self.cfg.cache.prefetch;
        if mode == PrefetchMode::Off {
            return;
        }
        if let Some(h) = &mut self.histogram {
            h.advance(self.now);
        }
        let mut queued = Vec::new();
        let mut seen = BTreeSet::new();
        for id in self.scheduler.pending_in_order() {
            let a = self.requests[id.0 as usize].spec.adapter;
            if seen.insert(a) {
                queued.push(a);
            }
        }
        let free = self.cache.free_tokens();
        let picks = self.cache.prefetch_candidates(&queued, free, mode, self.histogram.as_ref());
        for a in picks {
            let bytes = self.cache.entry(a).size_bytes;
            let ready_at = self.link.enqueue(bytes, self.now, &self.cfg.hardware);
            self.cache.install(a, self.now, ready_at, false);
            self.push(ready_at, EventKind::TransferComplete(a));
        }
    }

    fn on_step_complete(&mut self) -> Result<(), SimError> {
        let batch = self.in_step.take().unwrap_or_default();
        let now = self.now;
        for id in batch {
            let r = &mut self.requests[id.0 as usize];
            r.tokens_generated += 1;
            r.phase = Phase::Decode;
            if r.tokens_generated > r.streamed {
                r.streamed = r.tokens_generated;
                match r.last_token_time {
                    None => r.first_token_time = Some(now),
                    Some(prev) => r.tbt_samples.push((now - prev).as_micros()),
                }
                r.last_token_time = Some(now);
            }
            if r.tokens_generated >= r.spec.output_tokens {
                self.complete(id);
                continue;
            }
            if let Some(head) = r.displaced_head {
                if r.tokens_generated > r.predicted_output {
                    if self.scheduler.is_pending(head) {
                        self.squash(id);
                    } else {
                        self.requests[id.0 as usize].displaced_head = None;
                    }
                }
            }
        }
        Ok(())
    }

    fn leave(&mut self, id: RequestId) -> Result<(), SimError> {
        let adapter = self.requests[id.0 as usize].spec.adapter;
        self.admitted.retain(|&x| x != id);
        if let Some(w) = self.waiting_on.get_mut(&adapter) {
            w.retain(|&x| x != id);
        }
        self.cache.release(adapter, self.now);
        self.scheduler.release(id).map_err(|e| self.violation(&alloc::format!("{e}")))?;
        Ok(())
    }

    fn complete(&mut self, id: RequestId) {
        if let Err(e) = self.leave(id) {
            panic!("{e}");
        }
        let now = self.now;
        let r = &mut self.requests[id.0 as usize];
        r.phase = Phase::Finished;
        r.finish_time = Some(now);
        let spec = r.spec;
        let e2e = now - spec.arrival;
        let ttft = r.first_token_time.expect("finished request produced a token") - spec.arrival;
        let isolated = isolated_time(&spec, self.catalog, self.cfg);
        let record = MetricsRecord {
            request_id: id,
            arrival: spec.arrival,
            queue: r.queue_index,
            wrs: r.wrs,
            adapter: spec.adapter,
            rank: r.rank,
            ttft,
            e2e,
            tbt_samples: core::mem::take(&mut r.tbt_samples),
            slowdown: e2e.as_micros() as f64 / isolated.as_micros().max(1) as f64,
            squashes: r.squash_count,
            bypassed: r.bypass_flag,
            adapter_hit: r.adapter_hit,
        };
        self.records[id.0 as usize] = Some(record);
        self.finished += 1;
    }

    fn squash(&mut self, id: RequestId) {
        if let Err(e) = self.leave(id) {
            panic!("{e}");
        }
        if let Some(batch) = &mut self.in_step {
            batch.retain(|&x| x != id);
        }
        self.counters.squash_events += 1;
        let r = &mut self.requests[id.0 as usize];
        r.restart();
        let adapter = r.spec.adapter;
        let q = self.scheduler.requeue(self.pending_of(id));
        let r = &mut self.requests[id.0 as usize];
        r.queue_index = q;
        r.phase = Phase::Queued;
        *self.queued_per_adapter.entry(adapter).or_default() += 1;
    }

    fn violation(&self, what: &str) -> SimError {
        SimError::Invariant { time: self.now, what: what.into() }
    }

    fn check_invariants(&self) -> Result<(), SimError> {
        let kv_used: Tokens = self.admitted.iter().map(|id| self.requests[id.0 as usize].kv_tokens()).sum();
        if kv_used > self.kv_reserved {
            return Err(self.violation("KV slots in use exceed reservations"));
        }
        if self.kv_reserved + self.cache.used_tokens() > self.total {
            return Err(self.violation("KV reservations plus adapters exceed device memory"));
        }
        self.cache.audit().map_err(|e| self.violation(e))?;
        self.scheduler.check_ledger().map_err(|e| self.violation(&alloc::format!("{e}")))?;
        if self.finished + self.admitted.len() + self.scheduler.pending_len() != self.arrived {
            return Err(self.violation("request conservation broken"));
        }
        for id in &self.admitted {
            let r = &self.requests[id.0 as usize];
            if self.cache.entry(r.spec.adapter).ref_count == 0 || !self.cache.is_resident(r.spec.adapter) {
                return Err(self.violation("admitted request's adapter is not pinned"));
            }
        }
        Ok(())
    }

    fn finish(self) -> SimOutput {
        let mut counters = self.counters;
        counters.bytes_transferred = self.link.cumulative_bytes;
        counters.transfers = self.link.transfers;
        counters.cache = self.cache.stats;
        SimOutput {
            records: self.records.into_iter().flatten().collect(),
            counters,
            snapshots: self.scheduler.snapshots,
            admissions: self.admissions,
            end_time: self.now,
        }
    }
}

/// Memory checks handed to the scheduler for one batch.
struct Gate<'e> {
    now: SimTime,
    total: Tokens,
    requests: &'e mut [RequestState],
    cache: &'e mut AdapterCache,
    link: &'e mut LinkState,
    catalog: &'e AdapterCatalog,
    cfg: &'e SimConfig,
    kv_reserved: &'e mut Tokens,
    hints: &'e BTreeSet<AdapterId>,
    issued: Vec<(AdapterId, SimTime)>,
    admitted: &'e [RequestId],
    est_step: SimDuration,
    eta_memo: BTreeMap<RequestId, SimTime>,
}

impl Gate<'_> {
    fn adapter_need(&self, id: RequestId) -> Tokens {
        let a = self.requests[id.0 as usize].spec.adapter;
        if self.cache.is_resident(a) {
            0
        } else {
            self.catalog.spec(a).size_tokens
        }
    }

    /// When enough memory should free up for `head` to be admitted, assuming
    /// running requests finish at their predicted lengths.
    fn head_eta(&self, head: RequestId) -> SimTime {
        let step = self.est_step.as_micros();
        let need_kv = self.requests[head.0 as usize].kv_reservation();
        let need_adapter = self.adapter_need(head);
        let cap = self.cfg.cache.max_capacity_tokens.unwrap_or(Tokens::MAX);

        let mut users: BTreeMap<AdapterId, u32> = BTreeMap::new();
        let mut finishes: Vec<(SimTime, Tokens, AdapterId)> = Vec::new();
        for id in self.admitted {
            let r = &self.requests[id.0 as usize];
            *users.entry(r.spec.adapter).or_default() += 1;
            let start = self.cache.entry(r.spec.adapter).loading_until.unwrap_or(self.now).max(self.now);
            let t = start + SimDuration(step * u64::from(r.predicted_remaining()));
            finishes.push((t, r.kv_reservation(), r.spec.adapter));
        }
        finishes.sort_by_key(|f| (f.0, f.2));

        let mut kv = *self.kv_reserved;
        let mut pinned = self.cache.pinned_tokens();
        let fits = |kv: Tokens, pinned: Tokens| {
            need_kv + need_adapter + kv + pinned <= self.total && need_adapter + pinned <= cap
        };
        for (t, tokens, adapter) in finishes {
            kv -= tokens;
            let n = users.get_mut(&adapter).expect("counted above");
            *n -= 1;
            if *n == 0 && self.cache.entry(adapter).loading_until.is_none() {
                pinned -= self.catalog.spec(adapter).size_tokens;
            }
            if fits(kv, pinned) {
                return t;
            }
        }
        SimTime(u64::MAX)
    }
}

impl AdmissionOracle for Gate<'_> {
    fn need(&self, id: RequestId) -> Tokens {
        self.requests[id.0 as usize].kv_reservation() + self.adapter_need(id)
    }

    fn reserve(&mut self, id: RequestId) -> Result<(), Blocked> {
        let kv = self.requests[id.0 as usize].kv_reservation();
        let adapter = self.requests[id.0 as usize].spec.adapter;
        let room = self.total.saturating_sub(*self.kv_reserved);
        if kv > room {
            return Err(Blocked::KvMemory);
        }
        let resident = self.cache.is_resident(adapter);
        let adapter_need = if resident { 0 } else { self.catalog.spec(adapter).size_tokens };
        self.cache.set_capacity(room - kv);
        if self.cache.evict_until_keeping(adapter_need, adapter, self.hints, self.now).is_err() {
            self.cache.set_capacity(room);
            let pinned = self.cache.pinned_tokens();
            return Err(if !resident && kv + pinned <= room { Blocked::AdapterMemory } else { Blocked::KvMemory });
        }
        let ready = match self.cache.acquire(adapter, self.now) {
            Acquire::Hit => self.cache.entry(adapter).loading_until.is_none(),
            Acquire::MissLoadRequired { bytes } => {
                let ready_at = self.link.enqueue(bytes, self.now, &self.cfg.hardware);
                self.cache.install(adapter, self.now, ready_at, true);
                self.issued.push((adapter, ready_at));
                false
            }
        };
        *self.kv_reserved += kv;
        self.cache.set_capacity(self.total - *self.kv_reserved);
        let r = &mut self.requests[id.0 as usize];
        r.adapter_hit = ready;
        r.phase = if ready { Phase::Prefill } else { Phase::LoadingAdapter };
        Ok(())
    }

    fn bypass_allowed(&mut self, head: RequestId, candidate: RequestId) -> bool {
        let eta = match self.eta_memo.get(&head) {
            Some(&t) => t,
            None => {
                let t = self.head_eta(head);
                self.eta_memo.insert(head, t);
                t
            }
        };
        let r = &self.requests[candidate.0 as usize];
        let mut done = self.now + SimDuration(self.est_step.as_micros() * u64::from(r.predicted_output.max(1)));
        if !self.cache.is_resident(r.spec.adapter) {
            done += transfer_time(self.catalog.spec(r.spec.adapter).size_bytes, &self.cfg.hardware);
        }
        done <= eta
    }
}
