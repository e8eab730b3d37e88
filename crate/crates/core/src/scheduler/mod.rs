//! Request scheduling: the multi-queue quota scheduler and the single-queue
//! FIFO and SJF baselines.
//!
//! Requests are classified by weighted request size (WRS) into queues whose
//! cut-offs and token quotas are refitted periodically from recent arrivals.
//! Each queue may hold at most its quota in running requests; whatever a
//! drained queue does not use is lent out for one batch.

pub mod batch;
pub mod kmeans;
pub mod quota;
pub mod wrs;

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::cost::isolated_duration;
use crate::model::{CostModelParams, HardwareProfile, RequestId, Tokens};
use crate::time::{SimDuration, SimTime};

pub use batch::{generate_batch, AdmissionOracle, Admitted, BatchOutcome, Blocked, BypassSettings};
pub use kmeans::{fit_layout, QueueLayout};
pub use quota::{min_tokens, solve_quotas, Infeasible, QueueDemand, QuotaSolution};
pub use wrs::compute_wrs;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerPolicy {
    Fifo,
    Sjf,
    Mlq,
}

/// Queue cut-offs and quotas pinned by configuration instead of fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedLayout {
    pub boundaries: Vec<f64>,
    pub quotas: Vec<Tokens>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchedulerConfig {
    pub policy: SchedulerPolicy,
    pub weight_input: f64,
    pub weight_output: f64,
    pub weight_adapter: f64,
    pub max_queues: usize,
    pub refresh_interval: SimDuration,
    pub max_input: u32,
    pub max_output: u32,
    pub max_adapter_rank: u32,
    /// Normalize WRS by the largest sizes seen in the last window instead of
    /// the fixed maxima above.
    pub windowed_normalization: bool,
    /// SJF priority is `predicted_output - sjf_aging * seconds_waited`.
    pub sjf_aging: f64,
    /// Arrivals observed before the first layout fit.
    pub bootstrap_samples: usize,
    /// Smallest log-WCSS bend accepted as an elbow.
    pub elbow_min_bend: f64,
    /// The last queue has no WRS ceiling; its quota is sized for this
    /// quantile of the WRS values it received. The window maximum (1.0) lets
    /// a single heavy-tail outlier claim most of the device.
    pub last_queue_quantile: f64,
    pub bypass: bool,
    pub bypass_scan_depth: usize,
    pub fixed_layout: Option<FixedLayout>,
    /// Tokens shared by the queue quotas; defaults to the device's token slots.
    pub quota_tokens: Option<Tokens>,
    /// Per-queue latency target for the quota solver; defaults to the SLO
    /// multiplier times each queue's isolated duration.
    pub queue_slo: Option<SimDuration>,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            policy: SchedulerPolicy::Mlq,
            weight_input: 0.3,
            weight_output: 0.5,
            weight_adapter: 0.2,
            max_queues: 4,
            refresh_interval: SimDuration::from_secs(300),
            max_input: 4096,
            max_output: 2048,
            max_adapter_rank: 128,
            windowed_normalization: false,
            sjf_aging: 0.0,
            bootstrap_samples: 256,
            elbow_min_bend: 0.3,
            last_queue_quantile: 0.95,
            bypass: true,
            bypass_scan_depth: 32,
            fixed_layout: None,
            quota_tokens: None,
            queue_slo: None,
        }
    }
}

/// What the scheduler knows about a waiting request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pending {
    pub id: RequestId,
    pub arrival: SimTime,
    pub input_tokens: u32,
    pub predicted_output: u32,
    pub rank: u32,
    pub wrs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Sample {
    time: SimTime,
    input_tokens: u32,
    predicted_output: u32,
    rank: u32,
}

/// Inputs the quota solver needs from outside the scheduler.
#[derive(Debug, Clone, Copy)]
pub struct RefreshContext<'a> {
    pub cost: &'a CostModelParams,
    pub hardware: &'a HardwareProfile,
    pub slo_multiplier: f64,
}

/// Layout and quotas installed by one refresh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSnapshot {
    pub time: SimTime,
    pub layout: QueueLayout,
    pub demands: Vec<QueueDemand>,
    pub quotas: Vec<Tokens>,
    pub minimums: Vec<Tokens>,
    pub infeasible: Option<Infeasible>,
    pub window_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LedgerError {
    /// Tokens held by running requests disagree with the per-queue counters.
    HeldMismatch {
        queue: usize,
        held: Tokens,
        charged: Tokens,
    },
    UnknownRequest(RequestId),
}

impl core::fmt::Display for LedgerError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            LedgerError::HeldMismatch { queue, held, charged } => {
                write!(f, "queue {queue} holds {held} tokens but running requests were charged {charged}")
            }
            LedgerError::UnknownRequest(id) => write!(f, "request {id} released but never admitted"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scheduler {
    cfg: SchedulerConfig,
    total_tokens: Tokens,
    layout: QueueLayout,
    quotas: Vec<Tokens>,
    queues: Vec<VecDeque<RequestId>>,
    held: Vec<Tokens>,
    pending: BTreeMap<RequestId, Pending>,
    running: BTreeMap<RequestId, (f64, Vec<(usize, Tokens)>)>,
    window: VecDeque<Sample>,
    last_refresh: SimTime,
    fitted: bool,
    norm_input: u32,
    norm_output: u32,
    norm_rank: u32,
    pub snapshots: Vec<LayoutSnapshot>,
}

impl Scheduler {
    pub fn new(cfg: SchedulerConfig, hardware_tokens: Tokens) -> Self {
        let total_tokens = cfg.quota_tokens.unwrap_or(hardware_tokens);
        let (layout, quotas) = match (&cfg.fixed_layout, cfg.policy) {
            (Some(fixed), SchedulerPolicy::Mlq) => {
                (QueueLayout::from_boundaries(fixed.boundaries.clone()), fixed.quotas.clone())
            }
            (Some(fixed), _) => (QueueLayout::single(), alloc::vec![fixed.quotas.iter().sum()]),
            (None, _) => (QueueLayout::single(), alloc::vec![total_tokens]),
        };
        let k = layout.k;
        Scheduler {
            norm_input: cfg.max_input,
            norm_output: cfg.max_output,
            norm_rank: cfg.max_adapter_rank,
            fitted: cfg.fixed_layout.is_some(),
            cfg,
            total_tokens,
            layout,
            quotas,
            queues: alloc::vec![VecDeque::new(); k],
            held: alloc::vec![0; k],
            pending: BTreeMap::new(),
            running: BTreeMap::new(),
            window: VecDeque::new(),
            last_refresh: SimTime::ZERO,
            snapshots: Vec::new(),
        }
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &QueueLayout {
        &self.layout
    }

    pub fn quotas(&self) -> &[Tokens] {
        &self.quotas
    }

    pub fn held(&self) -> &[Tokens] {
        &self.held
    }

    pub fn queues(&self) -> &[VecDeque<RequestId>] {
        &self.queues
    }

    pub fn total_tokens(&self) -> Tokens {
        self.total_tokens
    }

    /// Quota each queue can still lend out right now.
    pub fn available(&self) -> Vec<Tokens> {
        self.quotas.iter().zip(&self.held).map(|(q, h)| q.saturating_sub(*h)).collect()
    }

    /// WRS under the current normalization.
    pub fn wrs(&self, input_tokens: u32, predicted_output: u32, rank: u32) -> f64 {
        let cfg = SchedulerConfig {
            max_input: self.norm_input,
            max_output: self.norm_output,
            max_adapter_rank: self.norm_rank,
            fixed_layout: None,
            ..self.cfg.clone()
        };
        compute_wrs(input_tokens, predicted_output, rank, &cfg)
    }

    fn is_multi_queue(&self) -> bool {
        self.cfg.policy == SchedulerPolicy::Mlq
    }

    pub fn queue_for(&self, wrs: f64) -> usize {
        if self.is_multi_queue() {
            self.layout.queue_for(wrs)
        } else {
            0
        }
    }

    /// Add a new arrival to the tail of its queue and to the fit window.
    pub fn enqueue(&mut self, p: Pending) -> usize {
        self.window.push_back(Sample {
            time: p.arrival,
            input_tokens: p.input_tokens,
            predicted_output: p.predicted_output,
            rank: p.rank,
        });
        let q = self.queue_for(p.wrs);
        self.queues[q].push_back(p.id);
        self.pending.insert(p.id, p);
        q
    }

    /// Put a squashed request back in arrival order.
    pub fn requeue(&mut self, p: Pending) -> usize {
        let q = self.queue_for(p.wrs);
        let pending = &self.pending;
        let pos = self.queues[q]
            .iter()
            .position(|id| {
                let o = &pending[id];
                (o.arrival, o.id) > (p.arrival, p.id)
            })
            .unwrap_or(self.queues[q].len());
        self.queues[q].insert(pos, p.id);
        self.pending.insert(p.id, p);
        q
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_pending(&self, id: RequestId) -> bool {
        self.pending.contains_key(&id)
    }

    pub fn pending(&self, id: RequestId) -> Option<&Pending> {
        self.pending.get(&id)
    }

    pub fn running_len(&self) -> usize {
        self.running.len()
    }

    /// Waiting requests in the order the scheduler would consider them.
    pub fn pending_in_order(&self) -> impl Iterator<Item = RequestId> + '_ {
        self.queues.iter().flat_map(|q| q.iter().copied())
    }

    fn sort_sjf(&mut self, now: SimTime) {
        let aging = self.cfg.sjf_aging;
        let pending = &self.pending;
        let key = |p: &Pending| -> f64 {
            if aging == 0.0 {
                return f64::from(p.predicted_output);
            }
            if aging.is_infinite() {
                // Pure arrival order.
                return p.arrival.as_micros() as f64;
            }
            f64::from(p.predicted_output) - aging * now.since(p.arrival).as_secs_f64()
        };
        let q = &mut self.queues[0];
        q.make_contiguous().sort_by(|a, b| {
            let (pa, pb) = (&pending[a], &pending[b]);
            key(pa).partial_cmp(&key(pb)).unwrap_or(Ordering::Equal).then((pa.arrival, pa.id).cmp(&(pb.arrival, pb.id)))
        });
    }

    /// Choose the requests to admit this iteration. Admitted requests leave
    /// the queues and hold their charges until [`Scheduler::release`].
    pub fn next_batch<O: AdmissionOracle>(&mut self, oracle: &mut O, now: SimTime) -> BatchOutcome {
        let bypass = match self.cfg.policy {
            SchedulerPolicy::Mlq if self.cfg.bypass => {
                BypassSettings { enabled: true, scan_depth: self.cfg.bypass_scan_depth }
            }
            _ => BypassSettings::OFF,
        };
        if self.cfg.policy == SchedulerPolicy::Sjf {
            self.sort_sjf(now);
        }
        let budgets = self.available();
        let outcome = generate_batch(&mut self.queues, &budgets, oracle, bypass);
        for a in &outcome.admitted {
            let p = self.pending.remove(&a.id).expect("admitted request was pending");
            for &(q, t) in &a.charges {
                self.held[q] += t;
            }
            self.running.insert(a.id, (p.wrs, a.charges.clone()));
        }
        outcome
    }

    /// Admit the first waiting request regardless of quota, charging its own
    /// queue. Only for an idle node, so a request larger than its queue's
    /// quota cannot wedge the system.
    pub fn force_head<O: AdmissionOracle>(&mut self, oracle: &mut O) -> Option<Admitted> {
        let q = self.queues.iter().position(|q| !q.is_empty())?;
        let id = *self.queues[q].front()?;
        let need = oracle.need(id);
        oracle.reserve(id).ok()?;
        self.queues[q].pop_front();
        let p = self.pending.remove(&id).expect("queued request was pending");
        self.held[q] += need;
        self.running.insert(id, (p.wrs, alloc::vec![(q, need)]));
        Some(Admitted { id, queue: q, need, charges: alloc::vec![(q, need)], bypassed: None })
    }

    /// When the next timed refresh is due.
    pub fn next_refresh(&self) -> SimTime {
        self.last_refresh + self.cfg.refresh_interval
    }

    /// Return a finished or squashed request's quota to the queues it borrowed from.
    pub fn release(&mut self, id: RequestId) -> Result<Tokens, LedgerError> {
        let (_, charges) = self.running.remove(&id).ok_or(LedgerError::UnknownRequest(id))?;
        let mut total = 0;
        for (q, t) in charges {
            self.held[q] -= t;
            total += t;
        }
        Ok(total)
    }

    /// Held counters must equal the charges of running requests.
    pub fn check_ledger(&self) -> Result<(), LedgerError> {
        let mut charged = alloc::vec![0; self.held.len()];
        for (_, charges) in self.running.values() {
            for &(q, t) in charges {
                charged[q] += t;
            }
        }
        for (q, (&h, &c)) in self.held.iter().zip(&charged).enumerate() {
            if h != c {
                return Err(LedgerError::HeldMismatch { queue: q, held: h, charged: c });
            }
        }
        Ok(())
    }

    fn adapts(&self) -> bool {
        self.is_multi_queue() && self.cfg.fixed_layout.is_none()
    }

    /// True once enough arrivals have been seen for the first fit.
    pub fn wants_bootstrap(&self) -> bool {
        self.adapts() && !self.fitted && self.window.len() >= self.cfg.bootstrap_samples.max(1)
    }

    pub fn refresh_due(&self, now: SimTime) -> bool {
        now.since(self.last_refresh) >= self.cfg.refresh_interval
    }

    /// Refit queue cut-offs and quotas from the recent window, then re-bucket
    /// waiting requests. Running requests keep their charges, moved to the
    /// queue their WRS maps to under the new layout.
    pub fn refresh(&mut self, now: SimTime, ctx: &RefreshContext<'_>) -> Option<&LayoutSnapshot> {
        self.last_refresh = now;
        if !self.adapts() {
            return None;
        }
        let horizon = self.cfg.refresh_interval;
        while self.window.front().is_some_and(|s| now.since(s.time) > horizon) {
            self.window.pop_front();
        }
        if self.window.len() < self.cfg.max_queues.max(1) {
            return None;
        }
        if self.cfg.windowed_normalization {
            self.norm_input = self.window.iter().map(|s| s.input_tokens).max().unwrap_or(1).max(1);
            self.norm_output = self.window.iter().map(|s| s.predicted_output).max().unwrap_or(1).max(1);
            self.norm_rank = self.window.iter().map(|s| s.rank).max().unwrap_or(1).max(1);
        }
        let samples: Vec<Sample> = self.window.iter().copied().collect();
        let values: Vec<f64> = samples.iter().map(|s| self.wrs(s.input_tokens, s.predicted_output, s.rank)).collect();
        let layout = fit_layout(&values, self.cfg.max_queues, self.cfg.elbow_min_bend);

        let span = now.since(samples[0].time).as_secs_f64().max(1e-3);
        let demands: Vec<QueueDemand> = (0..layout.k)
            .map(|q| {
                let members: Vec<usize> = (0..samples.len()).filter(|&i| layout.queue_for(values[i]) == q).collect();
                self.queue_demand(q, &layout, &members, &samples, &values, span, ctx)
            })
            .collect();
        let solution = solve_quotas(&demands, self.total_tokens);

        self.fitted = true;
        self.install(layout.clone(), solution.quotas.clone());
        self.snapshots.push(LayoutSnapshot {
            time: now,
            layout,
            demands,
            quotas: solution.quotas,
            minimums: solution.minimums,
            infeasible: solution.infeasible,
            window_samples: samples.len(),
        });
        self.snapshots.last()
    }

    #[allow(clippy::too_many_arguments)]
    fn queue_demand(
        &self,
        q: usize,
        layout: &QueueLayout,
        members: &[usize],
        samples: &[Sample],
        values: &[f64],
        span_secs: f64,
        ctx: &RefreshContext<'_>,
    ) -> QueueDemand {
        let all: Vec<usize>;
        let basis = if members.is_empty() {
            all = (0..samples.len()).collect();
            &all
        } else {
            members
        };
        let n = basis.len() as f64;
        let mean = |f: &dyn Fn(&Sample) -> u32| basis.iter().map(|&i| f64::from(f(&samples[i]))).sum::<f64>() / n;
        let mean_in = mean(&|s| s.input_tokens).max(1.0);
        let mean_out = mean(&|s| s.predicted_output).max(1.0);
        let mean_rank = mean(&|s| s.rank);

        // Scale the queue's mean request up to its WRS ceiling.
        let upper = layout.upper_bound(q).unwrap_or_else(|| {
            let mut v: Vec<f64> = basis.iter().map(|&i| values[i]).collect();
            v.sort_by(f64::total_cmp);
            let rank = libm::ceil(self.cfg.last_queue_quantile * v.len() as f64) as usize;
            v[rank.clamp(1, v.len()) - 1]
        });
        let mean_wrs = self.wrs(mean_in as u32, mean_out as u32, libm::ceil(mean_rank) as u32);
        let factor = if mean_wrs > 0.0 && upper > mean_wrs { upper / mean_wrs } else { 1.0 };
        let input = libm::ceil(mean_in * factor).min(f64::from(self.cfg.max_input)) as u32;
        let output = libm::ceil(mean_out * factor).min(f64::from(self.cfg.max_output)) as u32;
        let rank = libm::ceil(mean_rank * factor).min(f64::from(self.cfg.max_adapter_rank)) as u32;

        let size = f64::from(input)
            + f64::from(output)
            + if rank > 0 { ctx.hardware.adapter_tokens(rank) as f64 } else { 0.0 };
        let duration = isolated_duration(input.max(1), output.max(1), rank, ctx.cost, ctx.hardware);
        let slo = self
            .cfg
            .queue_slo
            .unwrap_or_else(|| SimDuration::from_secs_f64(duration.as_secs_f64() * ctx.slo_multiplier));
        QueueDemand { size_tokens: size, duration, arrival_rate: members.len() as f64 / span_secs, slo }
    }

    fn install(&mut self, layout: QueueLayout, quotas: Vec<Tokens>) {
        let k = layout.k;
        let mut waiting: Vec<Pending> = self.pending.values().copied().collect();
        waiting.sort_by_key(|p| (p.arrival, p.id));
        self.layout = layout;
        self.quotas = quotas;
        self.queues = alloc::vec![VecDeque::new(); k];
        for p in &waiting {
            let q = self.layout.queue_for(p.wrs);
            self.queues[q].push_back(p.id);
        }
        self.held = alloc::vec![0; k];
        let layout = &self.layout;
        for (wrs, charges) in self.running.values_mut() {
            let total: Tokens = charges.iter().map(|c| c.1).sum();
            let q = layout.queue_for(*wrs);
            *charges = alloc::vec![(q, total)];
            self.held[q] += total;
        }
    }
}
