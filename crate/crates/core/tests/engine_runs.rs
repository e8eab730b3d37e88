use lorasim_core::cache::CachePolicy;
use lorasim_core::cost::{step_duration, BatchEntry};
use lorasim_core::engine::isolated_time;
use lorasim_core::model::{AdapterCatalog, AdapterId, RequestId, RequestSpec};
use lorasim_core::scheduler::{FixedLayout, SchedulerPolicy};
use lorasim_core::workload::generate_arrivals;
use lorasim_core::{run, simulate, SimConfig, SimDuration, SimTime};
use proptest::prelude::*;

fn one_request(input: u32, output: u32, adapter: u32) -> Vec<RequestSpec> {
    vec![RequestSpec {
        id: RequestId(0),
        arrival: SimTime(1_000),
        input_tokens: input,
        output_tokens: output,
        adapter: AdapterId(adapter),
    }]
}

fn small_cfg(rate: f64, n: u64, seed: u64) -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.workload.arrival_rate = rate;
    cfg.workload.max_requests = Some(n);
    cfg.workload.seed = seed;
    cfg.workload.duration = SimDuration::from_secs(3_600);
    cfg
}

#[test]
fn golden_isolated_time() {
    // Worked by hand from the default cost model: 4,695 us transfer, a
    // 34,327 us admitting step, then 127 decode steps.
    let cfg = SimConfig::default();
    let catalog = AdapterCatalog::uniform(&[32], 1, &cfg.hardware);
    let t = isolated_time(&one_request(512, 128, 0)[0], &catalog, &cfg);
    assert_eq!(t, SimDuration::from_micros(856_569));
}

#[test]
fn lone_request_ttft_is_prefill_step_plus_cold_transfer() {
    let mut cfg = SimConfig::default();
    cfg.cache.policy = CachePolicy::Lru;
    cfg.scheduler.policy = SchedulerPolicy::Fifo;
    let catalog = AdapterCatalog::uniform(&[128], 1, &cfg.hardware);
    let prefill = step_duration(&[BatchEntry { context_tokens: 200, prefill_tokens: 200, rank: 128 }], &cfg.cost);

    // Cold: the adapter has to cross the idle link first.
    let cold = run(&cfg, &catalog, &one_request(200, 4, 0)).unwrap();
    assert_eq!(cold.records[0].ttft, prefill + SimDuration::from_micros(17_278));
    assert!(!cold.records[0].adapter_hit);

    // Warm: a second identical request after the first finished hits.
    let mut reqs = one_request(200, 4, 0);
    reqs.push(RequestSpec { id: RequestId(1), arrival: SimTime(5_000_000), ..reqs[0] });
    let warm = run(&cfg, &catalog, &reqs).unwrap();
    assert_eq!(warm.records[1].ttft, prefill);
    assert!(warm.records[1].adapter_hit);
    assert_eq!(warm.counters.bytes_transferred, cfg.hardware.adapter_bytes(128));
}

#[test]
fn zero_requests() {
    let cfg = SimConfig::default();
    let out = run(&cfg, &cfg.catalog(), &[]).unwrap();
    assert!(out.records.is_empty());
    assert_eq!(out.counters.bytes_transferred, 0);
}

#[test]
fn slowdown_is_e2e_over_isolated_time() {
    let cfg = small_cfg(2.0, 300, 4);
    let catalog = cfg.catalog();
    let reqs = generate_arrivals(&cfg.workload, &catalog);
    let out = run(&cfg, &catalog, &reqs).unwrap();
    for (r, spec) in out.records.iter().zip(&reqs).step_by(7) {
        let iso = isolated_time(spec, &catalog, &cfg).as_micros() as f64;
        assert!((r.slowdown - r.e2e.as_micros() as f64 / iso).abs() < 1e-9);
    }
}

#[test]
fn reruns_are_identical() {
    let cfg = small_cfg(3.0, 500, 11);
    assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
}

#[test]
fn nocache_bytes_grow_with_adapter_count() {
    let bytes = |n| {
        let mut cfg = small_cfg(2.0, 400, 2);
        cfg.workload.num_adapters = n;
        cfg.cache.policy = CachePolicy::NoCache;
        simulate(&cfg).unwrap().counters.bytes_transferred
    };
    let (few, many) = (bytes(1), bytes(500));
    assert!(many > 10 * few, "{few} vs {many}");
}

fn fifo_oracle(reqs: &[RequestSpec]) -> Vec<RequestId> {
    let mut ids: Vec<(SimTime, RequestId)> = reqs.iter().map(|r| (r.arrival, r.id)).collect();
    ids.sort();
    ids.into_iter().map(|(_, id)| id).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn mlq_with_one_unbounded_queue_admits_in_fifo_order(seed in any::<u64>(), rate in 0.5f64..12.0, n in 5u64..60) {
        let mut cfg = small_cfg(rate, n, seed);
        cfg.scheduler.policy = SchedulerPolicy::Mlq;
        cfg.scheduler.fixed_layout = Some(FixedLayout { boundaries: vec![], quotas: vec![u64::MAX / 4] });
        let catalog = cfg.catalog();
        let reqs = generate_arrivals(&cfg.workload, &catalog);
        let out = run(&cfg, &catalog, &reqs).unwrap();
        prop_assume!(out.counters.squash_events == 0);
        prop_assert_eq!(&out.admissions, &fifo_oracle(&reqs));

        cfg.scheduler.policy = SchedulerPolicy::Fifo;
        let fifo = run(&cfg, &catalog, &reqs).unwrap();
        prop_assert_eq!(out.admissions, fifo.admissions);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Every run checks its invariants at each step and fails on a violation;
    /// here we also check the end state.
    #[test]
    fn random_runs_finish_every_request_once(
        seed in any::<u64>(),
        rate in 0.5f64..10.0,
        n in 1u64..250,
        policy in prop_oneof![Just(SchedulerPolicy::Fifo), Just(SchedulerPolicy::Sjf), Just(SchedulerPolicy::Mlq)],
        cache in prop_oneof![Just(CachePolicy::NoCache), Just(CachePolicy::Lru), Just(CachePolicy::FairShare), Just(CachePolicy::CostAware)],
        adapters in 1u32..300,
        cap in prop::option::of(512u64..6_000),
        slots in 20_000u64..80_000,
    ) {
        let mut cfg = small_cfg(rate, n, seed);
        cfg.scheduler.policy = policy;
        cfg.scheduler.refresh_interval = SimDuration::from_secs(5);
        cfg.scheduler.bootstrap_samples = 16;
        cfg.cache.policy = cache;
        cfg.cache.max_capacity_tokens = cap;
        cfg.workload.num_adapters = adapters;
        cfg.hardware.total_token_slots = slots;
        let catalog = cfg.catalog();
        let reqs = generate_arrivals(&cfg.workload, &catalog);
        let out = run(&cfg, &catalog, &reqs).unwrap();
        prop_assert_eq!(out.records.len(), reqs.len());
        for (i, r) in out.records.iter().enumerate() {
            prop_assert_eq!(r.request_id, RequestId(i as u64));
            prop_assert!(r.ttft <= r.e2e);
            prop_assert!(r.arrival.as_micros() + r.e2e.as_micros() <= out.end_time.as_micros());
        }
        let admitted_once: std::collections::BTreeSet<_> = out.admissions.iter().collect();
        prop_assert_eq!(admitted_once.len(), reqs.len());
    }
}
