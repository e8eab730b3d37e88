use lorasim_core::model::{AdapterCatalog, HardwareProfile};
use lorasim_core::scheduler::FixedLayout;
use lorasim_core::workload::{assign_adapter, generate_arrivals, stream_rng, AdapterSampler, Stream, WorkloadConfig};
use lorasim_core::{validate_config, SimConfig, SimDuration};
use proptest::prelude::*;

#[test]
fn rank_histogram_passes_chi_square() {
    let hw = HardwareProfile::default();
    let ranks = [8, 16, 32, 64, 128];
    let catalog = AdapterCatalog::uniform(&ranks, 20, &hw);
    let sampler = AdapterSampler::new(ranks.len(), 1.0);
    let mut rng = stream_rng(2024, Stream::Adapters);
    let n = 100_000;
    let mut counts = [0u64; 5];
    for _ in 0..n {
        let rank = catalog.spec(assign_adapter(&mut rng, &sampler, &catalog)).rank;
        counts[ranks.iter().position(|&r| r == rank).unwrap()] += 1;
    }
    let h5: f64 = (1..=5).map(|i| 1.0 / i as f64).sum();
    let chi2: f64 = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let expected = n as f64 / ((i + 1) as f64 * h5);
            (c as f64 - expected).powi(2) / expected
        })
        .sum();
    // 99th percentile of chi-square with 4 degrees of freedom.
    assert!(chi2 < 13.277, "chi2 = {chi2}, counts {counts:?}");
}

#[test]
fn every_request_names_a_catalog_adapter() {
    let cfg = WorkloadConfig {
        arrival_rate: 40.0,
        duration: SimDuration::from_secs(60),
        num_adapters: 37,
        ..Default::default()
    };
    let catalog = AdapterCatalog::spread(&cfg.ranks(), 37, &HardwareProfile::default());
    let reqs = generate_arrivals(&cfg, &catalog);
    assert!(reqs.len() > 2_000);
    assert!(reqs.iter().all(|r| catalog.get(r.adapter).is_some()));
    assert!(reqs.windows(2).all(|w| w[0].arrival < w[1].arrival));
}

/// Defaults with a random subset of fields overwritten by random, often
/// invalid, values.
fn arbitrary_config() -> impl Strategy<Value = SimConfig> {
    (
        (0u64..100_000, -1.0f64..40.0, prop::collection::vec(-16i64..256, 0..6), 0u32..300, -0.5f64..3.0),
        (-0.2f64..1.2, prop::collection::vec(0u32..5_000, 0..6), -0.5f64..1.5, 0usize..5, 0u64..20),
        (
            prop::option::of(0u64..2_000),
            0.5f64..8.0,
            -0.1f64..1.1,
            prop::option::of((prop::collection::vec(0.0f64..1.0, 0..3), prop::collection::vec(0u64..10_000, 0..4))),
        ),
        prop::collection::vec(any::<bool>(), 14),
    )
        .prop_map(
            |(
                (slots, rate, ranks, adapters, exponent),
                (acc, edges, w_in, max_queues, refresh),
                (cap, mult, warmup, fixed),
                on,
            )| {
                let mut cfg = SimConfig::default();
                if on[0] {
                    cfg.hardware.total_token_slots = slots;
                }
                if on[1] {
                    cfg.workload.arrival_rate = rate;
                }
                if on[2] {
                    cfg.workload.rank_set = ranks;
                }
                if on[3] {
                    cfg.workload.num_adapters = adapters;
                }
                if on[4] {
                    cfg.workload.rank_popularity_exponent = exponent;
                }
                if on[5] {
                    cfg.predictor.accuracy = acc;
                }
                if on[6] {
                    cfg.predictor.bucket_edges = edges;
                }
                if on[7] {
                    cfg.scheduler.weight_input = w_in;
                }
                if on[8] {
                    cfg.scheduler.max_queues = max_queues;
                }
                if on[9] {
                    cfg.scheduler.refresh_interval = SimDuration::from_secs(refresh);
                }
                if on[10] {
                    cfg.scheduler.fixed_layout = fixed.map(|(boundaries, quotas)| FixedLayout { boundaries, quotas });
                }
                if on[11] {
                    cfg.cache.max_capacity_tokens = cap;
                }
                if on[12] {
                    cfg.slo.slo_multiplier = mult;
                }
                if on[13] {
                    cfg.summary.warmup_fraction = warmup;
                }
                cfg
            },
        )
}

proptest! {
    #[test]
    fn accepted_configs_satisfy_type_invariants(cfg in arbitrary_config()) {
        let Ok(cfg) = validate_config(cfg) else { return Ok(()) };
        prop_assert!(cfg.hardware.total_token_slots > 0);
        prop_assert!(cfg.workload.arrival_rate > 0.0);
        prop_assert!(cfg.workload.num_adapters >= 1);
        let ranks = cfg.workload.ranks();
        prop_assert!(!ranks.is_empty() && ranks.iter().all(|&r| r > 0));
        let mut dedup = ranks.clone();
        dedup.sort_unstable();
        dedup.dedup();
        prop_assert_eq!(dedup.len(), ranks.len());
        prop_assert!(cfg.workload.rank_popularity_exponent >= 0.0);
        prop_assert!((0.0..=1.0).contains(&cfg.predictor.accuracy));
        prop_assert!(cfg.predictor.bucket_edges.len() >= 2);
        prop_assert!(cfg.predictor.bucket_edges.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(cfg.scheduler.weight_input >= 0.0);
        prop_assert!(cfg.scheduler.max_queues >= 1);
        prop_assert!(cfg.scheduler.refresh_interval > SimDuration::ZERO);
        if let Some(f) = &cfg.scheduler.fixed_layout {
            prop_assert_eq!(f.quotas.len(), f.boundaries.len() + 1);
        }
        if let Some(cap) = cfg.cache.max_capacity_tokens {
            let largest = ranks.iter().map(|&r| cfg.hardware.adapter_tokens(r)).max().unwrap();
            prop_assert!(cap >= largest);
        }
        prop_assert!(cfg.slo.slo_multiplier > 1.0);
        prop_assert!((0.0..1.0).contains(&cfg.summary.warmup_fraction));
        // An accepted config always builds a usable catalog.
        prop_assert_eq!(cfg.catalog().len(), cfg.workload.num_adapters as usize);
    }

    #[test]
    fn adapter_footprint_is_monotone_in_rank(a in 1u32..100_000, b in 1u32..100_000, per_rank in 1u64..10_000_000) {
        let hw = HardwareProfile { adapter_bytes_per_rank: per_rank, ..Default::default() };
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(hw.adapter_tokens(lo) <= hw.adapter_tokens(hi));
    }
}
