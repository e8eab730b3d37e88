use std::collections::BTreeSet;

use lorasim_core::cache::{Acquire, AdapterCache, CacheConfig, CachePolicy};
use lorasim_core::model::{AdapterCatalog, AdapterId, HardwareProfile};
use lorasim_core::SimTime;
use proptest::prelude::*;

fn catalog() -> AdapterCatalog {
    AdapterCatalog::uniform(&[8, 16, 32, 64, 128], 4, &HardwareProfile::default())
}

fn cache(policy: CachePolicy, cap: u64, weights: (f64, f64, f64)) -> AdapterCache {
    let cfg = CacheConfig {
        policy,
        weight_frequency: weights.0,
        weight_recency: weights.1,
        weight_size: weights.2,
        max_capacity_tokens: Some(cap),
        ..Default::default()
    };
    AdapterCache::new(cfg, &catalog())
}

/// One request at a time: acquire, load on a miss, release. Returns the
/// sequence of evicted ids and the bytes moved.
fn replay(c: &mut AdapterCache, trace: &[(u32, u64)]) -> (Vec<AdapterId>, u64) {
    let none = BTreeSet::new();
    let mut evicted = Vec::new();
    let mut bytes = 0;
    for &(id, t) in trace {
        let id = AdapterId(id);
        let now = SimTime(t);
        if let Acquire::MissLoadRequired { bytes: b } = c.acquire(id, now) {
            bytes += b;
            evicted.extend(c.evict_until(c.entry(id).size_tokens, &none, now).unwrap());
            c.install(id, now, now, true);
            c.complete_load(id);
        }
        c.release(id, now);
    }
    (evicted, bytes)
}

/// Textbook LRU over variable-size objects, kept as a recency list.
fn lru_oracle(sizes: &[u64], cap: u64, trace: &[(u32, u64)]) -> Vec<AdapterId> {
    let mut order: Vec<u32> = Vec::new();
    let mut used = 0;
    let mut evicted = Vec::new();
    for &(id, _) in trace {
        if let Some(p) = order.iter().position(|&x| x == id) {
            order.remove(p);
        } else {
            while used + sizes[id as usize] > cap {
                let victim = order.remove(0);
                used -= sizes[victim as usize];
                evicted.push(AdapterId(victim));
            }
            used += sizes[id as usize];
        }
        order.push(id);
    }
    evicted
}

fn trace_strategy() -> impl Strategy<Value = Vec<(u32, u64)>> {
    prop::collection::vec((0u32..20, 1u64..5_000_000), 1..200).prop_map(|steps| {
        let mut t = 0;
        steps
            .into_iter()
            .map(|(id, gap)| {
                t += gap;
                (id, t)
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn recency_only_score_is_lru(trace in trace_strategy(), cap in 512u64..2_000) {
        let sizes: Vec<u64> = catalog().iter().map(|a| a.size_tokens).collect();
        let mut c = cache(CachePolicy::CostAware, cap, (0.0, 1.0, 0.0));
        let (evicted, _) = replay(&mut c, &trace);
        prop_assert_eq!(evicted, lru_oracle(&sizes, cap, &trace));
    }

    #[test]
    fn lru_policy_matches_oracle(trace in trace_strategy(), cap in 512u64..2_000) {
        let sizes: Vec<u64> = catalog().iter().map(|a| a.size_tokens).collect();
        let mut c = cache(CachePolicy::Lru, cap, (0.45, 0.10, 0.45));
        let (evicted, _) = replay(&mut c, &trace);
        prop_assert_eq!(evicted, lru_oracle(&sizes, cap, &trace));
    }

    #[test]
    fn more_capacity_never_moves_more_bytes(trace in trace_strategy(), cap in 512u64..2_000, extra in 1u64..1_500) {
        let (_, small) = replay(&mut cache(CachePolicy::Lru, cap, (0.0, 1.0, 0.0)), &trace);
        let (_, large) = replay(&mut cache(CachePolicy::Lru, cap + extra, (0.0, 1.0, 0.0)), &trace);
        prop_assert!(large <= small);
    }
}

#[derive(Debug, Clone)]
enum Op {
    Acquire(u32),
    Release(u32),
    Shrink(u64),
    Grow(u64),
    Finish(u32),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0u32..20).prop_map(Op::Acquire),
        3 => (0u32..20).prop_map(Op::Release),
        1 => (0u64..3_000).prop_map(Op::Shrink),
        1 => (0u64..3_000).prop_map(Op::Grow),
        1 => (0u32..20).prop_map(Op::Finish),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Random mix of accesses, releases, capacity changes and in-flight loads.
    #[test]
    fn accounting_survives_a_long_workout(
        ops in prop::collection::vec(op(), 10_000),
        policy in prop_oneof![Just(CachePolicy::Lru), Just(CachePolicy::FairShare), Just(CachePolicy::CostAware), Just(CachePolicy::NoCache)],
    ) {
        let mut c = cache(policy, 3_000, (0.45, 0.10, 0.45));
        let hints: BTreeSet<AdapterId> = [AdapterId(1), AdapterId(7)].into_iter().collect();
        let mut refs = [0u32; 20];
        for (step, op) in ops.into_iter().enumerate() {
            let now = SimTime(step as u64 * 1_000);
            match op {
                Op::Acquire(i) => {
                    let id = AdapterId(i);
                    if let Acquire::MissLoadRequired { .. } = c.acquire(id, now) {
                        let need = c.entry(id).size_tokens;
                        if c.evict_until(need, &hints, now).is_err() {
                            continue;
                        }
                        c.install(id, now, SimTime(now.as_micros() + 5_000), true);
                    }
                    refs[i as usize] += 1;
                }
                Op::Release(i) => {
                    if refs[i as usize] > 0 {
                        refs[i as usize] -= 1;
                        c.release(AdapterId(i), now);
                    }
                }
                Op::Finish(i) => {
                    if c.entry(AdapterId(i)).loading_until.is_some() {
                        c.complete_load(AdapterId(i));
                    }
                }
                Op::Shrink(cap) | Op::Grow(cap) => {
                    let pinned = c.pinned_tokens();
                    c.set_capacity(cap.max(pinned));
                    c.evict_until(0, &hints, now).unwrap();
                }
            }
            let recomputed: u64 = c.entries().filter(|e| e.resident).map(|e| e.size_tokens).sum();
            prop_assert_eq!(recomputed, c.used_tokens());
            prop_assert!(c.used_tokens() <= c.capacity_tokens());
            for e in c.entries() {
                prop_assert_eq!(e.ref_count, refs[e.id.0 as usize]);
                prop_assert!(e.ref_count == 0 || e.resident, "pinned adapter {} was evicted", e.id);
            }
            prop_assert!(c.audit().is_ok());
        }
    }
}
