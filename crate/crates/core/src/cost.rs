//! Parametric iteration-time and transfer-time model.
//!
//! Every member of a batch decodes one token per iteration. Requests admitted
//! in this iteration also run their prefill inside it, so the first output
//! token appears at the end of the admitting iteration.

use crate::model::{CostModelParams, HardwareProfile};
use crate::time::SimDuration;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchEntry {
    /// Tokens of context attended while decoding (prompt + generated so far).
    pub context_tokens: u64,
    /// Prompt tokens prefilled this iteration; zero for ongoing decodes.
    pub prefill_tokens: u64,
    /// Adapter rank, or zero for the bare base model.
    pub rank: u32,
}

/// Iteration time in nanoseconds. Pure function of the batch.
pub fn step_duration_ns(batch: &[BatchEntry], cost: &CostModelParams) -> u64 {
    if batch.is_empty() {
        return 0;
    }
    let mut ns = cost.decode_base_ns;
    let mut any_prefill = false;
    for e in batch {
        let rank = u64::from(e.rank);
        ns += cost.decode_per_token_ns * e.context_tokens;
        ns += cost.adapter_per_rank_token_ns * rank;
        if e.prefill_tokens > 0 {
            any_prefill = true;
            ns += cost.prefill_per_token_ns * e.prefill_tokens;
            ns += cost.adapter_per_rank_token_ns * rank * e.prefill_tokens;
        }
    }
    if any_prefill {
        ns += cost.prefill_base_ns;
    }
    ns
}

/// Iteration time rounded up to whole microseconds.
pub fn step_duration(batch: &[BatchEntry], cost: &CostModelParams) -> SimDuration {
    SimDuration(step_duration_ns(batch, cost).div_ceil(1_000))
}

/// Time the link is occupied moving `bytes`, excluding fixed latency.
pub fn link_occupancy_ns(bytes: u64, hw: &HardwareProfile) -> u64 {
    let num = u128::from(bytes) * 1_000_000_000;
    num.div_ceil(u128::from(hw.link_bandwidth_bytes_per_sec.max(1))) as u64
}

/// Transfer time on an idle link.
pub fn transfer_time(bytes: u64, hw: &HardwareProfile) -> SimDuration {
    let ns = hw.link_fixed_latency.as_micros() * 1_000 + link_occupancy_ns(bytes, hw);
    SimDuration(ns.div_ceil(1_000))
}

/// End-to-end time of a request running alone with a cold adapter: one
/// transfer, then one admitting iteration and `output - 1` decode iterations.
pub fn isolated_duration(
    input: u32,
    output: u32,
    rank: u32,
    cost: &CostModelParams,
    hw: &HardwareProfile,
) -> SimDuration {
    let mut total = if rank > 0 { transfer_time(hw.adapter_bytes(rank), hw) } else { SimDuration::ZERO };
    let input = u64::from(input);
    for k in 0..u64::from(output.max(1)) {
        let entry = BatchEntry { context_tokens: input + k, prefill_tokens: if k == 0 { input } else { 0 }, rank };
        total += step_duration(&[entry], cost);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain(decode_base_ns: u64, decode_per_token_ns: u64) -> CostModelParams {
        CostModelParams {
            prefill_base_ns: 0,
            prefill_per_token_ns: 0,
            decode_base_ns,
            decode_per_token_ns,
            adapter_per_rank_token_ns: 0,
        }
    }

    #[test]
    fn single_decoder_fixture() {
        let c = plain(2_000_000, 1_000);
        let d = step_duration(&[BatchEntry { context_tokens: 100, prefill_tokens: 0, rank: 0 }], &c);
        assert_eq!(d, SimDuration(2_100));
    }

    #[test]
    fn linear_without_base_terms() {
        let c = CostModelParams { prefill_base_ns: 0, decode_base_ns: 0, ..Default::default() };
        let a = [
            BatchEntry { context_tokens: 300, prefill_tokens: 200, rank: 16 },
            BatchEntry { context_tokens: 50, prefill_tokens: 0, rank: 0 },
        ];
        let b = [
            BatchEntry { context_tokens: 600, prefill_tokens: 400, rank: 16 },
            BatchEntry { context_tokens: 100, prefill_tokens: 0, rank: 0 },
        ];
        // The per-rank decode term does not scale with token counts.
        let rank_decode = c.adapter_per_rank_token_ns * 16;
        assert_eq!(step_duration_ns(&b, &c) - rank_decode, 2 * (step_duration_ns(&a, &c) - rank_decode));
    }

    #[test]
    fn rank_spread() {
        let c = CostModelParams::default();
        let tokens = 512;
        let big = [BatchEntry { context_tokens: tokens, prefill_tokens: tokens, rank: 128 }];
        let small = [BatchEntry { context_tokens: tokens, prefill_tokens: tokens, rank: 8 }];
        // Prompt tokens plus the one decoded token run under the adapter.
        let diff = step_duration_ns(&big, &c) - step_duration_ns(&small, &c);
        assert_eq!(diff, c.adapter_per_rank_token_ns * 120 * (tokens + 1));
    }

    #[test]
    fn transfer_fixtures() {
        let hw = HardwareProfile::default();
        // 268,435,456 B / 16 GB/s = 16,777.216 us, plus 500 us.
        assert_eq!(transfer_time(268_435_456, &hw), SimDuration(17_278));
        assert_eq!(transfer_time(0, &hw), SimDuration(500));
    }

    #[test]
    fn empty_batch_costs_nothing() {
        assert_eq!(step_duration(&[], &CostModelParams::default()), SimDuration::ZERO);
    }
}
