use super::SchedulerConfig;

/// Weighted request size: a convex-ish blend of normalized prompt length,
/// predicted output length and adapter rank. Each ratio is clipped to 1.
pub fn compute_wrs(input_tokens: u32, predicted_output: u32, adapter_rank: u32, cfg: &SchedulerConfig) -> f64 {
    let ratio = |v: u32, max: u32| (f64::from(v) / f64::from(max.max(1))).min(1.0);
    cfg.weight_input * ratio(input_tokens, cfg.max_input)
        + cfg.weight_output * ratio(predicted_output, cfg.max_output)
        + cfg.weight_adapter * ratio(adapter_rank, cfg.max_adapter_rank)
}
