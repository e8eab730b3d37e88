//! Per-queue token quotas from an M/M/1 model of each queue.
//!
//! A queue holding `tok` token slots, serving requests of at most `S` tokens
//! that each take `D`, completes `mu = tok / (S * D)` requests per second.
//! Time in system is `1 / (mu - lambda)`; keeping that under the SLO gives
//! the floor `tok >= S * D * (1 / SLO + lambda)`.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::Tokens;
use crate::time::SimDuration;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueDemand {
    /// Largest token need of a request admitted to the queue.
    pub size_tokens: f64,
    pub duration: SimDuration,
    /// Requests per second.
    pub arrival_rate: f64,
    pub slo: SimDuration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotaSolution {
    pub quotas: Vec<Tokens>,
    pub minimums: Vec<Tokens>,
    /// Set when the minimums do not fit; quotas were then scaled down.
    pub infeasible: Option<Infeasible>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Infeasible {
    pub required: Tokens,
    pub available: Tokens,
}

/// Smallest quota meeting the SLO for one queue. An infinite SLO is passed
/// as `SimDuration(u64::MAX)`.
pub fn min_tokens(d: &QueueDemand) -> Tokens {
    let slo = d.slo.as_secs_f64();
    let inv_slo = if slo > 0.0 { 1.0 / slo } else { f64::INFINITY };
    let raw = d.size_tokens * d.duration.as_secs_f64() * (inv_slo + d.arrival_rate.max(0.0));
    if !raw.is_finite() {
        return Tokens::MAX;
    }
    // Guard against 820.0000000001 rounding up to 821.
    libm::ceil(raw - 1e-9).max(0.0) as Tokens
}

/// Split `total` in proportion to `weights` so the parts sum to exactly
/// `total` (largest-remainder rounding, ties to the lower index).
fn proportional(weights: &[Tokens], total: Tokens) -> Vec<Tokens> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    let sum: u128 = weights.iter().map(|&w| u128::from(w)).sum();
    if sum == 0 {
        let base = total / n as u64;
        let extra = (total % n as u64) as usize;
        return (0..n).map(|i| base + u64::from(i < extra)).collect();
    }
    let mut parts: Vec<Tokens> = Vec::with_capacity(n);
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(n);
    for (i, &w) in weights.iter().enumerate() {
        let num = u128::from(w) * u128::from(total);
        parts.push((num / sum) as Tokens);
        remainders.push((num % sum, i));
    }
    let mut short = total - parts.iter().sum::<Tokens>();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, i) in remainders {
        if short == 0 {
            break;
        }
        parts[i] += 1;
        short -= 1;
    }
    parts
}

/// Give every queue its minimum, then share the surplus in proportion to the
/// minimums. The quotas always sum to `total`.
pub fn solve_quotas(demands: &[QueueDemand], total: Tokens) -> QuotaSolution {
    let minimums: Vec<Tokens> = demands.iter().map(min_tokens).collect();
    let required = minimums.iter().fold(0u64, |acc, &m| acc.saturating_add(m));
    if required > total {
        return QuotaSolution {
            quotas: proportional(&minimums, total),
            minimums,
            infeasible: Some(Infeasible { required, available: total }),
        };
    }
    let surplus = proportional(&minimums, total - required);
    let quotas = minimums.iter().zip(&surplus).map(|(m, s)| m + s).collect();
    QuotaSolution { quotas, minimums, infeasible: None }
}
