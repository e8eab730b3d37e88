//! Two-phase batch generation over priority-ordered queues.
//!
//! Phase 1 offers each queue its own available quota. A queue that empties
//! hands its unspent budget to a shared leftover pool; a queue that stops on
//! a request it cannot fit keeps (strands) the rest. Phase 2 walks the queues
//! again in priority order and lets them draw on the pool until it runs dry.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::model::{RequestId, Tokens};

/// Why the memory check refused a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Blocked {
    /// The request would fit if its adapter did not have to be loaded.
    AdapterMemory,
    KvMemory,
}

/// Admission hooks supplied by the engine.
pub trait AdmissionOracle {
    /// Quota tokens the request would borrow if admitted now.
    fn need(&self, id: RequestId) -> Tokens;
    /// Reserve device memory for the request; a refusal leaves no trace.
    fn reserve(&mut self, id: RequestId) -> Result<(), Blocked>;
    /// Whether `candidate` may jump ahead of the memory-blocked `head`.
    fn bypass_allowed(&mut self, _head: RequestId, _candidate: RequestId) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BypassSettings {
    pub enabled: bool,
    /// How many requests behind the blocked head are examined.
    pub scan_depth: usize,
}

impl BypassSettings {
    pub const OFF: BypassSettings = BypassSettings { enabled: false, scan_depth: 0 };
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Admitted {
    pub id: RequestId,
    pub queue: usize,
    pub need: Tokens,
    /// Quota sources: `(queue, tokens)`; phase-2 admissions are charged to
    /// the queues that fed the leftover pool.
    pub charges: Vec<(usize, Tokens)>,
    /// The head this request jumped over, if admitted by bypass.
    pub bypassed: Option<RequestId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BatchOutcome {
    pub admitted: Vec<Admitted>,
    pub budgets: Vec<Tokens>,
    /// Tokens consumed per queue across both phases.
    pub consumed: Vec<Tokens>,
    /// Phase-1 budget kept by queues that did not drain.
    pub stranded: Vec<Tokens>,
    /// Pool left after phase 2.
    pub leftover: Tokens,
}

impl BatchOutcome {
    /// `sum(budgets) == sum(consumed) + leftover + sum(stranded)`.
    pub fn conserves_quota(&self) -> bool {
        let budget: u128 = self.budgets.iter().map(|&b| u128::from(b)).sum();
        let consumed: u128 = self.consumed.iter().map(|&b| u128::from(b)).sum();
        let stranded: u128 = self.stranded.iter().map(|&b| u128::from(b)).sum();
        budget == consumed + u128::from(self.leftover) + stranded
    }

    pub fn ids(&self) -> Vec<RequestId> {
        self.admitted.iter().map(|a| a.id).collect()
    }
}

struct Pool {
    /// Contributions in arrival order: `(queue, remaining tokens)`.
    sources: VecDeque<(usize, Tokens)>,
}

impl Pool {
    fn total(&self) -> Tokens {
        self.sources.iter().map(|s| s.1).sum()
    }

    fn draw(&mut self, mut amount: Tokens) -> Vec<(usize, Tokens)> {
        let mut charges = Vec::new();
        while amount > 0 {
            let Some(front) = self.sources.front_mut() else { break };
            let take = front.1.min(amount);
            charges.push((front.0, take));
            front.1 -= take;
            amount -= take;
            if front.1 == 0 {
                self.sources.pop_front();
            }
        }
        charges
    }
}

enum Budget<'a> {
    Own { queue: usize, remaining: Tokens },
    Shared(&'a mut Pool),
}

impl Budget<'_> {
    fn remaining(&self) -> Tokens {
        match self {
            Budget::Own { remaining, .. } => *remaining,
            Budget::Shared(p) => p.total(),
        }
    }

    fn take(&mut self, amount: Tokens) -> Vec<(usize, Tokens)> {
        match self {
            Budget::Own { queue, remaining } => {
                *remaining -= amount;
                alloc::vec![(*queue, amount)]
            }
            Budget::Shared(p) => p.draw(amount),
        }
    }
}

/// Admit requests from the head of `queue` while they fit. Returns tokens consumed.
fn put_batch<O: AdmissionOracle>(
    q: usize,
    queue: &mut VecDeque<RequestId>,
    mut budget: Budget<'_>,
    oracle: &mut O,
    bypass: BypassSettings,
    out: &mut Vec<Admitted>,
) -> Tokens {
    let mut consumed = 0;
    while let Some(&head) = queue.front() {
        let need = oracle.need(head);
        if need > budget.remaining() {
            break;
        }
        match oracle.reserve(head) {
            Ok(()) => {
                queue.pop_front();
                consumed += need;
                let charges = budget.take(need);
                out.push(Admitted { id: head, queue: q, need, charges, bypassed: None });
            }
            Err(Blocked::AdapterMemory) if bypass.enabled => {
                let mut i = 1;
                let mut scanned = 0;
                while i < queue.len() && scanned < bypass.scan_depth {
                    scanned += 1;
                    let cand = queue[i];
                    let cand_need = oracle.need(cand);
                    if cand_need <= budget.remaining()
                        && oracle.bypass_allowed(head, cand)
                        && oracle.reserve(cand).is_ok()
                    {
                        queue.remove(i);
                        consumed += cand_need;
                        let charges = budget.take(cand_need);
                        out.push(Admitted { id: cand, queue: q, need: cand_need, charges, bypassed: Some(head) });
                    } else {
                        i += 1;
                    }
                }
                break;
            }
            Err(_) => break,
        }
    }
    consumed
}

/// Build one batch. `budgets[q]` is queue `q`'s currently available quota;
/// queues are in priority order (index 0 first).
pub fn generate_batch<O: AdmissionOracle>(
    queues: &mut [VecDeque<RequestId>],
    budgets: &[Tokens],
    oracle: &mut O,
    bypass: BypassSettings,
) -> BatchOutcome {
    assert_eq!(queues.len(), budgets.len());
    let n = queues.len();
    let mut admitted = Vec::new();
    let mut consumed = alloc::vec![0; n];
    let mut stranded = alloc::vec![0; n];
    let mut pool = Pool { sources: VecDeque::new() };

    for q in 0..n {
        let used = put_batch(
            q,
            &mut queues[q],
            Budget::Own { queue: q, remaining: budgets[q] },
            oracle,
            bypass,
            &mut admitted,
        );
        consumed[q] = used;
        let unused = budgets[q] - used;
        if queues[q].is_empty() {
            if unused > 0 {
                pool.sources.push_back((q, unused));
            }
        } else {
            stranded[q] = unused;
        }
    }

    for q in 0..n {
        if pool.total() == 0 {
            break;
        }
        consumed[q] += put_batch(q, &mut queues[q], Budget::Shared(&mut pool), oracle, bypass, &mut admitted);
    }

    BatchOutcome { admitted, budgets: budgets.to_vec(), consumed, stranded, leftover: pool.total() }
}
