//! Single serialized host-to-device channel.

use serde::{Deserialize, Serialize};

use crate::cost::link_occupancy_ns;
use crate::model::HardwareProfile;
use crate::time::SimTime;

/// Transfers occupy the channel back to back in enqueue order; the fixed
/// latency is added on top of each completion but does not hold the channel.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkState {
    busy_until_ns: u64,
    pub cumulative_bytes: u64,
    pub transfers: u64,
    pub last_completion: SimTime,
}

impl LinkState {
    /// Queue a transfer at `now` and return its completion time.
    pub fn enqueue(&mut self, bytes: u64, now: SimTime, hw: &HardwareProfile) -> SimTime {
        let start = self.busy_until_ns.max(now.as_micros() * 1_000);
        self.busy_until_ns = start + link_occupancy_ns(bytes, hw);
        let done_ns = self.busy_until_ns + hw.link_fixed_latency.as_micros() * 1_000;
        self.cumulative_bytes += bytes;
        self.transfers += 1;
        let done = SimTime(done_ns.div_ceil(1_000));
        debug_assert!(done >= self.last_completion);
        self.last_completion = done;
        done
    }

    pub fn busy_until(&self) -> SimTime {
        SimTime(self.busy_until_ns.div_ceil(1_000))
    }
}
