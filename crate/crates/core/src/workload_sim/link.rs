//! Store-and-forward transfers limited by pod policies and link capacity.

use std::collections::BTreeMap;

use crate::cluster::RateLimit;

/// One side of a transfer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    /// Unique pod key, `namespace/podId`.
    pub pod: String,
    pub node: String,
    pub ingress: RateLimit,
    pub egress: RateLimit,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Resource {
    Egress(String),
    Ingress(String),
    Link(String, String),
}

/// FIFO busy-until bookkeeping for the constrained resource of each transfer.
#[derive(Debug, Clone, Default)]
pub struct LinkModel {
    busy_until: BTreeMap<Resource, u64>,
}

/// Microseconds to push `bits` through `rate_mbps`.
pub fn serialization_us(bits: u64, rate_mbps: u64) -> u64 {
    bits.div_ceil(rate_mbps.max(1))
}

impl LinkModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Arrival time of a `bits`-sized message sent at `start_us`. The rate is
    /// the minimum of the sender's egress limit, the receiver's ingress limit
    /// and the capacity of the link between their nodes (`None` within a
    /// node); transfers queue FIFO on whichever of those is the bottleneck.
    pub fn transfer_complete_time(
        &mut self,
        bits: u64,
        src: &Endpoint,
        dst: &Endpoint,
        link_capacity_mbps: Option<u64>,
        start_us: u64,
    ) -> u64 {
        let mut best: Option<(u64, Resource)> = None;
        let mut consider = |rate: RateLimit, res: Resource| {
            if let RateLimit::Mbps(r) = rate {
                if best.as_ref().is_none_or(|(b, _)| r < *b) {
                    best = Some((r, res));
                }
            }
        };
        consider(src.egress, Resource::Egress(src.pod.clone()));
        consider(dst.ingress, Resource::Ingress(dst.pod.clone()));
        if let Some(cap) = link_capacity_mbps {
            consider(
                RateLimit::Mbps(cap),
                Resource::Link(src.node.clone(), dst.node.clone()),
            );
        }
        let Some((rate, res)) = best else {
            return start_us;
        };
        let busy = self.busy_until.entry(res).or_insert(0);
        let begin = start_us.max(*busy);
        let end = begin + serialization_us(bits, rate);
        *busy = end;
        end
    }
}
