//! Select groups: weighted buckets chosen per flow by hashing the flow key.

use crate::net::{FlowKey, Frame};

use super::flow::FlowAction;

pub type GroupId = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct Bucket {
    pub weight: f64,
    pub actions: Vec<FlowAction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectGroup {
    pub group_id: GroupId,
    pub buckets: Vec<Bucket>,
}

impl SelectGroup {
    /// Returns `None` for an empty bucket list.
    pub fn new(group_id: GroupId, buckets: Vec<Bucket>) -> Option<Self> {
        if buckets.is_empty() {
            None
        } else {
            Some(SelectGroup { group_id, buckets })
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        self.buckets.iter().map(|b| b.weight).collect()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the canonical flow-key bytes followed by a 64-bit avalanche
/// finalizer so the high bits are usable as a uniform fraction.
pub fn flow_hash(key: &FlowKey) -> u64 {
    let mut h = FNV_OFFSET;
    for b in key.canonical_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h = h.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    h ^= h >> 33;
    h
}

fn usable_weight(w: f64) -> f64 {
    if w.is_finite() && w > 0.0 {
        w
    } else {
        0.0
    }
}

/// Picks the bucket for `frame`: the flow hash is mapped to `[0, Σw)` and the
/// bucket whose cumulative weight range contains it wins. Zero-weight buckets
/// are never chosen unless all weights are zero, in which case bucket 0 is.
pub fn select_bucket(group: &SelectGroup, frame: &Frame) -> usize {
    select_by_hash(group, flow_hash(&frame.flow_key()))
}

pub fn select_by_hash(group: &SelectGroup, hash: u64) -> usize {
    let total: f64 = group.buckets.iter().map(|b| usable_weight(b.weight)).sum();
    if total <= 0.0 {
        return 0;
    }
    let unit = (hash >> 11) as f64 / (1u64 << 53) as f64;
    let target = unit * total;
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, b) in group.buckets.iter().enumerate() {
        let w = usable_weight(b.weight);
        if w == 0.0 {
            continue;
        }
        last_positive = i;
        cum += w;
        if target < cum {
            return i;
        }
    }
    last_positive
}
