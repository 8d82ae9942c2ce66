//! Online object-lifetime profiling.
//!
//! Each mutator thread keeps a 16-bit context summary: the wrapping sum of
//! the hashes of the profiled methods currently on its stack. An allocation
//! context concatenates that summary with the 16-bit allocation-site id, and
//! the lifetime table counts, per context, how many objects were allocated and
//! how many survived `k` collections.

mod collision;
mod table;

pub use collision::{CollisionReport, CollisionTracker};
pub use table::{
    full_aggregate_bytes, table_size_bytes, theoretical_full_context_bytes, LifetimeEntry,
    LifetimeTable, SiteMode, TableKey, WorkerTable, COUNTER_WIDTH_BYTES,
};

use serde::{Deserialize, Serialize};

const FNV_OFFSET: u32 = 0x811C_9DC5;
const FNV_PRIME: u32 = 0x0100_0193;

fn fnv1a(mut h: u32, bytes: &[u8]) -> u32 {
    for &b in bytes {
        h ^= u32::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn fold16(h: u32) -> u16 {
    ((h >> 16) ^ (h & 0xFFFF)) as u16
}

/// Stable 16-bit identifier of a method signature.
pub fn method_hash(signature: &str) -> u16 {
    fold16(fnv1a(FNV_OFFSET, signature.as_bytes()))
}

/// Stable 16-bit identifier of an allocation site (signature + line).
pub fn site_id(signature: &str, line: u32) -> u16 {
    let h = fnv1a(FNV_OFFSET, signature.as_bytes());
    let h = fnv1a(h, b":");
    fold16(fnv1a(h, line.to_string().as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AllocationContext {
    pub site_id: u16,
    pub summary: u16,
}

impl AllocationContext {
    pub const fn new(site_id: u16, summary: u16) -> Self {
        Self { site_id, summary }
    }

    /// Summary in the high half, site id in the low half.
    pub const fn combined(self) -> u32 {
        (self.summary as u32) << 16 | self.site_id as u32
    }

    pub const fn from_combined(raw: u32) -> Self {
        Self {
            site_id: raw as u16,
            summary: (raw >> 16) as u16,
        }
    }
}

/// Per-thread context summary.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ThreadContextState {
    pub thread_id: u32,
    summary: u16,
    /// Hashes of the profiled frames currently active. Only used to check the
    /// incremental summary; the encoder itself never reads it.
    active_frames: Vec<u16>,
}

impl ThreadContextState {
    pub fn new(thread_id: u32) -> Self {
        Self {
            thread_id,
            ..Self::default()
        }
    }

    pub fn summary(&self) -> u16 {
        self.summary
    }

    pub fn enter_method(&mut self, hash: u16) {
        self.summary = self.summary.wrapping_add(hash);
        self.active_frames.push(hash);
    }

    pub fn exit_method(&mut self, hash: u16) {
        self.summary = self.summary.wrapping_sub(hash);
        if let Some(pos) = self.active_frames.iter().rposition(|&h| h == hash) {
            self.active_frames.remove(pos);
        }
    }

    pub fn current_context(&self, site_id: u16) -> AllocationContext {
        AllocationContext::new(site_id, self.summary)
    }

    pub fn active_frames(&self) -> &[u16] {
        &self.active_frames
    }

    /// Whether the incremental summary equals the sum over active frames.
    pub fn is_consistent(&self) -> bool {
        let sum = self
            .active_frames
            .iter()
            .fold(0u16, |acc, &h| acc.wrapping_add(h));
        sum == self.summary
    }
}
