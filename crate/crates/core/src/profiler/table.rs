use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AllocationContext;
use crate::error::{Result, SimError};

/// Bytes per lifetime counter in a real JVM table; used for size reporting.
pub const COUNTER_WIDTH_BYTES: u64 = 4;

/// Memory needed for `entries` lifetime arrays of length `n`.
pub const fn table_size_bytes(entries: u64, n: usize) -> u64 {
    entries * n as u64 * COUNTER_WIDTH_BYTES
}

/// Size of a table holding one aggregate entry for every 16-bit site id.
pub const fn full_aggregate_bytes(n: usize) -> u64 {
    table_size_bytes(1 << 16, n)
}

/// Size of a table holding one entry for every 32-bit allocation context.
pub const fn theoretical_full_context_bytes(n: usize) -> u64 {
    table_size_bytes(1 << 32, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TableKey {
    /// All contexts of one allocation site, grouped.
    Site(u16),
    /// One full 32-bit allocation context of an expanded site.
    Context(u32),
}

impl TableKey {
    pub fn site(self) -> u16 {
        match self {
            TableKey::Site(s) => s,
            TableKey::Context(c) => AllocationContext::from_combined(c).site_id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SiteMode {
    Aggregated,
    Expanded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LifetimeEntry {
    /// `counts[0]` = allocations, `counts[k]` = survivors at age `k`.
    pub counts: Vec<u64>,
    pub target_gen: u8,
}

impl LifetimeEntry {
    fn new(n: usize, target_gen: u8) -> Self {
        Self {
            counts: vec![0; n],
            target_gen,
        }
    }

    pub fn is_zeroed(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }
}

fn check_length(n: usize) -> Result<()> {
    if !(2..=64).contains(&n) {
        return Err(SimError::InvalidConfig(format!(
            "lifetime array length must be in [2, 64], got {n}"
        )));
    }
    Ok(())
}

/// Global object-lifetime distribution table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LifetimeTable {
    n: usize,
    entries: BTreeMap<TableKey, LifetimeEntry>,
    /// Expanded sites and the target generation their contexts inherit.
    expanded: BTreeMap<u16, u8>,
}

impl LifetimeTable {
    pub fn new(n: usize) -> Result<Self> {
        check_length(n)?;
        Ok(Self {
            n,
            entries: BTreeMap::new(),
            expanded: BTreeMap::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn site_entries(&self) -> usize {
        self.entries
            .keys()
            .filter(|k| matches!(k, TableKey::Site(_)))
            .count()
    }

    pub fn size_bytes(&self) -> u64 {
        table_size_bytes(self.entries.len() as u64, self.n)
    }

    pub fn mode(&self, site: u16) -> SiteMode {
        if self.expanded.contains_key(&site) {
            SiteMode::Expanded
        } else {
            SiteMode::Aggregated
        }
    }

    pub fn expanded_sites(&self) -> impl Iterator<Item = u16> + '_ {
        self.expanded.keys().copied()
    }

    /// Key that currently receives increments for `ctx`.
    pub fn key_for(&self, ctx: AllocationContext) -> TableKey {
        match self.mode(ctx.site_id) {
            SiteMode::Aggregated => TableKey::Site(ctx.site_id),
            SiteMode::Expanded => TableKey::Context(ctx.combined()),
        }
    }

    fn fresh_entry(&self, key: TableKey) -> LifetimeEntry {
        let seed = match key {
            TableKey::Site(_) => 0,
            TableKey::Context(_) => self.expanded.get(&key.site()).copied().unwrap_or(0),
        };
        LifetimeEntry::new(self.n, seed)
    }

    pub fn entry(&self, key: TableKey) -> Option<&LifetimeEntry> {
        self.entries.get(&key)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&TableKey, &LifetimeEntry)> {
        self.entries.iter()
    }

    pub(crate) fn entries_mut(&mut self) -> impl Iterator<Item = (&TableKey, &mut LifetimeEntry)> {
        self.entries.iter_mut()
    }

    /// Generation new objects of `ctx` should be allocated in.
    pub fn target_gen_for(&self, ctx: AllocationContext) -> u8 {
        let key = self.key_for(ctx);
        match self.entries.get(&key) {
            Some(e) => e.target_gen,
            None => self.fresh_entry(key).target_gen,
        }
    }

    pub fn record_allocation(&mut self, ctx: AllocationContext) {
        let key = self.key_for(ctx);
        if !self.entries.contains_key(&key) {
            let fresh = self.fresh_entry(key);
            self.entries.insert(key, fresh);
        }
        self.entries.get_mut(&key).expect("inserted above").counts[0] += 1;
    }

    /// Direct survivor increment on the global table (single-worker path).
    pub fn record_survivor(&mut self, ctx: AllocationContext, age: u32) {
        let key = self.key_for(ctx);
        let slot = clamp_age(age, self.n);
        if !self.entries.contains_key(&key) {
            let fresh = self.fresh_entry(key);
            self.entries.insert(key, fresh);
        }
        self.entries.get_mut(&key).expect("inserted above").counts[slot] += 1;
    }

    /// Switches a site to per-context tracking. The aggregate entry stops
    /// receiving increments and its target generation seeds new contexts.
    pub fn expand_site(&mut self, site: u16) {
        if self.expanded.contains_key(&site) {
            return;
        }
        let seed = self
            .entries
            .get(&TableKey::Site(site))
            .map_or(0, |e| e.target_gen);
        self.expanded.insert(site, seed);
    }

    /// Adds every worker's counters into the global table and clears them.
    pub fn merge_workers(&mut self, workers: &mut [WorkerTable]) {
        for worker in workers.iter_mut() {
            for (key, counts) in std::mem::take(&mut worker.entries) {
                if !self.entries.contains_key(&key) {
                    let fresh = self.fresh_entry(key);
                    self.entries.insert(key, fresh);
                }
                let entry = self.entries.get_mut(&key).expect("inserted above");
                for (dst, src) in entry.counts.iter_mut().zip(counts) {
                    *dst += src;
                }
            }
        }
    }

    /// Zeroes every counter; target generations persist.
    pub fn reset_counts(&mut self) {
        for entry in self.entries.values_mut() {
            entry.counts.iter_mut().for_each(|c| *c = 0);
        }
    }

    pub fn all_zeroed(&self) -> bool {
        self.entries.values().all(LifetimeEntry::is_zeroed)
    }

    /// Number of entries per target generation, index = generation.
    pub fn target_histogram(&self, generations: usize) -> Vec<u64> {
        let mut hist = vec![0; generations + 1];
        for entry in self.entries.values() {
            let g = usize::from(entry.target_gen).min(generations);
            hist[g] += 1;
        }
        hist
    }
}

fn clamp_age(age: u32, n: usize) -> usize {
    (age as usize).min(n - 1)
}

/// Survivor counters private to one GC worker for the current collection.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorkerTable {
    n: usize,
    entries: BTreeMap<TableKey, Vec<u64>>,
}

impl WorkerTable {
    pub fn new(n: usize) -> Result<Self> {
        check_length(n)?;
        Ok(Self {
            n,
            entries: BTreeMap::new(),
        })
    }

    pub fn record_survivor(&mut self, key: TableKey, age: u32) {
        let slot = clamp_age(age, self.n);
        let n = self.n;
        self.entries.entry(key).or_insert_with(|| vec![0; n])[slot] += 1;
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn counts(&self, key: TableKey) -> Option<&[u64]> {
        self.entries.get(&key).map(Vec::as_slice)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(site: u16, summary: u16) -> AllocationContext {
        AllocationContext::new(site, summary)
    }

    #[test]
    fn first_allocation_creates_site_entry() {
        let mut t = LifetimeTable::new(16).unwrap();
        t.record_allocation(ctx(7, 99));
        let e = t.entry(TableKey::Site(7)).unwrap();
        assert_eq!(e.counts[0], 1);
        assert_eq!(e.target_gen, 0);
        assert_eq!(t.len(), 1);
    }

    #[test]
    fn counts_are_exact() {
        let mut t = LifetimeTable::new(16).unwrap();
        for _ in 0..1000 {
            t.record_allocation(ctx(3, 3));
        }
        assert_eq!(t.entry(TableKey::Site(3)).unwrap().counts[0], 1000);
    }

    #[test]
    fn expanded_site_tracks_each_context() {
        let mut t = LifetimeTable::new(16).unwrap();
        t.record_allocation(ctx(5, 1));
        t.entries.get_mut(&TableKey::Site(5)).unwrap().target_gen = 1;
        let before = t.len();
        t.expand_site(5);
        t.expand_site(5);
        assert_eq!(t.len(), before);
        t.record_allocation(ctx(5, 1));
        t.record_allocation(ctx(5, 2));
        let a = t.entry(TableKey::Context(ctx(5, 1).combined())).unwrap();
        let b = t.entry(TableKey::Context(ctx(5, 2).combined())).unwrap();
        assert_eq!((a.counts[0], a.target_gen), (1, 1));
        assert_eq!((b.counts[0], b.target_gen), (1, 1));
        assert_eq!(t.entry(TableKey::Site(5)).unwrap().counts[0], 1);
        assert_eq!(t.mode(5), SiteMode::Expanded);
    }

    #[test]
    fn survivor_age_clamps_to_last_slot() {
        let mut w = WorkerTable::new(16).unwrap();
        w.record_survivor(TableKey::Site(1), 1);
        w.record_survivor(TableKey::Site(1), 20);
        let c = w.counts(TableKey::Site(1)).unwrap();
        assert_eq!(c[1], 1);
        assert_eq!(c[15], 1);
    }

    #[test]
    fn merge_adds_and_clears_workers() {
        let mut t = LifetimeTable::new(16).unwrap();
        let mut workers = vec![WorkerTable::new(16).unwrap(), WorkerTable::new(16).unwrap()];
        for w in &mut workers {
            for _ in 0..3 {
                w.record_survivor(TableKey::Site(9), 1);
            }
        }
        workers[1].record_survivor(TableKey::Site(10), 2);
        t.merge_workers(&mut workers);
        assert_eq!(t.entry(TableKey::Site(9)).unwrap().counts[1], 6);
        assert_eq!(t.entry(TableKey::Site(10)).unwrap().counts[2], 1);
        assert!(workers.iter().all(WorkerTable::is_empty));

        let snapshot = t.clone();
        t.merge_workers(&mut workers);
        assert_eq!(t, snapshot);
    }

    #[test]
    fn size_arithmetic() {
        assert_eq!(full_aggregate_bytes(8), 2 * 1024 * 1024);
        assert_eq!(theoretical_full_context_bytes(8), 32 * (1u64 << 32));
        assert_eq!(theoretical_full_context_bytes(8), 128 * (1u64 << 30));
        assert_eq!(LifetimeTable::new(8).unwrap().size_bytes(), 0);
    }

    #[test]
    fn rejects_degenerate_length() {
        assert!(LifetimeTable::new(1).is_err());
        assert!(WorkerTable::new(0).is_err());
    }
}
