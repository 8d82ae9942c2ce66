use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

/// Records, for every `(site, summary)` pair, the distinct true calling
/// contexts (profiled frame sequences) that produced it.
#[derive(Debug, Clone, Default)]
pub struct CollisionTracker {
    paths: HashMap<(u16, u16), Vec<Vec<u32>>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CollisionReport {
    pub sites: u64,
    /// Sites where two different frame sequences share a summary.
    pub sequence_colliding_sites: u64,
    /// Sites where two different frame multisets share a summary.
    pub multiset_colliding_sites: u64,
    pub sequence_rate: f64,
    pub multiset_rate: f64,
}

impl CollisionTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// `frames` are the method ids of the profiled frames, outermost first.
    pub fn record(&mut self, site: u16, summary: u16, frames: &[u32]) {
        let seen = self.paths.entry((site, summary)).or_default();
        if !seen.iter().any(|p| p == frames) {
            seen.push(frames.to_vec());
        }
    }

    pub fn report(&self) -> CollisionReport {
        let mut per_site: BTreeMap<u16, (bool, bool)> = BTreeMap::new();
        for (&(site, _), paths) in &self.paths {
            let flags = per_site.entry(site).or_default();
            if paths.len() >= 2 {
                flags.0 = true;
                let multisets: BTreeSet<Vec<u32>> = paths
                    .iter()
                    .map(|p| {
                        let mut m = p.clone();
                        m.sort_unstable();
                        m
                    })
                    .collect();
                if multisets.len() >= 2 {
                    flags.1 = true;
                }
            }
        }
        let sites = per_site.len() as u64;
        let seq = per_site.values().filter(|f| f.0).count() as u64;
        let multi = per_site.values().filter(|f| f.1).count() as u64;
        let rate = |n: u64| {
            if sites == 0 {
                0.0
            } else {
                n as f64 / sites as f64
            }
        };
        CollisionReport {
            sites,
            sequence_colliding_sites: seq,
            multiset_colliding_sites: multi,
            sequence_rate: rate(seq),
            multiset_rate: rate(multi),
        }
    }
}
