//! Young and older-generation collections over the simulated heap.
//!
//! Pause cost is modeled as `scan_cost * scanned + copy_cost * copied`.
//! Young collections scan every resident young byte and evacuate every
//! survivor, either within the survivor space or into generation 1; the
//! promoted bytes are a subset of the copied bytes. Older generations are
//! collected one at a time: all resident bytes are scanned and the live ones
//! compacted in place. There is no promotion between older generations.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Result, SimError};
use crate::heap::{Heap, HeapObject, ObjId, MAX_AGE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CollectionKind {
    Young,
    Old(usize),
}

impl fmt::Display for CollectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CollectionKind::Young => f.write_str("young"),
            CollectionKind::Old(k) => write!(f, "gen-{k}"),
        }
    }
}

impl std::str::FromStr for CollectionKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "young" {
            return Ok(CollectionKind::Young);
        }
        s.strip_prefix("gen-")
            .and_then(|k| k.parse().ok())
            .map(CollectionKind::Old)
            .ok_or_else(|| SimError::InvalidConfig(format!("unknown collection kind {s:?}")))
    }
}

impl Serialize for CollectionKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CollectionKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauseRecord {
    /// 1-based collection ordinal.
    pub index: u64,
    pub kind: CollectionKind,
    pub scanned_bytes: u64,
    pub copied_bytes: u64,
    pub promoted_bytes: u64,
    pub modeled_ms: f64,
    pub survivor_threshold_at_start: u8,
}

/// Smallest age `a` whose cumulative survivor bytes (ages `1..=a`) exceed
/// `fraction * survivor_capacity`; `max_threshold` if no age does.
pub fn tenuring_threshold(
    bytes_by_age: &[u64],
    survivor_capacity: u64,
    fraction: f64,
    max_threshold: u8,
) -> u8 {
    let desired = (survivor_capacity as f64 * fraction) as u64;
    let mut cumulative = 0u64;
    for (age, &bytes) in bytes_by_age.iter().enumerate().skip(1) {
        cumulative += bytes;
        if cumulative > desired {
            return (age as u8).clamp(1, max_threshold);
        }
    }
    max_threshold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ergonomics {
    survivor_threshold: u8,
    max_tenuring_threshold: u8,
    pub target_survivor_fraction: f64,
}

impl Ergonomics {
    pub fn new(max_tenuring_threshold: u8, target_survivor_fraction: f64) -> Self {
        Self {
            survivor_threshold: max_tenuring_threshold,
            max_tenuring_threshold,
            target_survivor_fraction,
        }
    }

    pub fn threshold(&self) -> u8 {
        self.survivor_threshold
    }

    pub fn update(&mut self, bytes_by_age: &[u64], survivor_capacity: u64) -> u8 {
        self.survivor_threshold = tenuring_threshold(
            bytes_by_age,
            survivor_capacity,
            self.target_survivor_fraction,
            self.max_tenuring_threshold,
        );
        self.survivor_threshold
    }
}

/// Result of a young collection whose promoted objects still have to be
/// installed in generation 1.
#[derive(Debug, Clone)]
pub struct YoungCollection {
    pub record: PauseRecord,
    pub pending_promotion: Vec<ObjId>,
}

#[derive(Debug, Clone)]
pub struct GcEngine {
    ergonomics: Ergonomics,
    collections: u64,
}

impl GcEngine {
    pub fn new(ergonomics: Ergonomics) -> Self {
        Self {
            ergonomics,
            collections: 0,
        }
    }

    pub fn ergonomics(&self) -> &Ergonomics {
        &self.ergonomics
    }

    pub fn collections(&self) -> u64 {
        self.collections
    }

    /// Collects generation 0. Every surviving object is aged and reported to
    /// `on_survivor` before it is moved.
    pub fn collect_young(
        &mut self,
        heap: &mut Heap,
        mut on_survivor: impl FnMut(&HeapObject),
    ) -> YoungCollection {
        self.collections += 1;
        let threshold = self.ergonomics.threshold();
        let clock = heap.clock();
        let survivor_capacity = heap.config().survivor_capacity;
        let residents = heap.take_residents(0);

        let mut scanned = 0u64;
        let mut bytes_by_age = [0u64; MAX_AGE as usize + 1];
        let mut retained = Vec::new();
        let mut promoted = Vec::new();
        let mut promoted_bytes = 0u64;
        {
            let objects = heap.objects_mut();
            for id in residents {
                let obj = &mut objects[id as usize];
                scanned += obj.size;
                if !obj.is_live_at(clock) {
                    obj.collected = true;
                    continue;
                }
                obj.header = obj.header.aged();
                on_survivor(obj);
                let age = obj.header.age();
                bytes_by_age[usize::from(age)] += obj.size;
                if age >= threshold {
                    promoted.push(id);
                    promoted_bytes += obj.size;
                } else {
                    retained.push((id, obj.size));
                }
            }
        }

        // Survivor-space overflow is promoted in walk order.
        let mut kept_bytes = 0u64;
        for (id, size) in retained {
            if kept_bytes + size <= survivor_capacity {
                kept_bytes += size;
                heap.place(0, id);
            } else {
                promoted.push(id);
                promoted_bytes += size;
            }
        }
        let copied = kept_bytes + promoted_bytes;

        self.ergonomics.update(&bytes_by_age, survivor_capacity);
        let record = PauseRecord {
            index: self.collections,
            kind: CollectionKind::Young,
            scanned_bytes: scanned,
            copied_bytes: copied,
            promoted_bytes,
            modeled_ms: heap.config().pause_ms(scanned, copied),
            survivor_threshold_at_start: threshold,
        };
        YoungCollection {
            record,
            pending_promotion: promoted,
        }
    }

    /// Collects older generation `k` by compacting its live objects in place.
    pub fn collect_generation(
        &mut self,
        heap: &mut Heap,
        k: usize,
        mut on_survivor: impl FnMut(&HeapObject),
    ) -> PauseRecord {
        assert!(k >= 1 && k <= heap.max_gen(), "no older generation {k}");
        self.collections += 1;
        let clock = heap.clock();
        let residents = heap.take_residents(k);
        let mut scanned = 0u64;
        let mut survivors = Vec::new();
        {
            let objects = heap.objects_mut();
            for id in residents {
                let obj = &mut objects[id as usize];
                scanned += obj.size;
                if !obj.is_live_at(clock) {
                    obj.collected = true;
                    continue;
                }
                obj.header = obj.header.aged();
                on_survivor(obj);
                survivors.push(id);
            }
        }
        let mut copied = 0u64;
        for id in survivors {
            copied += heap.object(id).expect("resident").size;
            heap.place(k, id);
        }
        PauseRecord {
            index: self.collections,
            kind: CollectionKind::Old(k),
            scanned_bytes: scanned,
            copied_bytes: copied,
            promoted_bytes: 0,
            modeled_ms: heap.config().pause_ms(scanned, copied),
            survivor_threshold_at_start: self.ergonomics.threshold(),
        }
    }
}

/// Installs promoted objects into generation 1.
pub fn install_promoted(heap: &mut Heap, pending: &[ObjId]) -> Result<()> {
    let needed: u64 = pending
        .iter()
        .map(|&id| heap.object(id).expect("resident").size)
        .sum();
    let free = heap.generation(1).free();
    if needed > free {
        return Err(SimError::HeapExhausted {
            generation: 1,
            needed,
            free,
        });
    }
    for &id in pending {
        heap.place(1, id);
    }
    Ok(())
}

/// Bytes awaiting promotion.
pub fn pending_bytes(heap: &Heap, pending: &[ObjId]) -> u64 {
    pending
        .iter()
        .map(|&id| heap.object(id).expect("resident").size)
        .sum()
}
