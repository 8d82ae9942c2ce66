//! Simulated managed heap.
//!
//! Objects are bookkeeping records: a packed header word, a size, and the
//! allocation-clock tick at which they become unreachable. The allocation
//! clock counts bytes allocated so far and is the only notion of time the
//! simulator has. An object is live at clock `t` iff `t < death_tick`.
//!
//! Generation 0 is the young generation; generations `1..=G` are the older
//! lifetime classes.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

pub const MIB: u64 = 1 << 20;

/// Largest age representable in the 4-bit header age field.
pub const MAX_AGE: u8 = 15;

/// 64-bit object header.
///
/// ```text
///  63                              32 31                8  7  6   3 2   0
/// +----------------------------------+-------------------+---+-----+-----+
/// |        allocation context        |   identity hash   | - | age | lock|
/// +----------------------------------+-------------------+---+-----+-----+
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ObjectHeader(u64);

impl ObjectHeader {
    const LOCK_MASK: u64 = 0b111;
    const AGE_SHIFT: u32 = 3;
    const AGE_MASK: u64 = 0xF << Self::AGE_SHIFT;
    const HASH_SHIFT: u32 = 8;
    const HASH_MASK: u64 = 0xFF_FFFF << Self::HASH_SHIFT;
    const CONTEXT_SHIFT: u32 = 32;
    const LOW_MASK: u64 = 0xFFFF_FFFF;

    pub const MAX_LOCK_BITS: u8 = 0b111;
    pub const MAX_IDENTITY_HASH: u32 = 0xFF_FFFF;
    /// Lock-bit pattern of a biased-locked object.
    pub const BIASED_PATTERN: u8 = 0b101;

    pub fn pack(lock_bits: u8, age: u8, identity_hash: u32, alloc_context: u32) -> Result<Self> {
        if lock_bits > Self::MAX_LOCK_BITS {
            return Err(SimError::FieldOutOfRange {
                field: "lock_bits",
                value: lock_bits.into(),
                max: Self::MAX_LOCK_BITS.into(),
            });
        }
        if age > MAX_AGE {
            return Err(SimError::FieldOutOfRange {
                field: "age",
                value: age.into(),
                max: MAX_AGE.into(),
            });
        }
        if identity_hash > Self::MAX_IDENTITY_HASH {
            return Err(SimError::FieldOutOfRange {
                field: "identity_hash",
                value: identity_hash.into(),
                max: Self::MAX_IDENTITY_HASH.into(),
            });
        }
        Ok(Self(
            u64::from(lock_bits)
                | u64::from(age) << Self::AGE_SHIFT
                | u64::from(identity_hash) << Self::HASH_SHIFT
                | u64::from(alloc_context) << Self::CONTEXT_SHIFT,
        ))
    }

    pub const fn from_raw(raw: u64) -> Self {
        Self(raw)
    }

    pub const fn raw(self) -> u64 {
        self.0
    }

    pub const fn lock_bits(self) -> u8 {
        (self.0 & Self::LOCK_MASK) as u8
    }

    pub const fn age(self) -> u8 {
        ((self.0 & Self::AGE_MASK) >> Self::AGE_SHIFT) as u8
    }

    pub const fn identity_hash(self) -> u32 {
        ((self.0 & Self::HASH_MASK) >> Self::HASH_SHIFT) as u32
    }

    pub const fn alloc_context(self) -> u32 {
        (self.0 >> Self::CONTEXT_SHIFT) as u32
    }

    pub const fn is_biased(self) -> bool {
        self.lock_bits() == Self::BIASED_PATTERN
    }

    /// Replaces the upper 32 bits; the lower word is left untouched.
    #[must_use]
    pub const fn install_context(self, alloc_context: u32) -> Self {
        Self((self.0 & Self::LOW_MASK) | (alloc_context as u64) << Self::CONTEXT_SHIFT)
    }

    pub fn with_age(self, age: u8) -> Result<Self> {
        if age > MAX_AGE {
            return Err(SimError::FieldOutOfRange {
                field: "age",
                value: age.into(),
                max: MAX_AGE.into(),
            });
        }
        Ok(Self(
            (self.0 & !Self::AGE_MASK) | u64::from(age) << Self::AGE_SHIFT,
        ))
    }

    /// Age after surviving one more collection, saturating at [`MAX_AGE`].
    #[must_use]
    pub const fn aged(self) -> Self {
        let age = self.age();
        if age >= MAX_AGE {
            self
        } else {
            Self((self.0 & !Self::AGE_MASK) | ((age + 1) as u64) << Self::AGE_SHIFT)
        }
    }

    #[must_use]
    const fn with_lock_bits(self, bits: u8) -> Self {
        Self((self.0 & !Self::LOCK_MASK) | (bits as u64 & Self::LOCK_MASK))
    }
}

/// Header word stored in place of the allocation context by a biased lock.
pub const fn thread_marker(thread: u32) -> u32 {
    0x8000_0000 | (thread & 0x7FFF_FFFF)
}

pub type ObjId = u64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeapObject {
    pub id: ObjId,
    pub size: u64,
    pub death_tick: u64,
    pub header: ObjectHeader,
    pub resident_gen: usize,
    /// Cleared once the object is biased-locked or if its site is not instrumented.
    pub profiled: bool,
    pub collected: bool,
}

impl HeapObject {
    pub fn is_live_at(&self, clock: u64) -> bool {
        clock < self.death_tick
    }

    /// Overwrites the header's upper word with a thread marker. Profiling data
    /// stored there is lost for good.
    pub fn bias_lock(&mut self, thread: u32) {
        self.header = self
            .header
            .with_lock_bits(ObjectHeader::BIASED_PATTERN)
            .install_context(thread_marker(thread));
        self.profiled = false;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeapConfig {
    /// Number of older generations (`G`).
    pub num_generations: usize,
    pub young_capacity: u64,
    pub gen_capacity: u64,
    pub survivor_capacity: u64,
    pub max_tenuring_threshold: u8,
    /// Modeled milliseconds per scanned byte.
    pub scan_cost: f64,
    /// Modeled milliseconds per copied byte.
    pub copy_cost: f64,
}

impl Default for HeapConfig {
    fn default() -> Self {
        Self {
            num_generations: 4,
            young_capacity: 32 * MIB,
            gen_capacity: 64 * MIB,
            survivor_capacity: 4 * MIB,
            max_tenuring_threshold: MAX_AGE,
            scan_cost: 1e-6,
            copy_cost: 5e-6,
        }
    }
}

impl HeapConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(SimError::InvalidConfig(msg.to_owned()));
        if self.num_generations == 0 || self.num_generations > usize::from(u8::MAX) {
            return bad("number of older generations must be in [1, 255]");
        }
        if self.young_capacity == 0 || self.gen_capacity == 0 || self.survivor_capacity == 0 {
            return bad("all capacities must be > 0");
        }
        if self.survivor_capacity > self.young_capacity {
            return bad("survivor space cannot exceed the young generation");
        }
        if !(1..=MAX_AGE).contains(&self.max_tenuring_threshold) {
            return bad("max tenuring threshold must be in [1, 15]");
        }
        if !(self.scan_cost >= 0.0 && self.copy_cost >= 0.0) {
            return bad("pause cost coefficients must be non-negative");
        }
        Ok(())
    }

    pub fn pause_ms(&self, scanned: u64, copied: u64) -> f64 {
        self.scan_cost * scanned as f64 + self.copy_cost * copied as f64
    }
}

#[derive(Debug, Clone)]
pub struct Generation {
    pub capacity: u64,
    pub occupancy: u64,
    /// Resident objects in placement order.
    pub residents: Vec<ObjId>,
}

impl Generation {
    fn new(capacity: u64) -> Self {
        Self {
            capacity,
            occupancy: 0,
            residents: Vec::new(),
        }
    }

    pub fn free(&self) -> u64 {
        self.capacity - self.occupancy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocOutcome {
    Allocated(ObjId),
    /// The target generation is full; collect it and retry.
    CollectionNeeded(usize),
}

#[derive(Debug, Clone)]
pub struct Heap {
    config: HeapConfig,
    generations: Vec<Generation>,
    objects: Vec<HeapObject>,
    clock: u64,
    peak_occupancy: u64,
}

impl Heap {
    /// Young generation plus `G` older generations of `gen_capacity` each.
    pub fn new(config: HeapConfig) -> Result<Self> {
        config.validate()?;
        let old = vec![config.gen_capacity; config.num_generations];
        Ok(Self::with_old_capacities(config, &old))
    }

    /// Classic two-generation layout: the `G` older generations are fused
    /// into one old generation so the total heap size stays the same.
    pub fn two_generation(config: HeapConfig) -> Result<Self> {
        config.validate()?;
        let old = config.gen_capacity * config.num_generations as u64;
        Ok(Self::with_old_capacities(config, &[old]))
    }

    fn with_old_capacities(config: HeapConfig, old: &[u64]) -> Self {
        let mut generations = vec![Generation::new(config.young_capacity)];
        generations.extend(old.iter().map(|&cap| Generation::new(cap)));
        Self {
            config,
            generations,
            objects: Vec::new(),
            clock: 0,
            peak_occupancy: 0,
        }
    }

    pub fn config(&self) -> &HeapConfig {
        &self.config
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    /// Index of the oldest generation.
    pub fn max_gen(&self) -> usize {
        self.generations.len() - 1
    }

    pub fn generation(&self, index: usize) -> &Generation {
        &self.generations[index]
    }

    pub fn generations(&self) -> &[Generation] {
        &self.generations
    }

    pub fn object(&self, id: ObjId) -> Option<&HeapObject> {
        self.objects.get(id as usize)
    }

    pub fn object_mut(&mut self, id: ObjId) -> Option<&mut HeapObject> {
        self.objects.get_mut(id as usize)
    }

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    pub fn occupancy(&self) -> u64 {
        self.generations.iter().map(|g| g.occupancy).sum()
    }

    pub fn peak_occupancy(&self) -> u64 {
        self.peak_occupancy
    }

    /// Places a new object in `gen_index`, or reports which generation must
    /// be collected first.
    pub fn allocate(
        &mut self,
        gen_index: usize,
        size: u64,
        death_tick: u64,
        alloc_context: Option<u32>,
    ) -> Result<AllocOutcome> {
        if size == 0 {
            return Err(SimError::InvalidConfig(
                "allocation size must be > 0".into(),
            ));
        }
        if gen_index > self.max_gen() {
            return Err(SimError::FieldOutOfRange {
                field: "generation",
                value: gen_index as u64,
                max: self.max_gen() as u64,
            });
        }
        let gen = &self.generations[gen_index];
        if size > gen.capacity {
            return Err(SimError::Unsatisfiable {
                size,
                generation: gen_index,
                capacity: gen.capacity,
            });
        }
        if size > gen.free() {
            return Ok(AllocOutcome::CollectionNeeded(gen_index));
        }

        let id = self.objects.len() as ObjId;
        let identity_hash = (id.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 40) as u32;
        let header = ObjectHeader::pack(0, 0, identity_hash, alloc_context.unwrap_or(0))?;
        self.objects.push(HeapObject {
            id,
            size,
            death_tick,
            header,
            resident_gen: gen_index,
            profiled: alloc_context.is_some(),
            collected: false,
        });
        let gen = &mut self.generations[gen_index];
        gen.occupancy += size;
        gen.residents.push(id);
        self.clock += size;
        self.peak_occupancy = self.peak_occupancy.max(self.occupancy());
        Ok(AllocOutcome::Allocated(id))
    }

    pub fn bias_lock(&mut self, id: ObjId, thread: u32) -> Result<()> {
        let obj = self
            .objects
            .get_mut(id as usize)
            .ok_or(SimError::Undeclared {
                what: "object",
                id: id as u32,
            })?;
        obj.bias_lock(thread);
        Ok(())
    }

    /// Detaches the resident list of a generation so a collector can walk it.
    pub(crate) fn take_residents(&mut self, gen_index: usize) -> Vec<ObjId> {
        let gen = &mut self.generations[gen_index];
        gen.occupancy = 0;
        std::mem::take(&mut gen.residents)
    }

    /// Re-attaches an object to a generation after a collection moved it.
    pub(crate) fn place(&mut self, gen_index: usize, id: ObjId) {
        let size = self.objects[id as usize].size;
        self.objects[id as usize].resident_gen = gen_index;
        let gen = &mut self.generations[gen_index];
        gen.occupancy += size;
        gen.residents.push(id);
    }

    pub(crate) fn objects_mut(&mut self) -> &mut [HeapObject] {
        &mut self.objects
    }

    /// Bytes held by uncollected objects, live or dead.
    pub fn resident_bytes(&self) -> u64 {
        self.objects
            .iter()
            .filter(|o| !o.collected)
            .map(|o| o.size)
            .sum()
    }

    pub fn live_bytes(&self) -> u64 {
        self.objects
            .iter()
            .filter(|o| !o.collected && o.is_live_at(self.clock))
            .map(|o| o.size)
            .sum()
    }
}
