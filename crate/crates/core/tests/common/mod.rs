#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rolp_core::analysis::{select_instrumented, InstrumentationPlan, MethodId};
use rolp_core::gc::{CollectionKind, PauseRecord};
use rolp_core::heap::{Heap, HeapConfig, HeapObject, ObjId, MAX_AGE, MIB};
use rolp_core::policy::{PolicyConfig, PolicyReport};
use rolp_core::profiler::{method_hash, site_id, AllocationContext, LifetimeTable, TableKey};
use rolp_core::workload::{
    generate_synthetic, replay_with, ReplayObserver, SyntheticSpec, SyntheticWorkload, TraceEvent,
};
use rolp_core::{Mode, SimConfig, WorkloadKind};

/// Heap shrunk 16x so a 10^5-allocation trace still sees hundreds of
/// collections.
pub fn scaled_config() -> SimConfig {
    SimConfig {
        heap: HeapConfig {
            num_generations: 4,
            young_capacity: 2 * MIB,
            gen_capacity: 4 * MIB,
            survivor_capacity: MIB / 4,
            ..HeapConfig::default()
        },
        ..SimConfig::default()
    }
}

pub fn scaled_workload(kind: WorkloadKind, seed: u64, allocations: u64) -> SyntheticWorkload {
    let spec = SyntheticSpec {
        event_count: allocations,
        young_turnover: 2 * MIB,
        ..SyntheticSpec::for_kind(kind, seed)
    };
    generate_synthetic(&spec).expect("valid spec")
}

#[derive(Debug, Clone)]
struct Tracked {
    size: u64,
    death_tick: u64,
    /// Full 32-bit context if the site is instrumented.
    context: Option<u32>,
    age: u8,
    locked: bool,
}

/// Recomputes every lifetime-table counter by following each object
/// individually. Shares nothing with the engine's profiler beyond the
/// static plan and the hash functions.
pub struct BruteForce {
    plan: InstrumentationPlan,
    n: usize,
    hashes: HashMap<MethodId, u16>,
    site_ids: HashMap<u32, u16>,
    stacks: HashMap<u32, Vec<(MethodId, bool)>>,
    invocations: HashMap<MethodId, u64>,
    objects: Vec<Tracked>,
    maybe_live: Vec<ObjId>,
    pending_alloc: Option<usize>,
    clock: u64,
    expanded: BTreeSet<u16>,
    counts: BTreeMap<TableKey, Vec<u64>>,
    reported: BTreeSet<ObjId>,
    pub windows: u64,
    pub collections: u64,
    pub survivors_checked: u64,
    pub errors: Vec<String>,
}

impl BruteForce {
    pub fn new(workload: &SyntheticWorkload, config: &SimConfig) -> Self {
        let program = &workload.trace.program;
        let plan = select_instrumented(program, config.max_alloc_frame, &config.packages)
            .with_hot_threshold(config.hot_threshold);
        let hashes = program
            .methods()
            .map(|m| (m.id, method_hash(&m.signature)))
            .collect();
        let site_ids = program
            .sites()
            .map(|s| {
                let sig = &program.method(s.method).unwrap().signature;
                (s.source, site_id(sig, s.line))
            })
            .collect();
        Self {
            plan,
            n: config.lifetime_slots,
            hashes,
            site_ids,
            stacks: HashMap::new(),
            invocations: HashMap::new(),
            objects: Vec::new(),
            maybe_live: Vec::new(),
            pending_alloc: None,
            clock: 0,
            expanded: BTreeSet::new(),
            counts: BTreeMap::new(),
            reported: BTreeSet::new(),
            windows: 0,
            collections: 0,
            survivors_checked: 0,
            errors: Vec::new(),
        }
    }

    fn fail(&mut self, msg: String) {
        if self.errors.len() < 20 {
            self.errors.push(msg);
        }
    }

    fn key(&self, context: u32) -> TableKey {
        let site = (context & 0xFFFF) as u16;
        if self.expanded.contains(&site) {
            TableKey::Context(context)
        } else {
            TableKey::Site(site)
        }
    }

    fn bump(&mut self, key: TableKey, slot: usize) {
        let n = self.n;
        self.counts.entry(key).or_insert_with(|| vec![0; n])[slot] += 1;
    }

    /// The engine counts an allocation only after any collection it
    /// triggered, so the count is applied when the next event arrives.
    fn flush_alloc(&mut self) {
        if let Some(i) = self.pending_alloc.take() {
            let t = &self.objects[i];
            self.clock += t.size;
            if let Some(c) = t.context {
                self.bump(self.key(c), 0);
            }
        }
    }

    fn compare(&mut self, table: &LifetimeTable, when: &str) {
        let engine: BTreeMap<TableKey, Vec<u64>> = table
            .entries()
            .filter(|(_, e)| !e.is_zeroed())
            .map(|(k, e)| (*k, e.counts.clone()))
            .collect();
        let oracle: BTreeMap<TableKey, Vec<u64>> = self
            .counts
            .iter()
            .filter(|(_, c)| c.iter().any(|&x| x > 0))
            .map(|(k, c)| (*k, c.clone()))
            .collect();
        if engine != oracle {
            let diff: Vec<_> = engine
                .keys()
                .chain(oracle.keys())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .filter(|k| engine.get(k) != oracle.get(k))
                .take(3)
                .map(|k| {
                    format!(
                        "{k:?}: engine {:?} oracle {:?}",
                        engine.get(k),
                        oracle.get(k)
                    )
                })
                .collect();
            self.fail(format!("{when} window {}: {diff:?}", self.windows));
        }
    }

    /// Context the object was allocated under, if its site is instrumented.
    pub fn context_of(&self, id: ObjId) -> Option<u32> {
        self.objects[id as usize].context
    }

    /// Compares the final, partially filled window.
    pub fn finish(&mut self, table: &LifetimeTable) {
        self.flush_alloc();
        self.compare(table, "end of run");
    }
}

impl ReplayObserver for BruteForce {
    fn on_event(&mut self, _index: usize, event: &TraceEvent) {
        self.flush_alloc();
        match *event {
            TraceEvent::Call { thread, method } => {
                let count = self.invocations.entry(method).or_insert(0);
                *count += 1;
                let profiled = self.plan.profiled_methods.contains(&method)
                    && *count >= self.plan.hot_threshold;
                self.stacks
                    .entry(thread)
                    .or_default()
                    .push((method, profiled));
            }
            TraceEvent::Return { thread, .. } => {
                self.stacks.get_mut(&thread).and_then(Vec::pop);
            }
            TraceEvent::Alloc {
                thread,
                site,
                size,
                death_tick,
            } => {
                let context = self.plan.profiled_sites.contains(&site).then(|| {
                    let summary = self
                        .stacks
                        .get(&thread)
                        .into_iter()
                        .flatten()
                        .filter(|(_, p)| *p)
                        .fold(0u16, |acc, (m, _)| acc.wrapping_add(self.hashes[m]));
                    (u32::from(summary) << 16) | u32::from(self.site_ids[&site])
                });
                self.pending_alloc = Some(self.objects.len());
                self.maybe_live.push(self.objects.len() as ObjId);
                self.objects.push(Tracked {
                    size,
                    death_tick,
                    context,
                    age: 0,
                    locked: false,
                });
            }
            TraceEvent::Lock { object, .. } => self.objects[object as usize].locked = true,
        }
    }

    fn on_survivor(&mut self, obj: &HeapObject) {
        self.survivors_checked += 1;
        let clock = self.clock;
        let Some(t) = self.objects.get_mut(obj.id as usize) else {
            return self.fail(format!("unknown object {}", obj.id));
        };
        if t.death_tick <= clock {
            return self.fail(format!("dead object {} reported as survivor", obj.id));
        }
        t.age = (t.age + 1).min(MAX_AGE);
        let (age, context, locked) = (t.age, t.context, t.locked);
        if obj.header.age() != age {
            self.fail(format!(
                "object {} age {} expected {age}",
                obj.id,
                obj.header.age()
            ));
        }
        if !self.reported.insert(obj.id) {
            self.fail(format!("object {} reported twice", obj.id));
        }
        match context {
            Some(c) if !locked => {
                if obj.header.alloc_context() != c {
                    self.fail(format!(
                        "object {} context {:#x} expected {c:#x}",
                        obj.id,
                        obj.header.alloc_context()
                    ));
                }
                let slot = usize::from(age).min(self.n - 1);
                self.bump(self.key(c), slot);
            }
            _ if obj.profiled => self.fail(format!("object {} should not be profiled", obj.id)),
            _ => {}
        }
    }

    fn on_collection(&mut self, record: &PauseRecord, heap: &Heap) {
        self.collections += 1;
        let gen = match record.kind {
            CollectionKind::Young => 0,
            CollectionKind::Old(k) => k,
        };
        let clock = self.clock;
        let objects = &self.objects;
        self.maybe_live
            .retain(|&id| objects[id as usize].death_tick > clock);
        let missed: Vec<ObjId> = self
            .maybe_live
            .iter()
            .copied()
            .filter(|&id| heap.object(id).is_some_and(|o| o.resident_gen == gen))
            .filter(|id| !self.reported.contains(id))
            .take(3)
            .collect();
        if !missed.is_empty() {
            self.fail(format!(
                "collection {} missed live objects {missed:?}",
                record.index
            ));
        }
        let bytes: u64 = self
            .reported
            .iter()
            .map(|&id| self.objects[id as usize].size)
            .sum();
        if bytes != record.copied_bytes {
            self.fail(format!(
                "collection {} copied {} but survivors total {bytes}",
                record.index, record.copied_bytes
            ));
        }
        self.reported.clear();
    }

    fn before_policy(&mut self, table: &LifetimeTable) {
        self.compare(table, "before policy");
    }

    fn after_policy(&mut self, table: &LifetimeTable, report: &PolicyReport) {
        self.windows += 1;
        if !table.all_zeroed() {
            self.fail(format!("counters not reset after window {}", self.windows));
        }
        self.counts.clear();
        self.expanded.extend(report.expanded.iter().copied());
    }
}

#[derive(Default)]
pub struct Cadence {
    pub collections: Vec<u64>,
    pub policy_after: Vec<u64>,
    last_index: u64,
    targets: BTreeMap<TableKey, u8>,
    pub problems: Vec<String>,
}

impl Cadence {
    fn check_targets(&mut self, table: &LifetimeTable) {
        for (key, entry) in table.entries() {
            if let Some(&prev) = self.targets.get(key) {
                if entry.target_gen < prev {
                    self.problems
                        .push(format!("{key:?} lowered {prev} -> {}", entry.target_gen));
                }
            }
            self.targets.insert(*key, entry.target_gen);
        }
    }
}

impl ReplayObserver for Cadence {
    fn on_collection(&mut self, record: &PauseRecord, heap: &Heap) {
        self.collections.push(record.index);
        self.last_index = record.index;
        let expected = heap
            .config()
            .pause_ms(record.scanned_bytes, record.copied_bytes);
        if record.modeled_ms != expected {
            self.problems.push(format!(
                "pause {} has {} ms extra",
                record.index,
                record.modeled_ms - expected
            ));
        }
    }

    fn before_policy(&mut self, table: &LifetimeTable) {
        self.check_targets(table);
    }

    fn after_policy(&mut self, table: &LifetimeTable, _report: &PolicyReport) {
        self.policy_after.push(self.last_index);
        if !table.all_zeroed() {
            self.problems
                .push(format!("counters survive policy run {}", self.last_index));
        }
        self.check_targets(table);
    }
}

#[derive(Default)]
pub struct LockedSurvivors {
    pub slots: Vec<u64>,
}

impl ReplayObserver for LockedSurvivors {
    fn on_survivor(&mut self, obj: &HeapObject) {
        if obj.header.is_biased() {
            assert!(!obj.profiled);
            let slot = usize::from(obj.header.age()).min(self.slots.len() - 1);
            self.slots[slot] += 1;
        }
    }
}

pub fn slot_totals(table: &LifetimeTable) -> Vec<u64> {
    let mut totals = vec![0; table.n()];
    for (_, e) in table.entries() {
        for (t, c) in totals.iter_mut().zip(&e.counts) {
            *t += c;
        }
    }
    totals
}

/// Target generations the shared site's long and short contexts end with.
pub fn shared_site_targets(expand_ctx: f64) -> (u8, u8, usize) {
    let w = generate_synthetic(&SyntheticSpec::mixed(42)).unwrap();
    let config = SimConfig {
        policy: PolicyConfig {
            expand_ctx,
            ..PolicyConfig::default()
        },
        ..SimConfig::default()
    };
    let mut oracle = BruteForce::new(&w, &config);
    let outcome = replay_with(&w.trace, Mode::Rolp, &config, &mut oracle).unwrap();
    let table = outcome.table.unwrap();
    let site = w.oracle.shared_site.unwrap();
    let last_context = |handler| {
        let id = w
            .oracle
            .objects
            .iter()
            .rposition(|t| t.site == site && t.handler == handler)
            .unwrap();
        oracle.context_of(id as u64).unwrap()
    };
    let long = last_context(w.oracle.long_handler.unwrap());
    let short = last_context(w.oracle.short_handler.unwrap());
    assert_ne!(long, short, "contexts must differ in their summary");
    let gen = |c| table.target_gen_for(AllocationContext::from_combined(c));
    (gen(long), gen(short), table.expanded_sites().count())
}
