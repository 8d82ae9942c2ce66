//! Trace replay against the simulated heap.
//!
//! Three modes share the same collector:
//!
//! * `baseline`: no profiling, every object starts in the young generation,
//!   and the older generations are fused into one old generation.
//! * `rolp`: the full profiling pipeline drives per-context pretenuring.
//! * `oracle`: every object is pretenured by its true lifetime class.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{hot_gate, select_instrumented, InstrumentationPlan, MethodId, SiteRef};
use crate::config::SimConfig;
use crate::error::{Result, SimError};
use crate::gc::{install_promoted, pending_bytes, Ergonomics, GcEngine, PauseRecord};
use crate::heap::{AllocOutcome, Heap, HeapObject};
use crate::policy::{should_run, update_target_generations, PolicyReport};
use crate::profiler::{
    method_hash, site_id, AllocationContext, CollisionTracker, LifetimeTable, ThreadContextState,
    WorkerTable,
};
use crate::report::{RunMetrics, RunTotals, Timing};
use crate::workload::trace::{Trace, TraceEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Rolp,
    Oracle,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Baseline, Mode::Rolp, Mode::Oracle];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Rolp => "rolp",
            Mode::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| SimError::InvalidConfig(format!("unknown mode {s:?}")))
    }
}

/// Lifetime classes grow by this factor, starting at one young capacity.
pub const ORACLE_CLASS_FACTOR: u64 = 8;

/// Generation an object with the given lifetime belongs to: 0 below one
/// young capacity, then one generation per factor-8 lifetime class.
pub fn oracle_generation(lifetime: u64, young_capacity: u64, max_gen: usize) -> usize {
    if lifetime < young_capacity {
        return 0;
    }
    let mut gen = 1;
    let mut bound = young_capacity.saturating_mul(ORACLE_CLASS_FACTOR);
    while lifetime >= bound && gen < max_gen {
        gen += 1;
        bound = bound.saturating_mul(ORACLE_CLASS_FACTOR);
    }
    gen.min(max_gen)
}

/// Hooks into a replay, used by tests that check the engine against an
/// independent model. All methods default to no-ops.
pub trait ReplayObserver {
    /// Called before the event at `index` is applied.
    fn on_event(&mut self, _index: usize, _event: &TraceEvent) {}
    /// Called for every surviving object, after it has been aged.
    fn on_survivor(&mut self, _object: &HeapObject) {}
    /// Called once a collection's pause is accounted and, in rolp mode,
    /// the worker tables have been merged.
    fn on_collection(&mut self, _record: &PauseRecord, _heap: &Heap) {}
    fn before_policy(&mut self, _table: &LifetimeTable) {}
    fn after_policy(&mut self, _table: &LifetimeTable, _report: &PolicyReport) {}
}

impl ReplayObserver for () {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRun {
    pub after_collection: u64,
    pub report: PolicyReport,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub metrics: RunMetrics,
    pub pauses: Vec<PauseRecord>,
    pub policy_runs: Vec<PolicyRun>,
    pub table: Option<LifetimeTable>,
    pub plan: Option<InstrumentationPlan>,
}

#[derive(Debug, Clone, Copy)]
struct Frame {
    method: MethodId,
    hash: u16,
    profiled: bool,
}

#[derive(Debug, Clone)]
struct ThreadState {
    ctx: ThreadContextState,
    frames: Vec<Frame>,
}

struct Profiler {
    plan: InstrumentationPlan,
    table: LifetimeTable,
    workers: Vec<WorkerTable>,
    next_worker: usize,
    invocations: HashMap<MethodId, u64>,
    site_ids: HashMap<SiteRef, u16>,
    collisions: CollisionTracker,
    analysis_seconds: f64,
}

impl Profiler {
    fn new(trace: &Trace, config: &SimConfig) -> Result<Self> {
        let start = Instant::now();
        let plan = select_instrumented(&trace.program, config.max_alloc_frame, &config.packages)
            .with_hot_threshold(config.hot_threshold);
        let analysis_seconds = start.elapsed().as_secs_f64();
        let site_ids = trace
            .program
            .sites()
            .map(|s| {
                let sig = &trace.program.method(s.method).expect("validated").signature;
                (s.source, site_id(sig, s.line))
            })
            .collect();
        Ok(Self {
            plan,
            table: LifetimeTable::new(config.lifetime_slots)?,
            workers: (0..config.workers)
                .map(|_| WorkerTable::new(config.lifetime_slots))
                .collect::<Result<_>>()?,
            next_worker: 0,
            invocations: HashMap::new(),
            site_ids,
            collisions: CollisionTracker::new(),
            analysis_seconds,
        })
    }

    fn record_survivor(&mut self, obj: &HeapObject) {
        if !obj.profiled {
            return;
        }
        let ctx = AllocationContext::from_combined(obj.header.alloc_context());
        let key = self.table.key_for(ctx);
        let w = self.next_worker % self.workers.len();
        self.next_worker = self.next_worker.wrapping_add(1);
        self.workers[w].record_survivor(key, u32::from(obj.header.age()));
    }
}

struct Simulator<'a, O: ReplayObserver> {
    mode: Mode,
    config: &'a SimConfig,
    trace: &'a Trace,
    heap: Heap,
    gc: GcEngine,
    profiler: Option<Profiler>,
    method_hashes: HashMap<MethodId, u16>,
    threads: HashMap<u32, ThreadState>,
    pauses: Vec<PauseRecord>,
    policy_runs: Vec<PolicyRun>,
    observer: &'a mut O,
}

impl<O: ReplayObserver> Simulator<'_, O> {
    fn thread(&mut self, thread: u32) -> &mut ThreadState {
        self.threads.entry(thread).or_insert_with(|| ThreadState {
            ctx: ThreadContextState::new(thread),
            frames: Vec::new(),
        })
    }

    fn call(&mut self, thread: u32, method: MethodId) -> Result<()> {
        let hash = *self
            .method_hashes
            .get(&method)
            .ok_or(SimError::Undeclared {
                what: "method",
                id: method,
            })?;
        let profiled = match &mut self.profiler {
            Some(p) if p.plan.profiled_methods.contains(&method) => {
                let count = p.invocations.entry(method).or_insert(0);
                *count += 1;
                hot_gate(*count, p.plan.hot_threshold)
            }
            _ => false,
        };
        let state = self.thread(thread);
        if profiled {
            state.ctx.enter_method(hash);
        }
        state.frames.push(Frame {
            method,
            hash,
            profiled,
        });
        Ok(())
    }

    fn ret(&mut self, index: usize, thread: u32, method: MethodId) -> Result<()> {
        let state = self.thread(thread);
        match state.frames.last() {
            Some(f) if f.method == method => {
                let f = state.frames.pop().expect("checked");
                if f.profiled {
                    state.ctx.exit_method(f.hash);
                }
                Ok(())
            }
            _ => Err(SimError::UnbalancedReturn {
                line: index + 1,
                thread,
                method,
            }),
        }
    }

    fn target_generation(
        &self,
        ctx: Option<AllocationContext>,
        size: u64,
        death_tick: u64,
    ) -> usize {
        match self.mode {
            Mode::Baseline => 0,
            Mode::Rolp => ctx.map_or(0, |c| {
                let p = self.profiler.as_ref().expect("rolp profiles");
                usize::from(p.table.target_gen_for(c)).min(self.heap.max_gen())
            }),
            Mode::Oracle => {
                let lifetime = death_tick.saturating_sub(self.heap.clock() + size);
                oracle_generation(
                    lifetime,
                    self.heap.config().young_capacity,
                    self.heap.max_gen(),
                )
            }
        }
    }

    fn alloc(&mut self, thread: u32, site: SiteRef, size: u64, death_tick: u64) -> Result<()> {
        if self.trace.program.site(site).is_none() {
            return Err(SimError::Undeclared {
                what: "site",
                id: site,
            });
        }
        let sid = match &self.profiler {
            Some(p) if p.plan.profiled_sites.contains(&site) => Some(p.site_ids[&site]),
            _ => None,
        };
        let ctx = sid.map(|sid| self.thread(thread).ctx.current_context(sid));

        let mut last_collected = None;
        loop {
            let gen = self.target_generation(ctx, size, death_tick);
            match self
                .heap
                .allocate(gen, size, death_tick, ctx.map(|c| c.combined()))?
            {
                AllocOutcome::Allocated(_) => break,
                AllocOutcome::CollectionNeeded(g) => {
                    if last_collected == Some(g) {
                        return Err(SimError::HeapExhausted {
                            generation: g,
                            needed: size,
                            free: self.heap.generation(g).free(),
                        });
                    }
                    self.collect(g)?;
                    last_collected = Some(g);
                }
            }
        }

        if let Some(c) = ctx {
            let frames: Vec<MethodId> = self.threads[&thread]
                .frames
                .iter()
                .filter(|f| f.profiled)
                .map(|f| f.method)
                .collect();
            let p = self.profiler.as_mut().expect("context implies profiling");
            p.table.record_allocation(c);
            p.collisions.record(c.site_id, c.summary, &frames);
        }
        Ok(())
    }

    fn collect(&mut self, gen: usize) -> Result<()> {
        if gen == 0 {
            let young = {
                let Self {
                    heap,
                    gc,
                    profiler,
                    observer,
                    ..
                } = self;
                gc.collect_young(heap, |obj| {
                    observer.on_survivor(obj);
                    if let Some(p) = profiler.as_mut() {
                        p.record_survivor(obj);
                    }
                })
            };
            self.finish_collection(young.record);
            let needed = pending_bytes(&self.heap, &young.pending_promotion);
            if needed > self.heap.generation(1).free() {
                self.collect_old(1);
            }
            install_promoted(&mut self.heap, &young.pending_promotion)
        } else {
            self.collect_old(gen);
            Ok(())
        }
    }

    fn collect_old(&mut self, gen: usize) {
        let record = {
            let Self {
                heap,
                gc,
                profiler,
                observer,
                ..
            } = self;
            gc.collect_generation(heap, gen, |obj| {
                observer.on_survivor(obj);
                if let Some(p) = profiler.as_mut() {
                    p.record_survivor(obj);
                }
            })
        };
        self.finish_collection(record);
    }

    /// Runs after the pause is accounted: merges worker tables and, on
    /// cadence, updates target generations. None of this adds pause time.
    fn finish_collection(&mut self, record: PauseRecord) {
        if let Some(p) = self.profiler.as_mut() {
            p.table.merge_workers(&mut p.workers);
        }
        self.observer.on_collection(&record, &self.heap);
        if let Some(p) = self.profiler.as_mut() {
            if should_run(record.index, self.config.policy.inc_gen_freq) {
                self.observer.before_policy(&p.table);
                let report = update_target_generations(
                    &mut p.table,
                    self.gc.ergonomics().threshold(),
                    &self.config.policy,
                    self.config.heap.num_generations.min(usize::from(u8::MAX)) as u8,
                );
                self.observer.after_policy(&p.table, &report);
                self.policy_runs.push(PolicyRun {
                    after_collection: record.index,
                    report,
                });
            }
        }
        self.pauses.push(record);
    }
}

pub fn replay(trace: &Trace, mode: Mode, config: &SimConfig) -> Result<RunOutcome> {
    replay_with(trace, mode, config, &mut ())
}

pub fn replay_with<O: ReplayObserver>(
    trace: &Trace,
    mode: Mode,
    config: &SimConfig,
    observer: &mut O,
) -> Result<RunOutcome> {
    config.validate()?;
    trace.program.validate()?;
    let start = Instant::now();
    let heap = match mode {
        Mode::Baseline => Heap::two_generation(config.heap.clone())?,
        Mode::Rolp | Mode::Oracle => Heap::new(config.heap.clone())?,
    };
    let profiler = match mode {
        Mode::Rolp => Some(Profiler::new(trace, config)?),
        Mode::Baseline | Mode::Oracle => None,
    };
    let mut sim = Simulator {
        mode,
        config,
        trace,
        heap,
        gc: GcEngine::new(Ergonomics::new(
            config.heap.max_tenuring_threshold,
            config.target_survivor_fraction,
        )),
        profiler,
        method_hashes: trace
            .program
            .methods()
            .map(|m| (m.id, method_hash(&m.signature)))
            .collect(),
        threads: HashMap::new(),
        pauses: Vec::new(),
        policy_runs: Vec::new(),
        observer,
    };

    let mut allocations = 0u64;
    let mut allocated_bytes = 0u64;
    for (index, event) in trace.events.iter().enumerate() {
        sim.observer.on_event(index, event);
        match *event {
            TraceEvent::Call { thread, method } => sim.call(thread, method)?,
            TraceEvent::Return { thread, method } => sim.ret(index, thread, method)?,
            TraceEvent::Alloc {
                thread,
                site,
                size,
                death_tick,
            } => {
                sim.alloc(thread, site, size, death_tick)?;
                allocations += 1;
                allocated_bytes += size;
            }
            TraceEvent::Lock { thread, object } => sim.heap.bias_lock(object, thread)?,
        }
    }
    let wall = start.elapsed().as_secs_f64();

    let totals = RunTotals {
        events: trace.events.len() as u64,
        allocations,
        allocated_bytes,
        peak_heap_occupancy: sim.heap.peak_occupancy(),
    };
    let timing = Timing {
        wall_seconds: wall,
        events_per_second: if wall > 0.0 {
            trace.events.len() as f64 / wall
        } else {
            0.0
        },
        static_analysis_seconds: sim.profiler.as_ref().map_or(0.0, |p| p.analysis_seconds),
    };
    let profiling = sim.profiler.as_ref().map(|p| {
        crate::report::ProfilingSummary::new(
            &p.plan,
            &trace.program,
            &p.table,
            config.heap.num_generations,
            p.collisions.report(),
            sim.policy_runs.len() as u64,
        )
    });
    let metrics = RunMetrics::build(
        mode,
        trace.fingerprint(),
        config.clone(),
        totals,
        &sim.pauses,
        profiling,
        timing,
    );
    let (table, plan) = match sim.profiler {
        Some(p) => (Some(p.table), Some(p.plan)),
        None => (None, None),
    };
    Ok(RunOutcome {
        metrics,
        pauses: sim.pauses,
        policy_runs: sim.policy_runs,
        table,
        plan,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heap::MIB;

    #[test]
    fn oracle_classes() {
        let y = 32 * MIB;
        assert_eq!(oracle_generation(0, y, 4), 0);
        assert_eq!(oracle_generation(y - 1, y, 4), 0);
        assert_eq!(oracle_generation(y, y, 4), 1);
        assert_eq!(oracle_generation(8 * y - 1, y, 4), 1);
        assert_eq!(oracle_generation(8 * y, y, 4), 2);
        assert_eq!(oracle_generation(64 * y, y, 4), 3);
        assert_eq!(oracle_generation(u64::MAX, y, 4), 4);
        assert_eq!(oracle_generation(u64::MAX, y, 1), 1);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("g1".parse::<Mode>().is_err());
    }
}
