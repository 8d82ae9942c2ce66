//! Seeded synthetic workloads with exact lifetime ground truth.
//!
//! Every workload shares one program shape: `Main.run()` dispatches requests
//! to handlers, each handler reads an allocation-free getter and then calls a
//! factory holding two allocation sites. A request allocates a small batch
//! of objects at one site. Lifetimes are drawn in units of young-generation
//! turnovers and converted to death ticks on the allocation clock.
//!
//! * `generational`: short-lived objects plus a small medium-lived cohort.
//! * `cache`: a subset of sites allocates only long-lived objects.
//! * `mixed`: one shared site is reached through a long-lived and a
//!   short-lived handler path; the remaining traffic is generational.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{MethodId, ProgramModel, SiteRef};
use crate::error::{Result, SimError};
use crate::heap::MIB;
use crate::profiler::{method_hash, site_id};
use crate::workload::trace::{Trace, TraceEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkloadKind {
    Generational,
    Cache,
    Mixed,
}

impl WorkloadKind {
    pub const ALL: [WorkloadKind; 3] = [Self::Generational, Self::Cache, Self::Mixed];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Generational => "generational",
            Self::Cache => "cache",
            Self::Mixed => "mixed",
        }
    }
}

impl fmt::Display for WorkloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for WorkloadKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| SimError::InvalidSpec(format!("unknown workload kind {s:?}")))
    }
}

/// Lifetime bounds in young-generation turnovers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeRange {
    pub min: f64,
    pub max: f64,
}

impl LifetimeRange {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LifetimeClass {
    Short,
    Medium,
    Long,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: WorkloadKind,
    pub seed: u64,
    /// Number of allocation events; calls, returns and locks come on top.
    pub event_count: u64,
    /// Fraction of objects that are long-lived.
    pub long_lived_fraction: f64,
    /// Fraction of sites that allocate the long-lived objects (cache only).
    pub long_lived_site_fraction: f64,
    /// Fraction of objects that are medium-lived.
    pub medium_fraction: f64,
    /// Share of the shared site's allocations made on the long-lived path
    /// (mixed only).
    pub shared_long_share: f64,
    pub short_mean_size: u64,
    pub long_mean_size: u64,
    pub short_lifetime: LifetimeRange,
    pub medium_lifetime: LifetimeRange,
    pub long_lifetime: LifetimeRange,
    pub sites: u32,
    pub threads: u32,
    pub allocs_per_request: u32,
    /// Probability that a freshly allocated object is biased-locked.
    pub lock_fraction: f64,
    /// Bytes of allocation one young-generation turnover stands for.
    pub young_turnover: u64,
}

impl SyntheticSpec {
    pub fn generational(seed: u64) -> Self {
        Self {
            kind: WorkloadKind::Generational,
            seed,
            event_count: 400_000,
            long_lived_fraction: 0.0,
            long_lived_site_fraction: 0.0,
            medium_fraction: 0.02,
            shared_long_share: 0.5,
            short_mean_size: 4096,
            long_mean_size: 4096,
            short_lifetime: LifetimeRange::new(0.0, 0.02),
            medium_lifetime: LifetimeRange::new(0.3, 1.5),
            long_lifetime: LifetimeRange::new(2.0, 4.0),
            sites: 40,
            threads: 4,
            allocs_per_request: 8,
            lock_fraction: 0.001,
            young_turnover: 32 * MIB,
        }
    }

    pub fn cache(seed: u64) -> Self {
        Self {
            kind: WorkloadKind::Cache,
            event_count: 2_000_000,
            long_lived_fraction: 0.3,
            long_lived_site_fraction: 0.1,
            long_mean_size: 2048,
            long_lifetime: LifetimeRange::new(1.5, 2.5),
            ..Self::generational(seed)
        }
    }

    pub fn mixed(seed: u64) -> Self {
        Self {
            kind: WorkloadKind::Mixed,
            event_count: 300_000,
            long_lived_fraction: 0.15,
            long_lifetime: LifetimeRange::new(1.5, 2.5),
            ..Self::generational(seed)
        }
    }

    pub fn for_kind(kind: WorkloadKind, seed: u64) -> Self {
        match kind {
            WorkloadKind::Generational => Self::generational(seed),
            WorkloadKind::Cache => Self::cache(seed),
            WorkloadKind::Mixed => Self::mixed(seed),
        }
    }

    /// Number of sites reserved for long-lived objects (cache only).
    pub fn long_lived_sites(&self) -> u32 {
        (f64::from(self.sites) * self.long_lived_site_fraction).round() as u32
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SimError::InvalidSpec(msg));
        for (name, v) in [
            ("long_lived_fraction", self.long_lived_fraction),
            ("long_lived_site_fraction", self.long_lived_site_fraction),
            ("medium_fraction", self.medium_fraction),
            ("shared_long_share", self.shared_long_share),
            ("lock_fraction", self.lock_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        if self.long_lived_fraction + self.medium_fraction > 1.0 {
            return bad("long_lived_fraction + medium_fraction exceeds 1".into());
        }
        for (name, r) in [
            ("short", self.short_lifetime),
            ("medium", self.medium_lifetime),
            ("long", self.long_lifetime),
        ] {
            if !(r.min >= 0.0 && r.min <= r.max && r.max.is_finite()) {
                return bad(format!(
                    "{name} lifetime range [{}, {}] is invalid",
                    r.min, r.max
                ));
            }
        }
        if self.short_mean_size < 2 || self.long_mean_size < 2 {
            return bad("mean sizes must be >= 2 bytes".into());
        }
        if self.sites < 2 || self.threads == 0 || self.allocs_per_request == 0 {
            return bad("need >= 2 sites, >= 1 thread and >= 1 allocation per request".into());
        }
        if self.young_turnover == 0 {
            return bad("young_turnover must be > 0".into());
        }
        match self.kind {
            WorkloadKind::Generational => {
                if self.long_lived_fraction > 0.0 {
                    return bad("a generational workload has no long-lived objects".into());
                }
            }
            WorkloadKind::Cache => {
                let ll_sites = self.long_lived_sites();
                if self.long_lived_fraction > 0.0 && ll_sites == 0 {
                    return bad(format!(
                        "long_lived_fraction {} needs long-lived sites, but site fraction {} of {} sites rounds to none",
                        self.long_lived_fraction, self.long_lived_site_fraction, self.sites
                    ));
                }
                if self.long_lived_fraction < 1.0 && ll_sites >= self.sites {
                    return bad("every site is long-lived but some objects are not".into());
                }
            }
            WorkloadKind::Mixed => {
                if self.shared_long_share <= 0.0 || self.shared_long_share >= 1.0 {
                    return bad("shared_long_share must be strictly between 0 and 1".into());
                }
                let shared = self.long_lived_fraction / self.shared_long_share;
                if self.long_lived_fraction <= 0.0 || shared + self.medium_fraction > 1.0 {
                    return bad(format!(
                        "long_lived_fraction {} with shared_long_share {} leaves no room for the short path",
                        self.long_lived_fraction, self.shared_long_share
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Ground truth for one allocated object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectTruth {
    pub site: SiteRef,
    /// Handler method the allocating request went through.
    pub handler: MethodId,
    pub class: LifetimeClass,
    /// Allocation-clock bytes between allocation and death.
    pub lifetime: u64,
}

/// Lifetime histogram bucket upper bounds, in young turnovers.
pub const LIFETIME_BUCKETS: [f64; 4] = [0.25, 1.0, 4.0, 16.0];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LifetimeOracle {
    pub young_turnover: u64,
    /// Indexed by object ordinal.
    pub objects: Vec<ObjectTruth>,
    pub shared_site: Option<SiteRef>,
    pub long_handler: Option<MethodId>,
    pub short_handler: Option<MethodId>,
}

impl LifetimeOracle {
    fn bucket(&self, lifetime: u64) -> usize {
        let t = lifetime as f64 / self.young_turnover as f64;
        LIFETIME_BUCKETS
            .iter()
            .position(|&b| t < b)
            .unwrap_or(LIFETIME_BUCKETS.len())
    }

    /// Object counts per lifetime bucket over the objects `filter` accepts.
    pub fn histogram(&self, filter: impl Fn(&ObjectTruth) -> bool) -> Vec<u64> {
        let mut h = vec![0; LIFETIME_BUCKETS.len() + 1];
        for o in self.objects.iter().filter(|o| filter(o)) {
            h[self.bucket(o.lifetime)] += 1;
        }
        h
    }

    pub fn site_histogram(&self, site: SiteRef) -> Vec<u64> {
        self.histogram(|o| o.site == site)
    }

    pub fn context_histogram(&self, site: SiteRef, handler: MethodId) -> Vec<u64> {
        self.histogram(|o| o.site == site && o.handler == handler)
    }

    pub fn class_counts(&self) -> BTreeMap<LifetimeClass, u64> {
        let mut m = BTreeMap::new();
        for o in &self.objects {
            *m.entry(o.class).or_insert(0) += 1;
        }
        m
    }

    /// Objects whose lifetime ends before the young generation could first
    /// fill after their allocation.
    pub fn die_before_first_collection(&self) -> u64 {
        self.objects
            .iter()
            .filter(|o| o.lifetime < self.young_turnover)
            .count() as u64
    }
}

/// Number of maximal runs of non-empty buckets.
pub fn histogram_modes(h: &[u64]) -> usize {
    let mut modes = 0;
    let mut prev = false;
    for &c in h {
        let on = c > 0;
        if on && !prev {
            modes += 1;
        }
        prev = on;
    }
    modes
}

#[derive(Debug, Clone)]
pub struct SyntheticWorkload {
    pub spec: SyntheticSpec,
    pub trace: Trace,
    pub oracle: LifetimeOracle,
}

/// Which site a request allocates at and how its objects' lifetimes are drawn.
#[derive(Debug, Clone, Copy)]
struct SiteRole {
    site: SiteRef,
    factory: MethodId,
    handler: MethodId,
    long_lived: bool,
}

struct Layout {
    program: ProgramModel,
    main: MethodId,
    getter: MethodId,
    roles: Vec<SiteRole>,
    shared: Option<(SiteRef, MethodId, MethodId, MethodId)>,
}

const MAIN: MethodId = 1;
const GETTER: MethodId = 2;
const SHARED_STORE: MethodId = 3;
const LONG_PATH: MethodId = 4;
const SHORT_PATH: MethodId = 5;
const FIRST_HANDLER: MethodId = 10;
const FIRST_FACTORY: MethodId = 1000;
const FIRST_SITE: SiteRef = 1;
const SHARED_SITE: SiteRef = 100_000;

/// Picks signatures (and site lines) whose 16-bit hashes do not collide
/// with anything already chosen.
#[derive(Default)]
struct Namer {
    method_hashes: HashSet<u16>,
    site_ids: HashSet<u16>,
}

impl Namer {
    fn method(&mut self, base: &str, params: &str) -> String {
        for salt in 0.. {
            let sig = if salt == 0 {
                format!("{base}({params})")
            } else {
                format!("{base}${salt}({params})")
            };
            if self.method_hashes.insert(method_hash(&sig)) {
                return sig;
            }
        }
        unreachable!()
    }

    fn line(&mut self, signature: &str, mut line: u32) -> u32 {
        while !self.site_ids.insert(site_id(signature, line)) {
            line += 1;
        }
        line
    }
}

fn build_layout(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<Layout> {
    let mut p = ProgramModel::new();
    let mut namer = Namer::default();
    let kind = spec.kind.as_str();
    let server = format!("app.{kind}.server");
    let model = format!("app.{kind}.model");

    p.add_method(
        MAIN,
        &server,
        &namer.method(&format!("{kind}.Main.run"), "java.lang.String[] args"),
    )?;
    p.add_method(
        GETTER,
        "lib.util",
        &namer.method("lib.util.Config.get", "java.lang.String key"),
    )?;

    let factories = spec.sites.div_ceil(2);
    let handlers = factories.div_ceil(4).max(1);
    for h in 0..handlers {
        let sig = namer.method(&format!("{kind}.RequestHandler{h}.handle"), "Request req");
        p.add_method(FIRST_HANDLER + h, &server, &sig)?;
        p.add_call(MAIN, FIRST_HANDLER + h)?;
        p.add_call(FIRST_HANDLER + h, GETTER)?;
    }
    for f in 0..factories {
        let sig = namer.method(&format!("{kind}.Factory{f}.create"), "int n");
        p.add_method(FIRST_FACTORY + f, &model, &sig)?;
        p.add_call(FIRST_HANDLER + f % handlers, FIRST_FACTORY + f)?;
    }

    let mut roles = Vec::new();
    for s in 0..spec.sites {
        let factory = FIRST_FACTORY + s / 2;
        let sig = p.method(factory).expect("declared").signature.clone();
        let line = namer.line(&sig, 10 + 10 * (s % 2));
        let site = FIRST_SITE + s;
        p.add_site(site, factory, line)?;
        roles.push(SiteRole {
            site,
            factory,
            handler: FIRST_HANDLER + (s / 2) % handlers,
            long_lived: false,
        });
    }
    if spec.kind == WorkloadKind::Cache {
        let mut order: Vec<usize> = (0..roles.len()).collect();
        order.shuffle(rng);
        for &i in order.iter().take(spec.long_lived_sites() as usize) {
            roles[i].long_lived = true;
        }
    }

    let mut shared = None;
    if spec.kind == WorkloadKind::Mixed {
        let store = namer.method(&format!("{kind}.SharedStore.put"), "java.lang.Object value");
        p.add_method(SHARED_STORE, &model, &store)?;
        let long = namer.method(&format!("{kind}.SessionHandler.handle"), "Request req");
        p.add_method(LONG_PATH, &server, &long)?;
        let short = namer.method(&format!("{kind}.QueryHandler.handle"), "Request req");
        p.add_method(SHORT_PATH, &server, &short)?;
        for path in [LONG_PATH, SHORT_PATH] {
            p.add_call(MAIN, path)?;
            p.add_call(path, GETTER)?;
            p.add_call(path, SHARED_STORE)?;
        }
        let line = namer.line(&store, 42);
        p.add_site(SHARED_SITE, SHARED_STORE, line)?;
        shared = Some((SHARED_SITE, SHARED_STORE, LONG_PATH, SHORT_PATH));
    }

    Ok(Layout {
        program: p,
        main: MAIN,
        getter: GETTER,
        roles,
        shared,
    })
}

fn draw_size(rng: &mut ChaCha8Rng, mean: u64) -> u64 {
    rng.gen_range(mean / 2..=mean + mean / 2).max(1)
}

fn draw_lifetime(rng: &mut ChaCha8Rng, range: LifetimeRange, turnover: u64) -> u64 {
    let t = if range.max > range.min {
        rng.gen_range(range.min..range.max)
    } else {
        range.min
    };
    (t * turnover as f64) as u64
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticWorkload> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let layout = build_layout(spec, &mut rng)?;

    let short_roles: Vec<SiteRole> = layout
        .roles
        .iter()
        .copied()
        .filter(|r| !r.long_lived)
        .collect();
    let long_roles: Vec<SiteRole> = layout
        .roles
        .iter()
        .copied()
        .filter(|r| r.long_lived)
        .collect();
    // Probability that an object on a short-lived request is medium-lived.
    let short_traffic = match spec.kind {
        WorkloadKind::Generational => 1.0,
        WorkloadKind::Cache => 1.0 - spec.long_lived_fraction,
        WorkloadKind::Mixed => 1.0 - spec.long_lived_fraction / spec.shared_long_share,
    };
    let medium_p = if short_traffic > 0.0 {
        (spec.medium_fraction / short_traffic).min(1.0)
    } else {
        0.0
    };

    let mut events = Vec::new();
    let mut oracle = LifetimeOracle {
        young_turnover: spec.young_turnover,
        objects: Vec::with_capacity(spec.event_count as usize),
        shared_site: layout.shared.map(|s| s.0),
        long_handler: layout.shared.map(|s| s.2),
        short_handler: layout.shared.map(|s| s.3),
    };
    let mut started = vec![false; spec.threads as usize];
    let mut clock = 0u64;
    let mut allocated = 0u64;
    let mut request = 0u64;

    while allocated < spec.event_count {
        let thread = (request % u64::from(spec.threads)) as u32;
        request += 1;
        if !started[thread as usize] {
            started[thread as usize] = true;
            events.push(TraceEvent::Call {
                thread,
                method: layout.main,
            });
        }

        // (handler, factory, site, class chooser)
        let (handler, factory, site, fixed_class) = match spec.kind {
            WorkloadKind::Cache
                if !long_roles.is_empty() && rng.gen_bool(spec.long_lived_fraction) =>
            {
                let r = long_roles.choose(&mut rng).expect("non-empty");
                (r.handler, r.factory, r.site, Some(LifetimeClass::Long))
            }
            WorkloadKind::Mixed
                if rng.gen_bool(spec.long_lived_fraction / spec.shared_long_share) =>
            {
                let (site, store, long, short) = layout.shared.expect("mixed layout");
                if rng.gen_bool(spec.shared_long_share) {
                    (long, store, site, Some(LifetimeClass::Long))
                } else {
                    (short, store, site, Some(LifetimeClass::Short))
                }
            }
            _ => {
                let r = short_roles.choose(&mut rng).expect("short sites exist");
                (r.handler, r.factory, r.site, None)
            }
        };

        events.push(TraceEvent::Call {
            thread,
            method: handler,
        });
        events.push(TraceEvent::Call {
            thread,
            method: layout.getter,
        });
        events.push(TraceEvent::Return {
            thread,
            method: layout.getter,
        });
        events.push(TraceEvent::Call {
            thread,
            method: factory,
        });
        let batch = u64::from(spec.allocs_per_request).min(spec.event_count - allocated);
        for _ in 0..batch {
            let class = fixed_class.unwrap_or_else(|| {
                if medium_p > 0.0 && rng.gen_bool(medium_p) {
                    LifetimeClass::Medium
                } else {
                    LifetimeClass::Short
                }
            });
            let (mean, range) = match class {
                LifetimeClass::Short => (spec.short_mean_size, spec.short_lifetime),
                LifetimeClass::Medium => (spec.short_mean_size, spec.medium_lifetime),
                LifetimeClass::Long => (spec.long_mean_size, spec.long_lifetime),
            };
            let size = draw_size(&mut rng, mean);
            let lifetime = draw_lifetime(&mut rng, range, spec.young_turnover);
            clock += size;
            events.push(TraceEvent::Alloc {
                thread,
                site,
                size,
                death_tick: clock + lifetime,
            });
            if lifetime > 0 && spec.lock_fraction > 0.0 && rng.gen_bool(spec.lock_fraction) {
                events.push(TraceEvent::Lock {
                    thread,
                    object: allocated,
                });
            }
            oracle.objects.push(ObjectTruth {
                site,
                handler,
                class,
                lifetime,
            });
            allocated += 1;
        }
        events.push(TraceEvent::Return {
            thread,
            method: factory,
        });
        events.push(TraceEvent::Return {
            thread,
            method: handler,
        });
    }
    for (thread, &s) in started.iter().enumerate() {
        if s {
            events.push(TraceEvent::Return {
                thread: thread as u32,
                method: layout.main,
            });
        }
    }

    Ok(SyntheticWorkload {
        spec: spec.clone(),
        trace: Trace {
            program: layout.program,
            events,
        },
        oracle,
    })
}
